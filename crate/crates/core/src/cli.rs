//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags, configs or
//! input files), 2 on runtime failures.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::adaptive::{adaptive_test, bootstrap_upper_bound, BootstrapConfig, InnerTest};
use crate::config::ConfigFile;
use crate::error::{Error, Result};
use crate::harness::{
    run_agreement_experiment, run_calibration_experiment, run_power_experiment, BootstrapSettings,
};
use crate::location::{naive_test, weighted_test, TestKind, TestResult};
use crate::model::{generate_dataset, Dataset};
use crate::statdist::RngStream;
use crate::working_mle::{loglik_profile, wtd_plus_test, EmConfig};

const DATA_STREAM: u64 = 0;
const BOOTSTRAP_STREAM: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "noisy-proxy", version, about = "Location tests with noisy proxies for a latent binary variable")]
struct Cli {
    /// Root seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (standard output when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the experiment drivers.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset and write it as CSV.
    Generate(GenerateArgs),
    /// Run location tests on a dataset CSV.
    Test(TestArgs),
    /// Estimate psi and its bootstrap upper bound from a dataset with a positive control.
    Psi(PsiArgs),
    /// Evaluate the working log-likelihood on a grid of mu values.
    LoglikProfile(ProfileArgs),
    /// Rejection rates over a grid of effect sizes.
    SimulatePower(ExperimentArgs),
    /// Rejection rates under the null.
    SimulateCalibration(ExperimentArgs),
    /// Agreement between the wtd and wtd+ decisions.
    SimulateAgreement(ExperimentArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Mean shift of the outcome when the latent variable is one.
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// Probability that the latent variable is one.
    #[arg(long)]
    phi: Option<f64>,
    /// Sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Proxy regime: hvar, unif, pos1, pos2, neg1 or neg2.
    #[arg(long)]
    proxy: Option<String>,
    /// Override of the regime's first Beta offset.
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    /// Override of the regime's second Beta offset.
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    /// Also simulate a positive control with this mean.
    #[arg(long, allow_negative_numbers = true)]
    mu_prime: Option<f64>,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    /// Bootstrap resamples.
    #[arg(long)]
    resamples: Option<usize>,
    /// Level of the bootstrap upper bound on psi.
    #[arg(long)]
    alpha_prime: Option<f64>,
    /// basic or percentile.
    #[arg(long)]
    bootstrap_method: Option<String>,
}

#[derive(Debug, Args)]
struct EmArgs {
    /// EM convergence tolerance.
    #[arg(long)]
    em_tol: Option<f64>,
    /// EM iteration cap.
    #[arg(long)]
    em_max_iter: Option<usize>,
    /// EM estimates are clamped to [-bound, bound].
    #[arg(long)]
    search_bound: Option<f64>,
}

#[derive(Debug, Args)]
struct TestArgs {
    /// Dataset CSV.
    #[arg(long)]
    input: PathBuf,
    /// Test level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated subset of naive, wtd, wtd+, a_wtd, a_wtd+.
    #[arg(long, value_delimiter = ',')]
    tests: Option<Vec<String>>,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Debug, Args)]
struct PsiArgs {
    /// Dataset CSV with a positive control.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    /// Dataset CSV.
    #[arg(long)]
    input: PathBuf,
    /// Lower end of the grid (default: minus the search bound).
    #[arg(long, allow_negative_numbers = true)]
    lo: Option<f64>,
    /// Upper end of the grid (default: the search bound).
    #[arg(long, allow_negative_numbers = true)]
    hi: Option<f64>,
    /// Number of grid points.
    #[arg(long, default_value_t = 2001)]
    points: usize,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Comma-separated regime labels.
    #[arg(long, value_delimiter = ',')]
    proxies: Option<Vec<String>>,
    /// Latent probabilities.
    #[arg(long, value_delimiter = ',')]
    phi: Option<Vec<f64>>,
    /// Sample sizes.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Effect sizes.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "h")]
    mu: Option<Vec<f64>>,
    /// Local alternatives, mu = h / sqrt(n).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    h: Option<Vec<f64>>,
    /// Fixed positive-control mean.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "delta_prime")]
    mu_prime: Option<f64>,
    /// Positive-control mean delta / (phi sqrt(n)).
    #[arg(long, allow_negative_numbers = true)]
    delta_prime: Option<f64>,
    /// Test level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Monte Carlo repetitions per cell.
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated subset of naive, wtd, wtd+, a_wtd, a_wtd+.
    #[arg(long, value_delimiter = ',')]
    tests: Option<Vec<String>>,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
    #[command(flatten)]
    em: EmArgs,
}

fn overlay<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl BootstrapArgs {
    fn apply(self, file: &mut ConfigFile) {
        overlay(&mut file.bootstrap.resamples, self.resamples);
        overlay(&mut file.bootstrap.alpha_prime, self.alpha_prime);
        overlay(&mut file.bootstrap.method, self.bootstrap_method);
    }
}

impl EmArgs {
    fn apply(self, file: &mut ConfigFile) {
        overlay(&mut file.em.tol, self.em_tol);
        overlay(&mut file.em.max_iter, self.em_max_iter);
        overlay(&mut file.em.search_bound, self.search_bound);
    }
}

impl ExperimentArgs {
    fn apply(self, file: &mut ConfigFile) {
        let e = &mut file.experiment;
        if self.mu.is_some() {
            e.h_grid = None;
        }
        if self.h.is_some() {
            e.mu_grid = None;
        }
        if self.mu_prime.is_some() {
            e.delta_prime = None;
        }
        if self.delta_prime.is_some() {
            e.mu_prime = None;
        }
        if self.proxies.is_some() {
            e.custom_proxy = None;
        }
        overlay(&mut e.proxies, self.proxies);
        overlay(&mut e.phi_grid, self.phi);
        overlay(&mut e.n_grid, self.n);
        overlay(&mut e.mu_grid, self.mu);
        overlay(&mut e.h_grid, self.h);
        overlay(&mut e.mu_prime, self.mu_prime);
        overlay(&mut e.delta_prime, self.delta_prime);
        overlay(&mut e.alpha, self.alpha);
        overlay(&mut e.reps, self.reps);
        overlay(&mut e.tests, self.tests);
        self.bootstrap.apply(file);
        self.em.apply(file);
    }
}

fn bootstrap_config(settings: BootstrapSettings, seed: u64) -> BootstrapConfig {
    BootstrapConfig {
        n_resamples: settings.n_resamples,
        alpha_prime: settings.alpha_prime,
        method: settings.method,
        stream: RngStream::with_path(seed, &[BOOTSTRAP_STREAM]),
    }
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read_csv_file(path).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        Error::Io(io) => Error::Parse(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn run_tests(data: &Dataset, alpha: f64, tests: &[TestKind], boot: &BootstrapConfig, em: &EmConfig) -> Result<Vec<TestResult>> {
    tests
        .iter()
        .map(|&kind| {
            let (y, gamma) = (data.y(), data.gamma());
            match kind {
                TestKind::Naive => naive_test(y, alpha),
                TestKind::Weighted => weighted_test(y, gamma, alpha),
                TestKind::WeightedPlus => wtd_plus_test(y, gamma, alpha, em),
                TestKind::AdaptiveWeighted | TestKind::AdaptiveWeightedPlus => {
                    let inner = if kind == TestKind::AdaptiveWeighted {
                        InnerTest::Weighted
                    } else {
                        InnerTest::WeightedPlus
                    };
                    let y_prime = data.y_prime().ok_or_else(|| {
                        Error::Domain(format!("test `{kind}` needs a y_prime column in the dataset"))
                    })?;
                    adaptive_test(y, gamma, Some(y_prime), alpha, boot, em, inner).map(|o| o.result)
                }
            }
        })
        .collect()
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let mut file = match &cli.config {
        Some(path) => ConfigFile::read(path)?,
        None => ConfigFile::default(),
    };
    overlay(&mut file.seed, cli.seed);
    overlay(&mut file.threads, cli.threads);
    let seed = file.seed.unwrap_or(0);

    match cli.command {
        Command::Generate(args) => {
            let m = &mut file.model;
            overlay(&mut m.mu, args.mu);
            overlay(&mut m.phi, args.phi);
            overlay(&mut m.n, args.n);
            overlay(&mut m.proxy, args.proxy);
            overlay(&mut m.a, args.a);
            overlay(&mut m.b, args.b);
            overlay(&mut m.mu_prime, args.mu_prime);
            let (params, n) = file.model_params()?;
            let data = generate_dataset(&params, n, &RngStream::with_path(seed, &[DATA_STREAM]))?;
            data.write_csv(out)
        }
        Command::Test(args) => {
            overlay(&mut file.test.alpha, args.alpha);
            overlay(&mut file.test.tests, args.tests);
            args.bootstrap.apply(&mut file);
            args.em.apply(&mut file);
            let (alpha, tests) = file.test_selection()?;
            let boot = bootstrap_config(file.bootstrap_settings()?, seed);
            let em = file.em_config()?;
            let data = read_dataset(&args.input)?;
            let results = run_tests(&data, alpha, &tests, &boot, &em)?;
            writeln!(out, "{}", TestResult::CSV_HEADER)?;
            for r in results {
                writeln!(out, "{}", r.to_csv_row())?;
            }
            Ok(())
        }
        Command::Psi(args) => {
            args.bootstrap.apply(&mut file);
            let boot = bootstrap_config(file.bootstrap_settings()?, seed);
            let data = read_dataset(&args.input)?;
            let y_prime = data
                .y_prime()
                .ok_or_else(|| Error::Domain("psi needs a y_prime column in the dataset".into()))?;
            let bound = bootstrap_upper_bound(data.gamma(), y_prime, &boot)?;
            writeln!(out, "psi_hat,upper_bound,alpha_prime,method,branch")?;
            writeln!(
                out,
                "{},{},{},{},{}",
                bound.psi.psi_hat,
                bound.value,
                boot.alpha_prime,
                boot.method,
                bound.branch().name()
            )?;
            Ok(())
        }
        Command::LoglikProfile(args) => {
            args.em.apply(&mut file);
            let bound = file.em_config()?.search_bound;
            let data = read_dataset(&args.input)?;
            let lo = args.lo.unwrap_or(-bound);
            let hi = args.hi.unwrap_or(bound);
            let profile = loglik_profile(data.y(), data.gamma(), lo, hi, args.points)?;
            writeln!(out, "mu,loglik")?;
            for (mu, ll) in profile {
                writeln!(out, "{mu},{ll}")?;
            }
            Ok(())
        }
        Command::SimulatePower(args) => {
            args.apply(&mut file);
            let config = file.experiment_config()?;
            let table = with_threads(file.threads, || run_power_experiment(&config))?;
            table.write_csv(out)
        }
        Command::SimulateCalibration(args) => {
            args.apply(&mut file);
            let e = &mut file.experiment;
            // the null fixes mu; an unset grid is fine here
            if e.mu_grid.is_none() && e.h_grid.is_none() {
                e.mu_grid = Some(vec![0.0]);
            }
            let config = file.experiment_config()?;
            let table = with_threads(file.threads, || run_calibration_experiment(&config))?;
            table.write_csv(out)
        }
        Command::SimulateAgreement(args) => {
            args.apply(&mut file);
            let config = file.experiment_config()?;
            let table = with_threads(file.threads, || run_agreement_experiment(&config))?;
            table.write_csv(out)
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => job(),
        Some(0) => Err(Error::Domain("threads: must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Io(io::Error::other(e)))?
            .install(job),
    }
}

fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        1
    } else {
        2
    }
}

/// Run the tool on `argv` (program name first), writing results to `--out` or
/// `stdout` and diagnostics to `stderr`. Returns the process exit code.
pub fn cli_main_with<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let target: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let result = match cli.out.clone() {
        Some(path) => File::create(&path)
            .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
            .and_then(|f| {
                let mut w = BufWriter::new(f);
                execute(cli, &mut w)?;
                w.flush()?;
                Ok(())
            }),
        None => execute(cli, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            let _ = writeln!(stderr, "error: {err}");
            exit_code(&err)
        }
    }
}

pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = io::stdout();
    let mut out = stdout.lock();
    cli_main_with(argv, &mut out, &mut io::stderr())
}
