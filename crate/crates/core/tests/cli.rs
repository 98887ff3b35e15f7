use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use noisy_proxy::config::ConfigFile;
use noisy_proxy::model::{generate_dataset, Dataset, ModelParams, ProxySpec};
use noisy_proxy::statdist::RngStream;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noisy-proxy"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

fn generate(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.path().join(name);
    let mut args = vec!["generate", "--mu", "0", "--phi", "0.3", "--proxy", "pos2", "--n", "100", "--seed", "7"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", path.to_str().unwrap()]);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    path
}

#[test]
fn generate_twice_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let a = std::fs::read(generate(&dir, "a.csv", &[])).unwrap();
    let b = std::fs::read(generate(&dir, "b.csv", &[])).unwrap();
    assert_eq!(a, b);
    let c = run(&["generate", "--mu", "0", "--phi", "0.3", "--proxy", "pos2", "--n", "100", "--seed", "8"]);
    assert_ne!(c.stdout, a);
}

#[test]
fn generated_files_round_trip() {
    let dir = TempDir::new().unwrap();
    let path = generate(&dir, "d.csv", &["--mu-prime", "2"]);
    let parsed = Dataset::read_csv_file(&path).unwrap();
    let params = ModelParams::new(0.0, 0.3, ProxySpec::pos2()).unwrap().with_positive_control(2.0).unwrap();
    let direct = generate_dataset(&params, 100, &RngStream::with_path(7, &[0])).unwrap();
    assert_eq!(parsed, direct);
    let mut again = Vec::new();
    parsed.write_csv(&mut again).unwrap();
    assert_eq!(again, std::fs::read(&path).unwrap());
}

#[test]
fn test_subcommand_reports_each_requested_test() {
    let dir = TempDir::new().unwrap();
    let path = generate(&dir, "d.csv", &[]);
    let out = run(&["test", "--input", path.to_str().unwrap(), "--alpha", "1e-4", "--tests", "naive,wtd,wtd+"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "test_name,n,alpha,estimate,std_error,statistic,threshold,reject,degenerate,branch");
    assert_eq!(lines.len(), 4);
    for (line, name) in lines[1..].iter().zip(["naive", "wtd", "wtd+"]) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], name);
        assert_eq!(fields[1], "100");
        assert_eq!(fields[2], "0.0001");
    }
}

#[test]
fn adaptive_tests_need_a_positive_control() {
    let dir = TempDir::new().unwrap();
    let path = generate(&dir, "d.csv", &[]);
    let out = run(&["test", "--input", path.to_str().unwrap(), "--tests", "a_wtd"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("y_prime"));
}

#[test]
fn psi_and_profile_subcommands() {
    let dir = TempDir::new().unwrap();
    let path = generate(&dir, "d.csv", &["--mu-prime", "2"]);
    let p = path.to_str().unwrap();
    let out = run(&["psi", "--input", p, "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("psi_hat,upper_bound,alpha_prime,method,branch"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 5);
    assert_eq!(&row[2..4], &["0.05", "basic"]);
    assert!(row[4] == "naive" || row[4] == "weighted");
    assert_eq!(run(&["psi", "--input", p, "--seed", "3"]).stdout, out.stdout);

    let out = run(&["loglik-profile", "--input", p, "--lo", "-2", "--hi", "4", "--points", "61"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    assert_eq!(stdout.lines().next(), Some("mu,loglik"));
    assert_eq!(stdout.lines().count(), 62);
}

#[test]
fn malformed_inputs_exit_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y,gamma\n0.5,0.2\n1.0,abc\n").unwrap();
    let out = run(&["test", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("line 3") && err.contains("gamma"), "{err}");

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[experiment]\nphi_grid = [0.3]\nn_grid = [75]\nmu_grid = [1.0]\nreps = -4\n").unwrap();
    let out = run(&["simulate-power", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("reps"));

    let out = run(&["simulate-power", "--phi", "0.3", "--n", "75", "--mu", "1", "--reps", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("experiment.reps"));

    let out = run(&["simulate-power", "--n", "75", "--mu", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("experiment.phi_grid"));
}

#[test]
fn thread_count_does_not_change_output() {
    let args = [
        "simulate-power", "--proxies", "hvar,pos2", "--phi", "0.3", "--n", "40", "--mu", "0,1",
        "--reps", "200", "--alpha", "0.05", "--mu-prime", "1.5", "--resamples", "200", "--seed", "5",
    ];
    let one = bin().args(args).args(["--threads", "1"]).output().unwrap();
    let eight = bin().args(args).args(["--threads", "8"]).output().unwrap();
    assert_eq!(one.status.code(), Some(0), "{}", text(&one.stderr));
    assert_eq!(one.stdout, eight.stdout);
    assert!(text(&one.stdout).starts_with(
        "proxy_label,a,b,phi,n,mu,test_name,reject_rate,mc_se,reps,alpha,theory_power\n"
    ));
}

#[test]
fn large_n_naive_rows_match_theory() {
    let cfg = configs().join("asymptotic.toml");
    let out = run(&["simulate-power", "--config", cfg.to_str().unwrap(), "--reps", "1000", "--tests", "naive"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let mut rdr = csv::Reader::from_reader(stdout.as_bytes());
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let rate: f64 = rec[7].parse().unwrap();
        let reps: f64 = rec[9].parse().unwrap();
        let theory: f64 = rec[11].parse().unwrap();
        let se = (theory * (1.0 - theory) / reps).sqrt();
        assert!((rate - theory).abs() <= 3.0 * se, "{rate} vs {theory}");
        rows += 1;
    }
    assert_eq!(rows, 6);
}

#[test]
fn every_example_config_is_valid() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let file = ConfigFile::read(&path).unwrap();
        if file.model.mu.is_some() {
            file.model_params().unwrap();
            file.test_selection().unwrap();
        } else if file.experiment.mu_grid.is_some() || file.experiment.h_grid.is_some() {
            file.experiment_config().unwrap();
        } else {
            let mut file = file;
            file.experiment.mu_grid = Some(vec![0.0]);
            file.experiment_config().unwrap();
        }
        seen += 1;
    }
    assert!(seen >= 6);
}

#[test]
fn config_driven_generate_and_calibration() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("g.csv");
    let cfg = configs().join("generate.toml");
    let out = run(&["generate", "--config", cfg.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let parsed = Dataset::read_csv_file(&data).unwrap();
    assert_eq!(parsed.len(), 200);
    assert!(parsed.y_prime().is_some());
    let out = run(&["test", "--config", cfg.to_str().unwrap(), "--input", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout).lines().count(), 6);

    let cal = configs().join("calibration.toml");
    let out = run(&["simulate-calibration", "--config", cal.to_str().unwrap(), "--reps", "20", "--proxies", "pos2", "--resamples", "200"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout).lines().count(), 1 + 3 * 5);
}
