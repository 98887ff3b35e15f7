#![allow(dead_code)]

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Sample covariance and a delta-method standard error.
pub fn cov_se(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (mx, _) = mean_se(xs);
    let (my, _) = mean_se(ys);
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    mean_se(&prods)
}

/// Sample variance and a delta-method standard error.
pub fn var_se(xs: &[f64]) -> (f64, f64) {
    cov_se(xs, xs)
}

/// Assert `got` lies within `k` standard errors of `want`.
pub fn assert_within(label: &str, got: f64, want: f64, se: f64, k: f64) {
    assert!(
        (got - want).abs() <= k * se,
        "{label}: got {got}, want {want} +/- {k} x {se}"
    );
}

pub fn binomial_se(p: f64, reps: usize) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}
