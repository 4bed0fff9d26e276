//! Small deterministic summaries used by the Monte Carlo code.

/// Pairwise (cascade) summation; the result does not depend on thread count.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(x) / x.len() as f64
}

/// Sample mean and standard error of the mean (`sd / sqrt(N)`, `N - 1`
/// denominator in the variance).
pub fn mean_and_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let mu = mean(x);
    if n < 2 {
        return (mu, f64::NAN);
    }
    let sq: Vec<f64> = x.iter().map(|v| (v - mu) * (v - mu)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mu, (var / n as f64).sqrt())
}
