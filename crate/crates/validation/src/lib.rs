//! Statistical helpers shared by the end-to-end acceptance run.

use statrs::distribution::{ContinuousCDF, Normal};

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    mean_stderr(xs).1 * (xs.len() as f64).sqrt()
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 99% critical value of the one-sample KS statistic.
pub fn ks_critical_99(n: usize) -> f64 {
    1.627_61 / (n as f64).sqrt()
}

/// CDF of the record average at time t: equal mixture of Normal(x_n, 1/(8γt)).
pub fn record_cdf(v: f64, t: f64, levels: &[f64], gamma: f64) -> f64 {
    let sigma = 1.0 / (8.0 * gamma * t).sqrt();
    levels
        .iter()
        .map(|&x| Normal::new(x, sigma).expect("positive sigma").cdf(v))
        .sum::<f64>()
        / levels.len() as f64
}

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub lines: Vec<String>,
}

impl Verdict {
    pub fn new(id: u32, title: &'static str) -> Self {
        Self {
            id,
            title,
            passed: true,
            lines: Vec::new(),
        }
    }

    /// Record a sub-check; any failing sub-check fails the criterion.
    pub fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("    [{}] {line}", if ok { "ok" } else { "FAIL" }));
    }

    pub fn note(&mut self, line: String) {
        self.lines.push(format!("    {line}"));
    }

    pub fn headline(&self) -> String {
        format!(
            "criterion {} {}: {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title
        )
    }
}
