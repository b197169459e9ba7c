#![allow(dead_code)]

/// Asymptotic Kolmogorov critical value at level 1%: `sqrt(−ln(0.005)/2)`.
pub const KS_CRITICAL_1PCT: f64 = 1.627_6;

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n − F|`.
pub fn ks_one_sample(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn ks_one_sample_passes(stat: f64, n: usize) -> bool {
    stat * (n as f64).sqrt() < KS_CRITICAL_1PCT
}

pub fn ks_two_sample_passes(stat: f64, n: usize, m: usize) -> bool {
    let (n, m) = (n as f64, m as f64);
    stat * (n * m / (n + m)).sqrt() < KS_CRITICAL_1PCT
}

/// CDF of the one-dimensional Laplace law with scale `b` about 0.
pub fn laplace_cdf(x: f64, b: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

pub fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
