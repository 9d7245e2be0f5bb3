//! Kolmogorov–Smirnov statistics.

/// `sup_t |F_n(t) - F(t)|` for the empirical distribution of `samples`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical value `1.63 / sqrt(n)` (about the 1% level).
pub fn ks_threshold(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// `sup_t |F_a(t) - F_b(t)|` between two empirical distributions; exact with ties.
pub fn two_sample_ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    a.iter()
        .chain(&b)
        .map(|&t| (a.partition_point(|&s| s <= t) as f64 / na - b.partition_point(|&s| s <= t) as f64 / nb).abs())
        .fold(0.0, f64::max)
}

/// Two-sample critical value `1.63 sqrt((n + m) / (n m))`.
pub fn two_sample_ks_threshold(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.63 * ((n + m) / (n * m)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nonrev_core::rng;
    use rand::Rng;

    #[test]
    fn uniform_samples_pass_and_shifted_fail() {
        let mut g = rng::stream(1, 0);
        let u: Vec<f64> = (0..20_000).map(|_| g.random::<f64>()).collect();
        let cdf = |x: f64| x.clamp(0.0, 1.0);
        assert!(ks_statistic(&u, cdf) < ks_threshold(u.len()));
        let shifted: Vec<f64> = u.iter().map(|x| x * 0.97).collect();
        assert!(ks_statistic(&shifted, cdf) > ks_threshold(u.len()));
    }

    #[test]
    fn two_sample_statistic_handles_ties() {
        assert_eq!(two_sample_ks_statistic(&[1.0, 1.0, 2.0], &[1.0, 1.0, 2.0]), 0.0);
        assert_eq!(two_sample_ks_statistic(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
        assert!((two_sample_ks_statistic(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]) - 0.25).abs() < 1e-15);
    }
}
