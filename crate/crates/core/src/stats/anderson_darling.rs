use serde::{Deserialize, Serialize};

use super::normal;

/// Smallest sample the test will evaluate.
pub const MIN_SAMPLES: usize = 8;

/// Upper 1% point of the modified statistic when the mean and variance
/// are estimated from the sample.
pub const CRITICAL_1PCT: f64 = 1.0348;

/// Outcome of a composite-normality Anderson–Darling test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdOutcome {
    /// Raw A² statistic.
    pub statistic: f64,
    /// Small-sample adjusted A*².
    pub adjusted: f64,
    pub rejected: bool,
    /// Set when the sample has zero variance; such samples are rejected.
    pub degenerate: bool,
}

/// Anderson–Darling test of normality with estimated mean and variance.
///
/// The modified statistic is A*² = A²(1 + 4/n − 25/n²); normality is
/// rejected when it exceeds `critical`. Samples need not be sorted.
pub fn anderson_darling(samples: &[f64], critical: f64) -> AdOutcome {
    let n = samples.len();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);

    let nf = n as f64;
    let mean = sorted.iter().sum::<f64>() / nf;
    let var = sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    if n < 2 || !(sd > 1e-12 * mean.abs().max(1.0)) {
        return AdOutcome {
            statistic: f64::INFINITY,
            adjusted: f64::INFINITY,
            rejected: true,
            degenerate: true,
        };
    }

    let tiny = 1e-300_f64;
    let z: Vec<f64> = sorted.iter().map(|x| (x - mean) / sd).collect();
    let mut s = 0.0;
    for i in 0..n {
        let lo = normal::cdf(z[i]).max(tiny).ln();
        let hi = normal::sf(z[n - 1 - i]).max(tiny).ln();
        s += (2 * i + 1) as f64 * (lo + hi);
    }
    let a2 = -nf - s / nf;
    let adjusted = a2 * (1.0 + 4.0 / nf - 25.0 / (nf * nf));
    AdOutcome {
        statistic: a2,
        adjusted,
        rejected: adjusted > critical,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_is_degenerate() {
        let out = anderson_darling(&[3.0; 20], CRITICAL_1PCT);
        assert!(out.rejected && out.degenerate);
    }

    #[test]
    fn known_statistic() {
        // A² of the standardised sample computed by hand against Φ.
        let xs = [-1.1, 0.2, -0.4, 0.0, -0.7, 1.2, -0.1, 0.8, 0.5, -0.9];
        let out = anderson_darling(&xs, CRITICAL_1PCT);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let mut z: Vec<f64> = xs.iter().map(|x| (x - mean) / sd).collect();
        z.sort_by(f64::total_cmp);
        let mut a2 = -n;
        for i in 0..xs.len() {
            let f = normal::cdf(z[i]);
            let g = normal::cdf(z[xs.len() - 1 - i]);
            a2 -= (2.0 * i as f64 + 1.0) / n * (f.ln() + (1.0 - g).ln());
        }
        assert!((out.statistic - a2).abs() < 1e-12);
        assert!(!out.rejected);
    }

    #[test]
    fn order_does_not_matter() {
        let a = [5.0, 1.0, 3.0, 2.0, 8.0, 13.0, 21.0, 0.5, 4.0];
        let mut b = a;
        b.reverse();
        assert_eq!(anderson_darling(&a, 1.0).adjusted, anderson_darling(&b, 1.0).adjusted);
    }
}
