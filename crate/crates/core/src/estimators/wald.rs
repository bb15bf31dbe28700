use statrs::function::erf::erfc;

use crate::report::{Method, TestResult, P_VALUE_FLOOR};

/// Relative size below which a sample standard deviation counts as zero.
const DEGENERATE_REL: f64 = 1e-12;

/// Two-sided normal p-value `2(1 − Φ(|t|))`, clamped to `[1e-300, 1]`.
pub fn two_sided_p(statistic: f64) -> f64 {
    clamp_p(erfc(statistic.abs() / std::f64::consts::SQRT_2))
}

/// Upper-tail normal p-value `1 − Φ(t)`.
pub fn upper_p(statistic: f64) -> f64 {
    clamp_p(0.5 * erfc(statistic / std::f64::consts::SQRT_2))
}

fn clamp_p(p: f64) -> f64 {
    if p.is_nan() {
        1.0
    } else {
        p.clamp(P_VALUE_FLOOR, 1.0)
    }
}

/// Wald test of `E[sample] = 0` from per-observation contributions:
/// estimate = mean, std_error = sd/√n with the plug-in (1/n) variance.
///
/// `scale` is the magnitude the samples are built from; a standard deviation
/// below `1e-12 · scale` is treated as exactly zero and the result is flagged
/// degenerate (std_error 0, statistic 0, p = 1).
pub(crate) fn wald_from_samples(
    samples: &[f64],
    scale: f64,
    feature_index: usize,
    method: Method,
) -> TestResult {
    let n = samples.len();
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let second = samples.iter().map(|r| r * r).sum::<f64>() / nf;
    let var = (second - mean * mean).max(0.0);
    // recompute with centered values; the raw-moment form can cancel badly
    let var = if var < 1e-8 * second {
        samples.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / nf
    } else {
        var
    };
    let sd = var.sqrt();
    if !(sd > DEGENERATE_REL * scale.abs()) || !sd.is_finite() {
        return TestResult {
            feature_index,
            method,
            estimate: if mean.abs() <= DEGENERATE_REL * scale.abs() { 0.0 } else { mean },
            std_error: 0.0,
            statistic: 0.0,
            p_value: 1.0,
            n_used: n,
        };
    }
    let std_error = sd / nf.sqrt();
    let statistic = mean / std_error;
    TestResult {
        feature_index,
        method,
        estimate: mean,
        std_error,
        statistic,
        p_value: two_sided_p(statistic),
        n_used: n,
    }
}

impl TestResult {
    /// Same test against the one-sided alternative ψ > 0.
    pub fn to_one_sided(&self) -> TestResult {
        let mut out = self.clone();
        if self.std_error > 0.0 {
            out.p_value = upper_p(self.statistic);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_values_known_points() {
        assert_eq!(two_sided_p(0.0), 1.0);
        assert!((two_sided_p(1.959963984540054) - 0.05).abs() < 1e-10);
        assert!((upper_p(1.6448536269514729) - 0.05).abs() < 1e-10);
        assert_eq!(two_sided_p(60.0), P_VALUE_FLOOR);
    }

    #[test]
    fn p_decreases_with_abs_statistic() {
        let mut last = 1.0;
        for k in 0..200 {
            let p = two_sided_p(k as f64 * 0.05);
            assert!(p <= last);
            assert!((0.0..=1.0).contains(&p));
            last = p;
        }
        assert_eq!(two_sided_p(-2.0), two_sided_p(2.0));
    }

    #[test]
    fn wald_matches_hand_computation() {
        let r = wald_from_samples(&[1.0, 2.0, 3.0, 6.0], 1.0, 0, Method::Loco);
        // mean 3, plug-in variance (1+4+9+36)/4 - 9 = 3.5
        assert!((r.estimate - 3.0).abs() < 1e-15);
        assert!((r.std_error - (3.5f64).sqrt() / 2.0).abs() < 1e-15);
        assert!((r.statistic - r.estimate / r.std_error).abs() < 1e-15);
    }

    #[test]
    fn constant_samples_are_degenerate() {
        let r = wald_from_samples(&[0.0; 5], 1.0, 2, Method::Dropout);
        assert!(r.is_degenerate());
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.estimate, 0.0);
    }
}
