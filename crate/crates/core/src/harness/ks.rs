use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-sample Kolmogorov–Smirnov test against U(0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn ks_uniform(values: &[f64]) -> Result<KsResult> {
    if values.is_empty() {
        return Err(Error::invalid("KS test needs at least one value"));
    }
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("KS uniformity test needs values in [0, 1]"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_tail((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d),
        n: v.len(),
    })
}

/// `P(K > λ)` for the Kolmogorov distribution, with Stephens' small-sample
/// correction applied by the caller.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evenly_spaced_values_pass() {
        let v: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 500.0).collect();
        let r = ks_uniform(&v).unwrap();
        assert!(r.statistic <= 1.0 / 500.0 + 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn skewed_values_fail() {
        let v: Vec<f64> = (0..500).map(|i| ((i as f64 + 0.5) / 500.0).powi(2)).collect();
        assert!(ks_uniform(&v).unwrap().p_value < 1e-6);
    }

    #[test]
    fn known_critical_value() {
        // P(K > 1.3581) ≈ 0.05
        assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 1e-4);
    }
}
