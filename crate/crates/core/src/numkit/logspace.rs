//! Log-space reductions used wherever probabilities or flows are combined.

use crate::error::{Error, Result};

/// `log Σ exp(v_i)` with max-shifting.
///
/// Returns `-inf` when every input is `-inf`. An empty slice is a usage error.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Usage("log_sum_exp of an empty list".into()));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() || max.is_nan() {
        return Ok(max);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// `log(exp(a) + exp(b))`. Returns the other operand unchanged when one side is `-inf`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log((1/n) Σ exp(v_i))`.
pub fn log_mean_exp(values: &[f64]) -> Result<f64> {
    Ok(log_sum_exp(values)? - (values.len() as f64).ln())
}

/// `log(1 + exp(v))`.
pub fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// Masked log-softmax of one row of logits. Invalid entries are replaced by
/// [`MASKED_LOGIT`] before normalisation, so their probability underflows to zero.
pub fn masked_log_softmax(logits: &[f64], mask: &[bool], out: &mut [f64]) {
    debug_assert_eq!(logits.len(), mask.len());
    debug_assert_eq!(logits.len(), out.len());
    let mut max = f64::NEG_INFINITY;
    for (o, (&z, &ok)) in out.iter_mut().zip(logits.iter().zip(mask)) {
        *o = if ok { z } else { MASKED_LOGIT };
        max = max.max(*o);
    }
    let mut sum = 0.0;
    for o in out.iter() {
        sum += (o - max).exp();
    }
    let lse = max + sum.ln();
    for o in out.iter_mut() {
        *o -= lse;
    }
}

/// Logit value assigned to invalid actions.
pub const MASKED_LOGIT: f64 = -1e9;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_zeros_give_ln2() {
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn large_negative_inputs_do_not_underflow() {
        let v = log_sum_exp(&[-1000.0, -1000.0]).unwrap();
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn all_neg_inf_is_neg_inf() {
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(log_add_exp(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
    }

    #[test]
    fn empty_is_usage_error() {
        assert!(matches!(log_sum_exp(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn log_add_exp_with_neg_inf_is_identity() {
        for a in [-3.25, 0.0, 17.5, -700.0] {
            assert_eq!(log_add_exp(a, f64::NEG_INFINITY).to_bits(), a.to_bits());
            assert_eq!(log_add_exp(f64::NEG_INFINITY, a).to_bits(), a.to_bits());
        }
    }

    #[test]
    fn masked_entries_get_zero_probability() {
        let mut out = [0.0; 5];
        masked_log_softmax(&[3.0, 100.0, -2.0, 0.5, 7.0], &[true, false, true, false, true], &mut out);
        let p: Vec<f64> = out.iter().map(|v| v.exp()).collect();
        assert_eq!(p[1], 0.0);
        assert_eq!(p[3], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softplus_and_sigmoid_are_stable() {
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!((logit(0.5)).abs() < 1e-16);
    }
}
