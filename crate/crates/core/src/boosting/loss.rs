use super::BoostConfig;
use crate::error::Result;
use crate::gfn::{induced_log_estimate, Branch, LossTerm};
use crate::numkit::{log_add_exp, sigmoid, softplus};

/// `δ` capped at `R / 2` so the clamped denominator stays below `R`.
pub fn effective_delta(log_r: f64, delta: f64) -> f64 {
    delta.min(0.5 * log_r.exp())
}

/// Smallest `α` in `[α, 1]` keeping `R − (1 − α) R_old ≥ δ`.
pub fn clamp_alpha(alpha: f64, log_r: f64, log_rold: f64, delta: f64) -> f64 {
    if log_rold == f64::NEG_INFINITY {
        return alpha.max(0.0);
    }
    let d = effective_delta(log_r, delta);
    let ratio = (log_r - log_rold).exp() * (1.0 - d / log_r.exp());
    let alpha_min = 1.0 - ratio;
    alpha.max(alpha_min).min(1.0)
}

/// `log(R − (1 − α) R_old)`, or `None` when that is not positive.
fn log_denominator(log_r: f64, log_rold: f64, alpha: f64) -> Option<f64> {
    if alpha == 1.0 || log_rold == f64::NEG_INFINITY {
        return Some(log_r);
    }
    let frac = (1.0 - alpha) * (log_rold - log_r).exp();
    (frac < 1.0).then(|| log_r + (-frac).ln_1p())
}

fn boosted_with_den(u: f64, log_rold: f64, alpha: f64, log_den: f64, branch: Branch) -> LossTerm {
    let num = if alpha == 0.0 || log_rold == f64::NEG_INFINITY {
        u
    } else {
        log_add_exp(u, alpha.ln() + log_rold)
    };
    let d = num - log_den;
    // ∂num/∂u is the share of the numerator contributed by the trained stage.
    let w = (u - num).exp();
    LossTerm {
        loss: d * d,
        dl_du: 2.0 * d * w,
        branch,
    }
}

/// `(log[(R̂ + α R_old) / (R − (1 − α) R_old)])²` with `log R̂ = u`; `NaN` when the
/// denominator is not positive.
pub fn boosted_term(u: f64, log_r: f64, log_rold: f64, alpha: f64) -> LossTerm {
    match log_denominator(log_r, log_rold, alpha) {
        Some(den) => boosted_with_den(u, log_rold, alpha, den, Branch::Boosted),
        None => LossTerm {
            loss: f64::NAN,
            dl_du: f64::NAN,
            branch: Branch::Boosted,
        },
    }
}

pub fn boosted_loss(log_z: f64, log_pf: f64, log_pb: f64, log_r: f64, log_rold: f64, alpha: f64) -> f64 {
    boosted_term(induced_log_estimate(log_z, log_pf, log_pb), log_r, log_rold, alpha).loss
}

/// `(log[R̂ / (α R) + 1])²`, written as `softplus(u − log α − log R)²`.
pub fn nabla_term(u: f64, log_r: f64, alpha: f64) -> LossTerm {
    let v = u - alpha.ln() - log_r;
    let sp = softplus(v);
    LossTerm {
        loss: sp * sp,
        dl_du: 2.0 * sp * sigmoid(v),
        branch: Branch::Nabla,
    }
}

pub fn nabla_loss(log_z: f64, log_pf: f64, log_pb: f64, log_r: f64, alpha: f64) -> f64 {
    nabla_term(induced_log_estimate(log_z, log_pf, log_pb), log_r, alpha).loss
}

/// Boosted loss with the raw `α` when its denominator clears `δ`; otherwise the
/// ∇ safeguard (`α > 0`) or the boosted loss at the clamped `α` (`α = 0`).
pub fn select_loss(u: f64, log_r: f64, log_rold: f64, cfg: &BoostConfig) -> Result<LossTerm> {
    let alpha = cfg.alpha;
    let delta = effective_delta(log_r, cfg.delta);
    if let Some(den) = log_denominator(log_r, log_rold, alpha) {
        if den > delta.ln() {
            return Ok(boosted_with_den(u, log_rold, alpha, den, Branch::Boosted));
        }
    }
    if alpha > 0.0 {
        return Ok(nabla_term(u, log_r, alpha));
    }
    let alpha_t = clamp_alpha(alpha, log_r, log_rold, cfg.delta);
    // At the clamped α the denominator is exactly δ.
    Ok(boosted_with_den(u, log_rold, alpha_t, delta.ln(), Branch::Clamped))
}
