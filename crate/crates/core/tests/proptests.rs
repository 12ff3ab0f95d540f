use proptest::prelude::*;

use bgfn::boosting::{boosted_term, clamp_alpha, effective_delta, nabla_term, select_loss, BoostConfig};
use bgfn::env::{Environment, GridEnv, GridState, SeqConfig, SeqEnv, SeqState, Sequence};
use bgfn::eval::l1_metric;
use bgfn::gfn::{draw_action, tb_term, Branch};
use bgfn::numkit::{log_add_exp, log_sum_exp, masked_log_softmax};
use bgfn::rewards::{seq_log_reward, SeqRewardConfig};

fn finite() -> impl Strategy<Value = f64> {
    -50.0..50.0f64
}

proptest! {
    #[test]
    fn log_sum_exp_is_shift_equivariant(v in prop::collection::vec(finite(), 1..20), c in -100.0..100.0f64) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let a = log_sum_exp(&v).unwrap() + c;
        let b = log_sum_exp(&shifted).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        prop_assert!(b >= shifted.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn log_add_exp_commutes(a in finite(), b in finite()) {
        prop_assert_eq!(log_add_exp(a, b), log_add_exp(b, a));
        prop_assert_eq!(log_add_exp(a, f64::NEG_INFINITY), a);
    }

    #[test]
    fn masked_softmax_is_normalized_and_respects_mask(
        pairs in prop::collection::vec((finite(), any::<bool>()), 1..25)
    ) {
        let mut logits: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut mask: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        if !mask.iter().any(|&m| m) {
            mask[0] = true;
        }
        // Masked entries may hold anything, including huge values.
        for (l, m) in logits.iter_mut().zip(&mask) {
            if !m {
                *l = 1e300;
            }
        }
        let mut out = vec![0.0; logits.len()];
        masked_log_softmax(&logits, &mask, &mut out);
        let total: f64 = out.iter().zip(&mask).filter(|p| *p.1).map(|p| p.0.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (o, m) in out.iter().zip(&mask) {
            if !m {
                prop_assert_eq!(o.exp(), 0.0);
            }
        }
    }

    #[test]
    fn mixed_draws_land_on_valid_actions(
        pairs in prop::collection::vec((finite(), any::<bool>()), 2..25),
        eps in 0.0..1.0f64,
        u in 0.0..1.0f64,
    ) {
        let logits: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut mask: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        if !mask.iter().any(|&m| m) {
            mask[1] = true;
        }
        let mut lp = vec![0.0; logits.len()];
        masked_log_softmax(&logits, &mask, &mut lp);
        prop_assert!(mask[draw_action(&lp, &mask, eps, u)]);
    }

    #[test]
    fn grid_walks_stay_inside(w in 1i32..6, choices in prop::collection::vec(0usize..100, 0..60)) {
        let env = GridEnv::new(w).unwrap();
        let mut s: GridState = env.initial_state();
        for c in choices {
            if env.is_terminal(&s) {
                break;
            }
            let mask = env.forward_mask(&s);
            let valid: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
            prop_assert!(!valid.is_empty());
            let next = env.step(&s, valid[c % valid.len()]).unwrap();
            prop_assert!(env.cfg.in_bounds(next.x, next.y));
            prop_assert!(next.t <= env.cfg.horizon());
            // Every backward-valid action from the child returns somewhere inside.
            let bmask = env.backward_mask(&next);
            for a in (0..bmask.len()).filter(|&a| bmask[a]) {
                let parent = env.step_back(&next, a).unwrap();
                prop_assert!(env.cfg.in_bounds(parent.x, parent.y));
            }
            s = next;
        }
    }

    #[test]
    fn sequence_walks_respect_length(max_len in 1usize..10, choices in prop::collection::vec(0usize..100, 0..20)) {
        let env = SeqEnv::new(SeqConfig { max_len, window: max_len.min(6), ..SeqConfig::default() }).unwrap();
        let mut s: SeqState = env.initial_state();
        for c in choices {
            if env.is_terminal(&s) {
                break;
            }
            let mask = env.forward_mask(&s);
            let valid: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
            s = env.step(&s, valid[c % valid.len()]).unwrap();
            prop_assert!(s.t() <= max_len);
        }
        if s.t() == max_len {
            prop_assert!(env.is_terminal(&s) || env.forward_mask(&s).iter().filter(|&&m| m).count() == 1);
        }
    }

    #[test]
    fn seq_reward_stays_clipped(p in 1e-9..(1.0 - 1e-9f64), len in 0usize..40, lo in -60.0..-1.0f64, hi in -1.0..2.0f64) {
        let cfg = SeqRewardConfig { clip_min: lo, clip_max: hi, ..SeqRewardConfig::default() };
        let r = seq_log_reward(p, len, &cfg).unwrap();
        prop_assert!(r >= lo && r <= hi);
    }

    #[test]
    fn seq_reward_is_monotone_in_probability(p in 1e-6..0.9f64, dp in 0.0..0.09f64, len in 1usize..30) {
        let cfg = SeqRewardConfig::default();
        prop_assert!(seq_log_reward(p + dp, len, &cfg).unwrap() >= seq_log_reward(p, len, &cfg).unwrap());
    }

    #[test]
    fn select_loss_is_finite(
        u in finite(),
        log_r in -40.0..5.0f64,
        gap in -30.0..30.0f64,
        alpha in prop_oneof![Just(0.0), Just(1.0), 0.0..1.0f64],
    ) {
        let log_rold = log_r + gap;
        let term = select_loss(u, log_r, log_rold, &BoostConfig { alpha, ..BoostConfig::default() }).unwrap();
        prop_assert!(term.loss.is_finite() && term.loss >= 0.0);
        prop_assert!(term.dl_du.is_finite());
        if alpha == 0.0 {
            prop_assert_ne!(term.branch, Branch::Nabla);
        } else {
            prop_assert_ne!(term.branch, Branch::Clamped);
        }
    }

    #[test]
    fn empty_residual_reduces_to_tb_bitwise(u in finite(), log_r in -40.0..5.0f64, alpha in 0.0..=1.0f64) {
        let b = boosted_term(u, log_r, f64::NEG_INFINITY, alpha);
        let t = tb_term(u, log_r);
        prop_assert_eq!(b.loss.to_bits(), t.loss.to_bits());
        prop_assert_eq!(b.dl_du.to_bits(), t.dl_du.to_bits());
        let s = select_loss(u, log_r, f64::NEG_INFINITY, &BoostConfig { alpha, ..BoostConfig::default() }).unwrap();
        prop_assert_eq!(s.loss.to_bits(), t.loss.to_bits());
    }

    #[test]
    fn clamped_alpha_keeps_denominator_above_delta(
        alpha in 0.0..=1.0f64,
        log_r in -40.0..5.0f64,
        gap in -30.0..30.0f64,
        log_delta in -40.0..-5.0f64,
    ) {
        let log_rold = log_r + gap;
        let delta = log_delta.exp();
        let a = clamp_alpha(alpha, log_r, log_rold, delta);
        prop_assert!(a >= alpha && a <= 1.0);
        let r = log_r.exp();
        let den = r - (1.0 - a) * log_rold.exp();
        let d = effective_delta(log_r, delta);
        // α is an f64 in [0, 1], so 1 − α resolves only to about ε; the
        // denominator inherits an absolute error of order ε·R_old.
        let resolution = 4.0 * f64::EPSILON * log_rold.exp();
        prop_assert!(den >= d * (1.0 - 1e-9) - resolution, "den {den} below delta {d}");
    }

    #[test]
    fn nabla_is_monotone_in_u(u in finite(), du in 0.0..10.0f64, log_r in -30.0..5.0f64, alpha in 1e-3..1.0f64) {
        let a = nabla_term(u, log_r, alpha);
        let b = nabla_term(u + du, log_r, alpha);
        prop_assert!(b.loss >= a.loss);
        prop_assert!(a.dl_du >= 0.0);
    }

    #[test]
    fn l1_is_symmetric_and_scale_free(
        a in prop::collection::vec(0.0..1.0f64, 2..30),
        scale in 1e-3..1e3f64,
    ) {
        prop_assume!(a.iter().sum::<f64>() > 1e-6);
        let b: Vec<f64> = a.iter().rev().copied().collect();
        let ab = l1_metric(&a, &b).unwrap();
        let ba = l1_metric(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
        let scaled: Vec<f64> = a.iter().map(|v| v * scale).collect();
        prop_assert!(l1_metric(&a, &scaled).unwrap() < 1e-12);
    }

    #[test]
    fn sequence_text_roundtrips(tokens in prop::collection::vec(1u8..=19, 0..30)) {
        let s = Sequence(tokens);
        let back: Sequence = s.to_string().parse().unwrap();
        prop_assert_eq!(back, s);
    }
}
