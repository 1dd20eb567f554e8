use std::sync::Arc;

use pd_lab::rates::{
    cgf_lambda, legendre_transform, phi, rate_i, rate_ik, rate_s, rate_selection, rate_sn, selection_sup, CustomFn,
    ExtReal, GrowthClass, HSpec, OptimizerShape, SelectionRegime, TailCertificate,
};
use pd_lab::Error;
use proptest::prelude::*;

fn fin(v: ExtReal) -> f64 {
    v.finite().expect("finite")
}

fn ranked(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total >= 1.0 {
        let scale = 0.999 / total;
        v.iter_mut().for_each(|x| *x *= scale);
    }
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

proptest! {
    #[test]
    fn rate_i_is_convex(a in 0.0f64..0.99, b in 0.0f64..0.99) {
        let mid = fin(rate_i(0.5 * (a + b)));
        prop_assert!(mid <= 0.5 * (fin(rate_i(a)) + fin(rate_i(b))) + 1e-12);
    }

    #[test]
    fn cgf_is_convex_and_nonnegative(a in -5.0f64..20.0, b in -5.0f64..20.0) {
        prop_assert!(cgf_lambda(a) >= 0.0);
        prop_assert!(cgf_lambda(0.5 * (a + b)) <= 0.5 * (cgf_lambda(a) + cgf_lambda(b)) + 1e-12);
    }

    #[test]
    fn legendre_recovers_rate(x in 0.0f64..0.99) {
        prop_assert!((legendre_transform(x).unwrap() - fin(rate_i(x))).abs() < 1e-9);
    }

    #[test]
    fn rank_k_rate_is_the_equal_atom_rate(k in 1usize..6, t in 0.0f64..0.999) {
        let x = t / k as f64;
        prop_assert!((fin(rate_ik(k, x)) - fin(rate_sn(&vec![x; k]))).abs() < 1e-12);
    }

    #[test]
    fn rank_k_rate_is_the_contraction_minimum(k in 2usize..5, t in 0.01f64..0.99, extra in prop::collection::vec(0.0f64..1.0, 4)) {
        // Any ranked vector with p_k = x carries mass at least kx.
        let x = t / k as f64;
        let mut p = vec![x; k];
        for (i, e) in extra.iter().take(k - 1).enumerate() {
            p[i] += e * (1.0 - k as f64 * x) / k as f64;
        }
        let p = ranked(p);
        prop_assert!(fin(rate_sn(&p)) >= fin(rate_ik(k, x)) - 1e-12);
    }

    #[test]
    fn adding_mass_never_lowers_the_rate(v in prop::collection::vec(0.0f64..0.3, 1..8), extra in 0.0f64..0.2) {
        let p = ranked(v);
        let mut q = p.clone();
        q.push(extra.min(*p.last().unwrap()));
        prop_assert!(rate_sn(&q) >= rate_sn(&p));
    }

    #[test]
    fn exact_tail_interval_is_a_point(v in prop::collection::vec(0.0f64..0.2, 0..6), tail in 0.0f64..0.1) {
        let p = ranked(v);
        let r = rate_s(&p, TailCertificate::Exact(tail)).unwrap();
        let mass: f64 = p.iter().sum::<f64>() + tail;
        if mass < 1.0 {
            prop_assert!((fin(r.point().unwrap()) - fin(rate_i(mass))).abs() < 1e-12);
        }
        let loose = rate_s(&p, TailCertificate::AtMost(tail)).unwrap();
        prop_assert!(loose.lo <= r.lo && r.hi <= loose.hi);
    }

    #[test]
    fn linear_rates_are_nonnegative(c in 0.1f64..6.0, v in prop::collection::vec(0.0f64..0.4, 0..5), plus in any::<bool>()) {
        let h = if plus { HSpec::PlusPhi(2) } else { HSpec::MinusPhi(2) };
        let regime = SelectionRegime { growth: GrowthClass::Linear(c), h };
        let r = fin(rate_selection(&ranked(v), &regime).unwrap());
        prop_assert!(r >= -1e-9, "{r}");
    }
}

#[test]
fn closed_form_values() {
    assert!((fin(rate_i(0.5)) - 2f64.ln()).abs() < 1e-15);
    assert_eq!(rate_i(1.0), ExtReal::Infinite);
    assert_eq!(cgf_lambda(1.0), 0.0);
    assert!((cgf_lambda(2.0) - (1.0 - 2f64.ln())).abs() < 1e-15);
    assert_eq!(cgf_lambda(-5.0), 0.0);
    assert!((legendre_transform(0.9).unwrap() - 10f64.ln()).abs() < 1e-9);
    assert_eq!(legendre_transform(0.0).unwrap(), 0.0);
    assert!((fin(rate_ik(2, 0.25)) - 2f64.ln()).abs() < 1e-15);
    assert_eq!(rate_ik(2, 0.6), ExtReal::Infinite);
    assert!((fin(rate_sn(&[0.3, 0.2])) - 2f64.ln()).abs() < 1e-15);
    assert_eq!(rate_sn(&[0.5, 0.5]), ExtReal::Infinite);
}

#[test]
fn geometric_sequence_with_exact_tail_is_infinite() {
    let p: Vec<f64> = (1..=20).map(|k| 0.5f64.powi(k)).collect();
    let r = rate_s(&p, TailCertificate::Exact(0.5f64.powi(20))).unwrap();
    assert_eq!(r.point(), Some(ExtReal::Infinite));
    let r = rate_s(&p, TailCertificate::AtMost(0.5f64.powi(20))).unwrap();
    assert!(r.ambiguous && r.point().is_none());
    assert_eq!(
        rate_s(&[], TailCertificate::Exact(0.0)).unwrap().point(),
        Some(ExtReal::Finite(0.0))
    );
}

#[test]
fn selection_sup_examples() {
    for c in [0.5, 2.0, 7.0] {
        let s = selection_sup(c, &HSpec::MinusPhi(2)).unwrap();
        assert_eq!(s.sup_value, 0.0);
        assert_eq!(s.shape, OptimizerShape::Empty);
    }
    assert_eq!(selection_sup(2.0, &HSpec::PlusPhi(2)).unwrap().sup_value, 0.0);
    let s = selection_sup(2.5, &HSpec::PlusPhi(2)).unwrap();
    let s_star = 0.5 * (1.0 + (1.0 - 2.0 / 2.5f64).sqrt());
    assert!((s.s_star - s_star).abs() < 1e-9);
    assert!((s.sup_value - 0.0230).abs() < 1e-4, "{}", s.sup_value);
    // Grid oracle for the single-atom objective.
    let grid = (0..200_000)
        .map(|i| i as f64 / 200_000.0)
        .map(|q| 2.5 * q * q + (1.0 - q).ln())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((s.sup_value - grid).abs() < 1e-8);
}

#[test]
fn superlinear_custom_needs_a_maximizer() {
    let f: CustomFn = Arc::new(|p: &[f64]| phi(3, p));
    let regime = SelectionRegime {
        growth: GrowthClass::Superlinear,
        h: HSpec::Custom {
            f: f.clone(),
            certified_maximizer: None,
        },
    };
    assert!(matches!(rate_selection(&[0.3], &regime), Err(Error::Unsupported(_))));
    let regime = SelectionRegime {
        growth: GrowthClass::Superlinear,
        h: HSpec::Custom {
            f,
            certified_maximizer: Some(vec![1.0]),
        },
    };
    assert_eq!(rate_selection(&[1.0], &regime).unwrap(), ExtReal::Finite(0.0));
    assert_eq!(rate_selection(&[0.3], &regime).unwrap(), ExtReal::Infinite);
}

#[test]
fn h_spec_parsing() {
    assert_eq!(HSpec::parse("minus_phi_2").unwrap().label(), "minus_phi_2");
    assert_eq!(HSpec::parse("plus_phi_3").unwrap().label(), "plus_phi_3");
    for bad in ["phi_2", "plus_phi_1", "minus_phi_x", ""] {
        assert!(HSpec::parse(bad).is_err(), "{bad}");
    }
}
