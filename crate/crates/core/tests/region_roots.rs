use lamelab_core::region::{
    b_minus, b_plus, closed_form_minors, critical_roots, d2, d2_minimum, minors, necessary_q, positivity_interval,
    region_report, FormKind, D2_WITNESS,
};
use nalgebra::Matrix3;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

#[test]
fn roots_match_published_approximations() {
    let r = region_report(1e-10).unwrap();
    assert!((r.alpha_plus - 1.524).abs() <= 5e-3);
    assert!((r.alpha_minus + 0.194).abs() <= 5e-3);
    assert!((r.alpha_minus_critical + 0.902).abs() <= 5e-3);
    assert!((r.alpha_plus_critical - 39.450).abs() <= 5e-2);
    assert!(r.bracket_width <= 1e-10);
}

#[test]
fn tighter_tolerance_keeps_leading_digits() {
    let coarse = positivity_interval(1e-4).unwrap();
    let fine = positivity_interval(1e-12).unwrap();
    assert!((coarse.0 - fine.0).abs() <= 1e-4);
    assert!((coarse.1 - fine.1).abs() <= 1e-4);
    let (lo, hi) = critical_roots(1e-12).unwrap();
    assert!(necessary_q(lo - 1e-6) < 0.0 && necessary_q(lo + 1e-6) > 0.0);
    assert!(necessary_q(hi - 1e-6) > 0.0 && necessary_q(hi + 1e-6) < 0.0);
}

#[test]
fn necessary_condition_fails_outside_critical_interval() {
    assert!(necessary_q(-0.95) < 0.0);
    assert!(necessary_q(40.0) < 0.0);
    assert!(d2(&D2_WITNESS, 40.0) <= -9584.0 + 1e-6);
    assert!(d2_minimum(40.0, 2000).unwrap() <= -9584.0 + 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn minors_match_closed_forms(alpha in 0.0f64..45.0, beta in -0.99f64..0.0) {
        let p = minors(&b_plus(alpha).unwrap());
        let c = closed_form_minors(FormKind::Plus, alpha);
        prop_assert!(rel(p.p1, c.p1) <= 1e-9);
        prop_assert!(rel(p.p2, c.p2) <= 1e-9);
        prop_assert!(rel(p.p3.unwrap(), c.p3.unwrap()) <= 1e-9 || (p.p3.unwrap() - c.p3.unwrap()).abs() <= 1e-12);
        let m = minors(&b_minus(beta).unwrap());
        let cm = closed_form_minors(FormKind::Minus, beta);
        prop_assert!(rel(m.p1, cm.p1) <= 1e-9);
        prop_assert!(rel(m.p2, cm.p2) <= 1e-9 || (m.p2 - cm.p2).abs() <= 1e-12);
    }

    #[test]
    fn sylvester_agrees_with_eigenvalues(alpha in 0.0f64..3.0) {
        let b = b_plus(alpha).unwrap();
        let e = b.entries;
        let m = Matrix3::from_fn(|i, j| e[i][j]);
        let lambda_min = m.symmetric_eigenvalues().min();
        let positive = minors(&b).all_positive();
        if lambda_min.abs() > 1e-9 {
            prop_assert_eq!(positive, lambda_min > 0.0);
        }
        prop_assert!((b.smallest_eigenvalue() - lambda_min).abs() <= 1e-9 * (1.0 + lambda_min.abs()));
    }
}
