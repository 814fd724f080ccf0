use lsv_lab::bump::{decay_certificate, Bump, BumpTable, FAST_RANGE};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_is_even_and_nonnegative(x in -200.0f64..200.0) {
        let b = Bump::default();
        let (a, c) = (b.psi(x), b.psi(-x));
        prop_assert!(a >= -1e-9);
        prop_assert!((a - c).abs() <= 1e-15);
    }

    #[test]
    fn psihat_vanishes_outside_band(t in 1.0f64..50.0) {
        let b = Bump::default();
        prop_assert_eq!(b.psihat(t), 0.0);
        prop_assert_eq!(b.psihat(-t), 0.0);
    }

    #[test]
    fn fast_matches_quadrature(x in -FAST_RANGE..FAST_RANGE) {
        let b = Bump::default();
        let f = b.fast();
        prop_assert!((f.psi(x) - b.psi(x)).abs() <= 1e-11);
    }
}

#[test]
fn table_certificate() {
    let b = Bump::default();
    let t = BumpTable::build(&b, 64.0, 0.5).unwrap();
    assert!(t.psi_values.iter().all(|p| *p >= -1e-9));
    assert!((t.integral() - 1.0).abs() <= 1e-6, "{}", t.integral());
    assert!(t.psihat_grid.iter().all(|x| x.abs() <= 1.0 + 1e-12));
    let (a, c) = t.plancherel_pair();
    assert!((a - c).abs() <= 1e-6 * a);
    let c1 = decay_certificate(64.0, 0.5).unwrap();
    assert!(c1 > 0.0);
    assert!(decay_certificate(5.0, 0.5).is_err());
}

#[test]
fn refinement_keeps_decay_constant() {
    let coarse = BumpTable::build(&Bump::default(), 64.0, 0.5).unwrap().decay_constant_fit;
    let fine = BumpTable::build(&Bump::with_tol(1e-13 / 16.0), 64.0, 0.25).unwrap().decay_constant_fit;
    assert!((coarse - fine).abs() <= 1e-4, "{coarse} vs {fine}");
}
