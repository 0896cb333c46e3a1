//! Special functions checked against an independent statistics library.

use leadlag_core::stats::{beta_reg, f_sf, ln_gamma, t_two_sided};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use statrs::function::{beta, gamma};

fn close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(1e-300) || (got - want).abs() < 1e-300
}

#[test]
fn ln_gamma_matches() {
    for i in 1..400 {
        let x = i as f64 * 0.37;
        let (got, want) = (ln_gamma(x), gamma::ln_gamma(x));
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "x={x}: {got} vs {want}");
    }
}

#[test]
fn incomplete_beta_matches() {
    for &a in &[0.5, 1.0, 2.5, 7.0, 24.0, 150.0] {
        for &b in &[0.5, 1.0, 3.0, 11.0, 200.0] {
            for k in 1..40 {
                let x = k as f64 / 40.0;
                let (got, want) = (beta_reg(a, b, x), beta::beta_reg(a, b, x));
                assert!((got - want).abs() < 1e-11, "I_{x}({a}, {b}): {got} vs {want}");
            }
        }
    }
}

#[test]
fn f_survival_matches_over_granger_shapes() {
    // (lag, usable) pairs of the kind the lag scan produces
    for &(l, t) in &[(1usize, 50usize), (2, 200), (3, 497), (10, 300), (45, 600), (48, 110)] {
        let (d1, d2) = (l as f64, (t - 2 * l - 1) as f64);
        let dist = FisherSnedecor::new(d1, d2).unwrap();
        for k in 0..60 {
            let f = 0.05 * k as f64 + 0.01;
            let (got, want) = (f_sf(f, d1, d2), dist.sf(f));
            assert!(close(got, want, 1e-9) || (got - want).abs() < 1e-13, "F({d1},{d2}) at {f}: {got} vs {want}");
        }
    }
}

#[test]
fn t_two_sided_matches() {
    for &df in &[3.0, 10.0, 97.0, 995.0] {
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        for k in 0..50 {
            let t = 0.1 * k as f64;
            let want = 2.0 * dist.sf(t);
            let got = t_two_sided(t, df);
            assert!(close(got, want, 1e-9) || (got - want).abs() < 1e-13, "t={t}, df={df}: {got} vs {want}");
        }
    }
}
