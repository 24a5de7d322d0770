mod common;

use std::collections::BTreeMap;

use common::{hessian_fd_gap, j2_prime_gap, rng, tau_fd_gap};
use gk_core::models::{flat_kahler_pair, rotation_field};
use gk_core::report::SamplePlan;
use gk_core::tangent::Field;
use gk_core::toric::{build_toric_gk, builtin_potential, skew_matrix, ToricGKData};
use gk_core::{At, Point, ScalarField};
use proptest::prelude::*;
use rand::Rng;

const FD_TOL: f64 = 1e-6;

fn builtin(name: &str, params: &[(&str, f64)]) -> gk_core::toric::SymplecticPotential {
    let p: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    builtin_potential(name, &p).unwrap().0
}

#[test]
fn tau_partials_match_finite_differences() {
    for (name, params) in [
        ("cn_flat", vec![("n", 2.0)]),
        ("cn_flat", vec![("n", 3.0)]),
        ("cp2_fubini_study", vec![]),
        ("exponential", vec![("c", 0.3), ("k", 1.0)]),
        ("sixdim_simplex", vec![]),
    ] {
        let pot = builtin(name, &params);
        let tau = pot.tau().expect("potential has τ");
        let plan = pot.sample_plan(3, 1, 0.2, 3);
        let gap = tau_fd_gap(tau, &plan.points);
        assert!(gap <= FD_TOL, "{name}: worst relative gap {gap:.2e}");
    }
}

#[test]
fn hessians_match_finite_differences() {
    for (name, params) in [
        ("cp2_fubini_study", vec![]),
        ("hirzebruch", vec![("k", 1.0), ("a", 1.0), ("b", 2.0)]),
        ("hirzebruch", vec![("k", 2.0), ("a", 1.0), ("b", 3.0)]),
        ("exponential", vec![("c", 0.0), ("k", 1.0)]),
    ] {
        let pot = builtin(name, &params);
        let plan = pot.sample_plan(3, 1, 0.2, 4);
        let (fd, sym) = hessian_fd_gap(&pot, &plan.points);
        assert!(fd <= FD_TOL, "{name}: Hessian derivative gap {fd:.2e}");
        assert!(sym <= 1e-10, "{name}: third derivatives not symmetric, {sym:.2e}");
    }
}

#[test]
fn finite_differences_detect_a_wrong_derivative() {
    // value x², but first partial 2x + 1e-3: the correction vanishes at the
    // base point and so is invisible to differences of values
    let bad = ScalarField::new("bad", |at: &At, k| {
        let x = at.coord(2, k);
        let off = x.sub(&at.real(k, at.point.0[2])).scale_re(1e-3);
        Ok(x.mul(&x).add(&off))
    });
    let p = Point(vec![0.1, 0.2, 0.7, 0.4]);
    assert!(tau_fd_gap(&bad, &[p]) > 1e-4);
}

#[test]
fn j2_prime_table_matches_conjugation_on_flat_c2() {
    let mut r = rng(11);
    let pts: Vec<Point> = (0..12)
        .map(|_| Point((0..4).map(|_| r.random_range(-1.0..1.0)).collect()))
        .collect();
    let plan = SamplePlan::new(4, pts);
    let sites = plan.sites();
    let pair = flat_kahler_pair(2, &sites).unwrap();
    let f = ScalarField::constant(2.0).add(&ScalarField::coord(0).scale(0.3));
    let gap = j2_prime_gap(&pair, &rotation_field(2), &f, &sites);
    assert!(gap <= 1e-10, "gap {gap:.2e}");
}

#[test]
fn j2_prime_table_matches_conjugation_on_cp2() {
    let pot = builtin("cp2_fubini_study", &[]);
    let data = ToricGKData::new(pot, skew_matrix(2, 0, 1, 0.1)).unwrap();
    let plan = data.pot.sample_plan(3, 2, 0.15, 12);
    let sites = plan.sites();
    let pair = build_toric_gk(&data, &sites).unwrap();
    let x0 = Field::new("-dt1", |at: &At, k| {
        Ok((0..4).map(|r| at.real(k, if r == 0 { -1.0 } else { 0.0 })).collect())
    });
    let f = ScalarField::coord(2).add_const(2.0).sqrt();
    let gap = j2_prime_gap(&pair, &x0, &f, &sites);
    assert!(gap <= 1e-10, "gap {gap:.2e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cp2_tau_agrees_with_differences_anywhere_inside(
        m1 in -0.3f64..0.3, m2 in -0.3f64..0.3, t1 in -3.0f64..3.0, t2 in -3.0f64..3.0,
    ) {
        prop_assume!(m1 + m2 < 0.3);
        let pot = builtin("cp2_fubini_study", &[]);
        let gap = tau_fd_gap(pot.tau().unwrap(), &[Point(vec![t1, t2, m1, m2])]);
        prop_assert!(gap <= FD_TOL, "gap {gap:.2e}");
    }
}
