mod common;

use common::{random_section, rng, Poly};
use gk_core::courant::courant_bracket;
use gk_core::forms::{Form, FormField};
use gk_core::linalg::{cr, lstsq, null_space, numerical_rank, orth_basis, JMat};
use gk_core::models::flat_complex_structure;
use gk_core::report::{Report, SamplePlan};
use gk_core::structures::{one_zero_bundle, GenComplexStructure};
use gk_core::{At, Jet, Layout, Point, C64};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn site(p: &[f64], order: usize) -> At {
    At::new(Layout::new(p.len(), order), Point(p.to_vec()))
}

fn jet_gap(a: &Jet, b: &Jet) -> f64 {
    a.sub(b).max_abs()
}

fn point4() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-0.8f64..0.8, 4)
}

fn complex_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jet_product_obeys_leibniz(p in point4(), seed in any::<u64>(), i in 0usize..4) {
        let mut r = rng(seed);
        let (f, g) = (Poly::random(&mut r, 4, 9), Poly::random(&mut r, 4, 9));
        let at = site(&p, 3);
        let (fj, gj) = (f.jet(&at, 3), g.jet(&at, 3));
        let lhs = fj.mul(&gj).d(i);
        let rhs = fj.d(i).mul(&gj.truncate(2)).add(&fj.truncate(2).mul(&gj.d(i)));
        prop_assert!(jet_gap(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn partials_commute(p in point4(), seed in any::<u64>(), i in 0usize..4, j in 0usize..4) {
        let mut r = rng(seed);
        let f = Poly::random(&mut r, 4, 9);
        let at = site(&p, 3);
        // a non-polynomial function so that third-order terms are present
        let fj = f.jet(&at, 3).exp();
        prop_assert!(jet_gap(&fj.d(i).d(j), &fj.d(j).d(i)) < 1e-12);
    }

    #[test]
    fn exp_ln_and_recip_invert(p in point4(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = Poly::random(&mut r, 4, 9);
        let at = site(&p, 3);
        let fj = f.jet(&at, 3);
        let pos = fj.mul(&fj).add_const(cr(0.5));
        let back = pos.ln().unwrap().exp();
        prop_assert!(jet_gap(&back, &pos) < 1e-10 * pos.max_abs().max(1.0));
        let one = pos.mul(&pos.recip().unwrap());
        prop_assert!(jet_gap(&one, &at.real(3, 1.0)) < 1e-10);
    }

    #[test]
    fn courant_bracket_is_skew(p in point4(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let u = random_section(&mut r, 4, 0, "u");
        let v = random_section(&mut r, 4, 0, "v");
        let at = site(&p, 3);
        let (uj, vj) = (u.eval(&at, 2).unwrap(), v.eval(&at, 2).unwrap());
        let s = courant_bracket(&uj, &vj).add(&courant_bracket(&vj, &uj));
        prop_assert!(s.value().stacked().camax() < 1e-12);
    }

    #[test]
    fn rank_deficient_products(seed in any::<u64>(), rank in 0usize..4, rows in 4usize..7, cols in 4usize..7) {
        let mut r = rng(seed);
        let a = complex_matrix(&mut r, rows, rank) * complex_matrix(&mut r, rank, cols);
        prop_assert_eq!(numerical_rank(&a).unwrap(), rank);

        let q = orth_basis(&a).unwrap();
        prop_assert_eq!(q.ncols(), rank);
        let gram = q.adjoint() * &q - DMatrix::<C64>::identity(rank, rank);
        prop_assert!(gram.camax() < 1e-10);
        // every column of A lies in span Q
        let proj = &q * (q.adjoint() * &a) - &a;
        prop_assert!(proj.camax() < 1e-10 * a.camax().max(1.0));

        let n = null_space(&a).unwrap();
        prop_assert_eq!(n.ncols(), cols - rank);
        prop_assert!((&a * &n).camax() < 1e-10 * a.camax().max(1.0));

        // consistent system: exact fit, and the minimum-norm solution has no
        // null-space component
        let x0 = DVector::from_fn(cols, |_, _| C64::new(r.random_range(-1.0..1.0), 0.0));
        let b = &a * &x0;
        let x = lstsq(&a, &b);
        prop_assert!((&a * &x - &b).camax() < 1e-9 * b.camax().max(1.0));
        if n.ncols() > 0 {
            prop_assert!((n.adjoint() * &x).camax() < 1e-9);
        }
    }

    #[test]
    fn machine_output_round_trips(
        flags in proptest::collection::vec(("[a-z]{1,8}\\.[a-z-]{1,8}", "Eq \\([a-z0-9-]{1,6}\\)", any::<bool>(), proptest::option::of("[ -~]{0,20}")), 0..6),
        points in 0usize..100,
    ) {
        let mut rep = Report::new("round trip");
        rep.points = points;
        for (id, anchor, pass, note) in &flags {
            rep.push_flag(id, anchor, *pass, note.clone());
        }
        let back = Report::from_machine(&rep.to_machine()).unwrap();
        prop_assert_eq!(&back, &rep);
        prop_assert_eq!(back.to_machine(), rep.to_machine());
    }

    #[test]
    fn b_transform_keeps_type_and_shifts_eps(c in proptest::collection::vec(-1.0f64..1.0, 6), p in point4()) {
        let plan = SamplePlan::new(4, vec![Point(p)]);
        let sites = plan.sites();
        let s = GenComplexStructure::from_complex(&flat_complex_structure(2), &sites).unwrap();
        let cc = c.clone();
        let b = FormField::new("B", move |at: &At, k| {
            let mut m = JMat::zeros(at, k, 4, 4);
            let mut q = 0;
            for i in 0..4 {
                for j in i + 1..4 {
                    m.set(i, j, at.real(k, cc[q]));
                    m.set(j, i, at.real(k, -cc[q]));
                    q += 1;
                }
            }
            Ok(Form::two_form(&m))
        });
        let at = &sites[0];
        let base = one_zero_bundle(&s, at).unwrap();
        let moved = one_zero_bundle(&s.b_transform(&b), at).unwrap();
        prop_assert_eq!(moved.type_, base.type_);
        let bm = b.eval(at, 0).unwrap().matrix().values();
        prop_assert!(moved.eps_residual(&bm) < 1e-10);
    }
}
