//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines print in order.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::{hessian_fd_gap, j2_prime_gap, random_function, random_section, rng, tau_fd_gap};
use gk_core::courant::{check_courant_identities, TwistData};
use gk_core::forms::{Form, FormField};
use gk_core::kk::{check_hamiltonian_identities, HamiltonianKilling};
use gk_core::linalg::{cr, membership_residual, JMat, I};
use gk_core::models::{
    coordinate_field, flat_complex_structure, flat_hyperkahler, flat_kahler_form, flat_kahler_pair, rotation_field,
};
use gk_core::report::{Report, SamplePlan, Tolerance};
use gk_core::scenario::{parse_scenario, run_scenario};
use gk_core::structures::{one_zero_bundle, GenComplexStructure, TangentEndoField};
use gk_core::tangent::{Field, VectorField};
use gk_core::toric::{
    build_toric_gk, builtin_potential, check_toric_formulas, ratio_derivative, skew_matrix, toric_hamiltonian_killing,
    SymplecticPotential, ToricGKData,
};
use gk_core::twist::{
    check_conformal_twist, check_interpolation_twist, check_poisson_complex_twist, check_symplectic_twist,
    check_twist_integrable,
};
use gk_core::{At, Jet, Point, ScalarField};
use nalgebra::DMatrix;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Largest recorded residual; evaluation errors count as infinite.
fn worst(rep: &Report) -> f64 {
    rep.records
        .iter()
        .filter(|r| !r.check_id.ends_with("agreement") && !r.check_id.ends_with("end-to-end"))
        .map(|r| r.residual_value())
        .fold(0.0, f64::max)
}

fn abs_tol(t: f64) -> Tolerance {
    Tolerance::new(t, 0.0)
}

fn builtin(name: &str, params: &[(&str, f64)]) -> SymplecticPotential {
    let p: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    builtin_potential(name, &p).unwrap().0
}

fn cp2() -> ToricGKData {
    ToricGKData::new(builtin("cp2_fubini_study", &[]), skew_matrix(2, 0, 1, 0.1)).unwrap()
}

fn hirzebruch() -> ToricGKData {
    let pot = builtin("hirzebruch", &[("k", 1.0), ("a", 1.0), ("b", 2.0)]);
    ToricGKData::new(pot, skew_matrix(2, 0, 1, 0.1)).unwrap()
}

/// `count` random interior points of the toric chart, with the moment
/// coordinates pulled 15% toward the center.
fn interior(pot: &SymplecticPotential, count: usize, seed: u64) -> SamplePlan {
    let n = pot.dim();
    let mut r = rng(seed);
    let mut pts = Vec::new();
    while pts.len() < count {
        let mu: Vec<f64> = pot.bounds.iter().map(|(lo, hi)| r.random_range(*lo..*hi)).collect();
        if !pot.contains(&mu) {
            continue;
        }
        let t = (0..n).map(|_| r.random_range(-PI..PI));
        let mu = mu.iter().zip(&pot.center).map(|(m, c)| c + 0.85 * (m - c));
        pts.push(Point(t.chain(mu).collect()));
    }
    SamplePlan::new(2 * n, pts)
}

fn scenario(name: &str) -> Report {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name].iter().collect();
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    run_scenario(&parse_scenario(&text).unwrap())
}

fn courant_suite() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2024);
    let plan = SamplePlan::random_box(&[(-1.0, 1.0); 4], |_| true, 50, 7);
    let mut max_res: f64 = 0.0;
    let mut ok = true;
    for i in 0..50 {
        let u = random_section(&mut r, 4, 0, &format!("u{i}"));
        let v = random_section(&mut r, 4, 0, &format!("v{i}"));
        let w = random_section(&mut r, 4, 0, &format!("w{i}"));
        let f = random_function(&mut r, 4, 0, &format!("f{i}"));
        let rep = check_courant_identities(&u, &v, &w, &f, &plan, abs_tol(1e-8));
        ok &= rep.pass() && rep.records.len() == 3;
        max_res = max_res.max(worst(&rep));
    }
    let t = start.elapsed();
    outcome(
        ok && max_res <= 1e-8 && t <= Duration::from_secs(5),
        format!("50 triples x 50 points, max residual {max_res:.2e}, {:.2} s", t.as_secs_f64()),
    )
}

fn const_two_form(label: &str, entries: &'static [(usize, usize, f64)]) -> FormField {
    FormField::new(label, move |at: &At, k| {
        let mut m = JMat::zeros(at, k, 4, 4);
        for &(i, j, v) in entries {
            m.set(i, j, at.real(k, v));
            m.set(j, i, at.real(k, -v));
        }
        Ok(Form::two_form(&m))
    })
}

/// Largest distance of the columns of `a` from the span of `b`, and of `b`
/// from the span of `a`.
fn subspace_gap(a: &DMatrix<gk_core::C64>, b: &DMatrix<gk_core::C64>) -> f64 {
    let one = |x: &DMatrix<gk_core::C64>, y: &DMatrix<gk_core::C64>| {
        (0..x.ncols())
            .map(|c| membership_residual(y, &x.column(c).into_owned()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    };
    if a.ncols() != b.ncols() {
        return f64::INFINITY;
    }
    one(a, b).max(one(b, a))
}

fn structure_dictionary() -> Outcome {
    let plan = SamplePlan::random_box(&[(-0.8, 0.8); 4], |_| true, 10, 17);
    let sites = plan.sites();
    let j = flat_complex_structure(2);
    // ω = (2 + y1²) dx1∧dy1 + dx2∧dy2
    let omega_var = FormField::new("omega_var", |at: &At, k| {
        let w = at.coord(1, k).mul(&at.coord(1, k)).add_const(cr(2.0));
        let mut m = JMat::zeros(at, k, 4, 4);
        m.set(0, 1, w.clone());
        m.set(1, 0, w.neg());
        m.set(2, 3, at.real(k, 1.0));
        m.set(3, 2, at.real(k, -1.0));
        Ok(Form::two_form(&m))
    });
    let b_const = const_two_form("B0", &[(0, 2, 0.7), (1, 3, -0.4)]);
    // B = 0.3 x1 dx1∧dx2 + 0.5 dy1∧dy2
    let b_var = FormField::new("B1", |at: &At, k| {
        let mut m = JMat::zeros(at, k, 4, 4);
        let x = at.coord(0, k).scale_re(0.3);
        m.set(0, 2, x.clone());
        m.set(2, 0, x.neg());
        m.set(1, 3, at.real(k, 0.5));
        m.set(3, 1, at.real(k, -0.5));
        Ok(Form::two_form(&m))
    });
    let sj = GenComplexStructure::from_complex(&j, &sites).unwrap();
    let omegas = [flat_kahler_form(2), omega_var];
    let sw: Vec<GenComplexStructure> =
        omegas.iter().map(|w| GenComplexStructure::from_symplectic(w, &sites).unwrap()).collect();
    let mut worst_res: f64 = 0.0;
    let mut types_ok = true;
    let mut cases = 0;
    for at in &sites {
        let jm = j.eval(at, 0).unwrap().values();
        // E = ker(J − i) for the block [[J, 0], [0, −Jᵀ]], ε = 0, type n
        let e0 = one_zero_bundle(&sj, at).unwrap();
        let ker = &jm - DMatrix::<gk_core::C64>::identity(4, 4) * I;
        worst_res = worst_res.max((&ker * &e0.e).camax());
        worst_res = worst_res.max(e0.eps_residual(&DMatrix::zeros(4, 4)));
        types_ok &= e0.type_ == 2 && e0.e.ncols() == 2;
        cases += 1;
        for b in [&b_const, &b_var] {
            let bm = b.eval(at, 0).unwrap().matrix().values();
            let eb = one_zero_bundle(&sj.b_transform(b), at).unwrap();
            worst_res = worst_res.max(subspace_gap(&eb.e, &e0.e));
            worst_res = worst_res.max(eb.eps_residual(&bm));
            types_ok &= eb.type_ == e0.type_;
            cases += 1;
        }
        for (s, w) in sw.iter().zip(&omegas) {
            let wm = w.eval(at, 0).unwrap().matrix().values();
            let ew = one_zero_bundle(s, at).unwrap();
            worst_res = worst_res.max(ew.eps_residual(&(&wm * -I)));
            types_ok &= ew.type_ == 0 && ew.e.ncols() == 4;
            cases += 1;
            for b in [&b_const, &b_var] {
                let bm = b.eval(at, 0).unwrap().matrix().values();
                let eb = one_zero_bundle(&s.b_transform(b), at).unwrap();
                worst_res = worst_res.max(subspace_gap(&eb.e, &ew.e));
                worst_res = worst_res.max(eb.eps_residual(&(&bm + &wm * -I)));
                types_ok &= eb.type_ == 0;
                cases += 1;
            }
        }
    }
    outcome(
        types_ok && worst_res <= 1e-10,
        format!("{cases} (E, eps, type) extractions, max residual {worst_res:.2e}, types {}", if types_ok { "ok" } else { "WRONG" }),
    )
}

struct Tally {
    examples: usize,
    passing: usize,
    disagreements: usize,
}

impl Tally {
    fn new() -> Tally {
        Tally { examples: 0, passing: 0, disagreements: 0 }
    }

    fn add(&mut self, rep: &Report) {
        self.examples += 1;
        self.passing += rep.pass() as usize;
        self.disagreements += rep.disagreements();
    }

    fn ok(&self) -> bool {
        self.examples >= 3 && self.disagreements == 0
    }
}

fn twist_with(x0: VectorField, f: FormField, a: ScalarField) -> TwistData {
    TwistData { x0, f, a }
}

fn twist_equivalences() -> Outcome {
    let plan = SamplePlan::random_box(&[(-0.6, 0.6); 4], |_| true, 5, 11);
    let sites = plan.sites();
    let tol = Tolerance::default();
    let j = flat_complex_structure(2);
    let x1 = || coordinate_field(4, 0);
    let one = || ScalarField::constant(1.0);
    // forms in (x1, y1, x2, y2)
    let f_x2y2 = || const_two_form("dx2^dy2", &[(2, 3, 1.0)]);
    let f_y1y2 = || const_two_form("dy1^dy2", &[(1, 3, 1.0)]);
    let f_mixed = || const_two_form("dx1^dy1 + dx2^dy2/2", &[(0, 1, 1.0), (2, 3, 0.5)]);
    let f_x1x2 = || const_two_form("dx1^dx2", &[(0, 2, 1.0)]);
    let a_y1 = || ScalarField::constant(2.0).sub(&ScalarField::coord(1));
    let a_x2 = || ScalarField::constant(2.0).sub(&ScalarField::coord(2));

    let sj = GenComplexStructure::from_complex(&j, &sites).unwrap();
    let sw = GenComplexStructure::from_symplectic(&flat_kahler_form(2), &sites).unwrap();
    let complex_cases = || {
        vec![
            twist_with(x1(), f_x2y2(), one()),
            twist_with(x1(), f_mixed(), a_y1()),
            twist_with(x1(), f_y1y2(), one()),
            twist_with(x1(), f_x1x2(), a_x2()),
        ]
    };

    let mut general = Tally::new();
    for tw in complex_cases() {
        general.add(&check_twist_integrable(&sj, &tw, &plan, tol));
    }
    for tw in [twist_with(x1(), f_x2y2(), one()), twist_with(x1(), f_y1y2(), one())] {
        general.add(&check_twist_integrable(&sw, &tw, &plan, tol));
    }

    // X₀ rotating the (x1, y1) plane; d(r1²)∧dx2 is invariant with i_{X₀}F = 0
    let rot1: VectorField = Field::new("X_rot1", |at: &At, k| {
        Ok(vec![at.coord(1, k).neg(), at.coord(0, k), at.zero(k), at.zero(k)])
    });
    let f_r1 = FormField::new("d(r1^2)^dx2", |at: &At, k| {
        let dr = Form::one_form(vec![at.coord(0, k).scale_re(2.0), at.coord(1, k).scale_re(2.0), at.zero(k), at.zero(k)]);
        let dx2 = Form::one_form(vec![at.zero(k), at.zero(k), at.real(k, 1.0), at.zero(k)]);
        Ok(dr.wedge(&dx2))
    });
    let mut symplectic = Tally::new();
    for tw in [
        twist_with(rot1.clone(), f_r1, one()),
        twist_with(rot1, const_two_form("G", &[(2, 3, 0.7)]), one()),
        twist_with(x1(), f_x2y2(), one()),
        twist_with(x1(), f_y1y2(), one()),
    ] {
        symplectic.add(&check_symplectic_twist(&flat_kahler_form(2), &tw, &plan, tol));
    }

    let zero_pi: TangentEndoField = Field::new("0", |at: &At, k| Ok(JMat::zeros(at, k, 4, 4)));
    let mut complex = Tally::new();
    for tw in complex_cases() {
        complex.add(&check_poisson_complex_twist(&j, &zero_pi, &tw, &plan, tol));
    }

    // Re(∂z1∧∂z2) as the map T*M → TM
    let pi: TangentEndoField = Field::new("Pi", |at: &At, k| {
        Ok(JMat::from_fn(4, 4, |r, c| {
            let v = match (r, c) {
                (0, 2) | (3, 1) => 1.0,
                (2, 0) | (1, 3) => -1.0,
                _ => 0.0,
            };
            at.real(k, v)
        }))
    });
    let mut poisson = Tally::new();
    for tw in std::iter::once(TwistData::trivial(x1())).chain(complex_cases()) {
        poisson.add(&check_poisson_complex_twist(&j, &pi, &tw, &plan, tol));
    }

    let hk = flat_hyperkahler();
    let interp_f = |c: f64| {
        let (wk, wj) = (hk.omega_k.clone(), hk.omega_j.clone());
        FormField::new("F_interp", move |at: &At, k| {
            let x0 = coordinate_field(4, 0).eval(at, k)?;
            Ok(wk.eval(at, k)?.interior(&x0).wedge(&wj.eval(at, k)?.interior(&x0)).scale(cr(c)))
        })
    };
    let mut interpolation = Tally::new();
    for (t, tw) in [
        (0.0, twist_with(x1(), interp_f(0.8), one())),
        (0.4, twist_with(x1(), interp_f(-0.5), one())),
        (1.2, twist_with(x1(), interp_f(0.3), one())),
        (0.4, twist_with(x1(), f_y1y2(), one())),
        (1.6, twist_with(x1(), f_x2y2(), one())),
    ] {
        interpolation.add(&check_interpolation_twist(&hk, t, &tw, &plan, tol));
    }

    let mut conformal = Tally::new();
    let mut cross = 0;
    for (h, tw) in [
        (ScalarField::constant(2.0), twist_with(x1(), f_x2y2(), one())),
        (ScalarField::coord(2).add_const(3.0), TwistData::trivial(x1())),
        (ScalarField::coord(3).add_const(2.0), twist_with(x1(), f_x2y2(), one())),
        (ScalarField::constant(0.5), twist_with(x1(), f_y1y2(), one())),
    ] {
        let rep = check_conformal_twist(&sj, &h, &tw, &plan, tol);
        let direct = check_twist_integrable(&sj.conformal(&h), &tw, &plan, tol);
        cross += (rep.pass() != direct.pass()) as usize;
        conformal.add(&rep);
    }
    conformal.disagreements += cross;

    let families = [
        ("general", &general),
        ("symplectic", &symplectic),
        ("complex", &complex),
        ("poisson", &poisson),
        ("interpolation", &interpolation),
        ("conformal", &conformal),
    ];
    let ok = families.iter().all(|(_, t)| t.ok());
    let detail = families
        .iter()
        .map(|(n, t)| format!("{n} {}/{} pass {} dis", t.passing, t.examples, t.disagreements))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(ok, detail)
}

fn hamiltonian_identities() -> Outcome {
    let start = Instant::now();
    let tol = abs_tol(1e-8);
    let annulus = SamplePlan::random_box(&[(-0.7, 0.7); 4], |p| (0.1..0.45).contains(&p.iter().map(|x| x * x).sum::<f64>()), 8, 5);
    let fh = ScalarField::new("fH", |at: &At, k| {
        let mut s = at.real(k, 3.0);
        for i in 0..4 {
            s = s.sub(&at.coord(i, k).mul(&at.coord(i, k)).scale_re(0.5));
        }
        Ok(s)
    });
    let flat = HamiltonianKilling {
        x0: rotation_field(2),
        fh,
        pair: flat_kahler_pair(2, &annulus.sites()).unwrap(),
    };
    let r2 = ScalarField::coord(0).mul(&ScalarField::coord(0)).add(&ScalarField::coord(1).mul(&ScalarField::coord(1)));
    let f_flat = r2.scale(0.2).add_const(2.0);
    let rep_flat = check_hamiltonian_identities(&flat, &f_flat, &annulus, tol);

    let d = cp2();
    let plan = d.pot.sample_plan(3, 2, 0.15, 21);
    let toric = toric_hamiltonian_killing(&d, &plan.sites()).unwrap();
    let f_cp2 = ScalarField::coord(2).add_const(2.0).sqrt();
    let rep_cp2 = check_hamiltonian_identities(&toric, &f_cp2, &plan, tol);
    let t = start.elapsed();
    let n_ids = rep_cp2.records.iter().filter(|r| r.check_id.starts_with("hk-identities.")).count();
    outcome(
        rep_flat.pass() && rep_cp2.pass() && t <= Duration::from_secs(20),
        format!(
            "{n_ids} identities; flat C2 max {:.2e}, CP2 max {:.2e}, {:.2} s",
            worst(&rep_flat),
            worst(&rep_cp2),
            t.as_secs_f64()
        ),
    )
}

fn toric_two_path() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, d, seed) in [("CP2", cp2(), 31), ("Hirzebruch", hirzebruch(), 32)] {
        let plan = interior(&d.pot, 30, seed);
        let rep = check_toric_formulas(&d, &plan, abs_tol(1e-8));
        let anchors: std::collections::BTreeSet<&str> = rep.records.iter().map(|r| r.anchor.as_str()).collect();
        let covered = ["Eq (expr-j3)", "Eq (pr-j3)", "Eq (G-dim2)", "Eq (epsilon1)", "Eq (i-e)"]
            .iter()
            .all(|a| anchors.contains(a));
        ok &= rep.pass() && covered;
        parts.push(format!("{name} max {:.2e}", worst(&rep)));
    }
    outcome(ok, format!("30 points each; {}", parts.join(", ")))
}

fn closed_form_values() -> Outcome {
    let mut worst_rel: f64 = 0.0;
    for (d, expect, seed) in [
        (cp2(), (|m: f64| 1.0 / (2.0 / 3.0 - m)) as fn(f64) -> f64, 41),
        (hirzebruch(), |m: f64| -1.0 / m, 42),
    ] {
        for p in interior(&d.pot, 20, seed).points {
            let e = expect(p.0[2]);
            let r = ratio_derivative(&d, &p).map_or(f64::INFINITY, |v| ((v - e) / e).abs());
            worst_rel = worst_rel.max(r);
        }
    }
    let mut worst_exx: f64 = 0.0;
    for (c, k) in [(0.0, 1.0), (0.3, 2.0), (-0.5, 0.5)] {
        let pot = builtin("exponential", &[("c", c), ("k", k)]);
        let d = ToricGKData::new(pot, skew_matrix(2, 0, 1, 0.1)).unwrap();
        for p in interior(&d.pot, 20, 43).points {
            worst_exx = worst_exx.max(ratio_derivative(&d, &p).map_or(f64::INFINITY, f64::abs));
        }
    }
    outcome(
        worst_rel <= 1e-9 && worst_exx <= 1e-12,
        format!("ratio derivative max rel err {worst_rel:.2e}; exponential example max {worst_exx:.2e}"),
    )
}

fn end_to_end() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (tag, file) in [
        ("a", "flat_classical.toml"),
        ("b", "cp2_corollary2.toml"),
        ("b", "hirzebruch_corollary2.toml"),
        ("c", "sixdim_j3.toml"),
    ] {
        let start = Instant::now();
        let rep = scenario(file);
        let t = start.elapsed();
        let second_path = rep.records.iter().any(|r| r.check_id.starts_with("herm-twist."));
        let pass = rep.pass() && rep.disagreements() == 0 && second_path && t <= Duration::from_secs(60);
        ok &= pass;
        parts.push(format!(
            "({tag}) {} {} {:.1} s",
            file.trim_end_matches(".toml"),
            if pass { "ok" } else { "FAILED" },
            t.as_secs_f64()
        ));
    }
    outcome(ok, parts.join(", "))
}

fn negative_controls() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (file, anchor) in [
        ("broken_lambda.toml", "Eq (k12)"),
        ("complex_not_11.toml", "F of type (1,1)"),
        ("j3_non_kahler.toml", "Prop gen-applied-1"),
    ] {
        let rep = scenario(file);
        let failing = rep.failing_anchors();
        let pass = !rep.pass() && failing.contains(&anchor) && rep.disagreements() == 0;
        ok &= pass;
        parts.push(format!("{} -> {anchor} {}", file.trim_end_matches(".toml"), if pass { "isolated" } else { "NOT isolated" }));
    }
    outcome(ok, parts.join(", "))
}

fn jet_kernel() -> Outcome {
    let mut fd: f64 = 0.0;
    let mut sym: f64 = 0.0;
    for (name, params) in [
        ("cn_flat", vec![("n", 2.0)]),
        ("cn_flat", vec![("n", 3.0)]),
        ("cp2_fubini_study", vec![]),
        ("hirzebruch", vec![("k", 1.0), ("a", 1.0), ("b", 2.0)]),
        ("exponential", vec![("c", 0.3), ("k", 1.0)]),
        ("sixdim_simplex", vec![]),
    ] {
        let pot = builtin(name, &params);
        let pts = pot.sample_plan(3, 1, 0.2, 9).points;
        if let Some(tau) = pot.tau() {
            fd = fd.max(tau_fd_gap(tau, &pts));
        }
        let (h, s) = hessian_fd_gap(&pot, &pts);
        fd = fd.max(h);
        sym = sym.max(s);
    }

    let flat = SamplePlan::random_box(&[(-1.0, 1.0); 4], |_| true, 12, 13);
    let fsites = flat.sites();
    let f = ScalarField::constant(2.0).add(&ScalarField::coord(0).scale(0.3));
    let mut j2: f64 = j2_prime_gap(&flat_kahler_pair(2, &fsites).unwrap(), &rotation_field(2), &f, &fsites);
    let d = cp2();
    let tsites = d.pot.sample_plan(3, 2, 0.15, 12).sites();
    let x0: VectorField = Field::new("-dt1", |at: &At, k| {
        Ok((0..4).map(|r| at.real(k, if r == 0 { -1.0 } else { 0.0 })).collect::<Vec<Jet>>())
    });
    let f = ScalarField::coord(2).add_const(2.0).sqrt();
    j2 = j2.max(j2_prime_gap(&build_toric_gk(&d, &tsites).unwrap(), &x0, &f, &tsites));
    outcome(
        fd <= 1e-6 && sym <= 1e-10 && j2 <= 1e-10,
        format!("finite differences max rel {fd:.2e} (Hessian symmetry {sym:.2e}); j2' table vs conjugation {j2:.2e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("courant algebra", courant_suite),
        ("structure dictionary", structure_dictionary),
        ("twist criteria equivalences", twist_equivalences),
        ("hamiltonian identities", hamiltonian_identities),
        ("toric two-path formulas", toric_two_path),
        ("closed-form values", closed_form_values),
        ("end-to-end KK verdicts", end_to_end),
        ("negative controls", negative_controls),
        ("jet kernel", jet_kernel),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += !o.pass as usize;
        println!("{} {}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
