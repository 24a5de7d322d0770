//! Hamiltonian Killing fields and the conditions of the generalized KK
//! correspondence.

use nalgebra::{DMatrix, DVector};

use crate::courant::{courant_bracket, eps_wedge_one_form, lie_derivative_endo, FrameVec, TwistData, TwistJet};
use crate::deform::{canonical_sections, elementary_deformation, FrameJet};
use crate::error::{GeomError, Result};
use crate::field::{Expr, ScalarField};
use crate::forms::{directional, grad, lie_bracket, Form, FormField};
use crate::jet::{At, Jet, Point, C64};
use crate::linalg::{cr, dot, membership_residual, vnorm_inf, vvalues, JMat};
use crate::report::{evaluate, Report, Residual, SamplePlan, Tolerance};
use crate::structures::{
    frame_sections, projector, section_values, tangent_frame, tangent_values, GenHermitianPair, PairJet,
    TangentEndoField,
};
use crate::tangent::{GSec, VectorField};
use crate::twist::{check_hermitian_twist, validate_twist_data};

/// A Hamiltonian Killing field `X₀` with Hamiltonian `f^H` on a generalized
/// Kähler pair.
#[derive(Clone, Debug)]
pub struct HamiltonianKilling {
    pub x0: VectorField,
    pub fh: ScalarField,
    pub pair: GenHermitianPair,
}

/// Input of the generalized KK correspondence.
#[derive(Clone, Debug)]
pub struct KKInput {
    pub hk: HamiltonianKilling,
    pub f: ScalarField,
    pub h: ScalarField,
    pub tw: TwistData,
    /// Builder diagnostics that do not abort assembly.
    pub warnings: Vec<String>,
}

/// Pair, Killing field and the frame of 𝒮 at a site.
struct HkJet {
    pj: PairJet,
    x0: Vec<Jet>,
    fr: FrameJet,
    gxx: Jet,
}

impl HkJet {
    fn new(hk: &HamiltonianKilling, at: &At, k: usize) -> Result<HkJet> {
        let pj = hk.pair.eval(at, k)?;
        let x0 = hk.x0.eval(at, k)?;
        let fr = FrameJet::new(&pj, &x0)?;
        let gxx = metric_on_x0(&pj, &x0);
        Ok(HkJet { pj, x0, fr, gxx })
    }

    fn section(&self, c: usize) -> GSec {
        GSec::from_stacked(self.fr.column(c))
    }

    fn perp(&self) -> JMat {
        let p = &self.fr.proj;
        JMat::identity(&at_of(&self.x0), p.order(), p.rows()).sub(p)
    }
}

fn at_of(x: &[Jet]) -> At {
    let layout = x[0].layout().clone();
    let n = layout.dim();
    At::new(layout, Point(vec![0.0; n]))
}

/// `G(X₀, X₀) = ⟨G^end X₀, X₀⟩`.
pub fn metric_on_x0(pj: &PairJet, x0: &[Jet]) -> Jet {
    let k = pj.gend.order().min(x0[0].order());
    let zero = x0[0].truncate(k).scale(cr(0.0));
    let u = GSec::new(x0.iter().map(|j| j.truncate(k)).collect(), vec![zero; x0.len()]);
    u.apply(&pj.gend.truncate(k)).pairing(&u)
}

fn gnorm(s: &GSec) -> f64 {
    vnorm_inf(&s.stacked())
}

/// `𝓛_{X₀}𝒥 = 0`, `𝓛_{X₀}G = 0` and `𝒥₂X₀ = df^H`.
pub fn validate_hamiltonian_killing(hk: &HamiltonianKilling, plan: &SamplePlan, tol: Tolerance) -> Report {
    let mut rep = Report::new(format!("Hamiltonian Killing field {}", hk.x0.label()));
    rep.points = plan.len();
    let recs = evaluate(plan, tol, "hk.error", "Def (def-HK)", |at| {
        let pj = hk.pair.eval(at, 1)?;
        let x0 = hk.x0.eval(at, 1)?;
        let lj = lie_derivative_endo(at, &x0, &pj.j1);
        let lg = lie_derivative_endo(at, &x0, &pj.gend);
        let n = at.dim();
        let u = GSec::new(x0.clone(), vec![at.zero(1); n]);
        let j2x0 = u.apply(&pj.j2).value();
        let dfh = grad(&hk.fh.eval_jet(at, 1)?);
        let res = (j2x0.x.camax()).max((&j2x0.xi - vvalues(&dfh)).camax());
        Ok(vec![
            Residual::new("hk.invariant-J", "L_{X0} J = 0", lj.max_abs_value(), pj.j1.max_abs_value()),
            Residual::new("hk.invariant-G", "L_{X0} G = 0", lg.max_abs_value(), pj.gend.max_abs_value()),
            Residual::new("hk.hamiltonian", "J2 X0 = df^H", res, vvalues(&dfh).camax()),
        ])
    });
    for r in recs {
        rep.push(r);
    }
    rep
}

fn sec_diff(a: &GSec, b: &GSec) -> (f64, f64) {
    let d = a.value().stacked() - b.value().stacked();
    (d.camax(), a.value().stacked().camax().max(b.value().stacked().camax()))
}

fn form_sec(xi: Vec<Jet>) -> GSec {
    GSec::form(xi)
}

/// The bracket identities satisfied by a Hamiltonian Killing field, the
/// brackets of the canonical vectors, preservation of `𝒮^⊥` and of
/// `L_i ∩ 𝒮^⊥` by `[X₀, ·]`, and the memberships for `v_1`, `v_i`.
pub fn check_hamiltonian_identities(
    hk: &HamiltonianKilling,
    f: &ScalarField,
    plan: &SamplePlan,
    tol: Tolerance,
) -> Report {
    let mut rep = Report::new(format!("Hamiltonian identities for {}", hk.x0.label()));
    rep.points = plan.len();
    let valid = validate_hamiltonian_killing(hk, plan, tol);
    if !valid.pass() {
        let e = GeomError::PreconditionUnmet("X0 is not Hamiltonian Killing".into());
        rep.push_flag("hk-identities.precondition", "Def (def-HK)", false, Some(e.to_string()));
        rep.extend(valid);
        return rep;
    }
    let recs = evaluate(plan, tol, "hk-identities.error", "Lemma (Courant-brackets)", |at| {
        identity_residuals(hk, f, at)
    });
    for r in recs {
        rep.push(r);
    }
    rep
}

fn identity_residuals(hk: &HamiltonianKilling, f: &ScalarField, at: &At) -> Result<Vec<Residual>> {
    let n = at.dim();
    let hj = HkJet::new(hk, at, 2)?;
    let (x0, jx0, j2x0, j3x0) = (hj.section(0), hj.section(1), hj.section(2), hj.section(3));
    let dg = form_sec(grad(&hj.gxx));
    let zero = GSec::zero(at, 0);
    let mut out = Vec::new();

    let mut push = |id: &str, anchor: &str, pairs: &[(GSec, GSec)]| {
        let (mut r, mut s): (f64, f64) = (0.0, 0.0);
        for (a, b) in pairs {
            let (ri, si) = sec_diff(a, b);
            r = r.max(ri);
            s = s.max(si);
        }
        out.push(Residual::new(id, anchor, r, s));
    };
    push(
        "hk-identities.p1-1",
        "Eq (p1-1)",
        &[
            (courant_bracket(&x0, &jx0), zero.clone()),
            (courant_bracket(&x0, &j2x0), zero.clone()),
            (courant_bracket(&x0, &j3x0), dg.truncate(0)),
        ],
    );
    let jdg = dg.apply(&hj.pj.j1.truncate(1)).scale(cr(2.0));
    push(
        "hk-identities.der-j",
        "Eq (der-j)",
        &[
            (courant_bracket(&jx0, &j2x0), dg.truncate(0)),
            (courant_bracket(&jx0, &j3x0), jdg.truncate(0)),
        ],
    );
    push("hk-identities.der-jj", "Eq (der-jj)", &[(courant_bracket(&j2x0, &j3x0), zero.clone())]);

    let fj = f.eval_jet(at, 2)?;
    let cs = canonical_sections(&hj.fr, &fj)?;
    let f2i = fj.mul(&fj).recip()?;
    let dinv = grad(&f2i);
    let vf_f2i = directional(&cs.v_f.x, &f2i).truncate(0);
    let rhs = j2x0
        .truncate(0)
        .scale_jet(&vf_f2i)
        .scale(C64::new(0.0, -2.0))
        .add(&form_sec(dinv).scale_jet(&hj.gxx.truncate(0)).scale(cr(4.0)).truncate(0));
    let vbar_if = cs.v_if.conj();
    push("hk-identities.courant-v", "Eq (courant-v)", &[(courant_bracket(&cs.v_f, &vbar_if), rhs.clone())]);
    let lhs = courant_bracket(&GSec::vector(cs.v_f.x.clone()), &vbar_if)
        .sub(&courant_bracket(&GSec::vector(vbar_if.x.clone()), &cs.v_f));
    push("hk-identities.need-comp", "Eq (need-comp)", &[(lhs, rhs)]);

    // [X₀, ·] on 𝒮^⊥ and on L_i ∩ 𝒮^⊥
    let perp = hj.perp();
    let x0s = GSec::vector(hj.x0.clone());
    let mut s_comp: f64 = 0.0;
    let mut l_res: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for w in frame_sections(&perp)? {
        let b = courant_bracket(&x0s, &w);
        s_comp = s_comp.max(vvalues(&hj.fr.coords.truncate(0).matvec(&b.stacked())).camax());
        scale = scale.max(gnorm(&b));
    }
    for (j, conj) in [(&hj.pj.j1, false), (&hj.pj.j1, true), (&hj.pj.j2, false), (&hj.pj.j2, true)] {
        let p = projector(j, conj).matmul(&perp);
        let secs = frame_sections(&p)?;
        let span = section_values(&secs, n);
        for w in &secs {
            let b = courant_bracket(&x0s, w);
            l_res = l_res.max(membership_residual(&span, &b.value().stacked())?);
            scale = scale.max(gnorm(&b));
        }
    }
    out.push(Residual::new("hk-identities.dec-courant.S-perp", "Lemma (dec-courant)", s_comp, scale));
    out.push(Residual::new("hk-identities.dec-courant.L-perp", "Lemma (dec-courant)", l_res, scale));

    // memberships for v_1, v_i
    let one = at.real(2, 1.0);
    let cs1 = canonical_sections(&hj.fr, &one)?;
    let p1 = projector(&hj.pj.j1, false);
    let (p2, p2b) = (projector(&hj.pj.j2, false), projector(&hj.pj.j2, true));
    for (id, anchor, p2x, v) in [
        ("hk-identities.v1", "Eq (v1)", &p2, &cs1.v_1),
        ("hk-identities.vi", "Eq (vi)", &p2b, &cs1.v_i),
    ] {
        let frame = tangent_frame(&frame_sections(&p1.matmul(p2x).matmul(&perp))?)?;
        let span = tangent_values(&frame, n);
        let (mut r, mut s): (f64, f64) = (0.0, 0.0);
        for x in &frame {
            let xg = directional(&x.x, &hj.gxx).truncate(0).mul(&hj.gxx.truncate(0).recip()?);
            let w: Vec<Jet> = lie_bracket(&v.x, &x.x)
                .iter()
                .zip(&v.x)
                .map(|(b, vi)| b.add(&xg.mul(&vi.truncate(0))))
                .collect();
            let wv = vvalues(&w);
            r = r.max(membership_residual(&span, &wv)?);
            s = s.max(wv.camax());
        }
        out.push(Residual::new(id, anchor, r, s));
    }
    Ok(out)
}

/// `α = −d ln(|f²−1| / (f² G(X₀,X₀)))` as jets one order below the inputs.
pub fn alpha_jet(f: &Jet, gxx: &Jet) -> Result<Vec<Jet>> {
    let f2 = f.mul(f);
    let q = f2.add_const(cr(-1.0));
    if q.value().norm() < 1e-9 {
        return Err(GeomError::SingularInput(format!("|f^2 - 1| = {:.3e}", q.value().norm())));
    }
    if gxx.value().norm() < 1e-12 {
        return Err(GeomError::SingularInput(format!("G(X0,X0) = {:.3e}", gxx.value().norm())));
    }
    let q = if q.value().re < 0.0 { q.neg() } else { q };
    let ratio = q.div(&f2.mul(gxx))?;
    Ok(grad(&ratio.ln()?).iter().map(|j| j.neg()).collect())
}

/// `α` at a point.
pub fn alpha_form(kk: &KKInput, plan: &SamplePlan, p: &Point) -> Result<DVector<C64>> {
    let at = At::new(plan.layout.clone(), p.clone());
    let pj = kk.hk.pair.eval(&at, 1)?;
    let gxx = metric_on_x0(&pj, &kk.hk.x0.eval(&at, 1)?);
    Ok(vvalues(&alpha_jet(&kk.f.eval_jet(&at, 1)?, &gxx)?))
}

/// Frames entering the conditions of the correspondence at one site.
struct KKFrames {
    e1: Vec<FrameVec>,
    /// `pr_T(L₁ ∩ L₂ ∩ 𝒮^⊥)`
    a: Vec<FrameVec>,
    /// `pr_T(L̄₁ ∩ L₂ ∩ 𝒮^⊥)`
    abar: Vec<FrameVec>,
    /// `pr_T(L₁ ∩ L̄₂ ∩ 𝒮^⊥)`
    b: Vec<FrameVec>,
    /// `pr_T(L₂ ∩ 𝒮^⊥)`
    l2: Vec<FrameVec>,
    /// Tangent parts of a frame of `𝒮^⊥`.
    s_perp: DMatrix<C64>,
}

impl KKFrames {
    fn new(hj: &HkJet) -> Result<KKFrames> {
        let perp = hj.perp();
        let p1 = projector(&hj.pj.j1, false);
        let p1b = projector(&hj.pj.j1, true);
        let p2 = projector(&hj.pj.j2, false);
        let p2b = projector(&hj.pj.j2, true);
        let tf = |p: JMat| -> Result<Vec<FrameVec>> {
            tangent_frame(&frame_sections(&p).map_err(|e| GeomError::FrameDegeneracy(e.to_string()))?)
        };
        let n = hj.x0.len();
        let sp = perp.values();
        Ok(KKFrames {
            e1: tf(p1.clone())?,
            a: tf(p1.matmul(&p2).matmul(&perp))?,
            abar: tf(p1b.matmul(&p2).matmul(&perp))?,
            b: tf(p1.matmul(&p2b).matmul(&perp))?,
            l2: tf(p2.matmul(&perp))?,
            s_perp: sp.rows(0, n).into_owned(),
        })
    }
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |a| (a + 1..n).map(move |b| (a, b)))
}

fn triples(n: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..n).flat_map(move |a| (a + 1..n).flat_map(move |b| (b + 1..n).map(move |c| (a, b, c))))
}

/// Residuals of conditions i)–v) at one site.
pub fn gen_kk_residuals(kk: &KKInput, at: &At) -> Result<Vec<Residual>> {
    let n = at.dim();
    let hj = HkJet::new(&kk.hk, at, 1)?;
    let fr = KKFrames::new(&hj)?;
    let t: TwistJet = kk.tw.eval(at, 1)?;
    let fj = kk.f.eval_jet(at, 1)?;
    let hjet = kk.h.eval_jet(at, 1)?;
    if hjet.value().norm() < 1e-12 {
        return Err(GeomError::SingularInput("h vanishes".into()));
    }
    let alpha = alpha_jet(&fj, &hj.gxx)?;
    let f2 = fj.mul(&fj);
    let f0 = f2.truncate(0);
    let a0 = t.a.truncate(0);
    let fval = |x: &[Jet], y: &[Jet]| t.f.eval(&[x, y]).truncate(0);
    let mut out = Vec::new();

    // i)
    let mut r: f64 = 0.0;
    let mut s: f64 = t.f.truncate(0).max_abs();
    for frame in [&fr.a, &fr.b] {
        for (p, q) in pairs(frame.len()) {
            r = r.max(fval(&frame[p].x, &frame[q].x).value().norm());
        }
    }
    out.push(Residual::new("gen-kk.i.F-vanishes", "Theorem (gen-KK) i)", r, s));
    let e1span = tangent_values(&fr.e1, n);
    r = 0.0;
    for (p, q) in pairs(fr.e1.len()) {
        let c = fval(&fr.e1[p].x, &fr.e1[q].x);
        let v = vvalues(&t.x0).map(|z| z * c.value());
        r = r.max(membership_residual(&e1span, &v)?);
        s = s.max(v.camax());
    }
    out.push(Residual::new("gen-kk.i.F-E1", "Eq (F)", r, s));

    // ii)
    let cs = canonical_sections(&hj.fr, &fj)?;
    let z: Vec<Jet> = hj.section(3).x;
    let coef = f2.truncate(0).mul(&a0.mul(&f0.add_const(cr(-1.0))).recip()?);
    for (id, anchor, frame, v, sign) in [
        ("gen-kk.ii.L1L2", "Eq (cond-long-m)", &fr.a, &cs.v_f, 1.0),
        ("gen-kk.ii.L1L2bar", "Eq (cond-long-1-m)", &fr.b, &cs.v_if, -1.0),
    ] {
        let span = tangent_values(frame, n);
        let (mut r, mut s): (f64, f64) = (0.0, 0.0);
        for x in frame.iter() {
            let w = shifted_bracket(&z, &x.x, &alpha);
            let c = fval(&v.x, &x.x).mul(&coef).scale(cr(sign));
            let w: Vec<Jet> = w.iter().zip(&t.x0).map(|(wi, xi)| wi.add(&c.mul(&xi.truncate(0)))).collect();
            let wv = vvalues(&w);
            r = r.max(membership_residual(&span, &wv)?);
            s = s.max(wv.camax());
        }
        out.push(Residual::new(id, anchor, r, s));
    }

    // iii)
    let afh = t.a.mul(&f2).mul(&hjet).mul(&hjet);
    let d = vvalues(&grad(&afh));
    let mut r: f64 = 0.0;
    for c in 0..fr.s_perp.ncols() {
        r = r.max(d.dot(&fr.s_perp.column(c)).norm());
    }
    out.push(Residual::new("gen-kk.iii.log", "Eq (log)", r, afh.value().norm()));

    // iv)
    let dh = grad(&hjet);
    let h0 = hjet.truncate(0);
    let two_a_h = a0.mul(&h0.recip()?).scale(cr(2.0));
    let (mut r, mut s): (f64, f64) = (0.0, 0.0);
    for (p, q, w) in triples(fr.e1.len()) {
        let (x, y, zz) = (&fr.e1[p], &fr.e1[q], &fr.e1[w]);
        // (i_{X₀}ε₁)(X) = ε₁(X₀, X) = −ξ_X(X₀)
        let ie = |u: &FrameVec| u.eps(&t.x0).truncate(0).neg();
        let lhs = ie(x).mul(&fval(&y.x, &zz.x)).add(&ie(y).mul(&fval(&zz.x, &x.x))).add(&ie(zz).mul(&fval(&x.x, &y.x)));
        let rhs = eps_wedge_one_form(x, y, zz, &dh).truncate(0).mul(&two_a_h).neg();
        r = r.max((lhs.value() - rhs.value()).norm());
        s = s.max(lhs.value().norm()).max(rhs.value().norm());
    }
    out.push(Residual::new("gen-kk.iv.cond-e", "Eq (cond-e)", r, s));
    let (mut r, mut s): (f64, f64) = (0.0, 0.0);
    for x in &fr.a {
        for y in &fr.abar {
            for zz in &fr.l2 {
                let v = eps_wedge_one_form(x, y, zz, &dh).value();
                r = r.max(v.norm());
                s = s.max(vvalues(&dh).camax() * vnorm_inf(&x.xi).max(vnorm_inf(&y.xi)));
            }
        }
    }
    out.push(Residual::new("gen-kk.iv.eps2-dh", "Eq (cond-e) eps2 ^ dh = 0", r, s));

    // v)
    let c = fj.mul(&fj).scale(cr(-1.0)).add_const(cr(1.0)).mul(&f2.mul(&hj.gxx).recip()?);
    let theta = hj.section(3).xi;
    let dct = Form::one_form(theta.iter().map(|th| th.mul(&c)).collect()).d();
    let c0 = c.truncate(0);
    let g0 = hj.gxx.truncate(0);
    let rhs_coef = h0.mul(&g0).recip()?.scale(cr(2.0));
    let vfh = directional(&cs.v_f.x, &hjet).truncate(0);
    let vf_star: Vec<Jet> = cs.v_f.xi.iter().map(|j| j.truncate(0)).collect();
    let f_coef = a0.mul(&f0).recip()?.scale(cr(2.0));
    let (mut r, mut s): (f64, f64) = (0.0, 0.0);
    for (p, q) in pairs(fr.l2.len()) {
        let (x, y) = (&fr.l2[p], &fr.l2[q]);
        let lhs = dct
            .eval(&[&x.x, &y.x])
            .truncate(0)
            .sub(&c0.mul(&dd_eps2(&z, x, y, &alpha)))
            .add(&f_coef.mul(&fval(&x.x, &y.x)));
        let e2 = x.eps(&y.x).truncate(0);
        let wedge = dot(&vf_star, &vtr(&x.x))
            .mul(&dot(&dh, &vtr(&y.x)))
            .sub(&dot(&vf_star, &vtr(&y.x)).mul(&dot(&dh, &vtr(&x.x))));
        let rhs = rhs_coef.mul(&vfh.mul(&e2).add(&wedge));
        r = r.max((lhs.value() - rhs.value()).norm());
        s = s.max(lhs.value().norm()).max(rhs.value().norm());
    }
    out.push(Residual::new("gen-kk.v.cond-de", "Eq (cond-de)", r, s));
    Ok(out)
}

fn vtr(v: &[Jet]) -> Vec<Jet> {
    v.iter().map(|j| j.truncate(0)).collect()
}

/// `[Z, X] + α(X) Z`.
fn shifted_bracket(z: &[Jet], x: &[Jet], alpha: &[Jet]) -> Vec<Jet> {
    let ax = dot(alpha, &vtr(x));
    lie_bracket(z, x)
        .iter()
        .zip(z)
        .map(|(b, zi)| b.add(&ax.mul(&zi.truncate(0))))
        .collect()
}

/// `(𝒟_Z ε₂)(X, Y)` with `ε₂(A, ·) = ξ_A` on frame partners.
fn dd_eps2(z: &[Jet], x: &FrameVec, y: &FrameVec, alpha: &[Jet]) -> Jet {
    let t1 = directional(z, &x.eps(&y.x));
    let wx = shifted_bracket(z, &x.x, alpha);
    let wy = shifted_bracket(z, &y.x, alpha);
    // ε₂(W, Y) = −ξ_Y(W)
    let t2 = y.eps(&wx).truncate(0);
    let t3 = x.eps(&wy).truncate(0);
    t1.truncate(0).add(&t2).sub(&t3)
}

/// Conditions i)–v) of the generalized KK correspondence; with
/// `end_to_end`, the deformed conformal pair is also fed to the twisted
/// generalized Kähler checker and the verdicts must agree.
pub fn check_gen_kk(kk: &KKInput, plan: &SamplePlan, tol: Tolerance, end_to_end: bool) -> Report {
    let mut rep = Report::new(format!(
        "generalized KK: X0 = {}, f = {}, h = {}",
        kk.hk.x0.label(),
        kk.f.label(),
        kk.h.label()
    ));
    rep.points = plan.len();
    let recs = evaluate(plan, tol, "gen-kk.error", "Theorem (gen-KK)", |at| gen_kk_residuals(kk, at));
    for r in recs {
        rep.push(r);
    }
    if end_to_end {
        let verdict = rep.pass();
        let sites = plan.sites();
        let other = elementary_deformation(&kk.hk.pair, &kk.hk.x0, &kk.f, &sites)
            .map(|pd| check_hermitian_twist(&pd, &kk.h, &kk.tw, plan, tol));
        match other {
            Ok(o) => {
                let ov = o.pass();
                rep.extend(o);
                rep.push_agreement(
                    "gen-kk.end-to-end",
                    "Theorem (gen-KK) <=> Theorem (prop-twist)",
                    ("conditions i)-v)", verdict),
                    ("twisted generalized Kähler", ov),
                );
            }
            Err(e) => rep.push_flag("gen-kk.end-to-end", "Theorem (prop-twist)", false, Some(e.to_string())),
        }
    }
    rep
}

fn metric_field(pair: &GenHermitianPair, x0: &VectorField) -> ScalarField {
    let (p, x) = (pair.clone(), x0.clone());
    ScalarField::new(format!("G({0},{0})", x0.label()), move |at, k| {
        Ok(metric_on_x0(&p.eval(at, k)?, &x.eval(at, k)?))
    })
}

/// Classical data: `F = ω − ½dX₀^♭`, `a = −(f^H + g(X₀,X₀)/2)`,
/// `f² = 2f^H/(2f^H + g(X₀,X₀))`, `h² = f^H`, on the Kähler pair `(𝒥_J, 𝒥_ω)`.
pub fn classical_kk_data(
    pair: &GenHermitianPair,
    j: &TangentEndoField,
    omega: &FormField,
    x0: &VectorField,
    fh: &ScalarField,
    plan: &SamplePlan,
) -> Result<KKInput> {
    for at in plan.sites() {
        let v = fh.value(&at)?.re;
        if v <= 0.0 {
            return Err(GeomError::NonPositiveHamiltonian(v));
        }
        let x = vnorm_inf(&x0.eval(&at, 0)?);
        if x < 1e-9 {
            return Err(GeomError::VanishingKillingField(x));
        }
    }
    let (jj, om, xx) = (j.clone(), omega.clone(), x0.clone());
    // X₀^♭ = g(X₀, ·) with g(X, Y) = ω(X, JY)
    let flat = move |at: &At, k: usize| -> Result<Vec<Jet>> {
        let g = om.eval(at, k)?.matrix().matmul(&jj.eval(at, k)?);
        let x = xx.eval(at, k)?;
        Ok(g.transpose().matvec(&x))
    };
    let (om2, fl2) = (omega.clone(), flat.clone());
    let f_form = FormField::new("omega - d(X0^flat)/2", move |at: &At, k| {
        let w = om2.eval(at, k)?;
        let db = Form::one_form(fl2(at, k + 1)?).d();
        Ok(w.sub(&db.scale(cr(0.5)).truncate(k)))
    });
    let xx = x0.clone();
    let gxx = ScalarField::new(format!("g({0},{0})", x0.label()), move |at, k| {
        Ok(dot(&flat(at, k)?, &xx.eval(at, k)?))
    });
    let a = fh.add(&gxx.scale(0.5)).scale(-1.0);
    let two_fh = fh.scale(2.0);
    let f = two_fh.div(&two_fh.add(&gxx)).sqrt();
    let h = fh.sqrt();
    let tw = TwistData { x0: x0.clone(), f: f_form, a };
    let check = validate_twist_data(&tw, plan, Tolerance::default());
    if !check.pass() {
        return Err(GeomError::PreconditionUnmet(format!(
            "classical twist data invalid: {:?}",
            check.failing_anchors()
        )));
    }
    Ok(KKInput {
        hk: HamiltonianKilling { x0: x0.clone(), fh: fh.clone(), pair: pair.clone() },
        f,
        h,
        tw,
        warnings: Vec::new(),
    })
}

/// Data with `h = 1`: `F = −½ d(K(f^H) 𝒥₃X₀)`, `a = 1 + K G(X₀,X₀)`,
/// `f = a^{−1/2}`, for `K` an expression in `fH`. Requires `pr_T(𝒥₃X₀) = 0`.
pub fn j3_kk_data(hk: &HamiltonianKilling, k_expr: &Expr, plan: &SamplePlan, tol: Tolerance) -> Result<KKInput> {
    let kf = hk.fh.compose_expr(k_expr, "fH")?;
    let mut warnings = Vec::new();
    for at in plan.sites() {
        let hj = HkJet::new(hk, &at, 1)?;
        let j3 = hj.section(3);
        let t = vnorm_inf(&vtr(&j3.x));
        if !tol.passes(t, vnorm_inf(&vtr(&j3.xi))) {
            return Err(GeomError::J3NotAForm(t));
        }
        // d(𝒥₃X₀) = 0 on Λ²E₁
        let e1 = tangent_frame(&frame_sections(&projector(&hj.pj.j1, false))?)?;
        let dj = Form::one_form(j3.xi.clone()).d();
        for (p, q) in pairs(e1.len()) {
            let v = dj.eval(&[&vtr(&e1[p].x), &vtr(&e1[q].x)]).value().norm();
            if !tol.passes(v, dj.max_abs()) {
                return Err(GeomError::PreconditionUnmet(format!(
                    "d(J3 X0) does not vanish on E1 ({v:.3e})"
                )));
            }
        }
        if kf.value(&at)?.re < 0.0 {
            return Err(GeomError::ParameterOutOfRange("K must be non-negative".into()));
        }
    }
    if plan.sites().iter().all(|at| kf.value(at).map(|v| v.norm() < 1e-12).unwrap_or(false)) {
        warnings.push("K = 0: f = 1 and the correspondence degenerates".into());
    }
    let gxx = metric_field(&hk.pair, &hk.x0);
    let a = kf.mul(&gxx).add_const(1.0);
    let f = a.powf(-0.5);
    let (p, x, kk) = (hk.pair.clone(), hk.x0.clone(), kf.clone());
    let f_form = FormField::new("-d(K J3 X0)/2", move |at: &At, k| {
        let hj = HkJet::new(&HamiltonianKilling { x0: x.clone(), fh: kk.clone(), pair: p.clone() }, at, k + 1)?;
        let kj = kk.eval_jet(at, k + 1)?;
        let beta: Vec<Jet> = hj.section(3).xi.iter().map(|c| c.mul(&kj)).collect();
        Ok(Form::one_form(beta).d().scale(cr(-0.5)).truncate(k))
    });
    Ok(KKInput {
        hk: hk.clone(),
        f,
        h: ScalarField::constant(1.0),
        tw: TwistData { x0: hk.x0.clone(), f: f_form, a },
        warnings,
    })
}
