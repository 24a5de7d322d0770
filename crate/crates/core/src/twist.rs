//! Twist-data validation and the twisted integrability criteria on M.

use nalgebra::{DMatrix, DVector};

use crate::courant::{
    courant_bracket, eps_wedge_one_form, fa_bracket, lie_derivative_endo, twisted_courant_bracket,
    FrameVec, TwistData, TwistJet,
};
use crate::error::{GeomError, Result};
use crate::field::ScalarField;
use crate::forms::{directional, grad, Form, FormField};
use crate::jet::{At, Jet, C64};
use crate::linalg::{cr, dot, intersection, membership_residual, vnorm_inf, vvalues, JMat, I};
use crate::report::{evaluate, Report, Residual, SamplePlan, Tolerance};
use crate::structures::{
    frame_closedness, frame_involutivity, frame_sections, one_zero_bundle, projector, section_values,
    tangent_frame, tangent_values, GenComplexStructure, GenHermitianPair, TangentEndoField,
};
use crate::tangent::{EndoField, GSec, VectorField};

/// `dF = 0`, `da = −i_{X₀}F`, `a ≠ 0` and `𝓛_{X₀}F = 0` at every sample.
pub fn validate_twist_data(tw: &TwistData, plan: &SamplePlan, tol: Tolerance) -> Report {
    let mut rep = Report::new(format!("twist data ({}, {}, {})", tw.x0.label(), tw.f.label(), tw.a.label()));
    rep.points = plan.len();
    let recs = evaluate(plan, tol, "twist-data.error", "twist data", |at| {
        let f = tw.f.eval(at, 1)?;
        let a = tw.a.eval_jet(at, 1)?;
        let x0 = tw.x0.eval(at, 1)?;
        let df = f.d().max_abs();
        let ix = f.interior(&x0);
        let da = grad(&a);
        let mut rda: f64 = 0.0;
        for i in 0..at.dim() {
            rda = rda.max(da[i].add(&ix.get(&[i]).truncate(0)).value().norm());
        }
        let lie = f.lie_derivative(&x0).max_abs();
        let av = a.value().norm();
        Ok(vec![
            Residual::new("twist-data.closed", "dF = 0", df, f.max_abs()),
            Residual::new("twist-data.da", "da = -i_{X0} F", rda, ix.max_abs()),
            Residual::new("twist-data.a-nonzero", "a non-vanishing", (1e-9 - av).max(0.0), 0.0),
            Residual::new("twist-data.invariant-F", "L_{X0} F = 0", lie, f.max_abs()),
        ])
    });
    for r in recs {
        rep.push(r);
    }
    rep
}

/// `𝓛_{X₀}` of structure data: endomorphisms, forms and functions.
pub fn check_data_invariance(
    x0: &VectorField,
    endos: &[&EndoField],
    forms: &[&FormField],
    functions: &[&ScalarField],
    plan: &SamplePlan,
    tol: Tolerance,
) -> Report {
    let mut rep = Report::new(format!("invariance under {}", x0.label()));
    rep.points = plan.len();
    let recs = evaluate(plan, tol, "invariance.error", "invariant data", |at| {
        let x = x0.eval(at, 1)?;
        let mut out = Vec::new();
        for e in endos {
            let m = e.eval(at, 1)?;
            let l = lie_derivative_endo(at, &x, &m);
            out.push(Residual::new(
                format!("invariance.{}", e.label()),
                format!("L_{{X0}} {} = 0", e.label()),
                l.max_abs_value(),
                m.max_abs_value(),
            ));
        }
        for f in forms {
            let w = f.eval(at, 1)?;
            out.push(Residual::new(
                format!("invariance.{}", f.label()),
                format!("L_{{X0}} {} = 0", f.label()),
                w.lie_derivative(&x).max_abs(),
                w.max_abs(),
            ));
        }
        for s in functions {
            let v = s.eval_jet(at, 1)?;
            out.push(Residual::new(
                format!("invariance.{}", s.label()),
                format!("X0({}) = 0", s.label()),
                directional(&x, &v).value().norm(),
                v.value().norm(),
            ));
        }
        Ok(out)
    });
    for r in recs {
        rep.push(r);
    }
    rep
}

fn vector_frame(frame: &[VectorField], at: &At, k: usize) -> Result<Vec<Vec<Jet>>> {
    frame.iter().map(|v| v.eval(at, k)).collect()
}

/// `(F, a)`-involutivity of the bundle spanned by a list of vector fields.
pub fn check_fa_involutive(frame: &[VectorField], tw: &TwistData, plan: &SamplePlan, tol: Tolerance) -> Report {
    let mut rep = Report::new("(F,a)-involutivity");
    rep.points = plan.len();
    let recs = evaluate(plan, tol, "fa-involutive.error", "(F,a)-involutive", |at| {
        let t = tw.eval(at, 1)?;
        let vs = vector_frame(frame, at, 1)?;
        let fv: Vec<FrameVec> = vs
            .into_iter()
            .map(|x| FrameVec { xi: vec![at.zero(1); x.len()], x })
            .collect();
        let (r, s) = frame_involutivity(&fv, &t, at.dim())?;
        Ok(vec![Residual::new("fa-involutive", "[X,Y]^(F,a) in E", r, s)])
    });
    for r in recs {
        rep.push(r);
    }
    rep
}

/// Frame partners `ξ_X = ε(X, ·)` of an ambient 2-form.
fn partners(vs: Vec<Vec<Jet>>, eps: &Form) -> Vec<FrameVec> {
    vs.into_iter()
        .map(|x| {
            let xi = eps.interior(&x);
            FrameVec {
                xi: (0..x.len()).map(|i| xi.get(&[i]).clone()).collect(),
                x,
            }
        })
        .collect()
}

/// `d^{(F,a)} ε = 0` on frame triples; requires the involutivity check to pass.
pub fn check_fa_closed(
    frame: &[VectorField],
    eps: &FormField,
    tw: &TwistData,
    plan: &SamplePlan,
    tol: Tolerance,
) -> Report {
    let mut rep = Report::new(format!("(F,a)-closedness of {}", eps.label()));
    rep.points = plan.len();
    let inv = check_fa_involutive(frame, tw, plan, tol);
    if !inv.pass() {
        let e = GeomError::PreconditionUnmet("frame is not (F,a)-involutive".into());
        rep.push_flag("fa-closed.precondition", "(F,a)-involutive", false, Some(e.to_string()));
        rep.extend(inv);
        return rep;
    }
    let recs = evaluate(plan, tol, "fa-closed.error", "d^(F,a) eps = 0", |at| {
        let t = tw.eval(at, 1)?;
        let fv = partners(vector_frame(frame, at, 2)?, &eps.eval(at, 2)?);
        let (r, s) = frame_closedness(&fv, &t, |_, _, _| at.zero(0));
        Ok(vec![Residual::new("fa-closed", "d^(F,a) eps = 0", r, s)])
    });
    for r in recs {
        rep.push(r);
    }
    rep
}

fn conformal_rhs<'a>(h: &'a Jet, dh: &'a [Jet]) -> impl Fn(&FrameVec, &FrameVec, &FrameVec) -> Jet + 'a {
    move |x, y, z| {
        let w = eps_wedge_one_form(x, y, z, dh);
        w.truncate(0).mul(&h.truncate(0).recip().expect("h non-vanishing")).scale(cr(2.0))
    }
}

/// Residuals of both criteria of the twisted integrability theorem for
/// `τ_h 𝒥` (plain twist when `h` is `None`).
fn twist_criteria(
    s: &GenComplexStructure,
    h: Option<&ScalarField>,
    tw: &TwistData,
    at: &At,
    prefix: &str,
) -> Result<Vec<Residual>> {
    let n = at.dim();
    let t = tw.eval(at, 1)?;
    let j = s.j.eval(at, 1)?;
    let secs = frame_sections(&projector(&j, false))?;
    let span = section_values(&secs, n);
    let hj = match h {
        Some(h) => h.eval_jet(at, 1)?,
        None => at.real(1, 1.0),
    };
    let dh = grad(&hj);
    let mut sec_res: f64 = 0.0;
    let mut sec_scale: f64 = 0.0;
    for a in 0..secs.len() {
        for b in a + 1..secs.len() {
            let v = if h.is_some() {
                conf_change_expression(&secs[a], &secs[b], &t, &hj, &dh)
            } else {
                twisted_courant_bracket(&secs[a], &secs[b], &t).scale_jet(&t.a.truncate(0))
            };
            let vv = v.value().stacked();
            sec_res = sec_res.max(membership_residual(&span, &vv)?);
            sec_scale = sec_scale.max(vv.camax());
        }
    }
    let e = tangent_frame(&secs)?;
    let (inv, inv_scale) = frame_involutivity(&e, &t, n)?;
    let (cl, cl_scale) = frame_closedness(&e, &t, conformal_rhs(&hj, &dh));
    Ok(vec![
        Residual::new(format!("{prefix}.sections"), "Eq (exp-r)", sec_res, sec_scale),
        Residual::new(format!("{prefix}.E-involutive"), "E (F,a)-involutive", inv, inv_scale),
        Residual::new(format!("{prefix}.d-eps"), "d^(F,a) eps = (2/h) eps ^ dh", cl, cl_scale),
    ])
}

/// The expression of the conformal criterion:
/// `−F(X,Y)X₀ + η(X₀)i_XF − ξ(X₀)i_YF + (2a/h)(X(h)η − Y(h)ξ) − (a/h)(η(X) − ξ(Y))dh − a[u,v]`.
pub fn conf_change_expression(u: &GSec, v: &GSec, tw: &TwistJet, h: &Jet, dh: &[Jet]) -> GSec {
    let n = u.dim();
    let k = 0;
    let t = |j: &Jet| j.truncate(k);
    let a = t(&tw.a);
    let hi = t(h).recip().expect("h non-vanishing");
    let fxy = t(&tw.f.eval(&[&u.x, &v.x]));
    let eta_x0 = t(&v.form_on(&tw.x0));
    let xi_x0 = t(&u.form_on(&tw.x0));
    let ixf = tw.f.interior(&u.x);
    let iyf = tw.f.interior(&v.x);
    let xh = directional(&u.x, h);
    let yh = directional(&v.x, h);
    let pair = t(&v.form_on(&u.x)).sub(&t(&u.form_on(&v.x)));
    let br = courant_bracket(u, v);
    let a2h = a.mul(&hi).scale(cr(2.0));
    let ah = a.mul(&hi);
    let x = (0..n)
        .map(|i| fxy.mul(&t(&tw.x0[i])).neg().sub(&a.mul(&t(&br.x[i]))))
        .collect();
    let xi = (0..n)
        .map(|i| {
            eta_x0
                .mul(&t(ixf.get(&[i])))
                .sub(&xi_x0.mul(&t(iyf.get(&[i]))))
                .add(&a2h.mul(&xh.mul(&t(&v.xi[i])).sub(&yh.mul(&t(&u.xi[i])))))
                .sub(&ah.mul(&pair).mul(&t(&dh[i])))
                .sub(&a.mul(&t(&br.xi[i])))
        })
        .collect();
    GSec::new(x, xi)
}

fn criteria_report(
    title: String,
    s: &GenComplexStructure,
    h: Option<&ScalarField>,
    tw: &TwistData,
    plan: &SamplePlan,
    tol: Tolerance,
    prefix: &'static str,
) -> Report {
    let mut rep = Report::new(title);
    rep.points = plan.len();
    let recs = evaluate(plan, tol, &format!("{prefix}.error"), "twisted integrability", |at| {
        twist_criteria(s, h, tw, at, prefix)
    });
    for r in recs {
        rep.push(r);
    }
    let a = rep.group_pass(&format!("{prefix}.sections"));
    let b = rep.group_pass(&format!("{prefix}.E-involutive")) && rep.group_pass(&format!("{prefix}.d-eps"));
    rep.push_agreement(
        &format!("{prefix}.agreement"),
        "criterion i) <=> criterion ii)",
        ("sections in L", a),
        ("(E, eps) twisted", b),
    );
    rep
}

/// Integrability of the twist of `S`: the section criterion and the
/// `(E, ε)` criterion, which must agree.
pub fn check_twist_integrable(s: &GenComplexStructure, tw: &TwistData, plan: &SamplePlan, tol: Tolerance) -> Report {
    criteria_report(
        format!("twisted integrability of {}", s.j.label()),
        s,
        None,
        tw,
        plan,
        tol,
        "twist-int",
    )
}

/// Integrability of the twist of the conformal change `τ_h(S)`.
pub fn check_conformal_twist(
    s: &GenComplexStructure,
    h: &ScalarField,
    tw: &TwistData,
    plan: &SamplePlan,
    tol: Tolerance,
) -> Report {
    criteria_report(
        format!("twisted integrability of tau_{}({})", h.label(), s.j.label()),
        s,
        Some(h),
        tw,
        plan,
        tol,
        "conf-twist",
    )
}

fn theorem_pass(rep: &Report, prefix: &str) -> bool {
    rep.records
        .iter()
        .filter(|r| r.check_id.starts_with(prefix) && !r.check_id.ends_with(".agreement"))
        .all(|r| r.pass)
}

fn push_corollary_agreement(rep: &mut Report, general: Report, ids: &[&str], anchor: &str) {
    let a = ids.iter().all(|id| rep.group_pass(id));
    let b = theorem_pass(&general, "twist-int");
    rep.extend(general);
    rep.push_agreement(
        "corollary.agreement",
        anchor,
        ("corollary", a),
        ("general theorem", b),
    );
}

/// `F ∧ i_{X₀}ω = 0`, cross-checked against the general criterion on `𝒥_ω`.
pub fn check_symplectic_twist(omega: &FormField, tw: &TwistData, plan: &SamplePlan, tol: Tolerance) -> Report {
    let mut rep = Report::new(format!("twist of symplectic {}", omega.label()));
    rep.points = plan.len();
    let recs = evaluate(plan, tol, "symplectic-twist.error", "F ^ i_{X0} omega = 0", |at| {
        let w = omega.eval(at, 0)?;
        let t = tw.eval(at, 0)?;
        let ix = w.interior(&t.x0);
        let res = t.f.wedge(&ix);
        Ok(vec![Residual::new(
            "symplectic-twist.wedge",
            "F ^ i_{X0} omega = 0",
            res.max_abs(),
            t.f.max_abs() * ix.max_abs(),
        )])
    });
    for r in recs {
        rep.push(r);
    }
    let general = match GenComplexStructure::from_symplectic(omega, &plan.sites()) {
        Ok(s) => check_twist_integrable(&s, tw, plan, tol),
        Err(e) => {
            let mut g = Report::new("general theorem");
            g.push_flag("twist-int.error", "J_omega", false, Some(e.to_string()));
            g
        }
    };
    push_corollary_agreement(&mut rep, general, &["symplectic-twist.wedge"], "F ^ i_{X0} omega = 0 <=> integrable twist");
    rep
}

/// The condition `i_X F ∈ σ⁻¹(span{X₀ − iJX₀})` for `X ∈ T^{0,1}M`, with `Π`
/// given as the matrix of `T*M → TM`.
pub fn check_poisson_complex_twist(
    j: &TangentEndoField,
    pi: &TangentEndoField,
    tw: &TwistData,
    plan: &SamplePlan,
    tol: Tolerance,
) -> Report {
    let mut rep = Report::new(format!("twist of J_({}, {})", j.label(), pi.label()));
    rep.points = plan.len();
    let s = match GenComplexStructure::from_poisson_complex(j, pi, &plan.sites()) {
        Ok(s) => s,
        Err(e) => {
            rep.push_flag("poisson-twist.compatible", "Eq (types)", false, Some(e.to_string()));
            return rep;
        }
    };
    let recs = evaluate(plan, tol, "poisson-twist.error", "Eq (required-p)", |at| {
        let n = at.dim();
        let jm = j.eval(at, 0)?.values();
        let pm = pi.eval(at, 0)?.values();
        let t = tw.eval(at, 0)?;
        let fm = t.f.matrix().values();
        let x0 = vvalues(&t.x0);
        let w = &x0 - (&jm * &x0) * I;
        let id = DMatrix::<C64>::identity(n, n);
        // T^{0,1}: the −i eigenspace of J
        let p01 = (&id + &jm * I) * cr(0.5);
        let mut type_res: f64 = 0.0;
        let mut line_res: f64 = 0.0;
        let mut scale: f64 = 0.0;
        let wm = DMatrix::from_columns(std::slice::from_ref(&w));
        for c in 0..n {
            let x = p01.column(c).into_owned();
            // (i_X F)_j = F(X, ∂_j)
            let beta: DVector<C64> = fm.transpose() * &x;
            let off = (jm.transpose() * &beta - &beta * I) * cr(0.5);
            type_res = type_res.max(off.camax());
            let img = &pm * &beta;
            if w.norm() > 0.0 {
                line_res = line_res.max(membership_residual(&wm, &img)?);
            } else {
                line_res = line_res.max(img.camax());
            }
            scale = scale.max(beta.camax());
        }
        Ok(vec![
            Residual::new("poisson-twist.type", "F of type (1,1)", type_res, scale),
            Residual::new("poisson-twist.line", "Eq (required-p)", line_res, scale * pm.camax()),
        ])
    });
    for r in recs {
        rep.push(r);
    }
    let general = check_twist_integrable(&s, tw, plan, tol);
    push_corollary_agreement(
        &mut rep,
        general,
        &["poisson-twist.type", "poisson-twist.line"],
        "Eq (required-p) <=> integrable twist",
    );
    rep
}

/// Flat hyper-Kähler data on a chart: complex structures and Kähler forms
/// with `ω_A(X, Y) = g(AX, Y)`.
#[derive(Clone, Debug)]
pub struct HyperKahler {
    pub metric: TangentEndoField,
    pub i: TangentEndoField,
    pub j: TangentEndoField,
    pub k: TangentEndoField,
    pub omega_i: FormField,
    pub omega_j: FormField,
    pub omega_k: FormField,
}

impl HyperKahler {
    /// Quaternionic and compatibility relations at `sites`.
    pub fn validate(&self, sites: &[At]) -> Result<()> {
        for at in sites {
            let g = self.metric.eval(at, 0)?.values();
            let (i, j, k) = (
                self.i.eval(at, 0)?.values(),
                self.j.eval(at, 0)?.values(),
                self.k.eval(at, 0)?.values(),
            );
            let n = g.nrows();
            let id = DMatrix::<C64>::identity(n, n);
            let mut r = (&i * &j - &k).camax();
            for a in [&i, &j, &k] {
                r = r.max((a * a + &id).camax());
                r = r.max((a.transpose() * &g * a - &g).camax());
            }
            for (a, w) in [(&i, &self.omega_i), (&j, &self.omega_j), (&k, &self.omega_k)] {
                let wm = w.eval(at, 0)?.matrix().values();
                r = r.max((a.transpose() * &g - wm).camax());
            }
            if r > 1e-10 {
                return Err(GeomError::NotHyperKahler(r));
            }
        }
        Ok(())
    }

    /// `𝒥_t = sin t 𝒥_I + cos t 𝒥_{ω_J}`.
    pub fn interpolation(&self, t: f64, sites: &[At]) -> Result<GenComplexStructure> {
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&t) {
            return Err(GeomError::ParameterOutOfRange(format!("t = {t} not in [0, pi/2)")));
        }
        let ji = GenComplexStructure::from_complex(&self.i, sites)?;
        let jw = GenComplexStructure::from_symplectic(&self.omega_j, sites)?;
        let (s, c) = t.sin_cos();
        Ok(GenComplexStructure::new(crate::tangent::Field::new(
            format!("J_t[{t}]"),
            move |at: &At, k| {
                Ok(ji.j.eval(at, k)?.scale(cr(s)).add(&jw.j.eval(at, k)?.scale(cr(c))))
            },
        )))
    }
}

/// Twist of the interpolating family: the wedge conditions with `i_{X₀}ω_K`
/// and `i_{X₀}ω_J`, the normal form `F = f κ∧ι` with `df∧κ∧ι = 0`, and the
/// general criterion on `𝒥_t`.
pub fn check_interpolation_twist(
    hk: &HyperKahler,
    t: f64,
    tw: &TwistData,
    plan: &SamplePlan,
    tol: Tolerance,
) -> Report {
    let mut rep = Report::new(format!("twist of interpolation J_t, t = {t}"));
    rep.points = plan.len();
    let sites = plan.sites();
    let s = match hk.validate(&sites).and_then(|_| hk.interpolation(t, &sites)) {
        Ok(s) => s,
        Err(e) => {
            rep.push_flag("interp.hyperkahler", "hyper-Kähler data", false, Some(e.to_string()));
            return rep;
        }
    };
    let recs = evaluate(plan, tol, "interp.error", "Eq (i-j-k)", |at| {
        let tj = tw.eval(at, 1)?;
        let wk = hk.omega_k.eval(at, 1)?;
        let wj = hk.omega_j.eval(at, 1)?;
        let kappa = wk.interior(&tj.x0);
        let iota = wj.interior(&tj.x0);
        let f0 = tj.f.truncate(0);
        let r1 = kappa.truncate(0).wedge(&f0).max_abs().max(iota.truncate(0).wedge(&f0).max_abs());
        let scale = f0.max_abs() * kappa.max_abs().max(iota.max_abs());
        // normal form F = f κ∧ι
        let ki = kappa.wedge(&iota);
        let n = at.dim();
        let mut best = (0, 1, 0.0);
        for a in 0..n {
            for b in a + 1..n {
                let v = ki.get(&[a, b]).value().norm();
                if v > best.2 {
                    best = (a, b, v);
                }
            }
        }
        let (form_res, df_res) = if best.2 > 0.0 {
            let fcoef = tj.f.get(&[best.0, best.1]).div(ki.get(&[best.0, best.1]))?;
            let approx = ki.truncate(0).scale_jet(&fcoef.truncate(0));
            let fr = f0.sub(&approx).max_abs();
            let df = Form::scalar(fcoef).d();
            (fr, df.wedge(&ki.truncate(0)).max_abs())
        } else {
            (f0.max_abs(), 0.0)
        };
        // (1,0)-bundle L(TM, −tan t ω_K − i sec t ω_J)
        let b = one_zero_bundle(&s, at)?;
        let (st, ct) = t.sin_cos();
        let expect = wk.truncate(0).matrix().values() * cr(-st / ct)
            - wj.truncate(0).matrix().values() * (I / ct);
        let bres = b.eps_residual(&expect);
        Ok(vec![
            Residual::new("interp.i-j-k", "Eq (i-j-k)", r1, scale),
            Residual::new("interp.normal-form", "F = f (i_{X0} omega_K) ^ (i_{X0} omega_J)", form_res, f0.max_abs()),
            Residual::new("interp.df", "df ^ (i_{X0} omega_K) ^ (i_{X0} omega_J) = 0", df_res, f0.max_abs().max(1.0)),
            Residual::new("interp.bundle", "L(TM, -tan t omega_K - i sec t omega_J)", bres, expect.camax()),
        ])
    });
    for r in recs {
        rep.push(r);
    }
    let general = check_twist_integrable(&s, tw, plan, tol);
    let b = theorem_pass(&general, "twist-int");
    let ijk = rep.group_pass("interp.i-j-k");
    let nf = rep.group_pass("interp.normal-form") && rep.group_pass("interp.df");
    rep.extend(general);
    rep.push_agreement("interp.agreement", "Eq (i-j-k) <=> integrable twist", ("Eq (i-j-k)", ijk), ("general theorem", b));
    rep.push_agreement("corollary.agreement", "normal form <=> integrable twist", ("normal form", nf), ("general theorem", b));
    rep
}

/// Frames of the bundles entering the twisted Hermitian conditions at a site.
pub struct HermitianFrames {
    pub e1: Vec<FrameVec>,
    /// `pr_T(L₁ ∩ L₂)`
    pub a: Vec<FrameVec>,
    /// `pr_T(L̄₁ ∩ L₂)`
    pub abar: Vec<FrameVec>,
    /// `pr_T(L₁ ∩ L̄₂)`
    pub b: Vec<FrameVec>,
    /// `pr_T(L̄₁ ∩ L̄₂)`
    pub bbar: Vec<FrameVec>,
    pub e2: Vec<FrameVec>,
}

impl HermitianFrames {
    pub fn new(j1: &JMat, j2: &JMat) -> Result<HermitianFrames> {
        let p1 = projector(j1, false);
        let p1b = projector(j1, true);
        let p2 = projector(j2, false);
        let p2b = projector(j2, true);
        Ok(HermitianFrames {
            e1: tangent_frame(&frame_sections(&p1)?)?,
            a: tangent_frame(&frame_sections(&p1.matmul(&p2))?)?,
            abar: tangent_frame(&frame_sections(&p1b.matmul(&p2))?)?,
            b: tangent_frame(&frame_sections(&p1.matmul(&p2b))?)?,
            bbar: tangent_frame(&frame_sections(&p1b.matmul(&p2b))?)?,
            e2: tangent_frame(&frame_sections(&p2)?)?,
        })
    }
}

fn concat(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

fn cross_brackets(xs: &[FrameVec], ys: &[FrameVec], span: &DMatrix<C64>, tw: &TwistJet) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for x in xs {
        for y in ys {
            let v = vvalues(&fa_bracket(&x.x, &y.x, tw));
            worst = worst.max(membership_residual(span, &v)?);
            scale = scale.max(v.camax());
        }
    }
    Ok((worst, scale))
}

/// `d^{(F,a)}ε − (2/h)ε∧dh` on `Λ²(xs) ∧ zs`.
fn glued_identity(xs: &[FrameVec], zs: &[FrameVec], tw: &TwistJet, h: &Jet, dh: &[Jet]) -> (f64, f64) {
    let rhs = conformal_rhs(h, dh);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for a in 0..xs.len() {
        for b in a + 1..xs.len() {
            for z in zs {
                let lhs = crate::courant::fa_d_on_frame(&xs[a], &xs[b], z, tw).value();
                let r = rhs(&xs[a], &xs[b], z).value();
                worst = worst.max((lhs - r).norm());
                scale = scale.max(lhs.norm()).max(r.norm());
            }
        }
    }
    (worst, scale)
}

/// Residual of `ε₁(X,·) = ε₂(X,·)` on `E₁ ∩ E₂` for X in a frame of `pr_T(L₁∩L₂)`.
fn glue_residual(j1: &JMat, j2: &JMat, frame: &[FrameVec], at: &At, conj2: bool) -> Result<f64> {
    let n = at.dim();
    let fixed = |m: &JMat| {
        let m = m.truncate(0);
        GenComplexStructure::new(crate::tangent::Field::new("pt", move |_: &At, _| Ok(m.clone())))
    };
    let b1 = one_zero_bundle(&fixed(j1), at)?;
    let j2m = if conj2 { j2.neg() } else { j2.clone() };
    let b2 = one_zero_bundle(&fixed(&j2m), at)?;
    let common = intersection(&b1.e, &b2.e)?;
    let mut worst: f64 = 0.0;
    for x in frame {
        let xv = vvalues(&x.x);
        for c in 0..common.ncols() {
            let v = common.column(c).into_owned();
            worst = worst.max((b1.eps(&xv, &v) - b2.eps(&xv, &v)).norm());
        }
    }
    let _ = n;
    Ok(worst)
}

/// Conditions for the twist of `τ_h(G, 𝒥)` to be generalized Kähler:
/// involutivity of `E₁`, `pr_T(L₁∩L₂)`, `pr_T(L₁∩L̄₂)`, the cross-bracket
/// conditions and the three differential identities on their domains.
pub fn check_hermitian_twist(
    p: &GenHermitianPair,
    h: &ScalarField,
    tw: &TwistData,
    plan: &SamplePlan,
    tol: Tolerance,
) -> Report {
    let mut rep = Report::new(format!("twisted generalized Kähler, h = {}", h.label()));
    rep.points = plan.len();
    let recs = evaluate(plan, tol, "herm-twist.error", "twisted generalized Kähler", |at| {
        hermitian_twist_residuals(p, h, tw, at)
    });
    for r in recs {
        rep.push(r);
    }
    rep
}

pub fn hermitian_twist_residuals(
    p: &GenHermitianPair,
    h: &ScalarField,
    tw: &TwistData,
    at: &At,
) -> Result<Vec<Residual>> {
    let n = at.dim();
    let pj = p.eval(at, 1)?;
    let t = tw.eval(at, 1)?;
    let fr = HermitianFrames::new(&pj.j1, &pj.j2)?;
    let hj = h.eval_jet(at, 1)?;
    let dh = grad(&hj);
    let (r_e1, s_e1) = frame_involutivity(&fr.e1, &t, n)?;
    let (r_a, s_a) = frame_involutivity(&fr.a, &t, n)?;
    let (r_b, s_b) = frame_involutivity(&fr.b, &t, n)?;
    let e1 = tangent_values(&fr.e1, n);
    let e2 = tangent_values(&fr.e2, n);
    let e2b = e2.map(|z| z.conj());
    let (r_x, s_x) = cross_brackets(&fr.a, &fr.abar, &concat(&e1, &e2), &t)?;
    let (r_y, s_y) = cross_brackets(&fr.b, &fr.bbar, &concat(&e1, &e2b), &t)?;
    let (r_d1, s_d1) = frame_closedness(&fr.e1, &t, conformal_rhs(&hj, &dh));
    let (r_d, s_d) = glued_identity(&fr.a, &fr.abar, &t, &hj, &dh);
    let (r_dt, s_dt) = glued_identity(&fr.b, &fr.bbar, &t, &hj, &dh);
    let glue = glue_residual(&pj.j1, &pj.j2, &fr.a, at, false)?
        .max(glue_residual(&pj.j1, &pj.j2, &fr.b, at, true)?);
    let gscale = fr
        .a
        .iter()
        .chain(&fr.b)
        .map(|v| vnorm_inf(&v.xi))
        .fold(0.0, f64::max);
    Ok(vec![
        Residual::new("herm-twist.E1-involutive", "E1 (F,a)-involutive", r_e1, s_e1),
        Residual::new("herm-twist.L1L2-involutive", "pr_T(L1 ∩ L2) (F,a)-involutive", r_a, s_a),
        Residual::new("herm-twist.L1L2bar-involutive", "pr_T(L1 ∩ conj L2) (F,a)-involutive", r_b, s_b),
        Residual::new("herm-twist.f-a-inv", "Eq (f-a-inv)", r_x, s_x),
        Residual::new("herm-twist.f-a-inv-1", "Eq (f-a-inv-1)", r_y, s_y),
        Residual::new("herm-twist.d-eps1", "Eq (f-a-herm-1) eps1", r_d1, s_d1),
        Residual::new("herm-twist.d-eps", "Eq (f-a-herm-1) eps", r_d, s_d),
        Residual::new("herm-twist.d-eps-tilde", "Eq (f-a-herm-1) eps-tilde", r_dt, s_dt),
        Residual::new("herm-twist.glue", "glued forms well defined", glue, gscale),
    ])
}

/// `d^{(F,a)}` of a full form evaluated on a triple, for cross-checks with
/// the frame formula.
pub fn full_form_twisted_d(alpha: &Form, tw: &TwistJet, vs: [&[Jet]; 3]) -> Jet {
    crate::courant::twisted_exterior_derivative(alpha, tw).eval(&vs)
}

pub fn covector_on(xi: &[Jet], v: &[Jet]) -> Jet {
    dot(xi, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{coordinate_field, flat_complex_structure, flat_hyperkahler, flat_kahler_form, flat_kahler_pair, rotation_field};
    use crate::tangent::Field;
    use proptest::prelude::*;

    fn plan() -> SamplePlan {
        SamplePlan::random_box(&[(-0.6, 0.6); 4], |_| true, 5, 11)
    }

    fn one(at: &At, k: usize, c: [f64; 4]) -> Form {
        Form::one_form(c.iter().map(|&v| at.real(k, v)).collect())
    }

    fn const_form(label: &str, a: [f64; 4], b: [f64; 4], c: f64) -> FormField {
        FormField::new(label, move |at: &At, k| Ok(one(at, k, a).wedge(&one(at, k, b)).scale(cr(c))))
    }

    fn twist(x0: VectorField, f: FormField) -> TwistData {
        TwistData { x0, f, a: ScalarField::constant(1.0) }
    }

    #[test]
    fn zero_twist_reduces_to_integrability() {
        let pl = plan();
        let s = GenComplexStructure::from_complex(&flat_complex_structure(2), &pl.sites()).unwrap();
        let rep = check_twist_integrable(&s, &TwistData::trivial(rotation_field(2)), &pl, Tolerance::default());
        assert!(rep.pass(), "{}", rep.to_text());
    }

    #[test]
    fn twist_data_validation() {
        let pl = plan();
        let good = twist(coordinate_field(4, 0), const_form("F", [0., 1., 0., 0.], [0., 0., 0., 1.], 1.0));
        assert!(validate_twist_data(&good, &pl, Tolerance::default()).pass());
        // i_{∂x1}(dx1∧dx2) = dx2 but a is constant
        let bad = twist(coordinate_field(4, 0), const_form("F", [1., 0., 0., 0.], [0., 0., 1., 0.], 1.0));
        let rep = validate_twist_data(&bad, &pl, Tolerance::default());
        assert!(!rep.group_pass("twist-data.da"));
        assert!(rep.group_pass("twist-data.closed"));
    }

    #[test]
    fn symplectic_corollary_agrees_with_theorem() {
        let pl = plan();
        // rotation of the (x1, y1) plane
        let x0: VectorField = Field::new("X_rot1", |at: &At, k| {
            Ok(vec![at.coord(1, k).neg(), at.coord(0, k), at.zero(k), at.zero(k)])
        });
        // d(r1²) ∧ dx2 is invariant with i_{X0}F = 0
        let f = FormField::new("F", |at: &At, k| {
            let dr = Form::one_form(vec![
                at.coord(0, k).scale(cr(2.0)),
                at.coord(1, k).scale(cr(2.0)),
                at.zero(k),
                at.zero(k),
            ]);
            Ok(dr.wedge(&one(at, k, [0., 0., 1., 0.])))
        });
        let rep = check_symplectic_twist(&flat_kahler_form(2), &twist(x0.clone(), f), &pl, Tolerance::default());
        assert!(rep.pass(), "{}", rep.to_text());
        let g = const_form("G", [0., 0., 1., 0.], [0., 0., 0., 1.], 0.7);
        let rep = check_symplectic_twist(&flat_kahler_form(2), &twist(x0, g), &pl, Tolerance::default());
        assert!(!rep.group_pass("symplectic-twist.wedge"));
        assert!(!rep.group_pass("twist-int.sections"));
        assert!(!rep.group_pass("twist-int.d-eps"));
        assert_eq!(rep.disagreements(), 0, "{}", rep.to_text());
    }

    #[test]
    fn complex_twist_needs_type_one_one() {
        let pl = plan();
        let zero_pi = Field::new("0", |at: &At, k| Ok(JMat::from_fn(4, 4, |_, _| at.zero(k))));
        let j = flat_complex_structure(2);
        let x0 = coordinate_field(4, 0);
        let f11 = const_form("F11", [0., 0., 1., 0.], [0., 0., 0., 1.], 1.0);
        let rep = check_poisson_complex_twist(&j, &zero_pi, &twist(x0.clone(), f11), &pl, Tolerance::default());
        assert!(rep.pass(), "{}", rep.to_text());
        let f20 = const_form("F20", [0., 1., 0., 0.], [0., 0., 0., 1.], 1.0);
        let rep = check_poisson_complex_twist(&j, &zero_pi, &twist(x0, f20), &pl, Tolerance::default());
        assert!(!rep.group_pass("poisson-twist.type"));
        assert!(!rep.group_pass("twist-int.sections"));
        assert!(!rep.group_pass("twist-int.E-involutive") || !rep.group_pass("twist-int.d-eps"));
        assert_eq!(rep.disagreements(), 0, "{}", rep.to_text());
    }

    #[test]
    fn holomorphic_poisson_twist() {
        let pl = plan();
        // Re(∂z1∧∂z2) = ∂x1∧∂x2 − ∂y1∧∂y2
        let pi = Field::new("Pi", |at: &At, k| {
            Ok(JMat::from_fn(4, 4, |r, c| {
                let v = match (r, c) {
                    (0, 2) | (3, 1) => 1.0,
                    (2, 0) | (1, 3) => -1.0,
                    _ => 0.0,
                };
                at.real(k, v)
            }))
        });
        let j = flat_complex_structure(2);
        let x0 = coordinate_field(4, 0);
        let zero = TwistData::trivial(x0.clone());
        let rep = check_poisson_complex_twist(&j, &pi, &zero, &pl, Tolerance::default());
        assert!(rep.pass(), "{}", rep.to_text());
        let f11 = const_form("F11", [0., 0., 1., 0.], [0., 0., 0., 1.], 1.0);
        let rep = check_poisson_complex_twist(&j, &pi, &twist(x0, f11), &pl, Tolerance::default());
        assert_eq!(rep.disagreements(), 0, "{}", rep.to_text());
    }

    fn interpolation_f(hk: &HyperKahler, c: f64) -> FormField {
        let (wk, wj) = (hk.omega_k.clone(), hk.omega_j.clone());
        FormField::new("F", move |at: &At, k| {
            let x0 = coordinate_field(4, 0).eval(at, k)?;
            let kappa = wk.eval(at, k)?.interior(&x0);
            let iota = wj.eval(at, k)?.interior(&x0);
            Ok(kappa.wedge(&iota).scale(cr(c)))
        })
    }

    #[test]
    fn interpolation_twist() {
        let pl = plan();
        let hk = flat_hyperkahler();
        for t in [0.0, 0.4, 1.2] {
            let tw = twist(coordinate_field(4, 0), interpolation_f(&hk, 0.8));
            let rep = check_interpolation_twist(&hk, t, &tw, &pl, Tolerance::default());
            assert!(rep.pass(), "{}", rep.to_text());
        }
        let bad = twist(coordinate_field(4, 0), const_form("G", [0., 1., 0., 0.], [0., 0., 0., 1.], 1.0));
        let rep = check_interpolation_twist(&hk, 0.4, &bad, &pl, Tolerance::default());
        assert!(!rep.group_pass("interp.i-j-k"));
        assert_eq!(rep.disagreements(), 0, "{}", rep.to_text());
        let rep = check_interpolation_twist(&hk, 1.6, &bad, &pl, Tolerance::default());
        assert!(!rep.pass());
    }

    #[test]
    fn conformal_twist_constant_factor() {
        let pl = plan();
        let s = GenComplexStructure::from_complex(&flat_complex_structure(2), &pl.sites()).unwrap();
        let f11 = const_form("F11", [0., 0., 1., 0.], [0., 0., 0., 1.], 1.0);
        let rep = check_conformal_twist(&s, &ScalarField::constant(2.0), &twist(coordinate_field(4, 0), f11), &pl, Tolerance::default());
        assert!(rep.pass(), "{}", rep.to_text());
        let h = ScalarField::coord(2).add_const(3.0);
        let rep = check_conformal_twist(&s, &h, &TwistData::trivial(coordinate_field(4, 0)), &pl, Tolerance::default());
        assert_eq!(rep.disagreements(), 0, "{}", rep.to_text());
    }

    #[test]
    fn hermitian_twist_of_flat_kahler() {
        let pl = plan();
        let p = flat_kahler_pair(2, &pl.sites()).unwrap();
        let tw = TwistData::trivial(coordinate_field(4, 0));
        let rep = check_hermitian_twist(&p, &ScalarField::constant(1.0), &tw, &pl, Tolerance::default());
        assert!(rep.pass(), "{}", rep.to_text());
        let f20 = const_form("F20", [0., 1., 0., 0.], [0., 0., 0., 1.], 1.0);
        let rep = check_hermitian_twist(&p, &ScalarField::constant(1.0), &twist(coordinate_field(4, 0), f20), &pl, Tolerance::default());
        assert!(!rep.pass());
    }

    #[test]
    fn fa_closed_requires_involutive_frame() {
        let pl = plan();
        let tw = twist(coordinate_field(4, 0), const_form("F", [0., 1., 0., 0.], [0., 0., 0., 1.], 1.0));
        // ∂y1, ∂y2: F(∂y1, ∂y2) ∂x1 leaves the span
        let frame = [coordinate_field(4, 1), coordinate_field(4, 3)];
        let eps = const_form("e", [0., 1., 0., 0.], [0., 0., 0., 1.], 1.0);
        let rep = check_fa_closed(&frame, &eps, &tw, &pl, Tolerance::default());
        assert!(rep.get("fa-closed.precondition").is_some());
        let frame = [coordinate_field(4, 0), coordinate_field(4, 2)];
        let rep = check_fa_closed(&frame, &eps, &tw, &pl, Tolerance::default());
        assert!(rep.pass(), "{}", rep.to_text());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn full_form_matches_frame_formula(
            lin in proptest::collection::vec(-1.0f64..1.0, 24),
            fc in proptest::collection::vec(-1.0f64..1.0, 6),
            p in proptest::collection::vec(-0.5f64..0.5, 4),
            a0 in 0.5f64..2.0,
        ) {
            let dim = 4;
            let pl = SamplePlan::new(dim, vec![crate::jet::Point::new(p.clone()).unwrap()]);
            let at = &pl.sites()[0];
            let k = 2;
            let pairs: Vec<(usize, usize)> = (0..dim).flat_map(|i| (i + 1..dim).map(move |j| (i, j))).collect();
            let coef = |i: usize, j: usize| -> (Jet, Jet) {
                let (lo, hi, sg) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
                let q = pairs.iter().position(|&pq| pq == (lo, hi)).unwrap();
                let mut c = at.real(k, lin[4 * q]);
                for m in 0..3 {
                    c = c.add(&at.coord(m, k).scale(cr(lin[4 * q + 1 + m])));
                }
                (c.scale(cr(sg)), at.real(k, sg * fc[q]))
            };
            let em = JMat::from_fn(dim, dim, |i, j| if i == j { at.zero(k) } else { coef(i, j).0 });
            let fm = JMat::from_fn(dim, dim, |i, j| if i == j { at.zero(k) } else { coef(i, j).1 });
            let eps = Form::two_form(&em);
            let tw = TwistJet {
                x0: (0..dim).map(|i| at.coord((i + 1) % dim, k).add(&at.real(k, 0.3))).collect(),
                f: Form::two_form(&fm),
                a: at.coord(0, k).scale(cr(0.2)).add(&at.real(k, a0)),
            };
            let frame: Vec<Vec<Jet>> = (0..dim)
                .map(|i| (0..dim).map(|r| {
                    let v = if r == i { 1.0 } else { 0.0 };
                    at.real(k, v).add(&at.coord(r, k).scale(cr(0.1 * (i as f64 - r as f64))))
                }).collect())
                .collect();
            let fv = partners(frame.clone(), &eps);
            let full = crate::courant::twisted_exterior_derivative(&eps, &tw);
            for (x, y, z) in [(0, 1, 2), (0, 1, 3), (1, 2, 3)] {
                let lhs = full.eval(&[&frame[x], &frame[y], &frame[z]]).value();
                let rhs = crate::courant::fa_d_on_frame(&fv[x], &fv[y], &fv[z], &tw).value();
                prop_assert!((lhs - rhs).norm() < 1e-10, "{lhs} vs {rhs}");
            }
        }
    }
}
