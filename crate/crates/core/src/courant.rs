//! Courant bracket and its (F, a)-twisted variants.

use crate::error::{GeomError, Result};
use crate::field::ScalarField;
use crate::forms::{directional, grad, lie_bracket, lie_derivative_1form, Form, FormField};
use crate::jet::{At, Jet};
use crate::linalg::{cr, JMat};
use crate::report::{evaluate, Report, Residual, SamplePlan, Tolerance};
use crate::tangent::{GSec, SectionField, VectorField};

/// `[X+ξ, Y+η] = [X,Y] + 𝓛_X η − 𝓛_Y ξ − ½ d(η(X) − ξ(Y))`.
pub fn courant_bracket(u: &GSec, v: &GSec) -> GSec {
    let x = lie_bracket(&u.x, &v.x);
    let lx = lie_derivative_1form(&u.x, &v.xi);
    let ly = lie_derivative_1form(&v.x, &u.xi);
    let s = v.form_on(&u.x).sub(&u.form_on(&v.x));
    let ds = grad(&s);
    let xi = (0..u.dim())
        .map(|i| lx[i].sub(&ly[i]).sub(&ds[i].scale(cr(0.5))))
        .collect();
    GSec::new(x, xi)
}

/// Lie derivative of a section along a vector field:
/// `𝓛_X (Y+η) = [X, Y] + 𝓛_X η`.
pub fn lie_derivative_section(x: &[Jet], u: &GSec) -> GSec {
    GSec::new(lie_bracket(x, &u.x), lie_derivative_1form(x, &u.xi))
}

/// Lie derivative of an endomorphism of 𝕋M along a vector field, through its
/// action on the coordinate frame: `(𝓛_X A) e = 𝓛_X(A e) − A 𝓛_X e`.
pub fn lie_derivative_endo(at: &At, x: &[Jet], a: &JMat) -> JMat {
    let n = at.dim();
    let k = a.order().min(x.iter().map(|j| j.order()).min().unwrap_or(0));
    let cols: Vec<Vec<Jet>> = (0..2 * n)
        .map(|c| {
            let e = GSec::basis(at, k, c);
            let ae = GSec::from_stacked(a.column(c)).truncate(k);
            let lae = lie_derivative_section(x, &ae);
            let le = lie_derivative_section(x, &e);
            let ale = le.apply(&a.truncate(k - 1));
            lae.sub(&ale).stacked()
        })
        .collect();
    JMat::from_columns(&cols)
}

/// Twist data (X₀, F, a) as fields.
#[derive(Clone, Debug)]
pub struct TwistData {
    pub x0: VectorField,
    pub f: FormField,
    pub a: ScalarField,
}

/// Twist data evaluated at a site.
#[derive(Clone, Debug)]
pub struct TwistJet {
    pub x0: Vec<Jet>,
    pub f: Form,
    pub a: Jet,
}

impl TwistData {
    pub fn eval(&self, at: &At, order: usize) -> Result<TwistJet> {
        let a = self.a.eval_jet(at, order)?;
        if a.value().norm() < 1e-9 {
            return Err(GeomError::DivisionNearZero(a.value().norm()));
        }
        Ok(TwistJet {
            x0: self.x0.eval(at, order)?,
            f: self.f.eval(at, order)?,
            a,
        })
    }

    /// Trivial twist with F = 0, a = 1 along `x0`.
    pub fn trivial(x0: VectorField) -> TwistData {
        TwistData {
            x0,
            f: FormField::new("0", |at, k| Ok(Form::zero(at, k, 2))),
            a: ScalarField::constant(1.0),
        }
    }
}

impl TwistJet {
    fn f_ab(&self, x: &[Jet], y: &[Jet]) -> Jet {
        self.f.eval(&[x, y])
    }

    fn inv_a(&self) -> Jet {
        self.a.recip().expect("twist data keeps a away from zero")
    }
}

/// `[X, Y]^{(F,a)} = [X, Y] + F(X, Y)/a · X₀`.
pub fn fa_bracket(x: &[Jet], y: &[Jet], tw: &TwistJet) -> Vec<Jet> {
    let b = lie_bracket(x, y);
    let c = tw.f_ab(x, y).mul(&tw.inv_a());
    b.iter().zip(&tw.x0).map(|(bi, x0)| bi.add(&c.mul(x0))).collect()
}

/// Courant bracket corrected by the twist terms:
/// `[u,v] + F(X,Y)/a X₀ − η(X₀)/a i_X F + ξ(X₀)/a i_Y F`.
pub fn twisted_courant_bracket(u: &GSec, v: &GSec, tw: &TwistJet) -> GSec {
    let base = courant_bracket(u, v);
    let ia = tw.inv_a();
    let fxy = tw.f_ab(&u.x, &v.x).mul(&ia);
    let eta_x0 = v.form_on(&tw.x0).mul(&ia);
    let xi_x0 = u.form_on(&tw.x0).mul(&ia);
    let ixf = tw.f.interior(&u.x);
    let iyf = tw.f.interior(&v.x);
    let x = base
        .x
        .iter()
        .zip(&tw.x0)
        .map(|(b, x0)| b.add(&fxy.mul(x0)))
        .collect();
    let xi = (0..u.dim())
        .map(|i| {
            base.xi[i]
                .sub(&eta_x0.mul(ixf.get(&[i])))
                .add(&xi_x0.mul(iyf.get(&[i])))
        })
        .collect();
    GSec::new(x, xi)
}

/// `d^{(F,a)} α = dα − (1/a) F ∧ i_{X₀} α` for forms on the whole tangent bundle.
pub fn twisted_exterior_derivative(alpha: &Form, tw: &TwistJet) -> Form {
    let d = alpha.d();
    if alpha.degree() == 0 {
        return d;
    }
    let corr = tw.f.wedge(&alpha.interior(&tw.x0)).scale_jet(&tw.inv_a());
    let k = d.order().min(corr.order());
    d.truncate(k).sub(&corr.truncate(k))
}

/// `𝓛_X α − (1/a) (i_X F) ∧ i_{X₀} α`.
pub fn twisted_lie_derivative(x: &[Jet], alpha: &Form, tw: &TwistJet) -> Form {
    let l = alpha.lie_derivative(x);
    if alpha.degree() == 0 {
        return l;
    }
    let corr = tw
        .f
        .interior(x)
        .wedge(&alpha.interior(&tw.x0))
        .scale_jet(&tw.inv_a());
    let k = l.order().min(corr.order());
    l.truncate(k).sub(&corr.truncate(k))
}

/// A vector of a subbundle frame together with a covector partner: for a
/// frame of E = pr_T(L) the partner is the cotangent part of the section of
/// L, so that `ε(X, V) = ξ_X(V)`.
#[derive(Clone, Debug)]
pub struct FrameVec {
    pub x: Vec<Jet>,
    pub xi: Vec<Jet>,
}

impl FrameVec {
    pub fn from_section(u: &GSec) -> FrameVec {
        FrameVec {
            x: u.x.clone(),
            xi: u.xi.clone(),
        }
    }

    pub fn eps(&self, v: &[Jet]) -> Jet {
        crate::linalg::dot(&self.xi, v)
    }
}

/// `d^{(F,a)} ε (X, Y, Z)` by the frame formula
/// `X ε(Y,Z) + Z ε(X,Y) + Y ε(Z,X) + ε(Z,[X,Y]) + ε(X,[Y,Z]) + ε(Y,[Z,X])`,
/// with twisted brackets and `ε(A, ·) = ξ_A`.
pub fn fa_d_on_frame(x: &FrameVec, y: &FrameVec, z: &FrameVec, tw: &TwistJet) -> Jet {
    let t1 = directional(&x.x, &y.eps(&z.x));
    let t2 = directional(&z.x, &x.eps(&y.x));
    let t3 = directional(&y.x, &z.eps(&x.x));
    let bxy = fa_bracket(&x.x, &y.x, tw);
    let byz = fa_bracket(&y.x, &z.x, tw);
    let bzx = fa_bracket(&z.x, &x.x, tw);
    let t4 = z.eps(&bxy);
    let t5 = x.eps(&byz);
    let t6 = y.eps(&bzx);
    let k = t1.order().min(t4.order());
    [t1, t2, t3, t4, t5, t6]
        .iter()
        .map(|t| t.truncate(k))
        .reduce(|a, b| a.add(&b))
        .unwrap()
}

/// `(ε ∧ β)(X, Y, Z)` for a 1-form β and frame partners.
pub fn eps_wedge_one_form(x: &FrameVec, y: &FrameVec, z: &FrameVec, beta: &[Jet]) -> Jet {
    let b = |v: &[Jet]| crate::linalg::dot(beta, v);
    let t1 = x.eps(&y.x).mul(&b(&z.x));
    let t2 = y.eps(&z.x).mul(&b(&x.x));
    let t3 = z.eps(&x.x).mul(&b(&y.x));
    t1.add(&t2).add(&t3)
}

fn section_gap(a: &GSec, b: &GSec) -> (f64, f64) {
    let (a, b) = (a.value().stacked(), b.value().stacked());
    ((&a - &b).camax(), a.camax().max(b.camax()))
}

/// Residuals of the Courant algebra identities at one site, for sections
/// `u, v, w` and a function `f` given with jets of order ≥ 1: the Leibniz
/// rule `[u, fv] = f[u,v] + pr_T(u)(f)v − ⟨u,v⟩df`, the derivation rule for
/// `pr_T(u)⟨v,w⟩`, and `[X, Y+η] = 𝓛_X(Y+η) − d⟨X, Y+η⟩` with `X = pr_T(u)`.
pub fn courant_identity_residuals(u: &GSec, v: &GSec, w: &GSec, f: &Jet) -> Vec<Residual> {
    let uv = courant_bracket(u, v);
    let leibniz_lhs = courant_bracket(u, &v.scale_jet(f));
    let leibniz_rhs = uv
        .scale_jet(f)
        .add(&v.scale_jet(&directional(&u.x, f)))
        .sub(&GSec::form(grad(f)).scale_jet(&u.pairing(v)));
    let (r1, s1) = section_gap(&leibniz_lhs, &leibniz_rhs);

    let uw = courant_bracket(u, w);
    let d_uv = GSec::form(grad(&u.pairing(v)));
    let d_uw = GSec::form(grad(&u.pairing(w)));
    let lhs = directional(&u.x, &v.pairing(w)).value();
    let terms = [uv.pairing(w), v.pairing(&uw), d_uv.pairing(w), v.pairing(&d_uw)];
    let rhs = terms.iter().fold(cr(0.0), |s, t| s + t.value());
    let s2 = terms.iter().map(|t| t.value().norm()).fold(lhs.norm(), f64::max);

    let x = GSec::vector(u.x.clone());
    let lc_lhs = courant_bracket(&x, v);
    let lc_rhs = lie_derivative_section(&x.x, v).sub(&GSec::form(grad(&x.pairing(v))));
    let (r3, s3) = section_gap(&lc_lhs, &lc_rhs);
    vec![
        Residual::new("courant.courant1", "Eq (courant1)", r1, s1),
        Residual::new("courant.uvw", "Eq (uvw)", (lhs - rhs).norm(), s2),
        Residual::new("courant.L-C", "Eq (L-C)", r3, s3),
    ]
}

/// The Courant algebra identities for one triple of section fields and a
/// function over a sample plan.
pub fn check_courant_identities(
    u: &SectionField,
    v: &SectionField,
    w: &SectionField,
    f: &ScalarField,
    plan: &SamplePlan,
    tol: Tolerance,
) -> Report {
    let mut rep = Report::new(format!("Courant identities for ({}, {}, {}, {})", u.label(), v.label(), w.label(), f.label()));
    rep.points = plan.len();
    for r in evaluate(plan, tol, "courant.error", "Courant algebra", |at| {
        Ok(courant_identity_residuals(&u.eval(at, 2)?, &v.eval(at, 2)?, &w.eval(at, 2)?, &f.eval_jet(at, 2)?))
    }) {
        rep.push(r);
    }
    rep
}
