//! Conformal changes and elementary deformations of generalized almost
//! Hermitian pairs.

use nalgebra::DMatrix;

use crate::error::{GeomError, Result};
use crate::field::ScalarField;
use crate::jet::{At, Jet, C64};
use crate::linalg::{cr, membership_residual, numerical_rank, JMat, I};
use crate::report::{evaluate, Report, Residual, SamplePlan, Tolerance};
use crate::structures::{one_zero_bundle, projector, GenComplexStructure, GenHermitianPair, PairJet};
use crate::tangent::{pairing_matrix, Field, GSec, GVector, VectorField};

/// `(τ_h 𝒥₁ τ_h⁻¹, τ_h 𝒥₂ τ_h⁻¹)`, validated at `sites`.
pub fn conformal_change_pair(
    p: &GenHermitianPair,
    h: &ScalarField,
    sites: &[At],
) -> Result<GenHermitianPair> {
    for at in sites {
        if h.value(at)?.norm() < 1e-12 {
            return Err(GeomError::ZeroConformalFactor);
        }
    }
    Ok(GenHermitianPair {
        j1: p.j1.conformal(h),
        j2: p.j2.conformal(h),
    })
}

/// The frame `S = [X₀, 𝒥X₀, 𝒥₂X₀, 𝒥₃X₀]` of 𝒮 and its Gram data at a site.
#[derive(Clone, Debug)]
pub struct FrameJet {
    /// 2N×4 column matrix.
    pub s: JMat,
    /// `(SᵀQS)⁻¹ SᵀQ`: coordinates along S of the 𝒮-component.
    pub coords: JMat,
    /// Projection onto 𝒮 along 𝒮^⊥.
    pub proj: JMat,
}

impl FrameJet {
    pub fn new(pj: &PairJet, x0: &[Jet]) -> Result<FrameJet> {
        let n = x0.len();
        let k = pj.j1.order().min(x0[0].order());
        let layout = x0[0].layout().clone();
        let zero = Jet::constant(&layout, k, C64::new(0.0, 0.0));
        let mut u: Vec<Jet> = x0.iter().map(|j| j.truncate(k)).collect();
        u.extend(std::iter::repeat_n(zero, n));
        let cols = vec![
            u.clone(),
            pj.j1.truncate(k).matvec(&u),
            pj.j2.truncate(k).matvec(&u),
            pj.j3.truncate(k).matvec(&u),
        ];
        let s = JMat::from_columns(&cols);
        if numerical_rank(&s.values()).map_err(|_| GeomError::DegenerateFrame)? < 4 {
            return Err(GeomError::DegenerateFrame);
        }
        let q = q_jmat(&layout, n, k);
        let stq = s.transpose().matmul(&q);
        let gram = stq.matmul(&s);
        if gram.values().determinant().norm() < 1e-14 {
            return Err(GeomError::DegenerateFrame);
        }
        let coords = gram.inverse()?.matmul(&stq);
        let proj = s.matmul(&coords);
        Ok(FrameJet { s, coords, proj })
    }

    pub fn column(&self, c: usize) -> Vec<Jet> {
        self.s.column(c)
    }
}

fn q_jmat(layout: &std::sync::Arc<crate::jet::Layout>, n: usize, k: usize) -> JMat {
    let q = pairing_matrix(n);
    JMat::from_fn(2 * n, 2 * n, |r, c| Jet::constant(layout, k, q[(r, c)]))
}

fn identity(layout: &std::sync::Arc<crate::jet::Layout>, m: usize, k: usize) -> JMat {
    JMat::from_fn(m, m, |r, c| {
        Jet::constant(layout, k, cr(if r == c { 1.0 } else { 0.0 }))
    })
}

/// `τ = Id on 𝒮^⊥`, `τ_f^𝒮` on 𝒮.
pub fn tau_matrix(fr: &FrameJet, f: &Jet) -> Result<JMat> {
    let k = fr.s.order().min(f.order());
    let layout = f.layout().clone();
    let f = f.truncate(k);
    let fi = f.recip()?;
    let one = Jet::constant(&layout, k, cr(1.0));
    let d = [f.sub(&one), f.sub(&one), fi.sub(&one), fi.sub(&one)];
    let sd = JMat::from_fn(fr.s.rows(), 4, |r, c| fr.s.get(r, c).truncate(k).mul(&d[c]));
    let m = fr.s.rows();
    Ok(identity(&layout, m, k).add(&sd.matmul(&fr.coords.truncate(k))))
}

/// `𝒥₂′` by conjugation: `τ 𝒥₂ τ⁻¹`.
pub fn j2_prime_conjugation(pj: &PairJet, fr: &FrameJet, f: &Jet) -> Result<JMat> {
    let t = tau_matrix(fr, f)?;
    let k = t.order();
    Ok(t.matmul(&pj.j2.truncate(k)).matmul(&t.inverse()?))
}

/// `𝒥₂′` from the explicit action on the frame of 𝒮 and `𝒥₂` on 𝒮^⊥.
pub fn j2_prime_table(pj: &PairJet, fr: &FrameJet, f: &Jet) -> Result<JMat> {
    let k = fr.s.order().min(f.order());
    let layout = f.layout().clone();
    let f2 = f.truncate(k).mul(&f.truncate(k));
    let f2i = f2.recip()?;
    let col = |c: usize, s: &Jet| -> Vec<Jet> {
        fr.s.column(c).iter().map(|e| e.truncate(k).mul(s)).collect()
    };
    let img = JMat::from_columns(&[col(2, &f2i), col(3, &f2i), col(0, &f2.neg()), col(1, &f2.neg())]);
    let j2 = pj.j2.truncate(k);
    let m = j2.rows();
    let perp = identity(&layout, m, k).sub(&fr.proj.truncate(k));
    Ok(j2.matmul(&perp).add(&img.matmul(&fr.coords.truncate(k))))
}

/// Elementary deformation of a pair by `X₀` and `f`. The second structure
/// is computed by conjugation; at `sites` it is compared to the explicit
/// table through first order.
pub fn elementary_deformation(
    p: &GenHermitianPair,
    x0: &VectorField,
    f: &ScalarField,
    sites: &[At],
) -> Result<GenHermitianPair> {
    for at in sites {
        if f.value(at)?.norm() < 1e-12 {
            return Err(GeomError::DivisionNearZero(f.value(at)?.norm()));
        }
        let pj = p.eval(at, 1)?;
        let fr = FrameJet::new(&pj, &x0.eval(at, 1)?)?;
        let fj = f.eval_jet(at, 1)?;
        let a = j2_prime_conjugation(&pj, &fr, &fj)?;
        let b = j2_prime_table(&pj, &fr, &fj)?;
        let diff = a.sub(&b).max_abs_jet();
        let scale = a.max_abs_jet().max(1.0);
        if diff > 1e-9 * scale {
            return Err(GeomError::PathDisagreement(format!(
                "J2' by conjugation and by table differ by {diff:.3e} at {:?}",
                at.point.0
            )));
        }
    }
    let pair = p.clone();
    let x0 = x0.clone();
    let f = f.clone();
    let j2 = Field::new(
        format!("{}'[{},{}]", p.j2.j.label(), x0.label(), f.label()),
        move |at: &At, k| {
            let pj = pair.eval(at, k)?;
            let fr = FrameJet::new(&pj, &x0.eval(at, k)?)?;
            j2_prime_conjugation(&pj, &fr, &f.eval_jet(at, k)?)
        },
    );
    Ok(GenHermitianPair {
        j1: p.j1.clone(),
        j2: GenComplexStructure::new(j2),
    })
}

/// The sections `v_f, v_if, v_1, v_i` as jets.
#[derive(Clone, Debug)]
pub struct CanonicalSections {
    pub v_f: GSec,
    pub v_if: GSec,
    pub v_1: GSec,
    pub v_i: GSec,
}

/// Values of the canonical vectors at a point.
#[derive(Clone, Debug)]
pub struct CanonicalVectors {
    pub v_f: GVector,
    pub v_if: GVector,
    pub v_1: GVector,
    pub v_i: GVector,
}

pub fn canonical_sections(fr: &FrameJet, f: &Jet) -> Result<CanonicalSections> {
    let k = fr.s.order().min(f.order());
    let col = |c: usize| GSec::from_stacked(fr.column(c)).truncate(k);
    let (x0, jx0, j2x0, j3x0) = (col(0), col(1), col(2), col(3));
    let head = x0.sub(&jx0.scale(I));
    let tail = j3x0.add(&j2x0.scale(I));
    let f2i = f.truncate(k).mul(&f.truncate(k)).recip()?;
    let tf = tail.scale_jet(&f2i);
    Ok(CanonicalSections {
        v_f: head.sub(&tf),
        v_if: head.add(&tf),
        v_1: head.sub(&tail),
        v_i: head.add(&tail),
    })
}

pub fn canonical_vectors(
    p: &GenHermitianPair,
    x0: &VectorField,
    f: &ScalarField,
    at: &At,
) -> Result<CanonicalVectors> {
    let pj = p.eval(at, 0)?;
    let fr = FrameJet::new(&pj, &x0.eval(at, 0)?)?;
    let cs = canonical_sections(&fr, &f.eval_jet(at, 0)?)?;
    Ok(CanonicalVectors {
        v_f: cs.v_f.value(),
        v_if: cs.v_if.value(),
        v_1: cs.v_1.value(),
        v_i: cs.v_i.value(),
    })
}

fn rank(m: &DMatrix<C64>) -> Result<usize> {
    numerical_rank(m)
}

fn top(m: &DMatrix<C64>, n: usize) -> DMatrix<C64> {
    m.rows(0, n).into_owned()
}

fn hstack(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}

fn rank_gap(a: usize, b: usize) -> f64 {
    (a as f64 - b as f64).abs()
}

/// Decomposition identities for `L₁ ∩ L₂′` and `L₁ ∩ L̄₂′`, rank preservation,
/// the isometry property of τ and the metric table of the deformed pair.
pub fn check_deformation_decompositions(
    p: &GenHermitianPair,
    x0: &VectorField,
    f: &ScalarField,
    plan: &SamplePlan,
    tol: Tolerance,
) -> Report {
    let mut rep = Report::new(format!(
        "elementary deformation by ({}, {})",
        x0.label(),
        f.label()
    ));
    rep.points = plan.len();
    let recs = evaluate(plan, tol, "deform.error", "elementary deformation", |at| {
        let n = at.dim();
        let pj = p.eval(at, 0)?;
        let fr = FrameJet::new(&pj, &x0.eval(at, 0)?)?;
        let fj = f.eval_jet(at, 0)?;
        let j2p = j2_prime_table(&pj, &fr, &fj)?;
        let j2c = j2_prime_conjugation(&pj, &fr, &fj)?;
        let cs = canonical_sections(&fr, &fj)?;
        let vf = cs.v_f.value().stacked();
        let vif = cs.v_if.value().stacked();
        let v1 = cs.v_1.value().stacked();
        let vi = cs.v_i.value().stacked();

        let p1 = projector(&pj.j1, false).values();
        let p2 = projector(&pj.j2, false).values();
        let p2b = projector(&pj.j2, true).values();
        let p2p = projector(&j2p, false).values();
        let p2pb = projector(&j2p, true).values();
        let id = DMatrix::<C64>::identity(2 * n, 2 * n);
        let perp = &id - fr.proj.values();

        let l12 = &p1 * &p2;
        let l12b = &p1 * &p2b;
        let l12p = &p1 * &p2p;
        let l12pb = &p1 * &p2pb;
        let l12s = &l12 * &perp;
        let l12bs = &l12b * &perp;

        let r_l12p = rank(&l12p)?;
        let r_l12pb = rank(&l12pb)?;
        let r_l12s = rank(&l12s)?;
        let r_l12bs = rank(&l12bs)?;
        let dim_gap = rank_gap(r_l12p, 1 + r_l12s).max(rank_gap(r_l12pb, 1 + r_l12bs));

        // membership of the canonical vectors
        let mem = membership_residual(&l12p, &vf)?
            .max(membership_residual(&l12pb, &vif)?)
            .max(membership_residual(&l12, &v1)?)
            .max(membership_residual(&l12b, &vi)?);
        let vscale = vf.amax_abs();

        // span equality: each column of L1∩L2' lies in span{v_f} + L1∩L2∩S⊥
        let sum_p = hstack(&DMatrix::from_columns(std::slice::from_ref(&vf)), &l12s);
        let sum_pb = hstack(&DMatrix::from_columns(std::slice::from_ref(&vif)), &l12bs);
        let sum_1 = hstack(&DMatrix::from_columns(std::slice::from_ref(&v1)), &l12s);
        let sum_i = hstack(&DMatrix::from_columns(std::slice::from_ref(&vi)), &l12bs);
        let mut span_res: f64 = 0.0;
        let mut span1_res: f64 = 0.0;
        for c in 0..2 * n {
            span_res = span_res
                .max(membership_residual(&sum_p, &l12p.column(c).into_owned())?)
                .max(membership_residual(&sum_pb, &l12pb.column(c).into_owned())?);
            span1_res = span1_res
                .max(membership_residual(&sum_1, &l12.column(c).into_owned())?)
                .max(membership_residual(&sum_i, &l12b.column(c).into_owned())?);
        }
        let span1_dim = rank_gap(rank(&l12)?, 1 + r_l12s).max(rank_gap(rank(&l12b)?, 1 + r_l12bs));

        // directness of the tangent projections
        let t_s = rank(&top(&l12s, n))?;
        let t_bs = rank(&top(&l12bs, n))?;
        let t_sum = rank(&top(&sum_p, n))?;
        let t_sumb = rank(&top(&sum_pb, n))?;
        let t_p = rank(&top(&l12p, n))?;
        let t_pb = rank(&top(&l12pb, n))?;
        let direct = rank_gap(t_sum, 1 + t_s)
            .max(rank_gap(t_sumb, 1 + t_bs))
            .max(rank_gap(t_p, t_sum))
            .max(rank_gap(t_pb, t_sumb));

        // rank preservation
        let preserve = rank_gap(rank(&l12)?, r_l12p)
            .max(rank_gap(rank(&l12b)?, r_l12pb))
            .max(rank_gap(rank(&top(&l12, n))?, t_p))
            .max(rank_gap(rank(&top(&l12b, n))?, t_pb));

        // τ isometry, commutes with 𝒥
        let t = tau_matrix(&fr, &fj)?.values();
        let q = pairing_matrix(n);
        let j1 = pj.j1.values();
        let iso = (t.transpose() * &q * &t - &q).camax();
        let comm = (&t * &j1 - &j1 * &t).camax();

        // 𝒮^⊥ for ⟨·,·⟩ is also G-orthogonal to 𝒮
        let gm = pj.gend.values().transpose() * &q;
        let s = fr.s.values();
        let gperp = (s.transpose() * &gm * &perp).camax();

        // metric table of G' = (τ⁻¹)*G
        let ti = t.clone().try_inverse().ok_or(GeomError::DegenerateFrame)?;
        let gp = ti.transpose() * &gm * &ti;
        let gxx = (s.column(0).transpose() * &gm * s.column(0))[(0, 0)];
        let f2 = fj.value() * fj.value();
        let gs = s.transpose() * &gp * &s;
        let expect = [gxx / f2, gxx / f2, gxx * f2, gxx * f2];
        let mut table: f64 = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let e = if a == b { expect[a] } else { cr(0.0) };
                table = table.max((gs[(a, b)] - e).norm());
            }
        }
        // G' from the deformed structures agrees with the pull-back
        let gend_p = -(&j1 * j2c.values());
        let gp2 = gend_p.transpose() * &q;
        let gp_agree = (&gp - &gp2).camax();

        // ε₂′(pr_T v_f, X) = 2⟨v_f, X⟩ on E₂′
        let b2 = one_zero_bundle(
            &GenComplexStructure::new(Field::new("J2'", {
                let m = j2p.clone();
                move |_: &At, _| Ok(m.clone())
            })),
            at,
        )?;
        let mut glue: f64 = 0.0;
        let vf_t = vf.rows(0, n).into_owned();
        let vf_c = vf.rows(n, n).into_owned();
        for c in 0..b2.e.ncols() {
            let x = b2.e.column(c).into_owned();
            let lhs = b2.eps(&vf_t, &x);
            glue = glue.max((lhs - vf_c.dot(&x)).norm());
        }

        let j2scale = j2p.max_abs_value();
        Ok(vec![
            Residual::new("deform.paths", "Eq (j2-prime)", (j2p.values() - j2c.values()).camax(), j2scale),
            Residual::new("deform.dims", "Eq (hol-sp)", dim_gap, 0.0),
            Residual::new("deform.canonical-membership", "Eq (v-f)", mem, vscale),
            Residual::new("deform.spans", "Eq (hol-sp)", span_res, vscale.max(1.0)),
            Residual::new("deform.undeformed-spans", "Eq (hol-sp-1)", span1_res.max(span1_dim), vscale.max(1.0)),
            Residual::new("deform.direct", "Eq (dec-direct)", direct, 0.0),
            Residual::new("deform.rank-preserved", "elementary deformations preserve ranks", preserve, 0.0),
            Residual::new("deform.tau-isometry", "Lemma clear", iso.max(comm), t.camax()),
            Residual::new("deform.perp-coincide", "S-perp for G and <,> coincide", gperp, gm.camax()),
            Residual::new("deform.metric-table", "G'(J2 X0, J2 X0) = f^2 G(X0, X0)", table, gxx.norm() * f2.norm().max(1.0)),
            Residual::new("deform.metric-agree", "G' = (tau^-1)^* G", gp_agree, gp.camax()),
            Residual::new("deform.eps-glue", "eps2'(pr_T v_f, X) = 2<v_f, X>", glue, vscale),
        ])
    });
    for r in recs {
        rep.push(r);
    }
    rep
}

trait AmaxAbs {
    fn amax_abs(&self) -> f64;
}

impl AmaxAbs for nalgebra::DVector<C64> {
    fn amax_abs(&self) -> f64 {
        self.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `𝒥₂′` evaluated through the pair's own field, for callers holding jets.
pub fn deformed_pair_jet(pj: &PairJet, x0: &[Jet], f: &Jet) -> Result<PairJet> {
    let fr = FrameJet::new(pj, x0)?;
    let j2 = j2_prime_conjugation(pj, &fr, f)?;
    let k = j2.order();
    let j1 = pj.j1.truncate(k);
    let j3 = j1.matmul(&j2);
    Ok(PairJet {
        gend: j3.neg(),
        j1,
        j2,
        j3,
    })
}
