//! Generalized (almost) complex and Hermitian structures.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::courant::{courant_bracket, fa_d_on_frame, FrameVec, TwistJet};
use crate::error::{GeomError, Result};
use crate::forms::{lie_bracket, Form, FormField};
use crate::jet::{At, Jet, C64};
use crate::linalg::{
    cr, cz, frame_from_projector, lstsq, membership_residual, numerical_rank, orth_basis,
    select_independent, values_matrix, vnorm_inf, vvalues, JMat, I,
};
use crate::report::{evaluate, Report, Residual, SamplePlan, Tolerance};
use crate::tangent::{b_field_matrix, conformal_matrix, pairing_matrix, EndoField, Field, GSec, GVector};

/// Field of endomorphisms of TM (N×N), e.g. an almost complex structure.
pub type TangentEndoField = Field<JMat>;

#[derive(Clone, Debug)]
pub struct GenComplexStructure {
    pub j: EndoField,
}

fn identity_like(m: &JMat) -> JMat {
    let layout = m.get(0, 0).layout().clone();
    let k = m.order();
    let n = m.rows();
    JMat::from_fn(n, n, |r, c| {
        Jet::constant(&layout, k, if r == c { cr(1.0) } else { cz() })
    })
}

fn zeros_like(m: &JMat) -> JMat {
    m.map(|j| j.scale(cz()))
}

/// `[[J, 0], [0, −Jᵀ]]`.
pub fn complex_block(j: &JMat) -> JMat {
    let z = zeros_like(j);
    JMat::from_blocks(j, &z, &z, &j.transpose().neg())
}

/// `[[0, −W⁻¹], [W, 0]]` for the map `W: X ↦ i_X ω`.
pub fn symplectic_block(omega: &Form) -> Result<JMat> {
    let w = omega.map_matrix();
    let det = w.values().determinant();
    if det.norm() < 1e-12 {
        return Err(GeomError::DegenerateForm(det.norm()));
    }
    let winv = w.inverse()?;
    let z = zeros_like(&w);
    Ok(JMat::from_blocks(&z, &winv.neg(), &w, &z))
}

impl GenComplexStructure {
    pub fn new(j: EndoField) -> GenComplexStructure {
        GenComplexStructure { j }
    }

    /// `𝒥_J` from an almost complex structure, validated at `sites`.
    pub fn from_complex(jf: &TangentEndoField, sites: &[At]) -> Result<GenComplexStructure> {
        for at in sites {
            let j = jf.eval(at, 0)?.values();
            let n = j.nrows();
            let r = (&j * &j + DMatrix::<C64>::identity(n, n)).camax();
            if r > 1e-10 {
                return Err(GeomError::NotAlmostComplex(r));
            }
        }
        let jf = jf.clone();
        Ok(GenComplexStructure::new(Field::new(
            format!("J_{}", jf.label()),
            move |at, k| Ok(complex_block(&jf.eval(at, k)?)),
        )))
    }

    /// `𝒥_ω` from a non-degenerate 2-form, validated at `sites`.
    pub fn from_symplectic(omega: &FormField, sites: &[At]) -> Result<GenComplexStructure> {
        for at in sites {
            symplectic_block(&omega.eval(at, 0)?)?;
        }
        let om = omega.clone();
        Ok(GenComplexStructure::new(Field::new(
            format!("J_{}", om.label()),
            move |at, k| symplectic_block(&om.eval(at, k)?),
        )))
    }

    /// `𝒥_{J,σ} = [[J, Π], [0, −J*]]`, with `Π` given as the matrix of the map
    /// T*M → TM. Requires `J Π = Π Jᵀ` at `sites`.
    pub fn from_poisson_complex(
        jf: &TangentEndoField,
        pi: &TangentEndoField,
        sites: &[At],
    ) -> Result<GenComplexStructure> {
        for at in sites {
            let j = jf.eval(at, 0)?.values();
            let p = pi.eval(at, 0)?.values();
            let r = (&j * &p - &p * j.transpose()).camax();
            if r > 1e-10 {
                return Err(GeomError::IncompatibleBivector(r));
            }
        }
        let base = GenComplexStructure::from_complex(jf, sites)?;
        let pi = pi.clone();
        Ok(GenComplexStructure::new(Field::new(
            format!("J_{}_sigma", jf.label()),
            move |at, k| {
                let m = base.j.eval(at, k)?;
                let p = pi.eval(at, k)?;
                let n = p.rows();
                let mut out = m;
                for r in 0..n {
                    for c in 0..n {
                        out.set(r, n + c, p.get(r, c).clone());
                    }
                }
                Ok(out)
            },
        )))
    }

    /// `exp(B) 𝒥 exp(−B)`.
    pub fn b_transform(&self, b: &FormField) -> GenComplexStructure {
        let j = self.j.clone();
        let b = b.clone();
        GenComplexStructure::new(Field::new(
            format!("exp({}){}", b.label(), j.label()),
            move |at, k| {
                let m = j.eval(at, k)?;
                let bm = b.eval(at, k)?.matrix();
                let e = b_field_matrix(&bm);
                let einv = b_field_matrix(&bm.neg());
                Ok(e.matmul(&m).matmul(&einv))
            },
        ))
    }

    /// `τ_h 𝒥 τ_h⁻¹`.
    pub fn conformal(&self, h: &crate::field::ScalarField) -> GenComplexStructure {
        let j = self.j.clone();
        let h = h.clone();
        GenComplexStructure::new(Field::new(
            format!("tau_{}({})", h.label(), j.label()),
            move |at, k| {
                let m = j.eval(at, k)?;
                let hj = h.eval_jet(at, k)?;
                let n = at.dim();
                let t = conformal_matrix(&hj, n)?;
                let tinv = conformal_matrix(&hj.recip()?, n)?;
                Ok(t.matmul(&m).matmul(&tinv))
            },
        ))
    }

    /// Residuals of `𝒥² = −Id` and of pairing skewness at a site.
    pub fn invariant_residuals(&self, at: &At) -> Result<(f64, f64)> {
        let m = self.j.eval(at, 0)?.values();
        let n2 = m.nrows();
        let sq = (&m * &m + DMatrix::<C64>::identity(n2, n2)).camax();
        let q = pairing_matrix(n2 / 2);
        let skew = (m.transpose() * &q + &q * &m).camax();
        Ok((sq, skew))
    }
}

/// `½(I − i𝒥)` (projector onto L) or, with `conj`, `½(I + i𝒥)`.
pub fn projector(j: &JMat, conj: bool) -> JMat {
    let s = if conj { I } else { -I };
    identity_like(j).add(&j.scale(s)).scale(cr(0.5))
}

/// Smooth sections spanning the image of a projector field.
pub fn frame_sections(p: &JMat) -> Result<Vec<GSec>> {
    Ok(frame_from_projector(p)?
        .into_iter()
        .map(GSec::from_stacked)
        .collect())
}

/// Frame of `pr_T` of the span of `secs`: a subset of the sections whose
/// tangent parts are independent, kept with their cotangent partners.
pub fn tangent_frame(secs: &[GSec]) -> Result<Vec<FrameVec>> {
    if secs.is_empty() {
        return Ok(Vec::new());
    }
    let xs: Vec<Vec<Jet>> = secs.iter().map(|s| s.x.clone()).collect();
    let rank = numerical_rank(&values_matrix(&xs, xs[0].len()))?;
    if rank == 0 {
        return Ok(Vec::new());
    }
    let idx = select_independent(&xs, rank)?;
    Ok(idx.into_iter().map(|k| FrameVec::from_section(&secs[k])).collect())
}

/// Column matrix of section values.
pub fn section_values(secs: &[GSec], n: usize) -> DMatrix<C64> {
    if secs.is_empty() {
        return DMatrix::zeros(2 * n, 0);
    }
    DMatrix::from_columns(&secs.iter().map(|s| s.value().stacked()).collect::<Vec<_>>())
}

/// Column matrix of tangent values of a frame.
pub fn tangent_values(f: &[FrameVec], n: usize) -> DMatrix<C64> {
    if f.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    DMatrix::from_columns(&f.iter().map(|v| vvalues(&v.x)).collect::<Vec<_>>())
}

/// The (1,0)-bundle `L = L(E, ε)` of a structure at one point.
#[derive(Clone, Debug)]
pub struct OneZeroBundle {
    /// Orthonormal basis of L (columns `[X; ξ]`).
    pub l: DMatrix<C64>,
    /// Orthonormal basis of E = pr_T L.
    pub e: DMatrix<C64>,
    pub type_: usize,
}

impl OneZeroBundle {
    pub fn dim(&self) -> usize {
        self.l.nrows() / 2
    }

    /// A section `X + ξ ∈ L` over the given `X ∈ E`.
    fn lift(&self, x: &DVector<C64>) -> DVector<C64> {
        let n = self.dim();
        let c = lstsq(&self.l.rows(0, n).into_owned(), x);
        self.l.rows(n, n) * c
    }

    /// `ε(X, Y) = ξ(Y)` where `X + ξ ∈ L`.
    pub fn eps(&self, x: &DVector<C64>, y: &DVector<C64>) -> C64 {
        self.lift(x).dot(y)
    }

    /// Largest deviation of ε from the 2-form with component matrix
    /// `form`, over an orthonormal basis of E.
    pub fn eps_residual(&self, form: &DMatrix<C64>) -> f64 {
        let k = self.e.ncols();
        let mut worst: f64 = 0.0;
        for a in 0..k {
            for b in 0..k {
                let ea = self.e.column(a).into_owned();
                let eb = self.e.column(b).into_owned();
                let expect = (ea.transpose() * form * &eb)[(0, 0)];
                worst = worst.max((self.eps(&ea, &eb) - expect).norm());
            }
        }
        worst
    }

    /// ε as a full component matrix, when E is the whole complexified
    /// tangent space.
    pub fn eps_matrix(&self) -> Option<DMatrix<C64>> {
        let n = self.dim();
        if self.type_ != 0 {
            return None;
        }
        let x = self.l.rows(0, n).into_owned();
        let xi = self.l.rows(n, n).into_owned();
        let map = xi * x.try_inverse()?;
        Some(map.transpose())
    }

    /// Isotropy residual `max |⟨u_a, u_b⟩|` over the basis.
    pub fn isotropy_residual(&self) -> f64 {
        let q = pairing_matrix(self.dim());
        (self.l.transpose() * q * &self.l).camax()
    }

    /// Residual of `dim(L + L̄) = 2N`.
    pub fn spans_with_conjugate(&self) -> Result<bool> {
        let n = self.dim();
        let mut both = DMatrix::zeros(2 * n, 2 * n);
        both.view_mut((0, 0), (2 * n, n)).copy_from(&self.l);
        both.view_mut((0, n), (2 * n, n))
            .copy_from(&self.l.map(|z| z.conj()));
        Ok(numerical_rank(&both)? == 2 * n)
    }
}

/// Extract the (1,0)-bundle at a site.
pub fn one_zero_bundle(s: &GenComplexStructure, at: &At) -> Result<OneZeroBundle> {
    let n = at.dim();
    let m = s.j.eval(at, 0)?.values();
    let p = (DMatrix::<C64>::identity(2 * n, 2 * n) - m * I) * cr(0.5);
    let rank = numerical_rank(&p)?;
    if rank != n {
        return Err(GeomError::RankDeficiency {
            expected: n,
            found: rank,
        });
    }
    let l = orth_basis(&p)?;
    let e = orth_basis(&l.rows(0, n).into_owned())?;
    let type_ = n - e.ncols();
    Ok(OneZeroBundle { l, e, type_ })
}

/// `N(u, v) = [𝒥u,𝒥v] − [u,v] − 𝒥([𝒥u,v] + [u,𝒥v])`.
pub fn nijenhuis(j: &JMat, u: &GSec, v: &GSec) -> GSec {
    let ju = u.apply(j);
    let jv = v.apply(j);
    let a = courant_bracket(&ju, &jv);
    let b = courant_bracket(u, v);
    let c = courant_bracket(&ju, v).add(&courant_bracket(u, &jv));
    let k = a.order();
    a.sub(&b).sub(&c.apply(&j.truncate(k)))
}

/// Classical Nijenhuis tensor of an endomorphism of TM on vector fields.
pub fn nijenhuis_tm(j: &JMat, x: &[Jet], y: &[Jet]) -> Vec<Jet> {
    let jx = j.matvec(x);
    let jy = j.matvec(y);
    let a = lie_bracket(&jx, &jy);
    let b = lie_bracket(x, y);
    let c: Vec<Jet> = lie_bracket(&jx, y)
        .iter()
        .zip(lie_bracket(x, &jy))
        .map(|(p, q)| p.add(&q))
        .collect();
    let k = a[0].order();
    let jc = j.truncate(k).matvec(&c);
    (0..a.len()).map(|i| a[i].sub(&b[i]).sub(&jc[i])).collect()
}

fn gsec_norm(s: &GSec) -> f64 {
    vnorm_inf(&s.x).max(vnorm_inf(&s.xi))
}

/// Maximal membership residual of Courant brackets of frame pairs in the span
/// of the frame, with the largest bracket magnitude as scale.
pub fn bracket_closure(frame: &[GSec], n: usize) -> Result<(f64, f64)> {
    let span = section_values(frame, n);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for a in 0..frame.len() {
        for b in a + 1..frame.len() {
            let br = courant_bracket(&frame[a], &frame[b]);
            let v = br.value().stacked();
            worst = worst.max(membership_residual(&span, &v)?);
            scale = scale.max(v.camax());
        }
    }
    Ok((worst, scale))
}

/// Involutivity residual of a tangent frame under the (twisted) bracket.
pub fn frame_involutivity(frame: &[FrameVec], tw: &TwistJet, n: usize) -> Result<(f64, f64)> {
    let span = tangent_values(frame, n);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for a in 0..frame.len() {
        for b in a + 1..frame.len() {
            let br = crate::courant::fa_bracket(&frame[a].x, &frame[b].x, tw);
            let v = vvalues(&br);
            worst = worst.max(membership_residual(&span, &v)?);
            scale = scale.max(v.camax());
        }
    }
    Ok((worst, scale))
}

/// Max of `|d^{(F,a)}ε − rhs|` over frame triples, where `rhs` is supplied per
/// triple (zero for closedness).
pub fn frame_closedness(
    frame: &[FrameVec],
    tw: &TwistJet,
    rhs: impl Fn(&FrameVec, &FrameVec, &FrameVec) -> Jet,
) -> (f64, f64) {
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let m = frame.len();
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                let lhs = fa_d_on_frame(&frame[a], &frame[b], &frame[c], tw).value();
                let r = rhs(&frame[a], &frame[b], &frame[c]).value();
                worst = worst.max((lhs - r).norm());
                scale = scale.max(lhs.norm()).max(r.norm());
            }
        }
    }
    (worst, scale)
}

impl TwistJet {
    /// The untwisted operators: F = 0, a = 1, X₀ = 0.
    pub fn zero(at: &At, order: usize) -> TwistJet {
        TwistJet {
            x0: vec![at.zero(order); at.dim()],
            f: Form::zero(at, order, 2),
            a: at.real(order, 1.0),
        }
    }
}

fn type_at(s: &GenComplexStructure, at: &At) -> Result<usize> {
    Ok(one_zero_bundle(s, at)?.type_)
}

/// Refuse verdicts when the type changes across samples.
pub fn check_constant_type(s: &GenComplexStructure, plan: &SamplePlan) -> Result<usize> {
    use rayon::prelude::*;
    let types: Vec<Result<usize>> = plan.sites().par_iter().map(|at| type_at(s, at)).collect();
    let mut seen: Option<usize> = None;
    for (t, p) in types.into_iter().zip(&plan.points) {
        let t = t?;
        match seen {
            None => seen = Some(t),
            Some(s0) if s0 != t => {
                return Err(GeomError::MixedType(format!(
                    "type {s0} and type {t} (at {:?})",
                    p.0
                )))
            }
            _ => {}
        }
    }
    Ok(seen.unwrap_or(0))
}

/// Integrability of a generalized almost complex structure by two criteria:
/// the Nijenhuis tensor on the coordinate frame, and the (E, ε) criterion.
pub fn check_integrable(s: &GenComplexStructure, plan: &SamplePlan, tol: Tolerance) -> Report {
    let mut rep = Report::new(format!("integrability of {}", s.j.label()));
    rep.points = plan.len();
    if let Err(e) = check_constant_type(s, plan) {
        rep.push_flag("integrable.type", "constant type", false, Some(e.to_string()));
        return rep;
    }
    let recs = evaluate(plan, tol, "integrable.error", "N_J = 0", |at| {
        let n = at.dim();
        let j = s.j.eval(at, 1)?;
        let mut worst: f64 = 0.0;
        for a in 0..2 * n {
            for b in a + 1..2 * n {
                let nij = nijenhuis(&j, &GSec::basis(at, 1, a), &GSec::basis(at, 1, b));
                worst = worst.max(gsec_norm(&nij));
            }
        }
        let scale = j.max_abs_value();
        let secs = frame_sections(&projector(&j, false))?;
        let e = tangent_frame(&secs)?;
        let tw = TwistJet::zero(at, 1);
        let (inv, inv_scale) = frame_involutivity(&e, &tw, n)?;
        let (cl, cl_scale) = frame_closedness(&e, &tw, |_, _, _| at.zero(0));
        Ok(vec![
            Residual::new("integrable.nijenhuis", "Eq (def-nij)", worst, scale),
            Residual::new("integrable.E-involutive", "E involutive", inv, inv_scale),
            Residual::new("integrable.d-eps", "d eps = 0 on E", cl, cl_scale),
        ])
    });
    for r in recs {
        rep.push(r);
    }
    let a = rep.group_pass("integrable.nijenhuis");
    let b = rep.group_pass("integrable.E-involutive") && rep.group_pass("integrable.d-eps");
    rep.push_agreement("integrable.agreement", "N_J = 0 <=> L(E,eps) closed", ("Nijenhuis", a), ("(E, eps)", b));
    rep
}

/// A commuting pair (𝒥₁, 𝒥₂) with positive metric.
#[derive(Clone, Debug)]
pub struct GenHermitianPair {
    pub j1: GenComplexStructure,
    pub j2: GenComplexStructure,
}

/// The pair and its derived endomorphisms at a site.
#[derive(Clone, Debug)]
pub struct PairJet {
    pub j1: JMat,
    pub j2: JMat,
    /// `G^end = −𝒥₁𝒥₂`.
    pub gend: JMat,
    /// `𝒥₃ = 𝒥₁𝒥₂`.
    pub j3: JMat,
}

/// Bi-Hermitian data at a site; `g` and `b` are component matrices.
#[derive(Clone, Debug)]
pub struct BiHermitian {
    pub jp: JMat,
    pub jm: JMat,
    pub g: JMat,
    pub b: JMat,
}

impl GenHermitianPair {
    pub fn eval(&self, at: &At, order: usize) -> Result<PairJet> {
        let j1 = self.j1.j.eval(at, order)?;
        let j2 = self.j2.j.eval(at, order)?;
        let j3 = j1.matmul(&j2);
        Ok(PairJet {
            gend: j3.neg(),
            j1,
            j2,
            j3,
        })
    }

    /// Metric matrix `G(u, v) = uᵀ G v` with `G = (G^end)ᵀ Q`.
    pub fn metric_values(&self, at: &At) -> Result<DMatrix<C64>> {
        let pj = self.eval(at, 0)?;
        Ok(pj.gend.values().transpose() * pairing_matrix(at.dim()))
    }

    /// Extract `(J₊, J₋, g, b)` from `G^end = [[A, g⁻¹], [σ, A*]]`.
    pub fn bihermitian(&self, at: &At, order: usize) -> Result<BiHermitian> {
        let pj = self.eval(at, order)?;
        bihermitian_from(&pj, at.dim())
    }
}

pub fn bihermitian_from(pj: &PairJet, n: usize) -> Result<BiHermitian> {
    let a = pj.gend.block(0, 0, n, n);
    let ginv = pj.gend.block(0, n, n, n);
    let g = ginv.inverse()?;
    let bm = g.matmul(&a).neg();
    let j11 = pj.j1.block(0, 0, n, n);
    let j12 = pj.j1.block(0, n, n, n);
    let jp = j11.add(&j12.matmul(&bm.add(&g)));
    let jm = j11.add(&j12.matmul(&bm.sub(&g)));
    Ok(BiHermitian {
        jp,
        jm,
        b: bm.transpose(),
        g,
    })
}

/// Rebuild (𝒥₁, 𝒥₂) from bi-Hermitian data through the graphs `C± = {X + (b±g)X}`.
pub fn reconstruct_pair(bh: &BiHermitian) -> Result<(JMat, JMat)> {
    let g = &bh.g;
    let bm = bh.b.transpose();
    let id = identity_like(g);
    let ginv = g.inverse()?;
    let phi_p = JMat::from_blocks(&id, &zeros_like(&id), &bm.add(g), &zeros_like(&id));
    let phi_m = JMat::from_blocks(&id, &zeros_like(&id), &bm.sub(g), &zeros_like(&id));
    // M_Y = ½[I − G⁻¹B, G⁻¹], M_Z = ½[I + G⁻¹B, −G⁻¹], padded to square
    let gib = ginv.matmul(&bm);
    let z = zeros_like(&id);
    let my = JMat::from_blocks(&id.sub(&gib), &ginv, &z, &z).scale(cr(0.5));
    let mz = JMat::from_blocks(&id.add(&gib), &ginv.neg(), &z, &z).scale(cr(0.5));
    let jp = JMat::from_blocks(&bh.jp, &z, &z, &z);
    let jm = JMat::from_blocks(&bh.jm, &z, &z, &z);
    let plus = phi_p.matmul(&jp).matmul(&my);
    let minus = phi_m.matmul(&jm).matmul(&mz);
    Ok((plus.add(&minus), plus.sub(&minus)))
}

/// Validate commutation and positivity at `sites`.
pub fn build_hermitian_pair(
    j1: GenComplexStructure,
    j2: GenComplexStructure,
    sites: &[At],
) -> Result<GenHermitianPair> {
    let pair = GenHermitianPair { j1, j2 };
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d65_7472);
    for at in sites {
        let pj = pair.eval(at, 0)?;
        let a = pj.j1.values();
        let b = pj.j2.values();
        let comm = (&a * &b - &b * &a).camax();
        if comm > 1e-9 {
            return Err(GeomError::NonCommuting(comm));
        }
        let g = pair.metric_values(at)?;
        let dim = g.nrows();
        let mut min_q = f64::INFINITY;
        for _ in 0..32 {
            let u = DVector::from_fn(dim, |_, _| cr(rng.random_range(-1.0..1.0)));
            let q = (u.transpose() * &g * &u)[(0, 0)].re / u.norm_squared();
            min_q = min_q.min(q);
        }
        if min_q <= 0.0 {
            return Err(GeomError::IndefiniteMetric(min_q));
        }
    }
    Ok(pair)
}

/// The real 2-form `ω± = g J±` as components: `ω±(X, Y) = g(J±X, Y)`.
pub fn omega_pm(bh: &BiHermitian, plus: bool) -> JMat {
    let j = if plus { &bh.jp } else { &bh.jm };
    j.transpose().matmul(&bh.g)
}

/// Generalized Kähler verdict: Gualtieri's closure criterion and the
/// bi-Hermitian criterion, which must agree.
pub fn check_generalized_kahler(p: &GenHermitianPair, plan: &SamplePlan, tol: Tolerance) -> Report {
    let mut rep = Report::new(format!("generalized Kähler: ({}, {})", p.j1.j.label(), p.j2.j.label()));
    rep.points = plan.len();
    let recs = evaluate(plan, tol, "gk.error", "generalized Kähler", |at| {
        let n = at.dim();
        let pj = p.eval(at, 1)?;
        let p1 = projector(&pj.j1, false);
        let p2 = projector(&pj.j2, false);
        let p2b = projector(&pj.j2, true);
        let l1 = frame_sections(&p1)?;
        let l12 = frame_sections(&p1.matmul(&p2))?;
        let l12b = frame_sections(&p1.matmul(&p2b))?;
        let (ra, sa) = bracket_closure(&l1, n)?;
        let (rb, sb) = bracket_closure(&l12, n)?;
        let (rc, sc) = bracket_closure(&l12b, n)?;
        // bi-Hermitian path
        let bh = bihermitian_from(&pj, n)?;
        let mut nij: f64 = 0.0;
        for jm in [&bh.jp, &bh.jm] {
            for a in 0..n {
                for b in a + 1..n {
                    let ea: Vec<Jet> = (0..n).map(|i| at.real(1, if i == a { 1.0 } else { 0.0 })).collect();
                    let eb: Vec<Jet> = (0..n).map(|i| at.real(1, if i == b { 1.0 } else { 0.0 })).collect();
                    nij = nij.max(vnorm_inf(&nijenhuis_tm(jm, &ea, &eb)));
                }
            }
        }
        let db = Form::two_form(&bh.b).d();
        let dwp = Form::two_form(&omega_pm(&bh, true)).d();
        let dwm = Form::two_form(&omega_pm(&bh, false)).d();
        let jp0 = bh.jp.truncate(0);
        let jm0 = bh.jm.truncate(0);
        let mut rp: f64 = 0.0;
        let mut rm: f64 = 0.0;
        let mut sdb: f64 = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    let e = |i: usize| -> Vec<Jet> {
                        (0..n).map(|r| at.real(0, if r == i { 1.0 } else { 0.0 })).collect()
                    };
                    let (ea, eb, ec) = (e(a), e(b), e(c));
                    let lhs = db.eval(&[&ea, &eb, &ec]).value();
                    let vp = dwp
                        .eval(&[&jp0.matvec(&ea), &jp0.matvec(&eb), &jp0.matvec(&ec)])
                        .value();
                    let vm = dwm
                        .eval(&[&jm0.matvec(&ea), &jm0.matvec(&eb), &jm0.matvec(&ec)])
                        .value();
                    rp = rp.max((lhs - vp).norm());
                    rm = rm.max((lhs + vm).norm());
                    sdb = sdb.max(lhs.norm()).max(vp.norm());
                }
            }
        }
        Ok(vec![
            Residual::new("gk.L1-closed", "L1 Courant integrable", ra, sa),
            Residual::new("gk.L1L2-closed", "L1 ∩ L2 Courant integrable", rb, sb),
            Residual::new("gk.L1L2bar-closed", "L1 ∩ conj(L2) Courant integrable", rc, sc),
            Residual::new("gk.bihermitian.J-integrable", "N_{J±} = 0", nij, bh.jp.max_abs_value()),
            Residual::new("gk.bihermitian.db-plus", "db = dω₊(J₊·,J₊·,J₊·)", rp, sdb),
            Residual::new("gk.bihermitian.db-minus", "db = −dω₋(J₋·,J₋·,J₋·)", rm, sdb),
        ])
    });
    for r in recs {
        rep.push(r);
    }
    let a = ["gk.L1-closed", "gk.L1L2-closed", "gk.L1L2bar-closed"]
        .iter()
        .all(|id| rep.group_pass(id));
    let b = rep.group_pass("gk.bihermitian");
    rep.push_agreement("gk.agreement", "Gualtieri <=> bi-Hermitian", ("Courant closure", a), ("bi-Hermitian", b));
    rep
}

/// Residual `max |G(u,u) − …|`-free check helper: smallest Rayleigh quotient
/// of the metric on the supplied vectors.
pub fn min_metric_quotient(g: &DMatrix<C64>, vs: &[DVector<C64>]) -> f64 {
    vs.iter()
        .map(|u| (u.transpose() * g * u)[(0, 0)].re / u.norm_squared())
        .fold(f64::INFINITY, f64::min)
}

pub fn gvector_residual(a: &GVector, b: &GVector) -> f64 {
    (a.stacked() - b.stacked()).camax()
}

#[cfg(test)]
mod tests {
    use super::*;

    // coordinates (x1, y1, x2, y2), J ∂x = ∂y
    fn flat_j() -> TangentEndoField {
        Field::new("J0", |at: &At, k| {
            Ok(JMat::from_fn(4, 4, |r, c| {
                let v = match (r, c) {
                    (1, 0) | (3, 2) => 1.0,
                    (0, 1) | (2, 3) => -1.0,
                    _ => 0.0,
                };
                at.real(k, v)
            }))
        })
    }

    // ω = w dx1∧dy1 + dx2∧dy2
    fn omega(weight1: impl Fn(&At, usize) -> Jet + Send + Sync + 'static) -> FormField {
        FormField::new("omega", move |at: &At, k| {
            let w = weight1(at, k);
            let one = at.real(k, 1.0);
            Ok(Form::two_form(&JMat::from_fn(4, 4, |r, c| match (r, c) {
                (0, 1) => w.clone(),
                (1, 0) => w.neg(),
                (2, 3) => one.clone(),
                (3, 2) => one.neg(),
                _ => at.zero(k),
            })))
        })
    }

    fn plan() -> SamplePlan {
        SamplePlan::random_box(&[(-0.5, 0.5); 4], |_| true, 6, 3)
    }

    #[test]
    fn flat_kahler_is_generalized_kahler() {
        let pl = plan();
        let sites = pl.sites();
        let j1 = GenComplexStructure::from_complex(&flat_j(), &sites).unwrap();
        let j2 = GenComplexStructure::from_symplectic(&omega(|at, k| at.real(k, 1.0)), &sites).unwrap();
        let ri = check_integrable(&j1, &pl, Tolerance::default());
        assert!(ri.pass(), "{}", ri.to_text());
        let pair = build_hermitian_pair(j1, j2, &sites).unwrap();
        let rep = check_generalized_kahler(&pair, &pl, Tolerance::default());
        assert!(rep.pass(), "{}", rep.to_text());
    }

    #[test]
    fn non_closed_two_form_fails_both_criteria() {
        let pl = plan();
        let om = omega(|at, k| at.coord(2, k).exp());
        let s = GenComplexStructure::from_symplectic(&om, &pl.sites()).unwrap();
        let rep = check_integrable(&s, &pl, Tolerance::default());
        assert!(!rep.group_pass("integrable.nijenhuis"));
        assert!(!rep.group_pass("integrable.d-eps"));
        assert_eq!(rep.disagreements(), 0);
    }

    #[test]
    fn conformally_scaled_pair_is_not_kahler() {
        let pl = plan();
        let sites = pl.sites();
        // ω = e^{x1} ω₀ with the flat J
        let om = FormField::new("e^x1 omega0", |at: &At, k| {
            let w = at.coord(0, k).exp();
            Ok(Form::two_form(&JMat::from_fn(4, 4, |r, c| match (r, c) {
                (0, 1) | (2, 3) => w.clone(),
                (1, 0) | (3, 2) => w.neg(),
                _ => at.zero(k),
            })))
        });
        let j1 = GenComplexStructure::from_complex(&flat_j(), &sites).unwrap();
        let j2 = GenComplexStructure::from_symplectic(&om, &sites).unwrap();
        let pair = build_hermitian_pair(j1, j2, &sites).unwrap();
        let rep = check_generalized_kahler(&pair, &pl, Tolerance::default());
        assert!(!rep.pass());
        assert_eq!(rep.disagreements(), 0, "{}", rep.to_text());
    }

    #[test]
    fn kahler_type_and_eps() {
        let pl = plan();
        let at = &pl.sites()[0];
        let s = GenComplexStructure::from_symplectic(&omega(|at, k| at.real(k, 1.0)), &pl.sites()).unwrap();
        let b = one_zero_bundle(&s, at).unwrap();
        assert_eq!(b.type_, 0);
        assert!(b.isotropy_residual() < 1e-12);
        assert!(b.spans_with_conjugate().unwrap());
        // L = L(TM, −iω)
        let w = omega(|at, k| at.real(k, 1.0)).eval(at, 0).unwrap().matrix().values();
        assert!(b.eps_residual(&(w * -I)) < 1e-12);
        let c = GenComplexStructure::from_complex(&flat_j(), &pl.sites()).unwrap();
        assert_eq!(one_zero_bundle(&c, at).unwrap().type_, 2);
    }

    #[test]
    fn bihermitian_round_trip() {
        let pl = plan();
        let sites = pl.sites();
        let om = omega(|at, k| at.coord(1, k).mul(&at.coord(1, k)).add_const(cr(2.0)));
        let j1 = GenComplexStructure::from_complex(&flat_j(), &sites).unwrap();
        let j2 = GenComplexStructure::from_symplectic(&om, &sites).unwrap();
        let b = FormField::new("B", |at: &At, k| {
            let x = at.coord(0, k).scale_re(0.3);
            Ok(Form::two_form(&JMat::from_fn(4, 4, |r, c| match (r, c) {
                (0, 2) => x.clone(),
                (2, 0) => x.neg(),
                _ => at.zero(k),
            })))
        });
        let pair = build_hermitian_pair(j1.b_transform(&b), j2.b_transform(&b), &sites).unwrap();
        for at in &sites {
            let bh = pair.bihermitian(at, 0).unwrap();
            let (r1, r2) = reconstruct_pair(&bh).unwrap();
            let pj = pair.eval(at, 0).unwrap();
            assert!((r1.values() - pj.j1.values()).camax() < 1e-12);
            assert!((r2.values() - pj.j2.values()).camax() < 1e-12);
            let bv = bh.b.values();
            let expect = b.eval(at, 0).unwrap().matrix().values();
            assert!((bv - expect).camax() < 1e-12);
        }
    }
}
