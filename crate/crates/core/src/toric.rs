//! Diagonal toric generalized Kähler structures in action-angle charts
//! `(t¹..tⁿ, μ¹..μⁿ)`, and the four-dimensional KK pipeline built on them.
//!
//! Throughout, `X₀ = −∂/∂t¹` with moment map `μ¹`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::courant::TwistData;
use crate::error::{GeomError, Result};
use crate::field::{Bindings, Expr, ScalarField};
use crate::forms::{Form, FormField};
use crate::jet::{At, Jet, Layout, Point, C64};
use crate::kk::{check_gen_kk, metric_on_x0, HamiltonianKilling, KKInput};
use crate::linalg::{cr, JMat, I};
use crate::report::{evaluate, Report, Residual, SamplePlan, Tolerance, PIPELINE_ORDER};
use crate::structures::{
    build_hermitian_pair, one_zero_bundle, reconstruct_pair, symplectic_block, BiHermitian,
    GenComplexStructure, GenHermitianPair, TangentEndoField,
};
use crate::tangent::{EndoField, Field, GSec, VectorField};
use crate::twist::validate_twist_data;

type HessFn = dyn Fn(&At, usize) -> Result<JMat> + Send + Sync;

/// A strictly convex function of the moment coordinates, known through its
/// Hessian (and, when available, through its values).
#[derive(Clone)]
pub struct SymplecticPotential {
    n: usize,
    label: String,
    hess: Arc<HessFn>,
    tau: Option<ScalarField>,
    /// Facets `ℓ·μ + c > 0` cutting out the domain.
    pub facets: Vec<(Vec<f64>, f64)>,
    /// Sampling box for the moment coordinates.
    pub bounds: Vec<(f64, f64)>,
    /// An interior point; sample grids shrink toward it.
    pub center: Vec<f64>,
}

impl fmt::Debug for SymplecticPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymplecticPotential({}, n = {})", self.label, self.n)
    }
}

impl SymplecticPotential {
    /// Potential given by its values; the Hessian is read off order-(k+2) jets.
    pub fn from_tau(
        label: impl Into<String>,
        n: usize,
        tau: ScalarField,
        facets: Vec<(Vec<f64>, f64)>,
        bounds: Vec<(f64, f64)>,
        center: Vec<f64>,
    ) -> SymplecticPotential {
        let t = tau.clone();
        let hess = move |at: &At, k: usize| -> Result<JMat> {
            let j = t.eval_jet(at, k + 2)?;
            Ok(JMat::from_fn(n, n, |r, c| j.d(n + r).d(n + c)))
        };
        SymplecticPotential {
            n,
            label: label.into(),
            hess: Arc::new(hess),
            tau: Some(tau),
            facets,
            bounds,
            center,
        }
    }

    /// Potential known only through its Hessian entries.
    pub fn from_hessian(
        label: impl Into<String>,
        n: usize,
        hess: impl Fn(&At, usize) -> Result<JMat> + Send + Sync + 'static,
        facets: Vec<(Vec<f64>, f64)>,
        bounds: Vec<(f64, f64)>,
        center: Vec<f64>,
    ) -> SymplecticPotential {
        SymplecticPotential {
            n,
            label: label.into(),
            hess: Arc::new(hess),
            tau: None,
            facets,
            bounds,
            center,
        }
    }

    /// Potential given by an expression in `mu1..mun` (and `t1..tn`).
    pub fn from_expr(
        label: impl Into<String>,
        n: usize,
        tau: &Expr,
        facets: Vec<(Vec<f64>, f64)>,
        bounds: Vec<(f64, f64)>,
        center: Vec<f64>,
    ) -> Result<SymplecticPotential> {
        let names = chart_names(n);
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let field = ScalarField::from_expr(tau, &Bindings::with_coords(&refs))?;
        let pot = SymplecticPotential::from_tau(label, n, field, facets, bounds, center);
        if !pot.contains(&pot.center) {
            return Err(GeomError::ParameterOutOfRange(format!(
                "center {:?} lies outside the domain",
                pot.center
            )));
        }
        Ok(pot)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn tau(&self) -> Option<&ScalarField> {
        self.tau.as_ref()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        self.facets
            .iter()
            .all(|(l, c)| l.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>() + c > 0.0)
    }

    /// `Hess τ` as an n×n matrix of jets on the 2n-dimensional chart.
    pub fn hessian(&self, at: &At, k: usize) -> Result<JMat> {
        let mu = &at.point.0[self.n..2 * self.n];
        if !self.contains(mu) {
            return Err(GeomError::DomainViolation(format!(
                "μ = {mu:?} outside the domain of {}",
                self.label
            )));
        }
        (self.hess)(at, k)
    }

    /// `grid`ⁿ moment points shrunk toward the center, crossed with `fibers`
    /// random torus points.
    pub fn sample_plan(&self, grid: usize, fibers: usize, shrink: f64, seed: u64) -> SamplePlan {
        SamplePlan::toric(
            &self.bounds,
            &self.center,
            |mu| self.contains(mu),
            grid,
            fibers,
            shrink,
            seed,
        )
    }
}

/// Coordinate names `t1..tn, mu1..mun` of the action-angle chart.
pub fn chart_names(n: usize) -> Vec<String> {
    (1..=n)
        .map(|i| format!("t{i}"))
        .chain((1..=n).map(|i| format!("mu{i}")))
        .collect()
}

/// Single-variable profile `Θ` on `[a, b]` of an admissible metric.
#[derive(Clone, Debug)]
pub struct MomentumProfile {
    pub a: f64,
    pub b: f64,
    /// Expression in the variable `x`.
    pub theta: Expr,
}

impl MomentumProfile {
    /// Validates `b > a > 0`, `Θ > 0` inside, `Θ(a) = Θ(b) = 0`,
    /// `Θ′(a) = 2`, `Θ′(b) = −2`.
    pub fn new(a: f64, b: f64, theta: Expr) -> Result<MomentumProfile> {
        if !(b > a && a > 0.0) {
            return Err(GeomError::ParameterOutOfRange(format!(
                "momentum interval requires b > a > 0 (a = {a}, b = {b})"
            )));
        }
        let prof = MomentumProfile { a, b, theta };
        let layout = Layout::new(1, 1);
        let th = ScalarField::coord(0).compose_expr(&prof.theta, "x")?;
        let eval = |x: f64| -> Result<(f64, f64)> {
            let j = th.eval_jet(&At::new(layout.clone(), Point(vec![x])), 1)?;
            Ok((j.re(), j.d(0).re()))
        };
        let (ta, dta) = eval(a)?;
        let (tb, dtb) = eval(b)?;
        let bc = [("Θ(a)", ta, 0.0), ("Θ(b)", tb, 0.0), ("Θ′(a)", dta, 2.0), ("Θ′(b)", dtb, -2.0)];
        for (name, got, want) in bc {
            if (got - want).abs() > 1e-8 {
                return Err(GeomError::ParameterOutOfRange(format!(
                    "boundary condition {name} = {want} fails (got {got:.6e})"
                )));
            }
        }
        for i in 1..64 {
            let x = a + (b - a) * i as f64 / 64.0;
            let (v, _) = eval(x)?;
            if v <= 0.0 {
                return Err(GeomError::ParameterOutOfRange(format!("Θ({x}) = {v:.3e} is not positive")));
            }
        }
        Ok(prof)
    }

    /// `Θ(x) = 2(x − a)(b − x)/(b − a)`.
    pub fn quadratic(a: f64, b: f64) -> Result<MomentumProfile> {
        let e = Expr::parse(&format!("2*(x - {a})*({b} - x)/({b} - {a})"))?;
        MomentumProfile::new(a, b, e)
    }
}

/// `(τ, C)` with the derived `Ψ = Hess τ + C`.
#[derive(Clone, Debug)]
pub struct ToricGKData {
    pub pot: SymplecticPotential,
    pub c: DMatrix<f64>,
}

impl ToricGKData {
    pub fn new(pot: SymplecticPotential, c: DMatrix<f64>) -> Result<ToricGKData> {
        let n = pot.dim();
        if c.nrows() != n || c.ncols() != n {
            return Err(GeomError::DimensionMismatch(format!(
                "C is {}x{}, potential has n = {n}",
                c.nrows(),
                c.ncols()
            )));
        }
        let skew = (&c + c.transpose()).amax();
        if skew > 1e-14 {
            return Err(GeomError::ParameterOutOfRange(format!(
                "C must be skew-symmetric (|C + Cᵀ| = {skew:.3e})"
            )));
        }
        Ok(ToricGKData { pot, c })
    }

    pub fn dim(&self) -> usize {
        self.pot.dim()
    }

    /// `C₁₂`.
    pub fn c12(&self) -> f64 {
        if self.dim() < 2 {
            0.0
        } else {
            self.c[(0, 1)]
        }
    }

    pub fn psi(&self, at: &At, k: usize) -> Result<JMat> {
        let h = self.pot.hessian(at, k)?;
        let c = &self.c;
        Ok(JMat::from_fn(h.rows(), h.cols(), |r, s| {
            h.get(r, s).add_const(cr(c[(r, s)]))
        }))
    }

    pub fn psi_values(&self, at: &At) -> Result<DMatrix<f64>> {
        Ok(real_values(&self.psi(at, 0)?))
    }

    /// 5×5 moment grid, 3 torus fibers, 10% shrink.
    pub fn default_plan(&self, seed: u64) -> SamplePlan {
        self.pot.sample_plan(5, 3, 0.1, seed)
    }

    fn site(&self, p: &Point) -> Result<At> {
        if p.dim() != 2 * self.dim() {
            return Err(GeomError::DimensionMismatch(format!(
                "point of dimension {} on a {}-dimensional toric chart",
                p.dim(),
                2 * self.dim()
            )));
        }
        Ok(At::new(Layout::new(p.dim(), PIPELINE_ORDER), p.clone()))
    }
}

fn real_values(m: &JMat) -> DMatrix<f64> {
    m.values().map(|z| z.re)
}

fn zero_like(m: &JMat) -> JMat {
    m.map(|j| j.scale(cr(0.0)))
}

/// `J₊ = [[0, Ψ], [−Ψ⁻¹, 0]]`, `J₋ = [[0, Ψᵀ], [−Ψ⁻ᵀ, 0]]`.
fn jpm_from_psi(psi: &JMat, plus: bool) -> Result<JMat> {
    let p = if plus { psi.clone() } else { psi.transpose() };
    let pinv = p.inverse()?;
    let z = zero_like(psi);
    Ok(JMat::from_blocks(&z, &p, &pinv.neg(), &z))
}

/// Components of `ω = Σ dμⁱ ∧ dtⁱ`.
fn omega_components(at: &At, k: usize, n: usize) -> JMat {
    JMat::from_fn(2 * n, 2 * n, |r, c| {
        let v = if r == c + n {
            1.0
        } else if c == r + n {
            -1.0
        } else {
            0.0
        };
        at.real(k, v)
    })
}

pub fn toric_symplectic_form(n: usize) -> FormField {
    FormField::new("omega_toric", move |at: &At, k| Ok(Form::two_form(&omega_components(at, k, n))))
}

/// `(J₊, J₋)` as fields.
pub fn toric_complex_structures(data: &ToricGKData) -> (TangentEndoField, TangentEndoField) {
    let mk = |plus: bool| {
        let d = data.clone();
        Field::new(if plus { "J+" } else { "J-" }, move |at: &At, k| {
            jpm_from_psi(&d.psi(at, k)?, plus)
        })
    };
    (mk(true), mk(false))
}

/// `g = −½ ω((J₊ + J₋)·, ·)`, `b = −½ ω((J₊ − J₋)·, ·)`.
fn toric_bihermitian(data: &ToricGKData, at: &At, k: usize) -> Result<BiHermitian> {
    let psi = data.psi(at, k)?;
    let jp = jpm_from_psi(&psi, true)?;
    let jm = jpm_from_psi(&psi, false)?;
    let w = omega_components(at, k, data.dim());
    let g = jp.add(&jm).transpose().matmul(&w).scale(cr(-0.5));
    let b = jp.sub(&jm).transpose().matmul(&w).scale(cr(-0.5));
    Ok(BiHermitian { jp, jm, g, b })
}

fn toric_j1_field(data: &ToricGKData) -> EndoField {
    let d = data.clone();
    Field::new(format!("J1[{}]", data.pot.label()), move |at: &At, k| {
        Ok(reconstruct_pair(&toric_bihermitian(&d, at, k)?)?.0)
    })
}

/// The pair `(𝒥₁, 𝒥_ω)` without validation.
fn toric_pair_unchecked(data: &ToricGKData) -> GenHermitianPair {
    let n = data.dim();
    let om = toric_symplectic_form(n);
    GenHermitianPair {
        j1: GenComplexStructure::new(toric_j1_field(data)),
        j2: GenComplexStructure::new(Field::new("J_omega_toric", move |at: &At, k| {
            symplectic_block(&om.eval(at, k)?)
        })),
    }
}

fn smallest_eigenvalue(h: &DMatrix<f64>) -> f64 {
    let s = (h + h.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.min()
}

/// Assemble `(𝒥₁, 𝒥₂ = 𝒥_ω)` from `(τ, C)`, validated at `sites`.
pub fn build_toric_gk(data: &ToricGKData, sites: &[At]) -> Result<GenHermitianPair> {
    let n = data.dim();
    for at in sites {
        let h = real_values(&data.pot.hessian(at, 0)?);
        let m = smallest_eigenvalue(&h);
        if m <= 0.0 {
            return Err(GeomError::NotConvex(m));
        }
        let det = data.psi_values(at)?.determinant();
        if det.abs() < 1e-12 {
            return Err(GeomError::SingularPsi(det.abs()));
        }
        // the graphs C± of b ± g must reproduce 𝒥_ω
        let (_, j2) = reconstruct_pair(&toric_bihermitian(data, at, 0)?)?;
        let jw = symplectic_block(&Form::two_form(&omega_components(at, 0, n)))?;
        let r = (j2.values() - jw.values()).camax();
        if r > 1e-9 * (1.0 + jw.max_abs_value()) {
            return Err(GeomError::PathDisagreement(format!(
                "bi-Hermitian data does not reproduce J_omega ({r:.3e})"
            )));
        }
    }
    let j2 = GenComplexStructure::from_symplectic(&toric_symplectic_form(n), sites)?;
    let j1 = GenComplexStructure::new(toric_j1_field(data));
    build_hermitian_pair(j1, j2, sites)
}

/// `X₀ = −∂/∂t¹`.
pub fn toric_killing_field(n: usize) -> VectorField {
    Field::new("-dt1", move |at: &At, k| {
        Ok((0..2 * n).map(|r| at.real(k, if r == 0 { -1.0 } else { 0.0 })).collect())
    })
}

/// `X₀ = −∂t¹` with Hamiltonian `μ¹` on the toric pair.
pub fn toric_hamiltonian_killing(data: &ToricGKData, sites: &[At]) -> Result<HamiltonianKilling> {
    let n = data.dim();
    Ok(HamiltonianKilling {
        x0: toric_killing_field(n),
        fh: ScalarField::coord(n),
        pair: build_toric_gk(data, sites)?,
    })
}

/// `pr_T(𝒥₃X₀)`, `pr_{T*}(𝒥₃X₀)` (as 2n-vectors) and `G(X₀, X₀)`.
#[derive(Clone, Debug, PartialEq)]
pub struct J3Quantities {
    pub pr_t: DVector<f64>,
    pub pr_tstar: DVector<f64>,
    pub gxx: f64,
}

impl J3Quantities {
    fn distance(&self, o: &J3Quantities) -> (f64, f64, f64) {
        (
            (&self.pr_t - &o.pr_t).amax(),
            (&self.pr_tstar - &o.pr_tstar).amax(),
            (self.gxx - o.gxx).abs(),
        )
    }

    fn scale(&self) -> f64 {
        self.pr_t.amax().max(self.pr_tstar.amax()).max(self.gxx.abs())
    }
}

/// Closed forms in `Ψ⁻¹ = S + K` (symmetric plus skew):
/// `pr_T = (K S⁻¹)_{1r} ∂tʳ`, `pr_{T*} = (S − K S⁻¹ K)_{r1} dtʳ`,
/// `G = ½(Ψ⁻¹ − K S⁻¹ K)₁₁`.
pub fn j3_formula(psi: &DMatrix<f64>) -> Result<J3Quantities> {
    let n = psi.nrows();
    let a = psi
        .clone()
        .try_inverse()
        .ok_or_else(|| GeomError::SingularPsi(psi.determinant().abs()))?;
    let s = (&a + a.transpose()) * 0.5;
    let k = (&a - a.transpose()) * 0.5;
    let si = s
        .clone()
        .try_inverse()
        .ok_or_else(|| GeomError::SingularPsi(s.determinant().abs()))?;
    let ksi = &k * &si;
    let ksk = &ksi * &k;
    let mut pr_t = DVector::zeros(2 * n);
    let mut pr_tstar = DVector::zeros(2 * n);
    for r in 0..n {
        pr_t[r] = ksi[(0, r)];
        pr_tstar[r] = s[(r, 0)] - ksk[(r, 0)];
    }
    let gxx = 0.5 * (a[(0, 0)] - ksk[(0, 0)]);
    Ok(J3Quantities { pr_t, pr_tstar, gxx })
}

/// Four-dimensional closed forms:
/// `pr_T = −C₁₂/(det Ψ − C₁₂²)(Ψˢ₁₂ ∂t¹ + Ψ₂₂ ∂t²)`,
/// `pr_{T*} = (Ψ₂₂ dt¹ − Ψˢ₁₂ dt²)/(det Ψ − C₁₂²)`, `G = Ψ₂₂/(2(det Ψ − C₁₂²))`.
pub fn j3_formula_dim4(psi: &DMatrix<f64>) -> Result<J3Quantities> {
    if psi.nrows() != 2 {
        return Err(GeomError::DimensionMismatch("four-dimensional formula needs n = 2".into()));
    }
    let c = 0.5 * (psi[(0, 1)] - psi[(1, 0)]);
    let s12 = 0.5 * (psi[(0, 1)] + psi[(1, 0)]);
    let den = psi.determinant() - c * c;
    if den.abs() < 1e-14 {
        return Err(GeomError::SingularPsi(den.abs()));
    }
    let p22 = psi[(1, 1)];
    Ok(J3Quantities {
        pr_t: DVector::from_vec(vec![-c * s12 / den, -c * p22 / den, 0.0, 0.0]),
        pr_tstar: DVector::from_vec(vec![p22 / den, -s12 / den, 0.0, 0.0]),
        gxx: p22 / (2.0 * den),
    })
}

/// Generic path: `𝒥₃ = 𝒥₁𝒥₂` applied to `X₀` and `G(X₀, X₀) = ⟨G^end X₀, X₀⟩`.
pub fn j3_generic(pair: &GenHermitianPair, at: &At) -> Result<J3Quantities> {
    let n = at.dim() / 2;
    let pj = pair.eval(at, 0)?;
    let x0 = toric_killing_field(n).eval(at, 0)?;
    let u = GSec::new(x0.clone(), vec![at.zero(0); 2 * n]);
    let v = u.apply(&pj.j3).value();
    Ok(J3Quantities {
        pr_t: v.x.map(|z| z.re),
        pr_tstar: v.xi.map(|z| z.re),
        gxx: metric_on_x0(&pj, &x0).re(),
    })
}

fn agree_or(a: &J3Quantities, b: &J3Quantities, what: &str) -> Result<()> {
    let (r1, r2, r3) = a.distance(b);
    let r = r1.max(r2).max(r3);
    if r > 1e-8 * (1.0 + a.scale()) {
        return Err(GeomError::PathDisagreement(format!("{what}: {r:.3e}")));
    }
    Ok(())
}

/// The three quantities of `𝒥₃X₀` from `Ψ`, cross-checked against the
/// generic pair computation.
pub fn toric_j3_quantities(data: &ToricGKData, p: &Point) -> Result<J3Quantities> {
    let at = data.site(p)?;
    let q = j3_formula(&data.psi_values(&at)?)?;
    let generic = j3_generic(&toric_pair_unchecked(data), &at)?;
    agree_or(&q, &generic, "J3 X0 from Psi vs J1 J2")?;
    Ok(q)
}

/// (1,0)-frames `v_j^± = ∂μʲ − iΨ^± ∂t` of `J±`.
#[derive(Clone, Debug)]
pub struct ToricFrames {
    pub plus: Vec<DVector<C64>>,
    pub minus: Vec<DVector<C64>>,
    /// In four dimensions: rows `∂t¹, ∂t², ∂μ¹, ∂μ²` expanded in the basis
    /// `(v₁⁺, v₁⁻, v₂⁺, v₂⁻)`.
    pub generates: Option<DMatrix<C64>>,
}

fn frames_from_psi(psi: &DMatrix<f64>) -> ToricFrames {
    let n = psi.nrows();
    let mk = |j: usize, plus: bool| {
        let mut v = DVector::<C64>::zeros(2 * n);
        for k in 0..n {
            let p = if plus { psi[(k, j)] } else { psi[(j, k)] };
            v[k] = -I * p;
        }
        v[n + j] = cr(1.0);
        v
    };
    let plus = (0..n).map(|j| mk(j, true)).collect();
    let minus = (0..n).map(|j| mk(j, false)).collect();
    let generates = if n == 2 && psi[(0, 1)] != psi[(1, 0)] {
        let c = 0.5 * (psi[(0, 1)] - psi[(1, 0)]);
        let q = |x: f64| cr(x / (2.0 * c));
        let (p11, p12, p21, p22) = (psi[(0, 0)], psi[(0, 1)], psi[(1, 0)], psi[(1, 1)]);
        let one = cr(1.0);
        let z = cr(0.0);
        Some(DMatrix::from_row_slice(
            4,
            4,
            &[
                z,
                z,
                I * q(1.0),
                -I * q(1.0),
                -I * q(1.0),
                I * q(1.0),
                z,
                z,
                one + q(p21),
                -q(p21),
                -q(p11),
                q(p11),
                q(p22),
                -q(p22),
                one - q(p12),
                q(p12),
            ],
        ))
    } else {
        None
    };
    ToricFrames {
        plus,
        minus,
        generates,
    }
}

pub fn toric_frames(data: &ToricGKData, p: &Point) -> Result<ToricFrames> {
    let at = data.site(p)?;
    let psi = data.psi_values(&at)?;
    if psi.determinant().abs() < 1e-12 {
        return Err(GeomError::SingularPsi(psi.determinant().abs()));
    }
    Ok(frames_from_psi(&psi))
}

/// Closed form of `ε₁` in four dimensions, as a component matrix.
pub fn epsilon1_formula(psi: &DMatrix<f64>) -> Result<DMatrix<C64>> {
    let c = 0.5 * (psi[(0, 1)] - psi[(1, 0)]);
    if c.abs() < 1e-14 {
        return Err(GeomError::KahlerDegenerate);
    }
    let det = psi.determinant();
    let (p11, p12, p21, p22) = (psi[(0, 0)], psi[(0, 1)], psi[(1, 0)], psi[(1, 1)]);
    let mut e = DMatrix::<C64>::zeros(4, 4);
    let mut put = |r: usize, s: usize, v: C64| {
        e[(r, s)] = v;
        e[(s, r)] = -v;
    };
    // indices: t¹ = 0, t² = 1, μ¹ = 2, μ² = 3
    put(0, 1, cr(1.0 / c));
    put(2, 3, cr(-det / c));
    put(0, 2, I * (1.0 + p21 / c));
    put(0, 3, I * (p22 / c));
    put(1, 2, -I * (p11 / c));
    put(1, 3, I * (1.0 - p12 / c));
    Ok(e)
}

/// `ε₁` extracted from the +i-eigenbundle of `𝒥₁`.
pub fn epsilon1_projector(data: &ToricGKData, at: &At) -> Result<DMatrix<C64>> {
    let pair = toric_pair_unchecked(data);
    let l = one_zero_bundle(&pair.j1, at)?;
    l.eps_matrix()
        .ok_or_else(|| GeomError::FrameDegeneracy("E1 is not the full tangent space".into()))
}

/// The closed-form `ε₁`, cross-checked against the projector path.
pub fn dim4_epsilon1(data: &ToricGKData, p: &Point) -> Result<DMatrix<C64>> {
    if data.dim() != 2 {
        return Err(GeomError::DimensionMismatch("epsilon1 formula needs n = 2".into()));
    }
    if data.c12() == 0.0 {
        return Err(GeomError::KahlerDegenerate);
    }
    let at = data.site(p)?;
    let e = epsilon1_formula(&data.psi_values(&at)?)?;
    let g = epsilon1_projector(data, &at)?;
    let r = (&e - &g).camax();
    if r > 1e-8 * (1.0 + e.camax()) {
        return Err(GeomError::PathDisagreement(format!("epsilon1 closed form vs projector: {r:.3e}")));
    }
    Ok(e)
}

fn interior(e: &DMatrix<C64>, x: &DVector<C64>) -> DVector<C64> {
    e.transpose() * x
}

/// Residuals of every closed-form toric quantity against the generic
/// computation.
pub fn check_toric_formulas(data: &ToricGKData, plan: &SamplePlan, tol: Tolerance) -> Report {
    let mut rep = Report::new(format!("toric formulas for {}", data.pot.label()));
    rep.points = plan.len();
    let pair = toric_pair_unchecked(data);
    let n = data.dim();
    let c12 = data.c12();
    let recs = evaluate(plan, tol, "toric.error", "Lemma cond-toric", |at| {
        let psi = data.psi_values(at)?;
        let generic = j3_generic(&pair, at)?;
        let q = j3_formula(&psi)?;
        let (r1, r2, r3) = q.distance(&generic);
        let s = generic.scale();
        let mut out = vec![
            Residual::new("toric.expr-j3.pr-T", "Eq (expr-j3)", r1, s),
            Residual::new("toric.expr-j3.pr-Tstar", "Eq (expr-j3)", r2, s),
            Residual::new("toric.expr-j3.G", "Eq (expr-j3)", r3, s),
        ];
        let pj = pair.eval(at, 0)?;
        let bh = toric_bihermitian(data, at, 0)?;
        let fr = frames_from_psi(&psi);
        let mut mem: f64 = 0.0;
        for (vs, j) in [(&fr.plus, &bh.jp), (&fr.minus, &bh.jm)] {
            let jv = j.values();
            for v in vs.iter() {
                mem = mem.max((&jv * v - v * I).camax());
            }
        }
        out.push(Residual::new("toric.frames", "Eq (def-vj)", mem, 1.0));
        if n == 2 {
            let q4 = j3_formula_dim4(&psi)?;
            let (a1, a2, a3) = q4.distance(&generic);
            out.push(Residual::new("toric.pr-j3", "Eq (pr-j3)", a1, s));
            out.push(Residual::new("toric.G-dim2.pr-Tstar", "Eq (G-dim2)", a2, s));
            out.push(Residual::new("toric.G-dim2.G", "Eq (G-dim2)", a3, s));
            if c12 != 0.0 {
                let gen = fr.generates.as_ref().expect("C12 != 0");
                let basis = [&fr.plus[0], &fr.minus[0], &fr.plus[1], &fr.minus[1]];
                let mut rg: f64 = 0.0;
                for row in 0..4 {
                    let mut acc = DVector::<C64>::zeros(4);
                    for (col, b) in basis.iter().enumerate() {
                        acc += *b * gen[(row, col)];
                    }
                    acc[row] -= cr(1.0);
                    rg = rg.max(acc.camax());
                }
                out.push(Residual::new("toric.generates", "Eq (generates)", rg, gen.camax()));
                let ef = epsilon1_formula(&psi)?;
                let ep = epsilon1_projector(data, at)?;
                out.push(Residual::new("toric.epsilon1", "Eq (epsilon1)", (&ef - &ep).camax(), ep.camax()));
                // contractions of the projector-path ε₁
                let mut rie: f64 = 0.0;
                for j in 0..2 {
                    let mut want_p = DVector::<C64>::zeros(4);
                    let mut want_m = DVector::<C64>::zeros(4);
                    for k in 0..2 {
                        want_p[2 + k] = cr(psi[(k, j)]);
                        want_m[2 + k] = cr(-psi[(j, k)]);
                    }
                    want_p[j] = -I;
                    want_m[j] = I;
                    rie = rie
                        .max((interior(&ep, &fr.plus[j]) - want_p).camax())
                        .max((interior(&ep, &fr.minus[j]) - want_m).camax());
                }
                out.push(Residual::new("toric.i-e", "Eq (i-e)", rie, psi.amax()));
                let x0 = DVector::from_vec(vec![cr(-1.0), cr(0.0), cr(0.0), cr(0.0)]);
                let mut want = DVector::<C64>::zeros(4);
                for k in 0..2 {
                    let sk2 = 0.5 * (psi[(k, 1)] + psi[(1, k)]);
                    want[2 + k] = -I * sk2 / c12;
                }
                want[1] = cr(-1.0 / c12);
                out.push(Residual::new(
                    "toric.i-X0-eps1",
                    "Lemma det-F, i_{X0} eps1",
                    (interior(&ep, &x0) - &want).camax(),
                    want.camax(),
                ));
            }
        }
        let _ = pj;
        Ok(out)
    });
    for r in recs {
        rep.push(r);
    }
    rep
}

/// `τ₁₂/τ₂₂` as a field.
pub fn ratio_field(data: &ToricGKData) -> ScalarField {
    let pot = data.pot.clone();
    ScalarField::new("tau12/tau22", move |at, k| {
        let h = pot.hessian(at, k)?;
        h.get(0, 1).div(h.get(1, 1))
    })
}

/// `∂/∂μ²(τ₁₂/τ₂₂)` as a field; needs jets three orders above the result.
pub fn ratio_derivative_field(data: &ToricGKData) -> ScalarField {
    let r = ratio_field(data);
    let n = data.dim();
    ScalarField::new("d/dmu2(tau12/tau22)", move |at, k| Ok(r.eval_jet(at, k + 1)?.d(n + 1)))
}

pub fn ratio_derivative(data: &ToricGKData, p: &Point) -> Result<f64> {
    if data.dim() < 2 {
        return Err(GeomError::DimensionMismatch("ratio derivative needs n ≥ 2".into()));
    }
    let at = data.site(p)?;
    Ok(ratio_derivative_field(data).eval_jet(&at, 0)?.re())
}

fn d_field(f: &ScalarField, i: usize, label: &str) -> ScalarField {
    let f = f.clone();
    ScalarField::new(label.to_string(), move |at, k| Ok(f.eval_jet(at, k + 1)?.d(i)))
}

/// `F = (2ah′/h) dμ¹∧dt¹ + ((Ψˢ₁₂/Ψ₂₂)(λ − 2ah′/h) dμ¹ + λ dμ²) ∧ dt²`.
pub fn curvature_field(data: &ToricGKData, lam: &ScalarField, h: &ScalarField, a: &ScalarField) -> FormField {
    let (pot, lam, h, a) = (data.pot.clone(), lam.clone(), h.clone(), a.clone());
    FormField::new("F_curvature", move |at: &At, k| {
        let n = 2;
        let hj = h.eval_jet(at, k + 1)?;
        let hp = hj.d(n);
        let h0 = hj.truncate(k);
        let aj = a.eval_jet(at, k)?;
        let l = lam.eval_jet(at, k)?;
        let hs = pot.hessian(at, k)?;
        let ratio = hs.get(0, 1).div(hs.get(1, 1))?;
        let c1 = aj.mul(&hp).div(&h0)?.scale_re(2.0);
        let c2 = ratio.mul(&l.sub(&c1));
        let z = at.zero(k);
        let mut m = JMat::from_fn(4, 4, |_, _| z.clone());
        for (r, s, v) in [(2, 0, &c1), (2, 1, &c2), (3, 1, &l)] {
            m.set(r, s, v.clone());
            m.set(s, r, v.neg());
        }
        Ok(Form::two_form(&m))
    })
}

fn gradient_except(j: &Jet, keep: usize) -> f64 {
    j.gradient()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != keep)
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max)
}

/// The curvature form at a point, after checking `h = h(μ¹)`, `a h²`
/// constant and `∂λ/∂t¹ = 0`.
pub fn dim4_curvature(
    data: &ToricGKData,
    lam: &ScalarField,
    h: &ScalarField,
    a: &ScalarField,
    p: &Point,
) -> Result<DMatrix<f64>> {
    if data.dim() != 2 {
        return Err(GeomError::DimensionMismatch("curvature formula needs n = 2".into()));
    }
    let at = data.site(p)?;
    let hj = h.eval_jet(&at, 1)?;
    let scale = 1.0 + hj.gradient().iter().map(|v| v.norm()).fold(0.0, f64::max);
    if gradient_except(&hj, 2) > 1e-9 * scale {
        return Err(GeomError::PreconditionUnmet("h must depend on mu1 only".into()));
    }
    let ah2 = a.eval_jet(&at, 1)?.mul(&hj).mul(&hj);
    if gradient_except(&ah2, usize::MAX) > 1e-9 * (1.0 + ah2.value().norm()) {
        return Err(GeomError::PreconditionUnmet("a must equal k0 h^-2".into()));
    }
    if lam.eval_jet(&at, 1)?.d(0).value().norm() > 1e-9 {
        return Err(GeomError::PreconditionUnmet("lambda must not depend on t1".into()));
    }
    let f = curvature_field(data, lam, h, a).eval(&at, 0)?;
    Ok(f.matrix().values().map(|z| z.re))
}

/// Residuals of the two relations `(k12)` at a site.
fn k12_residuals(
    data: &ToricGKData,
    lam: &ScalarField,
    f: &ScalarField,
    h: &ScalarField,
    a: &ScalarField,
    at: &At,
) -> Result<Vec<Residual>> {
    let hs = data.pot.hessian(at, 1)?;
    let ratio = hs.get(0, 1).div(hs.get(1, 1))?;
    let rd = ratio.d(3).value().re;
    let ratio0 = ratio.value().re;
    let l = lam.eval_jet(at, 1)?;
    let (l0, l1, l2) = (l.value().re, l.d(2).value().re, l.d(3).value().re);
    let hj = h.eval_jet(at, 1)?;
    let (h0, hp) = (hj.value().re, hj.d(2).value().re);
    let a0 = a.value(at)?.re;
    let fv = f.value(at)?.re;
    let f2 = fv * fv;
    let q = (f2 - 1.0) * a0;
    if q.abs() < 1e-14 || h0.abs() < 1e-14 {
        return Err(GeomError::SingularInput("(f² − 1) a or h vanishes".into()));
    }
    let p = l0 + 2.0 * a0 * hp * f2 / h0;
    let m = l0 - 2.0 * a0 * hp / h0;
    Ok(vec![
        Residual::new("k12.first", "Eq (k12)", (rd + p / q).abs(), rd.abs() + (p / q).abs()),
        Residual::new(
            "k12.second",
            "Eq (k12)",
            (ratio0 * l2 - l1 - p * m / q).abs(),
            (ratio0 * l2).abs() + l1.abs() + (p * m / q).abs(),
        ),
    ])
}

/// Whether to also run the generic KK checker on the assembled data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim4Mode {
    Formulas,
    Full { end_to_end: bool },
}

/// The four-dimensional criterion: `f, h` depend on `μ¹` only,
/// `a = k₀h⁻²`, `F` of curvature form, and both relations `(k12)`.
#[allow(clippy::too_many_arguments)]
pub fn check_dim4_conditions(
    data: &ToricGKData,
    lam: &ScalarField,
    f: &ScalarField,
    h: &ScalarField,
    a: &ScalarField,
    plan: &SamplePlan,
    tol: Tolerance,
    mode: Dim4Mode,
) -> Report {
    let mut rep = Report::new(format!("four-dimensional KK conditions on {}", data.pot.label()));
    rep.points = plan.len();
    if data.dim() != 2 {
        rep.push_flag("dim4.precondition", "Prop dim2", false, Some("needs a four-dimensional toric chart".into()));
        return rep;
    }
    if data.c12() == 0.0 {
        rep.push_flag("dim4.precondition", "Prop dim2", false, Some("C12 = 0: the structure is Kähler".into()));
        return rep;
    }
    let ff = curvature_field(data, lam, h, a);
    let x0 = toric_killing_field(2);
    let recs = evaluate(plan, tol, "dim4.error", "Prop dim2", |at| {
        let fj = f.eval_jet(at, 1)?;
        let hj = h.eval_jet(at, 1)?;
        let aj = a.eval_jet(at, 1)?;
        let ah2 = aj.mul(&hj).mul(&hj);
        let lt = lam.eval_jet(at, 1)?.d(0).value().norm();
        let fm = ff.eval(at, 1)?;
        let x = x0.eval(at, 1)?;
        let ix = fm.interior(&x).truncate(0);
        let da = aj.gradient();
        let rx = ix
            .components()
            .iter()
            .zip(&da)
            .map(|(u, v)| (u.value() + v).norm())
            .fold(0.0, f64::max);
        let dscale = da.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut out = vec![
            Residual::new("dim4.f-mu1", "f depends on mu1 only", gradient_except(&fj, 2), fj.value().norm()),
            Residual::new("dim4.h-mu1", "h depends on mu1 only", gradient_except(&hj, 2), hj.value().norm()),
            Residual::new("dim4.lambda-t1", "lambda independent of t1", lt, 1.0),
            Residual::new("dim4.a-h", "Lemma det-F iii), a = k0 h^-2", gradient_except(&ah2, usize::MAX), ah2.value().norm()),
            Residual::new("dim4.iX0F", "Lemma det-F iii), i_{X0}F = -da", rx, dscale),
            Residual::new("dim4.F-closed", "Eq (curvature), dF = 0", fm.d().max_abs(), fm.max_abs()),
        ];
        out.extend(k12_residuals(data, lam, f, h, a, at)?);
        Ok(out)
    });
    for r in recs {
        rep.push(r);
    }
    let second = rep.group_pass("k12.second") && rep.group_pass("dim4.lambda-t1");
    rep.push_agreement(
        "dim4.closed-agreement",
        "Eq (k12) second <=> dF = 0",
        ("Eq (k12)", second),
        ("dF = 0", rep.group_pass("dim4.F-closed")),
    );
    if let Dim4Mode::Full { end_to_end } = mode {
        let criterion = ["dim4.f-mu1", "dim4.h-mu1", "dim4.lambda-t1", "dim4.a-h", "k12", "dim4.error"]
            .iter()
            .all(|id| rep.group_pass(id));
        let generic = match toric_hamiltonian_killing(data, &plan.sites()) {
            Ok(hk) => {
                let kk = KKInput {
                    hk,
                    f: f.clone(),
                    h: h.clone(),
                    tw: TwistData { x0: x0.clone(), f: ff.clone(), a: a.clone() },
                    warnings: Vec::new(),
                };
                let tw = validate_twist_data(&kk.tw, plan, tol);
                let gk = check_gen_kk(&kk, plan, tol, end_to_end);
                let v = tw.pass() && gk.pass();
                rep.extend(tw);
                rep.extend(gk);
                v
            }
            Err(e) => {
                rep.push_flag("dim4.pair", "Eq (j-pm)", false, Some(e.to_string()));
                false
            }
        };
        rep.push_agreement(
            "dim4.agreement",
            "Prop dim2 <=> Theorem gen-KK",
            ("Eq (k12)", criterion),
            ("gen-KK", generic),
        );
    }
    rep
}

/// Which closed-form solution of `(k12)` with constant `λ = λ₀`.
#[derive(Clone, Debug)]
pub enum Corollary {
    /// `a = k₀h⁻²`, `f² = −λ₀h³/(2k₀h′)`; needs `∂μ²(Ψˢ₁₂/Ψ₂₂) = 0`.
    One { h: ScalarField },
    /// `a = k₀k₁ − λ₀μ¹`, `h² = −k₀/(λ₀μ¹ − k₀k₁)`.
    Two { k1: f64 },
}

fn violation(what: &str, at: &At) -> GeomError {
    GeomError::ConstraintViolation(format!("{what} at {:?}", at.point.0))
}

/// Assemble the KK input of a corollary, checking its constraints at the
/// plan's sites.
pub fn corollary_data(
    cor: &Corollary,
    lambda0: f64,
    k0: f64,
    data: &ToricGKData,
    plan: &SamplePlan,
    tol: Tolerance,
) -> Result<KKInput> {
    if data.dim() != 2 {
        return Err(GeomError::DimensionMismatch("corollaries need n = 2".into()));
    }
    if data.c12() == 0.0 {
        return Err(GeomError::KahlerDegenerate);
    }
    if lambda0 == 0.0 || k0 == 0.0 {
        return Err(GeomError::ConstraintViolation("lambda0 and k0 must be non-zero".into()));
    }
    let sites = plan.sites();
    let rd = ratio_derivative_field(data);
    let mu1 = ScalarField::coord(2);
    let (f, h, a) = match cor {
        Corollary::One { h } => {
            let hp = d_field(h, 2, "h'");
            for at in &sites {
                let r = rd.value(at)?.re;
                if !tol.passes(r.abs(), 1.0) {
                    return Err(violation(&format!("d/dmu2(Psi12/Psi22) = {r:.3e} != 0"), at));
                }
                let (hv, hpv) = (h.value(at)?.re, hp.value(at)?.re);
                if hpv.abs() < 1e-12 {
                    return Err(violation("h' vanishes", at));
                }
                let x = lambda0 * hv.powi(3) / (k0 * hpv);
                if x >= 0.0 {
                    return Err(violation(&format!("lambda0 h^3/(k0 h') = {x:.3e} is not negative"), at));
                }
                if (x + 2.0).abs() < 1e-9 {
                    return Err(violation("f^2 = 1 (lambda0 h^3/(k0 h') = -2)", at));
                }
            }
            let a = h.powf(-2.0).scale(k0);
            let f2 = h.powf(3.0).div(&hp).scale(-lambda0 / (2.0 * k0));
            (f2.sqrt(), h.clone(), a)
        }
        Corollary::Two { k1 } => {
            let kk1 = k0 * k1;
            let d2 = d_field(&rd, 3, "d/dmu2 ratio'");
            let m = mu1.add_const(-kk1 / lambda0);
            let mr = m.mul(&rd);
            let f2 = mr.add_const(1.0).div(&mr.add_const(-1.0));
            let h2 = mu1.scale(lambda0).add_const(-kk1).recip().scale(-k0);
            let a = mu1.scale(-lambda0).add_const(kk1);
            for at in &sites {
                let v = d2.value(at)?.re;
                if !tol.passes(v.abs(), rd.value(at)?.norm()) {
                    return Err(violation(
                        &format!("d/dmu2(Psi12/Psi22) depends on mu2 (variation {v:.3e})"),
                        at,
                    ));
                }
                let (h2v, f2v, av) = (h2.value(at)?.re, f2.value(at)?.re, a.value(at)?.re);
                if !(h2v > 0.0) {
                    return Err(violation(&format!("h^2 = {h2v:.3e} is not positive"), at));
                }
                if !(f2v > 0.0) {
                    return Err(violation(&format!("f^2 = {f2v:.3e} is not positive"), at));
                }
                if av.abs() < 1e-12 {
                    return Err(violation("a vanishes", at));
                }
            }
            (f2.sqrt(), h2.sqrt(), a)
        }
    };
    let lam = ScalarField::constant(lambda0);
    let ff = curvature_field(data, &lam, &h, &a);
    Ok(KKInput {
        hk: toric_hamiltonian_killing(data, &sites)?,
        f,
        h,
        tw: TwistData { x0: toric_killing_field(2), f: ff, a },
        warnings: Vec::new(),
    })
}

fn plogp(s: ScalarField) -> ScalarField {
    s.mul(&s.ln())
}

fn mu(n: usize, i: usize) -> ScalarField {
    ScalarField::coord(n + i)
}

fn unit(n: usize, i: usize, s: f64) -> Vec<f64> {
    (0..n).map(|r| if r == i { s } else { 0.0 }).collect()
}

/// `τ = Σ μʲ log μʲ` on the positive orthant.
pub fn cn_flat(n: usize) -> Result<SymplecticPotential> {
    if n == 0 {
        return Err(GeomError::ParameterOutOfRange("cn_flat needs n ≥ 1".into()));
    }
    let tau = (1..n).fold(plogp(mu(n, 0)), |acc, i| acc.add(&plogp(mu(n, i))));
    let facets = (0..n).map(|i| (unit(n, i, 1.0), 0.0)).collect();
    Ok(SymplecticPotential::from_tau(
        format!("cn_flat({n})"),
        n,
        tau,
        facets,
        vec![(0.0, 2.0); n],
        vec![1.0; n],
    ))
}

/// Fubini–Study potential of ℂP² on the triangle `μⁱ > −1/3`, `μ¹ + μ² < 1/3`.
pub fn cp2_fubini_study() -> SymplecticPotential {
    let t = 1.0 / 3.0;
    let tau = plogp(mu(2, 0).add_const(t))
        .add(&plogp(mu(2, 1).add_const(t)))
        .add(&plogp(mu(2, 0).add(&mu(2, 1)).scale(-1.0).add_const(t)));
    SymplecticPotential::from_tau(
        "cp2_fubini_study",
        2,
        tau,
        vec![(vec![1.0, 0.0], t), (vec![0.0, 1.0], t), (vec![-1.0, -1.0], t)],
        vec![(-t, 2.0 * t); 2],
        vec![0.0, 0.0],
    )
}

/// Admissible metric on the k-th Hirzebruch surface, through its Hessian.
pub fn hirzebruch(k: f64, profile: MomentumProfile) -> Result<SymplecticPotential> {
    if !(k > 0.0) {
        return Err(GeomError::ParameterOutOfRange(format!("Hirzebruch index k = {k} must be positive")));
    }
    let (a, b) = (profile.a, profile.b);
    let theta = ScalarField::coord(2).compose_expr(&profile.theta, "x")?;
    let hess = move |at: &At, ord: usize| -> Result<JMat> {
        let m1 = at.coord(2, ord);
        let m2 = at.coord(3, ord);
        let d = m1.scale_re(k).sub(&m2);
        let th = theta.eval_jet(at, ord)?;
        let t11 = th.recip()?.add(&m2.scale_re(k).div(&m1.mul(&d).scale_re(2.0))?);
        let t12 = d.scale_re(2.0).recip()?.scale_re(-k);
        let t22 = m1.scale_re(k).div(&m2.mul(&d).scale_re(2.0))?;
        Ok(JMat::from_fn(2, 2, |r, c| match (r, c) {
            (0, 0) => t11.clone(),
            (1, 1) => t22.clone(),
            _ => t12.clone(),
        }))
    };
    Ok(SymplecticPotential::from_hessian(
        format!("hirzebruch(k={k}, [{a}, {b}], {})", profile.theta),
        2,
        hess,
        vec![
            (vec![0.0, 1.0], 0.0),
            (vec![k, -1.0], 0.0),
            (vec![-1.0, 0.0], b),
            (vec![1.0, 0.0], -a),
        ],
        vec![(a, b), (0.0, k * b)],
        vec![0.5 * (a + b), 0.25 * k * (a + b)],
    ))
}

/// `τ = e^{μ¹}(e^{μ²+c} + k)` on ℝ².
pub fn exponential(c: f64, k: f64) -> Result<SymplecticPotential> {
    if !(k > 0.0) {
        return Err(GeomError::ParameterOutOfRange(format!("exponential potential needs k > 0 (k = {k})")));
    }
    let tau = mu(2, 0).exp().mul(&mu(2, 1).add_const(c).exp().add_const(k));
    Ok(SymplecticPotential::from_tau(
        format!("exponential(c={c}, k={k})"),
        2,
        tau,
        Vec::new(),
        vec![(-1.0, 1.0); 2],
        vec![0.0, 0.0],
    ))
}

/// `τ = Σ (μⁱ + c) log(μⁱ + c) + (c − μ² − μ³) log(c − μ² − μ³)` in six
/// dimensions; separated in `μ¹`.
pub fn sixdim_simplex(c: f64) -> Result<SymplecticPotential> {
    if !(c > 0.0) {
        return Err(GeomError::ParameterOutOfRange(format!("sixdim_simplex needs c > 0 (c = {c})")));
    }
    let tau = (0..3)
        .map(|i| plogp(mu(3, i).add_const(c)))
        .fold(plogp(mu(3, 1).add(&mu(3, 2)).scale(-1.0).add_const(c)), |acc, t| acc.add(&t));
    Ok(SymplecticPotential::from_tau(
        format!("sixdim_simplex(c={c})"),
        3,
        tau,
        vec![
            (vec![1.0, 0.0, 0.0], c),
            (vec![0.0, 1.0, 0.0], c),
            (vec![0.0, 0.0, 1.0], c),
            (vec![0.0, -1.0, -1.0], c),
        ],
        vec![(-c, 2.0 * c); 3],
        vec![0.0, 0.0, 0.0],
    ))
}

/// Names, parameters and descriptions of the builtin potentials.
pub const BUILTIN_POTENTIALS: &[(&str, &str, &str)] = &[
    ("cn_flat", "n", "sum mu^j log mu^j, flat C^n; default C has C_1j = 0, C_23 = 0.3"),
    ("cp2_fubini_study", "", "Fubini-Study metric on CP^2; default C_12 = 0.1"),
    ("hirzebruch", "k, a, b", "admissible metric on F_k with quadratic profile; default C_12 = 0.1"),
    ("exponential", "c, k", "exp(mu1)(exp(mu2 + c) + k) on R^2; default C_12 = 0.1"),
    ("sixdim_simplex", "c", "separated six-dimensional simplex potential; default C_23 = 0.2"),
];

/// The n×n matrix with `C_ij = v = −C_ji`.
pub fn skew_matrix(n: usize, i: usize, j: usize, v: f64) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n, n);
    if n > j {
        c[(i, j)] = v;
        c[(j, i)] = -v;
    }
    c
}

/// A builtin potential with its default `C`. Unlisted parameters take
/// defaults; unknown parameter names are rejected.
pub fn builtin_potential(
    name: &str,
    params: &BTreeMap<String, f64>,
) -> Result<(SymplecticPotential, DMatrix<f64>)> {
    let allowed: &[&str] = match name {
        "cn_flat" => &["n"],
        "cp2_fubini_study" => &[],
        "hirzebruch" => &["k", "a", "b"],
        "exponential" => &["c", "k"],
        "sixdim_simplex" => &["c"],
        _ => return Err(GeomError::UnknownPotential(name.to_string())),
    };
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(GeomError::ParameterOutOfRange(format!("`{bad}` is not a parameter of {name}")));
    }
    let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
    match name {
        "cn_flat" => {
            let n = get("n", 3.0);
            if n < 1.0 || n.fract() != 0.0 {
                return Err(GeomError::ParameterOutOfRange(format!("n = {n} must be a positive integer")));
            }
            let n = n as usize;
            Ok((cn_flat(n)?, skew_matrix(n, 1, 2, 0.3)))
        }
        "cp2_fubini_study" => Ok((cp2_fubini_study(), skew_matrix(2, 0, 1, 0.1))),
        "hirzebruch" => {
            let k = get("k", 1.0);
            if k.fract() != 0.0 {
                return Err(GeomError::ParameterOutOfRange(format!("k = {k} must be a positive integer")));
            }
            let prof = MomentumProfile::quadratic(get("a", 1.0), get("b", 2.0))?;
            Ok((hirzebruch(k, prof)?, skew_matrix(2, 0, 1, 0.1)))
        }
        "exponential" => Ok((exponential(get("c", 0.0), get("k", 1.0))?, skew_matrix(2, 0, 1, 0.1))),
        _ => Ok((sixdim_simplex(get("c", 1.0))?, skew_matrix(3, 1, 2, 0.2))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structures::check_generalized_kahler;

    fn cp2(c12: f64) -> ToricGKData {
        ToricGKData::new(cp2_fubini_study(), skew_matrix(2, 0, 1, c12)).unwrap()
    }

    fn hz() -> ToricGKData {
        let pot = hirzebruch(1.0, MomentumProfile::quadratic(1.0, 2.0).unwrap()).unwrap();
        ToricGKData::new(pot, skew_matrix(2, 0, 1, 0.1)).unwrap()
    }

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    #[test]
    fn j_plus_squares_to_minus_identity() {
        let d = cp2(0.1);
        let at = d.site(&pt(&[0.3, 1.2, 0.05, -0.1])).unwrap();
        let (jp, jm) = toric_complex_structures(&d);
        for j in [jp, jm] {
            let m = j.eval(&at, 0).unwrap().values();
            let r = (&m * &m + DMatrix::<C64>::identity(4, 4)).camax();
            assert!(r < 1e-12, "{r}");
        }
    }

    #[test]
    fn cp2_pair_is_generalized_kahler() {
        let d = cp2(0.1);
        let plan = d.pot.sample_plan(3, 1, 0.2, 7);
        let pair = build_toric_gk(&d, &plan.sites()).unwrap();
        let rep = check_generalized_kahler(&pair, &plan, Tolerance::default());
        assert!(rep.pass(), "{}", rep.to_text());
    }

    #[test]
    fn toric_formulas_match_generic_path() {
        for d in [cp2(0.1), hz(), cp2(-0.4)] {
            let plan = d.pot.sample_plan(4, 2, 0.1, 11);
            let rep = check_toric_formulas(&d, &plan, Tolerance::default());
            assert!(rep.pass(), "{}", rep.to_text());
            assert!(rep.get("toric.epsilon1").is_some());
        }
    }

    #[test]
    fn kahler_case_has_tangent_free_j3() {
        let d = cp2(0.0);
        let q = toric_j3_quantities(&d, &pt(&[0.1, 0.2, 0.0, 0.1])).unwrap();
        assert!(q.pr_t.amax() < 1e-12);
        assert_eq!(dim4_epsilon1(&d, &pt(&[0.1, 0.2, 0.0, 0.1])), Err(GeomError::KahlerDegenerate));
        let d = cp2(0.2);
        let q = toric_j3_quantities(&d, &pt(&[0.1, 0.2, 0.0, 0.1])).unwrap();
        assert!(q.pr_t.amax() > 1e-3);
    }

    #[test]
    fn frames_coincide_without_c() {
        let d = cp2(0.0);
        let fr = toric_frames(&d, &pt(&[0.0, 0.0, 0.1, 0.1])).unwrap();
        for j in 0..2 {
            assert!((&fr.plus[j] - &fr.minus[j]).camax() < 1e-15);
        }
        assert!(fr.generates.is_none());
    }

    #[test]
    fn ratio_derivative_values() {
        let r = ratio_derivative(&cp2(0.1), &pt(&[0.0, 0.0, 0.0, 0.1])).unwrap();
        assert!((r - 1.5).abs() < 1e-10, "{r}");
        let r = ratio_derivative(&hz(), &pt(&[0.0, 0.0, 1.5, 0.5])).unwrap();
        assert!((r + 1.0 / 1.5).abs() < 1e-10, "{r}");
        let e = ToricGKData::new(exponential(0.3, 2.0).unwrap(), skew_matrix(2, 0, 1, 0.1)).unwrap();
        let r = ratio_derivative(&e, &pt(&[0.0, 0.0, 0.4, -0.2])).unwrap();
        assert!(r.abs() < 1e-12, "{r}");
    }

    #[test]
    fn outside_domain_is_rejected() {
        let err = ratio_derivative(&cp2(0.1), &pt(&[0.0, 0.0, 0.3, 0.3])).unwrap_err();
        assert!(matches!(err, GeomError::DomainViolation(_)));
    }

    #[test]
    fn momentum_profile_boundary_conditions() {
        assert!(MomentumProfile::quadratic(1.0, 3.0).is_ok());
        let bad = Expr::parse("(x - 1)*(3 - x)/2").unwrap();
        assert!(matches!(
            MomentumProfile::new(1.0, 3.0, bad),
            Err(GeomError::ParameterOutOfRange(_))
        ));
        assert!(MomentumProfile::quadratic(2.0, 1.0).is_err());
    }

    #[test]
    fn builtin_lookup() {
        let (p, c) = builtin_potential("cp2_fubini_study", &BTreeMap::new()).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(c[(0, 1)], 0.1);
        assert!(p.contains(&[0.0, 0.0]) && !p.contains(&[0.2, 0.2]));
        assert!(matches!(
            builtin_potential("nope", &BTreeMap::new()),
            Err(GeomError::UnknownPotential(_))
        ));
        let mut bad = BTreeMap::new();
        bad.insert("c".to_string(), -1.0);
        assert!(matches!(
            builtin_potential("sixdim_simplex", &bad),
            Err(GeomError::ParameterOutOfRange(_))
        ));
    }

    #[test]
    fn non_skew_c_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.1, 0.0]);
        assert!(ToricGKData::new(cp2_fubini_study(), c).is_err());
    }

    #[test]
    fn cn_flat_with_first_row_free_c_has_form_j3() {
        let (p, c) = builtin_potential("cn_flat", &BTreeMap::new()).unwrap();
        let d = ToricGKData::new(p, c).unwrap();
        let q = toric_j3_quantities(&d, &pt(&[0.1, 0.2, 0.3, 0.5, 1.2, 0.8])).unwrap();
        assert!(q.pr_t.amax() < 1e-12, "{}", q.pr_t);
    }
}

