//! The generalized tangent bundle 𝕋M = TM ⊕ T*M.
//!
//! Pointwise elements are [`GVector`]s of complex numbers; sections at a point
//! are [`GSec`]s of jets. Endomorphisms act on the stacked column
//! `[X; ξ]` of length `2N`, where `N` is the chart dimension.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};
use crate::jet::{At, Jet, C64};
use crate::linalg::{cr, cz, JMat};

/// Anything that can be evaluated as jets at a point.
pub struct Field<T> {
    eval: Arc<dyn Fn(&At, usize) -> Result<T> + Send + Sync>,
    label: Arc<str>,
}

impl<T> Clone for Field<T> {
    fn clone(&self) -> Self {
        Field {
            eval: self.eval.clone(),
            label: self.label.clone(),
        }
    }
}

impl<T> fmt::Debug for Field<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Field({})", self.label)
    }
}

impl<T> Field<T> {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(&At, usize) -> Result<T> + Send + Sync + 'static,
    ) -> Field<T> {
        Field {
            eval: Arc::new(f),
            label: label.into().into(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Same field under another label.
    pub fn relabel(&self, label: impl Into<String>) -> Field<T> {
        Field { eval: self.eval.clone(), label: label.into().into() }
    }

    pub fn eval(&self, at: &At, order: usize) -> Result<T> {
        at.check_order(order)?;
        (self.eval)(at, order)
    }
}

pub type VectorField = Field<Vec<Jet>>;
pub type SectionField = Field<GSec>;
pub type EndoField = Field<JMat>;

/// Element of (𝕋M)^ℂ at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct GVector {
    pub x: DVector<C64>,
    pub xi: DVector<C64>,
}

impl GVector {
    pub fn new(x: DVector<C64>, xi: DVector<C64>) -> Result<GVector> {
        if x.len() != xi.len() {
            return Err(GeomError::DimensionMismatch(format!(
                "tangent part {} vs cotangent part {}",
                x.len(),
                xi.len()
            )));
        }
        Ok(GVector { x, xi })
    }

    pub fn real(x: &[f64], xi: &[f64]) -> Result<GVector> {
        GVector::new(
            DVector::from_iterator(x.len(), x.iter().map(|&v| cr(v))),
            DVector::from_iterator(xi.len(), xi.iter().map(|&v| cr(v))),
        )
    }

    pub fn zero(n: usize) -> GVector {
        GVector {
            x: DVector::zeros(n),
            xi: DVector::zeros(n),
        }
    }

    /// Basis vector `∂_i` (for `i < N`) or `dx^{i-N}`.
    pub fn basis(n: usize, i: usize) -> GVector {
        let mut g = GVector::zero(n);
        if i < n {
            g.x[i] = cr(1.0);
        } else {
            g.xi[i - n] = cr(1.0);
        }
        g
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn stacked(&self) -> DVector<C64> {
        let n = self.dim();
        DVector::from_fn(2 * n, |i, _| if i < n { self.x[i] } else { self.xi[i - n] })
    }

    pub fn from_stacked(v: &DVector<C64>) -> GVector {
        let n = v.len() / 2;
        GVector {
            x: v.rows(0, n).into_owned(),
            xi: v.rows(n, n).into_owned(),
        }
    }

    fn check(&self, o: &GVector) -> Result<()> {
        if self.dim() != o.dim() {
            return Err(GeomError::DimensionMismatch(format!(
                "{} vs {}",
                self.dim(),
                o.dim()
            )));
        }
        Ok(())
    }

    /// `⟨X+ξ, Y+η⟩ = ½(η(X) + ξ(Y))`.
    pub fn pairing(&self, o: &GVector) -> Result<C64> {
        self.check(o)?;
        Ok((o.xi.dot(&self.x) + self.xi.dot(&o.x)) * 0.5)
    }

    /// `(X+ξ, Y+η) = ½(ξ(Y) − η(X))`.
    pub fn skew_pairing(&self, o: &GVector) -> Result<C64> {
        self.check(o)?;
        Ok((self.xi.dot(&o.x) - o.xi.dot(&self.x)) * 0.5)
    }

    /// `X + ξ ↦ X + ξ + i_X B`, with `B` given by components `B_ij`.
    pub fn b_field_transform(&self, b: &DMatrix<C64>) -> Result<GVector> {
        let n = self.dim();
        if b.shape() != (n, n) {
            return Err(GeomError::DimensionMismatch("B-field shape".into()));
        }
        Ok(GVector {
            x: self.x.clone(),
            xi: &self.xi + b.transpose() * &self.x,
        })
    }

    /// `(X, ξ) ↦ (hX, ξ/h)`.
    pub fn conformal_map(&self, h: f64) -> Result<GVector> {
        if h == 0.0 || !h.is_finite() {
            return Err(GeomError::ZeroConformalFactor);
        }
        Ok(GVector {
            x: &self.x * cr(h),
            xi: &self.xi * cr(1.0 / h),
        })
    }

    pub fn apply(&self, m: &DMatrix<C64>) -> Result<GVector> {
        if m.shape() != (2 * self.dim(), 2 * self.dim()) {
            return Err(GeomError::DimensionMismatch("endomorphism shape".into()));
        }
        Ok(GVector::from_stacked(&(m * self.stacked())))
    }

    pub fn conj(&self) -> GVector {
        GVector {
            x: self.x.map(|z| z.conj()),
            xi: self.xi.map(|z| z.conj()),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.xi.norm_squared()).sqrt()
    }
}

/// A section of (𝕋M)^ℂ as jets at a point.
#[derive(Clone, Debug)]
pub struct GSec {
    pub x: Vec<Jet>,
    pub xi: Vec<Jet>,
}

impl GSec {
    pub fn new(x: Vec<Jet>, xi: Vec<Jet>) -> GSec {
        assert_eq!(x.len(), xi.len());
        GSec { x, xi }
    }

    pub fn vector(x: Vec<Jet>) -> GSec {
        let z = x[0].scale(cz());
        let xi = vec![z; x.len()];
        GSec { x, xi }
    }

    pub fn form(xi: Vec<Jet>) -> GSec {
        let z = xi[0].scale(cz());
        let x = vec![z; xi.len()];
        GSec { x, xi }
    }

    pub fn zero(at: &At, order: usize) -> GSec {
        let n = at.dim();
        GSec {
            x: vec![at.zero(order); n],
            xi: vec![at.zero(order); n],
        }
    }

    pub fn basis(at: &At, order: usize, i: usize) -> GSec {
        let n = at.dim();
        let mut s = GSec::zero(at, order);
        if i < n {
            s.x[i] = at.real(order, 1.0);
        } else {
            s.xi[i - n] = at.real(order, 1.0);
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn stacked(&self) -> Vec<Jet> {
        self.x.iter().chain(self.xi.iter()).cloned().collect()
    }

    pub fn from_stacked(v: Vec<Jet>) -> GSec {
        let n = v.len() / 2;
        let mut x = v;
        let xi = x.split_off(n);
        GSec { x, xi }
    }

    pub fn order(&self) -> usize {
        self.x.iter().chain(&self.xi).map(|j| j.order()).min().unwrap_or(0)
    }

    fn map(&self, f: impl Fn(&Jet) -> Jet) -> GSec {
        GSec {
            x: self.x.iter().map(&f).collect(),
            xi: self.xi.iter().map(&f).collect(),
        }
    }

    pub fn add(&self, o: &GSec) -> GSec {
        GSec {
            x: self.x.iter().zip(&o.x).map(|(a, b)| a.add(b)).collect(),
            xi: self.xi.iter().zip(&o.xi).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn sub(&self, o: &GSec) -> GSec {
        GSec {
            x: self.x.iter().zip(&o.x).map(|(a, b)| a.sub(b)).collect(),
            xi: self.xi.iter().zip(&o.xi).map(|(a, b)| a.sub(b)).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> GSec {
        self.map(|j| j.scale(s))
    }

    pub fn scale_jet(&self, s: &Jet) -> GSec {
        self.map(|j| j.mul(s))
    }

    pub fn conj(&self) -> GSec {
        self.map(|j| j.conj())
    }

    pub fn truncate(&self, k: usize) -> GSec {
        self.map(|j| j.truncate(k))
    }

    pub fn value(&self) -> GVector {
        GVector {
            x: DVector::from_iterator(self.dim(), self.x.iter().map(|j| j.value())),
            xi: DVector::from_iterator(self.dim(), self.xi.iter().map(|j| j.value())),
        }
    }

    pub fn apply(&self, m: &JMat) -> GSec {
        GSec::from_stacked(m.matvec(&self.stacked()))
    }

    /// `⟨u, v⟩` as a jet.
    pub fn pairing(&self, o: &GSec) -> Jet {
        let a = crate::linalg::dot(&o.xi, &self.x);
        let b = crate::linalg::dot(&self.xi, &o.x);
        a.add(&b).scale(cr(0.5))
    }

    /// `ξ(Y)` for this section's cotangent part.
    pub fn form_on(&self, y: &[Jet]) -> Jet {
        crate::linalg::dot(&self.xi, y)
    }
}

/// Matrix of the pairing: `⟨u, v⟩ = uᵀ Q v`.
pub fn pairing_matrix(n: usize) -> DMatrix<C64> {
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        if (r < n && c == r + n) || (r >= n && c + n == r) {
            cr(0.5)
        } else {
            cz()
        }
    })
}

pub fn pairing_jmat(at: &At, order: usize) -> JMat {
    JMat::constant(at, order, &pairing_matrix(at.dim()))
}

/// Endomorphism assembled from its blocks, acting on `[X; ξ]`:
/// `tt: X→X`, `tc: ξ→X`, `ct: X→ξ`, `cc: ξ→ξ`.
pub fn endo_from_blocks(tt: &JMat, tc: &JMat, ct: &JMat, cc: &JMat) -> JMat {
    JMat::from_blocks(tt, tc, ct, cc)
}

/// `exp(B)` as a matrix, with `B` given by its component matrix.
pub fn b_field_matrix(b: &JMat) -> JMat {
    let n = b.rows();
    let layout = b.get(0, 0).layout().clone();
    let order = b.order();
    let one = Jet::constant(&layout, order, cr(1.0));
    let zero = Jet::constant(&layout, order, cz());
    let id = JMat::from_fn(n, n, |r, c| if r == c { one.clone() } else { zero.clone() });
    let z = JMat::from_fn(n, n, |_, _| zero.clone());
    JMat::from_blocks(&id, &z, &b.transpose(), &id)
}

/// `τ_h = diag(h·I, I/h)`.
pub fn conformal_matrix(h: &Jet, n: usize) -> Result<JMat> {
    if h.value().norm() < crate::jet::EPS_DIV {
        return Err(GeomError::ZeroConformalFactor);
    }
    let inv = h.recip()?;
    let zero = h.scale(cz());
    Ok(JMat::from_fn(2 * n, 2 * n, |r, c| {
        if r != c {
            zero.clone()
        } else if r < n {
            h.clone()
        } else {
            inv.clone()
        }
    }))
}

/// Apply an endomorphism field to a section field at one site.
pub fn apply_endo(a: &EndoField, u: &SectionField, at: &At) -> Result<GVector> {
    let m = a.eval(at, 0)?;
    let s = u.eval(at, 0)?;
    if m.rows() != 2 * s.dim() || m.cols() != 2 * s.dim() {
        return Err(GeomError::DimensionMismatch(format!(
            "endomorphism {}x{} on section of rank {}",
            m.rows(),
            m.cols(),
            2 * s.dim()
        )));
    }
    Ok(s.apply(&m).value())
}

/// Constant coordinate section `Σ x_i ∂_i + Σ ξ_i dx^i`.
pub fn constant_section(label: &str, g: GVector) -> SectionField {
    Field::new(label.to_string(), move |at, k| {
        let x = g.x.iter().map(|&z| at.constant(k, z)).collect();
        let xi = g.xi.iter().map(|&z| at.constant(k, z)).collect();
        Ok(GSec::new(x, xi))
    })
}
