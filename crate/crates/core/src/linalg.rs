//! Matrices of jets, and value-level subspace tools (rank, intersection,
//! membership) built on a rank-revealing SVD.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};
use crate::jet::{At, Jet, C64};

/// Relative singular-value threshold below which a direction counts as zero.
pub const RANK_REL_TOL: f64 = 1e-9;
/// Greedy column selection refuses pivots smaller than this (relative).
pub const PIVOT_TOL: f64 = 1e-6;

pub fn cz() -> C64 {
    C64::new(0.0, 0.0)
}

pub fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub const I: C64 = C64::new(0.0, 1.0);

/// Dense row-major matrix of jets.
#[derive(Clone, Debug)]
pub struct JMat {
    rows: usize,
    cols: usize,
    data: Vec<Jet>,
}

impl JMat {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Jet) -> JMat {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        JMat { rows, cols, data }
    }

    pub fn try_from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Result<Jet>,
    ) -> Result<JMat> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c)?);
            }
        }
        Ok(JMat { rows, cols, data })
    }

    pub fn zeros(at: &At, order: usize, rows: usize, cols: usize) -> JMat {
        let z = at.zero(order);
        JMat {
            rows,
            cols,
            data: vec![z; rows * cols],
        }
    }

    pub fn identity(at: &At, order: usize, n: usize) -> JMat {
        JMat::from_fn(n, n, |r, c| at.real(order, if r == c { 1.0 } else { 0.0 }))
    }

    /// Constant matrix from values.
    pub fn constant(at: &At, order: usize, m: &DMatrix<C64>) -> JMat {
        JMat::from_fn(m.nrows(), m.ncols(), |r, c| at.constant(order, m[(r, c)]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &Jet {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Jet) {
        self.data[r * self.cols + c] = v;
    }

    pub fn order(&self) -> usize {
        self.data.iter().map(|j| j.order()).min().unwrap_or(0)
    }

    pub fn map(&self, f: impl Fn(&Jet) -> Jet) -> JMat {
        JMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip(&self, o: &JMat, f: impl Fn(&Jet, &Jet) -> Jet) -> JMat {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols), "shape mismatch");
        JMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, o: &JMat) -> JMat {
        self.zip(o, |a, b| a.add(b))
    }

    pub fn sub(&self, o: &JMat) -> JMat {
        self.zip(o, |a, b| a.sub(b))
    }

    pub fn scale(&self, s: C64) -> JMat {
        self.map(|a| a.scale(s))
    }

    pub fn scale_jet(&self, s: &Jet) -> JMat {
        self.map(|a| a.mul(s))
    }

    pub fn neg(&self) -> JMat {
        self.map(|a| a.neg())
    }

    pub fn conj(&self) -> JMat {
        self.map(|a| a.conj())
    }

    pub fn truncate(&self, k: usize) -> JMat {
        self.map(|a| a.truncate(k))
    }

    /// Entry-wise partial derivative.
    pub fn d(&self, i: usize) -> JMat {
        self.map(|a| a.d(i))
    }

    pub fn transpose(&self) -> JMat {
        JMat::from_fn(self.cols, self.rows, |r, c| self.get(c, r).clone())
    }

    pub fn matmul(&self, o: &JMat) -> JMat {
        assert_eq!(self.cols, o.rows, "matmul shape mismatch");
        JMat::from_fn(self.rows, o.cols, |r, c| {
            let mut acc = self.get(r, 0).mul(o.get(0, c));
            for k in 1..self.cols {
                acc = acc.add(&self.get(r, k).mul(o.get(k, c)));
            }
            acc
        })
    }

    pub fn matvec(&self, v: &[Jet]) -> Vec<Jet> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|r| {
                let mut acc = self.get(r, 0).mul(&v[0]);
                for k in 1..self.cols {
                    acc = acc.add(&self.get(r, k).mul(&v[k]));
                }
                acc
            })
            .collect()
    }

    pub fn column(&self, c: usize) -> Vec<Jet> {
        (0..self.rows).map(|r| self.get(r, c).clone()).collect()
    }

    pub fn from_columns(cols: &[Vec<Jet>]) -> JMat {
        let rows = cols[0].len();
        JMat::from_fn(rows, cols.len(), |r, c| cols[c][r].clone())
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> JMat {
        JMat::from_fn(rows, cols, |r, c| self.get(r0 + r, c0 + c).clone())
    }

    /// Assemble `[[a, b], [c, d]]`.
    pub fn from_blocks(a: &JMat, b: &JMat, c: &JMat, d: &JMat) -> JMat {
        let (n1, m1) = (a.rows, a.cols);
        assert_eq!(b.rows, n1);
        assert_eq!(c.cols, m1);
        JMat::from_fn(n1 + c.rows, m1 + b.cols, |r, k| match (r < n1, k < m1) {
            (true, true) => a.get(r, k).clone(),
            (true, false) => b.get(r, k - m1).clone(),
            (false, true) => c.get(r - n1, k).clone(),
            (false, false) => d.get(r - n1, k - m1).clone(),
        })
    }

    pub fn values(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).value())
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting on values.
    pub fn inverse(&self) -> Result<JMat> {
        let n = self.rows;
        if n != self.cols {
            return Err(GeomError::DimensionMismatch(format!(
                "inverse of {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let order = self.order();
        let layout = self.data[0].layout().clone();
        let one = Jet::constant(&layout, order, cr(1.0));
        let zero = Jet::constant(&layout, order, cz());
        let mut a: Vec<Vec<Jet>> = (0..n)
            .map(|r| (0..n).map(|c| self.get(r, c).truncate(order)).collect())
            .collect();
        let mut inv: Vec<Vec<Jet>> = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| if r == c { one.clone() } else { zero.clone() })
                    .collect()
            })
            .collect();
        let scale = self.data.iter().map(|j| j.value().norm()).fold(0.0, f64::max);
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| {
                    a[x][col]
                        .value()
                        .norm()
                        .partial_cmp(&a[y][col].value().norm())
                        .unwrap()
                })
                .unwrap();
            if a[piv][col].value().norm() <= 1e-14 * scale.max(1e-300) {
                return Err(GeomError::DivisionNearZero(a[piv][col].value().norm()));
            }
            a.swap(col, piv);
            inv.swap(col, piv);
            let p = a[col][col].recip()?;
            for c in 0..n {
                a[col][c] = a[col][c].mul(&p);
                inv[col][c] = inv[col][c].mul(&p);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r][col].clone();
                if f.max_abs() == 0.0 {
                    continue;
                }
                for c in 0..n {
                    a[r][c] = a[r][c].sub(&f.mul(&a[col][c]));
                    inv[r][c] = inv[r][c].sub(&f.mul(&inv[col][c]));
                }
            }
        }
        Ok(JMat {
            rows: n,
            cols: n,
            data: inv.into_iter().flatten().collect(),
        })
    }

    /// Largest coefficient magnitude over all entries and all orders.
    pub fn max_abs_jet(&self) -> f64 {
        self.data.iter().map(|j| j.max_abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_value(&self) -> f64 {
        self.data.iter().map(|j| j.value().norm()).fold(0.0, f64::max)
    }
}

pub fn dot(a: &[Jet], b: &[Jet]) -> Jet {
    let mut acc = a[0].mul(&b[0]);
    for k in 1..a.len() {
        acc = acc.add(&a[k].mul(&b[k]));
    }
    acc
}

pub fn vadd(a: &[Jet], b: &[Jet]) -> Vec<Jet> {
    a.iter().zip(b).map(|(x, y)| x.add(y)).collect()
}

pub fn vsub(a: &[Jet], b: &[Jet]) -> Vec<Jet> {
    a.iter().zip(b).map(|(x, y)| x.sub(y)).collect()
}

pub fn vscale(a: &[Jet], s: &Jet) -> Vec<Jet> {
    a.iter().map(|x| x.mul(s)).collect()
}

pub fn vscale_c(a: &[Jet], s: C64) -> Vec<Jet> {
    a.iter().map(|x| x.scale(s)).collect()
}

pub fn vvalues(a: &[Jet]) -> DVector<C64> {
    DVector::from_iterator(a.len(), a.iter().map(|j| j.value()))
}

pub fn vconj(a: &[Jet]) -> Vec<Jet> {
    a.iter().map(|j| j.conj()).collect()
}

pub fn vtruncate(a: &[Jet], k: usize) -> Vec<Jet> {
    a.iter().map(|j| j.truncate(k)).collect()
}

/// Sup-norm of the values of a jet vector.
pub fn vnorm_inf(a: &[Jet]) -> f64 {
    a.iter().map(|j| j.value().norm()).fold(0.0, f64::max)
}

/// Real form `[[A, −B], [B, A]]` of `A + iB`. Complex SVD in nalgebra can
/// lose accuracy on rank-deficient input; the real one does not.
fn realify(m: &DMatrix<C64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Singular values of a complex matrix (descending) and the real SVD of its
/// real form.
fn complex_svd(m: &DMatrix<C64>, u: bool, v: bool) -> (Vec<f64>, nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>) {
    let svd = realify(m).svd(u, v);
    let mut sv = svd.singular_values.as_slice().to_vec();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // each singular value of the complex matrix appears twice
    let sv = sv.into_iter().step_by(2).collect();
    (sv, svd)
}

/// Complex orthonormal basis of the span of real-form vectors `(a; b) ↦ a + ib`.
/// The vectors come in pairs spanning the same complex line, so `r` are kept.
fn complexify_basis(real_cols: &[DVector<f64>], n: usize, r: usize) -> DMatrix<C64> {
    let mut basis: Vec<DVector<C64>> = Vec::new();
    let cands: Vec<DVector<C64>> = real_cols
        .iter()
        .map(|v| DVector::from_fn(n, |i, _| C64::new(v[i], v[n + i])))
        .collect();
    while basis.len() < r {
        let mut best: Option<(f64, DVector<C64>)> = None;
        for c in &cands {
            let mut w = c.clone();
            for _ in 0..2 {
                for q in &basis {
                    let a = q.dotc(&w);
                    w -= q * a;
                }
            }
            let nw = w.norm();
            if best.as_ref().is_none_or(|b| nw > b.0) {
                best = Some((nw, w));
            }
        }
        match best {
            Some((nw, w)) if nw > 1e-8 => basis.push(w / C64::new(nw, 0.0)),
            _ => break,
        }
    }
    if basis.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

fn sorted_indices(sv: &DVector<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sv.len()).collect();
    idx.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
    idx
}

/// Singular values (descending) with the rank decided by the relative
/// threshold; values inside the ambiguity band raise `ToleranceAmbiguity`.
pub fn numerical_rank(m: &DMatrix<C64>) -> Result<usize> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    let (sv, _) = complex_svd(m, false, false);
    rank_from_singular_values(&sv)
}

fn rank_from_singular_values(sv: &[f64]) -> Result<usize> {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(0);
    }
    let thr = RANK_REL_TOL * smax;
    let mut rank = 0;
    for &s in sv {
        if s > thr * 10.0 {
            rank += 1;
        } else if s >= thr / 10.0 {
            return Err(GeomError::ToleranceAmbiguity {
                sigma: s / smax,
                threshold: RANK_REL_TOL,
            });
        }
    }
    Ok(rank)
}

/// Orthonormal basis (columns) of the column span of `m`.
pub fn orth_basis(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = m.nrows();
    if m.ncols() == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let (sv, svd) = complex_svd(m, true, false);
    let r = rank_from_singular_values(&sv)?;
    let u = svd.u.unwrap();
    let cols: Vec<DVector<f64>> = sorted_indices(&svd.singular_values)[..2 * r]
        .iter()
        .map(|&k| u.column(k).into_owned())
        .collect();
    Ok(complexify_basis(&cols, n, r))
}

/// Least-squares solution of `a x = b` (minimum norm).
pub fn lstsq(a: &DMatrix<C64>, b: &DVector<C64>) -> DVector<C64> {
    let (r, c) = a.shape();
    let rb = DVector::from_fn(2 * r, |i, _| if i < r { b[i].re } else { b[i - r].im });
    let svd = realify(a).svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd
        .solve(&rb, RANK_REL_TOL * smax.max(f64::MIN_POSITIVE))
        .expect("SVD computed with both factors");
    DVector::from_fn(c, |i, _| C64::new(x[i], x[c + i]))
}

/// Basis of the null space of `m` (vectors x with m x = 0).
pub fn null_space(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let ncols = m.ncols();
    let padded = if m.nrows() < ncols {
        let mut p = DMatrix::zeros(ncols, ncols);
        p.view_mut((0, 0), (m.nrows(), ncols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let (sv, svd) = complex_svd(&padded, false, true);
    let r = rank_from_singular_values(&sv)?;
    let vt = svd.v_t.unwrap();
    let cols: Vec<DVector<f64>> = sorted_indices(&svd.singular_values)[2 * r..]
        .iter()
        .map(|&k| vt.row(k).transpose())
        .collect();
    Ok(complexify_basis(&cols, ncols, ncols - r))
}

/// Orthonormal basis of `span A ∩ span B`.
pub fn intersection(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(GeomError::DimensionMismatch("intersection of spans".into()));
    }
    let qa = orth_basis(a)?;
    let qb = orth_basis(b)?;
    let id = DMatrix::<C64>::identity(n, n);
    let ca = &id - &qa * qa.adjoint();
    let cb = &id - &qb * qb.adjoint();
    let mut stacked = DMatrix::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(&ca);
    stacked.view_mut((n, 0), (n, n)).copy_from(&cb);
    null_space(&stacked)
}

/// Distance from `v` to the span of the columns of `span`.
pub fn membership_residual(span: &DMatrix<C64>, v: &DVector<C64>) -> Result<f64> {
    let q = orth_basis(span)?;
    let proj = &q * (q.adjoint() * v);
    Ok((v - proj).norm())
}

/// Greedy pivoted selection of `rank` independent vectors from a list of
/// jet vectors, decided on values. Returns the selected indices.
pub fn select_independent(vectors: &[Vec<Jet>], rank: usize) -> Result<Vec<usize>> {
    let vals: Vec<DVector<C64>> = vectors.iter().map(|v| vvalues(v)).collect();
    let maxn = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut basis: Vec<DVector<C64>> = Vec::new();
    let mut chosen = Vec::new();
    for _ in 0..rank {
        let mut best: Option<(usize, f64, DVector<C64>)> = None;
        for (k, v) in vals.iter().enumerate() {
            if chosen.contains(&k) {
                continue;
            }
            let mut r = v.clone();
            for q in &basis {
                let c = q.dotc(&r);
                r -= q * c;
            }
            let nr = r.norm();
            if best.as_ref().is_none_or(|b| nr > b.1) {
                best = Some((k, nr, r));
            }
        }
        let (k, nr, r) = best.ok_or_else(|| {
            GeomError::FrameDegeneracy(format!("only {} vectors for rank {rank}", chosen.len()))
        })?;
        if nr < PIVOT_TOL * maxn.max(f64::MIN_POSITIVE) {
            return Err(GeomError::FrameDegeneracy(format!(
                "pivot {nr:.3e} below {PIVOT_TOL:.0e} relative while selecting {rank} columns"
            )));
        }
        basis.push(r / C64::new(nr, 0.0));
        chosen.push(k);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Smooth frame of the image of a projector field: columns of `p` chosen by
/// pivoting on values. The number of columns is the numerical rank.
pub fn frame_from_projector(p: &JMat) -> Result<Vec<Vec<Jet>>> {
    let rank = numerical_rank(&p.values())?;
    let cols: Vec<Vec<Jet>> = (0..p.cols()).map(|c| p.column(c)).collect();
    let idx = select_independent(&cols, rank)?;
    Ok(idx.into_iter().map(|k| cols[k].clone()).collect())
}

/// Columns of a jet-vector list as a value matrix.
pub fn values_matrix(vectors: &[Vec<Jet>], rows: usize) -> DMatrix<C64> {
    if vectors.is_empty() {
        return DMatrix::zeros(rows, 0);
    }
    DMatrix::from_columns(&vectors.iter().map(|v| vvalues(v)).collect::<Vec<_>>())
}

/// Independent subset of a spanning list of jet vectors.
pub fn independent_subset(vectors: &[Vec<Jet>]) -> Result<Vec<Vec<Jet>>> {
    if vectors.is_empty() {
        return Ok(Vec::new());
    }
    let rows = vectors[0].len();
    let rank = numerical_rank(&values_matrix(vectors, rows))?;
    let idx = select_independent(vectors, rank)?;
    Ok(idx.into_iter().map(|k| vectors[k].clone()).collect())
}
