//! Differential forms in coordinate components, and the basic first-order
//! operators on vector fields and forms.
//!
//! A k-form stores the full antisymmetric component array
//! `α_{i₁…i_k} = α(∂_{i₁}, …, ∂_{i_k})`. Wedge products and `d` follow the
//! determinant convention, so `(dx¹∧dx²)(∂₁, ∂₂) = 1`.

use nalgebra::DVector;

use crate::jet::{At, Jet, C64};
use crate::linalg::{cr, cz, JMat};
use crate::tangent::Field;

pub type FormField = Field<Form>;

#[derive(Clone, Debug)]
pub struct Form {
    n: usize,
    deg: usize,
    c: Vec<Jet>,
}

fn flat(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

fn unflat(n: usize, deg: usize, mut k: usize) -> Vec<usize> {
    let mut idx = vec![0; deg];
    for slot in (0..deg).rev() {
        idx[slot] = k % n;
        k /= n;
    }
    idx
}

/// Sign of the permutation sorting `idx`, or 0 when an index repeats.
fn perm_sign(idx: &[usize]) -> i32 {
    let mut v = idx.to_vec();
    let mut sign = 1;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] == v[j + 1] {
                return 0;
            }
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        0
    } else {
        sign
    }
}

/// Split positions `0..p+q` into a p-subset and its complement, with the
/// sign of the shuffle.
fn shuffles(p: usize, q: usize) -> Vec<(Vec<usize>, Vec<usize>, i32)> {
    let total = p + q;
    let mut out = Vec::new();
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != p {
            continue;
        }
        let a: Vec<usize> = (0..total).filter(|i| mask & (1 << i) != 0).collect();
        let b: Vec<usize> = (0..total).filter(|i| mask & (1 << i) == 0).collect();
        let order: Vec<usize> = a.iter().chain(&b).cloned().collect();
        out.push((a, b, perm_sign(&order)));
    }
    out
}

impl Form {
    pub fn zero(at: &At, order: usize, deg: usize) -> Form {
        let n = at.dim();
        Form {
            n,
            deg,
            c: vec![at.zero(order); n.pow(deg as u32)],
        }
    }

    pub fn scalar(f: Jet) -> Form {
        let n = f.layout().dim();
        Form { n, deg: 0, c: vec![f] }
    }

    pub fn one_form(c: Vec<Jet>) -> Form {
        Form {
            n: c.len(),
            deg: 1,
            c,
        }
    }

    /// 2-form from its component matrix `α_ij`.
    pub fn two_form(m: &JMat) -> Form {
        let n = m.rows();
        Form {
            n,
            deg: 2,
            c: (0..n * n).map(|k| m.get(k / n, k % n).clone()).collect(),
        }
    }

    /// 2-form whose map `X ↦ i_X α` has matrix `w` (so `α = wᵀ`).
    pub fn two_form_from_map(w: &JMat) -> Form {
        Form::two_form(&w.transpose())
    }

    /// Build a form from the components on strictly increasing index tuples.
    pub fn from_increasing(
        at: &At,
        order: usize,
        deg: usize,
        mut f: impl FnMut(&[usize]) -> Jet,
    ) -> Form {
        let mut out = Form::zero(at, order, deg);
        let n = out.n;
        for k in 0..out.c.len() {
            let idx = unflat(n, deg, k);
            if idx.windows(2).all(|w| w[0] < w[1]) {
                let v = f(&idx);
                out.set_antisym(&idx, v);
            }
        }
        out
    }

    fn set_antisym(&mut self, idx: &[usize], v: Jet) {
        // write v on every permutation of idx with its sign
        let deg = idx.len();
        for k in 0..self.c.len() {
            let j = unflat(self.n, deg, k);
            let mut sj = j.clone();
            sj.sort_unstable();
            if sj == idx {
                let s = perm_sign(&j);
                self.c[k] = v.scale(cr(s as f64));
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.deg
    }

    pub fn get(&self, idx: &[usize]) -> &Jet {
        &self.c[flat(self.n, idx)]
    }

    pub fn order(&self) -> usize {
        self.c.iter().map(|j| j.order()).min().unwrap_or(0)
    }

    pub fn components(&self) -> &[Jet] {
        &self.c
    }

    fn zip(&self, o: &Form, f: impl Fn(&Jet, &Jet) -> Jet) -> Form {
        assert_eq!((self.n, self.deg), (o.n, o.deg), "form shape mismatch");
        Form {
            n: self.n,
            deg: self.deg,
            c: self.c.iter().zip(&o.c).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(&Jet) -> Jet) -> Form {
        Form {
            n: self.n,
            deg: self.deg,
            c: self.c.iter().map(f).collect(),
        }
    }

    pub fn add(&self, o: &Form) -> Form {
        self.zip(o, |a, b| a.add(b))
    }

    pub fn sub(&self, o: &Form) -> Form {
        self.zip(o, |a, b| a.sub(b))
    }

    pub fn scale(&self, s: C64) -> Form {
        self.map(|a| a.scale(s))
    }

    pub fn scale_jet(&self, s: &Jet) -> Form {
        self.map(|a| a.mul(s))
    }

    pub fn conj(&self) -> Form {
        self.map(|a| a.conj())
    }

    pub fn truncate(&self, k: usize) -> Form {
        self.map(|a| a.truncate(k))
    }

    /// Largest component magnitude (values only).
    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|j| j.value().norm()).fold(0.0, f64::max)
    }

    /// Component matrix of a 2-form.
    pub fn matrix(&self) -> JMat {
        assert_eq!(self.deg, 2);
        let n = self.n;
        JMat::from_fn(n, n, |r, c| self.get(&[r, c]).clone())
    }

    /// Matrix of `X ↦ i_X α` for a 2-form.
    pub fn map_matrix(&self) -> JMat {
        self.matrix().transpose()
    }

    /// Exterior derivative; the result has one order less.
    pub fn d(&self) -> Form {
        let n = self.n;
        let deg = self.deg + 1;
        let len = n.pow(deg as u32);
        let layout = self.c[0].layout().clone();
        let ord = self.order().saturating_sub(1);
        let zero = Jet::constant(&layout, ord, cz());
        let c = (0..len)
            .map(|k| {
                let idx = unflat(n, deg, k);
                let mut acc = zero.clone();
                for j in 0..deg {
                    let mut rest = idx.clone();
                    let i = rest.remove(j);
                    let term = self.get(&rest).d(i);
                    acc = if j % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
                }
                acc
            })
            .collect();
        Form { n, deg, c }
    }

    /// Interior product `i_X α`.
    pub fn interior(&self, x: &[Jet]) -> Form {
        assert!(self.deg >= 1, "interior product of a function");
        let n = self.n;
        let deg = self.deg - 1;
        let len = n.pow(deg as u32);
        let c = (0..len)
            .map(|k| {
                let rest = unflat(n, deg, k);
                let mut acc: Option<Jet> = None;
                for (i, xi) in x.iter().enumerate() {
                    let mut idx = vec![i];
                    idx.extend_from_slice(&rest);
                    let t = xi.mul(self.get(&idx));
                    acc = Some(match acc {
                        None => t,
                        Some(a) => a.add(&t),
                    });
                }
                acc.unwrap()
            })
            .collect();
        Form { n, deg, c }
    }

    pub fn wedge(&self, o: &Form) -> Form {
        assert_eq!(self.n, o.n);
        let (p, q) = (self.deg, o.deg);
        let deg = p + q;
        let n = self.n;
        let sh = shuffles(p, q);
        let layout = self.c[0].layout().clone();
        let ord = self.order().min(o.order());
        let zero = Jet::constant(&layout, ord, cz());
        let c = (0..n.pow(deg as u32))
            .map(|k| {
                let idx = unflat(n, deg, k);
                if perm_sign(&idx) == 0 {
                    return zero.clone();
                }
                let mut acc = zero.clone();
                for (a, b, s) in &sh {
                    let ia: Vec<usize> = a.iter().map(|&t| idx[t]).collect();
                    let ib: Vec<usize> = b.iter().map(|&t| idx[t]).collect();
                    let t = self.get(&ia).mul(o.get(&ib));
                    acc = if *s > 0 { acc.add(&t) } else { acc.sub(&t) };
                }
                acc
            })
            .collect();
        Form { n, deg, c }
    }

    /// Full contraction with `deg` vectors.
    pub fn eval(&self, vs: &[&[Jet]]) -> Jet {
        assert_eq!(vs.len(), self.deg);
        let mut f = self.clone();
        for v in vs {
            f = f.interior(v);
        }
        f.c[0].clone()
    }

    /// Full contraction on value vectors.
    pub fn eval_values(&self, vs: &[&DVector<C64>]) -> C64 {
        assert_eq!(vs.len(), self.deg);
        let mut acc = cz();
        for k in 0..self.c.len() {
            let idx = unflat(self.n, self.deg, k);
            let mut t = self.c[k].value();
            if t == cz() {
                continue;
            }
            for (slot, &i) in idx.iter().enumerate() {
                t *= vs[slot][i];
            }
            acc += t;
        }
        acc
    }

    /// Lie derivative by Cartan's formula `i_X dα + d(i_X α)`.
    pub fn lie_derivative(&self, x: &[Jet]) -> Form {
        if self.deg == 0 {
            return Form::scalar(directional(x, &self.c[0]));
        }
        let a = self.d().interior(x);
        let b = self.interior(x).d();
        let k = a.order().min(b.order());
        a.truncate(k).add(&b.truncate(k))
    }
}

/// `X(f) = X^j ∂_j f`.
pub fn directional(x: &[Jet], f: &Jet) -> Jet {
    let mut acc = x[0].mul(&f.d(0));
    for (j, xj) in x.iter().enumerate().skip(1) {
        acc = acc.add(&xj.mul(&f.d(j)));
    }
    acc
}

/// `[X, Y]^i = X^j ∂_j Y^i − Y^j ∂_j X^i`.
pub fn lie_bracket(x: &[Jet], y: &[Jet]) -> Vec<Jet> {
    (0..x.len())
        .map(|i| directional(x, &y[i]).sub(&directional(y, &x[i])))
        .collect()
}

/// Lie derivative of a 1-form: `(𝓛_X η)_i = X^j ∂_j η_i + η_j ∂_i X^j`.
pub fn lie_derivative_1form(x: &[Jet], eta: &[Jet]) -> Vec<Jet> {
    (0..x.len())
        .map(|i| {
            let mut acc = directional(x, &eta[i]);
            for j in 0..x.len() {
                acc = acc.add(&eta[j].mul(&x[j].d(i)));
            }
            acc
        })
        .collect()
}

/// Differential of a function as a covector of jets.
pub fn grad(f: &Jet) -> Vec<Jet> {
    (0..f.layout().dim()).map(|i| f.d(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::{Layout, Point};

    fn site(p: Vec<f64>) -> At {
        At::new(Layout::new(p.len(), 4), Point(p))
    }

    #[test]
    fn d_of_mu_dt() {
        // chart (t1, t2, mu1, mu2); α = μ¹ dt¹ → dμ¹∧dt¹
        let at = site(vec![0.3, 0.1, 0.7, 0.2]);
        let mut c = vec![at.zero(2); 4];
        c[0] = at.coord(2, 2);
        let da = Form::one_form(c).d();
        assert_eq!(da.get(&[2, 0]).value(), cr(1.0));
        assert_eq!(da.get(&[0, 2]).value(), cr(-1.0));
        assert_eq!(da.max_abs(), 1.0);
    }

    #[test]
    fn dd_vanishes() {
        let at = site(vec![0.3, 0.1, 0.7]);
        let x = at.coord(0, 3);
        let y = at.coord(1, 3);
        let z = at.coord(2, 3);
        let f = x.mul(&y).mul(&z).add(&x.mul(&x).exp());
        let ddf = Form::scalar(f).d().d();
        assert!(ddf.max_abs() < 1e-12);
    }

    #[test]
    fn wedge_determinant_convention() {
        let at = site(vec![0.0, 0.0]);
        let dx = Form::one_form(vec![at.real(1, 1.0), at.zero(1)]);
        let dy = Form::one_form(vec![at.zero(1), at.real(1, 1.0)]);
        let w = dx.wedge(&dy);
        assert_eq!(w.get(&[0, 1]).value(), cr(1.0));
        assert_eq!(w.get(&[1, 0]).value(), cr(-1.0));
    }

    #[test]
    fn bracket_examples() {
        let at = site(vec![0.4, -0.2]);
        let one = at.real(2, 1.0);
        let zero = at.zero(2);
        let x = vec![one.clone(), zero.clone()];
        let y = vec![zero.clone(), at.coord(0, 2)];
        let b = lie_bracket(&x, &y);
        assert_eq!(b[0].value(), cz());
        assert_eq!(b[1].value(), cr(1.0));
        let xx = vec![at.coord(0, 2), zero.clone()];
        let yy = vec![zero, at.coord(1, 2)];
        assert!(lie_bracket(&xx, &yy).iter().all(|j| j.value().norm() == 0.0));
    }

    #[test]
    fn lie_derivative_scaling_field() {
        // X = μ ∂μ, α = dμ → 𝓛_X α = dμ
        let at = site(vec![0.5]);
        let x = vec![at.coord(0, 3)];
        let alpha = Form::one_form(vec![at.real(3, 1.0)]);
        let l = alpha.lie_derivative(&x);
        assert_eq!(l.get(&[0]).value(), cr(1.0));
        let direct = lie_derivative_1form(&x, &[at.real(3, 1.0)]);
        assert_eq!(direct[0].value(), cr(1.0));
    }
}
