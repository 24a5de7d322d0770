//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] stores Taylor coefficients `∂^α f(p) / α!` for every multi-index
//! `|α| ≤ order`, laid out in graded order so that a jet of order `m` is a
//! prefix of any higher-order jet at the same point. All index tables live in
//! a shared [`Layout`], built once per chart dimension and maximal order.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{GeomError, Result};

pub type C64 = Complex64;

/// Values closer to zero than this are refused as divisors.
pub const EPS_DIV: f64 = 1e-12;

/// Multi-index bookkeeping shared by all jets of one chart.
pub struct Layout {
    dim: usize,
    max_order: usize,
    indices: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    /// `count[m]` = number of multi-indices of degree ≤ m.
    count: Vec<usize>,
    /// `raise[k][i]` = index of `α_k + e_i` when its degree fits.
    raise: Vec<Vec<Option<usize>>>,
    /// Product triples `(a, b, c)` with `α_a + α_b = α_c`, sorted by `c`.
    triples: Vec<(u32, u32, u32)>,
    /// `triple_end[m]` = number of triples whose result has degree ≤ m.
    triple_end: Vec<usize>,
}

impl fmt::Debug for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Layout")
            .field("dim", &self.dim)
            .field("max_order", &self.max_order)
            .field("len", &self.indices.len())
            .finish()
    }
}

impl Layout {
    pub fn new(dim: usize, max_order: usize) -> Arc<Layout> {
        let mut indices: Vec<Vec<u8>> = Vec::new();
        let mut count = Vec::with_capacity(max_order + 1);
        for deg in 0..=max_order {
            let mut cur = vec![0u8; dim];
            gen_degree(dim, deg, 0, &mut cur, &mut indices);
            count.push(indices.len());
        }
        let lookup: HashMap<Vec<u8>, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        let raise = indices
            .iter()
            .map(|a| {
                (0..dim)
                    .map(|i| {
                        let mut b = a.clone();
                        b[i] += 1;
                        lookup.get(&b).copied()
                    })
                    .collect()
            })
            .collect();
        let mut triples = Vec::new();
        let mut triple_end = Vec::with_capacity(max_order + 1);
        for (c, gamma) in indices.iter().enumerate() {
            for (a, alpha) in indices.iter().enumerate() {
                if alpha.iter().zip(gamma).all(|(x, y)| x <= y) {
                    let beta: Vec<u8> = gamma.iter().zip(alpha).map(|(g, a)| g - a).collect();
                    let b = lookup[&beta];
                    triples.push((a as u32, b as u32, c as u32));
                }
            }
            let deg: usize = gamma.iter().map(|&x| x as usize).sum();
            if c + 1 == count[deg] {
                triple_end.push(triples.len());
            }
        }
        Arc::new(Layout {
            dim,
            max_order,
            indices,
            lookup,
            count,
            raise,
            triples,
            triple_end,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of coefficients of a jet of the given order.
    pub fn len(&self, order: usize) -> usize {
        self.count[order]
    }

    pub fn multi_index(&self, k: usize) -> &[u8] {
        &self.indices[k]
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }
}

fn gen_degree(dim: usize, deg: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == dim {
        cur[pos] = deg as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    if dim == 0 {
        if deg == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for k in (0..=deg).rev() {
        cur[pos] = k as u8;
        gen_degree(dim, deg - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// Chart point. Coordinates are real.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Point> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeomError::DomainViolation(format!(
                "non-finite coordinate in {coords:?}"
            )));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Evaluation site: a point together with the jet layout of its chart.
#[derive(Clone, Debug)]
pub struct At {
    pub layout: Arc<Layout>,
    pub point: Point,
}

impl At {
    pub fn new(layout: Arc<Layout>, point: Point) -> At {
        assert_eq!(layout.dim(), point.dim(), "layout/point dimension mismatch");
        At { layout, point }
    }

    pub fn dim(&self) -> usize {
        self.point.dim()
    }

    pub fn check_order(&self, order: usize) -> Result<()> {
        if order > self.layout.max_order() {
            Err(GeomError::OrderOverflow {
                requested: order,
                max: self.layout.max_order(),
            })
        } else {
            Ok(())
        }
    }

    /// Jet of the coordinate function `x^i`.
    pub fn coord(&self, i: usize, order: usize) -> Jet {
        Jet::variable(&self.layout, order, i, self.point.0[i])
    }

    pub fn constant(&self, order: usize, v: C64) -> Jet {
        Jet::constant(&self.layout, order, v)
    }

    pub fn real(&self, order: usize, v: f64) -> Jet {
        Jet::constant(&self.layout, order, C64::new(v, 0.0))
    }

    pub fn zero(&self, order: usize) -> Jet {
        self.real(order, 0.0)
    }
}

#[derive(Clone)]
pub struct Jet {
    layout: Arc<Layout>,
    order: usize,
    c: Vec<C64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet(order {}, {:?})", self.order, self.c)
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Jet) -> bool {
        self.order == other.order && self.c == other.c
    }
}

impl Jet {
    pub fn constant(layout: &Arc<Layout>, order: usize, v: C64) -> Jet {
        let mut c = vec![C64::new(0.0, 0.0); layout.len(order)];
        c[0] = v;
        Jet {
            layout: layout.clone(),
            order,
            c,
        }
    }

    pub fn variable(layout: &Arc<Layout>, order: usize, i: usize, value: f64) -> Jet {
        let mut j = Jet::constant(layout, order, C64::new(value, 0.0));
        if order >= 1 {
            if let Some(k) = layout.raise[0][i] {
                j.c[k] = C64::new(1.0, 0.0);
            }
        }
        j
    }

    pub fn from_coeffs(layout: &Arc<Layout>, order: usize, c: Vec<C64>) -> Jet {
        assert_eq!(c.len(), layout.len(order));
        Jet {
            layout: layout.clone(),
            order,
            c,
        }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    pub fn re(&self) -> f64 {
        self.c[0].re
    }

    /// Raw Taylor coefficients.
    pub fn coeffs(&self) -> &[C64] {
        &self.c
    }

    /// Partial derivative `∂^α f(p)` for the multi-index `alpha` (counts per variable).
    pub fn partial(&self, alpha: &[u8]) -> C64 {
        let deg: usize = alpha.iter().map(|&x| x as usize).sum();
        if deg > self.order {
            panic!("partial of degree {deg} requested from jet of order {}", self.order);
        }
        let k = self.layout.index_of(alpha).expect("multi-index within layout");
        let fact: f64 = alpha.iter().map(|&a| factorial(a as usize)).product();
        self.c[k] * fact
    }

    /// Derivative along variable list, e.g. `&[0, 0, 1]` = ∂₀∂₀∂₁.
    pub fn deriv(&self, vars: &[usize]) -> C64 {
        let mut alpha = vec![0u8; self.layout.dim()];
        for &v in vars {
            alpha[v] += 1;
        }
        self.partial(&alpha)
    }

    /// Gradient of the value (first partials).
    pub fn gradient(&self) -> Vec<C64> {
        (0..self.layout.dim()).map(|i| self.deriv(&[i])).collect()
    }

    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order {
            return self.clone();
        }
        Jet {
            layout: self.layout.clone(),
            order,
            c: self.c[..self.layout.len(order)].to_vec(),
        }
    }

    /// The jet of `∂_i f`, one order lower.
    pub fn d(&self, i: usize) -> Jet {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let n = self.layout.len(self.order - 1);
        let c = (0..n)
            .map(|k| {
                let up = self.layout.raise[k][i].expect("raise within order");
                let a = self.layout.indices[k][i] as f64 + 1.0;
                self.c[up] * a
            })
            .collect();
        Jet {
            layout: self.layout.clone(),
            order: self.order - 1,
            c,
        }
    }

    fn zip(&self, o: &Jet, f: impl Fn(C64, C64) -> C64) -> Jet {
        let order = self.order.min(o.order);
        let n = self.layout.len(order);
        let c = (0..n).map(|k| f(self.c[k], o.c[k])).collect();
        Jet {
            layout: self.layout.clone(),
            order,
            c,
        }
    }

    pub fn add(&self, o: &Jet) -> Jet {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        self.zip(o, |a, b| a - b)
    }

    pub fn neg(&self) -> Jet {
        self.scale(C64::new(-1.0, 0.0))
    }

    pub fn scale(&self, s: C64) -> Jet {
        Jet {
            layout: self.layout.clone(),
            order: self.order,
            c: self.c.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Jet {
        self.scale(C64::new(s, 0.0))
    }

    pub fn add_const(&self, s: C64) -> Jet {
        let mut r = self.clone();
        r.c[0] += s;
        r
    }

    pub fn conj(&self) -> Jet {
        Jet {
            layout: self.layout.clone(),
            order: self.order,
            c: self.c.iter().map(|x| x.conj()).collect(),
        }
    }

    /// Real part, coefficient-wise (the jet of Re f for real coordinates).
    pub fn real_part(&self) -> Jet {
        Jet {
            layout: self.layout.clone(),
            order: self.order,
            c: self.c.iter().map(|x| C64::new(x.re, 0.0)).collect(),
        }
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let order = self.order.min(o.order);
        let n = self.layout.len(order);
        let mut c = vec![C64::new(0.0, 0.0); n];
        let end = self.layout.triple_end[order];
        for &(a, b, r) in &self.layout.triples[..end] {
            c[r as usize] += self.c[a as usize] * o.c[b as usize];
        }
        Jet {
            layout: self.layout.clone(),
            order,
            c,
        }
    }

    /// Compose with a scalar function given its Taylor coefficients
    /// `a_k = φ^(k)(c)/k!` at `c = self.value()`.
    fn compose(&self, a: &[C64]) -> Jet {
        let mut h = self.clone();
        h.c[0] = C64::new(0.0, 0.0);
        let mut out = Jet::constant(&self.layout, self.order, a[0]);
        let mut pw = h.clone();
        for ak in a.iter().skip(1).take(self.order) {
            out = out.add(&pw.scale(*ak));
            pw = pw.mul(&h);
        }
        out
    }

    pub fn recip(&self) -> Result<Jet> {
        let v = self.value();
        if v.norm() < EPS_DIV {
            return Err(GeomError::DivisionNearZero(v.norm()));
        }
        let inv = 1.0 / v;
        let mut a = Vec::with_capacity(self.order + 1);
        let mut t = inv;
        for _ in 0..=self.order {
            a.push(t);
            t = -t * inv;
        }
        Ok(self.compose(&a))
    }

    pub fn div(&self, o: &Jet) -> Result<Jet> {
        Ok(self.mul(&o.recip()?))
    }

    fn positive_value(&self, what: &str) -> Result<f64> {
        let v = self.value();
        if v.re <= 0.0 || v.im.abs() > 1e-12 * v.re.abs().max(1.0) {
            return Err(GeomError::NegativeArgument(format!("{what} of {v}")));
        }
        Ok(v.re)
    }

    pub fn ln(&self) -> Result<Jet> {
        let v = self.positive_value("log")?;
        let mut a = vec![C64::new(v.ln(), 0.0)];
        for k in 1..=self.order {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            a.push(C64::new(sign / (k as f64 * v.powi(k as i32)), 0.0));
        }
        Ok(self.compose(&a))
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let a: Vec<C64> = (0..=self.order)
            .map(|k| e / factorial(k))
            .collect();
        self.compose(&a)
    }

    /// Real power `f^r`. Non-integer exponents need a positive base.
    pub fn powf(&self, r: f64) -> Result<Jet> {
        if r.fract() == 0.0 && r.abs() < 64.0 {
            return self.powi(r as i32);
        }
        let v = self.positive_value("pow")?;
        let mut a = Vec::with_capacity(self.order + 1);
        let mut binom = 1.0;
        for k in 0..=self.order {
            a.push(C64::new(binom * v.powf(r - k as f64), 0.0));
            binom *= (r - k as f64) / (k as f64 + 1.0);
        }
        Ok(self.compose(&a))
    }

    pub fn powi(&self, n: i32) -> Result<Jet> {
        let base = if n < 0 { self.recip()? } else { self.clone() };
        let mut out = Jet::constant(&self.layout, self.order, C64::new(1.0, 0.0));
        for _ in 0..n.unsigned_abs() {
            out = out.mul(&base);
        }
        Ok(out)
    }

    pub fn sqrt(&self) -> Result<Jet> {
        self.positive_value("sqrt")?;
        self.powf(0.5)
    }

    /// `f^g` for a jet exponent; falls back to `powf` when g is constant.
    pub fn pow(&self, g: &Jet) -> Result<Jet> {
        if g.c[1..].iter().all(|x| x.norm() == 0.0) && g.value().im == 0.0 {
            return self.powf(g.value().re);
        }
        Ok(self.ln()?.mul(g).exp())
    }

    /// Largest coefficient magnitude, used for tolerance scaling.
    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Arithmetic selector for [`jet_arith`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Log,
    Exp,
    Sqrt,
}

/// Binary/unary jet arithmetic by operator tag. Unary ops ignore `rhs`.
pub fn jet_arith(lhs: &Jet, rhs: &Jet, op: JetOp) -> Result<Jet> {
    match op {
        JetOp::Add => Ok(lhs.add(rhs)),
        JetOp::Sub => Ok(lhs.sub(rhs)),
        JetOp::Mul => Ok(lhs.mul(rhs)),
        JetOp::Div => lhs.div(rhs),
        JetOp::Pow => lhs.pow(rhs),
        JetOp::Log => lhs.ln(),
        JetOp::Exp => Ok(lhs.exp()),
        JetOp::Sqrt => lhs.sqrt(),
    }
}
