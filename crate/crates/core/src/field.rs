//! Scalar fields and the closed expression grammar that defines them.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{GeomError, Result};
use crate::jet::{At, Jet, Point, C64};

type Eval = dyn Fn(&At, usize) -> Result<Jet> + Send + Sync;

/// A pure map from points to jets.
#[derive(Clone)]
pub struct ScalarField {
    eval: Arc<Eval>,
    label: Arc<str>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({})", self.label)
    }
}

impl ScalarField {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(&At, usize) -> Result<Jet> + Send + Sync + 'static,
    ) -> ScalarField {
        ScalarField {
            eval: Arc::new(f),
            label: label.into().into(),
        }
    }

    /// Same field under another label.
    pub fn relabel(&self, label: impl Into<String>) -> ScalarField {
        ScalarField { eval: self.eval.clone(), label: label.into().into() }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn constant(v: f64) -> ScalarField {
        ScalarField::new(format!("{v}"), move |at, k| Ok(at.real(k, v)))
    }

    pub fn coord(i: usize) -> ScalarField {
        ScalarField::new(format!("x{i}"), move |at, k| Ok(at.coord(i, k)))
    }

    /// Evaluate with an explicit order check against the layout maximum.
    pub fn eval_jet(&self, at: &At, order: usize) -> Result<Jet> {
        at.check_order(order)?;
        (self.eval)(at, order)
    }

    pub fn value(&self, at: &At) -> Result<C64> {
        Ok(self.eval_jet(at, 0)?.value())
    }

    fn lift2(
        &self,
        o: &ScalarField,
        label: String,
        f: impl Fn(&Jet, &Jet) -> Result<Jet> + Send + Sync + 'static,
    ) -> ScalarField {
        let (a, b) = (self.clone(), o.clone());
        ScalarField::new(label, move |at, k| f(&a.eval_jet(at, k)?, &b.eval_jet(at, k)?))
    }

    fn lift1(
        &self,
        label: String,
        f: impl Fn(&Jet) -> Result<Jet> + Send + Sync + 'static,
    ) -> ScalarField {
        let a = self.clone();
        ScalarField::new(label, move |at, k| f(&a.eval_jet(at, k)?))
    }

    pub fn add(&self, o: &ScalarField) -> ScalarField {
        self.lift2(o, format!("({} + {})", self.label, o.label), |a, b| Ok(a.add(b)))
    }

    pub fn sub(&self, o: &ScalarField) -> ScalarField {
        self.lift2(o, format!("({} - {})", self.label, o.label), |a, b| Ok(a.sub(b)))
    }

    pub fn mul(&self, o: &ScalarField) -> ScalarField {
        self.lift2(o, format!("({} * {})", self.label, o.label), |a, b| Ok(a.mul(b)))
    }

    pub fn div(&self, o: &ScalarField) -> ScalarField {
        self.lift2(o, format!("({} / {})", self.label, o.label), |a, b| a.div(b))
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        self.lift1(format!("{s}*{}", self.label), move |a| Ok(a.scale_re(s)))
    }

    pub fn add_const(&self, s: f64) -> ScalarField {
        self.lift1(format!("({} + {s})", self.label), move |a| {
            Ok(a.add_const(C64::new(s, 0.0)))
        })
    }

    pub fn powf(&self, r: f64) -> ScalarField {
        self.lift1(format!("{}^{r}", self.label), move |a| a.powf(r))
    }

    pub fn sqrt(&self) -> ScalarField {
        self.lift1(format!("sqrt({})", self.label), |a| a.sqrt())
    }

    pub fn ln(&self) -> ScalarField {
        self.lift1(format!("log({})", self.label), |a| a.ln())
    }

    pub fn exp(&self) -> ScalarField {
        self.lift1(format!("exp({})", self.label), |a| Ok(a.exp()))
    }

    pub fn recip(&self) -> ScalarField {
        self.lift1(format!("1/{}", self.label), |a| a.recip())
    }

    /// Compose with a function of one variable given as an expression in `var`.
    pub fn compose_expr(&self, e: &Expr, var: &str) -> Result<ScalarField> {
        let mut b = Bindings::default();
        b.fields.insert(var.to_string(), self.clone());
        ScalarField::from_expr(e, &b)
    }

    /// Field defined by an expression over coordinates, constants and named fields.
    pub fn from_expr(e: &Expr, b: &Bindings) -> Result<ScalarField> {
        e.check_names(b)?;
        let e = Arc::new(e.clone());
        let b = Arc::new(b.clone());
        let label = e.to_string();
        Ok(ScalarField::new(label, move |at, k| {
            b.check_domain(at)?;
            e.eval(at, k, &b)
        }))
    }
}

/// Name resolution for expressions.
#[derive(Clone, Default, Debug)]
pub struct Bindings {
    pub coords: HashMap<String, usize>,
    pub consts: HashMap<String, f64>,
    pub fields: HashMap<String, ScalarField>,
    /// Each expression must evaluate to a positive value inside the domain.
    pub domain: Vec<Expr>,
}

impl Bindings {
    pub fn with_coords(names: &[&str]) -> Bindings {
        let mut b = Bindings::default();
        for (i, n) in names.iter().enumerate() {
            b.coords.insert(n.to_string(), i);
        }
        b
    }

    pub fn check_domain(&self, at: &At) -> Result<()> {
        let plain = Bindings {
            domain: Vec::new(),
            ..self.clone()
        };
        for d in &self.domain {
            let v = d.eval(at, 0, &plain)?.value();
            if !(v.re > 0.0) {
                return Err(GeomError::DomainViolation(format!(
                    "{d} > 0 fails at {:?}",
                    at.point.0
                )));
            }
        }
        Ok(())
    }

    pub fn contains_point(&self, at: &At) -> bool {
        self.check_domain(at).is_ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Log,
    Exp,
    Sqrt,
    Pow,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Log => "log",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Pow => "pow",
        }
    }

    fn arity(self) -> usize {
        if self == Func::Pow {
            2
        } else {
            1
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => {
                if *x < 0.0 {
                    write!(f, "({x:?})")
                } else {
                    write!(f, "{x:?}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let toks = tokenize(src)?;
        let mut p = Parser { toks, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(GeomError::ExpressionError(format!(
                "unexpected `{}` at offset {} in `{src}`",
                p.toks[p.pos].0, p.toks[p.pos].1
            )));
        }
        Ok(e)
    }

    pub fn num(x: f64) -> Expr {
        Expr::Num(x)
    }

    pub fn var(s: &str) -> Expr {
        Expr::Var(s.to_string())
    }

    /// Names referenced by the expression.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone())
                }
            }
            Expr::Neg(e) => e.collect_names(out),
            Expr::Bin(_, a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_names(out)),
        }
    }

    pub fn check_names(&self, b: &Bindings) -> Result<()> {
        for n in self.names() {
            let known = b.coords.contains_key(&n)
                || b.consts.contains_key(&n)
                || b.fields.contains_key(&n)
                || n == "pi"
                || n == "e";
            if !known {
                return Err(GeomError::ExpressionError(format!("unknown name `{n}`")));
            }
        }
        Ok(())
    }

    pub fn eval(&self, at: &At, k: usize, b: &Bindings) -> Result<Jet> {
        Ok(match self {
            Expr::Num(x) => at.real(k, *x),
            Expr::Var(v) => {
                if let Some(&i) = b.coords.get(v) {
                    at.coord(i, k)
                } else if let Some(&c) = b.consts.get(v) {
                    at.real(k, c)
                } else if let Some(f) = b.fields.get(v) {
                    f.eval_jet(at, k)?
                } else if v == "pi" {
                    at.real(k, std::f64::consts::PI)
                } else if v == "e" {
                    at.real(k, std::f64::consts::E)
                } else {
                    return Err(GeomError::ExpressionError(format!("unknown name `{v}`")));
                }
            }
            Expr::Neg(e) => e.eval(at, k, b)?.neg(),
            Expr::Bin(op, l, r) => {
                let x = l.eval(at, k, b)?;
                if *op == BinOp::Pow {
                    if let Some(c) = r.as_const(b) {
                        return x.powf(c);
                    }
                }
                let y = r.eval(at, k, b)?;
                match op {
                    BinOp::Add => x.add(&y),
                    BinOp::Sub => x.sub(&y),
                    BinOp::Mul => x.mul(&y),
                    BinOp::Div => x.div(&y)?,
                    BinOp::Pow => x.pow(&y)?,
                }
            }
            Expr::Call(func, args) => {
                let x = args[0].eval(at, k, b)?;
                match func {
                    Func::Log => x.ln()?,
                    Func::Exp => x.exp(),
                    Func::Sqrt => x.sqrt()?,
                    Func::Pow => {
                        if let Some(c) = args[1].as_const(b) {
                            x.powf(c)?
                        } else {
                            x.pow(&args[1].eval(at, k, b)?)?
                        }
                    }
                }
            }
        })
    }

    /// Constant value if the expression involves no coordinates or fields.
    fn as_const(&self, b: &Bindings) -> Option<f64> {
        match self {
            Expr::Num(x) => Some(*x),
            Expr::Var(v) => b.consts.get(v).copied().or(match v.as_str() {
                "pi" => Some(std::f64::consts::PI),
                "e" => Some(std::f64::consts::E),
                _ => None,
            }),
            Expr::Neg(e) => e.as_const(b).map(|x| -x),
            Expr::Bin(op, l, r) => {
                let (x, y) = (l.as_const(b)?, r.as_const(b)?);
                Some(match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Pow => x.powf(y),
                })
            }
            Expr::Call(..) => None,
        }
    }

    /// Plain real evaluation at a point (no derivatives).
    pub fn value_at(&self, p: &Point, b: &Bindings) -> Result<f64> {
        let layout = crate::jet::Layout::new(p.dim(), 0);
        let at = At::new(layout, p.clone());
        Ok(self.eval(&at, 0, b)?.re())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(x) => write!(f, "{x}"),
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::Sym(c) => write!(f, "{c}"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (off, ch) = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i].1 == 'e' || chars[i].1 == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i].1 == '+' || chars[i].1 == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].1.is_ascii_digit() {
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let end = if i < chars.len() { chars[i].0 } else { src.len() };
            let text = &src[chars[start].0..end];
            let v: f64 = text.parse().map_err(|_| {
                GeomError::ExpressionError(format!("bad number `{text}` at offset {off}"))
            })?;
            out.push((Tok::Num(v), off));
        } else if ch.is_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let end = if i < chars.len() { chars[i].0 } else { src.len() };
            out.push((Tok::Ident(src[chars[start].0..end].to_string()), off));
        } else if "+-*/^(),".contains(ch) {
            out.push((Tok::Sym(ch), off));
            i += 1;
        } else {
            return Err(GeomError::ExpressionError(format!(
                "unexpected character `{ch}` at offset {off}"
            )));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek_sym(&self, c: char) -> bool {
        matches!(self.toks.get(self.pos), Some((Tok::Sym(s), _)) if *s == c)
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_sym(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{c}`")))
        }
    }

    fn err(&self, msg: &str) -> GeomError {
        match self.toks.get(self.pos) {
            Some((t, off)) => GeomError::ExpressionError(format!("{msg}, found `{t}` at offset {off}")),
            None => GeomError::ExpressionError(format!("{msg}, found end of input")),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.peek_sym('+') {
                BinOp::Add
            } else if self.peek_sym('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.peek_sym('*') {
                BinOp::Mul
            } else if self.peek_sym('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_sym('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.peek_sym('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_sym('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.toks.get(self.pos).cloned() {
            Some((Tok::Num(v), _)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some((Tok::Ident(name), _)) => {
                self.pos += 1;
                let func = match name.as_str() {
                    "log" | "ln" => Some(Func::Log),
                    "exp" => Some(Func::Exp),
                    "sqrt" => Some(Func::Sqrt),
                    "pow" => Some(Func::Pow),
                    _ => None,
                };
                match func {
                    Some(f) if self.peek_sym('(') => {
                        self.pos += 1;
                        let mut args = vec![self.expr()?];
                        while self.peek_sym(',') {
                            self.pos += 1;
                            args.push(self.expr()?);
                        }
                        self.expect(')')?;
                        if args.len() != f.arity() {
                            return Err(GeomError::ExpressionError(format!(
                                "{} expects {} argument(s), got {}",
                                f.name(),
                                f.arity(),
                                args.len()
                            )));
                        }
                        Ok(Expr::Call(f, args))
                    }
                    _ => Ok(Expr::Var(name)),
                }
            }
            Some((Tok::Sym('('), _)) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            _ => Err(self.err("expected a number, name or `(`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Layout;

    fn at1(x: f64, order: usize) -> At {
        At::new(Layout::new(1, order), Point(vec![x]))
    }

    #[test]
    fn mu_log_mu_at_one() {
        let b = Bindings::with_coords(&["mu"]);
        let f = ScalarField::from_expr(&Expr::parse("mu*log(mu)").unwrap(), &b).unwrap();
        let j = f.eval_jet(&at1(1.0, 3), 2).unwrap();
        assert!(j.value().norm() < 1e-15);
        assert!((j.deriv(&[0]).re - 1.0).abs() < 1e-15);
        assert!((j.deriv(&[0, 0]).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mu_log_mu_at_two() {
        let b = Bindings::with_coords(&["mu"]);
        let f = ScalarField::from_expr(&Expr::parse("mu*log(mu)").unwrap(), &b).unwrap();
        let j = f.eval_jet(&at1(2.0, 3), 2).unwrap();
        let l2 = 2f64.ln();
        assert!((j.value().re - 2.0 * l2).abs() < 1e-14);
        assert!((j.deriv(&[0]).re - (l2 + 1.0)).abs() < 1e-14);
        assert!((j.deriv(&[0, 0]).re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn constant_field_has_no_derivatives() {
        let at = At::new(Layout::new(3, 3), Point(vec![0.3, -1.0, 2.0]));
        let j = ScalarField::constant(5.0).eval_jet(&at, 3).unwrap();
        assert_eq!(j.value().re, 5.0);
        assert!(j.coeffs()[1..].iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn order_overflow() {
        let at = at1(1.0, 3);
        let r = ScalarField::coord(0).eval_jet(&at, 4);
        assert!(matches!(r, Err(GeomError::OrderOverflow { .. })));
    }

    #[test]
    fn domain_violation() {
        let mut b = Bindings::with_coords(&["mu"]);
        b.domain.push(Expr::parse("mu").unwrap());
        let f = ScalarField::from_expr(&Expr::parse("mu*log(mu)").unwrap(), &b).unwrap();
        assert!(matches!(
            f.eval_jet(&at1(-0.5, 2), 2),
            Err(GeomError::DomainViolation(_))
        ));
    }

    #[test]
    fn parse_precedence() {
        let b = Bindings::with_coords(&["x"]);
        let e = Expr::parse("-x^2 + 3*x/2 - 2^-1").unwrap();
        let v = e.value_at(&Point(vec![3.0]), &b).unwrap();
        assert!((v - (-9.0 + 4.5 - 0.5)).abs() < 1e-14);
    }

    #[test]
    fn display_round_trips() {
        let src = "pow(x, 1.5) * exp(-x) / (1 + sqrt(x)) - log(2*x)^2";
        let e = Expr::parse(src).unwrap();
        let back = Expr::parse(&e.to_string()).unwrap();
        assert_eq!(e, back);
    }

    #[test]
    fn unknown_name_rejected() {
        let b = Bindings::with_coords(&["x"]);
        let e = Expr::parse("x + y").unwrap();
        assert!(matches!(
            ScalarField::from_expr(&e, &b),
            Err(GeomError::ExpressionError(_))
        ));
    }

    #[test]
    fn bound_field_names() {
        let mut b = Bindings::with_coords(&["x"]);
        b.fields
            .insert("fH".into(), ScalarField::coord(0).mul(&ScalarField::coord(0)));
        b.consts.insert("c".into(), 2.0);
        let f = ScalarField::from_expr(&Expr::parse("c*fH + 1").unwrap(), &b).unwrap();
        let j = f.eval_jet(&at1(3.0, 2), 2).unwrap();
        assert_eq!(j.value().re, 19.0);
        assert_eq!(j.deriv(&[0]).re, 12.0);
    }
}
