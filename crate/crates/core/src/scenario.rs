//! Declarative scenarios: a TOML description of a structure, a Killing field,
//! deformation functions and a twist, run through the checker pipelines.
//!
//! ```toml
//! title = "CP2, second corollary"
//!
//! [structure]
//! kind = "toric"
//! potential = "cp2_fubini_study"
//! c = [[0.0, 0.1], [-0.1, 0.0]]
//!
//! [twist]
//! builder = "corollary-2"
//! lambda0 = 1.0
//! k0 = -1.0
//! k1 = 2.0
//!
//! [sampling]
//! grid = 3
//! fibers = 2
//! seed = 21
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;
use toml::de::{DeTable, DeValue};
use toml::Spanned;

use crate::courant::TwistData;
use crate::error::{GeomError, Result};
use crate::field::{Bindings, Expr, ScalarField};
use crate::forms::{Form, FormField};
use crate::jet::{At, Point};
use crate::kk::{
    check_gen_kk, classical_kk_data, j3_kk_data, validate_hamiltonian_killing, HamiltonianKilling, KKInput,
};
use crate::linalg::JMat;
use crate::models::{coordinate_field, flat_complex_structure, flat_hyperkahler, flat_kahler_form, flat_kahler_pair, rotation_field};
use crate::report::{Report, SamplePlan, Tolerance};
use crate::structures::{check_generalized_kahler, GenHermitianPair, TangentEndoField};
use crate::tangent::{Field, VectorField};
use crate::toric::{
    build_toric_gk, builtin_potential, chart_names, check_dim4_conditions, check_toric_formulas, corollary_data,
    toric_complex_structures, toric_killing_field, toric_symplectic_form, Corollary, Dim4Mode, ToricGKData,
};
use crate::twist::{
    check_data_invariance, check_interpolation_twist, check_poisson_complex_twist, check_symplectic_twist,
    validate_twist_data, HyperKahler,
};

/// Twist builders and check targets, as listed by `list-builtins`.
pub const PIPELINES: &[(&str, &str)] = &[
    ("classical", "classical KK data F = omega - d(X0^flat)/2 on a Kähler pair, then the gen-KK and twisted GK checks"),
    ("corollary-1", "toric 4D data from h(mu1) with a = k0 h^-2, then the 4D conditions and the gen-KK checks"),
    ("corollary-2", "toric 4D data with a = k0 k1 - lambda0 mu1, then the 4D conditions and the gen-KK checks"),
    ("j3", "h = 1 data F = -d(K(fH) J3 X0)/2 on a pair with pr_T(J3 X0) = 0, then the gen-KK checks"),
    ("explicit/kk", "user F, a, f, h, then the twist data and gen-KK checks"),
    ("explicit/complex", "user F, a: type (1,1) condition against the general twist criterion on J"),
    ("explicit/symplectic", "user F, a: F ^ i_X0 omega = 0 against the general twist criterion on J_omega"),
    ("explicit/interpolation", "user F, a on flat hyper-Kähler R^4: twist of J_t"),
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub title: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub constants: BTreeMap<String, f64>,
    pub structure: StructureSpec,
    pub killing: KillingSpec,
    pub functions: FunctionSpec,
    pub twist: TwistSpec,
    pub sampling: SamplingSpec,
    pub tolerance: ToleranceSpec,
    pub checks: CheckOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StructureSpec {
    Toric {
        potential: String,
        #[serde(skip_serializing_if = "BTreeMap::is_empty")]
        params: BTreeMap<String, f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        c: Option<Vec<Vec<f64>>>,
    },
    /// Flat ℂⁿ with coordinates `x1, y1, …, xn, yn`.
    FlatKahler { dim: usize },
    /// Flat ℍ = ℝ⁴ and the interpolating structure `𝒥_t`.
    HyperKahler { t: f64 },
}

impl StructureSpec {
    fn coords(&self, toric_dim: usize) -> Vec<String> {
        match self {
            StructureSpec::Toric { .. } => chart_names(toric_dim),
            StructureSpec::FlatKahler { dim } => flat_names(*dim),
            StructureSpec::HyperKahler { .. } => flat_names(2),
        }
    }
}

fn flat_names(n: usize) -> Vec<String> {
    (1..=n).flat_map(|i| [format!("x{i}"), format!("y{i}")]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KillingSpec {
    /// `-dt1`, `rotation` or `coordinate`.
    pub field: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FunctionSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Kk,
    Complex,
    Symplectic,
    Interpolation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "builder")]
pub enum TwistSpec {
    #[serde(rename = "classical")]
    Classical,
    #[serde(rename = "corollary-1")]
    Corollary1 { lambda0: f64, k0: f64, h: String },
    #[serde(rename = "corollary-2")]
    Corollary2 { lambda0: f64, k0: f64, k1: f64 },
    #[serde(rename = "j3")]
    J3 {
        #[serde(rename = "K")]
        k: String,
    },
    #[serde(rename = "explicit")]
    Explicit {
        target: Target,
        a: String,
        /// `F.u.v = expr` sets `F(∂u, ∂v)`.
        #[serde(rename = "F")]
        f: BTreeMap<String, BTreeMap<String, String>>,
    },
}

impl TwistSpec {
    fn anchor(&self) -> &'static str {
        match self {
            TwistSpec::Classical => "Prop concise",
            TwistSpec::Corollary1 { .. } => "Corollary corolar-1",
            TwistSpec::Corollary2 { .. } => "Corollary corolar-2",
            TwistSpec::J3 { .. } => "Prop gen-applied-1",
            TwistSpec::Explicit { .. } => "twist data",
        }
    }
}

/// Toric scenarios sample a `grid`-per-axis moment lattice crossed with
/// `fibers` torus points; flat ones draw `grid × fibers` points of `bounds`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplingSpec {
    pub grid: usize,
    pub fibers: usize,
    pub seed: u64,
    pub shrink: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<Vec<f64>>>,
    /// Expressions that must be positive at a kept sample.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub domain: Vec<String>,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec { grid: 3, fibers: 2, seed: 1, shrink: 0.15, bounds: None, domain: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ToleranceSpec {
    pub abs: f64,
    pub rel: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        let t = Tolerance::default();
        ToleranceSpec { abs: t.abs, rel: t.rel }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CheckOptions {
    /// Check `𝓛_{X₀}` of `F`, `a`, `f`, `h`.
    pub strict_invariance: bool,
    /// Also run the independent twisted generalized Kähler path.
    pub end_to_end: bool,
    /// Compare the toric closed forms with the generic computation.
    pub toric_formulas: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { strict_invariance: true, end_to_end: true, toric_formulas: false }
    }
}

impl Scenario {
    /// TOML text that parses back to the same scenario.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

// ---------------------------------------------------------------- parsing

fn line_col(src: &str, off: usize) -> (usize, usize) {
    let off = off.min(src.len());
    let before = &src[..off];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) + 1;
    (line, col)
}

type Val<'i> = Spanned<DeValue<'i>>;

struct Sect<'a, 'i> {
    src: &'a str,
    path: String,
    at: Range<usize>,
    table: &'a DeTable<'i>,
    used: BTreeSet<String>,
}

impl<'a, 'i> Sect<'a, 'i> {
    fn full(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn parse_err(&self, span: &Range<usize>, msg: String) -> GeomError {
        let (line, col) = line_col(self.src, span.start);
        GeomError::ParseError { line, col, msg }
    }

    fn missing(&self, key: &str) -> GeomError {
        let (line, col) = line_col(self.src, self.at.start);
        GeomError::UnknownKey { key: self.full(key), line, col }
    }

    fn raw(&mut self, key: &str) -> Option<&'a Val<'i>> {
        let v = self.table.iter().find(|(k, _)| k.get_ref().as_ref() == key).map(|(_, v)| v);
        if v.is_some() {
            self.used.insert(key.to_string());
        }
        v
    }

    fn sub(&mut self, key: &str) -> Result<Option<Sect<'a, 'i>>> {
        let Some((k, v)) = self.table.iter().find(|(k, _)| k.get_ref().as_ref() == key) else {
            return Ok(None);
        };
        self.used.insert(key.to_string());
        match v.get_ref() {
            DeValue::Table(t) => Ok(Some(Sect {
                src: self.src,
                path: self.full(key),
                at: k.span(),
                table: t,
                used: BTreeSet::new(),
            })),
            other => Err(self.parse_err(&v.span(), format!("`{}` must be a table, found {}", self.full(key), other.type_str()))),
        }
    }

    fn str_opt(&mut self, key: &str) -> Result<Option<(String, Range<usize>)>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => match v.get_ref() {
                DeValue::String(s) => Ok(Some((s.to_string(), v.span()))),
                other => Err(self.parse_err(&v.span(), format!("`{}` must be a string, found {}", self.full(key), other.type_str()))),
            },
        }
    }

    fn str_req(&mut self, key: &str) -> Result<(String, Range<usize>)> {
        self.str_opt(key)?.ok_or_else(|| self.missing(key))
    }

    fn num(&self, key: &str, v: &Val<'i>) -> Result<f64> {
        let x = match v.get_ref() {
            DeValue::Integer(i) => i64::from_str_radix(i.as_str(), i.radix()).ok().map(|x| x as f64),
            DeValue::Float(f) => f.as_str().replace('_', "").parse::<f64>().ok(),
            other => {
                return Err(self.parse_err(&v.span(), format!("`{key}` must be a number, found {}", other.type_str())))
            }
        };
        match x {
            Some(x) if x.is_finite() => Ok(x),
            _ => Err(self.parse_err(&v.span(), format!("`{key}` must be a finite number"))),
        }
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => self.num(&self.full(key), v).map(Some),
        }
    }

    fn f64_req(&mut self, key: &str) -> Result<f64> {
        self.f64_opt(key)?.ok_or_else(|| self.missing(key))
    }

    fn uint_opt(&mut self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => match v.get_ref() {
                DeValue::Integer(i) => u64::from_str_radix(i.as_str(), i.radix())
                    .map(Some)
                    .map_err(|_| self.parse_err(&v.span(), format!("`{}` must be a non-negative integer", self.full(key)))),
                other => Err(self.parse_err(&v.span(), format!("`{}` must be an integer, found {}", self.full(key), other.type_str()))),
            },
        }
    }

    fn bool_opt(&mut self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => match v.get_ref() {
                DeValue::Boolean(b) => Ok(Some(*b)),
                other => Err(self.parse_err(&v.span(), format!("`{}` must be a boolean, found {}", self.full(key), other.type_str()))),
            },
        }
    }

    fn array(&self, key: &str, v: &'a Val<'i>) -> Result<&'a [Val<'i>]> {
        match v.get_ref() {
            DeValue::Array(a) => Ok(&a[..]),
            other => Err(self.parse_err(&v.span(), format!("`{key}` must be an array, found {}", other.type_str()))),
        }
    }

    fn matrix_opt(&mut self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let full = self.full(key);
        let mut rows = Vec::new();
        for r in self.array(&full, v)? {
            let row = self.array(&full, r)?.iter().map(|x| self.num(&full, x)).collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Some(rows))
    }

    fn strings_opt(&mut self, key: &str) -> Result<Vec<(String, Range<usize>)>> {
        let Some(v) = self.raw(key) else { return Ok(Vec::new()) };
        let full = self.full(key);
        self.array(&full, v)?
            .iter()
            .map(|x| match x.get_ref() {
                DeValue::String(s) => Ok((s.to_string(), x.span())),
                other => Err(self.parse_err(&x.span(), format!("`{full}` entries must be strings, found {}", other.type_str()))),
            })
            .collect()
    }

    fn finish(self) -> Result<()> {
        for (k, _) in self.table.iter() {
            let name = k.get_ref().as_ref();
            if !self.used.contains(name) {
                let (line, col) = line_col(self.src, k.span().start);
                return Err(GeomError::UnknownKey { key: self.full(name), line, col });
            }
        }
        Ok(())
    }
}

/// Expression checker with the names visible to a scenario.
struct Names<'s> {
    src: &'s str,
    coords: Vec<String>,
    consts: BTreeMap<String, f64>,
}

impl Names<'_> {
    fn bindings(&self, with_fh: bool) -> Bindings {
        let names: Vec<&str> = self.coords.iter().map(String::as_str).collect();
        let mut b = Bindings::with_coords(&names);
        b.consts.extend(self.consts.iter().map(|(k, v)| (k.clone(), *v)));
        if with_fh {
            b.fields.insert("fH".into(), ScalarField::constant(1.0));
        }
        b
    }

    fn check(&self, key: &str, (text, span): &(String, Range<usize>), with_fh: bool) -> Result<String> {
        let (line, col) = line_col(self.src, span.start);
        let wrap = |e: GeomError| {
            let msg = match e {
                GeomError::ExpressionError(m) => m,
                other => other.to_string(),
            };
            GeomError::ExpressionError(format!("{line}:{col}: `{key}`: {msg}"))
        };
        let e = Expr::parse(text).map_err(wrap)?;
        e.check_names(&self.bindings(with_fh)).map_err(wrap)?;
        Ok(text.clone())
    }
}

/// Parse and validate a scenario. Errors carry the line and column of the
/// first offending item.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let doc = DeTable::parse(text).map_err(|e| {
        let (line, col) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
        GeomError::ParseError { line, col, msg: e.message().trim().to_string() }
    })?;
    let mut root = Sect { src: text, path: String::new(), at: 0..0, table: doc.get_ref(), used: BTreeSet::new() };

    let title = root.str_opt("title")?.map(|t| t.0).unwrap_or_else(|| "scenario".into());

    let mut constants = BTreeMap::new();
    if let Some(mut c) = root.sub("constants")? {
        let keys: Vec<String> = c.table.iter().map(|(k, _)| k.get_ref().to_string()).collect();
        for k in keys {
            let v = c.f64_req(&k)?;
            constants.insert(k, v);
        }
        c.finish()?;
    }

    let mut st = root.sub("structure")?.ok_or_else(|| root.missing("structure"))?;
    let (kind, kind_span) = st.str_req("kind")?;
    let (structure, toric_dim) = match kind.as_str() {
        "toric" => {
            let (potential, pspan) = st.str_req("potential")?;
            let mut params = BTreeMap::new();
            if let Some(mut p) = st.sub("params")? {
                let keys: Vec<String> = p.table.iter().map(|(k, _)| k.get_ref().to_string()).collect();
                for k in keys {
                    let v = p.f64_req(&k)?;
                    params.insert(k, v);
                }
                p.finish()?;
            }
            let (pot, _) = builtin_potential(&potential, &params).map_err(|e| st.parse_err(&pspan, e.to_string()))?;
            let c = st.matrix_opt("c")?;
            (StructureSpec::Toric { potential, params, c }, pot.dim())
        }
        "flat-kahler" => {
            let dim = st.uint_opt("dim")?.unwrap_or(2) as usize;
            if dim == 0 {
                return Err(st.parse_err(&st.at.clone(), "`structure.dim` must be positive".into()));
            }
            (StructureSpec::FlatKahler { dim }, 0)
        }
        "hyper-kahler" => (StructureSpec::HyperKahler { t: st.f64_opt("t")?.unwrap_or(0.0) }, 0),
        other => {
            return Err(st.parse_err(
                &kind_span,
                format!("unknown structure kind `{other}` (expected toric, flat-kahler or hyper-kahler)"),
            ))
        }
    };
    st.finish()?;

    let names = Names { src: text, coords: structure.coords(toric_dim), consts: constants.clone() };

    let default_field = match structure {
        StructureSpec::Toric { .. } => "-dt1",
        StructureSpec::FlatKahler { .. } => "rotation",
        StructureSpec::HyperKahler { .. } => "coordinate",
    };
    let mut killing = KillingSpec { field: default_field.into(), index: None, hamiltonian: None };
    if let Some(mut k) = root.sub("killing")? {
        if let Some((f, span)) = k.str_opt("field")? {
            if !["-dt1", "rotation", "coordinate"].contains(&f.as_str()) {
                return Err(k.parse_err(&span, format!("unknown Killing field `{f}` (expected -dt1, rotation or coordinate)")));
            }
            killing.field = f;
        }
        killing.index = k.uint_opt("index")?.map(|i| i as usize);
        if let Some(h) = k.str_opt("hamiltonian")? {
            killing.hamiltonian = Some(names.check("killing.hamiltonian", &h, false)?);
        }
        k.finish()?;
    }
    if killing.field == "coordinate" {
        let i = killing.index.unwrap_or(0);
        if i >= names.coords.len() {
            return Err(GeomError::ParseError { line: 1, col: 1, msg: format!("`killing.index` {i} out of range") });
        }
        killing.index = Some(i);
    }
    if killing.hamiltonian.is_none() && matches!(structure, StructureSpec::Toric { .. }) {
        killing.hamiltonian = Some("mu1".into());
    }
    let has_fh = killing.hamiltonian.is_some();

    let mut functions = FunctionSpec::default();
    if let Some(mut f) = root.sub("functions")? {
        for (key, slot) in [("f", &mut functions.f), ("h", &mut functions.h), ("lambda", &mut functions.lambda)] {
            if let Some(e) = f.str_opt(key)? {
                *slot = Some(names.check(&format!("functions.{key}"), &e, has_fh)?);
            }
        }
        f.finish()?;
    }

    let mut tw = root.sub("twist")?.ok_or_else(|| root.missing("twist"))?;
    let (builder, bspan) = tw.str_req("builder")?;
    let twist = match builder.as_str() {
        "classical" => TwistSpec::Classical,
        "corollary-1" => {
            let h = tw.str_req("h")?;
            TwistSpec::Corollary1 {
                lambda0: tw.f64_req("lambda0")?,
                k0: tw.f64_req("k0")?,
                h: names.check("twist.h", &h, false)?,
            }
        }
        "corollary-2" => TwistSpec::Corollary2 {
            lambda0: tw.f64_req("lambda0")?,
            k0: tw.f64_req("k0")?,
            k1: tw.f64_req("k1")?,
        },
        "j3" => {
            let (k, span) = tw.str_req("K")?;
            let fh_only = Names { src: text, coords: vec!["fH".into()], consts: constants.clone() };
            TwistSpec::J3 { k: fh_only.check("twist.K", &(k, span), false)? }
        }
        "explicit" => {
            let target = match tw.str_opt("target")? {
                None => Target::Kk,
                Some((t, span)) => match t.as_str() {
                    "kk" => Target::Kk,
                    "complex" => Target::Complex,
                    "symplectic" => Target::Symplectic,
                    "interpolation" => Target::Interpolation,
                    other => {
                        return Err(tw.parse_err(
                            &span,
                            format!("unknown target `{other}` (expected kk, complex, symplectic or interpolation)"),
                        ))
                    }
                },
            };
            let a = tw.str_req("a")?;
            let a = names.check("twist.a", &a, has_fh)?;
            let mut f = BTreeMap::new();
            if let Some(mut fs) = tw.sub("F")? {
                let rows: Vec<String> = fs.table.iter().map(|(k, _)| k.get_ref().to_string()).collect();
                for u in rows {
                    let mut row = fs.sub(&u)?.ok_or_else(|| fs.missing(&u))?;
                    let mut out = BTreeMap::new();
                    let cols: Vec<(String, Range<usize>)> =
                        row.table.iter().map(|(k, _)| (k.get_ref().to_string(), k.span())).collect();
                    for (v, vspan) in cols {
                        for name in [&u, &v] {
                            if !names.coords.contains(name) {
                                return Err(row.parse_err(&vspan, format!("`{name}` is not a coordinate")));
                            }
                        }
                        let dup = f.get(&v).is_some_and(|m: &BTreeMap<String, String>| m.contains_key(&u));
                        if u == v || dup {
                            return Err(row.parse_err(&vspan, format!("F.{u}.{v} is diagonal or given twice")));
                        }
                        let e = row.str_req(&v)?;
                        out.insert(v.clone(), names.check(&format!("twist.F.{u}.{v}"), &e, has_fh)?);
                    }
                    row.finish()?;
                    f.insert(u, out);
                }
                fs.finish()?;
            }
            TwistSpec::Explicit { target, a, f }
        }
        other => {
            return Err(tw.parse_err(
                &bspan,
                format!("unknown builder `{other}` (expected classical, corollary-1, corollary-2, j3 or explicit)"),
            ))
        }
    };
    tw.finish()?;

    let mut sampling = SamplingSpec::default();
    if let Some(mut s) = root.sub("sampling")? {
        if let Some(g) = s.uint_opt("grid")? {
            sampling.grid = g as usize;
        }
        if let Some(f) = s.uint_opt("fibers")? {
            sampling.fibers = f as usize;
        }
        if let Some(seed) = s.uint_opt("seed")? {
            sampling.seed = seed;
        }
        if let Some(sh) = s.f64_opt("shrink")? {
            if !(0.0..1.0).contains(&sh) {
                return Err(s.parse_err(&s.at.clone(), format!("`sampling.shrink` = {sh} not in [0, 1)")));
            }
            sampling.shrink = sh;
        }
        if let Some(b) = s.matrix_opt("bounds")? {
            if b.len() != names.coords.len() || b.iter().any(|r| r.len() != 2 || r[0] >= r[1]) {
                return Err(s.parse_err(
                    &s.at.clone(),
                    format!("`sampling.bounds` needs {} increasing [lo, hi] pairs", names.coords.len()),
                ));
            }
            sampling.bounds = Some(b);
        }
        for (i, d) in s.strings_opt("domain")?.into_iter().enumerate() {
            sampling.domain.push(names.check(&format!("sampling.domain[{i}]"), &d, has_fh)?);
        }
        s.finish()?;
    }

    let mut tolerance = ToleranceSpec::default();
    if let Some(mut t) = root.sub("tolerance")? {
        tolerance.abs = t.f64_opt("abs")?.unwrap_or(tolerance.abs);
        tolerance.rel = t.f64_opt("rel")?.unwrap_or(tolerance.rel);
        t.finish()?;
    }

    let mut checks = CheckOptions::default();
    if let Some(mut c) = root.sub("checks")? {
        checks.strict_invariance = c.bool_opt("strict-invariance")?.unwrap_or(checks.strict_invariance);
        checks.end_to_end = c.bool_opt("end-to-end")?.unwrap_or(checks.end_to_end);
        checks.toric_formulas = c.bool_opt("toric-formulas")?.unwrap_or(checks.toric_formulas);
        c.finish()?;
    }
    root.finish()?;

    Ok(Scenario { title, constants, structure, killing, functions, twist, sampling, tolerance, checks })
}

// ---------------------------------------------------------------- running

enum Geometry {
    Toric { data: ToricGKData, pair: GenHermitianPair, j: TangentEndoField, omega: FormField },
    Flat { pair: GenHermitianPair, j: TangentEndoField, omega: FormField },
    Hyper { hk: HyperKahler, t: f64 },
}

struct Ctx {
    dim: usize,
    bindings: Bindings,
    plan: SamplePlan,
    tol: Tolerance,
}

impl Ctx {
    fn scalar(&self, text: &str) -> Result<ScalarField> {
        ScalarField::from_expr(&Expr::parse(text)?, &self.bindings)
    }
}

fn stage<T>(rep: &mut Report, id: &str, anchor: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            rep.push_flag(id, anchor, false, Some(e.to_string()));
            None
        }
    }
}

fn form_from_components(
    dim: usize,
    comps: Vec<(usize, usize, Expr)>,
    bindings: Bindings,
    label: String,
) -> FormField {
    FormField::new(label, move |at: &At, k| {
        let mut m = JMat::zeros(at, k, dim, dim);
        for (r, c, e) in &comps {
            let v = e.eval(at, k, &bindings)?;
            m.set(*c, *r, v.neg());
            m.set(*r, *c, v);
        }
        Ok(Form::two_form(&m))
    })
}

fn sample(s: &Scenario, geo_dim: usize, toric: Option<&ToricGKData>, b: &Bindings) -> Result<SamplePlan> {
    let sp = &s.sampling;
    let domain: Vec<Expr> = sp.domain.iter().map(|d| Expr::parse(d)).collect::<Result<_>>()?;
    let keep = |p: &[f64]| {
        let pt = Point(p.to_vec());
        domain.iter().all(|d| d.value_at(&pt, b).map(|v| v > 0.0).unwrap_or(false))
    };
    let plan = match toric {
        Some(d) => {
            let raw = d.pot.sample_plan(sp.grid, sp.fibers, sp.shrink, sp.seed);
            let pts: Vec<Point> = raw.points.into_iter().filter(|p| keep(&p.0)).collect();
            SamplePlan::new(geo_dim, pts)
        }
        None => {
            let bounds: Vec<(f64, f64)> = match &sp.bounds {
                Some(b) => b.iter().map(|r| (r[0], r[1])).collect(),
                None => vec![(-1.0, 1.0); geo_dim],
            };
            SamplePlan::random_box(&bounds, keep, sp.grid * sp.fibers, sp.seed)
        }
    };
    if plan.is_empty() {
        return Err(GeomError::PreconditionUnmet("no sample point satisfies the domain".into()));
    }
    Ok(plan)
}

fn build_geometry(s: &Scenario, rep: &mut Report) -> Option<(Geometry, Ctx)> {
    let tol = Tolerance::new(s.tolerance.abs, s.tolerance.rel);
    let (data, dim) = match &s.structure {
        StructureSpec::Toric { potential, params, c } => {
            let (pot, c0) = stage(rep, "scenario.structure", "symplectic potential", builtin_potential(potential, params))?;
            let n = pot.dim();
            let c = match c {
                Some(rows) => DMatrix::from_fn(rows.len(), rows.first().map_or(0, Vec::len), |r, k| rows[r][k]),
                None => c0,
            };
            let d = stage(rep, "scenario.structure", "symplectic potential", ToricGKData::new(pot, c))?;
            (Some(d), 2 * n)
        }
        StructureSpec::FlatKahler { dim } => (None, 2 * dim),
        StructureSpec::HyperKahler { .. } => (None, 4),
    };
    let names = s.structure.coords(data.as_ref().map_or(0, |d| d.dim()));
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut bindings = Bindings::with_coords(&refs);
    bindings.consts.extend(s.constants.iter().map(|(k, v)| (k.clone(), *v)));
    if let Some(h) = &s.killing.hamiltonian {
        let fh = stage(rep, "scenario.killing", "Hamiltonian", Expr::parse(h).and_then(|e| ScalarField::from_expr(&e, &bindings)))?;
        bindings.fields.insert("fH".into(), fh);
    }
    let plan = stage(rep, "scenario.samples", "sample plan", sample(s, dim, data.as_ref(), &bindings))?;
    rep.points = plan.len();
    let sites = plan.sites();
    let geo = match (&s.structure, data) {
        (StructureSpec::Toric { .. }, Some(data)) => {
            let pair = stage(rep, "scenario.structure", "toric generalized Kähler pair", build_toric_gk(&data, &sites))?;
            let j = toric_complex_structures(&data).0;
            let omega = toric_symplectic_form(data.dim());
            Geometry::Toric { data, pair, j, omega }
        }
        (StructureSpec::FlatKahler { dim }, _) => {
            let pair = stage(rep, "scenario.structure", "flat Kähler pair", flat_kahler_pair(*dim, &sites))?;
            Geometry::Flat { pair, j: flat_complex_structure(*dim), omega: flat_kahler_form(*dim) }
        }
        (StructureSpec::HyperKahler { t }, _) => Geometry::Hyper { hk: flat_hyperkahler(), t: *t },
        _ => unreachable!("toric structures always carry data"),
    };
    Some((geo, Ctx { dim, bindings, plan, tol }))
}

fn killing_field(s: &Scenario, ctx: &Ctx, geo: &Geometry) -> Result<VectorField> {
    match (s.killing.field.as_str(), geo) {
        ("-dt1", Geometry::Toric { data, .. }) => Ok(toric_killing_field(data.dim())),
        ("-dt1", _) => Err(GeomError::PreconditionUnmet("-dt1 needs a toric chart".into())),
        ("rotation", _) => Ok(rotation_field(ctx.dim / 2)),
        (_, _) => Ok(coordinate_field(ctx.dim, s.killing.index.unwrap_or(0))),
    }
}

fn explicit_twist(s: &Scenario, ctx: &Ctx, x0: &VectorField) -> Result<TwistData> {
    let TwistSpec::Explicit { a, f, .. } = &s.twist else {
        unreachable!("explicit twist only");
    };
    let names = s.structure.coords(ctx.dim / 2);
    let idx = |n: &str| names.iter().position(|c| c == n).ok_or_else(|| GeomError::ExpressionError(format!("unknown coordinate `{n}`")));
    let mut comps = Vec::new();
    let mut label = Vec::new();
    for (u, row) in f {
        for (v, e) in row {
            comps.push((idx(u)?, idx(v)?, Expr::parse(e)?));
            label.push(format!("({e}) d{u}^d{v}"));
        }
    }
    let label = if label.is_empty() { "0".to_string() } else { label.join(" + ") };
    Ok(TwistData {
        x0: x0.clone(),
        f: form_from_components(ctx.dim, comps, ctx.bindings.clone(), label),
        a: ctx.scalar(a)?,
    })
}

fn kk_input(s: &Scenario, ctx: &Ctx, geo: &Geometry, hk: &HamiltonianKilling) -> Result<KKInput> {
    let sites = ctx.plan.sites();
    let mut kk = match (&s.twist, geo) {
        (TwistSpec::Classical, Geometry::Toric { pair, j, omega, .. } | Geometry::Flat { pair, j, omega }) => {
            classical_kk_data(pair, j, omega, &hk.x0, &hk.fh, &ctx.plan)?
        }
        (TwistSpec::Corollary1 { lambda0, k0, h }, Geometry::Toric { data, .. }) => {
            let h = ctx.scalar(h)?;
            corollary_data(&Corollary::One { h }, *lambda0, *k0, data, &ctx.plan, ctx.tol)?
        }
        (TwistSpec::Corollary2 { lambda0, k0, k1 }, Geometry::Toric { data, .. }) => {
            corollary_data(&Corollary::Two { k1: *k1 }, *lambda0, *k0, data, &ctx.plan, ctx.tol)?
        }
        (TwistSpec::Corollary1 { .. } | TwistSpec::Corollary2 { .. }, _) => {
            return Err(GeomError::PreconditionUnmet("the corollary builders need a toric structure".into()))
        }
        (TwistSpec::J3 { k }, _) => j3_kk_data(hk, &Expr::parse(k)?, &ctx.plan, ctx.tol)?,
        (TwistSpec::Explicit { .. }, _) => {
            let (Some(f), Some(h)) = (&s.functions.f, &s.functions.h) else {
                return Err(GeomError::PreconditionUnmet("explicit KK twists need functions.f and functions.h".into()));
            };
            KKInput {
                hk: hk.clone(),
                f: ctx.scalar(f)?,
                h: ctx.scalar(h)?,
                tw: explicit_twist(s, ctx, &hk.x0)?,
                warnings: Vec::new(),
            }
        }
        (_, Geometry::Hyper { .. }) => {
            return Err(GeomError::PreconditionUnmet("KK pipelines need a Kähler or toric pair".into()))
        }
    };
    if let Some(f) = &s.functions.f {
        kk.f = ctx.scalar(f)?;
    }
    if let Some(h) = &s.functions.h {
        kk.h = ctx.scalar(h)?;
    }
    // samples on the excluded loci are refused, not extrapolated
    for at in &sites {
        let x = hk.x0.eval(at, 0)?.iter().map(|j| j.value().norm()).fold(0.0, f64::max);
        if x < 1e-9 {
            return Err(GeomError::DomainViolation(format!("X0 vanishes at {:?}", at.point.0)));
        }
        let f2 = kk.f.value(at)?.powi(2);
        if (f2 - 1.0).norm() < 1e-6 {
            return Err(GeomError::DomainViolation(format!("|f^2 - 1| < 1e-6 at {:?}", at.point.0)));
        }
    }
    Ok(kk)
}

fn run_kk(s: &Scenario, ctx: &Ctx, geo: &Geometry, x0: VectorField, rep: &mut Report) {
    let (pair, toric) = match geo {
        Geometry::Toric { pair, data, .. } => (pair, Some(data)),
        Geometry::Flat { pair, .. } => (pair, None),
        Geometry::Hyper { .. } => {
            rep.push_flag(
                "scenario.pipeline",
                "pipeline",
                false,
                Some("KK pipelines need a Kähler or toric pair".into()),
            );
            return;
        }
    };
    let Some(fh) = ctx.bindings.fields.get("fH").cloned() else {
        rep.push_flag("scenario.killing", "Hamiltonian", false, Some("killing.hamiltonian is required".into()));
        return;
    };
    let hk = HamiltonianKilling { x0, fh, pair: pair.clone() };
    rep.extend(check_generalized_kahler(pair, &ctx.plan, ctx.tol));
    rep.extend(validate_hamiltonian_killing(&hk, &ctx.plan, ctx.tol));
    if let (Some(data), true) = (toric, s.checks.toric_formulas) {
        rep.extend(check_toric_formulas(data, &ctx.plan, ctx.tol));
    }
    let Some(kk) = stage(rep, "scenario.twist", s.twist.anchor(), kk_input(s, ctx, geo, &hk)) else {
        return;
    };
    for w in &kk.warnings {
        rep.push_flag("scenario.warning", s.twist.anchor(), true, Some(w.clone()));
    }
    if s.checks.strict_invariance {
        let (f, h, a) = (kk.f.relabel("f"), kk.h.relabel("h"), kk.tw.a.relabel("a"));
        rep.extend(check_data_invariance(&kk.tw.x0, &[], &[&kk.tw.f.relabel("F")], &[&f, &h, &a], &ctx.plan, ctx.tol));
    }
    let lambda = match (&s.functions.lambda, &s.twist) {
        (Some(l), _) => Some(ctx.scalar(l)),
        (None, TwistSpec::Corollary1 { lambda0, .. } | TwistSpec::Corollary2 { lambda0, .. }) => {
            Some(Ok(ScalarField::constant(*lambda0)))
        }
        _ => None,
    };
    match (toric, lambda) {
        (Some(data), Some(lam)) if data.dim() == 2 => {
            let Some(lam) = stage(rep, "scenario.functions", "lambda", lam) else { return };
            rep.extend(check_dim4_conditions(
                data,
                &lam,
                &kk.f,
                &kk.h,
                &kk.tw.a,
                &ctx.plan,
                ctx.tol,
                Dim4Mode::Full { end_to_end: s.checks.end_to_end },
            ));
        }
        _ => {
            rep.extend(validate_twist_data(&kk.tw, &ctx.plan, ctx.tol));
            rep.extend(check_gen_kk(&kk, &ctx.plan, ctx.tol, s.checks.end_to_end));
        }
    }
}

fn zero_bivector(n: usize) -> TangentEndoField {
    Field::new("0", move |at: &At, k| Ok(JMat::zeros(at, k, n, n)))
}

fn run_target(s: &Scenario, target: Target, ctx: &Ctx, geo: &Geometry, x0: VectorField, rep: &mut Report) {
    let Some(tw) = stage(rep, "scenario.twist", "twist data", explicit_twist(s, ctx, &x0)) else {
        return;
    };
    if s.checks.strict_invariance {
        let (f, a) = (tw.f.relabel("F"), tw.a.relabel("a"));
        rep.extend(check_data_invariance(&tw.x0, &[], &[&f], &[&a], &ctx.plan, ctx.tol));
    }
    rep.extend(validate_twist_data(&tw, &ctx.plan, ctx.tol));
    let (plan, tol) = (&ctx.plan, ctx.tol);
    match (target, geo) {
        (Target::Complex, Geometry::Toric { j, .. } | Geometry::Flat { j, .. }) => {
            rep.extend(check_poisson_complex_twist(j, &zero_bivector(ctx.dim), &tw, plan, tol));
        }
        (Target::Symplectic, Geometry::Toric { omega, .. } | Geometry::Flat { omega, .. }) => {
            rep.extend(check_symplectic_twist(omega, &tw, plan, tol));
        }
        (Target::Interpolation, Geometry::Hyper { hk, t }) => {
            rep.extend(check_interpolation_twist(hk, *t, &tw, plan, tol));
        }
        (t, _) => rep.push_flag(
            "scenario.pipeline",
            "pipeline",
            false,
            Some(format!("target {t:?} does not apply to this structure")),
        ),
    }
}

/// Run the scenario's pipeline. Failures of any stage become failing
/// records; the report is always complete.
pub fn run_scenario(s: &Scenario) -> Report {
    let start = Instant::now();
    let mut rep = Report::new(s.title.clone());
    if let Some((geo, ctx)) = build_geometry(s, &mut rep) {
        if let Some(x0) = stage(&mut rep, "scenario.killing", "Killing field", killing_field(s, &ctx, &geo)) {
            match &s.twist {
                TwistSpec::Explicit { target, .. } if *target != Target::Kk => {
                    run_target(s, *target, &ctx, &geo, x0, &mut rep)
                }
                _ => run_kk(s, &ctx, &geo, x0, &mut rep),
            }
        }
    }
    rep.elapsed_ms = start.elapsed().as_millis();
    rep
}
