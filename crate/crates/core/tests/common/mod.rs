#![allow(dead_code)]

use gk_core::deform::{j2_prime_conjugation, j2_prime_table, FrameJet};
use gk_core::linalg::cr;
use gk_core::structures::GenHermitianPair;
use gk_core::tangent::{Field, GSec, SectionField, VectorField};
use gk_core::toric::SymplecticPotential;
use gk_core::{At, Jet, Layout, Point, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Quadratic polynomial in the coordinates other than `skip`, so that it is
/// invariant under `∂_skip`.
#[derive(Clone, Debug)]
pub struct Poly {
    pub c0: f64,
    pub lin: Vec<f64>,
    pub quad: Vec<f64>,
    pub skip: usize,
}

impl Poly {
    pub fn random(rng: &mut impl Rng, dim: usize, skip: usize) -> Poly {
        let mut c = || rng.random_range(-1.0..1.0);
        Poly {
            c0: c(),
            lin: (0..dim).map(|_| c()).collect(),
            quad: (0..dim * dim).map(|_| c()).collect(),
            skip,
        }
    }

    pub fn jet(&self, at: &At, k: usize) -> Jet {
        let n = at.dim();
        let mut s = at.real(k, self.c0);
        for i in (0..n).filter(|&i| i != self.skip) {
            s = s.add(&at.coord(i, k).scale(cr(self.lin[i])));
            for j in (i..n).filter(|&j| j != self.skip) {
                s = s.add(&at.coord(i, k).mul(&at.coord(j, k)).scale(cr(self.quad[i * n + j])));
            }
        }
        s
    }
}

/// Section `Σ Pᵢ ∂ᵢ + Σ Qᵢ dxⁱ` with random invariant polynomial components.
pub fn random_section(rng: &mut impl Rng, dim: usize, skip: usize, label: &str) -> SectionField {
    let comps: Vec<Poly> = (0..2 * dim).map(|_| Poly::random(rng, dim, skip)).collect();
    Field::new(label, move |at: &At, k| {
        let v: Vec<Jet> = comps.iter().map(|p| p.jet(at, k)).collect();
        Ok(GSec::from_stacked(v))
    })
}

pub fn random_function(rng: &mut impl Rng, dim: usize, skip: usize, label: &str) -> ScalarField {
    let p = Poly::random(rng, dim, skip);
    ScalarField::new(label, move |at, k| Ok(p.jet(at, k)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const FD_STEP: f64 = 1e-5;

fn shifted(at: &At, i: usize, h: f64) -> At {
    let mut p = at.point.0.clone();
    p[i] += h;
    At::new(at.layout.clone(), Point(p))
}

fn rel_gap(jet: f64, fd: f64) -> f64 {
    (jet - fd).abs() / jet.abs().max(1.0)
}

/// Worst relative gap between jet partials of order ≤ 2 of `τ` and central
/// differences: first partials against differences of values, second
/// partials against differences of first partials.
pub fn tau_fd_gap(tau: &ScalarField, points: &[Point]) -> f64 {
    let mut worst: f64 = 0.0;
    for p in points {
        let n = p.0.len();
        let at = At::new(Layout::new(n, 2), p.clone());
        let j = tau.eval_jet(&at, 2).unwrap();
        for i in 0..n {
            let up = tau.eval_jet(&shifted(&at, i, FD_STEP), 1).unwrap();
            let dn = tau.eval_jet(&shifted(&at, i, -FD_STEP), 1).unwrap();
            let fd = (up.value().re - dn.value().re) / (2.0 * FD_STEP);
            worst = worst.max(rel_gap(j.deriv(&[i]).re, fd));
            for m in 0..n {
                let fd2 = (up.deriv(&[m]).re - dn.deriv(&[m]).re) / (2.0 * FD_STEP);
                worst = worst.max(rel_gap(j.deriv(&[i, m]).re, fd2));
            }
        }
    }
    worst
}

/// Worst relative gap between first jet partials of the Hessian entries and
/// central differences of their values, and the worst violation of
/// `∂_k τ_ij = ∂_i τ_kj` (symmetry of third derivatives).
pub fn hessian_fd_gap(pot: &SymplecticPotential, points: &[Point]) -> (f64, f64) {
    let (mut fd_worst, mut sym_worst): (f64, f64) = (0.0, 0.0);
    let n = pot.dim();
    for p in points {
        let at = At::new(Layout::new(2 * n, 3), p.clone());
        let h = pot.hessian(&at, 1).unwrap();
        for v in 0..2 * n {
            let up = pot.hessian(&shifted(&at, v, FD_STEP), 0).unwrap();
            let dn = pot.hessian(&shifted(&at, v, -FD_STEP), 0).unwrap();
            for r in 0..n {
                for c in 0..n {
                    let fd = (up.get(r, c).value().re - dn.get(r, c).value().re) / (2.0 * FD_STEP);
                    fd_worst = fd_worst.max(rel_gap(h.get(r, c).deriv(&[v]).re, fd));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let a = h.get(i, j).deriv(&[n + k]).re;
                    let b = h.get(k, j).deriv(&[n + i]).re;
                    sym_worst = sym_worst.max((a - b).abs() / a.abs().max(1.0));
                }
            }
        }
    }
    (fd_worst, sym_worst)
}

/// Worst gap between the explicit `𝒥₂′` table and `τ𝒥₂τ⁻¹`, relative to
/// the size of `𝒥₂′` with a unit floor.
pub fn j2_prime_gap(pair: &GenHermitianPair, x0: &VectorField, f: &ScalarField, sites: &[At]) -> f64 {
    let mut worst: f64 = 0.0;
    for at in sites {
        let pj = pair.eval(at, 1).unwrap();
        let fr = FrameJet::new(&pj, &x0.eval(at, 1).unwrap()).unwrap();
        let fj = f.eval_jet(at, 1).unwrap();
        let a = j2_prime_conjugation(&pj, &fr, &fj).unwrap();
        let b = j2_prime_table(&pj, &fr, &fj).unwrap();
        worst = worst.max(a.sub(&b).max_abs_jet() / a.max_abs_jet().max(1.0));
    }
    worst
}
