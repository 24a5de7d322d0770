//! Flat reference models on ℝ²ⁿ = ℂⁿ with coordinates (x1, y1, …, xn, yn).

use crate::error::Result;
use crate::forms::{Form, FormField};
use crate::jet::At;
use crate::linalg::JMat;
use crate::structures::{build_hermitian_pair, GenComplexStructure, GenHermitianPair, TangentEndoField};
use crate::tangent::{Field, VectorField};
use crate::twist::HyperKahler;

/// `J ∂x_k = ∂y_k`.
pub fn flat_complex_structure(n: usize) -> TangentEndoField {
    Field::new("J0", move |at: &At, k| {
        Ok(JMat::from_fn(2 * n, 2 * n, |r, c| {
            let v = if r == c + 1 && c % 2 == 0 {
                1.0
            } else if c == r + 1 && r % 2 == 0 {
                -1.0
            } else {
                0.0
            };
            at.real(k, v)
        }))
    })
}

/// `ω = Σ dx_k ∧ dy_k`.
pub fn flat_kahler_form(n: usize) -> FormField {
    FormField::new("omega0", move |at: &At, k| {
        Ok(Form::two_form(&JMat::from_fn(2 * n, 2 * n, |r, c| {
            let v = if c == r + 1 && r % 2 == 0 {
                1.0
            } else if r == c + 1 && c % 2 == 0 {
                -1.0
            } else {
                0.0
            };
            at.real(k, v)
        })))
    })
}

/// `(𝒥_J, 𝒥_ω)` of flat ℂⁿ.
pub fn flat_kahler_pair(n: usize, sites: &[At]) -> Result<GenHermitianPair> {
    let j1 = GenComplexStructure::from_complex(&flat_complex_structure(n), sites)?;
    let j2 = GenComplexStructure::from_symplectic(&flat_kahler_form(n), sites)?;
    build_hermitian_pair(j1, j2, sites)
}

/// Diagonal rotation `X₀ = Σ (−y_k ∂x_k + x_k ∂y_k)`.
pub fn rotation_field(n: usize) -> VectorField {
    Field::new("X_rot", move |at: &At, k| {
        Ok((0..2 * n)
            .map(|i| {
                if i % 2 == 0 {
                    at.coord(i + 1, k).neg()
                } else {
                    at.coord(i - 1, k)
                }
            })
            .collect())
    })
}

/// Constant coordinate vector field `∂_i`.
pub fn coordinate_field(dim: usize, i: usize) -> VectorField {
    Field::new(format!("d{i}"), move |at: &At, k| {
        Ok((0..dim)
            .map(|r| at.real(k, if r == i { 1.0 } else { 0.0 }))
            .collect())
    })
}

/// Left multiplication by `i, j, k` on ℍ = ℝ⁴ with the Euclidean metric and
/// `ω_A = Aᵀg`.
pub fn flat_hyperkahler() -> HyperKahler {
    let li = [[0., -1., 0., 0.], [1., 0., 0., 0.], [0., 0., 0., -1.], [0., 0., 1., 0.]];
    let lj = [[0., 0., -1., 0.], [0., 0., 0., 1.], [1., 0., 0., 0.], [0., -1., 0., 0.]];
    let mut lk = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            lk[r][c] = (0..4).map(|m| li[r][m] * lj[m][c]).sum();
        }
    }
    let endo = |name: &str, m: [[f64; 4]; 4]| {
        Field::new(name, move |at: &At, k| Ok(JMat::from_fn(4, 4, |r, c| at.real(k, m[r][c]))))
    };
    let form = |name: &str, m: [[f64; 4]; 4]| {
        FormField::new(name, move |at: &At, k| {
            Ok(Form::two_form(&JMat::from_fn(4, 4, |r, c| at.real(k, m[c][r]))))
        })
    };
    let id = [[1., 0., 0., 0.], [0., 1., 0., 0.], [0., 0., 1., 0.], [0., 0., 0., 1.]];
    HyperKahler {
        metric: endo("g", id),
        i: endo("I", li),
        j: endo("J", lj),
        k: endo("K", lk),
        omega_i: form("omega_I", li),
        omega_j: form("omega_J", lj),
        omega_k: form("omega_K", lk),
    }
}
