//! Minimal 2x2 linear algebra used by the linearized (moderate deviation)
//! layer. Matrices are row-major `[[f64; 2]; 2]`.

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub fn matvec(m: &Mat2, v: Vec2) -> Vec2 {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

pub fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn inverse(m: &Mat2) -> Result<Mat2> {
    let d = det(m);
    if d == 0.0 || !d.is_finite() {
        return Err(Error::Singular(format!("determinant {d}")));
    }
    Ok([
        [m[1][1] / d, -m[0][1] / d],
        [-m[1][0] / d, m[0][0] / d],
    ])
}

/// Solve `m x = b`.
pub fn solve(m: &Mat2, b: Vec2) -> Result<Vec2> {
    Ok(matvec(&inverse(m)?, b))
}

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Quadratic form `v^T m v`.
pub fn quad_form(m: &Mat2, v: Vec2) -> f64 {
    dot(v, matvec(m, v))
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym_eigenvalues(m: &Mat2) -> (f64, f64) {
    let tr = m[0][0] + m[1][1];
    let disc = ((m[0][0] - m[1][1]).powi(2) + 4.0 * m[0][1] * m[1][0]).max(0.0);
    let r = disc.sqrt();
    ((tr - r) / 2.0, (tr + r) / 2.0)
}

/// Spectral condition number of a symmetric matrix (infinite when singular).
pub fn sym_condition(m: &Mat2) -> f64 {
    let (lo, hi) = sym_eigenvalues(m);
    let (alo, ahi) = (lo.abs().min(hi.abs()), lo.abs().max(hi.abs()));
    if alo == 0.0 {
        f64::INFINITY
    } else {
        ahi / alo
    }
}
