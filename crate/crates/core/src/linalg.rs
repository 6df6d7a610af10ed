//! Small dense linear-algebra helpers shared by the control and estimation code.

use nalgebra::{DMatrix, DVector};

/// Operator (spectral) norm: the largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Smallest singular value of `m` (zero for empty matrices).
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().min()
}

/// Largest absolute eigenvalue of a square matrix.
///
/// Uses the real Schur form, so complex conjugate pairs are handled exactly.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral radius needs a square matrix");
    match m.nrows() {
        0 => 0.0,
        1 => m[(0, 0)].abs(),
        _ => m
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    }
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let s = symmetrized(m);
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// (M + Mᵀ) / 2
pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Relative asymmetry ‖M − Mᵀ‖_max / max(1, ‖M‖_max).
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

/// Log-determinant of a symmetric positive definite matrix via Cholesky.
pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    Some(
        chol.l_dirty()
            .diagonal()
            .iter()
            .map(|d| 2.0 * d.ln())
            .sum(),
    )
}

/// Build a matrix from row-major nested vectors.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Row-major nested vectors, the on-disk layout for matrices.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn vector_norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// xᵀ M x for a square `m` and a slice `x`.
pub fn quad_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += x[i] * m[(i, j)];
        }
        acc += col * x[j];
    }
    acc
}

/// out = M x, no allocation.
pub fn mat_vec_into(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.ncols(), x.len());
    debug_assert_eq!(m.nrows(), out.len());
    out.iter_mut().for_each(|o| *o = 0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = m.column(j);
        for (o, &mij) in out.iter_mut().zip(col.iter()) {
            *o += mij * xj;
        }
    }
}

/// out += M x, no allocation.
pub fn mat_vec_add(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = m.column(j);
        for (o, &mij) in out.iter_mut().zip(col.iter()) {
            *o += mij * xj;
        }
    }
}

pub fn dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
