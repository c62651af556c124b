//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{AjdError, Result};

/// Tolerance below which a symmetric matrix still counts as PSD.
pub const PSD_TOLERANCE: f64 = 1e-8;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Outer-product pivoted Cholesky of a symmetric PSD matrix stored row-major
/// in `m` (destroyed). Writes `out` (row-major d×d) with `out * outᵀ = m`.
///
/// The pivot vector for index `p` is stored in column `p`, so a coordinate
/// with zero variance gets a zero row and a zero column. Returns `Err(())` when the residual
/// Schur complement is not within [`PSD_TOLERANCE`] of zero.
/// `done` is caller-provided scratch of length `d`.
pub(crate) fn psd_factor_slice(
    d: usize,
    m: &mut [f64],
    out: &mut [f64],
    done: &mut [bool],
) -> std::result::Result<(), ()> {
    debug_assert_eq!(m.len(), d * d);
    debug_assert_eq!(out.len(), d * d);
    out.iter_mut().for_each(|v| *v = 0.0);
    done.iter_mut().for_each(|v| *v = false);
    let scale = (0..d).map(|i| m[i * d + i].abs()).fold(1.0_f64, f64::max);
    let pivot_floor = 1e-13 * scale;
    for _ in 0..d {
        let mut p = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for i in 0..d {
            if !done[i] && m[i * d + i] > best {
                best = m[i * d + i];
                p = i;
            }
        }
        if best <= pivot_floor {
            break;
        }
        let l = best.sqrt();
        for r in 0..d {
            if !done[r] {
                out[r * d + p] = m[r * d + p] / l;
            }
        }
        done[p] = true;
        for r in 0..d {
            if done[r] {
                continue;
            }
            let cr = out[r * d + p];
            for s in 0..d {
                if !done[s] {
                    m[r * d + s] -= cr * out[s * d + p];
                }
            }
        }
    }
    for r in 0..d {
        if done[r] {
            continue;
        }
        for s in 0..d {
            if !done[s] && m[r * d + s].abs() > PSD_TOLERANCE * scale.max(1.0) {
                return Err(());
            }
        }
    }
    Ok(())
}

/// Square-root factor `σ` with `σ σᵀ = m` for a symmetric PSD matrix.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(AjdError::Dimension(format!("expected square matrix, got {}x{}", d, m.ncols())));
    }
    let sym = symmetrize(m);
    let min_eig = min_sym_eigenvalue(&sym);
    if min_eig < -PSD_TOLERANCE {
        return Err(AjdError::Indefinite { min_eigenvalue: min_eig });
    }
    let mut work: Vec<f64> = (0..d * d).map(|k| sym[(k / d, k % d)]).collect();
    let mut out = vec![0.0; d * d];
    let mut done = vec![false; d];
    psd_factor_slice(d, &mut work, &mut out, &mut done)
        .map_err(|_| AjdError::Indefinite { min_eigenvalue: min_eig })?;
    Ok(DMatrix::from_row_slice(d, d, &out))
}

/// Solves `m x = rhs` by LU, failing on (numerically) singular `m`.
pub fn solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    m.clone()
        .lu()
        .solve(rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| AjdError::Singular("LU solve failed".into()))
}

pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| AjdError::Singular("matrix inverse failed".into()))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(AjdError::Dimension(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Serde adapter writing a matrix as a list of rows.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
    }
}

/// [`serde_rows`] for optional matrices.
pub mod serde_rows_opt {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(super::to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        Ok(rows.map(|rows| {
            let c = rows.first().map_or(0, Vec::len);
            DMatrix::from_fn(rows.len(), c, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN))
        }))
    }
}
