use num_complex::Complex64;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Largest matrix (in entries) accepted by [`singular_values_exact`].
pub const EXACT_SVD_LIMIT: usize = 4096;

const MAX_SWEEPS: usize = 100;

/// Full singular spectrum, descending, by one-sided Jacobi rotations.
///
/// Limited to [`EXACT_SVD_LIMIT`] entries; use [`singular_values_exact_with_limit`] for larger
/// oracle computations.
pub fn singular_values_exact(m: &Matrix) -> Result<Vec<f64>> {
    singular_values_exact_with_limit(m, EXACT_SVD_LIMIT)
}

pub fn singular_values_exact_with_limit(m: &Matrix, limit: usize) -> Result<Vec<f64>> {
    if m.len() > limit {
        return Err(Error::SizeLimit {
            entries: m.len(),
            limit,
        });
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    // Orthogonalise the columns of the taller orientation; store them contiguously.
    let (tall_rows, tall_cols) = if m.rows() >= m.cols() {
        (m.rows(), m.cols())
    } else {
        (m.cols(), m.rows())
    };
    let mut columns: Vec<Vec<f64>> = if m.rows() >= m.cols() {
        (0..tall_cols)
            .map(|c| (0..tall_rows).map(|r| m.get(r, c)).collect())
            .collect()
    } else {
        (0..tall_cols).map(|r| m.row(r).to_vec()).collect()
    };
    jacobi_orthogonalise(&mut columns);
    let mut sigmas: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sigmas.sort_by(|a, b| b.total_cmp(a));
    Ok(sigmas)
}

fn jacobi_orthogonalise(columns: &mut [Vec<f64>]) {
    let n = columns.len();
    let mut norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma: f64 = columns[p]
                    .iter()
                    .zip(&columns[q])
                    .map(|(a, b)| a * b)
                    .sum();
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = columns.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                let mut np = 0.0;
                let mut nq = 0.0;
                for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                    np += *a * *a;
                    nq += *b * *b;
                }
                norms[p] = np;
                norms[q] = nq;
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Singular values (descending, `min(rows, cols)` of them) of a row-major complex matrix.
///
/// Uses the real embedding `[[Re, -Im], [Im, Re]]`, whose spectrum is the complex spectrum with
/// every value repeated twice.
pub fn complex_singular_values(rows: usize, cols: usize, data: &[Complex64]) -> Result<Vec<f64>> {
    if rows == 0 || cols == 0 || data.len() != rows * cols {
        return Err(Error::Shape(format!(
            "complex {rows}x{cols} matrix with {} entries",
            data.len()
        )));
    }
    let embedded = Matrix::from_fn(2 * rows, 2 * cols, |r, c| {
        let z = data[(r % rows) * cols + (c % cols)];
        match (r < rows, c < cols) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let doubled = singular_values_exact_with_limit(&embedded, usize::MAX)?;
    Ok(doubled
        .into_iter()
        .step_by(2)
        .take(rows.min(cols))
        .collect())
}
