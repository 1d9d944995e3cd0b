//! Small dense linear algebra kernels.
//!
//! The systems solved in this crate are tiny (at most a few tens of rows and
//! ten unknowns), so the kernels below are written directly rather than
//! pulling in a matrix library: a Cholesky solve for symmetric positive
//! definite systems and a cyclic Jacobi eigendecomposition for symmetric
//! matrices. All loops accumulate in a fixed left-to-right order so results
//! are bit-reproducible run to run.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is singular or not positive definite{0}")]
    NotPositiveDefinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("jacobi eigendecomposition did not converge after {0} sweeps")]
    NoConvergence(usize),
}

/// Dot product with sequential accumulation.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot(a, b) / (na * nb))
}

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] = value;
    }

    #[inline]
    pub fn add_to(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] += value;
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (row, slot) in out.iter_mut().enumerate() {
            *slot = dot(&self.data[row * self.n..(row + 1) * self.n], x);
        }
        out
    }
}

/// Solves `A x = b` for symmetric positive definite `A` via Cholesky
/// factorization. Fails when a pivot is not strictly positive.
pub fn cholesky_solve(a: &SquareMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.n;
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "matrix is {n}x{n} but rhs has length {}",
            b.len()
        )));
    }
    // Lower-triangular factor L with A = L L^T. Pivots are rejected when
    // they fall below a relative threshold, catching rank deficiency that
    // rounding would otherwise turn into a tiny positive pivot.
    let mut max_diag = 0.0f64;
    for i in 0..n {
        max_diag = max_diag.max(a.get(i, i).abs());
    }
    let pivot_floor = max_diag * 1e-12;
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= pivot_floor || !sum.is_finite() {
                    return Err(LinalgError::NotPositiveDefinite(
                        "; increase the ridge penalty lambda above zero",
                    ));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    // Forward substitution: L y = b.
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    // Back substitution: L^T x = y.
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Ok(x)
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns eigenvalues in descending order with matching unit eigenvectors
/// (rows of the returned matrix). Each eigenvector's sign is canonicalized so
/// its largest-magnitude entry is positive.
pub fn symmetric_eigen(a: &SquareMatrix) -> Result<(Vec<f64>, Vec<Vec<f64>>), LinalgError> {
    let n = a.n;
    let mut m = a.data.clone();
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frobenius: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frobenius.max(1.0);
    let max_sweeps = 64;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Apply the rotation to rows/columns p and q.
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        // One final check; tiny matrices occasionally need the last sweep.
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() > tol * 10.0 {
            return Err(LinalgError::NoConvergence(max_sweeps));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[j * n + j]
            .partial_cmp(&m[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for &idx in &order {
        values.push(m[idx * n + idx]);
        let mut vec_i: Vec<f64> = (0..n).map(|k| v[k * n + idx]).collect();
        canonicalize_sign(&mut vec_i);
        vectors.push(vec_i);
    }
    Ok((values, vectors))
}

fn canonicalize_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(n: usize, entries: &[f64]) -> SquareMatrix {
        SquareMatrix {
            n,
            data: entries.to_vec(),
        }
    }

    #[test]
    fn cholesky_solves_identity() {
        let a = mat(2, &[1.0, 0.0, 0.0, 1.0]);
        let x = cholesky_solve(&a, &[3.0, -2.0]).unwrap();
        assert_eq!(x, vec![3.0, -2.0]);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // A = [[4,2],[2,3]], b = [8, 7] -> x = [1.25, 1.5]
        let a = mat(2, &[4.0, 2.0, 2.0, 3.0]);
        let x = cholesky_solve(&a, &[8.0, 7.0]).unwrap();
        assert!((x[0] - 1.25).abs() < 1e-12);
        assert!((x[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_singular() {
        let a = mat(2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_solve(&a, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn eigen_diagonal_matrix() {
        let a = mat(3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let (values, vectors) = symmetric_eigen(&a).unwrap();
        assert!((values[0] - 3.0).abs() < 1e-12);
        assert!((values[1] - 2.0).abs() < 1e-12);
        assert!((values[2] - 1.0).abs() < 1e-12);
        assert!((vectors[0][0] - 1.0).abs() < 1e-12);
        assert!((vectors[1][2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        // Symmetric matrix with known structure; check A v = lambda v.
        let a = mat(3, &[2.0, 1.0, 0.5, 1.0, 3.0, 0.25, 0.5, 0.25, 1.5]);
        let (values, vectors) = symmetric_eigen(&a).unwrap();
        for (lambda, vec_i) in values.iter().zip(vectors.iter()) {
            let av = a.mul_vec(vec_i);
            for k in 0..3 {
                assert!(
                    (av[k] - lambda * vec_i[k]).abs() < 1e-10,
                    "eigenpair residual too large"
                );
            }
        }
    }

    #[test]
    fn cosine_zero_vector_is_none() {
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_none());
    }

    #[test]
    fn cosine_self_is_one() {
        let sim = cosine_similarity(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((sim - 1.0).abs() < 1e-12);
    }
}
