use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Eigenvalues within this distance of the largest count toward the top
/// multiplicity.
pub const TOP_TOL: f64 = 1e-8;
const ASYMMETRY_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Full eigendecomposition of a symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` belongs to `eigenvalues[i]`.
    pub eigenvectors: Matrix,
    /// Number of eigenvalues within [`TOP_TOL`] of the largest.
    pub multiplicity: usize,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Orthonormal basis of the top eigenspace U, one column per vector.
    pub fn top_basis(&self) -> Matrix {
        self.columns(self.n() - self.multiplicity..self.n())
    }

    /// Orthonormal basis of U⊥.
    pub fn complement_basis(&self) -> Matrix {
        self.columns(0..self.n() - self.multiplicity)
    }

    fn columns(&self, range: std::ops::Range<usize>) -> Matrix {
        let n = self.n();
        let mut out = Matrix::zeros(n, range.len());
        for r in 0..n {
            for (j, c) in range.clone().enumerate() {
                out.row_mut(r)[j] = self.eigenvectors.row(r)[c];
            }
        }
        out
    }

    /// Largest eigenvalue below `1 - TOP_TOL`, or 0 when there is none.
    pub fn subdominant(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .filter(|&l| l < 1.0 - TOP_TOL)
            .fold(0.0, f64::max)
    }

    /// Orthogonal projection of every column of `h` onto U.
    pub fn project(&self, h: &Matrix) -> Result<Matrix> {
        let u = self.top_basis();
        u.matmul(&u.t_matmul(h)?)
    }

    /// `E diag(λ) Eᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.n();
        let e = &self.eigenvectors;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.row_mut(i)[j] = (0..n).map(|k| e.row(i)[k] * self.eigenvalues[k] * e.row(j)[k]).sum();
            }
        }
        out
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn eigendecompose(a: &Matrix) -> Result<SpectralDecomposition> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension {
            op: "eigendecompose",
            left: a.shape(),
            right: a.shape(),
        });
    }
    if n == 0 {
        return Err(Error::Precondition("cannot decompose an empty matrix".into()));
    }
    let asym = a.max_abs_diff(&a.transpose());
    if !(asym <= ASYMMETRY_TOL) {
        return Err(Error::Precondition(format!("matrix is not symmetric (max |a_ij - a_ji| = {asym:e})")));
    }
    let mut m: Vec<f64> = a.as_slice().to_vec();
    // Symmetrize exactly so rotations act on one consistent matrix.
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    let mut v = Matrix::identity(n).into_vec();
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (kp, kq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * kp - s * kq;
                    m[k * n + q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * pk - s * qk;
                    m[q * n + k] = s * pk + c * qk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let (kp, kq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * kp - s * kq;
                    v[k * n + q] = s * kp + c * kq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for r in 0..n {
        for (c, &src) in order.iter().enumerate() {
            eigenvectors.row_mut(r)[c] = v[r * n + src];
        }
    }
    let top = eigenvalues[n - 1];
    let multiplicity = eigenvalues.iter().filter(|&&l| top - l <= TOP_TOL).count();
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        multiplicity,
    })
}

/// `(Â + I) / 2`: maps a spectrum in (−1, 1] into (0, 1] and keeps the
/// eigenvectors.
pub fn spectral_shift(a: &Matrix) -> Matrix {
    let mut out = a.scale(0.5);
    for i in 0..a.rows().min(a.cols()) {
        out.row_mut(i)[i] += 0.5;
    }
    out
}

/// Distance of `H` from U, the norm of its projection and the angle between
/// them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubspaceGeometry {
    pub d_m: f64,
    pub p_norm: f64,
    /// In [0, π/2]; 0 for the zero matrix.
    pub theta: f64,
    /// `H = 0`, so the angle is undefined and reported as 0.
    pub degenerate: bool,
}

pub fn subspace_distance_and_angle(h: &Matrix, dec: &SpectralDecomposition) -> Result<SubspaceGeometry> {
    if h.rows() != dec.n() {
        return Err(Error::Dimension {
            op: "subspace_distance_and_angle",
            left: h.shape(),
            right: dec.eigenvectors.shape(),
        });
    }
    let p = dec.project(h)?;
    let d_m = h.zip_map(&p, |x, y| x - y).frobenius_norm();
    let p_norm = p.frobenius_norm();
    let degenerate = d_m == 0.0 && p_norm == 0.0;
    let theta = if degenerate { 0.0 } else { d_m.atan2(p_norm) };
    Ok(SubspaceGeometry {
        d_m,
        p_norm,
        theta,
        degenerate,
    })
}
