//! Dense small-matrix kernel: pseudoinverse, null spaces, weighted metrics
//! and weighted orthogonal projectors.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix has dependent columns (numerical rank {rank} < {cols})")]
    Rank { rank: usize, cols: usize },
    #[error("metric is not symmetric positive definite: {0}")]
    Metric(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite entry in input")]
    NonFinite,
}

/// Pseudoinverse together with the conditioning information gathered on the way.
#[derive(Debug, Clone)]
pub struct PinvResult {
    pub matrix: Matrix,
    pub rank: usize,
    /// Ratio of largest to smallest retained singular value.
    pub condition: f64,
    /// Set when the retained part is worse conditioned than 1e12.
    pub ill_conditioned: bool,
}

/// Singular values below this are treated as zero.
pub fn rank_threshold(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Moore–Penrose pseudoinverse via SVD.
pub fn pinv(a: &Matrix) -> Matrix {
    pinv_full(a).matrix
}

pub fn pinv_full(a: &Matrix) -> PinvResult {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return PinvResult {
            matrix: Matrix::zeros(cols, rows),
            rank: 0,
            condition: 1.0,
            ill_conditioned: false,
        };
    }
    let svd = Svd::new(a);
    let rank = svd.rank();
    let mut out = Matrix::zeros(cols, rows);
    for i in 0..rank {
        out += (svd.v.column(i) / svd.s[i]) * svd.u.column(i).transpose();
    }
    let condition = if rank == 0 { 1.0 } else { svd.s[0] / svd.s[rank - 1] };
    PinvResult {
        matrix: out,
        rank,
        condition,
        ill_conditioned: condition > 1e12,
    }
}

/// Full SVD with singular values in decreasing order. nalgebra's
/// bidiagonal solver loses the factorisation on rank-deficient input, so
/// this goes through faer.
struct Svd {
    u: Matrix,
    s: Vec<f64>,
    v: Matrix,
    tau: f64,
}

impl Svd {
    fn new(a: &Matrix) -> Self {
        let (rows, cols) = a.shape();
        let m = faer::Mat::<f64>::from_fn(rows, cols, |i, j| a[(i, j)]);
        let svd = m.svd().expect("SVD of a finite matrix converges");
        let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
        let s: Vec<f64> = (0..rows.min(cols)).map(|i| fs[i]).collect();
        let smax = s.first().copied().unwrap_or(0.0);
        Self {
            u: Matrix::from_fn(rows, rows, |i, j| fu[(i, j)]),
            v: Matrix::from_fn(cols, cols, |i, j| fv[(i, j)]),
            tau: rank_threshold(rows, cols, smax).max(f64::MIN_POSITIVE),
            s,
        }
    }

    fn rank(&self) -> usize {
        self.s.iter().filter(|&&s| s > self.tau).count()
    }
}

/// Numerical rank under the SVD threshold.
pub fn rank(a: &Matrix) -> usize {
    if a.is_empty() {
        return 0;
    }
    Svd::new(a).rank()
}

/// Orthonormal basis of `Ker a`, one column per kernel direction.
pub fn null_space(a: &Matrix) -> Matrix {
    let (rows, cols) = a.shape();
    if cols == 0 {
        return Matrix::zeros(0, 0);
    }
    if rows == 0 {
        return Matrix::identity(cols, cols);
    }
    let svd = Svd::new(a);
    let r = svd.rank();
    svd.v.columns(r, cols - r).into_owned()
}

/// Orthonormal basis of `Im a`.
pub fn range_basis(a: &Matrix) -> Matrix {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Matrix::zeros(rows, 0);
    }
    let svd = Svd::new(a);
    svd.u.columns(0, svd.rank()).into_owned()
}

/// Symmetric positive-definite Gram matrix of an inner product
/// `<x, y>_M = xᵀ M y`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMetric {
    matrix: Matrix,
    diagonal: bool,
}

impl WeightedMetric {
    pub fn identity(n: usize) -> Self {
        Self {
            matrix: Matrix::identity(n, n),
            diagonal: true,
        }
    }

    pub fn diagonal(weights: &[f64]) -> Result<Self, LinalgError> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(LinalgError::Metric(format!("diagonal weight {w} is not positive")));
        }
        Ok(Self {
            matrix: Matrix::from_diagonal(&Vector::from_column_slice(weights)),
            diagonal: true,
        })
    }

    /// Metric of the compliance-weighted stress space: weights `1/k_i`.
    pub fn from_stiffness(stiffness: &[f64]) -> Result<Self, LinalgError> {
        let inv: Vec<f64> = stiffness.iter().map(|k| 1.0 / k).collect();
        Self::diagonal(&inv)
    }

    pub fn from_matrix(m: Matrix) -> Result<Self, LinalgError> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(LinalgError::Dimension {
                expected: n,
                found: m.ncols(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        if (&m - m.transpose()).amax() > 1e-12 * scale {
            return Err(LinalgError::Metric("not symmetric".into()));
        }
        let min_eig = m.clone().symmetric_eigenvalues().min();
        if min_eig <= 0.0 {
            return Err(LinalgError::Metric(format!("smallest eigenvalue {min_eig}")));
        }
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
        Ok(Self {
            matrix: m,
            diagonal,
        })
    }

    /// Block-diagonal combination of two metrics.
    pub fn block(a: &WeightedMetric, b: &WeightedMetric) -> Self {
        let (n, m) = (a.dim(), b.dim());
        let mut out = Matrix::zeros(n + m, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(&a.matrix);
        out.view_mut((n, n), (m, m)).copy_from(&b.matrix);
        Self {
            matrix: out,
            diagonal: a.diagonal && b.diagonal,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn inner(&self, x: &Vector, y: &Vector) -> f64 {
        if self.diagonal {
            x.iter()
                .zip(y.iter())
                .zip(self.matrix.diagonal().iter())
                .map(|((a, b), w)| a * b * w)
                .sum()
        } else {
            x.dot(&(&self.matrix * y))
        }
    }

    pub fn norm(&self, x: &Vector) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        if self.diagonal {
            x.component_mul(&self.matrix.diagonal())
        } else {
            &self.matrix * x
        }
    }

    pub fn inverse(&self) -> Matrix {
        if self.diagonal {
            Matrix::from_diagonal(&self.matrix.diagonal().map(|w| 1.0 / w))
        } else {
            self.matrix
                .clone()
                .cholesky()
                .expect("metric is positive definite")
                .inverse()
        }
    }

    pub fn apply_inverse(&self, x: &Vector) -> Vector {
        if self.diagonal {
            x.component_div(&self.matrix.diagonal())
        } else {
            self.matrix
                .clone()
                .cholesky()
                .expect("metric is positive definite")
                .solve(x)
        }
    }

    /// Gram matrix `Bᵀ M B` of a basis.
    pub fn gram(&self, basis: &Matrix) -> Matrix {
        if self.diagonal {
            let scaled = Matrix::from_fn(basis.nrows(), basis.ncols(), |i, j| {
                basis[(i, j)] * self.matrix[(i, i)]
            });
            basis.transpose() * scaled
        } else {
            basis.transpose() * &self.matrix * basis
        }
    }

    /// Dual norm `sup{ aᵀx : ‖x‖_M ≤ 1 } = sqrt(aᵀ M⁻¹ a)`.
    pub fn dual_norm(&self, a: &Vector) -> f64 {
        a.dot(&self.apply_inverse(a)).max(0.0).sqrt()
    }
}

/// Weighted orthogonal projector `B (BᵀMB)⁻¹ BᵀM` onto `span(B)`.
pub fn weighted_projector(basis: &Matrix, metric: &WeightedMetric) -> Result<Matrix, LinalgError> {
    let n = basis.nrows();
    if metric.dim() != n {
        return Err(LinalgError::Dimension {
            expected: metric.dim(),
            found: n,
        });
    }
    if basis.ncols() == 0 {
        return Ok(Matrix::zeros(n, n));
    }
    let r = rank(basis);
    if r < basis.ncols() {
        return Err(LinalgError::Rank {
            rank: r,
            cols: basis.ncols(),
        });
    }
    let gram = metric.gram(basis);
    let chol = gram.cholesky().ok_or(LinalgError::Rank {
        rank: r,
        cols: basis.ncols(),
    })?;
    let bt_m = basis.transpose() * metric.matrix();
    Ok(basis * chol.solve(&bt_m))
}

/// Coordinates `c` of `x ≈ B c` that minimise `‖x − Bc‖_M`.
pub fn weighted_coordinates(basis: &Matrix, metric: &WeightedMetric, x: &Vector) -> Vector {
    if basis.ncols() == 0 {
        return Vector::zeros(0);
    }
    let gram = metric.gram(basis);
    let rhs = basis.transpose() * metric.apply(x);
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => pinv(&gram) * rhs,
    }
}

/// Basis of the M-orthogonal complement of `span(B)`.
pub fn weighted_complement(basis: &Matrix, metric: &WeightedMetric) -> Matrix {
    // x ⟂_M span(B)  ⇔  Bᵀ M x = 0.
    let bt_m = basis.transpose() * metric.matrix();
    null_space(&bt_m)
}

/// Largest singular value.
pub fn operator_norm(a: &Matrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone().singular_values().max()
}

pub fn max_abs(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
