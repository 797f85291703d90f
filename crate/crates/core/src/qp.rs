//! Metric projection onto polytopes given by inequalities `A x ≤ b`.
//!
//! Uses the dual active-set method of Goldfarb and Idnani: it starts from the
//! unconstrained minimiser, needs no feasible starting point and detects
//! infeasibility. The factorisations are rebuilt from scratch every
//! iteration, which is cheap because at most `dim` constraints are active.

use crate::linalg::{pinv, Matrix, Vector};
use crate::lp::{LinearProgram, LpOutcome, Relation, VarKind};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("constraint set is empty")]
    Infeasible,
    #[error("active-set iteration limit reached")]
    IterationLimit,
    #[error("metric block is not positive definite")]
    Metric,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vector,
    /// Indices of active constraint rows.
    pub active: Vec<usize>,
    /// Multipliers `u ≥ 0` with `H (x0 − x) = Σ u_j a_j`.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

/// Polytope `{ x : A x ≤ b }` in chart coordinates.
#[derive(Debug, Clone)]
pub struct ChartPolytope {
    pub a: Matrix,
    pub b: Vector,
}

impl ChartPolytope {
    pub fn new(a: Matrix, b: Vector) -> Self {
        debug_assert_eq!(a.nrows(), b.len());
        Self { a, b }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn row_tol(&self, i: usize, x: &Vector) -> f64 {
        let ai = self.a.row(i);
        let scale = self.b[i].abs() + ai.iter().zip(x.iter()).map(|(p, q)| (p * q).abs()).sum::<f64>();
        1e-11 * (1.0 + scale)
    }

    /// Largest constraint violation at `x` (0 if inside).
    pub fn violation(&self, x: &Vector) -> f64 {
        let ax = &self.a * x;
        (0..self.b.len()).fold(0.0_f64, |m, i| m.max(ax[i] - self.b[i]))
    }

    pub fn contains(&self, x: &Vector) -> bool {
        let ax = &self.a * x;
        (0..self.b.len()).all(|i| ax[i] - self.b[i] <= self.row_tol(i, x))
    }

    /// Minimise `½ (x − x0)ᵀ H (x − x0)` over the polytope.
    pub fn project(&self, h: &Matrix, x0: &Vector) -> Result<QpSolution, QpError> {
        goldfarb_idnani(h, x0, &self.a, &self.b)
    }

    pub fn is_empty(&self) -> bool {
        let n = self.dim();
        matches!(
            self.project(&Matrix::identity(n, n), &Vector::zeros(n)),
            Err(QpError::Infeasible)
        )
    }

    /// True when every coordinate is bounded above and below on the set.
    pub fn is_bounded(&self) -> bool {
        let n = self.dim();
        for j in 0..n {
            for sign in [1.0, -1.0] {
                let mut lp = LinearProgram::new(n);
                lp.kinds = vec![VarKind::Free; n];
                lp.objective[j] = -sign;
                for i in 0..self.a.nrows() {
                    lp.add(self.a.row(i).iter().copied().collect(), Relation::Le, self.b[i]);
                }
                if lp.solve() == LpOutcome::Unbounded {
                    return false;
                }
            }
        }
        true
    }

    /// Vertex enumeration by solving every `dim`-subset of constraints.
    /// Intended for `dim ≤ 3`.
    pub fn vertices(&self) -> Vec<Vector> {
        let n = self.dim();
        let m = self.a.nrows();
        let mut out: Vec<Vector> = Vec::new();
        if n == 0 {
            if self.b.iter().all(|&v| v >= -1e-12) {
                out.push(Vector::zeros(0));
            }
            return out;
        }
        let mut idx: Vec<usize> = (0..n).collect();
        if m < n {
            return out;
        }
        loop {
            let sub = Matrix::from_fn(n, n, |r, c| self.a[(idx[r], c)]);
            let rhs = Vector::from_fn(n, |r, _| self.b[idx[r]]);
            if let Some(lu) = Some(sub.clone().lu()) {
                let det = lu.determinant();
                let scale: f64 = sub.row_iter().map(|r| r.norm()).product();
                if det.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                    if let Some(x) = lu.solve(&rhs) {
                        if self.contains(&x) {
                            let xs = 1.0 + x.amax();
                            if !out.iter().any(|v| (v - &x).amax() <= 1e-9 * xs) {
                                out.push(x);
                            }
                        }
                    }
                }
            }
            // Next combination.
            let mut k = n;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if idx[k] < m - n + k {
                    idx[k] += 1;
                    for j in k + 1..n {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}

/// Goldfarb–Idnani dual active-set method for
/// `min ½ (x − x0)ᵀ H (x − x0)  s.t.  A x ≤ b`.
pub fn goldfarb_idnani(
    h: &Matrix,
    x0: &Vector,
    a: &Matrix,
    b: &Vector,
) -> Result<QpSolution, QpError> {
    let n = x0.len();
    let m = a.nrows();
    let hinv = h.clone().cholesky().ok_or(QpError::Metric)?.inverse();
    let mut x = x0.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let row_norm: Vec<f64> = (0..m).map(|i| a.row(i).norm().max(f64::MIN_POSITIVE)).collect();
    let max_iter = 20 * (m + n + 5);
    let mut iterations = 0;

    // In the "n_iᵀ x ≥ c_i" orientation used by the method, n_i = −a_i.
    let normal = |i: usize| -> Vector { -a.row(i).transpose() };

    loop {
        // Step 1: pick the most violated constraint (scaled).
        let ax = a * &x;
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let slack = b[i] - ax[i];
            let tol = 1e-11 * (1.0 + b[i].abs() + row_norm[i] * x.amax());
            if slack < -tol {
                let s = slack / row_norm[i];
                if pick.is_none_or(|(_, best)| s < best) {
                    pick = Some((i, s));
                }
            }
        }
        let Some((p, _)) = pick else {
            return Ok(QpSolution {
                x,
                active,
                multipliers: u,
                iterations,
            });
        };
        let np = normal(p);
        let mut up = 0.0;
        // Step 2: move until p becomes active.
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit);
            }
            let hn = &hinv * &np;
            let (z, r) = if active.is_empty() {
                (hn.clone(), Vector::zeros(0))
            } else {
                let na = Matrix::from_columns(&active.iter().map(|&j| normal(j)).collect::<Vec<_>>());
                let hna = &hinv * &na;
                let s = na.transpose() * &hna;
                let rhs = na.transpose() * &hn;
                let r = match s.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => pinv(&s) * rhs,
                };
                (&hn - &hna * &r, r)
            };
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (j, &rj) in r.iter().enumerate() {
                if rj > 1e-14 {
                    let ratio = u[j] / rj;
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(j);
                    }
                }
            }
            let zn = z.dot(&np);
            let ref_scale = np.dot(&hn).max(f64::MIN_POSITIVE);
            let slack_p = np.dot(&x) + b[p];
            let t2 = if zn > 1e-13 * ref_scale {
                (-slack_p / zn).max(0.0)
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }
            for (uj, rj) in u.iter_mut().zip(r.iter()) {
                *uj -= t * rj;
            }
            up += t;
            if t2.is_finite() {
                x += t * &z;
            }
            if t2 <= t1 {
                active.push(p);
                u.push(up);
                break;
            }
            let k = drop.expect("partial step has a blocking multiplier");
            active.remove(k);
            u.remove(k);
            if t2.is_finite() {
                // Partial primal step: continue with the same p from the new x.
                let still = b[p] + np.dot(&x);
                if still >= -1e-11 * (1.0 + b[p].abs()) {
                    active.push(p);
                    u.push(up);
                    break;
                }
            }
        }
        for uj in u.iter_mut() {
            if *uj < 0.0 {
                *uj = 0.0;
            }
        }
    }
}

/// Stationarity residual `‖H (x0 − x) − Σ u_j a_j‖∞` of a projection.
pub fn kkt_residual(h: &Matrix, x0: &Vector, a: &Matrix, sol: &QpSolution) -> f64 {
    let mut r = h * (x0 - &sol.x);
    for (&j, &uj) in sol.active.iter().zip(&sol.multipliers) {
        r -= uj * a.row(j).transpose();
    }
    r.amax()
}
