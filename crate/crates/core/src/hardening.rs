//! Elasticity with hardening: the sweeping process runs on the augmented
//! state `(y, ξ)` in `V × ℝᵐ`, with `ξ` one internal variable per element.
//!
//! Both hardening laws become element rows `a_σ σ_j + a_ξ ξ_j ≤ r`, so the
//! moving set stays polyhedral and the strain-rate inclusion is an LP.

use crate::duality::{DualityError, Monotonicity, YieldCurve};
use crate::elastic::{ElasticPath, FundamentalDecomposition};
use crate::geometry::ConvexSetDesc;
use crate::linalg::{Matrix, Vector, WeightedMetric};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::qp::{kkt_residual, ChartPolytope, QpError};
use crate::strain::StrainRecord;
use crate::sweep::{Faces, SweepError, SweepTrajectory};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HardeningError {
    #[error("invalid hardening data: {0}")]
    Invalid(String),
    #[error(transparent)]
    Curve(#[from] DualityError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    /// The recovery LP must be feasible whenever the hardening data are valid.
    #[error("strain recovery failed at t = {time} (residual {residual:e})")]
    Internal { time: f64, residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum HardeningKind {
    /// `σ⁻ ≤ σ − Hξ ≤ σ⁺` elementwise.
    LinearKinematic {
        modulus: Vector,
        lower: Vector,
        upper: Vector,
    },
    /// `ξ ≥ ξ⁺_j(σ_j)` and `ξ ≥ ξ⁻_j(σ_j)` with convex piecewise-linear
    /// curves, `ξ⁺` increasing and `ξ⁻` decreasing.
    Isotropic {
        upper: Vec<YieldCurve>,
        lower: Vec<YieldCurve>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardeningSpec {
    pub kind: HardeningKind,
    /// Uniform lower bound for the kinematic modulus.
    pub eta: f64,
}

/// One constraint `a_σ σ_elem + a_ξ ξ_elem ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementRow {
    pub elem: usize,
    pub a_sigma: f64,
    pub a_xi: f64,
    pub rhs: f64,
    pub upper: bool,
}

impl HardeningSpec {
    pub fn kinematic(modulus: Vector, lower: Vector, upper: Vector) -> Self {
        let eta = modulus.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            kind: HardeningKind::LinearKinematic { modulus, lower, upper },
            eta,
        }
    }

    pub fn isotropic(upper: Vec<YieldCurve>, lower: Vec<YieldCurve>) -> Self {
        Self {
            kind: HardeningKind::Isotropic { upper, lower },
            eta: 0.0,
        }
    }

    pub fn elements(&self) -> usize {
        match &self.kind {
            HardeningKind::LinearKinematic { modulus, .. } => modulus.len(),
            HardeningKind::Isotropic { upper, .. } => upper.len(),
        }
    }

    pub fn validate(&self) -> Result<(), HardeningError> {
        match &self.kind {
            HardeningKind::LinearKinematic { modulus, lower, upper } => {
                if lower.len() != modulus.len() || upper.len() != modulus.len() {
                    return Err(HardeningError::Invalid("modulus and offsets differ in length".into()));
                }
                if !(self.eta > 0.0) || modulus.iter().any(|&h| !(h >= self.eta)) {
                    return Err(HardeningError::Invalid(format!(
                        "need 0 < η ≤ H elementwise (η = {})",
                        self.eta
                    )));
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
                    return Err(HardeningError::Invalid("offsets need σ⁻ < σ⁺".into()));
                }
            }
            HardeningKind::Isotropic { upper, lower } => {
                if upper.len() != lower.len() {
                    return Err(HardeningError::Invalid("one curve pair per element".into()));
                }
                for (u, l) in upper.iter().zip(lower) {
                    if u.monotonicity()? != Monotonicity::Increasing || l.monotonicity()? != Monotonicity::Decreasing {
                        return Err(DualityError::MalformedCurve("need ξ⁺ increasing and ξ⁻ decreasing".into()).into());
                    }
                    if !u.is_convex() || !l.is_convex() {
                        return Err(DualityError::MalformedCurve("yield curves must be convex".into()).into());
                    }
                }
            }
        }
        Ok(())
    }

    /// Element rows of `Σ̂`, independent of time.
    pub fn rows(&self) -> Vec<ElementRow> {
        let mut out = Vec::new();
        match &self.kind {
            HardeningKind::LinearKinematic { modulus, lower, upper } => {
                for j in 0..modulus.len() {
                    out.push(ElementRow {
                        elem: j,
                        a_sigma: 1.0,
                        a_xi: -modulus[j],
                        rhs: upper[j],
                        upper: true,
                    });
                    out.push(ElementRow {
                        elem: j,
                        a_sigma: -1.0,
                        a_xi: modulus[j],
                        rhs: -lower[j],
                        upper: false,
                    });
                }
            }
            HardeningKind::Isotropic { upper, lower } => {
                for (j, (u, l)) in upper.iter().zip(lower).enumerate() {
                    for (curve, is_upper) in [(u, true), (l, false)] {
                        for (a, b) in curve.pieces() {
                            out.push(ElementRow {
                                elem: j,
                                a_sigma: a,
                                a_xi: -1.0,
                                rhs: -b,
                                upper: is_upper,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// The augmented moving set `Ĉ(t) = (Σ̂ − (σ̃(t), 0)) ∩ (V × ℝᵐ)` with the
/// product metric `diag(M, W)`.
#[derive(Debug, Clone)]
pub struct HardenedProblem {
    pub spec: HardeningSpec,
    pub basis_v: Matrix,
    pub metric: WeightedMetric,
    pub elastic: ElasticPath,
    /// Weights of the `ξ` inner product: `h` for a rod, `1` for networks.
    pub xi_weight: Vector,
    rows: Vec<ElementRow>,
}

impl HardenedProblem {
    pub fn new(
        dec: &FundamentalDecomposition,
        spec: HardeningSpec,
        elastic: ElasticPath,
        xi_weight: Vector,
    ) -> Result<Self, HardeningError> {
        spec.validate()?;
        let m = dec.elements();
        if spec.elements() != m || xi_weight.len() != m {
            return Err(HardeningError::Invalid(format!("expected {m} elements")));
        }
        if xi_weight.iter().any(|w| !(*w > 0.0)) {
            return Err(HardeningError::Invalid("ξ weights must be positive".into()));
        }
        let rows = spec.rows();
        Ok(Self {
            spec,
            basis_v: dec.basis_v.clone(),
            metric: dec.metric.clone(),
            elastic,
            xi_weight,
            rows,
        })
    }

    pub fn elements(&self) -> usize {
        self.xi_weight.len()
    }

    pub fn chart_dim(&self) -> usize {
        self.basis_v.ncols()
    }

    pub fn rows(&self) -> &[ElementRow] {
        &self.rows
    }

    /// `diag(BᵀMB, W)` on chart coordinates `(c, ξ)`.
    pub fn product_metric(&self) -> Matrix {
        let q = self.chart_dim();
        let m = self.elements();
        let mut h = Matrix::zeros(q + m, q + m);
        h.view_mut((0, 0), (q, q)).copy_from(&self.metric.gram(&self.basis_v));
        for j in 0..m {
            h[(q + j, q + j)] = self.xi_weight[j];
        }
        h
    }

    pub fn chart_polytope(&self, t: f64) -> ChartPolytope {
        let s = self.elastic.at(t);
        let q = self.chart_dim();
        let m = self.elements();
        let mut a = Matrix::zeros(self.rows.len(), q + m);
        let mut b = Vector::zeros(self.rows.len());
        for (i, r) in self.rows.iter().enumerate() {
            for k in 0..q {
                a[(i, k)] = r.a_sigma * self.basis_v[(r.elem, k)];
            }
            a[(i, q + r.elem)] = r.a_xi;
            b[i] = r.rhs - r.a_sigma * s[r.elem];
        }
        ChartPolytope::new(a, b)
    }

    /// `Ĉ` for a given `σ̃`, in element coordinates `(y, ξ)`.
    pub fn moving_set_at(&self, elastic: &Vector) -> ConvexSetDesc {
        let m = self.elements();
        let q = self.chart_dim();
        let mut a = Matrix::zeros(self.rows.len(), 2 * m);
        let mut b = Vector::zeros(self.rows.len());
        for (i, r) in self.rows.iter().enumerate() {
            a[(i, r.elem)] = r.a_sigma;
            a[(i, m + r.elem)] = r.a_xi;
            b[i] = r.rhs - r.a_sigma * elastic[r.elem];
        }
        let mut basis = Matrix::zeros(2 * m, q + m);
        basis.view_mut((0, 0), (m, q)).copy_from(&self.basis_v);
        basis.view_mut((m, q), (m, m)).fill_with_identity();
        ConvexSetDesc::Intersection(vec![
            ConvexSetDesc::Polyhedron { a, b },
            ConvexSetDesc::AffineSubspace {
                basis,
                offset: Vector::zeros(2 * m),
            },
        ])
    }

    pub fn active_tol(&self) -> f64 {
        let scale = self.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        1e-9 * (1.0 + scale)
    }

    fn active_rows(&self, poly: &ChartPolytope, z: &Vector) -> Vec<usize> {
        let tol = self.active_tol();
        let az = &poly.a * z;
        (0..poly.b.len()).filter(|&i| poly.b[i] - az[i] <= tol * (1.0 + az[i].abs())).collect()
    }

    fn faces(&self, active: &[usize]) -> Vec<Faces> {
        let mut out = vec![Faces::default(); self.elements()];
        for &i in active {
            let r = &self.rows[i];
            if r.upper {
                out[r.elem].upper = true;
            } else {
                out[r.elem].lower = true;
            }
        }
        out
    }

    /// Projection of `(c, ξ)` onto `Ĉ(t)` in the product metric.
    pub fn project(&self, t: f64, z: &Vector) -> Result<(Vector, f64), HardeningError> {
        if self.chart_polytope(t).violation(z) <= 0.0 {
            return Ok((z.clone(), 0.0));
        }
        if self.chart_dim() == 1 {
            if let HardeningKind::LinearKinematic { modulus, lower, upper } = &self.spec.kind {
                return Ok((self.project_kinematic_line(t, z, modulus, lower, upper), 0.0));
            }
        }
        let poly = self.chart_polytope(t);
        let h = self.product_metric();
        match poly.project(&h, z) {
            Ok(sol) => {
                let res = kkt_residual(&h, z, &poly.a, &sol);
                Ok((sol.x, res))
            }
            Err(QpError::Infeasible) => Err(SweepError::SafeLoadViolation { time: t }.into()),
            Err(e) => Err(SweepError::from(e).into()),
        }
    }

    /// One chart coordinate: for fixed `c` every `ξ_j` clamps into its own
    /// interval, and the reduced objective in `c` is a convex piecewise
    /// quadratic whose derivative we zero exactly.
    fn project_kinematic_line(&self, t: f64, z: &Vector, hmod: &Vector, lo: &Vector, hi: &Vector) -> Vector {
        let m = self.elements();
        let s = self.elastic.at(t);
        let g = self.metric.gram(&self.basis_v)[(0, 0)];
        let c0 = z[0];
        let xi0 = z.rows(1, m);
        let b = self.basis_v.column(0);
        // ξ_j ∈ [(b_j c + s_j − σ⁺_j)/H_j, (b_j c + s_j − σ⁻_j)/H_j].
        let bounds = |c: f64, j: usize| {
            let base = b[j] * c + s[j];
            ((base - hi[j]) / hmod[j], (base - lo[j]) / hmod[j])
        };
        let deriv = |c: f64| {
            let mut d = g * (c - c0);
            for j in 0..m {
                let (l, u) = bounds(c, j);
                let beta = b[j] / hmod[j];
                d += self.xi_weight[j] * beta * ((l - xi0[j]).max(0.0) - (xi0[j] - u).max(0.0));
            }
            d
        };
        let mut breaks: Vec<f64> = Vec::with_capacity(2 * m);
        for j in 0..m {
            if b[j] != 0.0 {
                breaks.push((hmod[j] * xi0[j] - s[j] + hi[j]) / b[j]);
                breaks.push((hmod[j] * xi0[j] - s[j] + lo[j]) / b[j]);
            }
        }
        breaks.push(c0);
        breaks.sort_by(|p, q| p.partial_cmp(q).unwrap());
        breaks.dedup();
        // The derivative is affine between consecutive breakpoints.
        let affine_root = |a: f64, b: f64| {
            let (da, db) = (deriv(a), deriv(b));
            if db == da { a } else { a - da * (b - a) / (db - da) }
        };
        let k = breaks.partition_point(|&p| deriv(p) < 0.0);
        let c = if k < breaks.len() && deriv(breaks[k]) == 0.0 {
            breaks[k]
        } else if k == 0 {
            let p = breaks[0];
            if deriv(p) == 0.0 { p } else { affine_root(p - 1.0, p) }
        } else if k == breaks.len() {
            let p = breaks[k - 1];
            affine_root(p, p + 1.0)
        } else {
            affine_root(breaks[k - 1], breaks[k])
        };
        let mut out = Vector::zeros(m + 1);
        out[0] = c;
        for j in 0..m {
            let (l, u) = bounds(c, j);
            out[1 + j] = xi0[j].clamp(l, u.max(l));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct HardenedTrajectory {
    pub sweep: SweepTrajectory,
    pub xi: Vec<Vector>,
    /// Active rows of `Σ̂` after each step.
    pub active_rows: Vec<Vec<usize>>,
}

impl HardenedTrajectory {
    pub fn xi_velocity(&self, k: usize) -> Vector {
        (&self.xi[k] - &self.xi[k - 1]) / (self.sweep.times[k] - self.sweep.times[k - 1])
    }
}

/// `‖(Δy, Δξ)‖/Δt` per step in the product metric; a lower bound for the
/// Lipschitz constant of `Ĉ(t)`, which is not known a priori when `Σ̂` is
/// unbounded. Zero at `k = 0`.
pub fn speed_profile(traj: &HardenedTrajectory, problem: &HardenedProblem) -> Vec<f64> {
    let sweep = &traj.sweep;
    let w = WeightedMetric::diagonal(problem.xi_weight.as_slice()).expect("validated weights");
    let mut out = vec![0.0];
    for k in 1..sweep.len() {
        let dt = sweep.times[k] - sweep.times[k - 1];
        let dy = problem.metric.norm(&(&sweep.y[k] - &sweep.y[k - 1]));
        let dxi = w.norm(&(&traj.xi[k] - &traj.xi[k - 1]));
        out.push(dy.hypot(dxi) / dt);
    }
    out
}

/// Steps whose speed exceeds `factor` times the median of the nonzero ones.
pub fn speed_spikes(profile: &[f64], factor: f64) -> Vec<usize> {
    let mut moving: Vec<f64> = profile.iter().copied().filter(|&v| v > 0.0).collect();
    if moving.is_empty() {
        return Vec::new();
    }
    moving.sort_by(f64::total_cmp);
    let median = moving[moving.len() / 2];
    (0..profile.len()).filter(|&k| profile[k] > factor * median).collect()
}

/// Catch-up on `Ĉ(t)` from `(y₀, ξ₀)`.
pub fn hardened_sweep(
    problem: &HardenedProblem,
    grid: &[f64],
    y0: &Vector,
    xi0: &Vector,
) -> Result<HardenedTrajectory, HardeningError> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SweepError::Grid("grid must be nonempty and strictly increasing".into()).into());
    }
    let q = problem.chart_dim();
    let m = problem.elements();
    let c0 = crate::linalg::weighted_coordinates(&problem.basis_v, &problem.metric, y0);
    let mut z = Vector::zeros(q + m);
    z.rows_mut(0, q).copy_from(&c0);
    z.rows_mut(q, m).copy_from(xi0);
    let off_v = problem.metric.norm(&(y0 - &problem.basis_v * &c0));
    let poly0 = problem.chart_polytope(grid[0]);
    if off_v > 1e-10 * (1.0 + y0.amax()) || !poly0.contains(&z) {
        let (p, _) = problem.project(grid[0], &z)?;
        let d = &p - &z;
        let distance = (d.dot(&(problem.product_metric() * &d))).max(0.0).sqrt() + off_v;
        return Err(SweepError::InitialCondition { distance }.into());
    }
    let hm = problem.product_metric();
    let n = grid.len();
    let mut sweep = SweepTrajectory {
        times: Vec::with_capacity(n),
        coords: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        elastic: Vec::with_capacity(n),
        step_norms: Vec::with_capacity(n),
        active: Vec::with_capacity(n),
        certificate: Vec::with_capacity(n),
    };
    let mut xi = Vec::with_capacity(n);
    let mut active_rows = Vec::with_capacity(n);
    for (k, &t) in grid.iter().enumerate() {
        let (next, res) = if k == 0 { (z.clone(), 0.0) } else { problem.project(t, &z)? };
        let d = &next - &z;
        let step = (d.dot(&(&hm * &d))).max(0.0).sqrt();
        z = next;
        let c = z.rows(0, q).into_owned();
        let y = &problem.basis_v * &c;
        let s_el = problem.elastic.at(t);
        let act = problem.active_rows(&problem.chart_polytope(t), &z);
        sweep.active.push(problem.faces(&act));
        active_rows.push(act);
        sweep.times.push(t);
        sweep.coords.push(c);
        sweep.sigma.push(&y + &s_el);
        sweep.y.push(y);
        sweep.elastic.push(s_el);
        sweep.step_norms.push(step);
        sweep.certificate.push(res);
        xi.push(z.rows(q, m).into_owned());
    }
    Ok(HardenedTrajectory { sweep, xi, active_rows })
}

/// With at most one active row per element the `ξ` equations fix every
/// multiplier; accept the result if it is nonnegative and lands in `U`.
fn direct_omega(
    problem: &HardenedProblem,
    ydot: &Vector,
    xidot: &Vector,
    active: &[usize],
    k: &Matrix,
) -> Option<(Vector, f64)> {
    let m = problem.elements();
    let mut row_of: Vec<Option<usize>> = vec![None; m];
    for &ri in active {
        let e = problem.rows[ri].elem;
        if row_of[e].replace(ri).is_some() {
            return None;
        }
    }
    let scale = 1.0 + ydot.amax() + xidot.amax();
    let mut omega = ydot.clone();
    let mut residual = 0.0;
    for i in 0..m {
        match row_of[i] {
            None => residual += xidot[i].abs(),
            Some(ri) => {
                let r = &problem.rows[ri];
                let lambda = -xidot[i] * problem.xi_weight[i] / r.a_xi;
                if lambda < -1e-9 * scale {
                    return None;
                }
                omega[i] += k[(i, i)] * r.a_sigma * lambda;
            }
        }
    }
    residual += (problem.basis_v.transpose() * problem.metric.apply(&omega)).abs().sum();
    (residual <= 1e-9 * scale).then_some((omega, residual))
}

/// `ω = ẏ + K Σ λ_g a_σ,g e_g ∈ U` with `ξ̇ + W⁻¹ Σ λ_g a_ξ,g e_g = 0`.
fn hardened_omega(
    problem: &HardenedProblem,
    ydot: &Vector,
    xidot: &Vector,
    active: &[usize],
) -> (Vector, f64) {
    let m = problem.elements();
    let q = problem.chart_dim();
    let k = problem.metric.inverse();
    if let Some(found) = direct_omega(problem, ydot, xidot, active, &k) {
        return found;
    }
    let na = active.len();
    let neq = m + q;
    let nv = na + 2 * neq;
    let mut lp = LinearProgram::new(nv);
    for v in lp.objective.iter_mut().skip(na) {
        *v = 1.0;
    }
    let add = |coeffs: Vec<f64>, row: usize, rhs: f64, lp: &mut LinearProgram| {
        let mut c = coeffs;
        c[na + 2 * row] = 1.0;
        c[na + 2 * row + 1] = -1.0;
        lp.add(c, Relation::Eq, rhs);
    };
    for i in 0..m {
        let mut row = vec![0.0; nv];
        for (g, &ri) in active.iter().enumerate() {
            let r = &problem.rows[ri];
            if r.elem == i {
                row[g] = r.a_xi / problem.xi_weight[i];
            }
        }
        add(row, i, -xidot[i], &mut lp);
    }
    let rhs = -(problem.basis_v.transpose() * problem.metric.apply(ydot));
    for p in 0..q {
        let mut row = vec![0.0; nv];
        for (g, &ri) in active.iter().enumerate() {
            let r = &problem.rows[ri];
            row[g] = r.a_sigma * problem.basis_v[(r.elem, p)];
        }
        add(row, m + p, rhs[p], &mut lp);
    }
    let LpOutcome::Optimal { x, value } = lp.solve() else {
        unreachable!("slack variables keep the recovery LP feasible and bounded");
    };
    let mut omega = ydot.clone();
    for (g, &ri) in active.iter().enumerate() {
        let r = &problem.rows[ri];
        omega[r.elem] += k[(r.elem, r.elem)] * r.a_sigma * x[g];
    }
    (omega, value)
}

pub fn hardened_strain_recovery(
    traj: &HardenedTrajectory,
    problem: &HardenedProblem,
    eps0: &Vector,
) -> Result<StrainRecord, HardeningError> {
    let sweep = &traj.sweep;
    let stiffness: Vec<f64> = problem.metric.inverse().diagonal().iter().copied().collect();
    let kinv = |v: &Vector| crate::elastic::elastic_strain(&stiffness, v);
    let m = problem.elements();
    let n = sweep.len();
    let mut rec = StrainRecord {
        times: sweep.times.clone(),
        omega: Vec::with_capacity(n),
        eps: Vec::with_capacity(n),
        eps_el: Vec::with_capacity(n),
        eps_p: Vec::with_capacity(n),
        max_omega: 0.0,
    };
    let mut acc = Vector::zeros(m);
    for k in 0..n {
        let omega = if k == 0 {
            Vector::zeros(m)
        } else {
            let dt = sweep.times[k] - sweep.times[k - 1];
            let ydot = sweep.velocity(k);
            let xidot = traj.xi_velocity(k);
            let (w, residual) = hardened_omega(problem, &ydot, &xidot, &traj.active_rows[k]);
            let scale = 1.0 + ydot.amax() + xidot.amax();
            if residual > 1e-7 * scale {
                return Err(HardeningError::Internal {
                    time: sweep.times[k],
                    residual,
                });
            }
            acc += &w * dt;
            w
        };
        rec.max_omega = rec.max_omega.max(omega.amax());
        let eps = eps0 + kinv(&(&sweep.elastic[k] - &sweep.elastic[0] + &acc));
        let eps_el = kinv(&sweep.sigma[k]);
        rec.eps_p.push(&eps - &eps_el);
        rec.eps.push(eps);
        rec.eps_el.push(eps_el);
        rec.omega.push(omega);
    }
    Ok(rec)
}

/// Scalar return mapping for one spring under prescribed total strain
/// increments; the reference for the tangent modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnMap {
    pub k: f64,
    pub modulus: f64,
    pub lower: f64,
    pub upper: f64,
    pub weight: f64,
}

impl ReturnMap {
    /// `(σ, ξ, Δμ)` after a strain increment `de`, with `Δμ` signed.
    pub fn step(&self, sigma: f64, xi: f64, de: f64) -> (f64, f64, f64) {
        let trial = sigma + self.k * de;
        let shifted = trial - self.modulus * xi;
        let excess = if shifted > self.upper {
            shifted - self.upper
        } else if shifted < self.lower {
            shifted - self.lower
        } else {
            return (trial, xi, 0.0);
        };
        let dmu = excess / (self.k + self.modulus * self.modulus / self.weight);
        (trial - self.k * dmu, xi + self.modulus / self.weight * dmu, dmu)
    }

    /// Post-yield `dσ/dε`.
    pub fn tangent(&self) -> f64 {
        let hw = self.modulus * self.modulus / self.weight;
        self.k * hw / (self.k + hw)
    }
}
