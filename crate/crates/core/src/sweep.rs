//! Moreau's catch-up scheme for `−ẏ ∈ N_{C(t)}(y)` with the moving set
//! `C(t) = (Σ − σ̃(t)) ∩ V`, worked in coordinates `y = B c` on `V`.

use crate::elastic::{ElasticPath, FundamentalDecomposition};
use crate::geometry::ConvexSetDesc;
use crate::linalg::{weighted_coordinates, Matrix, Vector, WeightedMetric};
use crate::lp::{LinearProgram, LpOutcome, Relation, VarKind};
use crate::qp::{kkt_residual, ChartPolytope, QpError};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("moving set is empty at t = {time}")]
    SafeLoadViolation { time: f64 },
    #[error("initial state is not in C(t0) (distance {distance:e})")]
    InitialCondition { distance: f64 },
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// `Σ` as a box, the subspace `V` and the elastic path `σ̃`.
#[derive(Debug, Clone)]
pub struct MovingSetSpec {
    pub lower: Vector,
    pub upper: Vector,
    pub basis_v: Matrix,
    pub metric: WeightedMetric,
    pub elastic: ElasticPath,
}

/// Which bounds are active for one element.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faces {
    pub lower: bool,
    pub upper: bool,
}

#[derive(Debug, Clone)]
pub struct SweepTrajectory {
    pub times: Vec<f64>,
    /// Chart coordinates of `y` on `V`.
    pub coords: Vec<Vector>,
    pub y: Vec<Vector>,
    pub sigma: Vec<Vector>,
    pub elastic: Vec<Vector>,
    /// `‖y_{k} − y_{k−1}‖_M`, zero for `k = 0`.
    pub step_norms: Vec<f64>,
    pub active: Vec<Vec<Faces>>,
    /// Stationarity residual of the discrete normal-cone inclusion.
    pub certificate: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SafeLoad {
    /// Strict feasibility with inscribed-ball radius `margin` (M-norm);
    /// `discrete_only` marks margins that vanish in the continuum limit.
    StrictOk { margin: f64, discrete_only: bool },
    DegenerateOk,
    Violated,
}

impl MovingSetSpec {
    pub fn new(
        dec: &FundamentalDecomposition,
        lower: Vector,
        upper: Vector,
        elastic: ElasticPath,
    ) -> Self {
        Self {
            lower,
            upper,
            basis_v: dec.basis_v.clone(),
            metric: dec.metric.clone(),
            elastic,
        }
    }

    pub fn elements(&self) -> usize {
        self.lower.len()
    }

    pub fn chart_dim(&self) -> usize {
        self.basis_v.ncols()
    }

    /// Gram matrix `BᵀMB` of the chart.
    pub fn chart_metric(&self) -> Matrix {
        self.metric.gram(&self.basis_v)
    }

    /// `lo − σ̃ ≤ B c ≤ hi − σ̃` as `A c ≤ b`.
    pub fn chart_polytope(&self, t: f64) -> ChartPolytope {
        let s = self.elastic.at(t);
        let m = self.elements();
        let q = self.chart_dim();
        let mut rows = Vec::with_capacity(2 * m);
        let mut rhs = Vec::with_capacity(2 * m);
        for j in 0..m {
            let bj = self.basis_v.row(j);
            if self.upper[j].is_finite() {
                rows.push(bj.clone_owned());
                rhs.push(self.upper[j] - s[j]);
            }
            if self.lower[j].is_finite() {
                rows.push(-bj.clone_owned());
                rhs.push(s[j] - self.lower[j]);
            }
        }
        let a = if rows.is_empty() {
            Matrix::zeros(0, q)
        } else {
            Matrix::from_rows(&rows)
        };
        ChartPolytope::new(a, Vector::from_vec(rhs))
    }

    /// `C(t)` as a set description in the element space.
    pub fn moving_set(&self, t: f64) -> ConvexSetDesc {
        let s = self.elastic.at(t);
        ConvexSetDesc::Intersection(vec![
            ConvexSetDesc::Box {
                lower: &self.lower - &s,
                upper: &self.upper - &s,
            },
            ConvexSetDesc::AffineSubspace {
                basis: self.basis_v.clone(),
                offset: Vector::zeros(self.elements()),
            },
        ])
    }

    pub fn to_chart(&self, y: &Vector) -> Vector {
        weighted_coordinates(&self.basis_v, &self.metric, y)
    }

    pub fn from_chart(&self, c: &Vector) -> Vector {
        &self.basis_v * c
    }

    /// Active-face tolerance: `1e-8 · diam Σ`.
    pub fn active_tol(&self) -> f64 {
        let d = (&self.upper - &self.lower).norm();
        1e-8 * if d.is_finite() && d > 0.0 { d } else { 1.0 }
    }

    pub fn active_faces(&self, sigma: &Vector) -> Vec<Faces> {
        let tol = self.active_tol();
        (0..self.elements())
            .map(|j| Faces {
                lower: sigma[j] - self.lower[j] <= tol,
                upper: self.upper[j] - sigma[j] <= tol,
            })
            .collect()
    }

    /// One catch-up step from chart point `c` onto `C(t)`.
    pub fn project_chart(&self, t: f64, c: &Vector) -> Result<(Vector, f64), SweepError> {
        let poly = self.chart_polytope(t);
        if self.chart_dim() == 1 {
            return self.project_interval(&poly, c, t).map(|x| (x, 0.0));
        }
        let h = self.chart_metric();
        match poly.project(&h, c) {
            Ok(sol) => {
                let res = kkt_residual(&h, c, &poly.a, &sol);
                Ok((sol.x, res))
            }
            Err(QpError::Infeasible) => Err(SweepError::SafeLoadViolation { time: t }),
            Err(e) => Err(e.into()),
        }
    }

    /// One-dimensional charts reduce to clamping into an interval.
    fn project_interval(&self, poly: &ChartPolytope, c: &Vector, t: f64) -> Result<Vector, SweepError> {
        let (lo, hi) = interval(poly);
        let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()).min(1e300));
        if lo > hi + tol {
            return Err(SweepError::SafeLoadViolation { time: t });
        }
        let x = if lo > hi { 0.5 * (lo + hi) } else { c[0].clamp(lo, hi) };
        Ok(Vector::from_element(1, x))
    }

    pub fn contains_chart(&self, t: f64, c: &Vector) -> bool {
        self.chart_polytope(t).contains(c)
    }
}

/// Feasible interval of a one-dimensional chart polytope.
fn interval(poly: &ChartPolytope) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..poly.b.len() {
        let a = poly.a[(i, 0)];
        if a > 0.0 {
            hi = hi.min(poly.b[i] / a);
        } else if a < 0.0 {
            lo = lo.max(poly.b[i] / a);
        } else if poly.b[i] < 0.0 {
            return (f64::INFINITY, f64::NEG_INFINITY);
        }
    }
    (lo, hi)
}

/// Grid `t0, t0+dt, …, t1` (last step possibly shorter).
pub fn uniform_grid(t0: f64, t1: f64, dt: f64) -> Result<Vec<f64>, SweepError> {
    if !(dt > 0.0) || !(t1 >= t0) {
        return Err(SweepError::Grid(format!("need dt > 0 and t1 ≥ t0 (dt = {dt})")));
    }
    let steps = ((t1 - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut out: Vec<f64> = (0..steps).map(|k| t0 + k as f64 * dt).collect();
    out.push(t1);
    Ok(out)
}

pub fn catch_up(spec: &MovingSetSpec, y0: &Vector, grid: &[f64]) -> Result<SweepTrajectory, SweepError> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SweepError::Grid("grid must be nonempty and strictly increasing".into()));
    }
    let c0 = spec.to_chart(y0);
    let off_v = spec.metric.norm(&(y0 - spec.from_chart(&c0)));
    let poly0 = spec.chart_polytope(grid[0]);
    if spec.chart_dim() == 1 {
        let (lo, hi) = interval(&poly0);
        if lo > hi + 1e-12 * (1.0 + lo.abs()) {
            return Err(SweepError::SafeLoadViolation { time: grid[0] });
        }
    } else if poly0.is_empty() {
        return Err(SweepError::SafeLoadViolation { time: grid[0] });
    }
    let scale = 1.0 + y0.amax();
    if off_v > 1e-10 * scale || !poly0.contains(&c0) {
        let (p, _) = spec.project_chart(grid[0], &c0)?;
        let distance = spec.metric.norm(&(y0 - spec.from_chart(&p)));
        return Err(SweepError::InitialCondition { distance });
    }
    let mut traj = SweepTrajectory {
        times: Vec::with_capacity(grid.len()),
        coords: Vec::with_capacity(grid.len()),
        y: Vec::with_capacity(grid.len()),
        sigma: Vec::with_capacity(grid.len()),
        elastic: Vec::with_capacity(grid.len()),
        step_norms: Vec::with_capacity(grid.len()),
        active: Vec::with_capacity(grid.len()),
        certificate: Vec::with_capacity(grid.len()),
    };
    let h = spec.chart_metric();
    let mut c = c0;
    for (k, &t) in grid.iter().enumerate() {
        let (next, res) = if k == 0 { (c.clone(), 0.0) } else { spec.project_chart(t, &c)? };
        let d = &next - &c;
        let step = (d.dot(&(&h * &d))).max(0.0).sqrt();
        c = next;
        let y = spec.from_chart(&c);
        let s_el = spec.elastic.at(t);
        let sigma = &y + &s_el;
        traj.active.push(spec.active_faces(&sigma));
        traj.times.push(t);
        traj.coords.push(c.clone());
        traj.y.push(y);
        traj.sigma.push(sigma);
        traj.elastic.push(s_el);
        traj.step_norms.push(step);
        traj.certificate.push(res);
    }
    Ok(traj)
}

impl SweepTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the first step that moves `y`.
    pub fn first_motion(&self, tol: f64) -> Option<usize> {
        self.step_norms.iter().position(|&s| s > tol)
    }

    /// Backward-difference `ẏ` at step `k ≥ 1`.
    pub fn velocity(&self, k: usize) -> Vector {
        (&self.y[k] - &self.y[k - 1]) / (self.times[k] - self.times[k - 1])
    }
}

/// Onset of plastic flow: the first time at which the state held so far
/// leaves `C(t)`, localised by bisection to `tol`.
pub fn yield_onset(spec: &MovingSetSpec, traj: &SweepTrajectory, tol: f64) -> Option<f64> {
    let k = traj.first_motion(1e-13 * (1.0 + traj.y[0].amax()))?;
    if k == 0 {
        return Some(traj.times[0]);
    }
    let held = &traj.coords[k - 1];
    let (mut a, mut b) = (traj.times[k - 1], traj.times[k]);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if spec.contains_chart(m, held) {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Bitmask of active faces as hexadecimal: bit `2j` lower, `2j+1` upper.
pub fn active_mask_hex(faces: &[Faces]) -> String {
    let bits = 2 * faces.len();
    let nibbles = bits.div_ceil(4).max(1);
    let mut out = String::with_capacity(nibbles);
    for n in (0..nibbles).rev() {
        let mut v = 0u8;
        for b in 0..4 {
            let bit = 4 * n + b;
            let j = bit / 2;
            if j < faces.len() {
                let set = if bit % 2 == 0 { faces[j].lower } else { faces[j].upper };
                if set {
                    v |= 1 << b;
                }
            }
        }
        out.push(char::from_digit(v as u32, 16).unwrap());
    }
    let trimmed = out.trim_start_matches('0');
    if trimmed.is_empty() { "0".into() } else { trimmed.into() }
}

/// Inscribed M-ball test for `(int Σ − σ̃(t)) ∩ V`.
pub fn safe_load_check(spec: &MovingSetSpec, t: f64, discrete_only: bool) -> SafeLoad {
    let s = spec.elastic.at(t);
    let q = spec.chart_dim();
    let m = spec.elements();
    let minv = spec.metric.inverse();
    // Variables (c, ρ): maximise ρ with ρ·√(M⁻¹)_jj of room to each face.
    let mut lp = LinearProgram::new(q + 1);
    lp.kinds = vec![VarKind::Free; q + 1];
    lp.objective[q] = -1.0;
    let mut any = false;
    for j in 0..m {
        let w = minv[(j, j)].sqrt();
        let bj: Vec<f64> = spec.basis_v.row(j).iter().copied().collect();
        if spec.upper[j].is_finite() {
            let mut row = bj.clone();
            row.push(w);
            lp.add(row, Relation::Le, spec.upper[j] - s[j]);
            any = true;
        }
        if spec.lower[j].is_finite() {
            let mut row: Vec<f64> = bj.iter().map(|v| -v).collect();
            row.push(w);
            lp.add(row, Relation::Le, s[j] - spec.lower[j]);
            any = true;
        }
    }
    if !any {
        return SafeLoad::StrictOk {
            margin: f64::INFINITY,
            discrete_only,
        };
    }
    // Cap ρ so the LP stays bounded for half-infinite boxes.
    let mut cap = vec![0.0; q + 1];
    cap[q] = 1.0;
    lp.add(cap, Relation::Le, 1e12);
    let tol = 1e-10 * (1.0 + spec.upper.amax().max(spec.lower.amax()) + s.amax());
    match lp.solve() {
        LpOutcome::Optimal { value, .. } => {
            let rho = -value;
            if rho > tol {
                SafeLoad::StrictOk {
                    margin: rho,
                    discrete_only,
                }
            } else if rho >= -tol {
                SafeLoad::DegenerateOk
            } else {
                SafeLoad::Violated
            }
        }
        LpOutcome::Unbounded => SafeLoad::StrictOk {
            margin: f64::INFINITY,
            discrete_only,
        },
        LpOutcome::Infeasible { .. } => SafeLoad::Violated,
    }
}

/// Hausdorff distance between two chart polytopes in the metric `h`.
pub fn chart_hausdorff(p1: &ChartPolytope, p2: &ChartPolytope, h: &Matrix) -> Result<f64, SweepError> {
    if p1.dim() == 1 {
        let (a1, b1) = interval(p1);
        let (a2, b2) = interval(p2);
        if a1 > b1 || a2 > b2 {
            return Err(SweepError::SafeLoadViolation { time: f64::NAN });
        }
        return Ok((a1 - a2).abs().max((b1 - b2).abs()) * h[(0, 0)].sqrt());
    }
    let one_sided = |from: &ChartPolytope, to: &ChartPolytope| -> Result<f64, SweepError> {
        let mut worst = 0.0_f64;
        for v in from.vertices() {
            let p = to.project(h, &v).map_err(|e| match e {
                QpError::Infeasible => SweepError::SafeLoadViolation { time: f64::NAN },
                other => other.into(),
            })?;
            let d = &v - &p.x;
            worst = worst.max(d.dot(&(h * &d)).max(0.0).sqrt());
        }
        Ok(worst)
    };
    Ok(one_sided(p1, p2)?.max(one_sided(p2, p1)?))
}

/// `max_i d_H(C(t_i), C(t_{i+1})) / Δt` over the grid.
pub fn lipschitz_estimate(spec: &MovingSetSpec, grid: &[f64]) -> Result<f64, SweepError> {
    let h = spec.chart_metric();
    let mut best = 0.0_f64;
    let mut prev = spec.chart_polytope(grid[0]);
    for w in grid.windows(2) {
        let next = spec.chart_polytope(w[1]);
        let d = chart_hausdorff(&prev, &next, &h).map_err(|e| match e {
            SweepError::SafeLoadViolation { .. } => SweepError::SafeLoadViolation { time: w[1] },
            other => other,
        })?;
        best = best.max(d / (w[1] - w[0]));
        prev = next;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elastic::{assemble_network, LoadProgram, NetworkModel};
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn two_spring_spec(l_end: f64, f2: f64) -> MovingSetSpec {
        let dec = assemble_network(&NetworkModel::two_springs(1.0, 1.0).unwrap()).unwrap();
        let loads = LoadProgram::new(
            vec![0.0, 4.0],
            vec![v(&[0., 0.]), v(&[0., l_end])],
            vec![v(&[0., f2, 0.]), v(&[0., f2, 0.])],
        )
        .unwrap();
        let path = ElasticPath::new(&dec, &loads).unwrap();
        MovingSetSpec::new(&dec, v(&[-1., -1.]), v(&[1., 1.]), path)
    }

    #[test]
    fn stationary_when_set_is_frozen() {
        let spec = two_spring_spec(0.0, 0.0);
        let grid = uniform_grid(0.0, 4.0, 0.1).unwrap();
        let traj = catch_up(&spec, &v(&[0.3, 0.3]), &grid).unwrap();
        assert!(traj.y.iter().all(|y| (y - v(&[0.3, 0.3])).amax() < 1e-14));
        assert_eq!(traj.first_motion(1e-14), None);
    }

    #[test]
    fn two_springs_yield_at_l_equal_two() {
        // l(t) = t: σ̃ = (t/2, t/2) so both springs reach 1 at t = 2.
        let spec = two_spring_spec(4.0, 0.0);
        let grid = uniform_grid(0.0, 4.0, 0.01).unwrap();
        let traj = catch_up(&spec, &v(&[0., 0.]), &grid).unwrap();
        let onset = yield_onset(&spec, &traj, 1e-9).unwrap();
        assert_relative_eq!(onset, 2.0, epsilon = 1e-8);
        let last = traj.sigma.last().unwrap();
        assert_relative_eq!(last, &v(&[1., 1.]), epsilon = 1e-12);
        assert!(traj.active.last().unwrap().iter().all(|f| f.upper && !f.lower));
    }

    #[test]
    fn polygon_steps_match_grid_scan() {
        let dec = assemble_network(&NetworkModel::three_springs(1.0, 1.0, 1.0).unwrap()).unwrap();
        let loads = LoadProgram::new(
            vec![0.0, 2.0],
            vec![v(&[0., 0.]), v(&[3., 1.])],
            vec![Vector::zeros(4), Vector::zeros(4)],
        )
        .unwrap();
        let path = ElasticPath::new(&dec, &loads).unwrap();
        let spec = MovingSetSpec::new(&dec, v(&[-1., -1., -1.]), v(&[1., 1., 1.]), path);
        let grid = uniform_grid(0.0, 2.0, 0.5).unwrap();
        let traj = catch_up(&spec, &Vector::zeros(3), &grid).unwrap();
        let h = spec.chart_metric();
        for k in 1..traj.len() {
            let poly = spec.chart_polytope(traj.times[k]);
            let prev = &traj.coords[k - 1];
            let got = &traj.coords[k];
            let dist = |x: &Vector| (x - prev).dot(&(&h * (x - prev)));
            // Oracle: brute-force scan of the chart square around the answer.
            let mut best = f64::INFINITY;
            let n = 400;
            for i in 0..=n {
                for j in 0..=n {
                    let x = v(&[got[0] - 0.5 + i as f64 / n as f64, got[1] - 0.5 + j as f64 / n as f64]);
                    if poly.contains(&x) {
                        best = best.min(dist(&x));
                    }
                }
            }
            assert!(dist(got) <= best + 1e-12);
            assert!(traj.certificate[k] < 1e-10);
            let sigma = &traj.sigma[k];
            assert!(sigma.iter().all(|s| s.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn safe_load_zero_loads_symmetric_yields() {
        let spec = two_spring_spec(0.0, 0.0);
        match safe_load_check(&spec, 0.0, false) {
            SafeLoad::StrictOk { margin, .. } => assert_relative_eq!(margin, 1.0, epsilon = 1e-10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn safe_load_interval_oracle() {
        // F₂ shifts the springs by ±F₂/2; the segment closes at |F₂| = 2.
        for (f2, expect) in [(0.5, true), (1.9, true), (2.0, false), (2.5, false)] {
            let spec = two_spring_spec(0.0, f2);
            let lo = (-1.0 - f2 / 2.0_f64).max(-1.0 + f2 / 2.0);
            let hi = (1.0 - f2 / 2.0_f64).min(1.0 + f2 / 2.0);
            assert_eq!(lo < hi, expect);
            let got = safe_load_check(&spec, 0.0, false);
            match (expect, got) {
                (true, SafeLoad::StrictOk { .. }) => {}
                (false, SafeLoad::DegenerateOk) if f2 == 2.0 => {}
                (false, SafeLoad::Violated) if f2 > 2.0 => {}
                other => panic!("F₂ = {f2}: {other:?}"),
            }
        }
    }

    #[test]
    fn empty_moving_set_is_reported() {
        let spec = two_spring_spec(0.0, 3.0);
        let grid = uniform_grid(0.0, 1.0, 0.5).unwrap();
        assert!(matches!(
            catch_up(&spec, &Vector::zeros(2), &grid),
            Err(SweepError::SafeLoadViolation { .. })
        ));
    }

    #[test]
    fn lipschitz_of_translating_segment() {
        // Pure translation along V at speed 1/2 per unit t in σ̃ coordinates.
        let spec = two_spring_spec(4.0, 0.0);
        let grid = uniform_grid(0.0, 4.0, 0.25).unwrap();
        let l = lipschitz_estimate(&spec, &grid).unwrap();
        let speed = spec.metric.norm(&v(&[0.5, 0.5]));
        assert_relative_eq!(l, speed, epsilon = 1e-8);
        let frozen = two_spring_spec(0.0, 0.5);
        assert_relative_eq!(lipschitz_estimate(&frozen, &grid).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hex_mask_layout() {
        let f = |l, u| Faces { lower: l, upper: u };
        assert_eq!(active_mask_hex(&[f(false, false)]), "0");
        assert_eq!(active_mask_hex(&[f(true, false)]), "1");
        assert_eq!(active_mask_hex(&[f(false, true)]), "2");
        assert_eq!(active_mask_hex(&[f(false, false), f(false, false), f(true, false)]), "10");
    }
}
