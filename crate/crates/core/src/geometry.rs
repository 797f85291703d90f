//! Convex sets with projection, support function, normal cone and Hausdorff
//! distance, all taken with respect to a weighted inner product.

use crate::linalg::{null_space, pinv, LinalgError, Matrix, Vector, WeightedMetric};
use crate::lp::{LinearProgram, LpOutcome, Relation, VarKind};
use crate::qp::{ChartPolytope, QpError};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("set is empty")]
    EmptySet,
    #[error("point is not in the set (distance {distance:e})")]
    PointNotInSet { distance: f64 },
    #[error("set is unbounded")]
    Unbounded,
    #[error("unsupported set combination: {0}")]
    Unsupported(String),
    #[error("invalid set description: {0}")]
    Invalid(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Tagged description of a closed convex set in `ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSetDesc {
    Box { lower: Vector, upper: Vector },
    /// Euclidean ball.
    Ball { center: Vector, radius: f64 },
    /// `offset + span(basis)`.
    AffineSubspace { basis: Matrix, offset: Vector },
    /// `{ x : A x ≤ b }`.
    Polyhedron { a: Matrix, b: Vector },
    Translate { inner: Box<ConvexSetDesc>, shift: Vector },
    Intersection(Vec<ConvexSetDesc>),
    Product(Vec<ConvexSetDesc>),
}

/// `{ x : A_in x ≤ b_in, A_eq x = b_eq }`.
#[derive(Debug, Clone)]
pub struct PolyhedralForm {
    pub a_in: Matrix,
    pub b_in: Vector,
    pub a_eq: Matrix,
    pub b_eq: Vector,
}

/// Affine chart `x = origin + basis · w` of a polyhedron's equality part,
/// with the inequalities rewritten in `w`.
#[derive(Debug, Clone)]
pub struct Chart {
    pub origin: Vector,
    pub basis: Matrix,
    pub polytope: ChartPolytope,
}

/// Generators and lineality of a (weighted) normal cone.
#[derive(Debug, Clone)]
pub struct NormalConeDesc {
    pub generators: Vec<Vector>,
    /// Columns span the linear part.
    pub lineality: Matrix,
    pub base: Vector,
}

const MAX_DEPTH: usize = 3;

impl ConvexSetDesc {
    pub fn boxed(lower: Vector, upper: Vector) -> Result<Self, GeometryError> {
        let s = ConvexSetDesc::Box { lower, upper };
        s.validate()?;
        Ok(s)
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self, GeometryError> {
        let s = ConvexSetDesc::Ball { center, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn subspace(basis: Matrix) -> Self {
        let n = basis.nrows();
        ConvexSetDesc::AffineSubspace {
            basis,
            offset: Vector::zeros(n),
        }
    }

    pub fn translate(self, shift: Vector) -> Self {
        ConvexSetDesc::Translate {
            inner: Box::new(self),
            shift,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSetDesc::Box { lower, .. } => lower.len(),
            ConvexSetDesc::Ball { center, .. } => center.len(),
            ConvexSetDesc::AffineSubspace { basis, .. } => basis.nrows(),
            ConvexSetDesc::Polyhedron { a, .. } => a.ncols(),
            ConvexSetDesc::Translate { shift, .. } => shift.len(),
            ConvexSetDesc::Intersection(list) => list.first().map_or(0, |s| s.dim()),
            ConvexSetDesc::Product(list) => list.iter().map(|s| s.dim()).sum(),
        }
    }

    fn depth(&self) -> usize {
        match self {
            ConvexSetDesc::Translate { inner, .. } => 1 + inner.depth(),
            ConvexSetDesc::Intersection(l) | ConvexSetDesc::Product(l) => {
                1 + l.iter().map(|s| s.depth()).max().unwrap_or(0)
            }
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.depth() > MAX_DEPTH {
            return Err(GeometryError::Invalid(format!("nesting depth exceeds {MAX_DEPTH}")));
        }
        self.validate_inner()
    }

    fn validate_inner(&self) -> Result<(), GeometryError> {
        match self {
            ConvexSetDesc::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(GeometryError::Dimension {
                        expected: lower.len(),
                        found: upper.len(),
                    });
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
                    return Err(GeometryError::Invalid("box lower bound exceeds upper bound".into()));
                }
            }
            ConvexSetDesc::Ball { radius, center } => {
                if !(*radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
                    return Err(GeometryError::Invalid("ball radius must be positive".into()));
                }
            }
            ConvexSetDesc::AffineSubspace { basis, offset } => {
                if basis.nrows() != offset.len() {
                    return Err(GeometryError::Dimension {
                        expected: basis.nrows(),
                        found: offset.len(),
                    });
                }
            }
            ConvexSetDesc::Polyhedron { a, b } => {
                if a.nrows() != b.len() {
                    return Err(GeometryError::Dimension {
                        expected: a.nrows(),
                        found: b.len(),
                    });
                }
            }
            ConvexSetDesc::Translate { inner, shift } => {
                if inner.dim() != shift.len() {
                    return Err(GeometryError::Dimension {
                        expected: inner.dim(),
                        found: shift.len(),
                    });
                }
                inner.validate_inner()?;
            }
            ConvexSetDesc::Intersection(list) => {
                let n = self.dim();
                for s in list {
                    if s.dim() != n {
                        return Err(GeometryError::Dimension {
                            expected: n,
                            found: s.dim(),
                        });
                    }
                    s.validate_inner()?;
                }
            }
            ConvexSetDesc::Product(list) => {
                for s in list {
                    s.validate_inner()?;
                }
            }
        }
        Ok(())
    }

    pub fn is_polyhedral(&self) -> bool {
        match self {
            ConvexSetDesc::Ball { .. } => false,
            ConvexSetDesc::Translate { inner, .. } => inner.is_polyhedral(),
            ConvexSetDesc::Intersection(l) | ConvexSetDesc::Product(l) => l.iter().all(|s| s.is_polyhedral()),
            _ => true,
        }
    }

    /// Inequality/equality description; `None` for non-polyhedral sets.
    pub fn polyhedral(&self) -> Option<PolyhedralForm> {
        let n = self.dim();
        match self {
            ConvexSetDesc::Box { lower, upper } => {
                let mut rows = Vec::new();
                let mut rhs = Vec::new();
                for i in 0..n {
                    if upper[i].is_finite() {
                        let mut r = vec![0.0; n];
                        r[i] = 1.0;
                        rows.push(r);
                        rhs.push(upper[i]);
                    }
                    if lower[i].is_finite() {
                        let mut r = vec![0.0; n];
                        r[i] = -1.0;
                        rows.push(r);
                        rhs.push(-lower[i]);
                    }
                }
                Some(PolyhedralForm::from_rows(n, rows, rhs, Vec::new(), Vec::new()))
            }
            ConvexSetDesc::Ball { .. } => None,
            ConvexSetDesc::AffineSubspace { basis, offset } => {
                let comp = null_space(&basis.transpose());
                let a_eq = comp.transpose();
                let b_eq = &a_eq * offset;
                Some(PolyhedralForm {
                    a_in: Matrix::zeros(0, n),
                    b_in: Vector::zeros(0),
                    a_eq,
                    b_eq,
                })
            }
            ConvexSetDesc::Polyhedron { a, b } => Some(PolyhedralForm {
                a_in: a.clone(),
                b_in: b.clone(),
                a_eq: Matrix::zeros(0, n),
                b_eq: Vector::zeros(0),
            }),
            ConvexSetDesc::Translate { inner, shift } => {
                let p = inner.polyhedral()?;
                Some(PolyhedralForm {
                    b_in: &p.b_in + &p.a_in * shift,
                    b_eq: &p.b_eq + &p.a_eq * shift,
                    a_in: p.a_in,
                    a_eq: p.a_eq,
                })
            }
            ConvexSetDesc::Intersection(list) => {
                let mut out = PolyhedralForm::whole(n);
                for s in list {
                    out = out.stack(&s.polyhedral()?);
                }
                Some(out)
            }
            ConvexSetDesc::Product(list) => {
                let parts: Option<Vec<PolyhedralForm>> = list.iter().map(|s| s.polyhedral()).collect();
                Some(PolyhedralForm::block(&parts?))
            }
        }
    }

    /// Splits into at most one Euclidean ball and a polyhedral remainder.
    fn ball_and_poly(&self) -> Result<(Option<(Vector, f64)>, PolyhedralForm), GeometryError> {
        let n = self.dim();
        match self {
            ConvexSetDesc::Ball { center, radius } => Ok((Some((center.clone(), *radius)), PolyhedralForm::whole(n))),
            ConvexSetDesc::Translate { inner, shift } => {
                let (ball, poly) = inner.ball_and_poly()?;
                let ball = ball.map(|(c, r)| (c + shift, r));
                let poly = PolyhedralForm {
                    b_in: &poly.b_in + &poly.a_in * shift,
                    b_eq: &poly.b_eq + &poly.a_eq * shift,
                    a_in: poly.a_in,
                    a_eq: poly.a_eq,
                };
                Ok((ball, poly))
            }
            ConvexSetDesc::Intersection(list) => {
                let mut ball = None;
                let mut poly = PolyhedralForm::whole(n);
                for s in list {
                    let (b, p) = s.ball_and_poly()?;
                    if let Some(b) = b {
                        if ball.is_some() {
                            return Err(GeometryError::Unsupported("intersection of two balls".into()));
                        }
                        ball = Some(b);
                    }
                    poly = poly.stack(&p);
                }
                Ok((ball, poly))
            }
            _ => match self.polyhedral() {
                Some(p) => Ok((None, p)),
                None => Err(GeometryError::Unsupported("product containing a ball".into())),
            },
        }
    }

    /// Crude diameter estimate used for relative tolerances.
    pub fn diameter_hint(&self) -> f64 {
        match self {
            ConvexSetDesc::Box { lower, upper } => {
                let d = (upper - lower).norm();
                if d.is_finite() { d } else { 1.0 }
            }
            ConvexSetDesc::Ball { radius, .. } => 2.0 * radius,
            ConvexSetDesc::Translate { inner, .. } => inner.diameter_hint(),
            ConvexSetDesc::Intersection(l) => l.iter().map(|s| s.diameter_hint()).fold(f64::INFINITY, f64::min),
            ConvexSetDesc::Product(l) => l.iter().map(|s| s.diameter_hint().powi(2)).sum::<f64>().sqrt(),
            _ => 1.0,
        }
        .max(f64::MIN_POSITIVE)
    }

    /// Active-face tolerance `1e-8 · diameter`.
    pub fn default_active_tol(&self) -> f64 {
        let d = self.diameter_hint();
        1e-8 * if d.is_finite() { d.max(1e-300) } else { 1.0 }
    }
}

impl PolyhedralForm {
    pub fn whole(n: usize) -> Self {
        Self {
            a_in: Matrix::zeros(0, n),
            b_in: Vector::zeros(0),
            a_eq: Matrix::zeros(0, n),
            b_eq: Vector::zeros(0),
        }
    }

    fn from_rows(n: usize, rows: Vec<Vec<f64>>, rhs: Vec<f64>, eq: Vec<Vec<f64>>, eq_rhs: Vec<f64>) -> Self {
        let a_in = Matrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        let a_eq = Matrix::from_fn(eq.len(), n, |i, j| eq[i][j]);
        Self {
            a_in,
            b_in: Vector::from_vec(rhs),
            a_eq,
            b_eq: Vector::from_vec(eq_rhs),
        }
    }

    pub fn dim(&self) -> usize {
        self.a_in.ncols()
    }

    pub fn stack(&self, other: &PolyhedralForm) -> PolyhedralForm {
        let n = self.dim();
        let vstack = |a: &Matrix, b: &Matrix| {
            let mut out = Matrix::zeros(a.nrows() + b.nrows(), n);
            out.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
            out.view_mut((a.nrows(), 0), (b.nrows(), n)).copy_from(b);
            out
        };
        let vcat = |a: &Vector, b: &Vector| Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied());
        PolyhedralForm {
            a_in: vstack(&self.a_in, &other.a_in),
            b_in: vcat(&self.b_in, &other.b_in),
            a_eq: vstack(&self.a_eq, &other.a_eq),
            b_eq: vcat(&self.b_eq, &other.b_eq),
        }
    }

    pub fn block(parts: &[PolyhedralForm]) -> PolyhedralForm {
        let n: usize = parts.iter().map(|p| p.dim()).sum();
        let rin: usize = parts.iter().map(|p| p.a_in.nrows()).sum();
        let req: usize = parts.iter().map(|p| p.a_eq.nrows()).sum();
        let mut out = PolyhedralForm {
            a_in: Matrix::zeros(rin, n),
            b_in: Vector::zeros(rin),
            a_eq: Matrix::zeros(req, n),
            b_eq: Vector::zeros(req),
        };
        let (mut c0, mut ri, mut re) = (0, 0, 0);
        for p in parts {
            let d = p.dim();
            out.a_in.view_mut((ri, c0), (p.a_in.nrows(), d)).copy_from(&p.a_in);
            out.b_in.rows_mut(ri, p.b_in.len()).copy_from(&p.b_in);
            out.a_eq.view_mut((re, c0), (p.a_eq.nrows(), d)).copy_from(&p.a_eq);
            out.b_eq.rows_mut(re, p.b_eq.len()).copy_from(&p.b_eq);
            c0 += d;
            ri += p.a_in.nrows();
            re += p.a_eq.nrows();
        }
        out
    }

    /// Parametrises the equality part; fails with `EmptySet` if inconsistent.
    pub fn chart(&self) -> Result<Chart, GeometryError> {
        let n = self.dim();
        let (origin, basis) = if self.a_eq.nrows() == 0 {
            (Vector::zeros(n), Matrix::identity(n, n))
        } else {
            let origin = pinv(&self.a_eq) * &self.b_eq;
            let resid = (&self.a_eq * &origin - &self.b_eq).amax();
            let scale = 1.0 + self.b_eq.amax() + self.a_eq.amax() * origin.amax();
            if resid > 1e-9 * scale {
                return Err(GeometryError::EmptySet);
            }
            (origin, null_space(&self.a_eq))
        };
        let a = &self.a_in * &basis;
        let b = &self.b_in - &self.a_in * &origin;
        Ok(Chart {
            origin,
            basis,
            polytope: ChartPolytope::new(a, b),
        })
    }

    /// Largest violation of any row at `x`.
    pub fn violation(&self, x: &Vector) -> f64 {
        let mut v = 0.0_f64;
        let ai = &self.a_in * x;
        for i in 0..ai.len() {
            v = v.max(ai[i] - self.b_in[i]);
        }
        let ae = &self.a_eq * x;
        for i in 0..ae.len() {
            v = v.max((ae[i] - self.b_eq[i]).abs());
        }
        v
    }

    /// `sup { dᵀx }` by linear programming.
    pub fn support(&self, d: &Vector) -> f64 {
        let n = self.dim();
        let mut lp = LinearProgram::new(n);
        lp.kinds = vec![VarKind::Free; n];
        lp.objective = d.iter().map(|v| -v).collect();
        for i in 0..self.a_in.nrows() {
            lp.add(self.a_in.row(i).iter().copied().collect(), Relation::Le, self.b_in[i]);
        }
        for i in 0..self.a_eq.nrows() {
            lp.add(self.a_eq.row(i).iter().copied().collect(), Relation::Eq, self.b_eq[i]);
        }
        match lp.solve() {
            LpOutcome::Optimal { value, .. } => -value,
            LpOutcome::Unbounded => f64::INFINITY,
            LpOutcome::Infeasible { .. } => f64::NEG_INFINITY,
        }
    }

    /// Metric projection; `EmptySet` if infeasible.
    pub fn project(&self, point: &Vector, metric: &WeightedMetric) -> Result<Vector, GeometryError> {
        let chart = self.chart()?;
        chart.project(point, metric)
    }
}

impl Chart {
    pub fn project(&self, point: &Vector, metric: &WeightedMetric) -> Result<Vector, GeometryError> {
        let q = self.basis.ncols();
        if q == 0 {
            return if self.polytope.contains(&Vector::zeros(0)) {
                Ok(self.origin.clone())
            } else {
                Err(GeometryError::EmptySet)
            };
        }
        let h = metric.gram(&self.basis);
        let w0 = crate::linalg::weighted_coordinates(&self.basis, metric, &(point - &self.origin));
        let sol = self.polytope.project(&h, &w0).map_err(|e| match e {
            QpError::Infeasible => GeometryError::EmptySet,
            other => GeometryError::Qp(other),
        })?;
        Ok(&self.origin + &self.basis * sol.x)
    }
}

/// Metric projection onto `set`.
pub fn project(set: &ConvexSetDesc, point: &Vector, metric: &WeightedMetric) -> Result<Vector, GeometryError> {
    check_dim(set, point.len())?;
    let (ball, poly) = set.ball_and_poly()?;
    match ball {
        None => poly.project(point, metric),
        Some((c, r)) => project_ball_poly(&c, r, &poly, point, metric),
    }
}

fn check_dim(set: &ConvexSetDesc, n: usize) -> Result<(), GeometryError> {
    if set.dim() != n {
        return Err(GeometryError::Dimension {
            expected: set.dim(),
            found: n,
        });
    }
    Ok(())
}

/// Projection onto `Ball(c, r) ∩ P` via a one-dimensional search on the
/// ball multiplier `μ`: the minimiser of `‖z − p‖²_M + μ‖z − c‖²` over `P`
/// moves monotonically towards `proj_P(c)` as `μ` grows.
fn project_ball_poly(
    c: &Vector,
    r: f64,
    poly: &PolyhedralForm,
    point: &Vector,
    metric: &WeightedMetric,
) -> Result<Vector, GeometryError> {
    let n = point.len();
    let chart = poly.chart()?;
    let m = metric.matrix().clone();
    let solve_mu = |mu: f64| -> Result<Vector, GeometryError> {
        let mm = &m + Matrix::identity(n, n) * mu;
        let q = mm
            .clone()
            .cholesky()
            .ok_or(GeometryError::Qp(QpError::Metric))?
            .solve(&(&m * point + c * mu));
        let shifted = WeightedMetric::from_matrix(mm)?;
        chart.project(&q, &shifted)
    };
    let z0 = solve_mu(0.0)?;
    if (&z0 - c).norm() <= r * (1.0 + 1e-12) {
        return Ok(z0);
    }
    let scale = m.amax().max(1e-300);
    let mut hi = scale;
    let mut z_hi = solve_mu(hi)?;
    let mut grow = 0;
    while (&z_hi - c).norm() > r {
        hi *= 10.0;
        grow += 1;
        z_hi = solve_mu(hi)?;
        if grow > 40 {
            // Limit point: projection of the centre onto P.
            let pc = chart.project(c, &WeightedMetric::identity(n))?;
            let d = (&pc - c).norm();
            return if d <= r * (1.0 + 1e-9) + 1e-12 {
                Ok(pc)
            } else {
                Err(GeometryError::EmptySet)
            };
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = if lo == 0.0 { hi * 1e-3 } else { (lo * hi).sqrt() };
        let mid = if hi / lo.max(1e-300) < 1.0 + 1e-6 { 0.5 * (lo + hi) } else { mid };
        let z = solve_mu(mid)?;
        if (&z - c).norm() > r {
            lo = mid;
        } else {
            hi = mid;
            z_hi = z;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(z_hi)
}

/// `sup { ⟨d, x⟩ : x ∈ set }` (Euclidean pairing); `+∞` if unbounded and
/// `−∞` for the empty set.
pub fn support_function(set: &ConvexSetDesc, d: &Vector) -> f64 {
    match set {
        ConvexSetDesc::Box { lower, upper } => {
            let mut s = 0.0;
            for i in 0..d.len() {
                if d[i] > 0.0 {
                    s += upper[i] * d[i];
                } else if d[i] < 0.0 {
                    s += lower[i] * d[i];
                }
            }
            s
        }
        ConvexSetDesc::Ball { center, radius } => d.dot(center) + radius * d.norm(),
        ConvexSetDesc::AffineSubspace { basis, offset } => {
            let proj = basis.transpose() * d;
            let tol = 1e-12 * (1.0 + d.norm()) * (1.0 + basis.amax());
            if proj.amax() <= tol {
                d.dot(offset)
            } else {
                f64::INFINITY
            }
        }
        ConvexSetDesc::Translate { inner, shift } => {
            let s = support_function(inner, d);
            if s.is_finite() { s + d.dot(shift) } else { s }
        }
        ConvexSetDesc::Product(list) => {
            let mut off = 0;
            let mut total = 0.0;
            for s in list {
                let k = s.dim();
                total += support_function(s, &d.rows(off, k).into_owned());
                off += k;
            }
            total
        }
        ConvexSetDesc::Polyhedron { .. } | ConvexSetDesc::Intersection(_) => {
            match set.ball_and_poly() {
                Ok((None, poly)) => poly.support(d),
                Ok((Some((c, r)), poly)) => support_ball_poly(&c, r, &poly, d),
                Err(_) => f64::NAN,
            }
        }
    }
}

/// Support function of `Ball(c, r) ∩ P`: the maximiser of
/// `dᵀz − (μ/2)‖z − c‖²` over `P` is `proj_P(c + d/μ)`; search `μ`.
fn support_ball_poly(c: &Vector, r: f64, poly: &PolyhedralForm, d: &Vector) -> f64 {
    let n = c.len();
    let id = WeightedMetric::identity(n);
    let Ok(chart) = poly.chart() else {
        return f64::NEG_INFINITY;
    };
    let Ok(pc) = chart.project(c, &id) else {
        return f64::NEG_INFINITY;
    };
    let dist = (&pc - c).norm();
    if dist > r * (1.0 + 1e-9) + 1e-12 {
        return f64::NEG_INFINITY;
    }
    if d.norm() == 0.0 {
        return 0.0;
    }
    // Unconstrained-by-the-ball optimum.
    let lp_val = poly.support(d);
    if lp_val.is_finite() {
        if let Ok(z) = max_point(poly, d) {
            if (&z - c).norm() <= r * (1.0 + 1e-12) {
                return lp_val;
            }
        }
    }
    let z_of = |mu: f64| chart.project(&(c + d / mu), &id).ok();
    let dn = d.norm();
    let mut lo = dn / (r + (c.norm() + 1.0)) * 1e-6;
    let mut hi = dn / r.max(1e-300) * 1e6;
    match z_of(hi) {
        Some(z) if (&z - c).norm() <= r => {}
        _ => return d.dot(&pc),
    }
    for _ in 0..300 {
        let mid = (lo * hi).sqrt();
        match z_of(mid) {
            Some(z) if (&z - c).norm() > r => lo = mid,
            _ => hi = mid,
        }
        if hi / lo < 1.0 + 1e-15 {
            break;
        }
    }
    z_of(hi).map_or(f64::NAN, |z| d.dot(&z))
}

fn max_point(poly: &PolyhedralForm, d: &Vector) -> Result<Vector, GeometryError> {
    let n = poly.dim();
    let mut lp = LinearProgram::new(n);
    lp.kinds = vec![VarKind::Free; n];
    lp.objective = d.iter().map(|v| -v).collect();
    for i in 0..poly.a_in.nrows() {
        lp.add(poly.a_in.row(i).iter().copied().collect(), Relation::Le, poly.b_in[i]);
    }
    for i in 0..poly.a_eq.nrows() {
        lp.add(poly.a_eq.row(i).iter().copied().collect(), Relation::Eq, poly.b_eq[i]);
    }
    match lp.solve() {
        LpOutcome::Optimal { x, .. } => Ok(Vector::from_vec(x)),
        LpOutcome::Unbounded => Err(GeometryError::Unbounded),
        LpOutcome::Infeasible { .. } => Err(GeometryError::EmptySet),
    }
}

/// M-distance from `point` to `set`.
pub fn distance(set: &ConvexSetDesc, point: &Vector, metric: &WeightedMetric) -> Result<f64, GeometryError> {
    let p = project(set, point, metric)?;
    Ok(metric.norm(&(point - p)))
}

impl NormalConeDesc {
    pub fn zero(base: Vector) -> Self {
        let n = base.len();
        Self {
            generators: Vec::new(),
            lineality: Matrix::zeros(n, 0),
            base,
        }
    }

    pub fn whole_space(base: Vector) -> Self {
        let n = base.len();
        Self {
            generators: Vec::new(),
            lineality: Matrix::identity(n, n),
            base,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.generators.is_empty() && self.lineality.ncols() == 0
    }

    /// Membership `v ∈ cone(generators) + span(lineality)` by an LP.
    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        let n = v.len();
        let g = self.generators.len();
        let l = self.lineality.ncols();
        // Minimise the ℓ¹ residual so that near-misses are measured.
        let nv = g + l + 2 * n;
        let mut lp = LinearProgram::new(nv);
        for k in 0..l {
            lp.kinds[g + k] = VarKind::Free;
        }
        for i in 0..2 * n {
            lp.objective[g + l + i] = 1.0;
        }
        for i in 0..n {
            let mut row = vec![0.0; nv];
            for (k, gk) in self.generators.iter().enumerate() {
                row[k] = gk[i];
            }
            for k in 0..l {
                row[g + k] = self.lineality[(i, k)];
            }
            row[g + l + 2 * i] = 1.0;
            row[g + l + 2 * i + 1] = -1.0;
            lp.add(row, Relation::Eq, v[i]);
        }
        match lp.solve() {
            LpOutcome::Optimal { value, .. } => value <= tol * (1.0 + v.norm()),
            _ => false,
        }
    }

    fn weighted(mut self, metric: &WeightedMetric) -> Self {
        for g in self.generators.iter_mut() {
            *g = metric.apply_inverse(g);
        }
        if self.lineality.ncols() > 0 {
            self.lineality = metric.inverse() * &self.lineality;
        }
        self
    }
}

/// Normal cone of a polyhedral set (Euclidean pairing) at `x`.
fn polyhedral_cone(poly: &PolyhedralForm, x: &Vector, tol: f64) -> NormalConeDesc {
    let n = x.len();
    let ax = &poly.a_in * x;
    let mut gens: Vec<Vector> = Vec::new();
    for i in 0..poly.a_in.nrows() {
        let row = poly.a_in.row(i).transpose();
        let rn = row.norm();
        if rn == 0.0 {
            continue;
        }
        if poly.b_in[i] - ax[i] <= tol * rn {
            gens.push(row);
        }
    }
    let mut lin: Vec<Vector> = (0..poly.a_eq.nrows())
        .map(|i| poly.a_eq.row(i).transpose())
        .filter(|r: &Vector| r.norm() > 0.0)
        .collect();
    // Opposite generator pairs (e.g. both faces of a flat box side) are linear.
    let mut used = vec![false; gens.len()];
    for i in 0..gens.len() {
        for j in i + 1..gens.len() {
            if used[i] || used[j] {
                continue;
            }
            let (a, b) = (&gens[i] / gens[i].norm(), &gens[j] / gens[j].norm());
            if (a + b).amax() < 1e-12 {
                used[i] = true;
                used[j] = true;
                lin.push(gens[i].clone());
            }
        }
    }
    let generators = gens
        .into_iter()
        .zip(used)
        .filter(|(_, u)| !u)
        .map(|(g, _)| g)
        .collect();
    let lineality = if lin.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        crate::linalg::range_basis(&Matrix::from_columns(&lin))
    };
    NormalConeDesc {
        generators,
        lineality,
        base: x.clone(),
    }
}

/// Weighted normal cone `N^M_C(x) = M⁻¹ N_C(x)`.
pub fn normal_cone(
    set: &ConvexSetDesc,
    point: &Vector,
    metric: &WeightedMetric,
    tol: f64,
) -> Result<NormalConeDesc, GeometryError> {
    check_dim(set, point.len())?;
    let dist = distance(set, point, metric)?;
    let scale = 1.0 + point.amax();
    if dist > tol * scale {
        return Err(GeometryError::PointNotInSet { distance: dist });
    }
    let euclid = euclidean_cone(set, point, tol)?;
    Ok(euclid.weighted(metric))
}

/// Unweighted normal cone (Euclidean pairing).
pub fn euclidean_cone(set: &ConvexSetDesc, x: &Vector, tol: f64) -> Result<NormalConeDesc, GeometryError> {
    let n = x.len();
    let (ball, poly) = set.ball_and_poly()?;
    let pc = polyhedral_cone(&poly, x, tol);
    let Some((c, r)) = ball else {
        return Ok(pc);
    };
    let ball_gen = {
        let d = x - &c;
        let dn = d.norm();
        if dn >= r - tol * (1.0 + r) {
            Some(d / dn.max(f64::MIN_POSITIVE))
        } else {
            None
        }
    };
    if poly.a_in.nrows() + poly.a_eq.nrows() == 0 {
        let mut out = NormalConeDesc::zero(x.clone());
        out.generators.extend(ball_gen);
        return Ok(out);
    }
    // With a Slater point the cone is the sum; at tangency the intersection
    // is the single point proj_P(c) and the cone is the whole space.
    let pc_c = poly.project(&c, &WeightedMetric::identity(n))?;
    let dist = (&pc_c - &c).norm();
    if dist < r - tol * (1.0 + r) {
        let mut out = pc;
        out.generators.extend(ball_gen);
        Ok(out)
    } else {
        Ok(NormalConeDesc::whole_space(x.clone()))
    }
}

/// Hausdorff distance between two bounded polyhedral sets whose affine
/// hulls have dimension ≤ 3.
pub fn hausdorff_distance(
    s1: &ConvexSetDesc,
    s2: &ConvexSetDesc,
    metric: &WeightedMetric,
) -> Result<f64, GeometryError> {
    let charts = [s1, s2]
        .iter()
        .map(|s| {
            let p = s
                .polyhedral()
                .ok_or_else(|| GeometryError::Unsupported("Hausdorff distance needs polytopes".into()))?;
            p.chart()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut verts = Vec::new();
    for ch in &charts {
        if ch.basis.ncols() > 3 {
            return Err(GeometryError::Unsupported("affine hull of dimension > 3".into()));
        }
        if ch.polytope.is_empty() {
            return Err(GeometryError::EmptySet);
        }
        if !ch.polytope.is_bounded() {
            return Err(GeometryError::Unbounded);
        }
        verts.push(
            ch.polytope
                .vertices()
                .into_iter()
                .map(|w| &ch.origin + &ch.basis * w)
                .collect::<Vec<_>>(),
        );
    }
    let one_sided = |vs: &[Vector], target: &Chart| -> Result<f64, GeometryError> {
        let mut worst = 0.0_f64;
        for v in vs {
            let p = target.project(v, metric)?;
            worst = worst.max(metric.norm(&(v - p)));
        }
        Ok(worst)
    };
    Ok(one_sided(&verts[0], &charts[1])?.max(one_sided(&verts[1], &charts[0])?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn unit_box(n: usize) -> ConvexSetDesc {
        ConvexSetDesc::boxed(Vector::from_element(n, -1.0), Vector::from_element(n, 1.0)).unwrap()
    }

    fn diag_line() -> ConvexSetDesc {
        ConvexSetDesc::subspace(Matrix::from_column_slice(2, 1, &[1., 1.]))
    }

    fn segment() -> ConvexSetDesc {
        ConvexSetDesc::boxed(v(&[-1., -1.]), v(&[1., -1.])).unwrap()
    }

    #[test]
    fn box_projection_clamps() {
        let p = project(&unit_box(2), &v(&[2., 2.]), &WeightedMetric::identity(2)).unwrap();
        assert_relative_eq!(p, v(&[1., 1.]), epsilon = 1e-12);
    }

    #[test]
    fn inside_point_is_fixed() {
        let x = v(&[0.2, -0.7]);
        assert_eq!(project(&unit_box(2), &x, &WeightedMetric::identity(2)).unwrap(), x);
    }

    #[test]
    fn box_and_line_projection_against_dense_search() {
        let set = ConvexSetDesc::Intersection(vec![unit_box(2), diag_line()]);
        let p = project(&set, &v(&[2., 0.]), &WeightedMetric::identity(2)).unwrap();
        // Oracle: scan the segment {(s, s) : |s| ≤ 1}.
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=200_000 {
            let s = -1.0 + 2.0 * k as f64 / 200_000.0;
            let d = (2.0 - s).powi(2) + s * s;
            if d < best.0 {
                best = (d, s);
            }
        }
        assert_relative_eq!(p, v(&[best.1, best.1]), epsilon = 1e-5);
        assert_relative_eq!(p, v(&[1., 1.]), epsilon = 1e-12);
    }

    #[test]
    fn support_values() {
        assert_relative_eq!(support_function(&unit_box(2), &v(&[1., 1.])), 2.0);
        assert_relative_eq!(support_function(&diag_line(), &v(&[1., -1.])), 0.0);
        assert!(support_function(&diag_line(), &v(&[1., 0.])).is_infinite());
        assert_relative_eq!(support_function(&segment(), &v(&[1., 0.])), 1.0);
        // |a| − b on the segment.
        for (a, b) in [(0.3, 2.0), (-1.5, -0.5), (0.0, 1.0)] {
            let s = support_function(&segment(), &v(&[a, b]));
            assert_relative_eq!(s, f64::abs(a) - b, epsilon = 1e-12);
            let as_poly = ConvexSetDesc::Intersection(vec![segment()]);
            assert_relative_eq!(support_function(&as_poly, &v(&[a, b])), f64::abs(a) - b, epsilon = 1e-9);
        }
    }

    #[test]
    fn ball_support_and_projection() {
        let b = ConvexSetDesc::ball(v(&[1., 0.]), 2.0).unwrap();
        assert_relative_eq!(support_function(&b, &v(&[0., 3.])), 6.0);
        let p = project(&b, &v(&[1., 5.]), &WeightedMetric::identity(2)).unwrap();
        assert_relative_eq!(p, v(&[1., 2.]), epsilon = 1e-9);
    }

    #[test]
    fn tangent_disc_and_segment() {
        let disc = ConvexSetDesc::ball(v(&[0., 0.]), 1.0).unwrap();
        let inter = ConvexSetDesc::Intersection(vec![disc, segment()]);
        assert_relative_eq!(support_function(&inter, &v(&[1., 0.])), 0.0, epsilon = 1e-9);
        assert_relative_eq!(support_function(&inter, &v(&[0., -1.])), 1.0, epsilon = 1e-9);
        let cone = normal_cone(&inter, &v(&[0., -1.]), &WeightedMetric::identity(2), 1e-9).unwrap();
        assert_eq!(cone.lineality.ncols(), 2);
    }

    #[test]
    fn box_normal_cone_faces() {
        let id = WeightedMetric::identity(2);
        let c = normal_cone(&unit_box(2), &v(&[1., 0.]), &id, 1e-9).unwrap();
        assert_eq!(c.generators.len(), 1);
        assert_relative_eq!(c.generators[0], v(&[1., 0.]));
        assert!(normal_cone(&unit_box(2), &v(&[0.1, 0.]), &id, 1e-9).unwrap().is_zero());
        assert!(matches!(
            normal_cone(&unit_box(2), &v(&[3., 0.]), &id, 1e-9),
            Err(GeometryError::PointNotInSet { .. })
        ));
    }

    #[test]
    fn subspace_normal_cone_is_orthogonal_line() {
        let c = normal_cone(&diag_line(), &v(&[0.4, 0.4]), &WeightedMetric::identity(2), 1e-9).unwrap();
        assert_eq!(c.lineality.ncols(), 1);
        let l = c.lineality.column(0);
        assert_relative_eq!(l[0] + l[1], 0.0, epsilon = 1e-12);
        // Definition check on samples of the set.
        for s in [-3.0, -0.5, 0.0, 2.0] {
            let y = v(&[s, s]) - v(&[0.4, 0.4]);
            assert!(l.dot(&y).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_cone_applies_stiffness() {
        let m = WeightedMetric::from_stiffness(&[2.0, 5.0]).unwrap();
        let c = normal_cone(&unit_box(2), &v(&[1., -1.]), &m, 1e-9).unwrap();
        let mut g: Vec<Vector> = c.generators.clone();
        g.sort_by(|a, b| b[0].partial_cmp(&a[0]).unwrap());
        assert_relative_eq!(g[0], v(&[2., 0.]));
        assert_relative_eq!(g[1], v(&[0., -5.]));
    }

    #[test]
    fn hausdorff_of_translate() {
        let id = WeightedMetric::identity(2);
        let s = ConvexSetDesc::Intersection(vec![unit_box(2), diag_line()]);
        assert_relative_eq!(hausdorff_distance(&s, &s, &id).unwrap(), 0.0, epsilon = 1e-12);
        let shift = v(&[0.25, 0.25]);
        let t = s.clone().translate(shift.clone());
        assert_relative_eq!(hausdorff_distance(&s, &t, &id).unwrap(), shift.norm(), epsilon = 1e-12);
        let m = WeightedMetric::diagonal(&[2.0, 3.0]).unwrap();
        assert_relative_eq!(hausdorff_distance(&s, &t, &m).unwrap(), m.norm(&shift), epsilon = 1e-12);
    }

    #[test]
    fn hausdorff_rejects_unbounded_and_balls() {
        let id = WeightedMetric::identity(2);
        assert_eq!(hausdorff_distance(&diag_line(), &diag_line(), &id), Err(GeometryError::Unbounded));
        let b = ConvexSetDesc::ball(v(&[0., 0.]), 1.0).unwrap();
        assert!(matches!(hausdorff_distance(&b, &b, &id), Err(GeometryError::Unsupported(_))));
    }

    #[test]
    fn invalid_descriptions() {
        assert!(ConvexSetDesc::boxed(v(&[1.]), v(&[0.])).is_err());
        assert!(ConvexSetDesc::ball(v(&[0.]), 0.0).is_err());
        let deep = unit_box(1).translate(v(&[0.])).translate(v(&[0.])).translate(v(&[0.])).translate(v(&[0.]));
        assert!(deep.validate().is_err());
    }
}
