//! Primal/dual values for splitting a support vector of `C₁ ∩ C₂`,
//! normal-cone additivity, and the four constraint qualifications.
//!
//! Everything is evaluated in the Euclidean frame after mapping the weighted
//! vector `v` to `M v`; cone decompositions are mapped back with `M⁻¹`.

use crate::geometry::{self, euclidean_cone, ConvexSetDesc, GeometryError, PolyhedralForm};
use crate::linalg::{null_space, range_basis, Matrix, Vector, WeightedMetric};
use crate::lp::{LinearProgram, LpOutcome, Relation, VarKind};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualityError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unsupported set pair: {0}")]
    Unsupported(String),
    #[error("malformed yield curve: {0}")]
    MalformedCurve(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualityVerdict {
    StrongDuality,
    GapOrNonAttainment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    pub p_star: f64,
    pub d_star: f64,
    pub attained: bool,
    /// Dual minimiser in the weighted frame.
    pub minimizer: Option<Vector>,
    pub gap: f64,
    pub verdict: DualityVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Additivity {
    pub holds: bool,
    /// `v = n1 + n2` with `n_i ∈ N^M_{C_i}(x)` when `holds`.
    pub parts: Option<(Vector, Vector)>,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CqOutcome {
    Holds,
    Fails,
    Undecided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CqResult {
    pub outcome: CqOutcome,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CqVerdict {
    pub slater1: CqResult,
    pub slater2: CqResult,
    pub rockafellar: CqResult,
    pub attouch_brezis: CqResult,
}

impl CqVerdict {
    pub fn outcomes(&self) -> [CqOutcome; 4] {
        [
            self.slater1.outcome,
            self.slater2.outcome,
            self.rockafellar.outcome,
            self.attouch_brezis.outcome,
        ]
    }

    /// `Holds` at one level implies `Holds` at every weaker level.
    pub fn is_monotone(&self) -> bool {
        let o = self.outcomes();
        (0..3).all(|i| o[i] != CqOutcome::Holds || o[i + 1] == CqOutcome::Holds)
    }
}

fn cq(outcome: CqOutcome, detail: impl Into<String>) -> CqResult {
    CqResult {
        outcome,
        detail: detail.into(),
    }
}

/// A pair reduced to the shapes we can handle.
enum Pair {
    Poly(PolyhedralForm, PolyhedralForm),
    /// Ball (centre, radius) and a polyhedron; `ball_first` records order.
    BallPoly {
        c: Vector,
        r: f64,
        poly: PolyhedralForm,
        ball_first: bool,
    },
}

fn as_ball(set: &ConvexSetDesc) -> Option<(Vector, f64)> {
    match set {
        ConvexSetDesc::Ball { center, radius } => Some((center.clone(), *radius)),
        ConvexSetDesc::Translate { inner, shift } => as_ball(inner).map(|(c, r)| (c + shift, r)),
        _ => None,
    }
}

fn classify(c1: &ConvexSetDesc, c2: &ConvexSetDesc) -> Result<Pair, DualityError> {
    match (c1.polyhedral(), c2.polyhedral()) {
        (Some(p1), Some(p2)) => Ok(Pair::Poly(p1, p2)),
        (None, Some(p2)) => {
            let (c, r) = as_ball(c1).ok_or_else(|| DualityError::Unsupported("first set".into()))?;
            Ok(Pair::BallPoly {
                c,
                r,
                poly: p2,
                ball_first: true,
            })
        }
        (Some(p1), None) => {
            let (c, r) = as_ball(c2).ok_or_else(|| DualityError::Unsupported("second set".into()))?;
            Ok(Pair::BallPoly {
                c,
                r,
                poly: p1,
                ball_first: false,
            })
        }
        (None, None) => Err(DualityError::Unsupported("two non-polyhedral sets".into())),
    }
}

/// Column layout of `δ*` multipliers for a polyhedron: `μ ≥ 0` per
/// inequality, `ν` free per equality.
struct DualBlock<'a> {
    poly: &'a PolyhedralForm,
    offset: usize,
}

impl DualBlock<'_> {
    fn width(&self) -> usize {
        self.poly.a_in.nrows() + self.poly.a_eq.nrows()
    }

    fn kinds(&self, kinds: &mut [VarKind]) {
        let p = self.poly.a_in.nrows();
        for k in 0..self.poly.a_eq.nrows() {
            kinds[self.offset + p + k] = VarKind::Free;
        }
    }

    fn cost(&self, obj: &mut [f64]) {
        let p = self.poly.a_in.nrows();
        for i in 0..p {
            obj[self.offset + i] = self.poly.b_in[i];
        }
        for k in 0..self.poly.a_eq.nrows() {
            obj[self.offset + p + k] = self.poly.b_eq[k];
        }
    }

    /// Coefficients of `(Aᵀμ + Eᵀν)_row` in `out`, scaled by `sign`.
    fn image_row(&self, row: usize, sign: f64, out: &mut [f64]) {
        let p = self.poly.a_in.nrows();
        for i in 0..p {
            out[self.offset + i] = sign * self.poly.a_in[(i, row)];
        }
        for k in 0..self.poly.a_eq.nrows() {
            out[self.offset + p + k] = sign * self.poly.a_eq[(k, row)];
        }
    }

    fn image(&self, x: &[f64]) -> Vector {
        let p = self.poly.a_in.nrows();
        let mu = Vector::from_column_slice(&x[self.offset..self.offset + p]);
        let nu = Vector::from_column_slice(&x[self.offset + p..self.offset + self.width()]);
        self.poly.a_in.transpose() * mu + self.poly.a_eq.transpose() * nu
    }
}

/// `inf_y δ*_{P₁}(y) + δ*_{P₂}(w − y)` by one LP; returns value and `y*`.
fn polyhedral_inf_convolution(p1: &PolyhedralForm, p2: &PolyhedralForm, w: &Vector) -> (f64, Option<Vector>) {
    let n = w.len();
    let b1 = DualBlock { poly: p1, offset: 0 };
    let b2 = DualBlock {
        poly: p2,
        offset: b1.width(),
    };
    let nv = b1.width() + b2.width();
    let mut lp = LinearProgram::new(nv);
    b1.kinds(&mut lp.kinds);
    b2.kinds(&mut lp.kinds);
    b1.cost(&mut lp.objective);
    b2.cost(&mut lp.objective);
    for r in 0..n {
        let mut row = vec![0.0; nv];
        b1.image_row(r, 1.0, &mut row);
        b2.image_row(r, 1.0, &mut row);
        lp.add(row, Relation::Eq, w[r]);
    }
    match lp.solve() {
        LpOutcome::Optimal { x, value } => (value, Some(b1.image(&x))),
        LpOutcome::Infeasible { .. } => (f64::INFINITY, None),
        LpOutcome::Unbounded => (f64::NEG_INFINITY, None),
    }
}

fn poly_support(p: &PolyhedralForm, d: &Vector) -> f64 {
    // Boxes and other sets with only coordinate rows are common; the LP
    // handles everything uniformly.
    p.support(d)
}

/// Nested golden-section minimisation over `[-R, R]^dim`.
fn golden_box(f: &dyn Fn(&[f64]) -> f64, dim: usize, radius: f64, fixed: &mut Vec<f64>) -> (f64, Vec<f64>) {
    const ITERS: usize = 110;
    let g = 0.5 * (5.0_f64.sqrt() - 1.0);
    let eval = |x: f64, fixed: &mut Vec<f64>| -> (f64, Vec<f64>) {
        fixed.push(x);
        let out = if fixed.len() == dim {
            (f(fixed), fixed.clone())
        } else {
            golden_box(f, dim, radius, fixed)
        };
        fixed.pop();
        out
    };
    let (mut a, mut b) = (-radius, radius);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = eval(x1, fixed);
    let mut f2 = eval(x2, fixed);
    for _ in 0..ITERS {
        if f1.0 <= f2.0 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = eval(x1, fixed);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = eval(x2, fixed);
        }
    }
    let ends = [eval(-radius, fixed), eval(radius, fixed)];
    let mut best = if f1.0 <= f2.0 { f1 } else { f2 };
    for e in ends {
        if e.0 < best.0 {
            best = e;
        }
    }
    best
}

const CAPS: [f64; 3] = [1e2, 1e4, 1e6];

/// `inf_y ⟨y,c⟩ + r‖y‖ + δ*_P(w − y)` over growing caps, with the cap/slope
/// test for attainment.
fn ball_poly_inf_convolution(
    c: &Vector,
    r: f64,
    poly: &PolyhedralForm,
    w: &Vector,
    tol: f64,
) -> Result<(f64, bool, Vector), DualityError> {
    let n = w.len();
    if n > 3 {
        return Err(DualityError::Unsupported("ball pair in dimension > 3".into()));
    }
    let chart = poly.chart()?;
    if !chart.polytope.is_bounded() {
        return Err(DualityError::Unsupported("ball paired with an unbounded polyhedron".into()));
    }
    // Bounded and at most 3-D: the support function is a max over vertices.
    let vertices: Vec<Vector> = match chart.polytope.vertices() {
        vs if vs.is_empty() => vec![chart.origin.clone()],
        vs => vs.iter().map(|v| &chart.origin + &chart.basis * v).collect(),
    };
    let phi = |y: &[f64]| {
        let y = Vector::from_column_slice(y);
        let d = w - &y;
        let support = vertices.iter().map(|v| v.dot(&d)).fold(f64::NEG_INFINITY, f64::max);
        y.dot(c) + r * y.norm() + support
    };
    let mut results = Vec::new();
    for &cap in &CAPS {
        let (m, y) = golden_box(&phi, n, cap, &mut Vec::new());
        results.push((m, Vector::from_vec(y), cap));
    }
    let (m_mid, _, _) = &results[1];
    let (m_last, y_last, cap_last) = &results[2];
    let at_cap = y_last.amax() >= 0.5 * cap_last;
    let decreasing = m_mid - m_last > tol * (1.0 + m_last.abs()) || results[0].0 - m_last > tol * (1.0 + m_last.abs());
    let attained = !(at_cap && decreasing);
    // Report the cap-limited value; with attainment pick the bounded minimiser.
    let best = if attained {
        results.iter().min_by(|a, b| a.0.partial_cmp(&b.0).unwrap()).unwrap().clone()
    } else {
        results[2].clone()
    };
    Ok((best.0, attained, best.1))
}

/// Primal value `−δ*_{C₁∩C₂}(v)` and dual value
/// `−inf_y (δ*_{C₁}(y) + δ*_{C₂}(v − y))` with attainment.
pub fn duality_check(
    c1: &ConvexSetDesc,
    c2: &ConvexSetDesc,
    x: &Vector,
    v: &Vector,
    metric: &WeightedMetric,
    tol: f64,
) -> Result<DualityReport, DualityError> {
    let w = metric.apply(v);
    let inter = ConvexSetDesc::Intersection(vec![c1.clone(), c2.clone()]);
    let dist = geometry::distance(&inter, x, metric)?;
    if dist > tol * (1.0 + x.amax()) {
        return Err(DualityError::Precondition(format!("x is {dist:e} away from C₁ ∩ C₂")));
    }
    let support = geometry::support_function(&inter, &w);
    let p_star = -support;
    if w.dot(x) + p_star < -tol * (1.0 + w.norm() * (1.0 + x.norm())) {
        return Err(DualityError::Precondition("v is not in the normal cone of C₁ ∩ C₂ at x".into()));
    }
    let (m, attained, y) = match classify(c1, c2)? {
        Pair::Poly(p1, p2) => {
            let (m, y) = polyhedral_inf_convolution(&p1, &p2, &w);
            (m, y.is_some() && m.is_finite(), y)
        }
        Pair::BallPoly { c, r, poly, ball_first } => {
            let (m, attained, y) = ball_poly_inf_convolution(&c, r, &poly, &w, tol)?;
            let y = if ball_first { y } else { &w - y };
            (m, attained, Some(y))
        }
    };
    let d_star = -m;
    let gap = p_star - d_star;
    let strong = attained && gap.abs() <= tol * (1.0 + p_star.abs());
    Ok(DualityReport {
        p_star,
        d_star,
        attained,
        minimizer: if attained { y.map(|y| metric.apply_inverse(&y)) } else { None },
        gap,
        verdict: if strong {
            DualityVerdict::StrongDuality
        } else {
            DualityVerdict::GapOrNonAttainment
        },
    })
}

/// Splits `v` into normal vectors of `C₁` and `C₂` at `x` if possible.
pub fn additivity_check(
    c1: &ConvexSetDesc,
    c2: &ConvexSetDesc,
    x: &Vector,
    v: &Vector,
    metric: &WeightedMetric,
    tol: f64,
) -> Result<Additivity, DualityError> {
    let w = metric.apply(v);
    let n = x.len();
    let k1 = euclidean_cone(c1, x, tol)?;
    let k2 = euclidean_cone(c2, x, tol)?;
    let g1 = k1.generators.len();
    let l1 = k1.lineality.ncols();
    let g2 = k2.generators.len();
    let l2 = k2.lineality.ncols();
    let base = g1 + l1 + g2 + l2;
    let nv = base + 2 * n;
    let mut lp = LinearProgram::new(nv);
    for k in 0..l1 {
        lp.kinds[g1 + k] = VarKind::Free;
    }
    for k in 0..l2 {
        lp.kinds[g1 + l1 + g2 + k] = VarKind::Free;
    }
    for i in 0..2 * n {
        lp.objective[base + i] = 1.0;
    }
    for i in 0..n {
        let mut row = vec![0.0; nv];
        for (k, g) in k1.generators.iter().enumerate() {
            row[k] = g[i];
        }
        for k in 0..l1 {
            row[g1 + k] = k1.lineality[(i, k)];
        }
        for (k, g) in k2.generators.iter().enumerate() {
            row[g1 + l1 + k] = g[i];
        }
        for k in 0..l2 {
            row[g1 + l1 + g2 + k] = k2.lineality[(i, k)];
        }
        row[base + 2 * i] = 1.0;
        row[base + 2 * i + 1] = -1.0;
        lp.add(row, Relation::Eq, w[i]);
    }
    let LpOutcome::Optimal { x: sol, value } = lp.solve() else {
        unreachable!("residual variables keep the split LP feasible and bounded");
    };
    let holds = value <= tol * (1.0 + w.norm());
    let mut n1 = Vector::zeros(n);
    for (k, g) in k1.generators.iter().enumerate() {
        n1 += g * sol[k];
    }
    for k in 0..l1 {
        n1 += k1.lineality.column(k) * sol[g1 + k];
    }
    let mut n2 = Vector::zeros(n);
    for (k, g) in k2.generators.iter().enumerate() {
        n2 += g * sol[g1 + l1 + k];
    }
    for k in 0..l2 {
        n2 += k2.lineality.column(k) * sol[g1 + l1 + g2 + k];
    }
    Ok(Additivity {
        holds,
        parts: holds.then(|| (metric.apply_inverse(&n1), metric.apply_inverse(&n2))),
        residual: value,
    })
}

/// Largest M-ball radius around a point of `a` that fits inside `b`.
fn inscribed_margin(a: &PolyhedralForm, b: &PolyhedralForm, metric: &WeightedMetric) -> Option<f64> {
    if b.a_eq.nrows() > 0 {
        // A proper affine constraint leaves no interior.
        return Some(0.0);
    }
    let n = a.dim();
    let minv = metric.inverse();
    let mut lp = LinearProgram::new(n + 1);
    lp.kinds = vec![VarKind::Free; n + 1];
    lp.objective[n] = -1.0;
    for i in 0..a.a_in.nrows() {
        let mut row: Vec<f64> = a.a_in.row(i).iter().copied().collect();
        row.push(0.0);
        lp.add(row, Relation::Le, a.b_in[i]);
    }
    for i in 0..a.a_eq.nrows() {
        let mut row: Vec<f64> = a.a_eq.row(i).iter().copied().collect();
        row.push(0.0);
        lp.add(row, Relation::Eq, a.b_eq[i]);
    }
    for i in 0..b.a_in.nrows() {
        let ai = b.a_in.row(i).transpose();
        let dual = (ai.transpose() * &minv * &ai)[(0, 0)].max(0.0).sqrt();
        let mut row: Vec<f64> = ai.iter().copied().collect();
        row.push(dual);
        lp.add(row, Relation::Le, b.b_in[i]);
    }
    let mut cap = vec![0.0; n + 1];
    cap[n] = 1.0;
    lp.add(cap, Relation::Le, 1e12);
    match lp.solve() {
        LpOutcome::Optimal { value, .. } => Some(-value),
        LpOutcome::Unbounded => Some(f64::INFINITY),
        LpOutcome::Infeasible { .. } => None,
    }
}

fn unit_directions(n: usize, extra: &[Vector]) -> Vec<Vector> {
    let mut out: Vec<Vector> = Vec::new();
    let count = 64 * n;
    if n == 1 {
        out.push(Vector::from_element(1, 1.0));
        out.push(Vector::from_element(1, -1.0));
    } else if n == 2 {
        for k in 0..count {
            let a = std::f64::consts::TAU * k as f64 / count as f64;
            out.push(Vector::from_column_slice(&[a.cos(), a.sin()]));
        }
    } else {
        // Fibonacci-style spread on the first three coordinates, then axes.
        let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
        for k in 0..count {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let rad = (1.0 - z * z).sqrt();
            let a = golden * k as f64;
            let mut d = Vector::zeros(n);
            d[0] = rad * a.cos();
            d[1] = rad * a.sin();
            d[2] = z;
            out.push(d);
        }
    }
    for i in 0..n {
        for s in [-1.0, 1.0] {
            let mut d = Vector::zeros(n);
            d[i] = s;
            out.push(d);
        }
    }
    for e in extra {
        let nrm = e.norm();
        if nrm > 0.0 {
            out.push(e / nrm);
            out.push(-e / nrm);
        }
    }
    out
}

fn face_normals(p: &PolyhedralForm) -> Vec<Vector> {
    (0..p.a_in.nrows())
        .map(|i| p.a_in.row(i).transpose())
        .chain((0..p.a_eq.nrows()).map(|i| p.a_eq.row(i).transpose()))
        .collect()
}

/// `min δ*_{C₁}(d) + δ*_{C₂}(−d)` over the faces `d_i = ±1, ‖d‖∞ ≤ 1`.
fn difference_support_min(p1: &PolyhedralForm, p2: &PolyhedralForm) -> f64 {
    let n = p1.dim();
    let b1 = DualBlock { poly: p1, offset: 0 };
    let b2 = DualBlock {
        poly: p2,
        offset: b1.width(),
    };
    let dcol = b1.width() + b2.width();
    let nv = dcol + n;
    let mut best = f64::INFINITY;
    for i in 0..n {
        for s in [-1.0, 1.0] {
            let mut lp = LinearProgram::new(nv);
            b1.kinds(&mut lp.kinds);
            b2.kinds(&mut lp.kinds);
            for k in 0..n {
                lp.kinds[dcol + k] = VarKind::Free;
            }
            b1.cost(&mut lp.objective);
            b2.cost(&mut lp.objective);
            for r in 0..n {
                let mut row = vec![0.0; nv];
                b1.image_row(r, 1.0, &mut row);
                row[dcol + r] = -1.0;
                lp.add(row, Relation::Eq, 0.0);
                let mut row = vec![0.0; nv];
                b2.image_row(r, 1.0, &mut row);
                row[dcol + r] = 1.0;
                lp.add(row, Relation::Eq, 0.0);
                let mut bound = vec![0.0; nv];
                bound[dcol + r] = 1.0;
                if r == i {
                    lp.add(bound, Relation::Eq, s);
                } else {
                    lp.add(bound.clone(), Relation::Le, 1.0);
                    lp.add(bound, Relation::Ge, -1.0);
                }
            }
            match lp.solve() {
                LpOutcome::Optimal { value, .. } => best = best.min(value),
                LpOutcome::Unbounded => return f64::NEG_INFINITY,
                LpOutcome::Infeasible { .. } => {}
            }
        }
    }
    best
}

/// Largest `s ∈ [0, 1]` with `s·d ∈ P₁ − P₂`, or `None` if none.
fn ray_reach(p1: &PolyhedralForm, p2: &PolyhedralForm, d: &Vector) -> Option<f64> {
    let n = d.len();
    let nv = 2 * n + 1;
    let mut lp = LinearProgram::new(nv);
    lp.kinds = vec![VarKind::Free; nv];
    lp.kinds[2 * n] = VarKind::NonNegative;
    lp.objective[2 * n] = -1.0;
    let add_poly = |lp: &mut LinearProgram, p: &PolyhedralForm, off: usize| {
        for i in 0..p.a_in.nrows() {
            let mut row = vec![0.0; nv];
            for k in 0..n {
                row[off + k] = p.a_in[(i, k)];
            }
            lp.add(row, Relation::Le, p.b_in[i]);
        }
        for i in 0..p.a_eq.nrows() {
            let mut row = vec![0.0; nv];
            for k in 0..n {
                row[off + k] = p.a_eq[(i, k)];
            }
            lp.add(row, Relation::Eq, p.b_eq[i]);
        }
    };
    add_poly(&mut lp, p1, 0);
    add_poly(&mut lp, p2, n);
    for k in 0..n {
        let mut row = vec![0.0; nv];
        row[k] = 1.0;
        row[n + k] = -1.0;
        row[2 * n] = -d[k];
        lp.add(row, Relation::Eq, 0.0);
    }
    let mut cap = vec![0.0; nv];
    cap[2 * n] = 1.0;
    lp.add(cap, Relation::Le, 1.0);
    match lp.solve() {
        LpOutcome::Optimal { value, .. } => Some(-value),
        _ => None,
    }
}

/// Direction space of the affine hull: equalities plus implicit equalities.
fn affine_directions(p: &PolyhedralForm, tol: f64) -> Matrix {
    let n = p.dim();
    let mut rows: Vec<Vector> = (0..p.a_eq.nrows()).map(|i| p.a_eq.row(i).transpose()).collect();
    for i in 0..p.a_in.nrows() {
        let a = p.a_in.row(i).transpose();
        // Smallest value of a·z over P; equal to b_i ⇒ implicit equality.
        let lo = -p.support(&(-&a));
        if (p.b_in[i] - lo).abs() <= tol * (1.0 + p.b_in[i].abs()) {
            rows.push(a);
        }
    }
    if rows.is_empty() {
        return Matrix::identity(n, n);
    }
    null_space(&Matrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn zero_in_difference(p1: &PolyhedralForm, p2: &PolyhedralForm) -> bool {
    let n = p1.dim();
    ray_reach(p1, p2, &Vector::zeros(n)).is_some()
}

fn cq_polyhedral(p1: &PolyhedralForm, p2: &PolyhedralForm, metric: &WeightedMetric, tol: f64) -> CqVerdict {
    let n = p1.dim();
    // Slater I in either order: C₁ ∩ int C₂ or C₂ ∩ int C₁.
    let m12 = inscribed_margin(p1, p2, metric);
    let m21 = inscribed_margin(p2, p1, metric);
    let margin = m12.unwrap_or(f64::NEG_INFINITY).max(m21.unwrap_or(f64::NEG_INFINITY));
    let slater1 = if margin > tol {
        cq(CqOutcome::Holds, format!("inscribed margin {margin:.6e}"))
    } else {
        cq(CqOutcome::Fails, format!("inscribed margin {margin:.6e}"))
    };
    let rho = difference_support_min(p1, p2);
    let slater2 = if rho > tol {
        cq(CqOutcome::Holds, format!("min support of C₁−C₂ on the cube {rho:.6e}"))
    } else {
        cq(CqOutcome::Fails, format!("min support of C₁−C₂ on the cube {rho:.6e}"))
    };
    let has_zero = zero_in_difference(p1, p2);
    let rockafellar = if !has_zero {
        cq(CqOutcome::Fails, "C₁ ∩ C₂ is empty")
    } else {
        let mut worst: Option<(f64, Vector)> = None;
        for i in 0..n {
            for s in [-1.0, 1.0] {
                let mut d = Vector::zeros(n);
                d[i] = s;
                let reach = ray_reach(p1, p2, &d).unwrap_or(0.0);
                if worst.as_ref().is_none_or(|w| reach < w.0) {
                    worst = Some((reach, d));
                }
            }
        }
        match worst {
            Some((r, d)) if r <= tol => cq(CqOutcome::Fails, format!("direction {:?} not in the cone", d.as_slice())),
            _ => cq(CqOutcome::Holds, "every ±eᵢ lies in cone(C₁−C₂)"),
        }
    };
    let attouch_brezis = if !has_zero {
        cq(CqOutcome::Fails, "C₁ ∩ C₂ is empty")
    } else {
        let d1 = affine_directions(p1, 1e-9);
        let d2 = affine_directions(p2, 1e-9);
        let mut cols: Vec<Vector> = d1.column_iter().map(|c| c.into_owned()).collect();
        cols.extend(d2.column_iter().map(|c| c.into_owned()));
        let span = if cols.is_empty() {
            Matrix::zeros(n, 0)
        } else {
            range_basis(&Matrix::from_columns(&cols))
        };
        let mut ok = true;
        let mut bad = String::new();
        'outer: for l in span.column_iter() {
            for s in [-1.0, 1.0] {
                let d = l.into_owned() * s;
                if ray_reach(p1, p2, &d).unwrap_or(0.0) <= tol {
                    ok = false;
                    bad = format!("{:?}", d.as_slice());
                    break 'outer;
                }
            }
        }
        if ok {
            cq(CqOutcome::Holds, format!("cone(C₁−C₂) is a {}-dimensional subspace", span.ncols()))
        } else {
            cq(CqOutcome::Fails, format!("cone misses {bad} of its span"))
        }
    };
    CqVerdict {
        slater1,
        slater2,
        rockafellar,
        attouch_brezis,
    }
}

/// `δ*_{K}(d)` for `K = C₁ − C₂` with a ball and a polyhedron.
fn ball_poly_diff_support(c: &Vector, r: f64, poly: &PolyhedralForm, ball_first: bool, d: &Vector) -> f64 {
    let ball = |d: &Vector| d.dot(c) + r * d.norm();
    if ball_first {
        ball(d) + poly_support(poly, &(-d))
    } else {
        poly_support(poly, d) + ball(&(-d))
    }
}

fn cq_ball_poly(c: &Vector, r: f64, poly: &PolyhedralForm, ball_first: bool, tol: f64) -> Result<CqVerdict, DualityError> {
    let n = c.len();
    let id = WeightedMetric::identity(n);
    let chart = poly.chart();
    let (dist, nonempty) = match &chart {
        Ok(ch) => match ch.project(c, &id) {
            Ok(p) => ((&p - c).norm(), true),
            Err(_) => (f64::INFINITY, false),
        },
        Err(_) => (f64::INFINITY, false),
    };
    let poly_interior = inscribed_margin(poly, poly, &id).is_some_and(|m| m > tol);
    // P ∩ int B needs dist < r; B ∩ int P additionally needs int P ≠ ∅.
    let slater1 = if nonempty && dist < r - tol * (1.0 + r) {
        cq(CqOutcome::Holds, format!("dist(centre, P) = {dist:.6e} < r"))
    } else {
        cq(
            CqOutcome::Fails,
            format!("dist(centre, P) = {dist:.6e}, r = {r}, int P nonempty: {poly_interior}"),
        )
    };
    let dirs = unit_directions(n, &face_normals(poly));
    let supp = |d: &Vector| ball_poly_diff_support(c, r, poly, ball_first, d);
    let (rho, arg) = dirs
        .iter()
        .map(|d| (supp(d), d.clone()))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .unwrap();
    let slater2 = if rho > tol {
        cq(CqOutcome::Holds, format!("sampled min support {rho:.6e}"))
    } else {
        cq(CqOutcome::Fails, format!("support {rho:.6e} ≤ 0 along {:?}", arg.as_slice()))
    };
    // s·d ∈ K ⇔ dist(c ∓ s d, P) ≤ r; the sublevel set is an interval at 0.
    let reach = |d: &Vector| -> f64 {
        let Ok(ch) = &chart else { return 0.0 };
        let sign = if ball_first { -1.0 } else { 1.0 };
        let f = |s: f64| {
            let q = c + d * (sign * s);
            ch.project(&q, &id).map_or(f64::INFINITY, |p| (p - q).norm())
        };
        let thresh = r * (1.0 + 1e-12) + 1e-15;
        if f(1.0) <= thresh {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(mid) <= thresh {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let rockafellar = if !(nonempty && dist <= r * (1.0 + 1e-12)) {
        cq(CqOutcome::Fails, "C₁ ∩ C₂ is empty")
    } else {
        let mut fail = None;
        for i in 0..n {
            for s in [-1.0, 1.0] {
                let mut d = Vector::zeros(n);
                d[i] = s;
                if reach(&d) <= 1e-6 {
                    fail = Some(d);
                }
            }
        }
        match fail {
            Some(d) => cq(CqOutcome::Fails, format!("direction {:?} not in the cone", d.as_slice())),
            None => cq(CqOutcome::Holds, "every ±eᵢ lies in cone(C₁−C₂)"),
        }
    };
    // The cone is not a subspace if some w supports it with value ≤ 0 while
    // −w does not.
    let attouch_brezis = if rockafellar.outcome == CqOutcome::Holds {
        cq(CqOutcome::Holds, "implied by Rockafellar's condition")
    } else if !(nonempty && dist <= r * (1.0 + 1e-12)) {
        cq(CqOutcome::Fails, "C₁ ∩ C₂ is empty")
    } else {
        let witness = dirs.iter().find(|w| supp(w) <= tol && supp(&(-*w)) > tol);
        match witness {
            Some(w) => cq(CqOutcome::Fails, format!("cone lies in a half-space with normal {:?}", w.as_slice())),
            None => cq(CqOutcome::Undecided, "closedness of a non-polyhedral cone is not decided by sampling"),
        }
    };
    Ok(CqVerdict {
        slater1,
        slater2,
        rockafellar,
        attouch_brezis,
    })
}

pub fn cq_test(
    c1: &ConvexSetDesc,
    c2: &ConvexSetDesc,
    metric: &WeightedMetric,
    tol: f64,
) -> Result<CqVerdict, DualityError> {
    match classify(c1, c2)? {
        Pair::Poly(p1, p2) => Ok(cq_polyhedral(&p1, &p2, metric, tol)),
        Pair::BallPoly { c, r, poly, ball_first } => cq_ball_poly(&c, r, &poly, ball_first, tol),
    }
}

/// Sampled yield curve `σ ↦ ξ`, linear in between and beyond the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldCurve {
    pub sigma: Vec<f64>,
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

impl YieldCurve {
    pub fn new(sigma: Vec<f64>, xi: Vec<f64>) -> Result<Self, DualityError> {
        if sigma.len() < 2 || sigma.len() != xi.len() {
            return Err(DualityError::MalformedCurve("need at least two matching samples".into()));
        }
        if sigma.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DualityError::MalformedCurve("σ samples must increase".into()));
        }
        let c = Self { sigma, xi };
        c.monotonicity()?;
        Ok(c)
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.sigma
            .windows(2)
            .zip(self.xi.windows(2))
            .map(|(s, x)| (x[1] - x[0]) / (s[1] - s[0]))
            .collect()
    }

    pub fn monotonicity(&self) -> Result<Monotonicity, DualityError> {
        let s = self.slopes();
        if s.iter().all(|&k| k > 0.0) {
            Ok(Monotonicity::Increasing)
        } else if s.iter().all(|&k| k < 0.0) {
            Ok(Monotonicity::Decreasing)
        } else {
            Err(DualityError::MalformedCurve("curve is not strictly monotone".into()))
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let n = self.sigma.len();
        let k = if s <= self.sigma[0] {
            0
        } else if s >= self.sigma[n - 1] {
            n - 2
        } else {
            self.sigma.partition_point(|&v| v <= s) - 1
        };
        let slope = (self.xi[k + 1] - self.xi[k]) / (self.sigma[k + 1] - self.sigma[k]);
        self.xi[k] + slope * (s - self.sigma[k])
    }

    /// Affine pieces `ξ = a σ + b` of the interpolant.
    pub fn pieces(&self) -> Vec<(f64, f64)> {
        self.slopes()
            .into_iter()
            .enumerate()
            .map(|(k, a)| (a, self.xi[k] - a * self.sigma[k]))
            .collect()
    }

    /// Convex curves are the maximum of their pieces.
    pub fn is_convex(&self) -> bool {
        self.slopes().windows(2).all(|w| w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthCheck {
    pub holds: bool,
    /// `(curve index, sample index)` of the first violation.
    pub violation: Option<(usize, usize)>,
}

/// `|ξ(σ)| ≤ ψ + c|σ|` at every sample and end slopes `≤ c`.
pub fn hardening_growth_check(curves: &[YieldCurve], psi: f64, c: f64) -> Result<GrowthCheck, DualityError> {
    for (ci, curve) in curves.iter().enumerate() {
        curve.monotonicity()?;
        for (si, (s, x)) in curve.sigma.iter().zip(&curve.xi).enumerate() {
            if x.abs() > psi + c * s.abs() + 1e-12 * (1.0 + x.abs()) {
                return Ok(GrowthCheck {
                    holds: false,
                    violation: Some((ci, si)),
                });
            }
        }
        let slopes = curve.slopes();
        let ends = [slopes[0], *slopes.last().unwrap()];
        if ends.iter().any(|k| k.abs() > c * (1.0 + 1e-12)) {
            let at = if ends[0].abs() > c { 0 } else { curve.sigma.len() - 1 };
            return Ok(GrowthCheck {
                holds: false,
                violation: Some((ci, at)),
            });
        }
    }
    Ok(GrowthCheck {
        holds: true,
        violation: None,
    })
}
