//! Spring networks and the discretised bar in the constraint-based frame:
//! fundamental subspaces `U`, `V` and the elastic stress `σ̃ = G g + Q f`.

use crate::linalg::{
    null_space, operator_norm, pinv, range_basis, weighted_complement, weighted_projector, LinalgError, Matrix,
    Vector, WeightedMetric,
};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElasticError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("force is not resolvable (residual {residual:e})")]
    UnresolvableLoad { residual: f64 },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Which quantity the constraint rows act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `R u = d(t)`.
    Displacement,
    /// `R ε = R E u = d(t)`.
    Elongation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    /// `E`: elongations per unit nodal displacement (elements × nodes).
    pub kinematic: Matrix,
    pub constraint: Matrix,
    pub kind: ConstraintKind,
    pub stiffness: Vec<f64>,
}

impl NetworkModel {
    pub fn new(
        kinematic: Matrix,
        constraint: Matrix,
        kind: ConstraintKind,
        stiffness: Vec<f64>,
    ) -> Result<Self, ElasticError> {
        if stiffness.len() != kinematic.nrows() {
            return Err(LinalgError::Dimension {
                expected: kinematic.nrows(),
                found: stiffness.len(),
            }
            .into());
        }
        if stiffness.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
            return Err(ElasticError::Invalid("stiffness must be positive".into()));
        }
        let cols = match kind {
            ConstraintKind::Displacement => kinematic.ncols(),
            ConstraintKind::Elongation => kinematic.nrows(),
        };
        if constraint.ncols() != cols {
            return Err(LinalgError::Dimension {
                expected: cols,
                found: constraint.ncols(),
            }
            .into());
        }
        let model = Self {
            kinematic,
            constraint,
            kind,
            stiffness,
        };
        let a = model.constraint_operator();
        let rank = crate::linalg::rank(&a);
        if rank < a.nrows() {
            return Err(LinalgError::Rank { rank, cols: a.nrows() }.into());
        }
        Ok(model)
    }

    pub fn elements(&self) -> usize {
        self.kinematic.nrows()
    }

    pub fn nodes(&self) -> usize {
        self.kinematic.ncols()
    }

    /// Constraint expressed on displacements.
    pub fn constraint_operator(&self) -> Matrix {
        match self.kind {
            ConstraintKind::Displacement => self.constraint.clone(),
            ConstraintKind::Elongation => &self.constraint * &self.kinematic,
        }
    }

    /// `diag(1/k)`.
    pub fn metric(&self) -> WeightedMetric {
        WeightedMetric::from_stiffness(&self.stiffness).expect("stiffness validated at construction")
    }

    /// Two springs in series between nodes 1 and 3, total length prescribed.
    pub fn two_springs(k1: f64, k2: f64) -> Result<Self, ElasticError> {
        let e = Matrix::from_row_slice(2, 3, &[-1., 1., 0., 0., -1., 1.]);
        let r = Matrix::from_row_slice(2, 3, &[1., 0., 0., 0., 0., 1.]);
        Self::new(e, r, ConstraintKind::Displacement, vec![k1, k2])
    }

    /// Three springs in series with `ε₁+ε₂` and `ε₂+ε₃` prescribed.
    pub fn three_springs(k1: f64, k2: f64, k3: f64) -> Result<Self, ElasticError> {
        let e = Matrix::from_row_slice(3, 4, &[-1., 1., 0., 0., 0., -1., 1., 0., 0., 0., -1., 1.]);
        let r = Matrix::from_row_slice(2, 3, &[1., 1., 0., 0., 1., 1.]);
        Self::new(e, r, ConstraintKind::Elongation, vec![k1, k2, k3])
    }

    /// Chain of `stiffness.len()` springs, both ends constrained.
    pub fn chain(stiffness: Vec<f64>) -> Result<Self, ElasticError> {
        let m = stiffness.len();
        let e = Matrix::from_fn(m, m + 1, |j, i| {
            if i == j {
                -1.0
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        let mut r = Matrix::zeros(2, m + 1);
        r[(0, 0)] = 1.0;
        r[(1, m)] = 1.0;
        Self::new(e, r, ConstraintKind::Displacement, stiffness)
    }
}

/// The bar `(a, b)` cut into `n` equal elements, data sampled at midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct RodSpec {
    pub a: f64,
    pub b: f64,
    pub stiffness: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl RodSpec {
    pub fn from_fn(
        a: f64,
        b: f64,
        n: usize,
        stiffness: impl Fn(f64) -> f64,
        lower: impl Fn(f64) -> f64,
        upper: impl Fn(f64) -> f64,
    ) -> Result<Self, ElasticError> {
        if n == 0 || !(b > a) {
            return Err(ElasticError::Invalid("rod needs a < b and at least one element".into()));
        }
        let h = (b - a) / n as f64;
        let mids: Vec<f64> = (0..n).map(|j| a + (j as f64 + 0.5) * h).collect();
        let spec = Self {
            a,
            b,
            stiffness: mids.iter().map(|&x| stiffness(x)).collect(),
            lower: mids.iter().map(|&x| lower(x)).collect(),
            upper: mids.iter().map(|&x| upper(x)).collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ElasticError> {
        if self.stiffness.iter().any(|c| !(*c > 0.0)) {
            return Err(ElasticError::Invalid("rod stiffness must be positive".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(*l < 0.0 && 0.0 < *u)) {
            return Err(ElasticError::Invalid("yield limits must satisfy σ⁻ < 0 < σ⁺".into()));
        }
        Ok(())
    }

    pub fn elements(&self) -> usize {
        self.stiffness.len()
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.elements() as f64
    }

    pub fn midpoints(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.elements()).map(|j| self.a + (j as f64 + 0.5) * h).collect()
    }

    /// Nodal loads from a body-force density: each element passes half of
    /// `h·F(midpoint)` to either end node.
    pub fn nodal_forces(&self, force: impl Fn(f64) -> f64) -> Vector {
        let n = self.elements();
        let h = self.h();
        let mut out = Vector::zeros(n + 1);
        for (j, x) in self.midpoints().into_iter().enumerate() {
            let share = 0.5 * h * force(x);
            out[j] += share;
            out[j + 1] += share;
        }
        out
    }
}

/// Series chain with element stiffness `C(x_j)/h`.
pub fn assemble_rod(spec: &RodSpec) -> Result<NetworkModel, ElasticError> {
    spec.validate()?;
    let h = spec.h();
    NetworkModel::chain(spec.stiffness.iter().map(|c| c / h).collect())
}

/// Piecewise-linear load data: constraint values `d(t)` (so that
/// `A u = d(t)`) and nodal forces `F(t)` at strictly increasing breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProgram {
    pub times: Vec<f64>,
    pub prescribed: Vec<Vector>,
    pub forces: Vec<Vector>,
}

impl LoadProgram {
    pub fn new(times: Vec<f64>, prescribed: Vec<Vector>, forces: Vec<Vector>) -> Result<Self, ElasticError> {
        if times.is_empty() || times.len() != prescribed.len() || times.len() != forces.len() {
            return Err(ElasticError::Invalid("breakpoint tables have inconsistent lengths".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(ElasticError::Invalid("breakpoints must be strictly increasing".into()));
        }
        Ok(Self {
            times,
            prescribed,
            forces,
        })
    }

    /// Loads frozen at one value.
    pub fn constant(prescribed: Vector, forces: Vector) -> Self {
        Self {
            times: vec![0.0],
            prescribed: vec![prescribed],
            forces: vec![forces],
        }
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Segment index and weight for linear interpolation, clamped at the ends.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 2, 1.0);
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (k, w)
    }

    fn lerp(values: &[Vector], k: usize, w: f64) -> Vector {
        if values.len() == 1 {
            return values[0].clone();
        }
        &values[k] * (1.0 - w) + &values[k + 1] * w
    }

    pub fn prescribed_at(&self, t: f64) -> Vector {
        let (k, w) = self.locate(t);
        Self::lerp(&self.prescribed, k, w)
    }

    pub fn forces_at(&self, t: f64) -> Vector {
        let (k, w) = self.locate(t);
        Self::lerp(&self.forces, k, w)
    }

    /// Largest slope over all segments, per driver.
    pub fn lipschitz(&self) -> (f64, f64) {
        let mut lg = 0.0_f64;
        let mut lf = 0.0_f64;
        for k in 0..self.times.len().saturating_sub(1) {
            let dt = self.times[k + 1] - self.times[k];
            lg = lg.max((&self.prescribed[k + 1] - &self.prescribed[k]).norm() / dt);
            lf = lf.max((&self.forces[k + 1] - &self.forces[k]).norm() / dt);
        }
        (lg, lf)
    }
}

#[derive(Debug, Clone)]
pub struct FundamentalDecomposition {
    pub metric: WeightedMetric,
    pub stiffness: Vec<f64>,
    pub basis_u: Matrix,
    pub basis_v: Matrix,
    pub p_u: Matrix,
    pub p_v: Matrix,
    /// Maps prescribed values `d` to `G g = P_V C E A⁺ d`.
    pub g_map: Matrix,
    /// Maps nodal forces `F` to `Q f` with `f = R₀ᵀ F`.
    pub q_map: Matrix,
    /// Free displacement directions `R₀` (columns span `Ker A`).
    pub free_basis: Matrix,
    /// Mechanisms: `Ker(E R₀)` in `R₀` coordinates.
    pub mechanisms: Matrix,
    pub constraint_rank: usize,
}

pub fn assemble_network(model: &NetworkModel) -> Result<FundamentalDecomposition, ElasticError> {
    let metric = model.metric();
    let m = model.elements();
    let a = model.constraint_operator();
    let r0 = null_space(&a);
    let e = &model.kinematic;
    let c = Matrix::from_diagonal(&Vector::from_column_slice(&model.stiffness));
    let er0 = e * &r0;
    let basis_u = range_basis(&(&c * &er0));
    let basis_v = if basis_u.ncols() == 0 {
        Matrix::identity(m, m)
    } else {
        weighted_complement(&basis_u, &metric)
    };
    let p_u = if basis_u.ncols() == 0 {
        Matrix::zeros(m, m)
    } else {
        weighted_projector(&basis_u, &metric)?
    };
    let p_v = Matrix::identity(m, m) - &p_u;
    let g_map = &p_v * &c * e * pinv(&a);
    // Q f = C E R₀ w with (E R₀)ᵀ C (E R₀) w = f.
    let k_red = er0.transpose() * &c * &er0;
    let q_map = &c * &er0 * pinv(&k_red) * r0.transpose();
    let mechanisms = null_space(&er0);
    Ok(FundamentalDecomposition {
        metric,
        stiffness: model.stiffness.clone(),
        basis_u,
        basis_v,
        p_u,
        p_v,
        g_map,
        q_map,
        free_basis: r0,
        mechanisms,
        constraint_rank: a.nrows(),
    })
}

impl FundamentalDecomposition {
    pub fn elements(&self) -> usize {
        self.p_u.nrows()
    }

    /// `f = R₀ᵀ F`; resolvable iff orthogonal to every mechanism.
    pub fn check_resolvable(&self, forces: &Vector) -> Result<(), ElasticError> {
        if self.mechanisms.ncols() == 0 {
            return Ok(());
        }
        let f = self.free_basis.transpose() * forces;
        let residual = (self.mechanisms.transpose() * &f).amax();
        if residual > 1e-10 * (1.0 + forces.amax()) {
            return Err(ElasticError::UnresolvableLoad { residual });
        }
        Ok(())
    }

    pub fn stress(&self, prescribed: &Vector, forces: &Vector) -> Result<Vector, ElasticError> {
        self.check_resolvable(forces)?;
        Ok(&self.g_map * prescribed + &self.q_map * forces)
    }

    /// Upper bound on the time-Lipschitz constant of `σ̃`.
    pub fn lipschitz_bound(&self, loads: &LoadProgram) -> f64 {
        let (lg, lf) = loads.lipschitz();
        operator_norm(&self.g_map) * lg + operator_norm(&self.q_map) * lf
    }
}

pub fn elastic_stress(dec: &FundamentalDecomposition, loads: &LoadProgram, t: f64) -> Result<Vector, ElasticError> {
    dec.stress(&loads.prescribed_at(t), &loads.forces_at(t))
}

/// `ε̃ = C⁻¹ σ̃`.
pub fn elastic_strain(stiffness: &[f64], stress: &Vector) -> Vector {
    Vector::from_iterator(stress.len(), stress.iter().zip(stiffness).map(|(s, k)| s / k))
}

/// `σ̃` at the load breakpoints; exact in between by linearity.
#[derive(Debug, Clone)]
pub struct ElasticPath {
    pub times: Vec<f64>,
    pub values: Vec<Vector>,
}

impl ElasticPath {
    pub fn new(dec: &FundamentalDecomposition, loads: &LoadProgram) -> Result<Self, ElasticError> {
        let values = loads
            .times
            .iter()
            .map(|&t| elastic_stress(dec, loads, t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            times: loads.times.clone(),
            values,
        })
    }

    pub fn constant(value: Vector) -> Self {
        Self {
            times: vec![0.0],
            values: vec![value],
        }
    }

    pub fn at(&self, t: f64) -> Vector {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.values[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1].clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        &self.values[k] * (1.0 - w) + &self.values[k + 1] * w
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }
}

/// Continuum bar stress from the integral formula, by composite Simpson
/// quadrature; reference for the discretised chain.
pub fn continuum_rod_stress(
    a: f64,
    b: f64,
    stiffness: impl Fn(f64) -> f64,
    force: impl Fn(f64) -> f64,
    elongation: f64,
    x: f64,
) -> f64 {
    const PANELS: usize = 2000;
    let simpson = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| {
        if hi <= lo {
            return 0.0;
        }
        let h = (hi - lo) / PANELS as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..PANELS {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let compliance = simpson(&|z| 1.0 / stiffness(z), a, b);
    let w0 = 1.0 / compliance;
    let inner = |z: f64| simpson(&|y| force(y), a, z);
    let weighted = simpson(&|z| inner(z) / stiffness(z), a, b);
    w0 * (elongation + weighted) - inner(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn same_span(a: &Matrix, b: &Matrix) -> bool {
        a.ncols() == b.ncols() && crate::linalg::rank(&Matrix::from_columns(&[a.column(0).into_owned(), b.column(0).into_owned()])) == 1
    }

    #[test]
    fn two_spring_subspaces() {
        let dec = assemble_network(&NetworkModel::two_springs(2.0, 5.0).unwrap()).unwrap();
        assert!(same_span(&dec.basis_u, &Matrix::from_column_slice(2, 1, &[2., -5.])));
        assert!(same_span(&dec.basis_v, &Matrix::from_column_slice(2, 1, &[1., 1.])));
    }

    #[test]
    fn three_spring_subspaces() {
        let dec = assemble_network(&NetworkModel::three_springs(1.0, 2.0, 4.0).unwrap()).unwrap();
        assert!(same_span(&dec.basis_u, &Matrix::from_column_slice(3, 1, &[-1., 2., -4.])));
        assert_eq!(dec.basis_v.ncols(), 2);
        let w = v(&[-1., 1., -1.]);
        assert!((dec.basis_v.transpose() * w).amax() < 1e-12);
    }

    #[test]
    fn two_spring_closed_form_values() {
        let dec = assemble_network(&NetworkModel::two_springs(1.0, 1.0).unwrap()).unwrap();
        let s = dec.stress(&v(&[0., 2.]), &Vector::zeros(3)).unwrap();
        assert_relative_eq!(s, v(&[1., 1.]), epsilon = 1e-12);
        let s = dec.stress(&v(&[0., 0.]), &v(&[0., 2., 0.])).unwrap();
        assert_relative_eq!(s, v(&[1., -1.]), epsilon = 1e-12);
    }

    #[test]
    fn three_springs_reject_unbalanced_force() {
        let dec = assemble_network(&NetworkModel::three_springs(1.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(matches!(
            dec.stress(&v(&[0., 0.]), &v(&[1., 0., 0., 0.])),
            Err(ElasticError::UnresolvableLoad { .. })
        ));
        assert!(dec.stress(&v(&[0., 0.]), &v(&[1., -1., 0., 0.])).is_ok());
    }

    #[test]
    fn elastic_strain_divides() {
        assert_relative_eq!(elastic_strain(&[1., 1.], &v(&[1., 1.])), v(&[1., 1.]));
        assert_relative_eq!(elastic_strain(&[2., 4.], &v(&[2., -2.])), v(&[1., -0.5]));
    }

    #[test]
    fn two_element_rod_is_two_springs() {
        let spec = RodSpec::from_fn(-1.0, 1.0, 2, |_| 1.0, |_| -1.0, |_| 1.0).unwrap();
        let model = assemble_rod(&spec).unwrap();
        assert_eq!(model.stiffness, vec![1.0, 1.0]);
        assert_eq!(model, NetworkModel::two_springs(1.0, 1.0).unwrap());
    }

    #[test]
    fn uniform_rod_constant_stress() {
        let spec = RodSpec::from_fn(0.0, 2.0, 8, |_| 3.0, |_| -1.0, |_| 1.0).unwrap();
        let dec = assemble_network(&assemble_rod(&spec).unwrap()).unwrap();
        let s = dec.stress(&v(&[0.1, 0.5]), &Vector::zeros(9)).unwrap();
        // w₀ = 1/∫ C⁻¹ = 3/2.
        for j in 0..8 {
            assert_relative_eq!(s[j], 1.5 * 0.4, epsilon = 1e-12);
        }
        assert_eq!(dec.basis_v.ncols(), 1);
    }

    #[test]
    fn rod_section_data_cell_averages() {
        // C ≡ 1 on (−1, 1), F = 2x, u_b − u_a = 0: σ̃ = 1/3 − x².
        for n in [10, 20, 40] {
            let spec = RodSpec::from_fn(-1.0, 1.0, n, |_| 1.0, |_| -1.0, |_| 1.0).unwrap();
            let dec = assemble_network(&assemble_rod(&spec).unwrap()).unwrap();
            let s = dec.stress(&v(&[0., 0.]), &spec.nodal_forces(|x| 2.0 * x)).unwrap();
            let h = spec.h();
            for (j, x) in spec.midpoints().into_iter().enumerate() {
                // Discrete value is the cell average of 1/3 − x².
                assert_relative_eq!(s[j], 1.0 / 3.0 - x * x - h * h / 12.0, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn continuum_reference_matches_closed_form() {
        for x in [-0.9, 0.0, 0.3] {
            let s = continuum_rod_stress(-1.0, 1.0, |_| 1.0, |y| 2.0 * y, 0.0, x);
            assert_relative_eq!(s, 1.0 / 3.0 - x * x, epsilon = 1e-10);
        }
    }

    #[test]
    fn load_interpolation() {
        let lp = LoadProgram::new(
            vec![0.0, 1.0, 3.0],
            vec![v(&[0.]), v(&[0.]), v(&[2.])],
            vec![v(&[0.]), v(&[1.]), v(&[1.])],
        )
        .unwrap();
        assert_relative_eq!(lp.prescribed_at(2.0)[0], 1.0);
        assert_relative_eq!(lp.forces_at(0.25)[0], 0.25);
        assert_relative_eq!(lp.forces_at(5.0)[0], 1.0);
        assert!(LoadProgram::new(vec![0.0, 0.0], vec![v(&[0.]); 2], vec![v(&[0.]); 2]).is_err());
    }

    #[test]
    fn rejects_dependent_constraints() {
        let e = Matrix::from_row_slice(2, 3, &[-1., 1., 0., 0., -1., 1.]);
        let r = Matrix::from_row_slice(2, 3, &[1., 0., 0., 2., 0., 0.]);
        assert!(matches!(
            NetworkModel::new(e, r, ConstraintKind::Displacement, vec![1., 1.]),
            Err(ElasticError::Linalg(LinalgError::Rank { .. }))
        ));
    }
}
