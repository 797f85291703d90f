//! From a scenario to solved trajectories, strain records, CQ verdicts and
//! refinement studies.

use crate::duality::{cq_test, CqOutcome, CqResult, CqVerdict, DualityError, YieldCurve};
use crate::elastic::{
    assemble_network, assemble_rod, ConstraintKind, ElasticError, ElasticPath, FundamentalDecomposition,
    LoadProgram, NetworkModel, RodSpec,
};
use crate::geometry::ConvexSetDesc;
use crate::hardening::{
    hardened_strain_recovery, hardened_sweep, speed_profile, speed_spikes, HardenedProblem, HardenedTrajectory,
    HardeningError, HardeningSpec,
};
use crate::linalg::{Matrix, Vector, WeightedMetric};
use crate::scenario::{HardeningLaw, Loads, Model, Plasticity, Scenario, ScenarioError};
use crate::strain::{default_initial_strain, recover_strain, StrainError, StrainRecord, StudyReport, StudyRow};
use crate::sweep::{catch_up, lipschitz_estimate, uniform_grid, yield_onset, MovingSetSpec, SweepError, SweepTrajectory};
use rayon::prelude::*;
use thiserror::Error;

pub const THREADS_ENV: &str = "SWEEPPLAST_THREADS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Elastic(#[from] ElasticError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Hardening(#[from] HardeningError),
    #[error(transparent)]
    Duality(#[from] DualityError),
    #[error("regularity lost: {0}")]
    RegularityLost(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl PipelineError {
    /// 2 parse/validation, 3 empty moving set, 4 regularity lost, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Scenario(_) | PipelineError::Elastic(ElasticError::Invalid(_)) => 2,
            PipelineError::Elastic(ElasticError::UnresolvableLoad { .. }) => 2,
            PipelineError::Sweep(SweepError::SafeLoadViolation { .. })
            | PipelineError::Hardening(HardeningError::Sweep(SweepError::SafeLoadViolation { .. })) => 3,
            PipelineError::Sweep(SweepError::Grid(_)) => 2,
            PipelineError::Hardening(HardeningError::Invalid(_) | HardeningError::Curve(_)) => 2,
            PipelineError::RegularityLost(_) => 4,
            _ => 1,
        }
    }
}

/// Everything derived from a scenario before time stepping.
#[derive(Debug, Clone)]
pub struct Setup {
    pub scenario: Scenario,
    pub model: NetworkModel,
    pub dec: FundamentalDecomposition,
    pub loads: LoadProgram,
    pub path: ElasticPath,
    pub lower: Vector,
    pub upper: Vector,
    /// Element midpoints (rods) or indices (networks).
    pub points: Vec<f64>,
    pub h: Option<f64>,
    pub hardening: Option<HardenedProblem>,
}

fn matrix(rows: &[Vec<f64>]) -> Matrix {
    let cols = rows.first().map_or(0, |r| r.len());
    Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

impl Setup {
    pub fn build(scenario: &Scenario) -> Result<Self, PipelineError> {
        scenario.validate()?;
        let points = scenario.sample_points();
        let m = points.len();
        let (lower, upper) = match &scenario.plasticity {
            Plasticity::None => (Vector::from_element(m, f64::NEG_INFINITY), Vector::from_element(m, f64::INFINITY)),
            Plasticity::Perfect { lower, upper } | Plasticity::Hardening { lower, upper } => (
                Vector::from_vec(lower.sample(&points)?),
                Vector::from_vec(upper.sample(&points)?),
            ),
        };
        let Loads {
            times,
            prescribed,
            forces,
            u_a,
            u_b,
            force,
        } = &scenario.loads;
        let (model, loads, h) = match &scenario.model {
            Model::Network {
                kinematic,
                constraint,
                constraint_kind,
                stiffness,
            } => {
                let kind = match constraint_kind {
                    crate::scenario::ConstraintMode::Displacement => ConstraintKind::Displacement,
                    crate::scenario::ConstraintMode::Elongation => ConstraintKind::Elongation,
                };
                let model = NetworkModel::new(matrix(kinematic), matrix(constraint), kind, stiffness.clone())?;
                let d = prescribed.as_ref().expect("validated").iter().map(|r| Vector::from_vec(r.clone()));
                let f = forces.as_ref().expect("validated").iter().map(|r| Vector::from_vec(r.clone()));
                let loads = LoadProgram::new(times.clone(), d.collect(), f.collect())?;
                (model, loads, None)
            }
            Model::Rod {
                domain,
                elements,
                stiffness,
            } => {
                // Yield data only matter for the moving set; the rod spec just
                // needs admissible placeholders when plasticity is off.
                let rod = RodSpec::from_fn(domain[0], domain[1], *elements, |x| stiffness.eval(x), |_| -1.0, |_| 1.0)?;
                let model = assemble_rod(&rod)?;
                let ua = u_a.as_ref().expect("validated");
                let ub = u_b.as_ref().expect("validated");
                let d = ua.iter().zip(ub).map(|(a, b)| Vector::from_vec(vec![*a, *b]));
                let f = force.as_ref().expect("validated").iter().map(|f| rod.nodal_forces(|x| f.eval(x)));
                let loads = LoadProgram::new(times.clone(), d.collect(), f.collect())?;
                (model, loads, Some(rod.h()))
            }
        };
        let dec = assemble_network(&model)?;
        for f in &loads.forces {
            dec.check_resolvable(f)?;
        }
        let path = ElasticPath::new(&dec, &loads)?;
        let hardening = match (&scenario.plasticity, &scenario.hardening) {
            (Plasticity::Hardening { .. }, Some(law)) => {
                let spec = match law {
                    HardeningLaw::Kinematic { modulus } => {
                        HardeningSpec::kinematic(Vector::from_vec(modulus.sample(&points)?), lower.clone(), upper.clone())
                    }
                    HardeningLaw::Isotropic {
                        upper_sigma,
                        upper_xi,
                        lower_sigma,
                        lower_xi,
                    } => {
                        let up = YieldCurve::new(upper_sigma.clone(), upper_xi.clone()).map_err(HardeningError::from)?;
                        let down = YieldCurve::new(lower_sigma.clone(), lower_xi.clone()).map_err(HardeningError::from)?;
                        HardeningSpec::isotropic(vec![up; m], vec![down; m])
                    }
                };
                let weight = Vector::from_element(m, h.unwrap_or(1.0));
                Some(HardenedProblem::new(&dec, spec, path.clone(), weight)?)
            }
            _ => None,
        };
        Ok(Self {
            scenario: scenario.clone(),
            model,
            dec,
            loads,
            path,
            lower,
            upper,
            points,
            h,
            hardening,
        })
    }

    pub fn elements(&self) -> usize {
        self.points.len()
    }

    pub fn moving_set(&self) -> MovingSetSpec {
        MovingSetSpec::new(&self.dec, self.lower.clone(), self.upper.clone(), self.path.clone())
    }

    pub fn grid(&self, dt: Option<f64>, t_end: Option<f64>) -> Result<Vec<f64>, PipelineError> {
        let t1 = t_end.unwrap_or(self.scenario.time.t_end);
        Ok(uniform_grid(self.loads.start(), t1, dt.unwrap_or(self.scenario.time.dt))?)
    }

    pub fn stiffness(&self) -> &[f64] {
        &self.model.stiffness
    }
}

/// Elastic stresses along the grid.
pub fn solve_elastic(setup: &Setup, grid: &[f64]) -> Vec<Vector> {
    grid.iter().map(|&t| setup.path.at(t)).collect()
}

#[derive(Debug, Clone)]
pub enum Solution {
    Perfect(SweepTrajectory),
    Hardened(HardenedTrajectory),
}

impl Solution {
    pub fn sweep(&self) -> &SweepTrajectory {
        match self {
            Solution::Perfect(t) => t,
            Solution::Hardened(h) => &h.sweep,
        }
    }

    pub fn xi(&self) -> Option<&[Vector]> {
        match self {
            Solution::Perfect(_) => None,
            Solution::Hardened(h) => Some(&h.xi),
        }
    }
}

/// Sweeping solve from the admissible state nearest to `y = 0`.
pub fn solve_sweeping(setup: &Setup, grid: &[f64]) -> Result<Solution, PipelineError> {
    let m = setup.elements();
    if let Some(problem) = &setup.hardening {
        let q = problem.chart_dim();
        let (z0, _) = problem.project(grid[0], &Vector::zeros(q + m))?;
        let y0 = &problem.basis_v * z0.rows(0, q);
        let xi0 = z0.rows(q, m).into_owned();
        return Ok(Solution::Hardened(hardened_sweep(problem, grid, &y0, &xi0)?));
    }
    let spec = setup.moving_set();
    let (c0, _) = spec.project_chart(grid[0], &Vector::zeros(spec.chart_dim()))?;
    let y0 = spec.from_chart(&c0);
    Ok(Solution::Perfect(catch_up(&spec, &y0, grid)?))
}

pub fn recover(setup: &Setup, solution: &Solution) -> Result<StrainRecord, PipelineError> {
    let sweep = solution.sweep();
    let eps0 = default_initial_strain(setup.stiffness(), &sweep.elastic[0]);
    match solution {
        Solution::Perfect(traj) => {
            recover_strain(traj, &setup.dec.basis_v, &setup.dec.metric, setup.stiffness(), &eps0).map_err(|e| match e {
                StrainError::Infeasible { time, .. } => {
                    PipelineError::RegularityLost(format!("strain-rate inclusion has no solution at t = {time}"))
                }
                StrainError::InitialStrain { residual } => {
                    PipelineError::RegularityLost(format!("incompatible initial strain ({residual:e})"))
                }
            })
        }
        Solution::Hardened(traj) => {
            let problem = setup.hardening.as_ref().expect("hardened solution has a problem");
            Ok(hardened_strain_recovery(traj, problem, &eps0)?)
        }
    }
}

/// Onset of plastic flow on the grid, refined by bisection.
pub fn onset(setup: &Setup, solution: &Solution, tol: f64) -> Option<f64> {
    match solution {
        Solution::Perfect(traj) => yield_onset(&setup.moving_set(), traj, tol),
        Solution::Hardened(h) => {
            let problem = setup.hardening.as_ref()?;
            let traj = &h.sweep;
            let k = traj.first_motion(1e-13 * (1.0 + traj.y[0].amax()))?;
            if k == 0 {
                return Some(traj.times[0]);
            }
            let q = problem.chart_dim();
            let mut held = Vector::zeros(q + problem.elements());
            held.rows_mut(0, q).copy_from(&traj.coords[k - 1]);
            held.rows_mut(q, problem.elements()).copy_from(&h.xi[k - 1]);
            let (mut a, mut b) = (traj.times[k - 1], traj.times[k]);
            while b - a > tol {
                let mid = 0.5 * (a + b);
                if problem.chart_polytope(mid).contains(&held) {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            Some(0.5 * (a + b))
        }
    }
}

/// Thread count from `SWEEPPLAST_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn study_row(scenario: &Scenario, n: usize, dt: Option<f64>) -> Result<StudyRow, PipelineError> {
    let setup = Setup::build(&scenario.with_mesh(n)?)?;
    let grid = setup.grid(dt, None)?;
    let solution = solve_sweeping(&setup, &grid)?;
    let rec = recover(&setup, &solution)?;
    Ok(StudyRow {
        elements: n,
        h: setup.h.expect("studies run on rods"),
        max_omega: rec.max_omega,
        concentration: rec.plastic_concentration(),
    })
}

/// Runs every mesh independently (in parallel, capped by
/// `SWEEPPLAST_THREADS`) and fits the growth of `max‖ω‖∞` in `1/h`.
pub fn refine_study(scenario: &Scenario, meshes: &[usize], dt: Option<f64>) -> Result<StudyReport, PipelineError> {
    let run = || -> Result<Vec<StudyRow>, PipelineError> {
        meshes.par_iter().map(|&n| study_row(scenario, n, dt)).collect()
    };
    let rows = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| std::io::Error::other(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    Ok(StudyReport::from_rows(rows))
}

/// The two sets whose intersection is the moving set at `t`, with the
/// metric they live in.
pub fn cq_sets(setup: &Setup, t: f64) -> (ConvexSetDesc, ConvexSetDesc, WeightedMetric) {
    let s = setup.path.at(t);
    if let Some(problem) = &setup.hardening {
        let ConvexSetDesc::Intersection(parts) = problem.moving_set_at(&s) else {
            unreachable!("hardened moving sets are intersections")
        };
        let w = WeightedMetric::diagonal(problem.xi_weight.as_slice()).expect("validated weights");
        let metric = WeightedMetric::block(&setup.dec.metric, &w);
        return (parts[0].clone(), parts[1].clone(), metric);
    }
    (
        ConvexSetDesc::Box {
            lower: &setup.lower - &s,
            upper: &setup.upper - &s,
        },
        ConvexSetDesc::subspace(setup.dec.basis_v.clone()),
        setup.dec.metric.clone(),
    )
}

fn combine(results: Vec<CqResult>) -> CqResult {
    let worst = results
        .iter()
        .position(|r| r.outcome == CqOutcome::Fails)
        .or_else(|| results.iter().position(|r| r.outcome == CqOutcome::Undecided));
    match worst {
        Some(i) => results[i].clone(),
        None => results.into_iter().next().expect("at least one time"),
    }
}

/// CQ verdicts at every load breakpoint up to `t_end` (and at `t_end`);
/// a condition holds only if it holds at all of them.
pub fn check_cq(setup: &Setup, t_end: Option<f64>, tol: f64) -> Result<(CqVerdict, Vec<f64>), PipelineError> {
    let t1 = t_end.unwrap_or(setup.scenario.time.t_end);
    let mut times: Vec<f64> = setup.loads.times.iter().copied().filter(|&t| t <= t1).collect();
    if times.last() != Some(&t1) {
        times.push(t1);
    }
    let verdicts = times
        .iter()
        .map(|&t| {
            let (c1, c2, metric) = cq_sets(setup, t);
            cq_test(&c1, &c2, &metric, tol)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pick = |f: fn(&CqVerdict) -> &CqResult| combine(verdicts.iter().map(|v| f(v).clone()).collect());
    Ok((
        CqVerdict {
            slater1: pick(|v| &v.slater1),
            slater2: pick(|v| &v.slater2),
            rockafellar: pick(|v| &v.rockafellar),
            attouch_brezis: pick(|v| &v.attouch_brezis),
        },
        times,
    ))
}

/// Speeds this far above the median step are reported.
const SPIKE_FACTOR: f64 = 10.0;

/// Plain-text summary of a run.
pub fn report(setup: &Setup, solution: &Solution, strain: Option<&StrainRecord>, tol: f64) -> String {
    use std::fmt::Write;
    let sweep = solution.sweep();
    let mut out = String::new();
    let kind = if setup.h.is_some() { "rod" } else { "network" };
    let _ = writeln!(out, "model: {kind}, {} elements, dim V = {}", setup.elements(), setup.dec.basis_v.ncols());
    let _ = writeln!(out, "steps: {} on [{}, {}]", sweep.len(), sweep.times[0], sweep.times[sweep.len() - 1]);
    match onset(setup, solution, tol) {
        Some(t) => {
            let _ = writeln!(out, "yield onset t* = {t:.6}");
        }
        None => {
            let _ = writeln!(out, "yield onset: none (elastic throughout)");
        }
    }
    let last = sweep.len() - 1;
    if last > 0 {
        let rate = sweep.velocity(last);
        let _ = writeln!(out, "terminal dy/dt = {}", fmt_vec(&rate, 8));
    }
    match (solution, &setup.hardening) {
        (Solution::Hardened(traj), Some(problem)) => {
            let profile = speed_profile(traj, problem);
            let top = profile.iter().copied().fold(0.0, f64::max);
            let spikes = speed_spikes(&profile, SPIKE_FACTOR);
            let _ = writeln!(out, "state speed max = {top:.6e} (lower bound on the moving-set Lipschitz constant)");
            if !spikes.is_empty() {
                let at: Vec<String> = spikes.iter().take(8).map(|&k| format!("{:.6}", sweep.times[k])).collect();
                let _ = writeln!(out, "speed spikes ({} steps) at t = {}", spikes.len(), at.join(", "));
            }
        }
        _ => {
            let spec = setup.moving_set();
            if spec.chart_dim() <= 3 {
                if let Ok(l) = lipschitz_estimate(&spec, &sweep.times) {
                    let _ = writeln!(out, "moving-set Lipschitz estimate = {l:.6e}");
                }
            }
        }
    }
    if let Some(rec) = strain {
        let _ = writeln!(out, "max |omega| = {:.6e}", rec.max_omega);
        let _ = writeln!(out, "plastic concentration = {:.6}", rec.plastic_concentration());
    }
    let sigma = &sweep.sigma[last];
    let _ = writeln!(out, "terminal stress:");
    let stride = (setup.elements() / 16).max(1);
    for j in (0..setup.elements()).step_by(stride) {
        let _ = writeln!(out, "  x = {:>9.5}  sigma = {:.10}", setup.points[j], sigma[j]);
    }
    out
}

fn fmt_vec(v: &Vector, max: usize) -> String {
    let parts: Vec<String> = v.iter().take(max).map(|x| format!("{x:.8}")).collect();
    let tail = if v.len() > max { ", …" } else { "" };
    format!("[{}{tail}]", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"
[model]
kind = "network"
kinematic = [[-1, 1, 0], [0, -1, 1]]
constraint = [[1, 0, 0], [0, 0, 1]]
constraint_kind = "displacement"
stiffness = [1, 2]

[loads]
times = [0, 4]
prescribed = [[0, 0], [0, 2]]
forces = [[0, 0.3, 0], [0, 0.3, 0]]

[plasticity]
kind = "perfect"
lower = [-1, -1]
upper = [1, 1]

[time]
t_end = 4
dt = 0.01
"#;

    #[test]
    fn two_springs_end_to_end() {
        let setup = Setup::build(&Scenario::parse(TWO).unwrap()).unwrap();
        let grid = setup.grid(None, None).unwrap();
        let sol = solve_sweeping(&setup, &grid).unwrap();
        let rec = recover(&setup, &sol).unwrap();
        // σ̃ = (2l/3 + 0.1, 2l/3 − 0.2) with l = t/2: spring 1 yields first at l = 1.35.
        let t = onset(&setup, &sol, 1e-9).unwrap();
        assert!((t - 2.7).abs() < 1e-6, "{t}");
        assert!(rec.max_omega.is_finite());
        let (cq, _) = check_cq(&setup, None, 1e-9).unwrap();
        assert_eq!(cq.outcomes(), [CqOutcome::Holds; 4]);
    }

    #[test]
    fn empty_moving_set_exits_three() {
        // A force of 6 gives a₁ − a₂ = 6 > 2: no y fits both springs.
        let text = TWO.replace("0.3", "6");
        let setup = Setup::build(&Scenario::parse(&text).unwrap()).unwrap();
        let grid = setup.grid(None, None).unwrap();
        let err = solve_sweeping(&setup, &grid).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
