//! Strain-rate recovery from a stress trajectory.
//!
//! At each step we look for `ω ∈ (N^M_{Σ−σ̃}(y) + ẏ) ∩ U`; then
//! `C ε̇ = ω + σ̃̇`. When the selection has to grow like `1/h` under mesh
//! refinement, the continuum inclusion has no solution.

use crate::linalg::{Matrix, Vector, WeightedMetric};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::sweep::{Faces, SweepTrajectory};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrainError {
    /// Normal-cone additivity fails at this state; `certificate` is a
    /// Farkas vector for the recovery LP.
    #[error("strain-rate inclusion is empty at t = {time}")]
    Infeasible { time: f64, certificate: Vec<f64> },
    #[error("initial strain is not compatible (residual {residual:e})")]
    InitialStrain { residual: f64 },
}

/// Inputs of one recovery step.
pub struct OmegaProblem<'a> {
    pub velocity: &'a Vector,
    pub faces: &'a [Faces],
    pub basis_v: &'a Matrix,
    pub metric: &'a WeightedMetric,
    pub stiffness: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub enum OmegaOutcome {
    Found(Vector),
    Infeasible { certificate: Vec<f64> },
}

/// Cone generators `M⁻¹(±e_j) = ±k_j e_j` of the active faces.
fn generators(faces: &[Faces]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for (j, f) in faces.iter().enumerate() {
        if f.lower {
            out.push((j, -1.0));
        }
        if f.upper {
            out.push((j, 1.0));
        }
    }
    out
}

/// Minimum-ℓ¹ selection `ω = ẏ + Σ λ_g g`. Ties on the optimal face are
/// broken towards the lowest-indexed generator, so the selection is
/// reproducible and concentrates flow in as few elements as possible.
pub fn recover_omega(p: &OmegaProblem) -> OmegaOutcome {
    let gens = generators(p.faces);
    let ydot = p.velocity;
    if gens.is_empty() {
        // ω = ẏ must already lie in U.
        let lhs = p.basis_v.transpose() * p.metric.apply(ydot);
        return if lhs.amax() <= 1e-10 * (1.0 + ydot.amax()) {
            OmegaOutcome::Found(ydot.clone())
        } else {
            OmegaOutcome::Infeasible {
                certificate: lhs.iter().copied().collect(),
            }
        };
    }
    let mut touched: Vec<usize> = gens.iter().map(|g| g.0).collect();
    touched.dedup();
    let ng = gens.len();
    let nt = touched.len();
    let q = p.basis_v.ncols();
    let build = |objective: Vec<f64>| {
        let mut lp = LinearProgram::new(ng + nt);
        lp.objective = objective;
        // U-membership: B_Vᵀ M (ẏ + Σ λ g) = 0, with M g = ±e_j.
        let rhs = -(p.basis_v.transpose() * p.metric.apply(ydot));
        for r in 0..q {
            let mut row = vec![0.0; ng + nt];
            for (g, &(j, s)) in gens.iter().enumerate() {
                row[g] = s * p.basis_v[(j, r)];
            }
            lp.add(row, Relation::Eq, rhs[r]);
        }
        // t_i ≥ |ω_i| on touched coordinates.
        for (ti, &i) in touched.iter().enumerate() {
            let mut plus = vec![0.0; ng + nt];
            let mut minus = vec![0.0; ng + nt];
            for (g, &(j, s)) in gens.iter().enumerate() {
                if j == i {
                    plus[g] = -s * p.stiffness[i];
                    minus[g] = s * p.stiffness[i];
                }
            }
            plus[ng + ti] = 1.0;
            minus[ng + ti] = 1.0;
            lp.add(plus, Relation::Ge, ydot[i]);
            lp.add(minus, Relation::Ge, -ydot[i]);
        }
        lp
    };
    let mut first = vec![0.0; ng + nt];
    for v in first.iter_mut().skip(ng) {
        *v = 1.0;
    }
    let best = match build(first.clone()).solve() {
        LpOutcome::Optimal { value, .. } => value,
        LpOutcome::Infeasible { certificate } => return OmegaOutcome::Infeasible { certificate },
        LpOutcome::Unbounded => unreachable!("objective is bounded below by zero"),
    };
    let mut tie = vec![0.0; ng + nt];
    for (g, v) in tie.iter_mut().take(ng).enumerate() {
        *v = (1.0 + g as f64 / ng as f64) / p.stiffness[gens[g].0];
    }
    let mut lp = build(tie);
    lp.add(first, Relation::Le, best + 1e-12 * (1.0 + best));
    let x = match lp.solve() {
        LpOutcome::Optimal { x, .. } => x,
        _ => match build(vec![0.0; ng + nt]).solve() {
            LpOutcome::Optimal { x, .. } => x,
            _ => unreachable!("first stage was feasible"),
        },
    };
    let mut omega = ydot.clone();
    for (g, &(j, s)) in gens.iter().enumerate() {
        omega[j] += s * p.stiffness[j] * x[g];
    }
    OmegaOutcome::Found(omega)
}

#[derive(Debug, Clone)]
pub struct StrainRecord {
    pub times: Vec<f64>,
    /// `ω_k` on `[t_{k−1}, t_k]`; zero at `k = 0`.
    pub omega: Vec<Vector>,
    pub eps: Vec<Vector>,
    pub eps_el: Vec<Vector>,
    pub eps_p: Vec<Vector>,
    pub max_omega: f64,
}

impl StrainRecord {
    /// Largest share of the total plastic elongation carried by one element.
    pub fn plastic_concentration(&self) -> f64 {
        let first = &self.eps_p[0];
        let last = self.eps_p.last().unwrap();
        let d = last - first;
        let total: f64 = d.iter().map(|v| v.abs()).sum();
        if total == 0.0 { 0.0 } else { d.amax() / total }
    }
}

/// Default `ε₀ = C⁻¹ σ₀` plus the plastic part fixed by `σ₀ − σ̃(0)`.
pub fn default_initial_strain(stiffness: &[f64], elastic0: &Vector) -> Vector {
    crate::elastic::elastic_strain(stiffness, elastic0)
}

/// Recovers `ω` step by step and integrates
/// `ε_k = ε₀ + C⁻¹(σ̃_k − σ̃_0 + Σ ω_i Δt_i)`.
pub fn recover_strain(
    traj: &SweepTrajectory,
    basis_v: &Matrix,
    metric: &WeightedMetric,
    stiffness: &[f64],
    eps0: &Vector,
) -> Result<StrainRecord, StrainError> {
    let m = stiffness.len();
    let kinv = |v: &Vector| crate::elastic::elastic_strain(stiffness, v);
    // C ε₀ − σ̃(0) ∈ U.
    let r0 = Vector::from_iterator(m, eps0.iter().zip(stiffness).map(|(e, k)| e * k)) - &traj.elastic[0];
    let residual = (basis_v.transpose() * metric.apply(&r0)).amax();
    if residual > 1e-9 * (1.0 + r0.amax()) {
        return Err(StrainError::InitialStrain { residual });
    }
    let n = traj.len();
    let mut rec = StrainRecord {
        times: traj.times.clone(),
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
            let dt = traj.times[k] - traj.times[k - 1];
            let ydot = traj.velocity(k);
            let prob = OmegaProblem {
                velocity: &ydot,
                faces: &traj.active[k],
                basis_v,
                metric,
                stiffness,
            };
            match recover_omega(&prob) {
                OmegaOutcome::Found(w) => {
                    acc += &w * dt;
                    w
                }
                OmegaOutcome::Infeasible { certificate } => {
                    return Err(StrainError::Infeasible {
                        time: traj.times[k],
                        certificate,
                    })
                }
            }
        };
        rec.max_omega = rec.max_omega.max(omega.amax());
        let eps = eps0 + kinv(&(&traj.elastic[k] - &traj.elastic[0] + &acc));
        let eps_el = kinv(&traj.sigma[k]);
        rec.eps_p.push(&eps - &eps_el);
        rec.eps.push(eps);
        rec.eps_el.push(eps_el);
        rec.omega.push(omega);
    }
    Ok(rec)
}

/// Least-squares slope of `log value` against `log(1/h)`.
pub fn fit_slope(h: &[f64], values: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|h| (1.0 / h).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 { 0.0 } else { sxy / sxx }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub elements: usize,
    pub h: f64,
    pub max_omega: f64,
    pub concentration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub slope: f64,
    pub regularity_lost: bool,
}

pub const REGULARITY_THRESHOLD: f64 = 0.9;

impl StudyReport {
    pub fn from_rows(rows: Vec<StudyRow>) -> Self {
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let ws: Vec<f64> = rows.iter().map(|r| r.max_omega).collect();
        let slope = if ws.iter().all(|&w| w == 0.0) { 0.0 } else { fit_slope(&hs, &ws) };
        Self {
            regularity_lost: slope >= REGULARITY_THRESHOLD,
            rows,
            slope,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn faces(n: usize, upper: &[usize]) -> Vec<Faces> {
        (0..n)
            .map(|j| Faces {
                lower: false,
                upper: upper.contains(&j),
            })
            .collect()
    }

    #[test]
    fn elastic_phase_gives_zero() {
        let b = Matrix::from_column_slice(2, 1, &[1., 1.]);
        let m = WeightedMetric::identity(2);
        let zero = Vector::zeros(2);
        let f = faces(2, &[]);
        let p = OmegaProblem {
            velocity: &zero,
            faces: &f,
            basis_v: &b,
            metric: &m,
            stiffness: &[1., 1.],
        };
        assert_eq!(recover_omega(&p), OmegaOutcome::Found(zero.clone()));
    }

    #[test]
    fn rod_element_concentration_formula() {
        // N elements of length h, C ≡ 1: M = h·I, ẏ = −½, one active element.
        for n in [10usize, 11, 40] {
            let h = 2.0 / n as f64;
            let b = Matrix::from_element(n, 1, 1.0);
            let m = WeightedMetric::diagonal(&vec![h; n]).unwrap();
            let k = vec![1.0 / h; n];
            let ydot = Vector::from_element(n, -0.5);
            let f = faces(n, &[n / 2]);
            let p = OmegaProblem {
                velocity: &ydot,
                faces: &f,
                basis_v: &b,
                metric: &m,
                stiffness: &k,
            };
            let OmegaOutcome::Found(w) = recover_omega(&p) else { panic!() };
            assert_relative_eq!(w[n / 2], 1.0 / h - 0.5, epsilon = 1e-9);
            // Mass balance Σ h ω = 0.
            assert_relative_eq!(w.sum() * h, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn tied_elements_concentrate_on_first() {
        let n = 10;
        let h = 0.2;
        let b = Matrix::from_element(n, 1, 1.0);
        let m = WeightedMetric::diagonal(&vec![h; n]).unwrap();
        let k = vec![1.0 / h; n];
        let ydot = Vector::from_element(n, -0.5);
        let f = faces(n, &[4, 5]);
        let p = OmegaProblem {
            velocity: &ydot,
            faces: &f,
            basis_v: &b,
            metric: &m,
            stiffness: &k,
        };
        let OmegaOutcome::Found(w) = recover_omega(&p) else { panic!() };
        // Optimal face: both ω ≥ 0 summing to 1/h − 1; the tie-break puts
        // everything on element 4.
        assert_relative_eq!(w[4], 1.0 / h - 1.0, epsilon = 1e-9);
        assert_relative_eq!(w[5], 0.0, epsilon = 1e-9);
        assert_relative_eq!(w.abs().sum(), 8.0 * 0.5 + 1.0 / h - 1.0, epsilon = 1e-9);
    }

    #[test]
    fn wrong_sign_face_is_infeasible() {
        // Only a lower face active but the flow must push stress down.
        let b = Matrix::from_column_slice(2, 1, &[1., 1.]);
        let met = WeightedMetric::identity(2);
        let ydot = v(&[1., 1.]);
        let f = vec![
            Faces {
                lower: false,
                upper: true,
            },
            Faces::default(),
        ];
        let p = OmegaProblem {
            velocity: &ydot,
            faces: &f,
            basis_v: &b,
            metric: &met,
            stiffness: &[1., 1.],
        };
        let OmegaOutcome::Infeasible { certificate } = recover_omega(&p) else { panic!() };
        assert!(!certificate.is_empty());
    }

    #[test]
    fn slope_fit_recovers_power() {
        let hs = [0.2, 0.1, 0.05, 0.025];
        let vals: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powf(-1.0)).collect();
        assert_relative_eq!(fit_slope(&hs, &vals), 1.0, epsilon = 1e-12);
        let flat = [2.0; 4];
        assert_relative_eq!(fit_slope(&hs, &flat), 0.0, epsilon = 1e-12);
    }
}
