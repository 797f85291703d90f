//! Acceptance criteria 1–9. One PASS/FAIL line each; see README for the
//! deviations listed in `KNOWN_DEVIATIONS`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::Instant;
use sweepplast::duality::{additivity_check, cq_test, duality_check, CqOutcome, DualityError, DualityVerdict};
use sweepplast::elastic::{assemble_network, ConstraintKind, ElasticPath, NetworkModel};
use sweepplast::geometry::ConvexSetDesc;
use sweepplast::hardening::{hardened_sweep, HardenedProblem, HardeningSpec, ReturnMap};
use sweepplast::linalg::{null_space, pinv, WeightedMetric};
use sweepplast::pipeline::{self, Setup};
use sweepplast::scenario::Scenario;
use sweepplast::sweep::{safe_load_check, MovingSetSpec, SafeLoad};

type Matrix = DMatrix<f64>;
type Vector = DVector<f64>;

/// Criteria expected to fail for reasons recorded in the decisions ledger.
const KNOWN_DEVIATIONS: &[usize] = &[4, 5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::load(&path).expect("shipped scenario parses")
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- 1

fn penrose_residual(a: &Matrix, x: &Matrix) -> f64 {
    let na = a.norm().max(1e-300);
    let nx = x.norm().max(1e-300);
    let ax = a * x;
    let xa = x * a;
    [
        (&ax * a - a).norm() / na,
        (&xa * x - x).norm() / nx,
        (&ax - ax.transpose()).norm() / ax.norm().max(1.0),
        (&xa - xa.transpose()).norm() / xa.norm().max(1.0),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn criterion1() -> Verdict {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (m, n) = (r.gen_range(1..=20), r.gen_range(1..=20));
        // Half the draws are rank deficient on purpose.
        let a = if r.gen_bool(0.5) {
            let k = r.gen_range(1..=m.min(n));
            let l = Matrix::from_fn(m, k, |_, _| r.gen_range(-1.0..1.0));
            let rr = Matrix::from_fn(k, n, |_, _| r.gen_range(-1.0..1.0));
            l * rr
        } else {
            Matrix::from_fn(m, n, |_, _| r.gen_range(-1.0..1.0))
        };
        worst = worst.max(penrose_residual(&a, &pinv(&a)));
    }
    let elapsed = start.elapsed().as_secs_f64();

    let r1 = Matrix::from_row_slice(2, 3, &[1., 0., 0., 0., 0., 1.]);
    let r1_plus = Matrix::from_row_slice(3, 2, &[1., 0., 0., 0., 0., 1.]);
    let re = Matrix::from_row_slice(2, 4, &[-1., 0., 1., 0., 0., -1., 0., 1.]);
    let re_plus = Matrix::from_row_slice(4, 2, &[-1., 0., 0., -1., 1., 0., 0., 1.]) * 0.5;
    let r2 = Matrix::from_row_slice(2, 3, &[1., 1., 0., 0., 1., 1.]);
    let r2_plus = Matrix::from_row_slice(3, 2, &[2., -1., 1., 1., -1., 2.]) / 3.0;
    let exact = [(&r1, &r1_plus), (&re, &re_plus), (&r2, &r2_plus)]
        .iter()
        .map(|(a, p)| (pinv(a) - *p).amax())
        .fold(0.0, f64::max);
    // The library's own operators for the two examples.
    let e1 = NetworkModel::two_springs(1.0, 1.0).unwrap().constraint_operator();
    let e2 = NetworkModel::three_springs(1.0, 1.0, 1.0).unwrap().constraint_operator();
    let ops = (pinv(&e1) - &r1_plus).amax().max((pinv(&e2) - &re_plus).amax());
    verdict(
        worst <= 1e-9 && exact <= 1e-12 && ops <= 1e-12 && elapsed < 1.0,
        format!("penrose {worst:.2e}, examples {:.2e}, {elapsed:.3}s", exact.max(ops)),
    )
}

// ---------------------------------------------------------------- 2

fn rel(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

fn criterion2() -> Verdict {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (k1, k2) = (r.gen_range(0.2..5.0), r.gen_range(0.2..5.0));
        let (u1, u3, f2) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-3.0..3.0));
        let dec = assemble_network(&NetworkModel::two_springs(k1, k2).unwrap()).unwrap();
        let got = dec.stress(&v(&[u1, u3]), &v(&[0.0, f2, 0.0])).unwrap();
        let l = u3 - u1;
        let want = v(&[1.0, 1.0]) * (l / (1.0 / k1 + 1.0 / k2)) + v(&[k1, -k2]) * (f2 / (k1 + k2));
        worst = worst.max(rel(&got, &want));
    }
    let mut rejects = true;
    for _ in 0..100 {
        let k = [r.gen_range(0.2..5.0), r.gen_range(0.2..5.0), r.gen_range(0.2..5.0)];
        let (l1, l2) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
        let f: Vec<f64> = (0..3).map(|_| r.gen_range(-3.0..3.0)).collect();
        let forces = v(&[f[0], f[1], f[2], -(f[0] + f[1] + f[2])]);
        let dec = assemble_network(&NetworkModel::three_springs(k[0], k[1], k[2]).unwrap()).unwrap();
        let got = dec.stress(&v(&[l1, l2]), &forces).unwrap();
        let d = 1.0 / (k[0] * k[1]) + 1.0 / (k[1] * k[2]) + 1.0 / (k[0] * k[2]);
        let g = Matrix::from_row_slice(
            3,
            2,
            &[
                1.0 / k[1] + 1.0 / k[2],
                -1.0 / k[1],
                1.0 / k[2],
                1.0 / k[0],
                -1.0 / k[1],
                1.0 / k[0] + 1.0 / k[1],
            ],
        ) / d;
        let want = g * v(&[l1, l2]) + v(&[-k[0], k[1], -k[2]]) * ((f[0] + f[2]) / (k[0] + k[1] + k[2]));
        worst = worst.max(rel(&got, &want));
        let unbalanced = v(&[f[0], f[1], f[2], 1.0 - (f[0] + f[1] + f[2])]);
        rejects &= dec.stress(&v(&[l1, l2]), &unbalanced).is_err();
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-10 && rejects && elapsed < 1.0,
        format!("max relative error {worst:.2e}, unbalanced loads rejected: {rejects}, {elapsed:.3}s"),
    )
}

// ---------------------------------------------------------------- 3

fn rod_setup(name: &str, n: usize) -> Setup {
    Setup::build(&scenario(name).with_mesh(n).unwrap()).unwrap()
}

fn criterion3() -> Verdict {
    let start = Instant::now();
    let errors: Vec<f64> = [10, 20, 40, 80]
        .iter()
        .map(|&n| {
            let s = rod_setup("rod.scn", n);
            let got = s.path.at(1.0);
            s.points.iter().zip(got.iter()).map(|(x, g)| (g - (1.0 / 3.0 - x * x)).abs()).fold(0.0, f64::max)
        })
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        ratios.iter().all(|&q| q >= 3.0) && elapsed < 5.0,
        format!("errors {}, ratios {ratios:.2?}, {elapsed:.3}s", sci(&errors)),
    )
}

// ---------------------------------------------------------------- 4

fn criterion4() -> Verdict {
    let start = Instant::now();
    let s = rod_setup("rod.scn", 160);
    let grid = s.grid(Some(1e-3), None).unwrap();
    let sol = pipeline::solve_sweeping(&s, &grid).unwrap();
    let onset = pipeline::onset(&s, &sol, 1e-10).unwrap_or(f64::NAN);
    let traj = sol.sweep();
    let last = traj.len() - 1;
    let slope_err = traj.velocity(last).iter().map(|d| (d + 0.5).abs()).fold(0.0, f64::max);
    let h = s.h.unwrap();
    let stress_err = s
        .points
        .iter()
        .zip(traj.sigma[last].iter())
        .map(|(x, sg)| (sg - (1.0 - x * x)).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    let onset_err = (onset - 7.0 / 3.0).abs();
    verdict(
        onset_err <= 1e-4 && slope_err <= 1e-6 && stress_err <= 2.0 * h && elapsed < 30.0,
        format!(
            "t* = {onset:.6} (off by {onset_err:.3e}), slope error {slope_err:.1e}, \
             stress error {stress_err:.2e} vs 2h = {:.2e}, {elapsed:.2}s",
            2.0 * h
        ),
    )
}

// ---------------------------------------------------------------- 5

fn criterion5() -> Verdict {
    let meshes = [10, 20, 40, 80, 160];
    let report = pipeline::refine_study(&scenario("rod.scn"), &meshes, None).unwrap();
    let worst_dev = report
        .rows
        .iter()
        .map(|r| (r.max_omega - (1.0 / r.h - 0.5)).abs() / (1.0 / r.h - 0.5))
        .fold(0.0, f64::max);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/rod.scn");
    let code = Command::new(env!("CARGO_BIN_EXE_sweepplast"))
        .arg("refine-study")
        .arg(&path)
        .output()
        .map(|o| o.status.code())
        .ok()
        .flatten();
    let values: Vec<f64> = report.rows.iter().map(|r| r.max_omega).collect();
    verdict(
        (0.9..=1.1).contains(&report.slope) && worst_dev <= 0.05 && code == Some(4),
        format!(
            "slope {:.4}, max|ω| {values:.3?}, worst deviation from 1/h − 1/2 {:.1}%, exit {code:?}",
            report.slope,
            100.0 * worst_dev
        ),
    )
}

// ---------------------------------------------------------------- 6

/// One spring between two prescribed nodes, pulled at unit strain rate.
fn single_spring_tangent(k: f64, modulus: f64) -> (f64, f64) {
    let model = NetworkModel::new(
        Matrix::from_row_slice(1, 2, &[-1., 1.]),
        Matrix::identity(2, 2),
        ConstraintKind::Displacement,
        vec![k],
    )
    .unwrap();
    let dec = assemble_network(&model).unwrap();
    let loads = sweepplast::elastic::LoadProgram::new(
        vec![0.0, 4.0],
        vec![v(&[0., 0.]), v(&[0., 4.])],
        vec![v(&[0., 0.]), v(&[0., 0.])],
    )
    .unwrap();
    let path = ElasticPath::new(&dec, &loads).unwrap();
    let spec = HardeningSpec::kinematic(v(&[modulus]), v(&[-1.0]), v(&[1.0]));
    let problem = HardenedProblem::new(&dec, spec, path, v(&[1.0])).unwrap();
    let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
    let traj = hardened_sweep(&problem, &grid, &v(&[0.0]), &v(&[0.0])).unwrap();
    let n = grid.len() - 1;
    let sig = &traj.sweep.sigma;
    let swept = (sig[n][0] - sig[n - 1][0]) / (grid[n] - grid[n - 1]);

    let map = ReturnMap {
        k,
        modulus,
        lower: -1.0,
        upper: 1.0,
        weight: 1.0,
    };
    let (mut s, mut xi) = (0.0, 0.0);
    let mut prev = 0.0;
    for w in grid.windows(2) {
        prev = s;
        (s, xi, _) = map.step(s, xi, w[1] - w[0]);
    }
    let mapped = (s - prev) / (grid[n] - grid[n - 1]);
    (swept, mapped)
}

fn criterion6() -> Verdict {
    let start = Instant::now();
    let meshes = [10, 20, 40, 80, 160];
    let report = pipeline::refine_study(&scenario("rod_hardening.scn"), &meshes, None).unwrap();
    let values: Vec<f64> = report.rows.iter().map(|r| r.max_omega).collect();
    let hi = values.iter().copied().fold(0.0, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let (k, modulus) = (1.0, 1.0);
    let (swept, mapped) = single_spring_tangent(k, modulus);
    let formula = k * modulus / (k + modulus);
    let tangent_err = (swept - mapped).abs().max((swept - formula).abs());
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        lo > 0.0 && hi / lo <= 2.0 && tangent_err <= 1e-8 && elapsed < 60.0,
        format!(
            "max|ω| {values:.3?} (spread {:.3}), tangent {swept:.10} vs return map {mapped:.10} \
             and kH/(k+H) {formula}, {elapsed:.2}s",
            hi / lo
        ),
    )
}

// ---------------------------------------------------------------- 7, 8

struct Instance {
    c1: ConvexSetDesc,
    c2: ConvexSetDesc,
    x: Vector,
    v: Vector,
    metric: WeightedMetric,
    /// Euclidean generators of the box cone at `x` (signed unit vectors).
    faces: Vec<Vector>,
    /// Euclidean normal space of the affine subspace.
    orth: Matrix,
}

fn random_instance(r: &mut ChaCha8Rng) -> Instance {
    let n = r.gen_range(1..=5);
    let lower = Vector::from_fn(n, |_, _| r.gen_range(-2.0..0.0));
    let upper = Vector::from_fn(n, |i, _| lower[i] + r.gen_range(0.5..3.0));
    // x sits on a random subset of faces.
    let x = Vector::from_fn(n, |i, _| match r.gen_range(0..3) {
        0 => lower[i],
        1 => upper[i],
        _ => r.gen_range(lower[i]..upper[i]),
    });
    let faces: Vec<Vector> = (0..n)
        .filter_map(|i| {
            let mut e = Vector::zeros(n);
            if x[i] == lower[i] {
                e[i] = -1.0;
            } else if x[i] == upper[i] {
                e[i] = 1.0;
            } else {
                return None;
            }
            Some(e)
        })
        .collect();
    let dim = r.gen_range(0..=n);
    let basis = Matrix::from_fn(n, dim, |_, _| r.gen_range(-1.0..1.0));
    let orth = if dim == 0 {
        Matrix::identity(n, n)
    } else {
        null_space(&basis.transpose())
    };
    let weights: Vec<f64> = (0..n).map(|_| r.gen_range(0.3..3.0)).collect();
    let metric = WeightedMetric::diagonal(&weights).unwrap();
    // A normal vector half the time, an arbitrary one otherwise.
    let euclid = if r.gen_bool(0.5) {
        let mut w = Vector::zeros(n);
        for f in &faces {
            w += f * r.gen_range(0.0..2.0);
        }
        for j in 0..orth.ncols() {
            w += orth.column(j) * r.gen_range(-2.0..2.0);
        }
        w
    } else {
        Vector::from_fn(n, |_, _| r.gen_range(-2.0..2.0))
    };
    let v = metric.apply_inverse(&euclid);
    Instance {
        c1: ConvexSetDesc::boxed(lower, upper).unwrap(),
        c2: ConvexSetDesc::AffineSubspace {
            basis,
            offset: x.clone(),
        },
        x,
        v,
        metric,
        faces,
        orth,
    }
}

/// Tries every subset of active faces: is `w` a nonnegative combination of
/// the subset plus something orthogonal to the subspace?
fn brute_force_split(inst: &Instance, w: &Vector) -> bool {
    let n = w.len();
    let f = inst.faces.len();
    for mask in 0u32..(1 << f) {
        let picked: Vec<&Vector> = (0..f).filter(|i| mask >> i & 1 == 1).map(|i| &inst.faces[i]).collect();
        let cols = picked.len() + inst.orth.ncols();
        if cols == 0 {
            if w.amax() <= 1e-9 {
                return true;
            }
            continue;
        }
        let mut g = Matrix::zeros(n, cols);
        for (j, p) in picked.iter().enumerate() {
            g.set_column(j, p);
        }
        for j in 0..inst.orth.ncols() {
            g.set_column(picked.len() + j, &inst.orth.column(j));
        }
        let coef = pinv(&g) * w;
        let fits = (&g * &coef - w).amax() <= 1e-8 * (1.0 + w.amax());
        if fits && (0..picked.len()).all(|j| coef[j] >= -1e-9) {
            return true;
        }
    }
    false
}

fn criterion7(monotone_failures: &mut usize) -> Verdict {
    let start = Instant::now();
    let mut r = rng(7);
    let mut disagreements = 0;
    let mut normals = 0;
    for _ in 0..1000 {
        let inst = random_instance(&mut r);
        let tol = 1e-9;
        let w = inst.metric.apply(&inst.v);
        let oracle = brute_force_split(&inst, &w);
        let add = additivity_check(&inst.c1, &inst.c2, &inst.x, &inst.v, &inst.metric, tol).unwrap();
        let dual = match duality_check(&inst.c1, &inst.c2, &inst.x, &inst.v, &inst.metric, tol) {
            Ok(rep) => Some(rep.verdict == DualityVerdict::StrongDuality),
            Err(DualityError::Precondition(_)) => None,
            Err(e) => panic!("{e}"),
        };
        // Polyhedral pairs: the normal cone of the intersection is the sum,
        // so strong duality ⇔ v is normal ⇔ v splits.
        let agree = match dual {
            Some(strong) => strong && add.holds && oracle,
            None => !add.holds && !oracle,
        };
        normals += usize::from(oracle);
        disagreements += usize::from(!agree);
        if !cq_test(&inst.c1, &inst.c2, &inst.metric, tol).unwrap().is_monotone() {
            *monotone_failures += 1;
        }
    }
    let disc = ConvexSetDesc::ball(v(&[0., 0.]), 1.0).unwrap();
    let segment = ConvexSetDesc::boxed(v(&[-1., -1.]), v(&[1., -1.])).unwrap();
    let id = WeightedMetric::identity(2);
    let (x, w) = (v(&[0., -1.]), v(&[1., 0.]));
    let gap = duality_check(&disc, &segment, &x, &w, &id, 1e-9).unwrap();
    let add = additivity_check(&disc, &segment, &x, &w, &id, 1e-9).unwrap();
    let counter = gap.verdict == DualityVerdict::GapOrNonAttainment && !add.holds;
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        disagreements == 0 && counter && elapsed < 30.0,
        format!(
            "{disagreements} disagreements over 1000 ({normals} normal), disc+segment {:?} / additivity {}, {elapsed:.2}s",
            gap.verdict, add.holds
        ),
    )
}

/// Strict interval oracle for the two-spring safe load.
fn example1_safe(k1: f64, k2: f64, f2: f64, lower: &[f64], upper: &[f64]) -> bool {
    let a = [f2 * k1 / (k1 + k2), -f2 * k2 / (k1 + k2)];
    let lo = (lower[0] - a[0]).max(lower[1] - a[1]);
    let hi = (upper[0] - a[0]).min(upper[1] - a[1]);
    lo < hi
}

/// Same for three springs: `y₂ = y₁ + y₃`.
fn example2_safe(k: [f64; 3], fsum: f64, lower: &[f64], upper: &[f64]) -> bool {
    let c = fsum / (k[0] + k[1] + k[2]);
    let b = [-k[0] * c, k[1] * c, -k[2] * c];
    let lo: Vec<f64> = (0..3).map(|i| lower[i] - b[i]).collect();
    let hi: Vec<f64> = (0..3).map(|i| upper[i] - b[i]).collect();
    lo[0] < hi[0] && lo[2] < hi[2] && (lo[0] + lo[2]).max(lo[1]) < (hi[0] + hi[2]).min(hi[1])
}

fn safe_and_cq(model: NetworkModel, forces: Vector, lower: Vector, upper: Vector) -> (SafeLoad, [CqOutcome; 4]) {
    let dec = assemble_network(&model).unwrap();
    let d = Vector::zeros(model.constraint.nrows());
    let s = dec.stress(&d, &forces).unwrap();
    let spec = MovingSetSpec::new(&dec, lower.clone(), upper.clone(), ElasticPath::constant(s.clone()));
    let safe = safe_load_check(&spec, 0.0, false);
    let c1 = ConvexSetDesc::Box {
        lower: &lower - &s,
        upper: &upper - &s,
    };
    let c2 = ConvexSetDesc::subspace(dec.basis_v.clone());
    let cq = cq_test(&c1, &c2, &dec.metric, 1e-9).unwrap();
    (safe, cq.outcomes())
}

fn criterion8(monotone_failures: usize) -> Verdict {
    let mut r = rng(8);
    let mut wrong = 0;
    let (mut safe_count, mut unsafe_count) = (0, 0);
    let mut check = |oracle: bool, safe: SafeLoad, cq: [CqOutcome; 4]| {
        let ok = if oracle {
            safe_count += 1;
            matches!(safe, SafeLoad::StrictOk { .. }) && cq.iter().all(|&o| o == CqOutcome::Holds)
        } else {
            unsafe_count += 1;
            safe == SafeLoad::Violated && cq[0] == CqOutcome::Fails
        };
        wrong += usize::from(!ok);
    };
    for _ in 0..200 {
        let (k1, k2) = (r.gen_range(0.2..5.0), r.gen_range(0.2..5.0));
        let f2 = r.gen_range(-6.0..6.0);
        let lower: Vec<f64> = (0..2).map(|_| r.gen_range(-2.0..-0.1)).collect();
        let upper: Vec<f64> = (0..2).map(|_| r.gen_range(0.1..2.0)).collect();
        let oracle = example1_safe(k1, k2, f2, &lower, &upper);
        let (safe, cq) = safe_and_cq(
            NetworkModel::two_springs(k1, k2).unwrap(),
            v(&[0.0, f2, 0.0]),
            Vector::from_vec(lower),
            Vector::from_vec(upper),
        );
        check(oracle, safe, cq);
    }
    for _ in 0..200 {
        let k = [r.gen_range(0.2..5.0), r.gen_range(0.2..5.0), r.gen_range(0.2..5.0)];
        let f: Vec<f64> = (0..3).map(|_| r.gen_range(-6.0..6.0)).collect();
        let lower: Vec<f64> = (0..3).map(|_| r.gen_range(-2.0..-0.1)).collect();
        let upper: Vec<f64> = (0..3).map(|_| r.gen_range(0.1..2.0)).collect();
        let oracle = example2_safe(k, f[0] + f[2], &lower, &upper);
        let (safe, cq) = safe_and_cq(
            NetworkModel::three_springs(k[0], k[1], k[2]).unwrap(),
            v(&[f[0], f[1], f[2], -(f[0] + f[1] + f[2])]),
            Vector::from_vec(lower),
            Vector::from_vec(upper),
        );
        check(oracle, safe, cq);
    }
    verdict(
        monotone_failures == 0 && wrong == 0 && safe_count > 0 && unsafe_count > 0,
        format!(
            "{monotone_failures} non-monotone verdicts, {wrong} oracle mismatches ({safe_count} safe, {unsafe_count} unsafe)"
        ),
    )
}

// ---------------------------------------------------------------- 9

fn criterion9() -> Verdict {
    let s = rod_setup("rod.scn", 20);
    let states: Vec<Vector> = (0..5)
        .map(|i| {
            let dt = 0.02 / f64::powi(2.0, i);
            let grid = s.grid(Some(dt), None).unwrap();
            let sol = pipeline::solve_sweeping(&s, &grid).unwrap();
            let rec = pipeline::recover(&s, &sol).unwrap();
            let traj = sol.sweep();
            let last = traj.len() - 1;
            let mut z: Vec<f64> = traj.y[last].iter().copied().collect();
            z.extend(traj.sigma[last].iter());
            z.extend(rec.eps[last].iter());
            Vector::from_vec(z)
        })
        .collect();
    let diffs: Vec<f64> = states.windows(2).map(|w| (&w[1] - &w[0]).amax()).collect();
    // A difference already at roundoff cannot shrink further; the catch-up
    // step is exact at the nodes whenever the chart set moves affinely.
    let floor = 1e-12 * (1.0 + states[0].amax());
    let ratios: Vec<f64> = diffs.windows(2).map(|w| w[0] / w[1]).collect();
    let linear = diffs.windows(2).all(|w| w[1] <= floor || w[0] / w[1] >= 1.8);
    let note = if diffs.iter().all(|&d| d <= floor) { " (all at roundoff)" } else { "" };
    verdict(
        linear,
        format!("differences {}{note}, ratios {ratios:.3?}", sci(&diffs)),
    )
}

fn main() -> ExitCode {
    let mut monotone_failures = 0;
    let results = [
        criterion1(),
        criterion2(),
        criterion3(),
        criterion4(),
        criterion5(),
        criterion6(),
        criterion7(&mut monotone_failures),
        criterion8(monotone_failures),
        criterion9(),
    ];
    let mut unexpected = 0;
    for (i, r) in results.iter().enumerate() {
        let id = i + 1;
        let tag = if r.pass { "PASS" } else { "FAIL" };
        let note = if !r.pass && KNOWN_DEVIATIONS.contains(&id) { " [known deviation]" } else { "" };
        println!("criterion {id}: {tag} {}{note}", r.detail);
        if !r.pass && !KNOWN_DEVIATIONS.contains(&id) {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected failure(s)");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
