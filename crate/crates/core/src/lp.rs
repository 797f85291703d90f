//! Dense two-phase simplex with Bland's rule.
//!
//! Problems here are small (tens of variables), so a full tableau is the
//! simplest thing that terminates finitely and returns vertex solutions.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    NonNegative,
    Free,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `minimize cᵀx` subject to row constraints, with per-variable sign kinds.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub kinds: Vec<VarKind>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    /// Farkas certificate `z`, one entry per constraint row: `zᵀA ≤ 0` on
    /// non-negative columns, `= 0` on free columns, `z ≤ 0` on `≤` rows,
    /// `z ≥ 0` on `≥` rows and `zᵀb > 0`.
    Infeasible { certificate: Vec<f64> },
    Unbounded,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            kinds: vec![VarKind::NonNegative; n],
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }

    /// Largest violation of the constraints and sign restrictions at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (xi, kind) in x.iter().zip(&self.kinds) {
            if *kind == VarKind::NonNegative {
                worst = worst.max(-xi);
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Checks a Farkas certificate against the sign pattern documented on
    /// [`LpOutcome::Infeasible`].
    pub fn certifies_infeasibility(&self, z: &[f64], tol: f64) -> bool {
        let n = self.num_vars();
        let mut combo = vec![0.0; n];
        let mut rhs = 0.0;
        for (zi, c) in z.iter().zip(&self.constraints) {
            let ok = match c.relation {
                Relation::Le => *zi <= tol,
                Relation::Ge => *zi >= -tol,
                Relation::Eq => true,
            };
            if !ok {
                return false;
            }
            for (acc, a) in combo.iter_mut().zip(&c.coeffs) {
                *acc += zi * a;
            }
            rhs += zi * c.rhs;
        }
        let cols_ok = combo.iter().zip(&self.kinds).all(|(v, k)| match k {
            VarKind::NonNegative => *v <= tol,
            VarKind::Free => v.abs() <= tol,
        });
        cols_ok && rhs > tol
    }
}

const PIVOT_TOL: f64 = 1e-11;

struct Tableau {
    /// rows × (cols + 1); last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    /// Number of structural columns (after splitting free variables).
    structural: usize,
    first_artificial: usize,
    /// Sign applied to each original row so that its rhs is non-negative.
    row_sign: Vec<f64>,
    /// Sign-normalised initial tableau, kept for certificate extraction.
    orig: Vec<Vec<f64>>,
    /// Maps each original variable to its (positive, negative) columns.
    var_cols: Vec<(usize, Option<usize>)>,
    scale: f64,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let mut var_cols = Vec::with_capacity(lp.num_vars());
        let mut col = 0;
        for kind in &lp.kinds {
            match kind {
                VarKind::NonNegative => {
                    var_cols.push((col, None));
                    col += 1;
                }
                VarKind::Free => {
                    var_cols.push((col, Some(col + 1)));
                    col += 2;
                }
            }
        }
        let structural = col;
        let m = lp.constraints.len();
        let mut slack_col = vec![None; m];
        for (i, c) in lp.constraints.iter().enumerate() {
            if c.relation != Relation::Eq {
                slack_col[i] = Some(col);
                col += 1;
            }
        }
        let row_sign: Vec<f64> = lp
            .constraints
            .iter()
            .map(|c| if c.rhs < 0.0 { -1.0 } else { 1.0 })
            .collect();
        // Rows whose slack enters with +1 after sign normalisation start basic.
        let mut basis = vec![usize::MAX; m];
        let mut needs_art = Vec::new();
        for (i, c) in lp.constraints.iter().enumerate() {
            let slack_coef = match c.relation {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => 0.0,
            } * row_sign[i];
            if slack_coef > 0.0 {
                basis[i] = slack_col[i].unwrap();
            } else {
                needs_art.push(i);
            }
        }
        let first_artificial = col;
        let cols = col + needs_art.len();
        let scale = lp
            .constraints
            .iter()
            .flat_map(|c| c.coeffs.iter().chain(std::iter::once(&c.rhs)))
            .fold(1.0_f64, |a, b| a.max(b.abs()));
        let mut t = vec![vec![0.0; cols + 1]; m];
        for (i, c) in lp.constraints.iter().enumerate() {
            let s = row_sign[i];
            for (j, &a) in c.coeffs.iter().enumerate() {
                let (p, n) = var_cols[j];
                t[i][p] = s * a;
                if let Some(n) = n {
                    t[i][n] = -s * a;
                }
            }
            if let Some(sc) = slack_col[i] {
                t[i][sc] = s * if c.relation == Relation::Le { 1.0 } else { -1.0 };
            }
            t[i][cols] = s * c.rhs;
        }
        for (k, &i) in needs_art.iter().enumerate() {
            let a = first_artificial + k;
            t[i][a] = 1.0;
            basis[i] = a;
        }
        Self {
            orig: t.clone(),
            t,
            basis,
            cols,
            structural,
            first_artificial,
            row_sign,
            var_cols,
            scale,
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Reduced costs for cost vector `cost` (length `cols`).
    fn reduced(&self, cost: &[f64], allowed: usize) -> Vec<f64> {
        let mut d: Vec<f64> = cost[..allowed].to_vec();
        for (i, row) in self.t.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (dj, a) in d.iter_mut().zip(row.iter()) {
                    *dj -= cb * a;
                }
            }
        }
        d
    }

    /// Simplex iterations with Bland's rule over columns `< allowed`.
    /// Returns false on unboundedness.
    fn optimise(&mut self, cost: &[f64], allowed: usize) -> bool {
        let cost_scale = cost.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
        let tol = 1e-10 * cost_scale;
        let max_iter = 50 * (self.cols + self.t.len() + 10);
        for _ in 0..max_iter {
            let d = self.reduced(cost, allowed);
            let entering = (0..allowed).find(|&j| d[j] < -tol && !self.basis.contains(&j));
            let Some(c) = entering else {
                return true;
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for (i, row) in self.t.iter().enumerate() {
                let a = row[c];
                if a > PIVOT_TOL {
                    let ratio = row[self.cols] / a;
                    let cand = (ratio, self.basis[i], i);
                    best = match best {
                        None => Some(cand),
                        Some(b) => {
                            let tie = (ratio - b.0).abs() <= 1e-12 * (1.0 + b.0.abs());
                            if ratio < b.0 && !tie || tie && cand.1 < b.1 {
                                Some(cand)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
            }
            match best {
                None => return false,
                Some((_, _, r)) => self.pivot(r, c),
            }
        }
        // Bland's rule cannot cycle; hitting the cap means numerical trouble.
        true
    }

    fn run(mut self, lp: &LinearProgram) -> LpOutcome {
        let m = self.t.len();
        if self.first_artificial < self.cols {
            let mut cost = vec![0.0; self.cols];
            for c in cost.iter_mut().skip(self.first_artificial) {
                *c = 1.0;
            }
            self.optimise(&cost, self.cols);
            let infeas: f64 = (0..m)
                .filter(|&i| self.basis[i] >= self.first_artificial)
                .map(|i| self.t[i][self.cols])
                .sum();
            if infeas > 1e-9 * self.scale {
                return LpOutcome::Infeasible {
                    certificate: self.farkas(&cost),
                };
            }
            self.drive_out_artificials();
        }
        let mut cost = vec![0.0; self.cols];
        for (j, &cj) in lp.objective.iter().enumerate() {
            let (p, n) = self.var_cols[j];
            cost[p] = cj;
            if let Some(n) = n {
                cost[n] = -cj;
            }
        }
        if !self.optimise(&cost, self.first_artificial) {
            return LpOutcome::Unbounded;
        }
        let mut col_val = vec![0.0; self.cols];
        for (i, &b) in self.basis.iter().enumerate() {
            col_val[b] = self.t[i][self.cols];
        }
        let x: Vec<f64> = self
            .var_cols
            .iter()
            .map(|&(p, n)| col_val[p] - n.map_or(0.0, |n| col_val[n]))
            .collect();
        let value = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        debug_assert!(self.structural <= self.cols);
        LpOutcome::Optimal { x, value }
    }

    fn drive_out_artificials(&mut self) {
        let m = self.t.len();
        let mut drop = Vec::new();
        for i in 0..m {
            if self.basis[i] < self.first_artificial {
                continue;
            }
            let col = (0..self.first_artificial)
                .find(|&j| self.t[i][j].abs() > 1e-9 && !self.basis.contains(&j));
            match col {
                Some(j) => self.pivot(i, j),
                None => drop.push(i),
            }
        }
        // Redundant rows: remove them together with their artificial.
        for &i in drop.iter().rev() {
            self.t.remove(i);
            self.basis.remove(i);
        }
    }

    /// Phase-one duals `y = c_Bᵀ B⁻¹`, mapped back to the caller's rows.
    fn farkas(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.orig.len();
        let b = nalgebra::DMatrix::from_fn(m, m, |i, k| self.orig[i][self.basis[k]]);
        let cb = nalgebra::DVector::from_fn(m, |k, _| cost[self.basis[k]]);
        let y = b
            .transpose()
            .lu()
            .solve(&cb)
            .unwrap_or_else(|| nalgebra::DVector::zeros(m));
        y.iter()
            .zip(&self.row_sign)
            .map(|(yi, s)| yi * s)
            .collect()
    }
}
