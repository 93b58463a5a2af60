//! Dense bounded-variable primal simplex for maximization problems.
//!
//! Every row `a·x (≤|=) b` gets its own slack column, so row duals fall out
//! of the final basis directly. Unbounded-above variables carry
//! [`INFINITE_BOUND`] as their upper limit; the ratio test treats it like any
//! other bound and a step that large is reported as `Unbounded`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Upper-bound sentinel for variables without a finite upper limit.
pub const INFINITE_BOUND: f64 = 1e30;

/// Primal and complementary-slackness tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Acceptance threshold used by [`verify_kkt`].
pub const KKT_TOL: f64 = 1e-7;

const OPTIMALITY_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE_TOL: f64 = 1e-12;
const UNBOUNDED_STEP: f64 = 1e20;
const STALL_LIMIT: usize = 50;
const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefficients: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize objective·x` subject to `rows` and `bounds`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, bounds: Vec<(f64, f64)>) -> Self {
        Self {
            objective,
            rows: Vec::new(),
            bounds,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coefficients: Vec<f64>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(Row {
            coefficients,
            relation,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if self.bounds.len() != n {
            return Err(Error::MalformedLp(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.coefficients.len() != n {
                return Err(Error::MalformedLp(format!(
                    "row {i} has {} coefficients, expected {n}",
                    row.coefficients.len()
                )));
            }
            if !row.rhs.is_finite() || row.coefficients.iter().any(|a| !a.is_finite()) {
                return Err(Error::MalformedLp(format!("row {i} has a non-finite entry")));
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::MalformedLp(format!(
                    "variable {j} bounds must be finite (use INFINITE_BOUND)"
                )));
            }
            if lo > hi {
                return Err(Error::MalformedLp(format!(
                    "variable {j} has lower bound {lo} above upper bound {hi}"
                )));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::MalformedLp("non-finite objective coefficient".into()));
        }
        Ok(())
    }

    /// Row activity `a_i·x` for every row.
    pub fn activities(&self, point: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| dot(&r.coefficients, point))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// Marginal objective change per unit increase of each row's right-hand side.
    pub row_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective_value: f64,
}

impl LpSolution {
    fn without_solution(status: LpStatus, n: usize, m: usize) -> Self {
        Self {
            status,
            primal: vec![0.0; n],
            row_duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            objective_value: 0.0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub applicable: bool,
    pub max_primal_violation: f64,
    pub max_dual_violation: f64,
    pub max_complementarity_violation: f64,
    pub duality_gap: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub max_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau {
    m: usize,
    cols: usize,
    /// `B⁻¹ [A | I | Σ]`, row-major.
    t: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    value: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.cols + j]
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.cols..(i + 1) * self.cols];
                for (dj, &tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        d
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let p = self.at(r, j);
        for k in 0..cols {
            self.t[r * cols + k] /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (pivot_row, after) = rest.split_at_mut(cols);
        for chunk in before.chunks_mut(cols).chain(after.chunks_mut(cols)) {
            let f = chunk[j];
            if f != 0.0 {
                for (x, &pr) in chunk.iter_mut().zip(pivot_row.iter()) {
                    *x -= f * pr;
                }
                chunk[j] = 0.0;
            }
        }
        self.state[self.basis[r]] = State::AtLower; // overwritten by caller
        self.basis[r] = j;
        self.state[j] = State::Basic;
    }

    fn run_phase(&mut self, cost: &[f64], iterations: &mut usize) -> Result<PhaseEnd> {
        let mut bland = false;
        let mut degenerate_run = 0usize;
        loop {
            *iterations += 1;
            if *iterations > MAX_ITERATIONS {
                return Err(Error::IterationLimit(MAX_ITERATIONS));
            }
            let d = self.reduced_costs(cost);

            let mut entering: Option<(usize, f64)> = None;
            for (j, &dj) in d.iter().enumerate() {
                if self.upper[j] - self.lower[j] <= 0.0 {
                    continue;
                }
                let gain = match self.state[j] {
                    State::Basic => continue,
                    State::AtLower if dj > OPTIMALITY_TOL => dj,
                    State::AtUpper if dj < -OPTIMALITY_TOL => -dj,
                    _ => continue,
                };
                if bland {
                    entering = Some((j, gain));
                    break;
                }
                if entering.is_none_or(|(_, g)| gain > g) {
                    entering = Some((j, gain));
                }
            }
            let Some((j, _)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };
            let dir = if self.state[j] == State::AtLower { 1.0 } else { -1.0 };

            // Ratio test; near-ties go to the lowest basic column index.
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..self.m {
                let alpha = dir * self.at(i, j);
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let limit = if alpha > 0.0 {
                    (self.value[b] - self.lower[b]) / alpha
                } else {
                    (self.upper[b] - self.value[b]) / -alpha
                }
                .max(0.0);
                best = match best {
                    None => Some((limit, i, b)),
                    Some((bl, _, _)) if limit < bl - RATIO_TIE_TOL => Some((limit, i, b)),
                    Some((bl, _, bb)) if limit <= bl + RATIO_TIE_TOL && b < bb => {
                        Some((limit.min(bl), i, b))
                    }
                    keep => keep,
                };
            }
            let flip = self.upper[j] - self.lower[j];
            let (step, leaving) = match best {
                Some((limit, r, b)) if limit < flip => (limit, Some((r, b))),
                _ => (flip, None),
            };
            if step >= UNBOUNDED_STEP {
                return Ok(PhaseEnd::Unbounded);
            }

            if step <= RATIO_TIE_TOL {
                degenerate_run += 1;
                if degenerate_run >= STALL_LIMIT {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }

            self.value[j] += dir * step;
            for i in 0..self.m {
                let a = self.at(i, j);
                if a != 0.0 {
                    let b = self.basis[i];
                    self.value[b] -= dir * a * step;
                }
            }
            match leaving {
                None => {
                    self.state[j] = if dir > 0.0 {
                        State::AtUpper
                    } else {
                        State::AtLower
                    };
                    self.value[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
                }
                Some((r, b)) => {
                    let alpha = dir * self.at(r, j);
                    let to_lower = alpha > 0.0;
                    self.pivot(r, j);
                    if to_lower {
                        self.state[b] = State::AtLower;
                        self.value[b] = self.lower[b];
                    } else {
                        self.state[b] = State::AtUpper;
                        self.value[b] = self.upper[b];
                    }
                }
            }
        }
    }
}

/// Solves `lp`. Malformed input is rejected with [`Error::MalformedLp`].
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();
    let m = lp.rows.len();
    let cols = n + 2 * m;
    let slack = |i: usize| n + i;
    let artificial = |i: usize| n + m + i;

    let mut lower = vec![0.0; cols];
    let mut upper = vec![0.0; cols];
    let mut value = vec![0.0; cols];
    let mut state = vec![State::AtLower; cols];
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        lower[j] = lo;
        upper[j] = hi;
        value[j] = lo;
    }
    let mut t = vec![0.0; m * cols];
    let mut basis = vec![0; m];
    let mut sigma = vec![0.0; m];
    for (i, row) in lp.rows.iter().enumerate() {
        let residual = row.rhs - dot(&row.coefficients, &value[..n]);
        let s = slack(i);
        let a = artificial(i);
        upper[s] = match row.relation {
            Relation::Le => INFINITE_BOUND,
            Relation::Eq => 0.0,
        };
        let base = i * cols;
        t[base..base + n].copy_from_slice(&row.coefficients);
        t[base + s] = 1.0;
        if row.relation == Relation::Le && residual >= 0.0 {
            sigma[i] = 1.0;
            basis[i] = s;
            state[s] = State::Basic;
            value[s] = residual;
        } else {
            sigma[i] = if residual >= 0.0 { 1.0 } else { -1.0 };
            upper[a] = INFINITE_BOUND;
            basis[i] = a;
            state[a] = State::Basic;
            value[a] = residual.abs();
        }
        t[base + a] = sigma[i];
        // Normalize so the basic column is a unit vector.
        let p = t[base + basis[i]];
        if p != 1.0 {
            for x in &mut t[base..base + cols] {
                *x /= p;
            }
        }
    }
    let mut tab = Tableau {
        m,
        cols,
        t,
        lower,
        upper,
        value,
        basis,
        state,
    };
    let mut iterations = 0;

    let needs_phase_one = (0..m).any(|i| tab.basis[i] == artificial(i));
    if needs_phase_one {
        let mut cost = vec![0.0; cols];
        for c in &mut cost[n + m..] {
            *c = -1.0;
        }
        tab.run_phase(&cost, &mut iterations)?;
        let infeasibility: f64 = (0..m).map(|i| tab.value[artificial(i)]).sum();
        if infeasibility > FEASIBILITY_TOL {
            return Ok(LpSolution::without_solution(LpStatus::Infeasible, n, m));
        }
    }
    for i in 0..m {
        let a = artificial(i);
        tab.upper[a] = 0.0;
        if tab.state[a] != State::Basic {
            tab.value[a] = 0.0;
        }
    }
    // Drive degenerate artificials out of the basis where a replacement exists.
    for r in 0..m {
        let a = tab.basis[r];
        if a < n + m {
            continue;
        }
        let replacement = (0..n + m).find(|&j| tab.state[j] != State::Basic && tab.at(r, j).abs() > 1e-7);
        if let Some(j) = replacement {
            tab.pivot(r, j);
            tab.state[a] = State::AtLower;
            tab.value[a] = 0.0;
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    if let PhaseEnd::Unbounded = tab.run_phase(&cost, &mut iterations)? {
        return Ok(LpSolution::without_solution(LpStatus::Unbounded, n, m));
    }

    Ok(finish(lp, &tab, &sigma, &cost))
}

/// Recomputes basic values and duals from a fresh factorization of the
/// final basis, with basic columns in ascending index order, so the result
/// depends only on which columns are basic.
fn finish(lp: &LinearProgram, tab: &Tableau, sigma: &[f64], cost: &[f64]) -> LpSolution {
    let n = lp.num_vars();
    let m = lp.rows.len();
    let column = |j: usize, i: usize| -> f64 {
        if j < n {
            lp.rows[i].coefficients[j]
        } else if j < n + m {
            if j - n == i {
                1.0
            } else {
                0.0
            }
        } else if j - n - m == i {
            sigma[i]
        } else {
            0.0
        }
    };
    let mut value = tab.value.clone();
    let mut basic: Vec<usize> = tab.basis.clone();
    basic.sort_unstable();

    let mut duals = vec![0.0; m];
    if m > 0 {
        let b_mat = DMatrix::from_fn(m, m, |i, k| column(basic[k], i));
        let mut rhs = DVector::from_fn(m, |i, _| lp.rows[i].rhs);
        for j in 0..tab.cols {
            if tab.state[j] != State::Basic && value[j] != 0.0 {
                for i in 0..m {
                    rhs[i] -= column(j, i) * value[j];
                }
            }
        }
        let lu = b_mat.clone().lu();
        if let Some(x_b) = lu.solve(&rhs) {
            for (k, &j) in basic.iter().enumerate() {
                value[j] = x_b[k];
            }
        }
        let c_b = DVector::from_fn(m, |k, _| cost[basic[k]]);
        if let Some(y) = b_mat.transpose().lu().solve(&c_b) {
            duals.copy_from_slice(y.as_slice());
        }
    }

    let mut primal: Vec<f64> = value[..n].to_vec();
    for (x, &(lo, hi)) in primal.iter_mut().zip(&lp.bounds) {
        if (*x - lo).abs() <= 1e-11 {
            *x = lo;
        } else if (*x - hi).abs() <= 1e-11 {
            *x = hi;
        }
    }
    for (i, row) in lp.rows.iter().enumerate() {
        if row.relation == Relation::Le && duals[i].abs() <= 1e-12 {
            duals[i] = 0.0;
        }
    }
    let reduced_costs = reduced_costs(lp, &duals);
    let objective_value = dot(&lp.objective, &primal);
    LpSolution {
        status: LpStatus::Optimal,
        primal,
        row_duals: duals,
        reduced_costs,
        objective_value,
    }
}

fn reduced_costs(lp: &LinearProgram, duals: &[f64]) -> Vec<f64> {
    let mut d = lp.objective.clone();
    for (row, &y) in lp.rows.iter().zip(duals) {
        if y != 0.0 {
            for (dj, &a) in d.iter_mut().zip(&row.coefficients) {
                *dj -= y * a;
            }
        }
    }
    d
}

/// Checks primal feasibility of `point` against bounds and rows.
pub fn is_feasible(lp: &LinearProgram, point: &[f64]) -> Result<Feasibility> {
    lp.validate()?;
    if point.len() != lp.num_vars() {
        return Err(Error::MalformedLp(format!(
            "point has {} entries, expected {}",
            point.len(),
            lp.num_vars()
        )));
    }
    let max_violation = primal_violation(lp, point);
    Ok(Feasibility {
        feasible: max_violation <= FEASIBILITY_TOL,
        max_violation,
    })
}

fn primal_violation(lp: &LinearProgram, point: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (&x, &(lo, hi)) in point.iter().zip(&lp.bounds) {
        worst = worst.max(lo - x).max(x - hi);
    }
    for (row, act) in lp.rows.iter().zip(lp.activities(point)) {
        let v = match row.relation {
            Relation::Le => act - row.rhs,
            Relation::Eq => (act - row.rhs).abs(),
        };
        worst = worst.max(v);
    }
    worst
}

/// Recomputes optimality conditions from `lp` and the solution's primal
/// point and row duals alone; reduced costs stored in `sol` are not used.
pub fn verify_kkt(lp: &LinearProgram, sol: &LpSolution) -> KktReport {
    if sol.status != LpStatus::Optimal
        || lp.validate().is_err()
        || sol.primal.len() != lp.num_vars()
        || sol.row_duals.len() != lp.rows.len()
    {
        return KktReport {
            applicable: false,
            max_primal_violation: f64::NAN,
            max_dual_violation: f64::NAN,
            max_complementarity_violation: f64::NAN,
            duality_gap: f64::NAN,
            pass: false,
        };
    }
    let x = &sol.primal;
    let y = &sol.row_duals;
    let primal = primal_violation(lp, x);

    let d = reduced_costs(lp, y);
    let mut dual: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut dual_objective = 0.0;
    for (i, row) in lp.rows.iter().enumerate() {
        dual_objective += y[i] * row.rhs;
        if row.relation == Relation::Le {
            dual = dual.max(-y[i]);
            let slack = row.rhs - dot(&row.coefficients, x);
            comp = comp.max((y[i] * slack).abs());
        }
    }
    for (j, &dj) in d.iter().enumerate() {
        let (lo, hi) = lp.bounds[j];
        if dj > 0.0 {
            // Multiplier on the upper bound.
            if hi >= INFINITE_BOUND {
                dual = dual.max(dj);
            } else {
                dual_objective += dj * hi;
                comp = comp.max((dj * (hi - x[j])).abs());
            }
        } else if dj < 0.0 {
            dual_objective += dj * lo;
            comp = comp.max((dj * (x[j] - lo)).abs());
        }
    }
    let gap = (dot(&lp.objective, x) - dual_objective).abs();
    let pass = primal <= KKT_TOL && dual <= KKT_TOL && comp <= KKT_TOL && gap <= KKT_TOL;
    KktReport {
        applicable: true,
        max_primal_violation: primal,
        max_dual_violation: dual,
        max_complementarity_violation: comp,
        duality_gap: gap,
        pass,
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
