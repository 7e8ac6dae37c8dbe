//! The high-level assignment program
//!
//! ```text
//! maximise    sum_i sum_k P[i][k] * V[i][k]
//! subject to  1 - prod_i (1 - P[i][k] * B[i][k]) >= threshold[k]   for every task k
//!             each row of P is a probability distribution over the K tasks and the null task
//! ```
//!
//! where `B` holds lower bounds on each robot's satisfaction probability.
//! Taking logs, task `k` needs `S_k(P) = -sum_i ln(1 - P[i][k] B[i][k]) >= h_k`
//! with `h_k = -ln(1 - threshold[k])`. `S_k` is convex, so the feasible set is
//! not. The default solver is a primal-dual interior-point method whose Newton
//! systems reduce to one dense equation per task; an augmented Lagrangian
//! method is kept as an alternative. Both run from several starting points and
//! every candidate is verified before it is returned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::BoundSource;

/// Bounds are capped below 1 so every logarithm stays finite.
const MAX_BOUND: f64 = 1.0 - 1e-9;
/// Thresholds are tightened by this much inside the solver so that returned
/// points pass verification despite round-off.
const THRESHOLD_MARGIN: f64 = 1e-7;
/// Tolerance used to accept a solver output.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Smallest barrier parameter used by the interior-point iterations.
const MU_MIN: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AllocationError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("no feasible allocation found")]
    Infeasible,
    #[error(
        "no feasible allocation exists even with static bounds; the tasks need lower \
         thresholds or more robots"
    )]
    StaticInfeasible,
}

/// Problem data: `values` and `bounds` are `N x (K+1)` with the null task
/// last; `thresholds` has one entry per TWTL task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationInput {
    pub values: Vec<Vec<f64>>,
    pub bounds: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
}

impl AllocationInput {
    pub fn new(
        values: Vec<Vec<f64>>,
        bounds: Vec<Vec<f64>>,
        thresholds: Vec<f64>,
    ) -> Result<Self, AllocationError> {
        let input = AllocationInput {
            values,
            bounds,
            thresholds,
        };
        input.validate()?;
        Ok(input)
    }

    pub fn num_robots(&self) -> usize {
        self.values.len()
    }

    /// Number of TWTL tasks, excluding the null task.
    pub fn num_tasks(&self) -> usize {
        self.thresholds.len()
    }

    pub fn validate(&self) -> Result<(), AllocationError> {
        let m = self.num_tasks() + 1;
        if self.bounds.len() != self.values.len() {
            return Err(AllocationError::Shape(format!(
                "{} value rows but {} bound rows",
                self.values.len(),
                self.bounds.len()
            )));
        }
        for (i, (v, b)) in self.values.iter().zip(&self.bounds).enumerate() {
            if v.len() != m || b.len() != m {
                return Err(AllocationError::Shape(format!(
                    "row {i} has {} values and {} bounds, expected {m}",
                    v.len(),
                    b.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(AllocationError::Invalid(format!("row {i} has a non-finite value")));
            }
            if b.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(AllocationError::Invalid(format!("row {i} has a bound outside [0,1]")));
            }
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(0.0..1.0).contains(*t)) {
            return Err(AllocationError::Invalid(format!("threshold {t} is outside [0,1)")));
        }
        Ok(())
    }
}

/// Row-stochastic assignment probabilities, `N x (K+1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationMatrix {
    rows: Vec<Vec<f64>>,
}

impl AllocationMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        AllocationMatrix { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.rows[i][k]
    }

    pub fn num_robots(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self, values: &[Vec<f64>]) -> f64 {
        self.rows
            .iter()
            .zip(values)
            .map(|(p, v)| p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }
}

/// `1 - prod_i (1 - P[i][k] * B[i][k])` for every TWTL task.
pub fn task_probabilities(p: &AllocationMatrix, bounds: &[Vec<f64>], num_tasks: usize) -> Vec<f64> {
    (0..num_tasks)
        .map(|k| {
            let miss: f64 = p
                .rows
                .iter()
                .zip(bounds)
                .map(|(row, b)| 1.0 - row[k].clamp(0.0, 1.0) * b[k])
                .product();
            1.0 - miss
        })
        .collect()
}

/// Checks the task constraints, row sums and signs, each up to `tol`.
pub fn verify_feasibility(
    p: &AllocationMatrix,
    input: &AllocationInput,
    tol: f64,
) -> Result<bool, AllocationError> {
    let m = input.num_tasks() + 1;
    if p.rows.len() != input.num_robots() || p.rows.iter().any(|r| r.len() != m) {
        return Err(AllocationError::Shape(format!(
            "allocation is not {} x {m}",
            input.num_robots()
        )));
    }
    let rows_ok = p
        .rows
        .iter()
        .all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= tol && r.iter().all(|&x| x >= -tol));
    let tasks_ok = task_probabilities(p, &input.bounds, input.num_tasks())
        .iter()
        .zip(&input.thresholds)
        .all(|(prob, th)| *prob >= th - tol);
    Ok(rows_ok && tasks_ok)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    /// Primal-dual interior point on the slack formulation.
    #[default]
    InteriorPoint,
    /// Augmented Lagrangian with projected-gradient inner solves.
    AugmentedLagrangian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Number of starting points: uniform, greedy, then random.
    pub starts: usize,
    pub seed: u64,
    /// Newton iterations per start for the interior-point method.
    pub max_newton: usize,
    /// Multiplier updates per start for the augmented Lagrangian.
    pub max_outer: usize,
    /// Projected-gradient steps per multiplier update.
    pub max_inner: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: SolverMethod::default(),
            starts: 8,
            seed: 0,
            max_newton: 400,
            max_outer: 40,
            max_inner: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub matrix: AllocationMatrix,
    pub objective: f64,
    /// Index of the starting point that produced the solution.
    pub start: usize,
    /// Solver iterations summed over all starts.
    pub iterations: usize,
}

pub fn solve_allocation(input: &AllocationInput) -> Result<Solution, AllocationError> {
    solve_allocation_with(input, &SolverOptions::default())
}

pub fn solve_allocation_with(
    input: &AllocationInput,
    options: &SolverOptions,
) -> Result<Solution, AllocationError> {
    input.validate()?;
    let problem = Problem::new(input);
    if !problem.each_task_reachable() {
        return Err(AllocationError::Infeasible);
    }
    let mut best: Option<Solution> = None;
    let mut iterations = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for start in 0..options.starts.max(1) {
        let x0 = match start {
            0 => problem.uniform_start(),
            1 => problem.greedy_start(),
            _ => problem.random_start(&mut rng),
        };
        let (mut x, iters) = match options.method {
            SolverMethod::InteriorPoint => problem.interior_point(x0, options.max_newton),
            SolverMethod::AugmentedLagrangian => problem.augmented_lagrangian(x0, options),
        };
        iterations += iters;
        let mut matrix = problem.to_matrix(&x);
        if !verify_feasibility(&matrix, input, FEASIBILITY_TOL)? {
            problem.repair(&mut x);
            matrix = problem.to_matrix(&x);
            if !verify_feasibility(&matrix, input, FEASIBILITY_TOL)? {
                continue;
            }
        }
        let objective = matrix.objective(&input.values);
        if best.as_ref().is_none_or(|b| objective > b.objective) {
            best = Some(Solution {
                matrix,
                objective,
                start,
                iterations: 0,
            });
        }
    }
    best.map(|mut s| {
        s.iterations = iterations;
        s
    })
    .ok_or(AllocationError::Infeasible)
}

/// Solves with the adaptive bounds and falls back to the static bounds when
/// that fails. Failure of the static solve is reported as
/// [`AllocationError::StaticInfeasible`].
pub fn allocate_with_fallback(
    values: &[Vec<f64>],
    adaptive: &[Vec<f64>],
    static_bounds: &[Vec<f64>],
    thresholds: &[f64],
    options: &SolverOptions,
) -> Result<(Solution, BoundSource), AllocationError> {
    let adaptive_input = AllocationInput::new(values.to_vec(), adaptive.to_vec(), thresholds.to_vec())?;
    match solve_allocation_with(&adaptive_input, options) {
        Ok(sol) => return Ok((sol, BoundSource::Confidence)),
        Err(AllocationError::Infeasible) => {}
        Err(e) => return Err(e),
    }
    let static_input =
        AllocationInput::new(values.to_vec(), static_bounds.to_vec(), thresholds.to_vec())?;
    match solve_allocation_with(&static_input, options) {
        Ok(sol) => Ok((sol, BoundSource::Static)),
        Err(AllocationError::Infeasible) => Err(AllocationError::StaticInfeasible),
        Err(e) => Err(e),
    }
}

/// Flattened, scaled problem. Variables are `x[i * m + k]`.
struct Problem {
    n: usize,
    m: usize,
    /// Values divided by their largest magnitude.
    values: Vec<f64>,
    bounds: Vec<f64>,
    /// Tasks with a positive threshold and their `h_k`.
    constrained: Vec<(usize, f64)>,
}

impl Problem {
    fn new(input: &AllocationInput) -> Self {
        let n = input.num_robots();
        let m = input.num_tasks() + 1;
        let scale = input
            .values
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let values = input.values.iter().flatten().map(|v| v / scale).collect();
        let bounds = input
            .bounds
            .iter()
            .flat_map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(k, &b)| if k + 1 == m { 0.0 } else { b.min(MAX_BOUND) })
            })
            .collect();
        let constrained = input
            .thresholds
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0.0)
            .map(|(k, &t)| (k, -(1.0 - (t + THRESHOLD_MARGIN).min(MAX_BOUND)).ln()))
            .collect();
        Problem {
            n,
            m,
            values,
            bounds,
            constrained,
        }
    }

    fn to_matrix(&self, x: &[f64]) -> AllocationMatrix {
        AllocationMatrix::from_rows(x.chunks(self.m).map(<[f64]>::to_vec).collect())
    }

    /// `S_k` at `x`.
    fn coverage(&self, x: &[f64], k: usize) -> f64 {
        (0..self.n)
            .map(|i| {
                let j = i * self.m + k;
                -(1.0 - x[j] * self.bounds[j]).ln()
            })
            .sum()
    }

    /// Necessary condition: every task can be met when all robots take it.
    fn each_task_reachable(&self) -> bool {
        let full = vec![1.0; self.n * self.m];
        self.constrained
            .iter()
            .all(|&(k, h)| self.coverage(&full, k) >= h)
    }

    fn best_value_column(&self, i: usize) -> usize {
        let row = &self.values[i * self.m..(i + 1) * self.m];
        let mut best = 0;
        for k in 1..self.m {
            if row[k] > row[best] {
                best = k;
            }
        }
        best
    }

    fn uniform_start(&self) -> Vec<f64> {
        vec![1.0 / self.m as f64; self.n * self.m]
    }

    /// Covers the hardest tasks first with the robots holding the largest
    /// bounds, then gives the remaining mass to each robot's best column.
    fn greedy_start(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n * self.m];
        let mut free = vec![1.0; self.n];
        let mut tasks = self.constrained.clone();
        tasks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (k, h) in tasks {
            let mut need = h;
            let mut robots: Vec<usize> = (0..self.n).collect();
            robots.sort_by(|&a, &b| {
                self.bounds[b * self.m + k]
                    .total_cmp(&self.bounds[a * self.m + k])
                    .then(a.cmp(&b))
            });
            for i in robots {
                let b = self.bounds[i * self.m + k];
                if need <= 0.0 || b <= 0.0 || free[i] <= 0.0 {
                    continue;
                }
                let full = -(1.0 - free[i] * b).ln();
                let take = if full <= need {
                    free[i]
                } else {
                    (1.0 - (-need).exp()) / b
                };
                x[i * self.m + k] += take;
                free[i] -= take;
                need -= -(1.0 - take * b).ln();
            }
        }
        for (i, &rest) in free.iter().enumerate() {
            x[i * self.m + self.best_value_column(i)] += rest.max(0.0);
        }
        x
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n * self.m);
        for _ in 0..self.n {
            let row: Vec<f64> = (0..self.m)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let total: f64 = row.iter().sum();
            x.extend(row.iter().map(|v| v / total));
        }
        x
    }

    /// Augmented Lagrangian `-f(x) + 1/(2 rho) sum_k (max(0, lambda_k + rho g_k)^2 - lambda_k^2)`
    /// with `g_k = 1 - S_k / h_k`, evaluated together with its gradient.
    fn lagrangian(&self, x: &[f64], lambda: &[f64], rho: f64, grad: &mut [f64]) -> f64 {
        let mut value = 0.0;
        for (j, g) in grad.iter_mut().enumerate() {
            value -= self.values[j] * x[j];
            *g = -self.values[j];
        }
        for (c, &(k, h)) in self.constrained.iter().enumerate() {
            let g = 1.0 - self.coverage(x, k) / h;
            let shifted = (lambda[c] + rho * g).max(0.0);
            value += (shifted * shifted - lambda[c] * lambda[c]) / (2.0 * rho);
            if shifted > 0.0 {
                for i in 0..self.n {
                    let j = i * self.m + k;
                    let b = self.bounds[j];
                    if b > 0.0 {
                        grad[j] -= shifted * b / ((1.0 - x[j] * b) * h);
                    }
                }
            }
        }
        value
    }

    /// Local solve by a primal-dual interior-point method on
    ///
    /// ```text
    /// minimise -v.x  s.t.  rows of x sum to 1,  c_k(x) = S_k(x)/h_k - 1 = s_k,  x >= 0,  s >= 0
    /// ```
    ///
    /// The Lagrangian Hessian is diagonal; its concave part is replaced by its
    /// absolute value so every Newton system is positive definite, and the
    /// system is reduced to one dense equation per constrained task.
    fn interior_point(&self, x0: Vec<f64>, max_iter: usize) -> (Vec<f64>, usize) {
        let (n, m) = (self.n, self.m);
        let len = n * m;
        let nc = self.constrained.len();
        // Constraint index of each column.
        let mut col_con = vec![usize::MAX; m];
        for (c, &(k, _)) in self.constrained.iter().enumerate() {
            col_con[k] = c;
        }
        let uniform = 1.0 / m as f64;
        let mut x: Vec<f64> = x0.iter().map(|v| 0.99 * v.max(0.0) + 0.01 * uniform).collect();
        for row in x.chunks_mut(m) {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
        }
        let mut mu = 0.1;
        let mut z: Vec<f64> = x.iter().map(|v| mu / v).collect();
        let mut c = self.constraint_values(&x);
        let mut s: Vec<f64> = c.iter().map(|v| v.max(0.1)).collect();
        let mut lam: Vec<f64> = s.iter().map(|v| mu / v).collect();
        let mut y = vec![0.0; n];
        let mut nu = 1.0;

        let mut q = vec![0.0; len];
        let mut hd = vec![0.0; len];
        let mut gt = vec![0.0; len];
        let mut dx = vec![0.0; len];
        let mut dz = vec![0.0; len];
        let mut a = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut dy = vec![0.0; n];
        let mut mat = vec![0.0; nc * nc];
        let mut rhs = vec![0.0; nc];
        let mut ds = vec![0.0; nc];
        let mut trial = vec![0.0; len];
        let scale = 1.0 + self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

        for iter in 0..max_iter {
            // Derivatives of the normalised constraints and the Hessian diagonal.
            for j in 0..len {
                let cc = col_con[j % m];
                let b = self.bounds[j];
                let sigma = z[j] / x[j];
                if cc == usize::MAX || b <= 0.0 {
                    q[j] = 0.0;
                    hd[j] = sigma + 1e-12;
                } else {
                    let h = self.constrained[cc].1;
                    let r = 1.0 - b * x[j];
                    q[j] = b / (r * h);
                    hd[j] = sigma + lam[cc] * b * b / (r * r * h) + 1e-12;
                }
            }
            // Optimality errors.
            let mut dual_err = 0.0f64;
            let mut comp_err = 0.0f64;
            let mut comp0 = 0.0f64;
            for j in 0..len {
                let i = j / m;
                let cc = col_con[j % m];
                let lq = if cc == usize::MAX { 0.0 } else { q[j] * lam[cc] };
                let rd = -self.values[j] - y[i] - lq - z[j];
                dual_err = dual_err.max(rd.abs());
                comp_err = comp_err.max((x[j] * z[j] - mu).abs());
                comp0 = comp0.max(x[j] * z[j]);
                gt[j] = -self.values[j] - y[i] - lq - mu / x[j];
            }
            let mut primal_err = 0.0f64;
            for cc in 0..nc {
                primal_err = primal_err.max((c[cc] - s[cc]).abs());
                comp_err = comp_err.max((s[cc] * lam[cc] - mu).abs());
                comp0 = comp0.max(s[cc] * lam[cc]);
            }
            dual_err /= scale;
            if dual_err <= 1e-6 && primal_err.max(comp0) <= 1e-9 {
                return (x, iter);
            }
            if dual_err.max(primal_err).max(comp_err) <= 10.0 * mu && mu > MU_MIN {
                mu = (0.2 * mu).min(mu.powf(1.5)).max(MU_MIN);
                continue;
            }

            // Reduced Newton system in the task multipliers.
            for i in 0..n {
                let mut ai = 0.0;
                let mut ti = 0.0;
                for k in 0..m {
                    let j = i * m + k;
                    ai += 1.0 / hd[j];
                    ti += gt[j] / hd[j];
                }
                let row_sum: f64 = x[i * m..(i + 1) * m].iter().sum();
                a[i] = ai;
                t[i] = (1.0 - row_sum) + ti;
            }
            mat.iter_mut().for_each(|v| *v = 0.0);
            for cc in 0..nc {
                mat[cc * nc + cc] = s[cc] / lam[cc];
                rhs[cc] = -(c[cc] - s[cc]) + (mu - s[cc] * lam[cc]) / lam[cc];
            }
            for i in 0..n {
                for c1 in 0..nc {
                    let j1 = i * m + self.constrained[c1].0;
                    let u1 = q[j1] / hd[j1];
                    if u1 == 0.0 {
                        continue;
                    }
                    mat[c1 * nc + c1] += q[j1] * u1;
                    rhs[c1] += u1 * (gt[j1] - t[i] / a[i]);
                    for c2 in 0..nc {
                        let j2 = i * m + self.constrained[c2].0;
                        mat[c1 * nc + c2] -= u1 * (q[j2] / hd[j2]) / a[i];
                    }
                }
            }
            let mut dlam = rhs.clone();
            if !solve_dense(&mut mat, &mut dlam, nc) {
                return (x, iter);
            }
            for i in 0..n {
                let mut acc = t[i];
                for (cc, &(k, _)) in self.constrained.iter().enumerate() {
                    let j = i * m + k;
                    acc -= q[j] / hd[j] * dlam[cc];
                }
                dy[i] = acc / a[i];
            }
            for j in 0..len {
                let i = j / m;
                let cc = col_con[j % m];
                let ql = if cc == usize::MAX { 0.0 } else { q[j] * dlam[cc] };
                dx[j] = (-gt[j] + dy[i] + ql) / hd[j];
                dz[j] = mu / x[j] - z[j] - z[j] / x[j] * dx[j];
            }
            for cc in 0..nc {
                ds[cc] = (mu - s[cc] * lam[cc] - s[cc] * dlam[cc]) / lam[cc];
            }

            // Fraction to the boundary.
            let tau = (1.0 - mu).max(0.99);
            let max_step = |v: &[f64], d: &[f64]| {
                v.iter().zip(d).fold(1.0f64, |acc, (&vi, &di)| {
                    if di < 0.0 {
                        acc.min(-tau * vi / di)
                    } else {
                        acc
                    }
                })
            };
            let alpha_p = max_step(&x, &dx).min(max_step(&s, &ds));
            let alpha_d = max_step(&z, &dz).min(max_step(&lam, &dlam));

            // Backtracking on the l1 merit function of the barrier problem.
            let infeas: f64 = c.iter().zip(&s).map(|(ci, si)| (ci - si).abs()).sum();
            let lam_max = lam.iter().zip(&dlam).fold(0.0f64, |acc, (l, d)| acc.max((l + d).abs()));
            if nu < lam_max {
                nu = 1.5 * lam_max + 1e-3;
            }
            let merit = |xv: &[f64], sv: &[f64], cv: &[f64]| -> f64 {
                let mut phi = 0.0;
                for j in 0..len {
                    phi -= self.values[j] * xv[j] + mu * xv[j].ln();
                }
                for cc in 0..nc {
                    phi += -mu * sv[cc].ln() + nu * (cv[cc] - sv[cc]).abs();
                }
                phi
            };
            let phi0 = merit(&x, &s, &c);
            let mut slope = -nu * infeas;
            for j in 0..len {
                slope += (-self.values[j] - mu / x[j]) * dx[j];
            }
            for cc in 0..nc {
                slope -= mu / s[cc] * ds[cc];
            }
            let mut alpha = alpha_p;
            let mut s_trial = s.clone();
            let mut accepted = false;
            for _ in 0..40 {
                for j in 0..len {
                    trial[j] = x[j] + alpha * dx[j];
                }
                for cc in 0..nc {
                    s_trial[cc] = s[cc] + alpha * ds[cc];
                }
                let c_trial = self.constraint_values(&trial);
                // The constraints are convex, so a step tends to overshoot its
                // linearisation; moving the slack up to meet it only lowers the merit.
                for cc in 0..nc {
                    s_trial[cc] = s_trial[cc].max(c_trial[cc]);
                }
                let phi = merit(&trial, &s_trial, &c_trial);
                if phi.is_finite() && phi <= phi0 + 1e-4 * alpha * slope.min(0.0) {
                    std::mem::swap(&mut x, &mut trial);
                    s.copy_from_slice(&s_trial);
                    c = c_trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            // Round-off stall at the smallest barrier parameter.
            if !accepted || (alpha < 1e-6 && mu <= MU_MIN) {
                return (x, iter + 1);
            }
            for i in 0..n {
                y[i] += alpha * dy[i];
            }
            for j in 0..len {
                // Keep the bound multipliers close to mu / x.
                let zj = z[j] + alpha_d * dz[j];
                z[j] = zj.clamp(mu / (1e10 * x[j]), 1e10 * mu / x[j]);
            }
            for cc in 0..nc {
                lam[cc] = (lam[cc] + alpha_d * dlam[cc]).clamp(mu / (1e10 * s[cc]), 1e10 * mu / s[cc]);
            }
        }
        (x, max_iter)
    }

    fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.constrained
            .iter()
            .map(|&(k, h)| self.coverage(x, k) / h - 1.0)
            .collect()
    }

    fn violation(&self, x: &[f64]) -> Vec<f64> {
        self.constrained
            .iter()
            .map(|&(k, h)| 1.0 - self.coverage(x, k) / h)
            .collect()
    }

    fn augmented_lagrangian(&self, mut x: Vec<f64>, options: &SolverOptions) -> (Vec<f64>, usize) {
        let mut lambda = vec![0.0; self.constrained.len()];
        let mut rho = 10.0;
        let mut last_violation = f64::INFINITY;
        let mut iterations = 0;
        // Inner tolerance tightens as the multipliers settle.
        let mut tol = 1e-3;
        for _ in 0..options.max_outer {
            let previous = x.clone();
            let it = self.projected_gradient(&mut x, &lambda, rho, options.max_inner, tol);
            iterations += it;
            let g = self.violation(&x);
            let violation = g.iter().fold(0.0f64, |acc, &v| acc.max(v));
            let mut multiplier_change = 0.0f64;
            for (l, gk) in lambda.iter_mut().zip(&g) {
                let next = (*l + rho * gk).max(0.0);
                multiplier_change = multiplier_change.max((next - *l).abs());
                *l = next;
            }
            let shift = x
                .iter()
                .zip(&previous)
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            if violation <= 1e-8 && (shift <= 1e-9 || (multiplier_change <= 1e-4 && tol <= 1e-6)) {
                break;
            }
            if violation > 1e-8 && violation > 0.25 * last_violation {
                rho = (rho * 10.0).min(1e8);
            }
            last_violation = violation;
            tol = (tol * 0.1).max(1e-8);
        }
        (x, iterations)
    }

    /// Minimises the augmented Lagrangian over the product of simplices by
    /// spectral projected gradient: Barzilai-Borwein scaled directions with a
    /// nonmonotone Armijo search over the last few values. Returns the
    /// iteration count.
    fn projected_gradient(
        &self,
        x: &mut Vec<f64>,
        lambda: &[f64],
        rho: f64,
        max_iter: usize,
        tol: f64,
    ) -> usize {
        const MEMORY: usize = 10;
        let len = x.len();
        let mut grad = vec![0.0; len];
        let mut value = self.lagrangian(x, lambda, rho, &mut grad);
        let mut recent = [value; MEMORY];
        let mut step = 1.0;
        let mut dir = vec![0.0; len];
        let mut trial = vec![0.0; len];
        let mut trial_grad = vec![0.0; len];
        for iter in 0..max_iter {
            // Stationarity: distance moved by a unit projected step.
            for j in 0..len {
                trial[j] = x[j] - grad[j];
            }
            self.project(&mut trial);
            let stationarity = x
                .iter()
                .zip(&trial)
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            if stationarity < tol {
                return iter;
            }
            for j in 0..len {
                dir[j] = x[j] - step * grad[j];
            }
            self.project(&mut dir);
            let mut slope = 0.0;
            for j in 0..len {
                dir[j] -= x[j];
                slope += dir[j] * grad[j];
            }
            if slope >= 0.0 {
                return iter + 1;
            }
            let reference = recent.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                for j in 0..len {
                    trial[j] = x[j] + t * dir[j];
                }
                let trial_value = self.lagrangian(&trial, lambda, rho, &mut trial_grad);
                if trial_value.is_finite() && trial_value <= reference + 1e-4 * t * slope {
                    let mut sy = 0.0;
                    let mut ss = 0.0;
                    for j in 0..len {
                        let s = trial[j] - x[j];
                        ss += s * s;
                        sy += s * (trial_grad[j] - grad[j]);
                    }
                    if ss < 1e-24 {
                        return iter + 1;
                    }
                    step = if sy > 1e-300 { (ss / sy).clamp(1e-10, 1e10) } else { 1e10 };
                    std::mem::swap(x, &mut trial);
                    std::mem::swap(&mut grad, &mut trial_grad);
                    value = trial_value;
                    recent[iter % MEMORY] = value;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return iter + 1;
            }
        }
        max_iter
    }

    fn project(&self, x: &mut [f64]) {
        let mut sorted = vec![0.0; self.m];
        for row in x.chunks_mut(self.m) {
            project_simplex(row, &mut sorted);
        }
    }

    /// Raises allocation on violated tasks, most violated first, taking mass
    /// from the null task and then from tasks with slack.
    fn repair(&self, x: &mut [f64]) {
        let mut order: Vec<(usize, f64)> = self
            .constrained
            .iter()
            .map(|&(k, h)| (k, h - self.coverage(x, k)))
            .filter(|&(_, deficit)| deficit > 0.0)
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let null = self.m - 1;
        for (k, _) in order {
            let h = self.constrained.iter().find(|c| c.0 == k).unwrap().1;
            let mut robots: Vec<usize> = (0..self.n).collect();
            robots.sort_by(|&a, &b| {
                self.bounds[b * self.m + k]
                    .total_cmp(&self.bounds[a * self.m + k])
                    .then(a.cmp(&b))
            });
            for i in robots {
                let need = h - self.coverage(x, k);
                if need <= 0.0 {
                    break;
                }
                let j = i * self.m + k;
                let b = self.bounds[j];
                if b <= 0.0 {
                    continue;
                }
                let target = ((1.0 - (1.0 - x[j] * b) * (-need).exp()) / b).min(1.0);
                let mut want = target - x[j];
                // Donor columns: the null task, then tasks that keep their slack.
                let donors = std::iter::once(null).chain((0..null).filter(|&c| c != k));
                for c in donors {
                    if want <= 0.0 {
                        break;
                    }
                    let d = i * self.m + c;
                    let available = if c == null {
                        x[d]
                    } else {
                        match self.constrained.iter().find(|t| t.0 == c) {
                            None => x[d],
                            Some(&(_, hc)) => {
                                let slack = self.coverage(x, c) - hc;
                                let bc = self.bounds[d];
                                if slack <= 0.0 || bc <= 0.0 {
                                    0.0
                                } else {
                                    // Largest cut keeping S_c >= h_c.
                                    let floor = (1.0 - (1.0 - x[d] * bc) * slack.exp()) / bc;
                                    (x[d] - floor.max(0.0)).max(0.0)
                                }
                            }
                        }
                    };
                    let moved = want.min(available);
                    x[d] -= moved;
                    x[j] += moved;
                    want -= moved;
                }
            }
        }
    }
}

/// Solves `mat * x = rhs` in place by Gaussian elimination with partial
/// pivoting; returns false when the matrix is singular.
fn solve_dense(mat: &mut [f64], rhs: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| mat[a * n + col].abs().total_cmp(&mat[b * n + col].abs()))
            .unwrap();
        if mat[pivot * n + col].abs() < 1e-300 {
            return false;
        }
        if pivot != col {
            for k in 0..n {
                mat.swap(pivot * n + k, col * n + k);
            }
            rhs.swap(pivot, col);
        }
        for row in col + 1..n {
            let f = mat[row * n + col] / mat[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    mat[row * n + k] -= f * mat[col * n + k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= mat[row * n + k] * rhs[k];
        }
        rhs[row] = acc / mat[row * n + row];
    }
    true
}

/// Euclidean projection of `row` onto the probability simplex.
fn project_simplex(row: &mut [f64], sorted: &mut [f64]) {
    sorted.copy_from_slice(row);
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    for v in row.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}
