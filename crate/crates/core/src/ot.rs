//! Discrete optimal transport between two equally sized sets of weight rows
//! with uniform marginals.
//!
//! Three solvers share the [`OtSolution`] result type:
//!
//! * [`solve_exact`]: with uniform marginals on a square cost the optimum sits
//!   on a vertex of the (scaled) Birkhoff polytope, so the problem is a linear
//!   assignment. Solved with the O(m³) Hungarian method, then the matching is
//!   moved to the lexicographically smallest optimal permutation.
//! * [`solve_sinkhorn`]: entropic regularization, alternating marginal
//!   scaling of `exp(−D/ε)`. Large exponents run on log-domain potentials
//!   with ε annealing, and slow final convergence is finished by Newton
//!   steps on the dual.
//! * [`brute_force_ot`]: enumerates all `m!` permutations; used as an oracle.

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Marginal tolerance promised for maps returned by the exact solvers.
pub const EXACT_MARGINAL_TOL: f64 = 1e-8;

/// Largest side length accepted by [`brute_force_ot`].
pub const BRUTE_FORCE_MAX: usize = 8;

/// Largest kernel exponent handled by plain scaling; above it the
/// iteration runs on log-domain potentials, annealing ε from this exponent.
const ANNEAL_START_EXPONENT: f64 = 50.0;

/// Iteration cap for each intermediate annealing stage.
const ANNEAL_STAGE_ITERS: usize = 500;

/// Plain scaling sweeps before switching to potentials and Newton steps.
const PLAIN_PHASE_ITERS: usize = 1000;

/// Scaling sweeps between Newton phases in the final stage.
const NEWTON_INTERVAL: usize = 200;

/// Newton steps per phase; each counts as one iteration.
const NEWTON_MAX_STEPS: usize = 30;

/// Diagonal shift added to the Newton system.
const NEWTON_DAMPING: f64 = 1e-13;

/// Newton steps spent tightening a converged plan below `tol`.
const REFINE_STEPS: usize = 3;

/// A coupling between two uniform distributions over `m` points.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    t: Matrix,
}

impl TransportMap {
    /// Wraps a coupling after checking shape, sign and marginals at `tol`.
    pub fn new(t: Matrix, tol: f64) -> Result<Self> {
        if !t.is_square() {
            return Err(Error::Shape {
                op: "TransportMap::new",
                left: t.shape(),
                right: (t.rows(), t.rows()),
            });
        }
        if t.data().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("transport map has negative entries".into()));
        }
        let map = Self { t };
        let err = map.marginal_error();
        if err > tol {
            return Err(Error::Numerical(format!(
                "transport map marginal error {err:e} exceeds {tol:e}"
            )));
        }
        Ok(map)
    }

    /// `I / m`: every point keeps its own mass.
    pub fn identity(m: usize) -> Self {
        Self {
            t: Matrix::identity(m).scale(1.0 / m as f64),
        }
    }

    /// `P / m` where `P[i][assignment[i]] = 1`.
    pub fn from_assignment(assignment: &[usize]) -> Self {
        let m = assignment.len();
        let mut t = Matrix::zeros(m, m);
        for (i, &j) in assignment.iter().enumerate() {
            t[(i, j)] = 1.0 / m as f64;
        }
        Self { t }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.t
    }

    pub fn into_matrix(self) -> Matrix {
        self.t
    }

    pub fn side(&self) -> usize {
        self.t.rows()
    }

    /// Largest deviation of any row sum, column sum or the total mass from
    /// its uniform target.
    pub fn marginal_error(&self) -> f64 {
        let target = 1.0 / self.side() as f64;
        let rows = self.t.row_sums();
        let cols = self.t.col_sums();
        let total: f64 = rows.iter().sum();
        rows.iter()
            .chain(&cols)
            .map(|s| (s - target).abs())
            .fold((total - 1.0).abs(), f64::max)
    }

    /// `m · T`: doubly stochastic, a permutation matrix for hard maps.
    pub fn normalized(&self) -> Matrix {
        self.t.scale(self.side() as f64)
    }

    /// The permutation this map encodes if every row and column holds
    /// exactly one nonzero entry equal to `1/m`.
    pub fn as_permutation(&self) -> Option<Vec<usize>> {
        let m = self.side();
        let target = 1.0 / m as f64;
        let mut seen = vec![false; m];
        let mut assignment = Vec::with_capacity(m);
        for i in 0..m {
            let mut hit = None;
            for (j, &v) in self.t.row(i).iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                if v != target || hit.is_some() {
                    return None;
                }
                hit = Some(j);
            }
            let j = hit?;
            if std::mem::replace(&mut seen[j], true) {
                return None;
            }
            assignment.push(j);
        }
        Some(assignment)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Exact,
    Sinkhorn { eps: f64 },
    BruteForce,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::Exact => write!(f, "exact"),
            SolverKind::Sinkhorn { eps } => write!(f, "sinkhorn(eps={eps:e})"),
            SolverKind::BruteForce => write!(f, "brute-force"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OtSolution {
    pub map: TransportMap,
    /// `⟨T, D⟩_F`.
    pub objective: f64,
    pub solver: SolverKind,
    pub iterations: usize,
    /// False only when Sinkhorn ran out of iterations before reaching `tol`.
    pub converged: bool,
}

/// Entropic solver settings. `eps = None` selects `0.01 · mean(D)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    pub eps: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self {
            eps: None,
            tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

impl SinkhornParams {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps: Some(eps),
            ..Self::default()
        }
    }

    pub fn resolve_eps(&self, cost: &Matrix) -> f64 {
        self.eps.unwrap_or_else(|| adaptive_eps(cost))
    }
}

/// `0.01 · mean(D)`, or 1 for an all-zero cost where every eps gives the
/// same (uniform) coupling.
pub fn adaptive_eps(cost: &Matrix) -> f64 {
    let mean = cost.mean();
    if mean > 0.0 {
        0.01 * mean
    } else {
        1.0
    }
}

/// Which solver to apply to each layer's cost matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OtMethod {
    #[default]
    Exact,
    Sinkhorn(SinkhornParams),
}

impl OtMethod {
    pub fn solve(&self, cost: &Matrix) -> Result<OtSolution> {
        match self {
            OtMethod::Exact => solve_exact(cost),
            OtMethod::Sinkhorn(p) => solve_sinkhorn(cost, p.resolve_eps(cost), p.tol, p.max_iter),
        }
    }
}

/// `Σᵢⱼ Tᵢⱼ · Dᵢⱼ`.
pub fn ot_objective(map: &TransportMap, cost: &Matrix) -> Result<f64> {
    frobenius(map.matrix(), cost)
}

fn frobenius(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op: "ot_objective",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(a.data().iter().zip(b.data()).map(|(t, d)| t * d).sum())
}

fn validate_cost(cost: &Matrix) -> Result<()> {
    if !cost.is_square() {
        return Err(Error::Shape {
            op: "optimal transport cost",
            left: cost.shape(),
            right: (cost.rows(), cost.rows()),
        });
    }
    if !cost.is_finite() {
        return Err(Error::NonFinite("optimal transport cost"));
    }
    if cost.data().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("cost matrix has negative entries".into()));
    }
    Ok(())
}

/// Exact minimizer of `⟨T, D⟩_F` under uniform marginals.
///
/// Among equal-cost optima the lexicographically smallest assignment
/// (lowest row first, then lowest column) is returned.
pub fn solve_exact(cost: &Matrix) -> Result<OtSolution> {
    validate_cost(cost)?;
    let assignment = min_cost_assignment(cost);
    let map = TransportMap::from_assignment(&assignment);
    debug_assert!(map.marginal_error() <= EXACT_MARGINAL_TOL);
    let objective = ot_objective(&map, cost)?;
    Ok(OtSolution {
        map,
        objective,
        solver: SolverKind::Exact,
        iterations: cost.rows(),
        converged: true,
    })
}

/// Hungarian method with row/column potentials, followed by a walk to the
/// lexicographically smallest matching within the equality subgraph.
pub fn min_cost_assignment(cost: &Matrix) -> Vec<usize> {
    let n = cost.rows();
    let inf = f64::INFINITY;
    // 1-based; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }

    let scale = cost.data().iter().fold(1.0f64, |m, &c| m.max(c.abs()));
    let tight_tol = 1e-11 * scale;
    let tight = |i: usize, j: usize| (cost[(i, j)] - u[i + 1] - v[j + 1]).abs() <= tight_tol;
    lexicographic_min_matching(n, &mut assignment, tight);
    assignment
}

/// Rewrites a perfect matching into the lexicographically smallest perfect
/// matching of the graph given by `tight`. Every edge of the starting
/// matching must be tight.
fn lexicographic_min_matching(
    n: usize,
    assignment: &mut [usize],
    tight: impl Fn(usize, usize) -> bool,
) {
    let mut owner = vec![0usize; n];
    for (i, &j) in assignment.iter().enumerate() {
        owner[j] = i;
    }

    for i in 0..n {
        let free_col = assignment[i];
        for j in 0..free_col {
            // Columns held by rows < i are locked.
            if owner[j] < i || !tight(i, j) {
                continue;
            }
            // Row owner[j] must move; search an alternating path of tight
            // edges from it to `free_col` through unlocked rows.
            let start = owner[j];
            let mut parent_col = vec![usize::MAX; n];
            let mut queue = std::collections::VecDeque::from([start]);
            let mut visited_row = vec![false; n];
            visited_row[start] = true;
            let mut found = None;
            'bfs: while let Some(r) = queue.pop_front() {
                for c in 0..n {
                    if c == j || owner[c] < i || parent_col[c] != usize::MAX || !tight(r, c) {
                        continue;
                    }
                    parent_col[c] = r;
                    if c == free_col {
                        found = Some(c);
                        break 'bfs;
                    }
                    let next = owner[c];
                    if !visited_row[next] {
                        visited_row[next] = true;
                        queue.push_back(next);
                    }
                }
            }
            let Some(mut c) = found else { continue };
            // Unwind: each row on the path takes the column it reached.
            loop {
                let r = parent_col[c];
                let prev = assignment[r];
                assignment[r] = c;
                owner[c] = r;
                if r == start {
                    break;
                }
                c = prev;
            }
            assignment[i] = j;
            owner[j] = i;
            break;
        }
    }
}

/// Exhaustive search over all `m!` permutations in lexicographic order,
/// keeping the first strict minimum.
pub fn brute_force_ot(cost: &Matrix) -> Result<OtSolution> {
    validate_cost(cost)?;
    let m = cost.rows();
    if m > BRUTE_FORCE_MAX {
        return Err(Error::InvalidArgument(format!(
            "brute force limited to m <= {BRUTE_FORCE_MAX}, got {m}"
        )));
    }
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    let mut count = 0usize;
    loop {
        count += 1;
        let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
        if c < best_cost {
            best_cost = c;
            best.clone_from(&perm);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let map = TransportMap::from_assignment(&best);
    let objective = ot_objective(&map, cost)?;
    Ok(OtSolution {
        map,
        objective,
        solver: SolverKind::BruteForce,
        iterations: count,
        converged: true,
    })
}

/// Advances to the next permutation in lexicographic order; false when
/// `perm` was the last one.
pub fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Entropic OT: `T = diag(u) · exp(−D/ε) · diag(v)` with alternating row and
/// column rescaling until both marginal residuals are within `tol` (max
/// norm) or `max_iter` is reached.
pub fn solve_sinkhorn(cost: &Matrix, eps: f64, tol: f64, max_iter: usize) -> Result<OtSolution> {
    validate_cost(cost)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let scaled = cost.map(|d| d / eps);
    if !scaled.is_finite() {
        return Err(Error::Numerical(format!(
            "kernel exponent overflows: eps {eps:e} is too small"
        )));
    }
    let (f, g, iterations, converged) = sinkhorn(&scaled, tol, max_iter);
    let t = if converged {
        refine(&scaled, &f, &g, tol)
    } else {
        log_plan(&scaled, &f, &g, 1.0)
    };
    if !t.is_finite() || t.data().iter().all(|&v| v == 0.0) {
        return Err(Error::Numerical(format!(
            "sinkhorn kernel underflow: eps {eps:e} is too small"
        )));
    }
    let map = TransportMap { t };
    if converged {
        debug_assert!(map.marginal_error() <= tol * (1.0 + map.side() as f64));
    }
    let objective = ot_objective(&map, cost)?;
    Ok(OtSolution {
        map,
        objective,
        solver: SolverKind::Sinkhorn { eps },
        iterations,
        converged,
    })
}

/// Largest |sum − target| over rows and columns of `t`.
fn residual(t: &Matrix, target: f64) -> f64 {
    t.row_sums()
        .iter()
        .chain(&t.col_sums())
        .map(|s| (s - target).abs())
        .fold(0.0, f64::max)
}

/// Runs the scaling iteration and returns `(f, g, iterations, converged)`
/// with the plan `T_ij = exp(f_i + g_j − D_ij/ε)`.
///
/// Well-conditioned kernels start with plain multiplicative scaling. Large
/// exponents go straight to log-domain potentials with ε annealing. If the
/// target ε is still short of `tol`, the final stage alternates batches of
/// scaling sweeps with Newton steps on the dual, which removes the slow
/// mode that appears when the plan is close to a permutation.
fn sinkhorn(scaled: &Matrix, tol: f64, max_iter: usize) -> (Vec<f64>, Vec<f64>, usize, bool) {
    let m = scaled.rows();
    let target = 1.0 / m as f64;
    let max_exp = scaled.data().iter().fold(0.0f64, |a, &v| a.max(v));
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut iter = 0;

    if max_exp <= ANNEAL_START_EXPONENT {
        let (u, v, used, ok) = sinkhorn_plain(scaled, tol, max_iter.min(PLAIN_PHASE_ITERS));
        iter = used;
        f = u.iter().map(|x| x.ln()).collect();
        g = v.iter().map(|x| x.ln()).collect();
        if ok {
            return (f, g, iter, true);
        }
    } else {
        let mut factor = 1.0;
        while max_exp * factor > ANNEAL_START_EXPONENT {
            factor *= 0.5;
        }
        // Potentials are kept at the target scale; stage exponents are
        // `(f + g − D/ε)·factor`.
        while factor < 1.0 && iter < max_iter {
            let cap = max_iter.min(iter + ANNEAL_STAGE_ITERS);
            let stage_tol = tol.max(1e-3 * target);
            while iter < cap {
                iter += 1;
                log_sweep(scaled, &mut f, &mut g, factor);
                if residual(&log_plan(scaled, &f, &g, factor), target) <= stage_tol {
                    break;
                }
            }
            factor *= 2.0;
        }
    }

    while iter < max_iter {
        let cap = max_iter.min(iter + NEWTON_INTERVAL);
        while iter < cap {
            iter += 1;
            log_sweep(scaled, &mut f, &mut g, 1.0);
            if residual(&log_plan(scaled, &f, &g, 1.0), target) <= tol {
                return (f, g, iter, true);
            }
        }
        let budget = NEWTON_MAX_STEPS.min(max_iter - iter);
        iter += newton_polish(scaled, &mut f, &mut g, tol, budget);
        if residual(&log_plan(scaled, &f, &g, 1.0), target) <= tol {
            return (f, g, iter, true);
        }
    }
    let ok = residual(&log_plan(scaled, &f, &g, 1.0), target) <= tol;
    (f, g, iter, ok)
}

/// Spends a few Newton steps pushing converged potentials toward machine
/// precision, so the leftover marginal slack barely moves the objective.
/// Returns the better of the two plans.
fn refine(scaled: &Matrix, f: &[f64], g: &[f64], tol: f64) -> Matrix {
    let target = 1.0 / scaled.rows() as f64;
    let t = log_plan(scaled, f, g, 1.0);
    let (mut rf, mut rg) = (f.to_vec(), g.to_vec());
    newton_polish(scaled, &mut rf, &mut rg, tol * 1e-6, REFINE_STEPS);
    let refined = log_plan(scaled, &rf, &rg, 1.0);
    if refined.is_finite() && residual(&refined, target) < residual(&t, target) {
        refined
    } else {
        t
    }
}

/// Multiplicative scaling on `K = exp(−D/ε)`; returns `(u, v, iterations,
/// converged)`.
fn sinkhorn_plain(scaled: &Matrix, tol: f64, max_iter: usize) -> (Vec<f64>, Vec<f64>, usize, bool) {
    let m = scaled.rows();
    let target = 1.0 / m as f64;
    let kernel = scaled.map(|x| (-x).exp());
    let mut u = vec![1.0; m];
    let mut v = vec![1.0; m];
    for iter in 1..=max_iter {
        for (i, ui) in u.iter_mut().enumerate() {
            let kv: f64 = kernel.row(i).iter().zip(&v).map(|(k, vj)| k * vj).sum();
            *ui = target / kv;
        }
        for (j, vj) in v.iter_mut().enumerate() {
            let ktu: f64 = (0..m).map(|i| kernel[(i, j)] * u[i]).sum();
            *vj = target / ktu;
        }
        let t = Matrix::from_fn(m, m, |i, j| u[i] * kernel[(i, j)] * v[j]);
        if residual(&t, target) <= tol {
            return (u, v, iter, true);
        }
    }
    (u, v, max_iter, false)
}

/// Log-sum-exp of `xs` with the usual max shift.
fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `T_ij = exp((f_i + g_j − D_ij/ε)·factor)`.
fn log_plan(scaled: &Matrix, f: &[f64], g: &[f64], factor: f64) -> Matrix {
    let m = scaled.rows();
    Matrix::from_fn(m, m, |i, j| ((f[i] + g[j] - scaled[(i, j)]) * factor).exp())
}

/// One row update followed by one column update of the dual potentials.
fn log_sweep(scaled: &Matrix, f: &mut [f64], g: &mut [f64], factor: f64) {
    let m = scaled.rows();
    let log_target = -(m as f64).ln();
    for (i, fi) in f.iter_mut().enumerate() {
        let row = scaled.row(i);
        let lse = log_sum_exp(g.iter().zip(row).map(|(gj, d)| (gj - d) * factor));
        *fi = (log_target - lse) / factor;
    }
    for (j, gj) in g.iter_mut().enumerate() {
        let lse = log_sum_exp((0..m).map(|i| (f[i] - scaled[(i, j)]) * factor));
        *gj = (log_target - lse) / factor;
    }
}

/// Stacked row and column residuals `(T1 − 1/m, Tᵀ1 − 1/m)`.
fn residual_vector(t: &Matrix) -> Vec<f64> {
    let target = 1.0 / t.rows() as f64;
    t.row_sums()
        .into_iter()
        .chain(t.col_sums())
        .map(|s| s - target)
        .collect()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton steps on the marginal equations in `(f, g)`, with the last
/// column potential fixed to remove the shift invariance. Returns the number
/// of steps taken; stops early at `tol` or when no step reduces the residual.
fn newton_polish(scaled: &Matrix, f: &mut [f64], g: &mut [f64], tol: f64, max_steps: usize) -> usize {
    let m = scaled.rows();
    let n = 2 * m - 1;
    for step in 0..max_steps {
        let t = log_plan(scaled, f, g, 1.0);
        let r = residual_vector(&t);
        if r.iter().fold(0.0f64, |a, x| a.max(x.abs())) <= tol || m == 1 {
            return step;
        }
        let rows = t.row_sums();
        let cols = t.col_sums();
        let mut jac = vec![0.0; n * n];
        for i in 0..m {
            jac[i * n + i] = rows[i];
            for j in 0..m - 1 {
                jac[i * n + m + j] = t[(i, j)];
                jac[(m + j) * n + i] = t[(i, j)];
            }
        }
        for j in 0..m - 1 {
            jac[(m + j) * n + m + j] = cols[j];
        }
        // Near-permutation plans make the Jacobian numerically singular.
        for k in 0..n {
            jac[k * n + k] += NEWTON_DAMPING;
        }
        let rhs: Vec<f64> = r[..n].iter().map(|x| -x).collect();
        let Some(delta) = solve_dense(jac, rhs) else {
            return step;
        };
        let base = norm2(&r);
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let nf: Vec<f64> = f.iter().zip(&delta).map(|(x, d)| x + s * d).collect();
            let mut ng = g.to_vec();
            for (x, d) in ng.iter_mut().zip(&delta[m..]) {
                *x += s * d;
            }
            let trial = log_plan(scaled, &nf, &ng, 1.0);
            if trial.is_finite() && norm2(&residual_vector(&trial)) < base * (1.0 - 1e-4 * s) {
                f.copy_from_slice(&nf);
                g.copy_from_slice(&ng);
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            return step + 1;
        }
    }
    max_steps
}

/// Gaussian elimination with partial pivoting on a row-major `n × n` system.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))?;
        if a[pivot * n + col] == 0.0 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        let p = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / p;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= factor * a[col * n + k];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r * n + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m2(rows: [[f64; 2]; 2]) -> Matrix {
        Matrix::from_rows(&rows).unwrap()
    }

    fn random_cost(m: usize, rng: &mut impl Rng) -> Matrix {
        Matrix::from_fn(m, m, |_, _| rng.random_range(0.0..10.0))
    }

    #[test]
    fn exact_diagonal_and_antidiagonal() {
        let s = solve_exact(&m2([[0.0, 1.0], [1.0, 0.0]])).unwrap();
        assert_eq!(s.map.matrix(), &m2([[0.5, 0.0], [0.0, 0.5]]));
        assert_eq!(s.objective, 0.0);

        let s = solve_exact(&m2([[1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_eq!(s.map.matrix(), &m2([[0.0, 0.5], [0.5, 0.0]]));
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn exact_rejects_bad_input() {
        assert!(matches!(
            solve_exact(&Matrix::zeros(2, 3)),
            Err(Error::Shape { .. })
        ));
        let mut d = Matrix::zeros(2, 2);
        d.data_mut()[1] = f64::NAN;
        assert!(solve_exact(&d).is_err());
    }

    #[test]
    fn exact_tie_break_is_lexicographic() {
        let s = solve_exact(&Matrix::from_fn(5, 5, |_, _| 3.0)).unwrap();
        assert_eq!(s.map.as_permutation().unwrap(), vec![0, 1, 2, 3, 4]);

        // Two optima of cost 0: identity-like [1,0,2] vs [2,0,1]... pick the smaller.
        let d = Matrix::from_rows(&[[5.0, 0.0, 0.0], [0.0, 5.0, 5.0], [5.0, 0.0, 0.0]]).unwrap();
        let exact = solve_exact(&d).unwrap();
        let brute = brute_force_ot(&d).unwrap();
        assert_eq!(exact.map.as_permutation(), brute.map.as_permutation());
        assert_eq!(exact.map.as_permutation().unwrap(), vec![1, 0, 2]);
    }

    #[test]
    fn exact_matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let m = rng.random_range(2..=6);
            let d = random_cost(m, &mut rng);
            let e = solve_exact(&d).unwrap();
            let b = brute_force_ot(&d).unwrap();
            assert!((e.objective - b.objective).abs() <= 1e-9);
            assert!(e.map.marginal_error() <= EXACT_MARGINAL_TOL);
            assert!(e.map.as_permutation().is_some());
        }
    }

    #[test]
    fn exact_ties_agree_with_brute_force_on_integer_costs() {
        // Small integer costs create many equal-cost optima.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let m = rng.random_range(2..=6);
            let d = Matrix::from_fn(m, m, |_, _| rng.random_range(0..3) as f64);
            let e = solve_exact(&d).unwrap();
            let b = brute_force_ot(&d).unwrap();
            assert_eq!(e.map.as_permutation(), b.map.as_permutation(), "{d:?}");
        }
    }

    #[test]
    fn brute_force_examples() {
        let d = Matrix::new(1, 1, vec![4.5]).unwrap();
        let s = brute_force_ot(&d).unwrap();
        assert_eq!(s.map.matrix().data(), &[1.0]);
        assert_eq!(s.objective, 4.5);

        let d = m2([[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(brute_force_ot(&d).unwrap().map, solve_exact(&d).unwrap().map);

        assert!(brute_force_ot(&Matrix::zeros(9, 9)).is_err());
    }

    #[test]
    fn brute_force_beats_every_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random_cost(4, &mut rng);
        let best = brute_force_ot(&d).unwrap();
        let mut perm: Vec<usize> = (0..4).collect();
        let mut seen = 0;
        loop {
            seen += 1;
            let map = TransportMap::from_assignment(&perm);
            assert!(best.objective <= ot_objective(&map, &d).unwrap());
            if !next_permutation(&mut perm) {
                break;
            }
        }
        assert_eq!(seen, 24);
    }

    #[test]
    fn objective_examples() {
        let uniform = TransportMap {
            t: Matrix::from_fn(3, 3, |_, _| 1.0 / 9.0),
        };
        let ones = Matrix::from_fn(3, 3, |_, _| 1.0);
        assert!((ot_objective(&uniform, &ones).unwrap() - 1.0).abs() < 1e-15);

        let mut d = Matrix::from_fn(3, 3, |_, _| 2.0);
        for i in 0..3 {
            d[(i, i)] = 0.0;
        }
        assert_eq!(ot_objective(&TransportMap::identity(3), &d).unwrap(), 0.0);

        assert!(ot_objective(&TransportMap::identity(2), &ones).is_err());
    }

    #[test]
    fn objective_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = random_cost(5, &mut rng);
        let s = solve_sinkhorn(&d, 1.0, 1e-9, 10_000).unwrap();
        let mut want = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                want += s.map.matrix()[(i, j)] * d[(i, j)];
            }
        }
        assert!((s.objective - want).abs() <= 1e-12);
    }

    #[test]
    fn sinkhorn_zero_cost_is_uniform() {
        let s = solve_sinkhorn(&Matrix::zeros(2, 2), 0.1, 1e-9, 100).unwrap();
        for &v in s.map.matrix().data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
        let p = SinkhornParams::default();
        assert_eq!(p.resolve_eps(&Matrix::zeros(2, 2)), 1.0);
    }

    #[test]
    fn sinkhorn_small_eps_approaches_exact() {
        let d = m2([[0.0, 1.0], [1.0, 0.0]]);
        let s = solve_sinkhorn(&d, 0.01, 1e-9, 10_000).unwrap();
        assert!(s.converged);
        let e = solve_exact(&d).unwrap();
        assert!(s.map.matrix().max_abs_diff(e.map.matrix()) <= 1e-3);
    }

    #[test]
    fn sinkhorn_log_domain_handles_tiny_eps() {
        let d = m2([[0.0, 1.0], [1.0, 0.0]]);
        // exp(-1/1e-4) underflows to zero in the plain kernel.
        let s = solve_sinkhorn(&d, 1e-4, 1e-9, 10_000).unwrap();
        assert!(s.map.matrix().is_finite());
        assert!(s.map.marginal_error() <= 1e-9 * 3.0);
        assert!((s.map.matrix()[(0, 0)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn sinkhorn_rejects_degenerate_eps() {
        let d = m2([[0.0, 1.0], [1.0, 0.0]]);
        assert!(solve_sinkhorn(&d, 0.0, 1e-9, 10).is_err());
        assert!(matches!(
            solve_sinkhorn(&d, 1e-320, 1e-9, 10),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn sinkhorn_flags_exhausted_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_cost(6, &mut rng);
        let s = solve_sinkhorn(&d, 0.05, 1e-14, 2).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 2);
    }

    #[test]
    fn sinkhorn_log_and_plain_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = random_cost(5, &mut rng);
        let scaled = d.map(|x| x / 0.7);
        let (u, v, _, ok) = sinkhorn_plain(&scaled, 1e-12, 10_000);
        assert!(ok);
        let a = Matrix::from_fn(5, 5, |i, j| u[i] * (-scaled[(i, j)]).exp() * v[j]);
        let (mut f, mut g) = (vec![0.0; 5], vec![0.0; 5]);
        for _ in 0..20 {
            log_sweep(&scaled, &mut f, &mut g, 1.0);
        }
        newton_polish(&scaled, &mut f, &mut g, 1e-14, 50);
        let b = log_plan(&scaled, &f, &g, 1.0);
        assert!(residual(&b, 0.2) <= 1e-14);
        assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn transport_map_rejects_infeasible() {
        let t = m2([[0.5, 0.5], [0.0, 0.0]]);
        assert!(TransportMap::new(t, 1e-8).is_err());
        let t = m2([[0.25, 0.25], [0.25, 0.25]]);
        assert!(TransportMap::new(t, 1e-8).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sinkhorn_never_beats_exact(seed in any::<u64>(), m in 2..7usize, eps in 0.01..5.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random_cost(m, &mut rng);
            let s = solve_sinkhorn(&d, eps, 1e-9, 10_000).unwrap();
            let e = solve_exact(&d).unwrap();
            prop_assert!(s.objective >= e.objective - 1e-9);
            prop_assert!(s.map.marginal_error() <= 1e-9 * (1.0 + m as f64));
        }

        #[test]
        fn sinkhorn_objective_monotone_in_eps(seed in any::<u64>(), m in 2..6usize) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random_cost(m, &mut rng);
            let epss = [0.05, 0.2, 1.0, 4.0];
            let objs: Vec<f64> = epss
                .iter()
                .map(|&e| solve_sinkhorn(&d, e, 1e-11, 100_000).unwrap().objective)
                .collect();
            for w in objs.windows(2) {
                prop_assert!(w[0] <= w[1] + 1e-9, "{objs:?}");
            }
        }

        #[test]
        fn exact_argmin_is_scale_invariant(seed in any::<u64>(), m in 2..9usize, c in 0.01..100.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random_cost(m, &mut rng);
            let a = solve_exact(&d).unwrap();
            let b = solve_exact(&d.scale(c)).unwrap();
            prop_assert_eq!(a.map.as_permutation(), b.map.as_permutation());
            prop_assert!((b.objective - c * a.objective).abs() <= 1e-9 * (1.0 + b.objective));
        }

        #[test]
        fn exact_is_a_vertex(seed in any::<u64>(), m in 1..12usize) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random_cost(m, &mut rng);
            let s = solve_exact(&d).unwrap();
            let t = s.map.matrix();
            for i in 0..m {
                let nz: Vec<f64> = t.row(i).iter().copied().filter(|&v| v != 0.0).collect();
                prop_assert_eq!(nz, vec![1.0 / m as f64]);
                let col = t.column(i);
                prop_assert_eq!(col.iter().filter(|&&v| v != 0.0).count(), 1);
            }
        }
    }
}
