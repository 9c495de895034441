//! Discrete maximum-entropy inference over `A(n, r)`.
//!
//! The solution of `max H(p)` subject to `E_p[f_k] = c_k` has the Gibbs form
//! `p(x) ∝ exp(-sum_k lambda_k f_k(x))`. The multipliers minimize the convex dual
//! `log Z(lambda) + lambda . c`, whose gradient is `c - E_lambda[f]` and whose
//! Hessian is the covariance of `f` under `p_lambda`.
//!
//! This is the only floating-point module of the crate.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_traits::Zero;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::kernel::{enumerate_support, to_f64, Composition, WeightFunction};
use crate::models::{realize, MaSpec};

/// Default bound on the dual gradient.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Sup-norm tolerance for comparing pmfs.
pub const PMF_TOL: f64 = 1e-10;

const MAX_ITERATIONS: usize = 500;

pub type ConstraintFn = Box<dyn Fn(&Composition) -> f64 + Send + Sync>;

pub struct MaxEntProblem {
    n: usize,
    r: usize,
    support: Vec<Composition>,
    constraint_functions: Vec<ConstraintFn>,
    targets: Vec<f64>,
}

impl MaxEntProblem {
    /// Problem over all of `A(n, r)`.
    pub fn new(n: usize, r: usize, constraint_functions: Vec<ConstraintFn>, targets: Vec<f64>) -> Result<Self> {
        let support = enumerate_support(n, r)?;
        Self::on_support(n, r, support, constraint_functions, targets)
    }

    /// Problem restricted to a subset of `A(n, r)`.
    pub fn on_support(
        n: usize,
        r: usize,
        support: Vec<Composition>,
        constraint_functions: Vec<ConstraintFn>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if constraint_functions.len() != targets.len() {
            return Err(Error::Domain(format!(
                "{} constraint functions but {} targets",
                constraint_functions.len(),
                targets.len()
            )));
        }
        if support.is_empty() {
            return Err(Error::Domain("empty MaxEnt support".into()));
        }
        if support.iter().any(|x| x.len() != n || x.total() != r) {
            return Err(Error::Domain(format!("support is not inside A({n}, {r})")));
        }
        if targets.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("MaxEnt targets must be finite".into()));
        }
        Ok(MaxEntProblem {
            n,
            r,
            support,
            constraint_functions,
            targets,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn support(&self) -> &[Composition] {
        &self.support
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn features(&self) -> Result<Vec<Vec<f64>>> {
        let rows: Vec<Vec<f64>> = self
            .support
            .iter()
            .map(|x| self.constraint_functions.iter().map(|f| f(x)).collect())
            .collect();
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("constraint function is not finite on the support".into()));
        }
        Ok(rows)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxEntSolution {
    pub multipliers: Vec<f64>,
    pub support: Vec<Composition>,
    /// Probabilities aligned with `support`.
    pub pmf: Vec<f64>,
    pub dual_value: f64,
    /// `E[f_k] - c_k` at the returned multipliers.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl MaxEntSolution {
    pub fn prob(&self, x: &[usize]) -> f64 {
        self.support
            .iter()
            .position(|s| s.entries() == x)
            .map_or(0.0, |i| self.pmf[i])
    }

    pub fn pmf_map(&self) -> BTreeMap<Composition, f64> {
        self.support.iter().cloned().zip(self.pmf.iter().copied()).collect()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "multipliers": self.multipliers.iter().map(|v| format_float(*v)).collect::<Vec<_>>(),
            "residuals": self.residuals.iter().map(|v| format_float(*v)).collect::<Vec<_>>(),
            "dual_value": format_float(self.dual_value),
            "iterations": self.iterations,
            "pmf": pmf_json(&self.pmf_map()),
        })
    }
}

/// 17 significant digits, e.g. `3.3333333333333333e-2`.
pub fn format_float(value: f64) -> String {
    format!("{value:.16e}")
}

fn pmf_json(pmf: &BTreeMap<Composition, f64>) -> Value {
    Value::Array(
        pmf.iter()
            .map(|(x, p)| json!({ "x": x.entries(), "p": format_float(*p) }))
            .collect(),
    )
}

/// Gibbs weights, expectations and covariance at one multiplier vector.
struct GibbsState {
    pmf: Vec<f64>,
    log_partition: f64,
    mean: Vec<f64>,
}

fn gibbs_state(features: &[Vec<f64>], lambda: &[f64]) -> GibbsState {
    let logits: Vec<f64> = features
        .iter()
        .map(|f| -f.iter().zip(lambda).map(|(fk, lk)| fk * lk).sum::<f64>())
        .collect();
    let shift = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pmf: Vec<f64> = logits.iter().map(|l| (l - shift).exp()).collect();
    let z: f64 = pmf.iter().sum();
    for p in &mut pmf {
        *p /= z;
    }
    let m = lambda.len();
    let mut mean = vec![0.0; m];
    for (p, f) in pmf.iter().zip(features) {
        for k in 0..m {
            mean[k] += p * f[k];
        }
    }
    GibbsState {
        pmf,
        log_partition: shift + z.ln(),
        mean,
    }
}

fn covariance(features: &[Vec<f64>], state: &GibbsState) -> DMatrix<f64> {
    let m = state.mean.len();
    let mut cov = DMatrix::zeros(m, m);
    for (p, f) in state.pmf.iter().zip(features) {
        for i in 0..m {
            let di = f[i] - state.mean[i];
            for j in 0..m {
                cov[(i, j)] += p * di * (f[j] - state.mean[j]);
            }
        }
    }
    cov
}

fn dual_value(state: &GibbsState, lambda: &[f64], targets: &[f64]) -> f64 {
    state.log_partition + lambda.iter().zip(targets).map(|(l, c)| l * c).sum::<f64>()
}

/// Solves with all multipliers starting at zero.
pub fn solve_gibbs(problem: &MaxEntProblem, tol: f64) -> Result<MaxEntSolution> {
    solve_gibbs_from(problem, tol, &vec![0.0; problem.targets.len()])
}

/// Solves starting from `init`. Constraints that are constant on the support
/// carry no information: their multiplier is reported as 0.
pub fn solve_gibbs_from(problem: &MaxEntProblem, tol: f64, init: &[f64]) -> Result<MaxEntSolution> {
    let features = problem.features()?;
    let m = problem.targets.len();
    if init.len() != m {
        return Err(Error::Domain("initial multipliers have the wrong length".into()));
    }

    // Split constant constraints from informative ones.
    let mut active = Vec::new();
    for k in 0..m {
        let (lo, hi) = features
            .iter()
            .map(|f| f[k])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let c = problem.targets[k];
        let scale = 1.0 + lo.abs().max(hi.abs());
        if hi - lo <= 1e-12 * scale {
            if (c - lo).abs() > tol.max(1e-12) * scale {
                return Err(Error::Infeasible(format!(
                    "constraint {k} is constant {lo} on the support but the target is {c}"
                )));
            }
        } else if c <= lo || c >= hi {
            return Err(Error::Infeasible(format!(
                "target {c} of constraint {k} is outside the open range ({lo}, {hi})"
            )));
        } else {
            active.push(k);
        }
    }

    let reduced: Vec<Vec<f64>> = features
        .iter()
        .map(|f| active.iter().map(|&k| f[k]).collect())
        .collect();
    let targets: Vec<f64> = active.iter().map(|&k| problem.targets[k]).collect();
    let start: Vec<f64> = active.iter().map(|&k| init[k]).collect();
    let scale = 1.0
        + targets.iter().map(|c| c.abs()).fold(0.0, f64::max)
        + reduced.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let threshold = tol * scale;

    let (lambda, iterations) = match active.len() {
        0 => (Vec::new(), 0),
        1 => solve_scalar(&reduced, targets[0], start[0], threshold)?,
        _ => solve_newton(&reduced, &targets, start, threshold)?,
    };

    let mut multipliers = vec![0.0; m];
    for (slot, &k) in active.iter().enumerate() {
        multipliers[k] = lambda[slot];
    }
    let state = gibbs_state(&features, &multipliers);
    let residuals = (0..m).map(|k| state.mean[k] - problem.targets[k]).collect();
    Ok(MaxEntSolution {
        dual_value: dual_value(&state, &multipliers, &problem.targets),
        multipliers,
        support: problem.support.clone(),
        pmf: state.pmf,
        residuals,
        iterations,
    })
}

/// Safeguarded Newton on the strictly decreasing map `lambda -> E_lambda[f]`.
fn solve_scalar(features: &[Vec<f64>], target: f64, start: f64, threshold: f64) -> Result<(Vec<f64>, usize)> {
    let eval = |l: f64| {
        let state = gibbs_state(features, &[l]);
        let var = covariance(features, &state)[(0, 0)];
        (state.mean[0] - target, var)
    };

    // Bracket the root: h(lo) > 0 > h(hi).
    let (mut lo, mut hi) = (start, start);
    let mut step = 1.0;
    let (h0, _) = eval(start);
    if h0.abs() <= threshold {
        return Ok((vec![start], 0));
    }
    if h0 > 0.0 {
        while eval(hi).0 > 0.0 {
            lo = hi;
            hi += step;
            step *= 2.0;
            if !hi.is_finite() || step > 1e300 {
                return Err(Error::NonConvergence { iterations: 0, residual: h0 });
            }
        }
    } else {
        while eval(lo).0 < 0.0 {
            hi = lo;
            lo -= step;
            step *= 2.0;
            if !lo.is_finite() || step > 1e300 {
                return Err(Error::NonConvergence { iterations: 0, residual: h0 });
            }
        }
    }

    let mut lambda = 0.5 * (lo + hi);
    let mut last = f64::INFINITY;
    for iteration in 1..=MAX_ITERATIONS {
        let (h, var) = eval(lambda);
        last = h;
        if h.abs() <= threshold {
            return Ok((vec![lambda], iteration));
        }
        if h > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let newton = lambda + h / var;
        lambda = if var > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * (1.0 + lambda.abs()) {
            let (h, _) = eval(lambda);
            if h.abs() <= threshold {
                return Ok((vec![lambda], iteration));
            }
            return Err(Error::NonConvergence { iterations: iteration, residual: h });
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        residual: last,
    })
}

/// Damped Newton on the dual with the covariance matrix as Hessian.
fn solve_newton(features: &[Vec<f64>], targets: &[f64], start: Vec<f64>, threshold: f64) -> Result<(Vec<f64>, usize)> {
    let m = targets.len();
    let mut lambda = start;
    let mut state = gibbs_state(features, &lambda);
    let mut value = dual_value(&state, &lambda, targets);
    let mut residual = f64::INFINITY;
    for iteration in 1..=MAX_ITERATIONS {
        let gradient = DVector::from_iterator(m, (0..m).map(|k| targets[k] - state.mean[k]));
        residual = gradient.amax();
        if residual <= threshold {
            return Ok((lambda, iteration));
        }
        let mut hessian = covariance(features, &state);
        let ridge = 1e-12 * (1.0 + hessian.diagonal().amax());
        for k in 0..m {
            hessian[(k, k)] += ridge;
        }
        let direction = match hessian.clone().cholesky() {
            Some(chol) => -chol.solve(&gradient),
            None => -gradient.clone(),
        };
        let slope = gradient.dot(&direction);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = (0..m).map(|k| lambda[k] + t * direction[k]).collect();
            let trial_state = gibbs_state(features, &trial);
            let trial_value = dual_value(&trial_state, &trial, targets);
            // Close to the optimum the dual decrease drops below rounding, so a
            // smaller gradient also counts as progress.
            let trial_residual = (0..m)
                .map(|k| (targets[k] - trial_state.mean[k]).abs())
                .fold(0.0, f64::max);
            if trial_value <= value + 1e-4 * t * slope || trial_residual < 0.5 * residual || t < 1e-12 {
                lambda = trial;
                state = trial_state;
                value = trial_value;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

fn log_weight(a: &WeightFunction, x: &Composition) -> f64 {
    x.iter().map(|&xj| to_f64(&a.weight(xj)).ln()).sum()
}

/// Points of `A(n, r)` where `prod_j a(x_j) > 0`.
fn positive_support(a: &WeightFunction, n: usize, r: usize) -> Result<Vec<Composition>> {
    let support: Vec<Composition> = enumerate_support(n, r)?
        .into_iter()
        .filter(|x| x.iter().all(|&xj| a.is_positive_at(xj)))
        .collect();
    if support.is_empty() {
        return Err(Error::ZeroNormalizer { n, r });
    }
    Ok(support)
}

/// `E[sum_j log a(X_j)]` under the exact `M^(a)(n, r)` model.
pub fn exact_log_weight_mean(a: &WeightFunction, n: usize, r: usize) -> Result<f64> {
    let model = realize(&MaSpec::new(a.clone(), n, r)?)?;
    Ok(model.iter().map(|(x, p)| to_f64(p) * log_weight(a, x)).sum())
}

/// MaxEnt with the single constraint `E[sum_j log a(x_j)] = c`.
///
/// Zero weights are handled by restricting the support to points with
/// `prod_j a(x_j) > 0`. When `log a` sums to a constant on that support
/// (Bose-Einstein and its gauge images) every multiplier yields the same
/// uniform solution; the multiplier is then reported as -1, the value under
/// which the Gibbs form is `prod_j a(x_j)`.
pub fn solve_ma(a: &WeightFunction, n: usize, r: usize, c: f64, tol: f64) -> Result<MaxEntSolution> {
    let support = positive_support(a, n, r)?;
    let weights = a.clone();
    let f: ConstraintFn = Box::new(move |x| log_weight(&weights, x));
    let problem = MaxEntProblem::on_support(n, r, support, vec![f], vec![c])?;
    let mut solution = solve_gibbs(&problem, tol)?;
    let values: Vec<f64> = problem.support().iter().map(|x| log_weight(a, x)).collect();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if hi - lo <= 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        solution.multipliers[0] = -1.0;
        solution.dual_value = -solution.pmf.iter().map(|p| p * p.ln()).sum::<f64>();
    }
    Ok(solution)
}

/// `solve_ma` with `c` set to the exact expectation under `M^(a)(n, r)`.
pub fn solve_ma_exact_target(a: &WeightFunction, n: usize, r: usize, tol: f64) -> Result<MaxEntSolution> {
    let c = exact_log_weight_mean(a, n, r)?;
    solve_ma(a, n, r, c, tol)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaleConsistencyReport {
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
    pub s: usize,
    pub fine: MaxEntSolution,
    /// Fine solution pushed forward by merging blocks of `s` cells.
    pub pushforward: BTreeMap<Composition, f64>,
    /// Coarse-scale family solution matching the pushforward's constraint value.
    pub coarse: MaxEntSolution,
    /// Sup-norm distance between `pushforward` and `coarse`.
    pub gap: f64,
    pub consistent: bool,
}

impl ScaleConsistencyReport {
    pub fn to_json(&self) -> Value {
        json!({
            "n1": self.n1,
            "n2": self.n2,
            "r": self.r,
            "s": self.s,
            "fine": self.fine.to_json(),
            "pushforward": pmf_json(&self.pushforward),
            "coarse": self.coarse.to_json(),
            "gap": format_float(self.gap),
            "consistent": self.consistent,
        })
    }
}

/// Solves MaxEnt at scale `n1` with weights `family(1)` and target `c1`
/// (default: the exact fine-scale expectation), merges the solution onto
/// `n2 = n1 / s` cells, and compares it with the member of the coarse family
/// `family(s)` that has the same constraint value (its information projection).
/// The family is consistent at these scales iff the sup-norm gap is at most
/// [`PMF_TOL`].
pub fn check_scale_consistency(
    family: &dyn Fn(usize) -> Result<WeightFunction>,
    n1: usize,
    n2: usize,
    r: usize,
    c1: Option<f64>,
) -> Result<ScaleConsistencyReport> {
    if n2 == 0 || !n1.is_multiple_of(n2) {
        return Err(Error::Domain(format!("coarse scale {n2} does not divide fine scale {n1}")));
    }
    let s = n1 / n2;
    let fine_a = family(1)?;
    let c1 = match c1 {
        Some(c) => c,
        None => exact_log_weight_mean(&fine_a, n1, r)?,
    };
    let fine = solve_ma(&fine_a, n1, r, c1, DEFAULT_TOL)?;

    let mut pushforward: BTreeMap<Composition, f64> = BTreeMap::new();
    for (z, p) in fine.support.iter().zip(&fine.pmf) {
        let x: Vec<usize> = z.chunks(s).map(|block| block.iter().sum()).collect();
        *pushforward.entry(Composition::new(x)).or_insert(0.0) += p;
    }

    let coarse_a = family(s)?;
    let (mut mass, mut moment) = (0.0, 0.0);
    for (x, p) in &pushforward {
        if x.iter().all(|&xj| coarse_a.is_positive_at(xj)) {
            mass += p;
            moment += p * log_weight(&coarse_a, x);
        }
    }
    if mass.is_zero() {
        return Err(Error::Infeasible(
            "pushforward has no mass on the coarse family's support".into(),
        ));
    }
    let coarse = solve_ma(&coarse_a, n2, r, moment / mass, DEFAULT_TOL)?;

    let coarse_map = coarse.pmf_map();
    let gap = pushforward
        .keys()
        .chain(coarse_map.keys())
        .map(|x| {
            let left = pushforward.get(x).copied().unwrap_or(0.0);
            let right = coarse_map.get(x).copied().unwrap_or(0.0);
            (left - right).abs()
        })
        .fold(0.0, f64::max);

    Ok(ScaleConsistencyReport {
        n1,
        n2,
        r,
        s,
        fine,
        pushforward,
        coarse,
        gap,
        consistent: gap <= PMF_TOL,
    })
}
