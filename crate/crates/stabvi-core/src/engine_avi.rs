//! Approximate value iteration with controlled error injection.
//!
//! Each iteration performs the exact backup sweep and then perturbs every
//! node by `epsilon(x, i)` with `|epsilon| <= c U(x,0)`. Two exact VI runs
//! under the shifted utilities `U -/+ c U(.,0)` are carried in lock step;
//! they must sandwich the approximate iterates node-for-node at every
//! iteration, and a violation beyond float tolerance aborts the run.
//!
//! Alongside the iterates the engine accumulates the trajectory sums
//! `breve_V_i(x) = sum_{k=0..i} U(x_k, 0)` obtained by rolling each node
//! through the stored policies in reverse age order (policy `h_{i-k}` at
//! step `k`). They feed the semi-monotonicity margin
//! `V_{i+1} - V_i - 2c breve_V_i` and the admissible-error constants of the
//! fixed-policy and evolving-policy stability conditions.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::backup::BackupOptions;
use crate::backup::TabulatedPolicy;
use crate::engine_exact::{
    policy_evaluation, quantized_admissible_seed_policy, run_vi, vi_sweep, PolicyEvalConfig,
    ViConfig, ViRun,
};
use crate::error::{Error, Result};
use crate::problem::{AdmissiblePolicySpec, AdmissibilityCheck, ProblemInstance};
use crate::valuefn::{ErrorModel, Grid, GridValueFunction, ValueFunction};
use crate::Clock;

/// Configuration of an approximate-VI run.
#[derive(Debug, Clone)]
pub struct AviConfig {
    pub pol_eval: PolicyEvalConfig,
    /// Number of approximate iterations (the error never lets the recursion
    /// settle, so the count is fixed rather than tolerance-driven).
    pub iterations: usize,
    pub backup: BackupOptions,
    pub admissibility: AdmissibilityCheck,
    /// Margin floor for the sandwich gate (violations below it abort).
    pub sandwich_tol: f64,
    /// Tolerance used when converging the lower bounding run past the
    /// lock-step phase (the region-of-attraction surrogate needs its limit).
    pub bound_tol: f64,
    pub bound_max_iter: usize,
}

impl Default for AviConfig {
    fn default() -> Self {
        Self {
            pol_eval: PolicyEvalConfig::default(),
            iterations: 50,
            backup: BackupOptions::default(),
            admissibility: AdmissibilityCheck::default(),
            sandwich_tol: 1e-9,
            bound_tol: 1e-9,
            bound_max_iter: 10_000,
        }
    }
}

/// Per-iteration margins of the approximate run. Sign conventions: the
/// sandwich and breve-bound margins are "distance to violation" (healthy
/// when `>= -tol`), the semi-monotonicity and Lyapunov margins are residuals
/// (healthy when small / negative respectively).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AviTraceRow {
    /// Transition index: this row describes `V_i -> V_{i+1}`.
    pub iteration: usize,
    pub c: f64,
    pub gamma: f64,
    /// `min_x min(V_hat - V_lower, V_upper - V_hat)` at snapshot `i+1`.
    pub sandwich_margin: f64,
    /// `max_x [ V_{i+1} - V_i - 2c breve_V_i ]` over unflagged nodes.
    pub semi_monotonicity_margin: f64,
    /// `min_x [ V_hat_i - (1-c) breve_V_i ]` over unflagged nodes.
    pub breve_bound_margin: f64,
    /// `max_x [ V_i(f(x, h_i(x))) - V_i(x) ]` over non-origin unflagged nodes.
    pub lyapunov_margin: f64,
    pub elapsed_seconds: f64,
}

/// A completed approximate-VI run with its exact bounding runs.
pub struct AviRun {
    pub grid: Arc<Grid>,
    /// Approximate iterates `V_hat_0 ..= V_hat_N`.
    pub snapshots: Vec<Arc<GridValueFunction>>,
    /// Greedy policies `h_hat_0 ..= h_hat_{N-1}` (policy `i` is greedy for
    /// snapshot `i`).
    pub policies: Vec<Arc<TabulatedPolicy>>,
    /// Exact run under `U - c U(.,0)`, locked to the same iteration count.
    pub lower: ViRun,
    /// Exact run under `U + c U(.,0)`.
    pub upper: ViRun,
    /// The lower bounding run continued to convergence (surrogate input for
    /// the region-of-attraction machinery).
    pub lower_converged: Arc<GridValueFunction>,
    /// `breve[i]` holds the rollout sums `breve_V_i` at the nodes (NaN where
    /// flagged).
    pub breve: Vec<Vec<f64>>,
    /// Nodes whose rollout left the domain at some iteration; excluded from
    /// the margin statistics.
    pub breve_flagged: Vec<bool>,
    /// Error-free cost-to-go of the (quantized) seed policy.
    pub exact_v0: Arc<GridValueFunction>,
    /// Grid surrogate of the smallest `gamma` with `V0 <= gamma U(.,0)`.
    pub gamma: f64,
    pub c: f64,
    pub error_model: ErrorModel,
    /// `min_x min(V_hat_0 - V_lower_0, V_upper_0 - V_hat_0)`.
    pub init_sandwich_margin: f64,
    pub trace: Vec<AviTraceRow>,
    pub frozen: Vec<bool>,
}

/// Which side of the sandwich a bounding run provides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

impl BoundSide {
    fn factor(self) -> f64 {
        match self {
            BoundSide::Lower => -1.0,
            BoundSide::Upper => 1.0,
        }
    }
}

/// Exact stabilizing VI under the shifted utility `U + sign*c*U(.,0)`,
/// seeded with the shifted-utility cost-to-go of the same admissible policy.
pub fn run_bounding_vi(
    p: &ProblemInstance,
    h: &AdmissiblePolicySpec,
    c: f64,
    side: BoundSide,
    grid: &Arc<Grid>,
    cfg: &AviConfig,
    clock: &dyn Clock,
) -> Result<ViRun> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::ContractViolation(format!("bound shift c = {c} must lie in [0, 1)")));
    }
    let quantized = quantized_admissible_seed_policy(p, h, grid, cfg.admissibility)?;
    let s = side.factor() * c;
    let extra = move |x: &[f64]| s * p.utility_zero_control(x);
    let v0 = policy_evaluation(p, &quantized, grid, None, &cfg.pol_eval, Some(&extra))?;
    let vi_cfg = lockstep_cfg(cfg);
    run_vi(p, grid, v0, &vi_cfg, clock, Some(&extra))
}

fn lockstep_cfg(cfg: &AviConfig) -> ViConfig {
    ViConfig {
        pol_eval: cfg.pol_eval,
        // negative tolerance: never stop early, produce exactly `iterations`
        // snapshots so the sandwich can be checked index-for-index
        tol: -1.0,
        max_iter: cfg.iterations,
        backup: cfg.backup,
        check_monotone_down: true,
        monotone_tol: 1e-9,
        admissibility: cfg.admissibility,
    }
}

/// The full approximate-VI pipeline: seed with the error-injected policy
/// evaluation, iterate sweep-plus-injection, and carry the exact bounding
/// runs and rollout accumulators along.
pub fn run_avi(
    p: &ProblemInstance,
    h: &AdmissiblePolicySpec,
    em: &ErrorModel,
    grid: &Arc<Grid>,
    cfg: &AviConfig,
    clock: &dyn Clock,
) -> Result<AviRun> {
    em.validate()?;
    let start = clock.now_seconds();
    let quantized = quantized_admissible_seed_policy(p, h, grid, cfg.admissibility)?;

    let exact_v0 = Arc::new(policy_evaluation(p, &quantized, grid, None, &cfg.pol_eval, None)?);
    let gamma = gamma_of(p, &exact_v0)?;

    let lower = {
        let extra = |x: &[f64]| -em.c * p.utility_zero_control(x);
        let v0 = policy_evaluation(p, &quantized, grid, None, &cfg.pol_eval, Some(&extra))?;
        run_vi(p, grid, v0, &lockstep_cfg(cfg), clock, Some(&extra))?
    };
    let upper = {
        let extra = |x: &[f64]| em.c * p.utility_zero_control(x);
        let v0 = policy_evaluation(p, &quantized, grid, None, &cfg.pol_eval, Some(&extra))?;
        run_vi(p, grid, v0, &lockstep_cfg(cfg), clock, Some(&extra))?
    };

    // Error-injected seed: the fixed point of the policy recursion with the
    // stage cost shifted by epsilon(x, -1), which satisfies the seed
    // equation V(x) = U(x,h(x)) + V(f(x,h(x))) + epsilon(x, -1) on the grid.
    let seed_extra = |x: &[f64]| em.epsilon(p, x, -1);
    let v_hat0 = policy_evaluation(p, &quantized, grid, None, &cfg.pol_eval, Some(&seed_extra))?;

    let frozen = lower.frozen.clone();
    let init_sandwich_margin = sandwich_margin(&v_hat0, &lower.snapshots[0], &upper.snapshots[0]);
    if init_sandwich_margin < -cfg.sandwich_tol {
        return Err(Error::FailedTheoremSandwich {
            node: worst_sandwich_node(grid, &v_hat0, &lower.snapshots[0], &upper.snapshots[0]),
            iteration: 0,
            margin: init_sandwich_margin,
        });
    }

    let origin = grid.origin_flat();
    let mut snapshots: Vec<Arc<GridValueFunction>> = vec![Arc::new(v_hat0)];
    let mut policies: Vec<Arc<TabulatedPolicy>> = Vec::new();
    let mut breve: Vec<Vec<f64>> = Vec::new();
    let mut breve_flagged = vec![false; grid.num_nodes()];
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut x = vec![0.0; grid.dim()];

    for iteration in 0..cfg.iterations {
        let current = snapshots.last().unwrap().clone();
        let breve_i = breve_rollout(p, grid, &policies, iteration, &mut breve_flagged)?;

        let current_vf = ValueFunction::Grid(current.as_ref().clone());
        let out = vi_sweep(p, &current_vf, grid, &cfg.backup, Some(&frozen), None)?;
        let mut values = out.values.values().to_vec();
        for (node, v) in values.iter_mut().enumerate() {
            if frozen[node] {
                continue;
            }
            grid.node_into(node, &mut x);
            *v = crate::valuefn::inject_error(*v, &x, iteration as i64, em, p);
        }
        let v_next = GridValueFunction::new(grid.clone(), values)?;

        let sm = sandwich_margin(
            &v_next,
            &lower.snapshots[iteration + 1],
            &upper.snapshots[iteration + 1],
        );
        if sm < -cfg.sandwich_tol {
            return Err(Error::FailedTheoremSandwich {
                node: worst_sandwich_node(
                    grid,
                    &v_next,
                    &lower.snapshots[iteration + 1],
                    &upper.snapshots[iteration + 1],
                ),
                iteration: iteration + 1,
                margin: sm,
            });
        }

        let mut semi = f64::NEG_INFINITY;
        let mut breve_bound = f64::INFINITY;
        for node in 0..grid.num_nodes() {
            if frozen[node] || breve_flagged[node] {
                continue;
            }
            let b = breve_i[node];
            semi = semi.max(v_next.value_at(node) - current.value_at(node) - 2.0 * em.c * b);
            breve_bound = breve_bound.min(current.value_at(node) - (1.0 - em.c) * b);
        }

        let lyap = delta_v_margin(p, &current, &out.policy, &frozen, origin)?;

        trace.push(AviTraceRow {
            iteration,
            c: em.c,
            gamma,
            sandwich_margin: sm,
            semi_monotonicity_margin: semi,
            breve_bound_margin: breve_bound,
            lyapunov_margin: lyap,
            elapsed_seconds: clock.now_seconds() - start,
        });
        breve.push(breve_i);
        policies.push(Arc::new(out.policy));
        snapshots.push(Arc::new(v_next));
    }

    // Continue the lower bounding recursion to its fixed point.
    let lower_converged = {
        let extra = |x: &[f64]| -em.c * p.utility_zero_control(x);
        let cont_cfg = ViConfig {
            pol_eval: cfg.pol_eval,
            tol: cfg.bound_tol,
            max_iter: cfg.bound_max_iter,
            backup: cfg.backup,
            check_monotone_down: true,
            monotone_tol: 1e-9,
            admissibility: cfg.admissibility,
        };
        let seed = lower.final_value().as_ref().clone();
        let run = run_vi(p, grid, seed, &cont_cfg, clock, Some(&extra))?;
        if !run.converged {
            return Err(Error::OracleFailure(format!(
                "lower bounding run did not converge to tol {:.1e} within {} extra iterations",
                cfg.bound_tol, cfg.bound_max_iter
            )));
        }
        run.snapshots.last().unwrap().clone()
    };

    Ok(AviRun {
        grid: grid.clone(),
        snapshots,
        policies,
        lower,
        upper,
        lower_converged,
        breve,
        breve_flagged,
        exact_v0,
        gamma,
        c: em.c,
        error_model: em.clone(),
        init_sandwich_margin,
        trace,
        frozen,
    })
}

/// `min_x min(v - lo, hi - v)` over all nodes.
fn sandwich_margin(v: &GridValueFunction, lo: &GridValueFunction, hi: &GridValueFunction) -> f64 {
    let mut margin = f64::INFINITY;
    for node in 0..v.values().len() {
        let m = (v.value_at(node) - lo.value_at(node)).min(hi.value_at(node) - v.value_at(node));
        margin = margin.min(m);
    }
    margin
}

fn worst_sandwich_node(
    grid: &Arc<Grid>,
    v: &GridValueFunction,
    lo: &GridValueFunction,
    hi: &GridValueFunction,
) -> Vec<f64> {
    let mut worst = (f64::INFINITY, 0usize);
    for node in 0..v.values().len() {
        let m = (v.value_at(node) - lo.value_at(node)).min(hi.value_at(node) - v.value_at(node));
        if m < worst.0 {
            worst = (m, node);
        }
    }
    grid.node(worst.1)
}

/// Rollout accumulator `breve_V_i(x0) = sum_{k=0}^{i} U(x_k, 0)` along the
/// trajectory that applies policy `policies[i-k]` at step `k` (the evolving
/// policy in reverse age order). Nodes whose rollout leaves the domain are
/// flagged and carry NaN.
pub fn breve_rollout(
    p: &ProblemInstance,
    grid: &Arc<Grid>,
    policies: &[Arc<TabulatedPolicy>],
    i: usize,
    flagged: &mut [bool],
) -> Result<Vec<f64>> {
    if policies.len() < i {
        return Err(Error::ContractViolation(format!(
            "breve rollout at iteration {i} needs {i} policies, have {}",
            policies.len()
        )));
    }
    let mut out = vec![0.0; grid.num_nodes()];
    let mut x = vec![0.0; grid.dim()];
    let mut next = vec![0.0; grid.dim()];
    let mut u = vec![0.0; p.control_dim()];
    for node in 0..grid.num_nodes() {
        grid.node_into(node, &mut x);
        let mut sum = p.utility_zero_control(&x);
        let mut ok = true;
        for k in 1..=i {
            policies[i - k].control_into(&x, &mut u);
            p.step_into(&x, &u, &mut next)?;
            if !p.domain().contains(&next) {
                flagged[node] = true;
                ok = false;
                break;
            }
            p.domain().clamp(&mut next);
            x.copy_from_slice(&next);
            sum += p.utility_zero_control(&x);
        }
        out[node] = if ok { sum } else { f64::NAN };
    }
    Ok(out)
}

/// `max_x [ V(f(x,h(x))) - V(x) ]` over non-origin, unfrozen nodes — the
/// Lyapunov decrease of the iterate under its own greedy policy.
pub fn delta_v_margin(
    p: &ProblemInstance,
    v: &GridValueFunction,
    policy: &TabulatedPolicy,
    frozen: &[bool],
    origin_flat: usize,
) -> Result<f64> {
    let grid = v.grid();
    let mut x = vec![0.0; grid.dim()];
    let mut succ = vec![0.0; grid.dim()];
    let mut worst = f64::NEG_INFINITY;
    for node in 0..grid.num_nodes() {
        if frozen[node] || node == origin_flat {
            continue;
        }
        grid.node_into(node, &mut x);
        p.step_into(&x, policy.control_at(node), &mut succ)?;
        if !p.domain().contains(&succ) {
            continue;
        }
        p.domain().clamp(&mut succ);
        worst = worst.max(v.eval(&succ)? - v.value_at(node));
    }
    Ok(worst)
}

/// Grid surrogate of the smallest `gamma` with `V0(x) <= gamma U(x,0)`:
/// the max ratio over non-origin nodes. A lower bound to the true sup over
/// the box; refine the grid to tighten it.
pub fn gamma_of(p: &ProblemInstance, v0: &GridValueFunction) -> Result<f64> {
    let grid = v0.grid();
    let origin = grid.origin_flat();
    let mut x = vec![0.0; grid.dim()];
    let mut gamma = 0.0_f64;
    for node in 0..grid.num_nodes() {
        if node == origin {
            continue;
        }
        grid.node_into(node, &mut x);
        let u0 = p.utility_zero_control(&x);
        if u0 <= 0.0 {
            return Err(Error::AssumptionViolation(format!(
                "U(x,0) = {u0} at non-origin node {x:?}; the approximate-VI analysis needs \
                 a positive-definite state cost"
            )));
        }
        gamma = gamma.max(v0.value_at(node) / u0);
    }
    Ok(gamma)
}

/// Admissible error bound for stability under any single fixed policy:
/// `c < 1 + 2 gamma - sqrt(4 gamma^2 + 4 gamma)`. Requires `gamma >= 0`;
/// always in `(0, 1]`, and tends to 1 as `gamma -> 0`.
pub fn c_bound_fixed_policy(gamma: f64) -> f64 {
    1.0 + 2.0 * gamma - crate::fmath::sqrt(4.0 * gamma * gamma + 4.0 * gamma)
}

/// Admissible error bound for stability under the evolving policy:
/// `c < 1 + 4 gamma - sqrt(16 gamma^2 + 8 gamma)`. Strictly below the
/// fixed-policy bound for `gamma > 0`.
pub fn c_bound_evolving_policy(gamma: f64) -> f64 {
    1.0 + 4.0 * gamma - crate::fmath::sqrt(16.0 * gamma * gamma + 8.0 * gamma)
}
