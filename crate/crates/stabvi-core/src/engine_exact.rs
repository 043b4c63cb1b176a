//! Exact and stabilizing value iteration.
//!
//! Stabilizing VI seeds the recursion with the evaluated cost-to-go of an
//! admissible policy, computed by the monotone policy-evaluation iteration
//! `V_{j+1}(x) = U(x,h(x)) + V_j(f(x,h(x)))` from a seed in `[0, U(x,0)]`.
//! With that seed the VI iterates are pointwise non-increasing; the engine
//! enforces this as a hard gate (`monotone_tol`, default `1e-9`) because a
//! violation beyond float noise falsifies the run.
//!
//! Sweeps are synchronous (Jacobi): every node of the next snapshot reads
//! only the previous snapshot. Nodes where every control candidate exits the
//! domain are frozen at their seed value and flagged; the flag set depends
//! only on geometry, so it is computed once per run.
//!
//! The finite-horizon oracle enumerates control sequences exhaustively and
//! prices them forward. Together with [`run_stabilizing_vi_chain`] (recursive
//! nested-min evaluation over a quadratic base) it forms the two independent
//! routes behind the value-iteration/finite-horizon equivalence checks.

use alloc::format;
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::backup::{bellman_backup, BackupOptions, Policy, TabulatedPolicy};
use crate::error::{Error, Result};
use crate::problem::{
    check_admissibility, AdmissiblePolicySpec, AdmissibilityCheck, ProblemInstance, MAX_DIM,
};
use crate::valuefn::{
    sup_norm_diff, BackupChain, Grid, GridValueFunction, QuadraticValueFunction, ValueFunction,
    NEGATIVE_CLAMP,
};
use crate::Clock;

/// One per-iteration diagnostics record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// `max_x |V_next - V|` over nodes.
    pub sup_norm_delta: f64,
    /// `max_x (V_next - V)` over unfrozen nodes; `<= 1e-9` on stabilizing runs.
    pub max_monotonicity_residual: f64,
    /// `max_x [ V(f(x,h(x))) - V(x) + U'(x,h(x)) ]`, recomputed independently
    /// of the sweep output.
    pub max_lyapunov_residual: f64,
    pub elapsed_seconds: f64,
}

/// Append-only list of [`TraceRow`]s.
#[derive(Debug, Default, Clone)]
pub struct IterationTrace {
    rows: Vec<TraceRow>,
}

impl IterationTrace {
    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }
}

/// Termination parameters for the policy-evaluation recursion.
#[derive(Debug, Clone, Copy)]
pub struct PolicyEvalConfig {
    /// Uniform stop rule: quit once `sup_x |V_{j+1} - V_j| <= delta`.
    pub delta: f64,
    pub max_iter: usize,
}

impl Default for PolicyEvalConfig {
    fn default() -> Self {
        Self { delta: 1e-8, max_iter: 1_000_000 }
    }
}

/// State-only additive term stacked on the stage cost, `U'(x,u) = U(x,u) + extra(x)`.
///
/// Covers the bounding recursions (`-c U(x,0)` / `+c U(x,0)`) and the
/// error-injected seed equation; being control-independent it never moves an
/// argmin.
pub type ExtraStateCost<'a> = &'a dyn Fn(&[f64]) -> f64;

/// Monotone policy evaluation on the grid.
///
/// Seeds default to zero; any seed must satisfy `0 <= seed(x) <= U'(x,0)` at
/// the nodes. Iterates are checked to be pointwise non-decreasing (residual
/// tolerance `1e-9`); a closed-loop successor outside the domain aborts with
/// the exiting point.
pub fn policy_evaluation(
    p: &ProblemInstance,
    h: &Policy,
    grid: &Arc<Grid>,
    seed: Option<&GridValueFunction>,
    cfg: &PolicyEvalConfig,
    extra: Option<ExtraStateCost<'_>>,
) -> Result<GridValueFunction> {
    let nodes = grid.num_nodes();
    let nd = grid.dim();
    let corners = 1usize << nd;
    let mut x = vec![0.0; nd];
    let mut u = vec![0.0; p.control_dim()];
    let mut succ = vec![0.0; nd];

    // The closed-loop successor and stage cost never change across j.
    let mut cost_step = vec![0.0; nodes];
    let mut stencil_idx = vec![0usize; nodes * corners];
    let mut stencil_w = vec![0.0; nodes * corners];
    for node in 0..nodes {
        grid.node_into(node, &mut x);
        h.control_into(&x, &mut u);
        p.step_into(&x, &u, &mut succ)?;
        if !p.domain().contains(&succ) {
            return Err(Error::DomainExit { x: succ.clone() });
        }
        p.domain().clamp(&mut succ);
        let mut cost = p.utility(&x, &u)?;
        if let Some(f) = extra {
            cost += f(&x);
        }
        if cost < 0.0 {
            if cost < NEGATIVE_CLAMP {
                return Err(Error::AssumptionViolation(format!(
                    "shifted stage cost {cost:.3e} is negative at {x:?}"
                )));
            }
            cost = 0.0;
        }
        cost_step[node] = cost;
        grid.interp_stencil(
            &succ,
            &mut stencil_idx[node * corners..(node + 1) * corners],
            &mut stencil_w[node * corners..(node + 1) * corners],
        )?;
    }

    let mut v: Vec<f64> = match seed {
        Some(s) => {
            if !Arc::ptr_eq(s.grid(), grid) && s.grid().as_ref() != grid.as_ref() {
                return Err(Error::GridMismatch);
            }
            for node in 0..nodes {
                grid.node_into(node, &mut x);
                let mut bound = p.utility_zero_control(&x);
                if let Some(f) = extra {
                    bound += f(&x);
                }
                let val = s.value_at(node);
                if val < 0.0 || val > bound + 1e-12 {
                    return Err(Error::ContractViolation(format!(
                        "policy-evaluation seed must satisfy 0 <= V0(x) <= U(x,0) (+shift); \
                         got {val:.6e} vs bound {bound:.6e} at {x:?}"
                    )));
                }
            }
            s.values().to_vec()
        }
        None => vec![0.0; nodes],
    };

    let mut next = vec![0.0; nodes];
    for _ in 0..cfg.max_iter {
        let mut sup = 0.0_f64;
        for node in 0..nodes {
            let mut acc = cost_step[node];
            let base = node * corners;
            for c in 0..corners {
                let w = stencil_w[base + c];
                if w != 0.0 {
                    acc += w * v[stencil_idx[base + c]];
                }
            }
            let d = acc - v[node];
            if d < -1e-9 {
                return Err(Error::FailedLemmaMonotoneUp { node: grid.node(node), residual: -d });
            }
            sup = sup.max(crate::fmath::abs(d));
            next[node] = acc;
        }
        core::mem::swap(&mut v, &mut next);
        if sup <= cfg.delta {
            return GridValueFunction::new(grid.clone(), v);
        }
    }
    Err(Error::OracleFailure(format!(
        "policy evaluation did not reach delta = {:.1e} within {} iterations",
        cfg.delta, cfg.max_iter
    )))
}

/// Linear-quadratic pieces of a problem, for the zero-interpolation-error
/// evaluation path (`x+ = Ax + Bu`, `U = x'Qx + u'Ru`).
#[derive(Debug, Clone)]
pub struct LinearQuadraticParts {
    pub n: usize,
    pub m: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

/// Policy evaluation in closed form on the quadratic representation:
/// `P_{j+1} = Q + K'RK + (A-BK)' P_j (A-BK)` from `P_0 = 0`.
///
/// The iterates `x'P_j x` are the exact Lemma-2 sequence for the linear
/// closed loop, so they are pointwise non-decreasing; that is verified at the
/// probe points.
pub fn policy_evaluation_quadratic(
    lq: &LinearQuadraticParts,
    k_gain: &[f64],
    cfg: &PolicyEvalConfig,
    monotone_probes: &[Vec<f64>],
) -> Result<QuadraticValueFunction> {
    let (n, m) = (lq.n, lq.m);
    if k_gain.len() != n * m {
        return Err(Error::DimensionMismatch { what: "gain", expected: n * m, got: k_gain.len() });
    }
    // C = A - B K
    let bk = crate::linalg::matmul(&lq.b, k_gain, n, m, n);
    let mut c = lq.a.clone();
    for i in 0..n * n {
        c[i] -= bk[i];
    }
    // Qc = Q + K' R K
    let rk = crate::linalg::matmul(&lq.r, k_gain, m, m, n);
    let kt = crate::linalg::transpose(k_gain, m, n);
    let krk = crate::linalg::matmul(&kt, &rk, n, m, n);
    let mut qc = lq.q.clone();
    for i in 0..n * n {
        qc[i] += krk[i];
    }
    let ct = crate::linalg::transpose(&c, n, n);

    let mut p = vec![0.0; n * n];
    for _ in 0..cfg.max_iter {
        let pc = crate::linalg::matmul(&p, &c, n, n, n);
        let mut p_next = crate::linalg::matmul(&ct, &pc, n, n, n);
        for i in 0..n * n {
            p_next[i] += qc[i];
        }
        if !p_next.iter().all(|v| v.is_finite()) {
            return Err(Error::OracleFailure(
                "quadratic policy evaluation diverged (closed loop unstable?)".to_string(),
            ));
        }
        let mut sup = 0.0_f64;
        for i in 0..n * n {
            sup = sup.max(crate::fmath::abs(p_next[i] - p[i]));
        }
        for probe in monotone_probes {
            let d = crate::linalg::quad_form(&p_next, probe) - crate::linalg::quad_form(&p, probe);
            if d < -1e-9 {
                return Err(Error::FailedLemmaMonotoneUp { node: probe.clone(), residual: -d });
            }
        }
        p = p_next;
        if sup <= cfg.delta {
            return QuadraticValueFunction::new(n, p);
        }
    }
    Err(Error::OracleFailure(format!(
        "quadratic policy evaluation did not reach delta = {:.1e} within {} iterations",
        cfg.delta, cfg.max_iter
    )))
}

/// Nodes where every control candidate exits the domain. Depends only on
/// grid, dynamics, control set, and box, so one mask serves a whole run.
pub fn infeasible_node_mask(p: &ProblemInstance, grid: &Arc<Grid>) -> Result<Vec<bool>> {
    let mut mask = vec![false; grid.num_nodes()];
    let mut x = vec![0.0; grid.dim()];
    let mut succ = [0.0; MAX_DIM];
    let succ = &mut succ[..p.state_dim()];
    for (node, flag) in mask.iter_mut().enumerate() {
        grid.node_into(node, &mut x);
        let mut any = false;
        for idx in 0..p.control_set().len() {
            p.step_into(&x, p.control_set().candidate(idx), succ)?;
            if p.domain().contains(succ) {
                any = true;
                break;
            }
        }
        *flag = !any;
    }
    Ok(mask)
}

/// Output of one synchronous backup sweep.
pub struct SweepOutput {
    pub values: GridValueFunction,
    pub policy: TabulatedPolicy,
}

/// One Jacobi sweep of the Bellman backup over all grid nodes.
///
/// Frozen nodes copy their previous value and store the zero control. The
/// optional `extra` state cost is added after the minimization (it is
/// control-independent, so the argmin is unaffected).
pub fn vi_sweep(
    p: &ProblemInstance,
    v: &ValueFunction,
    grid: &Arc<Grid>,
    opts: &BackupOptions,
    frozen: Option<&[bool]>,
    extra: Option<ExtraStateCost<'_>>,
) -> Result<SweepOutput> {
    let nodes = grid.num_nodes();
    let m = p.control_dim();
    let mut values = vec![0.0; nodes];
    let mut controls = vec![0.0; nodes * m];
    let mut x = vec![0.0; grid.dim()];
    for node in 0..nodes {
        grid.node_into(node, &mut x);
        if frozen.is_some_and(|f| f[node]) {
            values[node] = v.eval(&x)?;
            continue;
        }
        let r = bellman_backup(p, v, &x, opts)?;
        let mut val = r.value;
        if let Some(f) = extra {
            val += f(&x);
            if val < 0.0 {
                if val < NEGATIVE_CLAMP {
                    return Err(Error::AssumptionViolation(format!(
                        "shifted backup value {val:.3e} is negative at {x:?}"
                    )));
                }
                val = 0.0;
            }
        }
        values[node] = val;
        controls[node * m..(node + 1) * m].copy_from_slice(&r.argmin);
    }
    Ok(SweepOutput {
        values: GridValueFunction::new(grid.clone(), values)?,
        policy: TabulatedPolicy::new(grid.clone(), m, controls)?,
    })
}

/// Configuration of a grid VI run.
#[derive(Debug, Clone)]
pub struct ViConfig {
    pub pol_eval: PolicyEvalConfig,
    /// Stop once `sup_x |V_{i+1} - V_i| <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub backup: BackupOptions,
    /// Enforce pointwise non-increase (on for stabilizing runs).
    pub check_monotone_down: bool,
    /// Residual above this aborts the run; one order above accumulation
    /// noise at desk grid sizes.
    pub monotone_tol: f64,
    pub admissibility: AdmissibilityCheck,
}

impl Default for ViConfig {
    fn default() -> Self {
        Self {
            pol_eval: PolicyEvalConfig::default(),
            tol: 1e-6,
            max_iter: 10_000,
            backup: BackupOptions::default(),
            check_monotone_down: true,
            monotone_tol: 1e-9,
            admissibility: AdmissibilityCheck::default(),
        }
    }
}

/// A completed grid VI run. `policies[i]` is greedy with respect to
/// `snapshots[i]`; `snapshots[i+1]` is its backup image.
pub struct ViRun {
    pub grid: Arc<Grid>,
    pub snapshots: Vec<Arc<GridValueFunction>>,
    pub policies: Vec<Arc<TabulatedPolicy>>,
    pub trace: IterationTrace,
    pub frozen: Vec<bool>,
    pub converged: bool,
}

impl ViRun {
    pub fn final_value(&self) -> &Arc<GridValueFunction> {
        self.snapshots.last().expect("run holds at least the seed snapshot")
    }
}

/// Plain VI from an arbitrary seed (no admissibility, no monotone gate
/// unless requested in `cfg`).
pub fn run_vi(
    p: &ProblemInstance,
    grid: &Arc<Grid>,
    v0: GridValueFunction,
    cfg: &ViConfig,
    clock: &dyn Clock,
    extra: Option<ExtraStateCost<'_>>,
) -> Result<ViRun> {
    let start = clock.now_seconds();
    let frozen = infeasible_node_mask(p, grid)?;
    let mut snapshots = vec![Arc::new(v0)];
    let mut policies = Vec::new();
    let mut trace = IterationTrace::default();
    let mut converged = false;

    for iteration in 0..cfg.max_iter {
        let current = snapshots.last().unwrap().clone();
        let current_vf = ValueFunction::Grid(current.as_ref().clone());
        let out = vi_sweep(p, &current_vf, grid, &cfg.backup, Some(&frozen), extra)?;

        let sup = sup_norm_diff(&out.values, &current)?;
        let mut mono = f64::NEG_INFINITY;
        let mut worst_node = 0usize;
        for node in 0..grid.num_nodes() {
            if frozen[node] {
                continue;
            }
            let d = out.values.value_at(node) - current.value_at(node);
            if d > mono {
                mono = d;
                worst_node = node;
            }
        }
        if cfg.check_monotone_down && mono > cfg.monotone_tol {
            return Err(Error::FailedLemmaMonotoneDown {
                node: grid.node(worst_node),
                residual: mono,
            });
        }
        let lyap = lyapunov_residual(p, &current, &out.policy, &frozen, extra)?;
        trace.push(TraceRow {
            iteration,
            sup_norm_delta: sup,
            max_monotonicity_residual: mono,
            max_lyapunov_residual: lyap,
            elapsed_seconds: clock.now_seconds() - start,
        });
        policies.push(Arc::new(out.policy));
        snapshots.push(Arc::new(out.values));
        if sup <= cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(ViRun { grid: grid.clone(), snapshots, policies, trace, frozen, converged })
}

/// Stabilizing VI: quantizes `h` onto the control set, checks its
/// admissibility by simulation from every grid node, evaluates its
/// cost-to-go as the seed, then iterates backups with the pointwise
/// non-increase gate on.
///
/// The quantization is what makes the non-increase gate sound: the seed is
/// the evaluated cost of a policy the backup's candidate set can replay, so
/// the first minimization can never lose to it by more than the evaluation
/// truncation `delta`.
pub fn run_stabilizing_vi(
    p: &ProblemInstance,
    h: &AdmissiblePolicySpec,
    grid: &Arc<Grid>,
    cfg: &ViConfig,
    clock: &dyn Clock,
    extra: Option<ExtraStateCost<'_>>,
) -> Result<ViRun> {
    let quantized = quantized_admissible_seed_policy(p, h, grid, cfg.admissibility)?;
    let v0 = policy_evaluation(p, &quantized, grid, None, &cfg.pol_eval, extra)?;
    run_vi(p, grid, v0, cfg, clock, extra)
}

/// Quantizes the declared policy onto the control set and runs the
/// admissibility simulation on the result.
pub fn quantized_admissible_seed_policy(
    p: &ProblemInstance,
    h: &AdmissiblePolicySpec,
    grid: &Arc<Grid>,
    adm: AdmissibilityCheck,
) -> Result<Policy> {
    let quantized = Policy::Tabulated(crate::backup::quantize_policy(p, &h.policy, grid)?);
    let spec = AdmissiblePolicySpec {
        policy: quantized,
        name: alloc::format!("{} (quantized)", h.name),
    };
    let nodes = (0..grid.num_nodes()).map(|i| grid.node(i));
    check_admissibility(p, &spec, adm, nodes)?;
    Ok(spec.policy)
}

/// Max over unfrozen nodes of `V(f(x,h(x))) - V(x) + U'(x,h(x))`, evaluated
/// from scratch (Lyapunov-decrease residual of the current iterate).
pub fn lyapunov_residual(
    p: &ProblemInstance,
    v: &GridValueFunction,
    policy: &TabulatedPolicy,
    frozen: &[bool],
    extra: Option<ExtraStateCost<'_>>,
) -> Result<f64> {
    let grid = v.grid();
    let mut x = vec![0.0; grid.dim()];
    let mut succ = vec![0.0; grid.dim()];
    let mut worst = f64::NEG_INFINITY;
    for node in 0..grid.num_nodes() {
        if frozen[node] {
            continue;
        }
        grid.node_into(node, &mut x);
        let u = policy.control_at(node);
        p.step_into(&x, u, &mut succ)?;
        if !p.domain().contains(&succ) {
            continue;
        }
        p.domain().clamp(&mut succ);
        let mut cost = p.utility(&x, u)?;
        if let Some(f) = extra {
            cost += f(&x);
        }
        worst = worst.max(v.eval(&succ)? - v.value_at(node) + cost);
    }
    Ok(worst)
}

/// Sup over interior, unfrozen nodes of `|V(x) - backup(V, x).value|`; the
/// fixed-point residual of a converged value function.
pub fn fixed_point_residual(
    p: &ProblemInstance,
    v: &GridValueFunction,
    opts: &BackupOptions,
    frozen: &[bool],
    extra: Option<ExtraStateCost<'_>>,
) -> Result<f64> {
    let grid = v.grid().clone();
    let vf = ValueFunction::Grid(v.clone());
    let mut x = vec![0.0; grid.dim()];
    let mut worst = 0.0_f64;
    for node in 0..grid.num_nodes() {
        if frozen[node] || grid.is_boundary(node) {
            continue;
        }
        grid.node_into(node, &mut x);
        let mut val = bellman_backup(p, &vf, &x, opts)?.value;
        if let Some(f) = extra {
            val += f(&x);
        }
        worst = worst.max(crate::fmath::abs(val - v.value_at(node)));
    }
    Ok(worst)
}

/// A stabilizing VI run on the exact-quadratic path: the seed is the closed
/// form cost-to-go of the linear closed loop and each iterate is a
/// [`BackupChain`] layer, so evaluation carries no interpolation error.
pub struct ChainRun {
    pub snapshots: Vec<Arc<ValueFunction>>,
    pub trace: IterationTrace,
}

/// Iteration cap for the chain path; evaluation cost is `|U|^depth`.
pub const CHAIN_DEPTH_CAP: usize = 6;

pub fn run_stabilizing_vi_chain(
    p: &Arc<ProblemInstance>,
    lq: &LinearQuadraticParts,
    k_gain: &[f64],
    iterations: usize,
    pol_eval: &PolicyEvalConfig,
    probes: &[Vec<f64>],
    clock: &dyn Clock,
) -> Result<ChainRun> {
    if iterations > CHAIN_DEPTH_CAP {
        return Err(Error::ContractViolation(format!(
            "chain depth {iterations} exceeds cap {CHAIN_DEPTH_CAP}"
        )));
    }
    let start = clock.now_seconds();
    let v0 = policy_evaluation_quadratic(lq, k_gain, pol_eval, probes)?;
    let mut snapshots: Vec<Arc<ValueFunction>> = vec![Arc::new(ValueFunction::Quadratic(v0))];
    let mut trace = IterationTrace::default();
    for iteration in 0..iterations {
        let base = snapshots.last().unwrap().clone();
        let next = ValueFunction::Chain(BackupChain { problem: p.clone(), base: base.clone() });
        let mut sup = 0.0_f64;
        let mut mono = f64::NEG_INFINITY;
        for probe in probes {
            let before = base.eval(probe)?;
            let after = next.eval(probe)?;
            sup = sup.max(crate::fmath::abs(after - before));
            mono = mono.max(after - before);
        }
        // Recorded, not gated: the quadratic seed prices the continuous
        // closed loop, so near the origin the finite candidate set can lose
        // to it by the control-discretization gap.
        trace.push(TraceRow {
            iteration,
            sup_norm_delta: sup,
            max_monotonicity_residual: mono,
            max_lyapunov_residual: f64::NAN,
            elapsed_seconds: clock.now_seconds() - start,
        });
        snapshots.push(Arc::new(next));
    }
    Ok(ChainRun { snapshots, trace })
}

/// Result of the exhaustive finite-horizon enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonOracleResult {
    /// Minimal `sum_k U(x_k, u_k) + psi(x_N)` over feasible sequences.
    pub value: f64,
    /// The minimizing control sequence, length `N`.
    pub best_sequence: Vec<Vec<f64>>,
}

/// Default cap on the enumerable horizon.
pub const DEFAULT_HORIZON_CAP: usize = 4;

/// Enumerates all `|U|^N` control sequences from `x0`, pricing each forward
/// and excluding any whose trajectory exits the domain.
pub fn finite_horizon_oracle(
    p: &ProblemInstance,
    psi: &ValueFunction,
    x0: &[f64],
    horizon: usize,
    cap: usize,
) -> Result<FiniteHorizonOracleResult> {
    if horizon > cap {
        return Err(Error::ContractViolation(format!("horizon {horizon} exceeds cap {cap}")));
    }
    if !p.domain().contains(x0) {
        return Err(Error::DomainExit { x: x0.to_vec() });
    }

    struct Search<'a> {
        p: &'a ProblemInstance,
        psi: &'a ValueFunction,
        best: Option<(f64, Vec<usize>)>,
        prefix: Vec<usize>,
    }

    impl Search<'_> {
        fn go(&mut self, x: &[f64], remaining: usize, cost: f64) -> Result<()> {
            if remaining == 0 {
                let total = match self.psi.eval(x) {
                    Ok(v) => cost + v,
                    Err(Error::InfeasibleBackup { .. }) => return Ok(()),
                    Err(e) => return Err(e),
                };
                if self.best.as_ref().is_none_or(|(b, _)| total < *b) {
                    self.best = Some((total, self.prefix.clone()));
                }
                return Ok(());
            }
            let mut succ = [0.0; MAX_DIM];
            let succ_len = self.p.state_dim();
            for idx in 0..self.p.control_set().len() {
                let u = self.p.control_set().candidate(idx);
                let out = &mut succ[..succ_len];
                self.p.step_into(x, u, out)?;
                if !self.p.domain().contains(out) {
                    continue;
                }
                self.p.domain().clamp(out);
                let step_cost = self.p.utility(x, u)?;
                let next = out.to_vec();
                self.prefix.push(idx);
                self.go(&next, remaining - 1, cost + step_cost)?;
                self.prefix.pop();
            }
            Ok(())
        }
    }

    let mut search = Search { p, psi, best: None, prefix: Vec::new() };
    search.go(x0, horizon, 0.0)?;
    let (value, seq) = search.best.ok_or_else(|| Error::InfeasibleBackup { x: x0.to_vec() })?;
    let best_sequence = seq.iter().map(|&i| p.control_set().candidate(i).to_vec()).collect();
    Ok(FiniteHorizonOracleResult { value, best_sequence })
}

/// Re-prices a control sequence forward; used to audit oracle results.
pub fn replay_sequence(
    p: &ProblemInstance,
    psi: &ValueFunction,
    x0: &[f64],
    sequence: &[Vec<f64>],
) -> Result<f64> {
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x.len()];
    let mut cost = 0.0;
    for u in sequence {
        cost += p.utility(&x, u)?;
        p.step_into(&x, u, &mut next)?;
        if !p.domain().contains(&next) {
            return Err(Error::DomainExit { x: next.clone() });
        }
        p.domain().clamp(&mut next);
        x.copy_from_slice(&next);
    }
    Ok(cost + psi.eval(&x)?)
}
