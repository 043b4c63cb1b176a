//! Pipeline execution: run the selected engine, verify the enabled checks,
//! and write artifacts.
//!
//! Check id conventions (margins are signed; see each entry):
//!
//! * `lemma1_monotone` — max node-wise increase across all iterations
//!   (healthy `<= 1e-9`).
//! * `lemma2_monotone_up` — policy-evaluation iterates non-decreasing (the
//!   engine gates this; the check records that the gate held).
//! * `converged`, `fixed_point_residual` — run reached its tolerance, and
//!   `sup |V - backup(V)|` over interior nodes is within `10 * tol`.
//! * `eq27_equivalence` — value iterate vs finite-horizon enumeration on the
//!   exact-quadratic path (healthy `<= 1e-9`).
//! * `thm2_invariance` / `thm2_lyapunov_nodes` — sublevel-set invariance and
//!   node-level Lyapunov decrease of the converged iterate.
//! * `thm5_sandwich`, `lemma5_semi_monotonicity`, `eq40_breve_bound` —
//!   approximate-run margins against the exact bounding runs and rollout
//!   accumulators.
//! * `eq41_bound`, `eq57_bound` — admissible-error constants; the evolving
//!   bound must be strictly below the fixed-policy bound, both in (0, 1].
//! * `thm6_lyapunov`, `thm6_invariance` — enabled only when `c` is below the
//!   fixed-policy bound.
//! * `thm3_partial_sums`, `thm37_convergence`, `thm5roa_containment`,
//!   `thm8_containment`, `thm8_convergence` — evolving-policy trajectory
//!   checks from every node of the region-of-attraction mask.
//! * `eq20_lyapunov_trace`, `replay_determinism` — simulation-batch checks.
//! * `continuity_decay` — reported, never asserted: sup changes at fixed
//!   probes under grid refinement should shrink.

use std::path::Path;
use std::sync::Arc;

use stabvi_core::backup::{BackupOptions, Policy};
use stabvi_core::engine_avi::{run_avi, AviConfig, AviRun};
use stabvi_core::engine_exact::{
    finite_horizon_oracle, fixed_point_residual, lyapunov_residual, run_stabilizing_vi,
    run_stabilizing_vi_chain, run_vi, PolicyEvalConfig, ViConfig, ViRun,
};
use stabvi_core::problem::AdmissibilityCheck;
use stabvi_core::stability::{
    eroa_evolving_avi, eroa_evolving_exact, largest_contained_level, lyapunov_trace_residual,
    one_step_invariance, simulate_evolving_policy, simulate_fixed_policy, EroaEstimate,
    SimOptions,
};
use stabvi_core::valuefn::{ErrorModel, ErrorShape, GridValueFunction};
use stabvi_core::Clock;

use crate::benchmarks::{build, BuiltProblem};
use crate::config::{ExperimentConfig, Pipeline, Representation, ShapeKind};
use crate::csvio;
use crate::report::{CheckRecord, VerdictReport};
use crate::{ExitCode, HarnessError};

/// A finished pipeline run.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub report: VerdictReport,
    pub exit: ExitCode,
}

pub fn run_pipeline(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PipelineOutcome, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let wall;
    let clock: &dyn Clock = if cfg.timing {
        wall = crate::WallClock::new();
        &wall
    } else {
        &()
    };

    let built = build(cfg)?;
    let mut gamma = None;
    let mut checks: Vec<CheckRecord> = Vec::new();

    match cfg.pipeline {
        Pipeline::ExactVi => exact_vi_pipeline(cfg, &built, out_dir, clock, &mut checks)?,
        Pipeline::StabilizingVi => match cfg.representation {
            Representation::Grid => {
                stabilizing_pipeline(cfg, &built, out_dir, clock, &mut checks)?;
            }
            Representation::Quadratic => {
                quadratic_pipeline(cfg, &built, out_dir, clock, &mut checks)?;
            }
        },
        Pipeline::Avi => {
            let run = avi_pipeline(cfg, &built, out_dir, clock, &mut checks)?;
            gamma = Some(run.gamma);
        }
        Pipeline::Eroa => {
            gamma = eroa_pipeline(cfg, &built, out_dir, clock, &mut checks)?;
        }
        Pipeline::Simulate => simulate_pipeline(cfg, &built, out_dir, clock, &mut checks)?,
        Pipeline::TheoremSuite => {
            let run = stabilizing_pipeline(cfg, &built, out_dir, clock, &mut checks)?;
            let avi = avi_pipeline(cfg, &built, out_dir, clock, &mut checks)?;
            gamma = Some(avi.gamma);
            // The evolving-policy estimate is only defined under its error
            // hypothesis; with c at or above the bound that section has
            // nothing to verify and is marked not applicable.
            let evolving_bound = stabvi_core::engine_avi::c_bound_evolving_policy(avi.gamma);
            let avi_section = (cfg.c < evolving_bound).then_some(&avi);
            if avi_section.is_none() {
                checks.push(CheckRecord::passing(
                    "thm8_applicability",
                    Some(evolving_bound),
                    format!(
                        "evolving-policy estimate not applicable: c = {} is not below the \
                         admissible bound {evolving_bound:.6} at grid gamma = {}",
                        cfg.c, avi.gamma
                    ),
                ));
            }
            eroa_checks_from_runs(cfg, &built, &run, avi_section, out_dir, &mut checks)?;
            continuity_report(cfg, &built, clock, &mut checks)?;
        }
    }

    let uses_error_model = matches!(
        cfg.pipeline,
        Pipeline::Avi | Pipeline::Eroa | Pipeline::TheoremSuite
    );
    let report = VerdictReport::new(
        cfg.pipeline.id(),
        cfg.seed,
        uses_error_model.then_some(cfg.c),
        gamma,
        checks,
        cfg.echo.clone(),
    );
    std::fs::write(out_dir.join("verdict.json"), report.to_json())?;
    let exit = if report.all_passed { ExitCode::Ok } else { ExitCode::TheoremFailed };
    Ok(PipelineOutcome { report, exit })
}

fn vi_config(cfg: &ExperimentConfig, check_monotone_down: bool) -> ViConfig {
    ViConfig {
        pol_eval: PolicyEvalConfig { delta: cfg.delta, max_iter: 2_000_000 },
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        backup: BackupOptions { refine: cfg.refine, ..Default::default() },
        check_monotone_down,
        monotone_tol: 1e-9,
        admissibility: AdmissibilityCheck { eps: cfg.adm_eps, k_max: cfg.adm_k_max },
    }
}

fn avi_config(cfg: &ExperimentConfig) -> AviConfig {
    AviConfig {
        pol_eval: PolicyEvalConfig { delta: cfg.delta, max_iter: 2_000_000 },
        iterations: cfg.avi_iterations,
        backup: BackupOptions { refine: cfg.refine, ..Default::default() },
        admissibility: AdmissibilityCheck { eps: cfg.adm_eps, k_max: cfg.adm_k_max },
        sandwich_tol: 1e-9,
        bound_tol: 1e-9,
        bound_max_iter: cfg.max_iter.max(1000),
    }
}

fn error_model(cfg: &ExperimentConfig) -> ErrorModel {
    let shape = match cfg.error_shape {
        ShapeKind::Zero => ErrorShape::Zero,
        ShapeKind::Sinusoid => {
            ErrorShape::SignedSinusoid { frequency: cfg.error_frequency, phase: cfg.error_phase }
        }
        ShapeKind::Uniform => ErrorShape::SeededUniform,
    };
    ErrorModel { c: cfg.c, shape, seed: cfg.seed.unwrap_or(0) }
}

fn sim_options(cfg: &ExperimentConfig) -> SimOptions {
    SimOptions { k_max: cfg.k_max, eps: cfg.eps_s }
}

/// Deterministic probe points spread over the interior of the box.
fn probe_points(built: &BuiltProblem, per_axis: usize) -> Vec<Vec<f64>> {
    let n = built.problem.state_dim();
    let lo = built.problem.domain().lo();
    let hi = built.problem.domain().hi();
    let axis_pts: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            (0..per_axis)
                .map(|j| {
                    let t = j as f64 / (per_axis - 1) as f64;
                    0.9 * (lo[a] + t * (hi[a] - lo[a]))
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let total: usize = per_axis.pow(n as u32);
    for flat in 0..total {
        let mut rem = flat;
        let mut x = vec![0.0; n];
        for a in 0..n {
            x[a] = axis_pts[a][rem % per_axis];
            rem /= per_axis;
        }
        out.push(x);
    }
    out
}

fn exact_vi_pipeline(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    out_dir: &Path,
    clock: &dyn Clock,
    checks: &mut Vec<CheckRecord>,
) -> Result<(), HarnessError> {
    let vi_cfg = vi_config(cfg, false);
    let v0 = GridValueFunction::zeros(built.grid.clone());
    let run = run_vi(&built.problem, &built.grid, v0, &vi_cfg, clock, None)?;
    push_convergence_checks(cfg, built, &run, checks)?;
    csvio::write_exact_trace(&out_dir.join("trace_exact.csv"), run.trace.rows())?;
    csvio::write_snapshot(&out_dir.join("v_final.csv"), run.final_value())?;
    Ok(())
}

fn stabilizing_pipeline(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    out_dir: &Path,
    clock: &dyn Clock,
    checks: &mut Vec<CheckRecord>,
) -> Result<ViRun, HarnessError> {
    let vi_cfg = vi_config(cfg, true);
    let run = run_stabilizing_vi(&built.problem, &built.spec, &built.grid, &vi_cfg, clock, None)?;

    let worst_mono = run
        .trace
        .rows()
        .iter()
        .map(|r| r.max_monotonicity_residual)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(CheckRecord {
        id: "lemma1_monotone".into(),
        pass: worst_mono <= 1e-9,
        margin: Some(worst_mono),
        worst_node: None,
        detail: format!(
            "max node-wise increase across {} iterations (gate 1e-9)",
            run.trace.rows().len()
        ),
    });
    checks.push(CheckRecord::passing(
        "lemma2_monotone_up",
        None,
        "policy-evaluation iterates were pointwise non-decreasing (engine gate, tolerance 1e-9)",
    ));
    push_convergence_checks(cfg, built, &run, checks)?;

    // Sublevel-set invariance and node-level Lyapunov decrease of the
    // converged iterate under its own greedy policy.
    match largest_contained_level(run.final_value(), cfg.level_margin) {
        Ok((r, set)) => {
            let report = one_step_invariance(
                &built.problem,
                &set,
                &built.grid,
                run.policies.last().expect("run produced policies").as_ref(),
                &run.frozen,
            )?;
            checks.push(CheckRecord {
                id: "thm2_invariance".into(),
                pass: report.violations == 0,
                margin: None,
                worst_node: report.first_violation.clone(),
                detail: format!(
                    "one-step images of {} member nodes of the r={r:.6e} sublevel set \
                     (corner-conservative), {} violation(s)",
                    report.checked, report.violations
                ),
            });
        }
        Err(e) => checks.push(CheckRecord::failing(
            "thm2_invariance",
            None,
            None,
            format!("no contained sublevel set: {e}"),
        )),
    }
    let lyap = lyapunov_residual(
        &built.problem,
        run.final_value(),
        run.policies.last().expect("run produced policies").as_ref(),
        &run.frozen,
        None,
    )?;
    checks.push(CheckRecord {
        id: "thm2_lyapunov_nodes".into(),
        pass: lyap <= cfg.tol * 10.0,
        margin: Some(lyap),
        worst_node: None,
        detail: format!(
            "max node-level V(f(x,h(x))) - V(x) + U(x,h(x)) of the converged iterate \
             (gate 10*tol = {:.1e})",
            cfg.tol * 10.0
        ),
    });

    csvio::write_exact_trace(&out_dir.join("trace_exact.csv"), run.trace.rows())?;
    csvio::write_snapshot(&out_dir.join("v0.csv"), &run.snapshots[0])?;
    csvio::write_snapshot(&out_dir.join("v_final.csv"), run.final_value())?;
    Ok(run)
}

fn push_convergence_checks(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    run: &ViRun,
    checks: &mut Vec<CheckRecord>,
) -> Result<(), HarnessError> {
    let last_delta = run.trace.rows().last().map(|r| r.sup_norm_delta);
    checks.push(CheckRecord {
        id: "converged".into(),
        pass: run.converged,
        margin: last_delta,
        worst_node: None,
        detail: format!(
            "sup-norm delta reached tol = {:.1e} within {} iterations: {}",
            cfg.tol,
            cfg.max_iter,
            run.converged
        ),
    });
    let opts = BackupOptions { refine: cfg.refine, ..Default::default() };
    let residual = fixed_point_residual(&built.problem, run.final_value(), &opts, &run.frozen, None)?;
    checks.push(CheckRecord {
        id: "fixed_point_residual".into(),
        pass: residual <= cfg.tol * 10.0,
        margin: Some(residual),
        worst_node: None,
        detail: format!(
            "sup over interior nodes of |V - backup(V)| (gate 10*tol = {:.1e})",
            cfg.tol * 10.0
        ),
    });
    Ok(())
}

fn quadratic_pipeline(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    out_dir: &Path,
    clock: &dyn Clock,
    checks: &mut Vec<CheckRecord>,
) -> Result<(), HarnessError> {
    let lq = built.lq.as_ref().ok_or_else(|| {
        HarnessError::Config(vec!["representation = quadratic requires a linear system".into()])
    })?;
    let iterations = cfg.max_iter.min(cfg.horizon_cap);
    let candidates = built.problem.control_set().len();
    let budget = (candidates as f64).powi(iterations as i32);
    if budget > 5e7 {
        return Err(HarnessError::Config(vec![format!(
            "quadratic path would enumerate |U|^{iterations} = {budget:.1e} branch evaluations; \
             shrink control_count or max_iter"
        )]));
    }

    let probes = {
        // ~25 points regardless of dimension
        let per_axis = match built.problem.state_dim() {
            1 => 25,
            _ => 5,
        };
        probe_points(built, per_axis)
    };
    let pol_eval = PolicyEvalConfig { delta: cfg.delta, max_iter: 2_000_000 };
    let run = run_stabilizing_vi_chain(
        &built.problem,
        lq,
        &cfg.policy_gain,
        iterations,
        &pol_eval,
        &probes,
        clock,
    )?;
    checks.push(CheckRecord::passing(
        "lemma2_monotone_up",
        None,
        "closed-form policy-evaluation iterates non-decreasing at all probe points",
    ));

    // Value-iterate vs finite-horizon enumeration, both over the same
    // candidate set and the same terminal cost.
    let psi = &run.snapshots[0];
    let mut worst = 0.0_f64;
    let mut worst_at: Option<(usize, Vec<f64>)> = None;
    for (i, snapshot) in run.snapshots.iter().enumerate() {
        for x0 in &probes {
            let vi = snapshot.eval(x0)?;
            let oracle = finite_horizon_oracle(&built.problem, psi, x0, i, cfg.horizon_cap)?;
            let diff = (vi - oracle.value).abs();
            if diff > worst {
                worst = diff;
                worst_at = Some((i, x0.clone()));
            }
        }
    }
    checks.push(CheckRecord {
        id: "eq27_equivalence".into(),
        pass: worst <= 1e-9,
        margin: Some(worst),
        worst_node: worst_at.as_ref().map(|(_, x)| x.clone()),
        detail: format!(
            "max |V_i(x0) - oracle(psi=V0, N=i)| over i = 0..={iterations} and {} probes \
             (gate 1e-9){}",
            probes.len(),
            worst_at
                .map(|(i, _)| format!("; worst at i={i}"))
                .unwrap_or_default()
        ),
    });

    csvio::write_exact_trace(&out_dir.join("trace_exact.csv"), run.trace.rows())?;
    let sampled = run.snapshots[0].sample_on(&built.grid)?;
    csvio::write_snapshot(&out_dir.join("v0.csv"), &sampled)?;
    Ok(())
}

fn avi_pipeline(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    out_dir: &Path,
    clock: &dyn Clock,
    checks: &mut Vec<CheckRecord>,
) -> Result<AviRun, HarnessError> {
    let em = error_model(cfg);
    let run = run_avi(&built.problem, &built.spec, &em, &built.grid, &avi_config(cfg), clock)?;

    let sandwich = run
        .trace
        .iter()
        .map(|r| r.sandwich_margin)
        .fold(run.init_sandwich_margin, f64::min);
    checks.push(CheckRecord {
        id: "thm5_sandwich".into(),
        pass: sandwich >= -1e-9,
        margin: Some(sandwich),
        worst_node: None,
        detail: format!(
            "min over {} iterations and all nodes of min(V_hat - V_lower, V_upper - V_hat) \
             (gate -1e-9)",
            run.trace.len()
        ),
    });
    let semi = run
        .trace
        .iter()
        .map(|r| r.semi_monotonicity_margin)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(CheckRecord {
        id: "lemma5_semi_monotonicity".into(),
        pass: semi <= 1e-9,
        margin: Some(semi),
        worst_node: None,
        detail: "max over iterations/unflagged nodes of V_{i+1} - V_i - 2c*breve_V_i (gate 1e-9)"
            .into(),
    });
    let breve = run
        .trace
        .iter()
        .map(|r| r.breve_bound_margin)
        .fold(f64::INFINITY, f64::min);
    checks.push(CheckRecord {
        id: "eq40_breve_bound".into(),
        pass: breve >= -cfg.lyap_tol,
        margin: Some(breve),
        worst_node: None,
        detail: format!(
            "min over iterations/unflagged nodes of V_hat_i - (1-c)*breve_V_i; the rollout \
             re-reads tabulated policies at nearest nodes, so the bound carries \
             cell-resolution slop (gate -lyap_tol = -{:.1e})",
            cfg.lyap_tol
        ),
    });

    let fixed_bound = stabvi_core::engine_avi::c_bound_fixed_policy(run.gamma);
    let evolving_bound = stabvi_core::engine_avi::c_bound_evolving_policy(run.gamma);
    checks.push(CheckRecord {
        id: "eq41_bound".into(),
        pass: fixed_bound > 0.0 && fixed_bound <= 1.0,
        margin: Some(fixed_bound),
        worst_node: None,
        detail: format!("fixed-policy admissible error bound at gamma = {}", run.gamma),
    });
    checks.push(CheckRecord {
        id: "eq57_bound".into(),
        pass: evolving_bound > 0.0 && evolving_bound <= 1.0 && evolving_bound < fixed_bound,
        margin: Some(evolving_bound),
        worst_node: None,
        detail: format!(
            "evolving-policy admissible error bound; strictly below the fixed-policy bound \
             {fixed_bound:.6}"
        ),
    });

    // Lyapunov decrease and per-iterate invariance only hold under the
    // fixed-policy error condition; the checks are enabled exactly then.
    if run.c < fixed_bound {
        let lyap = run
            .trace
            .iter()
            .map(|r| r.lyapunov_margin)
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(CheckRecord {
            id: "thm6_lyapunov".into(),
            pass: lyap < 0.0,
            margin: Some(lyap),
            worst_node: None,
            detail: format!(
                "max over iterations/non-origin nodes of V_i(f(x,h_i(x))) - V_i(x); \
                 strict decrease required while c = {} < {fixed_bound:.6}",
                run.c
            ),
        });

        let sampled = sample_indices(run.trace.len(), 10);
        let mut total_checked = 0usize;
        let mut total_violations = 0usize;
        let mut first: Option<Vec<f64>> = None;
        for &i in &sampled {
            let v_i = &run.snapshots[i];
            let (_, set) = largest_contained_level(v_i, cfg.level_margin)?;
            let report = one_step_invariance(
                &built.problem,
                &set,
                &built.grid,
                run.policies[i].as_ref(),
                &run.frozen,
            )?;
            total_checked += report.checked;
            total_violations += report.violations;
            if first.is_none() {
                first = report.first_violation;
            }
        }
        checks.push(CheckRecord {
            id: "thm6_invariance".into(),
            pass: total_violations == 0,
            margin: None,
            worst_node: first,
            detail: format!(
                "one-step invariance of the per-iterate contained sublevel sets at iterations \
                 {sampled:?}: {total_violations} violation(s) over {total_checked} member nodes"
            ),
        });
    }

    csvio::write_avi_trace(&out_dir.join("trace_avi.csv"), &run.trace)?;
    csvio::write_snapshot(&out_dir.join("v_hat_0.csv"), &run.snapshots[0])?;
    csvio::write_snapshot(
        &out_dir.join("v_hat_final.csv"),
        run.snapshots.last().expect("at least the seed"),
    )?;
    csvio::write_snapshot(&out_dir.join("v_lower_final.csv"), run.lower.final_value())?;
    csvio::write_snapshot(&out_dir.join("v_upper_final.csv"), run.upper.final_value())?;
    Ok(run)
}

fn sample_indices(len: usize, want: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let mut out: Vec<usize> = (0..want.min(len))
        .map(|j| j * (len - 1) / want.saturating_sub(1).max(1))
        .collect();
    out.dedup();
    out
}

fn eroa_pipeline(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    out_dir: &Path,
    clock: &dyn Clock,
    checks: &mut Vec<CheckRecord>,
) -> Result<Option<f64>, HarnessError> {
    let vi_cfg = vi_config(cfg, true);
    let run = run_stabilizing_vi(&built.problem, &built.spec, &built.grid, &vi_cfg, clock, None)?;
    if !run.converged {
        return Err(HarnessError::Precondition(
            "region-of-attraction estimation needs a converged stabilizing run".into(),
        ));
    }
    let avi = if cfg.c > 0.0 {
        Some(avi_run_only(cfg, built, clock)?)
    } else {
        None
    };
    let gamma = avi.as_ref().map(|r| r.gamma);
    eroa_checks_from_runs(cfg, built, &run, avi.as_ref(), out_dir, checks)?;
    Ok(gamma)
}

fn avi_run_only(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    clock: &dyn Clock,
) -> Result<AviRun, HarnessError> {
    let em = error_model(cfg);
    Ok(run_avi(&built.problem, &built.spec, &em, &built.grid, &avi_config(cfg), clock)?)
}

fn eroa_checks_from_runs(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    run: &ViRun,
    avi: Option<&AviRun>,
    out_dir: &Path,
    checks: &mut Vec<CheckRecord>,
) -> Result<(), HarnessError> {
    let est = eroa_evolving_exact(run, cfg.level_margin)?;
    let stats = evolving_batch(
        cfg,
        built,
        &est,
        &run.policies,
        &run.snapshots[0],
        run.final_value(),
        est.level,
        out_dir,
        "trajectory_evolving_exact",
    )?;
    checks.push(CheckRecord {
        id: "thm5roa_containment".into(),
        pass: stats.containment_violations == 0,
        margin: Some(stats.worst_containment),
        worst_node: stats.first_containment_violation.clone(),
        detail: format!(
            "trajectories from all {} mask nodes stay in the limit sublevel set at r = {:.6e} \
             ({} violation(s); margin is max V_limit along trajectories minus r)",
            stats.total, est.level, stats.containment_violations
        ),
    });
    checks.push(CheckRecord {
        id: "thm3_partial_sums".into(),
        pass: stats.partial_sum_violations == 0,
        margin: Some(stats.worst_partial_sum_ratio),
        worst_node: stats.first_partial_sum_violation.clone(),
        detail: format!(
            "running cost sums stay below V0(x0)*(1+1e-6) along every trajectory \
             ({} violation(s); margin is the worst sum/V0 ratio)",
            stats.partial_sum_violations
        ),
    });
    let soft_rate = stats.soft_failures as f64 / stats.total.max(1) as f64;
    checks.push(CheckRecord {
        id: "thm37_convergence".into(),
        pass: stats.soft_failures == 0 || cfg.allow_soft_failures,
        margin: Some(soft_rate),
        worst_node: stats.first_soft_failure.clone(),
        detail: format!(
            "{} of {} mask-node trajectories reached ||x|| <= {:.1e} within {} steps without \
             exiting (soft-failure rate {soft_rate:.4}{})",
            stats.total - stats.soft_failures,
            stats.total,
            cfg.eps_s,
            cfg.k_max,
            if cfg.allow_soft_failures { "; reported, not gated" } else { "" }
        ),
    });
    csvio::write_mask(&out_dir.join("eroa_mask.csv"), &built.grid, &est.mask)?;

    if let Some(avi_run) = avi {
        let est_avi = eroa_evolving_avi(avi_run, cfg.level_margin)?;
        // Containment for the approximate case is audited against the
        // computable surrogate: V_lower_converged <= r/2 along trajectories.
        let stats = evolving_batch(
            cfg,
            built,
            &est_avi,
            &avi_run.policies,
            &avi_run.snapshots[0],
            &avi_run.lower_converged,
            est_avi.level / 2.0,
            out_dir,
            "trajectory_evolving_avi",
        )?;
        checks.push(CheckRecord {
            id: "thm8_containment".into(),
            pass: stats.containment_violations == 0,
            margin: Some(stats.worst_containment),
            worst_node: stats.first_containment_violation.clone(),
            detail: format!(
                "approximate-run trajectories from all {} mask nodes stay inside the surrogate \
                 optimal sublevel set (2*V_lower <= r = {:.6e}; {} violation(s))",
                stats.total, est_avi.level, stats.containment_violations
            ),
        });
        let soft_rate = stats.soft_failures as f64 / stats.total.max(1) as f64;
        checks.push(CheckRecord {
            id: "thm8_convergence".into(),
            pass: stats.soft_failures == 0 || cfg.allow_soft_failures,
            margin: Some(soft_rate),
            worst_node: stats.first_soft_failure.clone(),
            detail: format!(
                "evolving approximate policies from the half-level mask: soft-failure rate \
                 {soft_rate:.4}"
            ),
        });
        csvio::write_mask(&out_dir.join("eroa_mask_avi.csv"), &built.grid, &est_avi.mask)?;
    }
    Ok(())
}

struct BatchStats {
    total: usize,
    soft_failures: usize,
    containment_violations: usize,
    partial_sum_violations: usize,
    worst_containment: f64,
    worst_partial_sum_ratio: f64,
    first_containment_violation: Option<Vec<f64>>,
    first_partial_sum_violation: Option<Vec<f64>>,
    first_soft_failure: Option<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
fn evolving_batch(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    est: &EroaEstimate,
    policies: &[Arc<stabvi_core::backup::TabulatedPolicy>],
    v0: &GridValueFunction,
    containment_v: &GridValueFunction,
    containment_level: f64,
    out_dir: &Path,
    trajectory_prefix: &str,
) -> Result<BatchStats, HarnessError> {
    let mut stats = BatchStats {
        total: 0,
        soft_failures: 0,
        containment_violations: 0,
        partial_sum_violations: 0,
        worst_containment: f64::NEG_INFINITY,
        worst_partial_sum_ratio: 0.0,
        first_containment_violation: None,
        first_partial_sum_violation: None,
        first_soft_failure: None,
    };
    let members: Vec<usize> = est.mask.member_nodes().collect();
    let dump = sample_indices(members.len(), 5);
    let opts = sim_options(cfg);
    for (pos, &node) in members.iter().enumerate() {
        let x0 = built.grid.node(node);
        let rec = simulate_evolving_policy(&built.problem, policies, Some(containment_v), &x0, opts)?;
        stats.total += 1;

        let reached = rec.steps_to_eps.is_some() && !rec.exited;
        if !reached {
            stats.soft_failures += 1;
            if stats.first_soft_failure.is_none() {
                stats.first_soft_failure = Some(x0.clone());
            }
        }

        let worst_v = rec.values.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        stats.worst_containment = stats.worst_containment.max(worst_v - containment_level);
        if worst_v > containment_level * (1.0 + 1e-9) {
            stats.containment_violations += 1;
            if stats.first_containment_violation.is_none() {
                stats.first_containment_violation = Some(x0.clone());
            }
        }

        let bound = v0.eval(&x0)? * (1.0 + 1e-6);
        if bound > 0.0 {
            let worst_sum = rec.cumulative_utility.iter().fold(0.0_f64, |a, b| a.max(*b));
            stats.worst_partial_sum_ratio =
                stats.worst_partial_sum_ratio.max(worst_sum / (bound / (1.0 + 1e-6)));
            if worst_sum > bound {
                stats.partial_sum_violations += 1;
                if stats.first_partial_sum_violation.is_none() {
                    stats.first_partial_sum_violation = Some(x0.clone());
                }
            }
        }

        if dump.contains(&pos) {
            let path = out_dir.join(format!("{trajectory_prefix}_{pos}.csv"));
            csvio::write_trajectory(
                &path,
                &rec,
                built.problem.state_dim(),
                built.problem.control_dim(),
            )?;
        }
    }
    Ok(stats)
}

fn simulate_pipeline(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    out_dir: &Path,
    clock: &dyn Clock,
    checks: &mut Vec<CheckRecord>,
) -> Result<(), HarnessError> {
    let vi_cfg = vi_config(cfg, true);
    let run = run_stabilizing_vi(&built.problem, &built.spec, &built.grid, &vi_cfg, clock, None)?;
    let n = built.problem.state_dim();

    let starts: Vec<Vec<f64>> = if cfg.sim_starts.is_empty() {
        let fracs = [-0.9, -0.45, 0.225, 0.6, 0.9];
        fracs
            .iter()
            .map(|f| {
                (0..n)
                    .map(|a| {
                        let (lo, hi) =
                            (built.problem.domain().lo()[a], built.problem.domain().hi()[a]);
                        if *f < 0.0 {
                            -f * lo
                        } else {
                            f * hi
                        }
                    })
                    .collect()
            })
            .collect()
    } else {
        cfg.sim_starts.chunks(n).map(|c| c.to_vec()).collect()
    };

    let v = run.final_value();
    let policy = Policy::Tabulated(run.policies.last().expect("converged run").as_ref().clone());
    let mut worst_lyap = f64::NEG_INFINITY;
    let mut replay_ok = true;
    for (i, x0) in starts.iter().enumerate() {
        let rec = simulate_fixed_policy(&built.problem, &policy, Some(v), x0, sim_options(cfg))?;
        if let Some(w) = lyapunov_trace_residual(&rec) {
            worst_lyap = worst_lyap.max(w);
        }
        // replay audit: the record must reproduce itself through the dynamics
        let mut x = rec.states[0].clone();
        for k in 0..rec.controls.len() {
            let next = built.problem.step(&x, &rec.controls[k])?;
            if k + 1 < rec.states.len() {
                if next != rec.states[k + 1] {
                    replay_ok = false;
                }
                x = next;
            }
        }
        csvio::write_trajectory(
            &out_dir.join(format!("trajectory_fixed_{i}.csv")),
            &rec,
            n,
            built.problem.control_dim(),
        )?;
        let evo =
            simulate_evolving_policy(&built.problem, &run.policies, Some(v), x0, sim_options(cfg))?;
        csvio::write_trajectory(
            &out_dir.join(format!("trajectory_evolving_{i}.csv")),
            &evo,
            n,
            built.problem.control_dim(),
        )?;
    }
    checks.push(CheckRecord {
        id: "eq20_lyapunov_trace".into(),
        pass: worst_lyap <= cfg.lyap_tol,
        margin: Some(worst_lyap),
        worst_node: None,
        detail: format!(
            "max along-trajectory V(x_next) - V(x) + U(x,u) over {} starts (gate lyap_tol = \
             {:.1e}, cell-resolution slop)",
            starts.len(),
            cfg.lyap_tol
        ),
    });
    checks.push(CheckRecord {
        id: "replay_determinism".into(),
        pass: replay_ok,
        margin: None,
        worst_node: None,
        detail: "recorded trajectories replay bit-exactly through the dynamics".into(),
    });
    csvio::write_exact_trace(&out_dir.join("trace_exact.csv"), run.trace.rows())?;
    Ok(())
}

fn continuity_report(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    clock: &dyn Clock,
    checks: &mut Vec<CheckRecord>,
) -> Result<(), HarnessError> {
    // Spot check, reported and never asserted: halving the spacing should
    // change probe evaluations by no more than the previous change.
    let probes = probe_points(built, if built.problem.state_dim() == 1 { 100 } else { 10 });
    let mut finals: Vec<Vec<f64>> = Vec::new();
    let vi_cfg = vi_config(cfg, true);
    for scale in [1usize, 2, 4] {
        let grid = match cfg.grid_kind {
            crate::config::GridKind::Uniform => {
                let counts: Vec<usize> =
                    cfg.grid_nodes.iter().map(|n| (n - 1) * scale + 1).collect();
                Arc::new(stabvi_core::valuefn::Grid::uniform(built.problem.domain(), &counts)?)
            }
            crate::config::GridKind::Log => Arc::new(stabvi_core::valuefn::Grid::log_spaced(
                built.problem.domain(),
                &cfg.grid_x_min,
                cfg.grid_per_side * scale,
            )?),
        };
        let run = run_stabilizing_vi(&built.problem, &built.spec, &grid, &vi_cfg, clock, None)?;
        let mut vals = Vec::with_capacity(probes.len());
        for x in &probes {
            vals.push(run.final_value().eval(x)?);
        }
        finals.push(vals);
    }
    let change = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
    };
    let d1 = change(&finals[0], &finals[1]);
    let d2 = change(&finals[1], &finals[2]);
    checks.push(CheckRecord::passing(
        "continuity_decay",
        Some(d2 - d1),
        format!(
            "probe-evaluation change under two grid refinements: {d1:.3e} then {d2:.3e} \
             (decay {}; reported, not asserted)",
            d2 <= d1
        ),
    ));
    Ok(())
}
