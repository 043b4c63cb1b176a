//! Line-oriented experiment configuration.
//!
//! Format: one `key = value` per line; `#` starts a comment; blank lines are
//! ignored. Lists are whitespace-separated numbers. Unknown and duplicate
//! keys are rejected, and all problems are reported together. An empty file
//! resolves to the defaults: the scalar linear benchmark under the
//! stabilizing-VI pipeline. The full schema lives in `docs/config.md`.

use std::collections::BTreeMap;

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    ExactVi,
    StabilizingVi,
    Avi,
    Eroa,
    Simulate,
    TheoremSuite,
}

impl Pipeline {
    pub fn id(&self) -> &'static str {
        match self {
            Pipeline::ExactVi => "exact_vi",
            Pipeline::StabilizingVi => "stabilizing_vi",
            Pipeline::Avi => "avi",
            Pipeline::Eroa => "eroa",
            Pipeline::Simulate => "simulate",
            Pipeline::TheoremSuite => "theorem_suite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    ScalarLinear,
    Linear2d,
    Poly2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Uniform,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    Uniform,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Grid,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Zero,
    Sinusoid,
    Uniform,
}

/// Fully resolved, range-checked experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub system: SystemKind,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub cubic: Vec<f64>,
    pub q: Vec<f64>,
    pub r: f64,
    pub policy_gain: Vec<f64>,
    pub omega_lo: Vec<f64>,
    pub omega_hi: Vec<f64>,
    pub grid_kind: GridKind,
    pub grid_nodes: Vec<usize>,
    pub grid_x_min: Vec<f64>,
    pub grid_per_side: usize,
    pub control_kind: ControlKind,
    pub control_lo: f64,
    pub control_hi: f64,
    pub control_count: usize,
    pub control_u_min: f64,
    pub control_per_side: usize,
    pub c: f64,
    pub error_shape: ShapeKind,
    pub seed: Option<u64>,
    pub error_frequency: f64,
    pub error_phase: f64,
    pub delta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub avi_iterations: usize,
    pub eps_s: f64,
    pub k_max: usize,
    pub adm_eps: f64,
    pub adm_k_max: usize,
    pub refine: bool,
    pub representation: Representation,
    pub level_margin: f64,
    pub lyap_tol: f64,
    pub horizon_cap: usize,
    pub sim_starts: Vec<f64>,
    pub allow_soft_failures: bool,
    pub timing: bool,
    /// Resolved key/value echo, embedded in the verdict report.
    pub echo: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "pipeline",
    "system",
    "a",
    "b",
    "cubic",
    "q",
    "r",
    "policy_gain",
    "omega_lo",
    "omega_hi",
    "grid_kind",
    "grid_nodes",
    "grid_x_min",
    "grid_per_side",
    "control_kind",
    "control_lo",
    "control_hi",
    "control_count",
    "control_u_min",
    "control_per_side",
    "c",
    "error_shape",
    "seed",
    "error_frequency",
    "error_phase",
    "delta",
    "tol",
    "max_iter",
    "avi_iterations",
    "eps_s",
    "k_max",
    "adm_eps",
    "adm_k_max",
    "refine",
    "representation",
    "level_margin",
    "lyap_tol",
    "horizon_cap",
    "sim_starts",
    "allow_soft_failures",
    "timing",
];

/// Parses and validates a config text, reporting every offending key at once.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let mut errors: Vec<String> = Vec::new();
    let mut raw: BTreeMap<String, String> = BTreeMap::new();

    for (lineno, line) in text.lines().enumerate() {
        let stripped = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            errors.push(format!("line {}: expected `key = value`, got `{stripped}`", lineno + 1));
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            errors.push(format!("line {}: unknown key `{key}`", lineno + 1));
            continue;
        }
        if raw.insert(key.clone(), value).is_some() {
            errors.push(format!("line {}: duplicate key `{key}`", lineno + 1));
        }
    }

    let cfg = resolve(&raw, &mut errors);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(HarnessError::Config(errors))
    }
}

fn resolve(raw: &BTreeMap<String, String>, errors: &mut Vec<String>) -> ExperimentConfig {
    let get = |key: &str| raw.get(key).cloned();

    let pipeline = match get("pipeline").as_deref() {
        None | Some("stabilizing_vi") => Pipeline::StabilizingVi,
        Some("exact_vi") => Pipeline::ExactVi,
        Some("avi") => Pipeline::Avi,
        Some("eroa") => Pipeline::Eroa,
        Some("simulate") => Pipeline::Simulate,
        Some("theorem_suite") => Pipeline::TheoremSuite,
        Some(other) => {
            errors.push(format!(
                "pipeline: unknown id `{other}` (expected exact_vi | stabilizing_vi | avi | \
                 eroa | simulate | theorem_suite)"
            ));
            Pipeline::StabilizingVi
        }
    };

    let system = match get("system").as_deref() {
        None | Some("scalar_linear") => SystemKind::ScalarLinear,
        Some("linear_2d") => SystemKind::Linear2d,
        Some("poly_2d") => SystemKind::Poly2d,
        Some(other) => {
            errors.push(format!(
                "system: unknown id `{other}` (expected scalar_linear | linear_2d | poly_2d)"
            ));
            SystemKind::ScalarLinear
        }
    };
    let n = match system {
        SystemKind::ScalarLinear => 1,
        SystemKind::Linear2d | SystemKind::Poly2d => 2,
    };

    // Benchmark defaults per system family.
    let (a_def, b_def, cubic_def, q_def, gain_def): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) =
        match system {
            SystemKind::ScalarLinear => (vec![1.1], vec![1.0], vec![], vec![1.0], vec![0.6]),
            SystemKind::Linear2d => (
                vec![0.9, 0.1, -0.1, 0.8],
                vec![0.0, 0.1],
                vec![],
                vec![1.0, 1.0],
                vec![0.3, 0.3],
            ),
            SystemKind::Poly2d => (
                vec![0.9, 0.1, 0.0, 0.7],
                vec![0.0, 0.2],
                vec![0.0, 0.1],
                vec![1.0, 1.0],
                vec![0.5, 0.5],
            ),
        };

    let a = f64_list(raw, "a", errors).unwrap_or(a_def);
    let b = f64_list(raw, "b", errors).unwrap_or(b_def);
    let cubic = f64_list(raw, "cubic", errors).unwrap_or(cubic_def);
    let q = f64_list(raw, "q", errors).unwrap_or(q_def);
    let r = scalar(raw, "r", errors).unwrap_or(1.0);
    let policy_gain = f64_list(raw, "policy_gain", errors).unwrap_or(gain_def);
    let omega_lo = f64_list(raw, "omega_lo", errors).unwrap_or_else(|| vec![-1.0; n]);
    let omega_hi = f64_list(raw, "omega_hi", errors).unwrap_or_else(|| vec![1.0; n]);

    if a.len() != n * n {
        errors.push(format!("a: expected {} entries for this system, got {}", n * n, a.len()));
    }
    if b.len() != n {
        errors.push(format!("b: expected {} entries, got {}", n, b.len()));
    }
    if system == SystemKind::Poly2d && cubic.len() != n {
        errors.push(format!("cubic: expected {} entries, got {}", n, cubic.len()));
    }
    if system != SystemKind::Poly2d && !cubic.is_empty() {
        errors.push("cubic: only meaningful for system = poly_2d".into());
    }
    if q.len() != n {
        errors.push(format!("q: expected {} entries, got {}", n, q.len()));
    }
    if !(r > 0.0) {
        errors.push(format!("r: must be > 0, got {r}"));
    }
    if policy_gain.len() != n {
        errors.push(format!("policy_gain: expected {} entries, got {}", n, policy_gain.len()));
    }
    if omega_lo.len() != n || omega_hi.len() != n {
        errors.push(format!("omega_lo/omega_hi: expected {n} entries per axis list"));
    } else {
        for j in 0..n {
            if !(omega_lo[j] < 0.0 && 0.0 < omega_hi[j]) {
                errors.push(format!(
                    "omega axis {j}: need lo < 0 < hi, got [{}, {}]",
                    omega_lo[j], omega_hi[j]
                ));
            }
        }
    }

    let grid_kind = match get("grid_kind").as_deref() {
        None | Some("uniform") => GridKind::Uniform,
        Some("log") => GridKind::Log,
        Some(other) => {
            errors.push(format!("grid_kind: unknown `{other}` (expected uniform | log)"));
            GridKind::Uniform
        }
    };
    let grid_nodes = usize_list(raw, "grid_nodes", errors).unwrap_or_else(|| vec![201; n]);
    let grid_nodes = if grid_nodes.len() == 1 && n > 1 {
        vec![grid_nodes[0]; n]
    } else {
        grid_nodes
    };
    if grid_kind == GridKind::Uniform {
        if grid_nodes.len() != n {
            errors.push(format!("grid_nodes: expected {n} entries (or one shared count)"));
        }
        for (j, count) in grid_nodes.iter().enumerate() {
            if *count < 3 {
                errors.push(format!("grid_nodes axis {j}: resolution must be >= 3 nodes"));
            }
        }
    }
    let grid_x_min = f64_list(raw, "grid_x_min", errors).unwrap_or_else(|| vec![1e-4; n]);
    let grid_per_side = unsigned(raw, "grid_per_side", errors).unwrap_or(200);
    if grid_kind == GridKind::Log {
        if grid_x_min.len() != n {
            errors.push(format!("grid_x_min: expected {n} entries"));
        }
        if grid_per_side < 2 {
            errors.push("grid_per_side: must be >= 2".into());
        }
        for (j, xm) in grid_x_min.iter().enumerate() {
            if !(*xm > 0.0) {
                errors.push(format!("grid_x_min axis {j}: must be > 0"));
            }
        }
    }

    let control_kind = match get("control_kind").as_deref() {
        None | Some("uniform") => ControlKind::Uniform,
        Some("log") => ControlKind::Log,
        Some(other) => {
            errors.push(format!("control_kind: unknown `{other}` (expected uniform | log)"));
            ControlKind::Uniform
        }
    };
    let control_lo = scalar(raw, "control_lo", errors).unwrap_or(-1.0);
    let control_hi = scalar(raw, "control_hi", errors).unwrap_or(1.0);
    let control_count = unsigned(raw, "control_count", errors).unwrap_or(401);
    let control_u_min = scalar(raw, "control_u_min", errors).unwrap_or(1e-5);
    let control_per_side = unsigned(raw, "control_per_side", errors).unwrap_or(200);
    if !(control_lo < 0.0 && 0.0 < control_hi) {
        errors.push(format!("control bounds: need lo < 0 < hi, got [{control_lo}, {control_hi}]"));
    }
    match control_kind {
        ControlKind::Uniform => {
            if control_count < 2 {
                errors.push("control_count: must be >= 2".into());
            }
        }
        ControlKind::Log => {
            if !(control_u_min > 0.0) {
                errors.push("control_u_min: must be > 0".into());
            }
            if control_per_side < 2 {
                errors.push("control_per_side: must be >= 2".into());
            }
        }
    }

    let c = scalar(raw, "c", errors).unwrap_or(0.0);
    if !(0.0..1.0).contains(&c) {
        errors.push(format!("c: the error bound must lie in [0, 1), got {c}"));
    }
    let error_shape = match get("error_shape").as_deref() {
        None | Some("zero") => ShapeKind::Zero,
        Some("sinusoid") => ShapeKind::Sinusoid,
        Some("uniform") => ShapeKind::Uniform,
        Some(other) => {
            errors.push(format!("error_shape: unknown `{other}` (expected zero | sinusoid | uniform)"));
            ShapeKind::Zero
        }
    };
    let seed = match get("seed") {
        Some(s) => match s.parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                errors.push(format!("seed: expected a non-negative integer, got `{s}`"));
                None
            }
        },
        None => None,
    };
    if error_shape == ShapeKind::Uniform && seed.is_none() {
        errors.push("seed: required when error_shape = uniform (the draws are keyed on it)".into());
    }
    let error_frequency = scalar(raw, "error_frequency", errors).unwrap_or(1.0);
    let error_phase = scalar(raw, "error_phase", errors).unwrap_or(0.0);

    let delta = positive(raw, "delta", errors).unwrap_or(1e-10);
    let tol = positive(raw, "tol", errors).unwrap_or(1e-6);
    let max_iter = unsigned(raw, "max_iter", errors).unwrap_or(10_000);
    let avi_iterations = unsigned(raw, "avi_iterations", errors).unwrap_or(50);
    let eps_s = positive(raw, "eps_s", errors).unwrap_or(1e-3);
    let k_max = unsigned(raw, "k_max", errors).unwrap_or(2000);
    let adm_eps = positive(raw, "adm_eps", errors).unwrap_or(1e-3);
    let adm_k_max = unsigned(raw, "adm_k_max", errors).unwrap_or(500);
    let refine = onoff(raw, "refine", errors).unwrap_or(false);
    let representation = match get("representation").as_deref() {
        None | Some("grid") => Representation::Grid,
        Some("quadratic") => Representation::Quadratic,
        Some(other) => {
            errors.push(format!("representation: unknown `{other}` (expected grid | quadratic)"));
            Representation::Grid
        }
    };
    let level_margin = positive(raw, "level_margin", errors).unwrap_or(1e-6);
    if level_margin >= 1.0 {
        errors.push(format!("level_margin: must lie in (0, 1), got {level_margin}"));
    }
    let lyap_tol = positive(raw, "lyap_tol", errors).unwrap_or(1e-2);
    let horizon_cap = unsigned(raw, "horizon_cap", errors).unwrap_or(4);
    let sim_starts = f64_list(raw, "sim_starts", errors).unwrap_or_default();
    if !sim_starts.is_empty() && sim_starts.len() % n != 0 {
        errors.push(format!(
            "sim_starts: flattened state list length {} is not a multiple of the state dimension {n}",
            sim_starts.len()
        ));
    }
    let allow_soft_failures = onoff(raw, "allow_soft_failures", errors).unwrap_or(false);
    let timing = onoff(raw, "timing", errors).unwrap_or(false);

    if representation == Representation::Quadratic {
        if system == SystemKind::Poly2d {
            errors.push("representation = quadratic requires a linear system".into());
        }
        if refine {
            errors.push("representation = quadratic requires refine = off".into());
        }
        if max_iter > stabvi_core::engine_exact::CHAIN_DEPTH_CAP {
            errors.push(format!(
                "representation = quadratic caps max_iter at {} (evaluation cost is |U|^depth)",
                stabvi_core::engine_exact::CHAIN_DEPTH_CAP
            ));
        }
    }

    let cfg = ExperimentConfig {
        pipeline,
        system,
        a,
        b,
        cubic,
        q,
        r,
        policy_gain,
        omega_lo,
        omega_hi,
        grid_kind,
        grid_nodes,
        grid_x_min,
        grid_per_side,
        control_kind,
        control_lo,
        control_hi,
        control_count,
        control_u_min,
        control_per_side,
        c,
        error_shape,
        seed,
        error_frequency,
        error_phase,
        delta,
        tol,
        max_iter,
        avi_iterations,
        eps_s,
        k_max,
        adm_eps,
        adm_k_max,
        refine,
        representation,
        level_margin,
        lyap_tol,
        horizon_cap,
        sim_starts,
        allow_soft_failures,
        timing,
        echo: BTreeMap::new(),
    };
    with_echo(cfg)
}

fn with_echo(mut cfg: ExperimentConfig) -> ExperimentConfig {
    let mut echo = BTreeMap::new();
    let fmt_list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let fmt_usize = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    echo.insert("pipeline".into(), cfg.pipeline.id().into());
    echo.insert(
        "system".into(),
        match cfg.system {
            SystemKind::ScalarLinear => "scalar_linear",
            SystemKind::Linear2d => "linear_2d",
            SystemKind::Poly2d => "poly_2d",
        }
        .into(),
    );
    echo.insert("a".into(), fmt_list(&cfg.a));
    echo.insert("b".into(), fmt_list(&cfg.b));
    if !cfg.cubic.is_empty() {
        echo.insert("cubic".into(), fmt_list(&cfg.cubic));
    }
    echo.insert("q".into(), fmt_list(&cfg.q));
    echo.insert("r".into(), cfg.r.to_string());
    echo.insert("policy_gain".into(), fmt_list(&cfg.policy_gain));
    echo.insert("omega_lo".into(), fmt_list(&cfg.omega_lo));
    echo.insert("omega_hi".into(), fmt_list(&cfg.omega_hi));
    echo.insert(
        "grid_kind".into(),
        match cfg.grid_kind {
            GridKind::Uniform => "uniform",
            GridKind::Log => "log",
        }
        .into(),
    );
    match cfg.grid_kind {
        GridKind::Uniform => {
            echo.insert("grid_nodes".into(), fmt_usize(&cfg.grid_nodes));
        }
        GridKind::Log => {
            echo.insert("grid_x_min".into(), fmt_list(&cfg.grid_x_min));
            echo.insert("grid_per_side".into(), cfg.grid_per_side.to_string());
        }
    }
    echo.insert(
        "control_kind".into(),
        match cfg.control_kind {
            ControlKind::Uniform => "uniform",
            ControlKind::Log => "log",
        }
        .into(),
    );
    echo.insert("control_lo".into(), cfg.control_lo.to_string());
    echo.insert("control_hi".into(), cfg.control_hi.to_string());
    match cfg.control_kind {
        ControlKind::Uniform => {
            echo.insert("control_count".into(), cfg.control_count.to_string());
        }
        ControlKind::Log => {
            echo.insert("control_u_min".into(), cfg.control_u_min.to_string());
            echo.insert("control_per_side".into(), cfg.control_per_side.to_string());
        }
    }
    echo.insert("c".into(), cfg.c.to_string());
    echo.insert(
        "error_shape".into(),
        match cfg.error_shape {
            ShapeKind::Zero => "zero",
            ShapeKind::Sinusoid => "sinusoid",
            ShapeKind::Uniform => "uniform",
        }
        .into(),
    );
    if let Some(seed) = cfg.seed {
        echo.insert("seed".into(), seed.to_string());
    }
    echo.insert("error_frequency".into(), cfg.error_frequency.to_string());
    echo.insert("error_phase".into(), cfg.error_phase.to_string());
    echo.insert("delta".into(), cfg.delta.to_string());
    echo.insert("tol".into(), cfg.tol.to_string());
    echo.insert("max_iter".into(), cfg.max_iter.to_string());
    echo.insert("avi_iterations".into(), cfg.avi_iterations.to_string());
    echo.insert("eps_s".into(), cfg.eps_s.to_string());
    echo.insert("k_max".into(), cfg.k_max.to_string());
    echo.insert("adm_eps".into(), cfg.adm_eps.to_string());
    echo.insert("adm_k_max".into(), cfg.adm_k_max.to_string());
    echo.insert("refine".into(), if cfg.refine { "on" } else { "off" }.into());
    echo.insert(
        "representation".into(),
        match cfg.representation {
            Representation::Grid => "grid",
            Representation::Quadratic => "quadratic",
        }
        .into(),
    );
    echo.insert("level_margin".into(), cfg.level_margin.to_string());
    echo.insert("lyap_tol".into(), cfg.lyap_tol.to_string());
    echo.insert("horizon_cap".into(), cfg.horizon_cap.to_string());
    if !cfg.sim_starts.is_empty() {
        echo.insert("sim_starts".into(), fmt_list(&cfg.sim_starts));
    }
    echo.insert(
        "allow_soft_failures".into(),
        if cfg.allow_soft_failures { "on" } else { "off" }.into(),
    );
    echo.insert("timing".into(), if cfg.timing { "on" } else { "off" }.into());
    cfg.echo = echo;
    cfg
}

fn f64_list(raw: &BTreeMap<String, String>, key: &str, errors: &mut Vec<String>) -> Option<Vec<f64>> {
    let text = raw.get(key)?;
    let mut out = Vec::new();
    for tok in text.split_whitespace() {
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => {
                errors.push(format!("{key}: `{tok}` is not a finite number"));
                return None;
            }
        }
    }
    if out.is_empty() {
        errors.push(format!("{key}: empty value"));
        return None;
    }
    Some(out)
}

fn usize_list(raw: &BTreeMap<String, String>, key: &str, errors: &mut Vec<String>) -> Option<Vec<usize>> {
    let text = raw.get(key)?;
    let mut out = Vec::new();
    for tok in text.split_whitespace() {
        match tok.parse::<usize>() {
            Ok(v) => out.push(v),
            Err(_) => {
                errors.push(format!("{key}: `{tok}` is not a non-negative integer"));
                return None;
            }
        }
    }
    if out.is_empty() {
        errors.push(format!("{key}: empty value"));
        return None;
    }
    Some(out)
}

fn scalar(raw: &BTreeMap<String, String>, key: &str, errors: &mut Vec<String>) -> Option<f64> {
    let text = raw.get(key)?;
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        _ => {
            errors.push(format!("{key}: `{text}` is not a finite number"));
            None
        }
    }
}

fn positive(raw: &BTreeMap<String, String>, key: &str, errors: &mut Vec<String>) -> Option<f64> {
    let v = scalar(raw, key, errors)?;
    if v > 0.0 {
        Some(v)
    } else {
        errors.push(format!("{key}: must be > 0, got {v}"));
        None
    }
}

fn unsigned(raw: &BTreeMap<String, String>, key: &str, errors: &mut Vec<String>) -> Option<usize> {
    let text = raw.get(key)?;
    match text.parse::<usize>() {
        Ok(v) => Some(v),
        Err(_) => {
            errors.push(format!("{key}: `{text}` is not a non-negative integer"));
            None
        }
    }
}

fn onoff(raw: &BTreeMap<String, String>, key: &str, errors: &mut Vec<String>) -> Option<bool> {
    let text = raw.get(key)?;
    match text.as_str() {
        "on" | "true" | "1" => Some(true),
        "off" | "false" | "0" => Some(false),
        other => {
            errors.push(format!("{key}: expected on|off, got `{other}`"));
            None
        }
    }
}
