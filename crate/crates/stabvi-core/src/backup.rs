//! The Bellman backup `min_u [ U(x,u) + V(f(x,u)) ]` and policy extraction.
//!
//! The minimization runs over the problem's finite control set. Candidates
//! whose successor leaves the domain box are excluded rather than
//! extrapolated — a backup value is only meaningful while the trajectory
//! stays where the value function is defined. Ties break toward the lowest
//! candidate index, so results are deterministic even when the argmin is not
//! unique.

use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::problem::{LinearFeedback, ProblemInstance, MAX_DIM};
use crate::valuefn::{Grid, ValueFunction};

/// Outcome of one backup at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct BackupResult {
    /// The minimized objective `U(x, u*) + V(f(x, u*))`.
    pub value: f64,
    /// The minimizing control.
    pub argmin: Vec<f64>,
    /// Index of the minimizer in the control set; `None` when golden-section
    /// refinement moved it off the candidate grid.
    pub argmin_index: Option<usize>,
    /// Number of in-domain candidates whose objective was evaluated.
    pub candidates_evaluated: usize,
}

/// Backup tuning knobs.
#[derive(Debug, Clone, Copy)]
pub struct BackupOptions {
    /// Golden-section pass around the best grid candidate (scalar control
    /// only). Off by default so the default path is exactly reproducible by
    /// brute-force enumeration over the same candidate set.
    pub refine: bool,
    /// Iteration cap for the golden-section pass.
    pub refine_iters: usize,
}

impl Default for BackupOptions {
    fn default() -> Self {
        Self { refine: false, refine_iters: 80 }
    }
}

impl BackupOptions {
    pub fn refined() -> Self {
        Self { refine: true, ..Self::default() }
    }
}

/// Exhaustive backup over the control set, with optional refinement.
pub fn bellman_backup(
    p: &ProblemInstance,
    v: &ValueFunction,
    x: &[f64],
    opts: &BackupOptions,
) -> Result<BackupResult> {
    if !p.domain().contains(x) {
        return Err(Error::DomainExit { x: x.to_vec() });
    }
    if opts.refine && p.control_dim() != 1 {
        return Err(Error::ContractViolation(
            "golden-section refinement is only implemented for scalar controls".to_string(),
        ));
    }

    let set = p.control_set();
    let mut succ = [0.0; MAX_DIM];
    let succ = &mut succ[..p.state_dim()];
    let mut best: Option<(f64, usize)> = None;
    let mut evaluated = 0usize;

    for idx in 0..set.len() {
        let u = set.candidate(idx);
        p.step_into(x, u, succ)?;
        if !p.domain().contains(succ) {
            continue;
        }
        p.domain().clamp(succ);
        let cont = match v.eval(succ) {
            Ok(val) => val,
            // A deeper backup with no feasible continuation excludes this
            // candidate, same as a direct domain exit would.
            Err(Error::InfeasibleBackup { .. }) => continue,
            Err(e) => return Err(e),
        };
        let objective = p.utility(x, u)? + cont;
        if !objective.is_finite() {
            return Err(Error::NumericEscape { what: "backup objective", x: x.to_vec(), u: u.to_vec() });
        }
        evaluated += 1;
        if best.map_or(true, |(bv, _)| objective < bv) {
            best = Some((objective, idx));
        }
    }

    let (mut value, best_idx) = best.ok_or_else(|| Error::InfeasibleBackup { x: x.to_vec() })?;
    let mut argmin = set.candidate(best_idx).to_vec();
    let mut argmin_index = Some(best_idx);

    if opts.refine {
        if let Some((u_ref, v_ref)) = refine_scalar(p, v, x, argmin[0], opts.refine_iters)? {
            if v_ref < value {
                value = v_ref;
                argmin[0] = u_ref;
                argmin_index = None;
            }
        }
    }

    Ok(BackupResult { value, argmin, argmin_index, candidates_evaluated: evaluated })
}

/// Golden-section pass on the scalar control, bracketing one candidate pitch
/// around `u_best`. Out-of-domain points score +inf.
fn refine_scalar(
    p: &ProblemInstance,
    v: &ValueFunction,
    x: &[f64],
    u_best: f64,
    iters: usize,
) -> Result<Option<(f64, f64)>> {
    let set = p.control_set();
    // Bracket from the neighboring candidate values around u_best.
    let mut below = f64::NEG_INFINITY;
    let mut above = f64::INFINITY;
    for idx in 0..set.len() {
        let u = set.candidate(idx)[0];
        if u < u_best && u > below {
            below = u;
        }
        if u > u_best && u < above {
            above = u;
        }
    }
    if !below.is_finite() {
        below = u_best;
    }
    if !above.is_finite() {
        above = u_best;
    }
    if above <= below {
        return Ok(None);
    }

    let mut succ = [0.0; MAX_DIM];
    let succ_len = p.state_dim();
    let mut objective = |u: f64| -> Result<f64> {
        let uu = [u];
        let out = &mut succ[..succ_len];
        p.step_into(x, &uu, out)?;
        if !p.domain().contains(out) {
            return Ok(f64::INFINITY);
        }
        p.domain().clamp(out);
        match v.eval(out) {
            Ok(cont) => Ok(p.utility(x, &uu)? + cont),
            Err(Error::InfeasibleBackup { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (below, above);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = objective(c)?;
    let mut fd = objective(d)?;
    for _ in 0..iters {
        if b - a <= 1e-13 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = objective(d)?;
        }
    }
    let (u_ref, f_ref) = if fc <= fd { (c, fc) } else { (d, fd) };
    if f_ref.is_finite() {
        Ok(Some((u_ref, f_ref)))
    } else {
        Ok(None)
    }
}

/// A state-feedback control law.
pub enum Policy {
    /// Closed-form linear feedback `u = -K x`.
    Linear(LinearFeedback),
    /// Controls tabulated at grid nodes; off-node queries use the nearest
    /// node (not interpolation — the greedy control may be discontinuous).
    Tabulated(TabulatedPolicy),
}

impl Policy {
    pub fn control_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Policy::Linear(k) => k.control_into(x, out),
            Policy::Tabulated(t) => t.control_into(x, out),
        }
    }

    pub fn control(&self, x: &[f64], m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        self.control_into(x, &mut out);
        out
    }
}

/// Controls stored per grid node, flat `num_nodes * m`.
#[derive(Debug, Clone)]
pub struct TabulatedPolicy {
    grid: Arc<Grid>,
    controls: Vec<f64>,
    m: usize,
}

impl TabulatedPolicy {
    pub fn new(grid: Arc<Grid>, m: usize, controls: Vec<f64>) -> Result<Self> {
        if controls.len() != grid.num_nodes() * m {
            return Err(Error::DimensionMismatch {
                what: "tabulated controls",
                expected: grid.num_nodes() * m,
                got: controls.len(),
            });
        }
        Ok(Self { grid, controls, m })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn control_at(&self, flat: usize) -> &[f64] {
        &self.controls[flat * self.m..(flat + 1) * self.m]
    }

    /// Nearest-node lookup; points outside the grid are clamped onto it.
    pub fn control_into(&self, x: &[f64], out: &mut [f64]) {
        let mut buf = [0.0; MAX_DIM];
        let clamped = &mut buf[..x.len()];
        for (a, v) in x.iter().enumerate() {
            let axis = self.grid.axis(a);
            clamped[a] = v.max(axis[0]).min(*axis.last().unwrap());
        }
        let flat = self.grid.nearest_node_flat(clamped).expect("clamped point is on the grid");
        out.copy_from_slice(self.control_at(flat));
    }
}

/// Snaps a policy onto the control set: at every grid node the stored
/// control is the candidate nearest (squared Euclidean distance, lowest
/// index on ties) to `h(node)`.
///
/// Grid engines consume policies through this quantization so that the seed
/// value function and the backup minimize over the same actuation model;
/// otherwise the first backup step could lose to a continuous control the
/// candidate set cannot express.
pub fn quantize_policy(p: &ProblemInstance, h: &Policy, grid: &Arc<Grid>) -> Result<TabulatedPolicy> {
    let m = p.control_dim();
    let set = p.control_set();
    let mut controls = vec![0.0; grid.num_nodes() * m];
    let mut x = vec![0.0; grid.dim()];
    let mut u = vec![0.0; m];
    for node in 0..grid.num_nodes() {
        grid.node_into(node, &mut x);
        h.control_into(&x, &mut u);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for idx in 0..set.len() {
            let cand = set.candidate(idx);
            let d: f64 = cand.iter().zip(&u).map(|(c, v)| (c - v) * (c - v)).sum();
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        controls[node * m..(node + 1) * m].copy_from_slice(set.candidate(best));
    }
    TabulatedPolicy::new(grid.clone(), m, controls)
}

/// Tabulates the greedy control `argmin_u [ U(x,u) + V(f(x,u)) ]` at every
/// grid node. Backup failures propagate with the node attached.
pub fn extract_policy(
    p: &ProblemInstance,
    v: &ValueFunction,
    grid: &Arc<Grid>,
    opts: &BackupOptions,
) -> Result<TabulatedPolicy> {
    let m = p.control_dim();
    let mut controls = vec![0.0; grid.num_nodes() * m];
    let mut x = vec![0.0; grid.dim()];
    for idx in 0..grid.num_nodes() {
        grid.node_into(idx, &mut x);
        let result = bellman_backup(p, v, &x, opts)?;
        controls[idx * m..(idx + 1) * m].copy_from_slice(&result.argmin);
    }
    TabulatedPolicy::new(grid.clone(), m, controls)
}
