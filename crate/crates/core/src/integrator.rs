//! Backward Euler time stepping with a damped Newton solve per step.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsRecord;
use crate::discretization::DiscreteOperators;
use crate::dynamics::{
    full_jacobian, full_residual, limit_jacobian, limit_residual, Forcing, ModelParams, StatePair, SystemKind,
};
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::sparse::SparseLu;

pub const DEFAULT_ENTROPY_SHIFT: f64 = 1e-8;

const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Damping {
    None,
    #[default]
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeStepperConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Weighted 2-norm tolerance on the residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub damping: Damping,
    pub snapshot_every: usize,
}

impl TimeStepperConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            damping: Damping::Backtracking,
            snapshot_every: 1,
        }
    }

    pub fn with_snapshot_every(mut self, every: usize) -> Self {
        self.snapshot_every = every;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            v.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            v.push(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.dt > self.t_end {
            v.push(format!("dt ({}) must not exceed t_end ({})", self.dt, self.t_end));
        }
        if self.newton_tol.is_nan() || self.newton_tol <= 0.0 {
            v.push(format!("newton_tol must be positive, got {}", self.newton_tol));
        }
        if self.newton_max_iter == 0 {
            v.push("newton_max_iter must be at least 1".into());
        }
        if self.snapshot_every == 0 {
            v.push("snapshot_every must be at least 1".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v.join("; ")))
        }
    }
}

/// Everything a run needs besides the initial state and the stepping config.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub geom: &'a Geometry,
    pub ops: &'a DiscreteOperators,
    pub params: &'a ModelParams,
    /// Shift λ in the logarithmic entropy and Fisher diagnostics.
    pub entropy_shift: f64,
    /// Source terms evaluated at the new time level of each step.
    pub forcing: Option<&'a (dyn Fn(f64) -> Forcing + Sync)>,
}

impl<'a> Problem<'a> {
    pub fn new(geom: &'a Geometry, ops: &'a DiscreteOperators, params: &'a ModelParams) -> Self {
        Self {
            geom,
            ops,
            params,
            entropy_shift: DEFAULT_ENTROPY_SHIFT,
            forcing: None,
        }
    }

    pub fn with_forcing(mut self, forcing: &'a (dyn Fn(f64) -> Forcing + Sync)) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn with_entropy_shift(mut self, shift: f64) -> Self {
        self.entropy_shift = shift;
        self
    }

    /// The physical pair (u, v) behind a solver state. For the limit system
    /// the solver stores (w, trace w) and the surface concentration is (trace w)^γ.
    pub fn physical(&self, state: &StatePair) -> StatePair {
        if self.params.kind == SystemKind::Limit {
            let g = self.params.limit_exponent();
            StatePair::new(state.u.clone(), state.v.iter().map(|&z| g.pow(z.max(0.0))).collect(), state.t)
        } else {
            state.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Solver states; for the limit system `v` holds the boundary trace of `w`.
    pub snapshots: Vec<StatePair>,
    /// Diagnostics of the physical pair at each snapshot.
    pub diagnostics: Vec<DiagnosticsRecord>,
    /// Newton iterations per time step.
    pub newton_iterations: Vec<usize>,
    /// L²(Γ) distance between the given v₀ and (trace u₀)^γ for limit runs.
    pub compatibility_mismatch: Option<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &StatePair {
        self.snapshots.last().expect("trajectory holds the initial state")
    }

    pub fn mean_newton_iterations(&self) -> f64 {
        if self.newton_iterations.is_empty() {
            0.0
        } else {
            self.newton_iterations.iter().sum::<usize>() as f64 / self.newton_iterations.len() as f64
        }
    }
}

/// Advances one backward Euler step of size `dt`.
pub fn step(
    state: &StatePair,
    dt: f64,
    ops: &DiscreteOperators,
    p: &ModelParams,
    cfg: &TimeStepperConfig,
) -> Result<StatePair> {
    state.check_dims(ops.n_bulk(), ops.n_surface())?;
    let mut lu = SparseLu::new();
    newton_step(state, dt, ops, p, None, cfg, &mut lu).map(|(s, _)| s)
}

fn newton_step(
    old: &StatePair,
    dt: f64,
    ops: &DiscreteOperators,
    p: &ModelParams,
    forcing: Option<&Forcing>,
    cfg: &TimeStepperConfig,
    lu: &mut SparseLu,
) -> Result<(StatePair, usize)> {
    let t_new = old.t + dt;
    match p.kind {
        SystemKind::Full | SystemKind::Regularized => {
            let nb = old.u.len();
            let mut x: Vec<f64> = old.u.iter().chain(&old.v).copied().collect();
            let residual = |x: &[f64]| {
                let (rb, rs) = full_residual(&x[..nb], &x[nb..], old, dt, ops, p, forcing);
                let norm = ops.weighted_norm(&rb, &rs);
                let mut r = rb;
                r.extend(rs);
                (r, norm)
            };
            let iters = newton_loop(&mut x, residual, |x| full_jacobian(&x[..nb], &x[nb..], dt, ops, p), |d| {
                ops.weighted_norm(&d[..nb], &d[nb..])
            }, dt, t_new, cfg, lu)?;
            let v = x.split_off(nb);
            let new = StatePair::new(x, v, t_new);
            if !new.is_admissible() {
                warn!("negative concentration beyond tolerance at t = {t_new}");
            }
            Ok((new, iters))
        }
        SystemKind::Limit => {
            let mut w = old.u.clone();
            let mut clipped = false;
            let iters = newton_loop(
                &mut w,
                |w| {
                    let (r, c) = limit_residual(w, old, dt, ops, p);
                    clipped |= c;
                    let norm = ops.weighted_norm(&r, &[]);
                    (r, norm)
                },
                |w| limit_jacobian(w, dt, ops, p),
                |d| ops.weighted_norm(d, &[]),
                dt,
                t_new,
                cfg,
                lu,
            )?;
            if clipped {
                warn!("limit boundary values clipped at the positivity floor near t = {t_new}");
            }
            let z = ops.trace.mul_vec(&w);
            Ok((StatePair::new(w, z, t_new), iters))
        }
    }
}

/// Damped Newton iteration on `x`. Converged when the weighted residual is at
/// most `newton_tol`, or when the Newton update has weighted size at most
/// `newton_tol * (dt + |x|)`: the residual of very stiff systems saturates at
/// a round-off level proportional to the stiffness, and once the update is
/// that small the quadratic phase has already made the iterate exact.
///
/// A damped trial point is accepted when it lowers the residual or when the
/// simplified Newton correction there (same factorization) is smaller than
/// `(1 - λ/4)` times the full correction. The second test is invariant under
/// rescaling of the equations, so the 1/ε-weighted reaction rows cannot veto
/// steps along the curved equilibrium manifold.
#[allow(clippy::too_many_arguments)]
fn newton_loop(
    x: &mut Vec<f64>,
    mut residual: impl FnMut(&[f64]) -> (Vec<f64>, f64),
    jacobian: impl Fn(&[f64]) -> crate::sparse::CsrMatrix,
    step_norm: impl Fn(&[f64]) -> f64,
    dt: f64,
    time: f64,
    cfg: &TimeStepperConfig,
    lu: &mut SparseLu,
) -> Result<usize> {
    let negated = |r: &[f64]| -> Vec<f64> { r.iter().map(|v| -v).collect() };
    let (mut r, mut norm) = residual(x);
    for it in 0..cfg.newton_max_iter {
        if norm <= cfg.newton_tol {
            return Ok(it);
        }
        if !norm.is_finite() {
            break;
        }
        log::debug!("t = {time}: newton iteration {it}, residual {norm:e}");
        lu.factor(&jacobian(x))?;
        let delta = lu.solve_factored(&negated(&r))?;
        let delta_norm = step_norm(&delta);
        if delta_norm <= cfg.newton_tol * (dt + step_norm(x)) {
            x.iter_mut().zip(&delta).for_each(|(a, d)| *a += d);
            return Ok(it + 1);
        }

        let mut lambda = 1.0;
        let mut halvings = 0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
            let (rt, nt) = residual(&trial);
            let accept = cfg.damping == Damping::None
                || halvings == MAX_HALVINGS
                || nt < norm
                || (nt.is_finite()
                    && lu
                        .solve_factored(&negated(&rt))
                        .is_ok_and(|s| step_norm(&s) <= (1.0 - 0.25 * lambda) * delta_norm));
            if accept {
                *x = trial;
                r = rt;
                norm = nt;
                break;
            }
            lambda *= 0.5;
            halvings += 1;
        }
    }
    if norm <= cfg.newton_tol {
        return Ok(cfg.newton_max_iter);
    }
    Err(Error::NewtonDiverged {
        time,
        residual: norm,
        iterations: cfg.newton_max_iter,
    })
}

/// Converts physical initial data (u₀, v₀) into the limit solver's state
/// (w₀ = u₀, z₀ = trace u₀) and reports ‖v₀ − z₀^γ‖_{L²(Γ)}.
pub fn limit_initial_state(initial: &StatePair, geom: &Geometry, ops: &DiscreteOperators, p: &ModelParams) -> (StatePair, f64) {
    let z = ops.trace.mul_vec(&initial.u);
    let g = p.limit_exponent();
    let diff: Vec<f64> = z.iter().zip(&initial.v).map(|(&z, &v)| v - g.pow(z.max(0.0))).collect();
    let mismatch = geom.surface_l2(&diff);
    (StatePair::new(initial.u.clone(), z, initial.t), mismatch)
}

/// Integrates from `initial.t` to `cfg.t_end`. For the limit system,
/// `initial` holds physical data and is converted with [`limit_initial_state`]
/// unless `v` already equals the trace of `u`.
pub fn run(initial: &StatePair, problem: &Problem, cfg: &TimeStepperConfig) -> Result<Trajectory> {
    let p = problem.params;
    let ops = problem.ops;
    p.validate()?;
    cfg.validate()?;
    initial.check_dims(ops.n_bulk(), ops.n_surface())?;
    if !initial.is_admissible() {
        return Err(Error::InvalidParams("initial data must be nonnegative".into()));
    }

    let (start, mismatch) = if p.kind == SystemKind::Limit {
        let (s, m) = limit_initial_state(initial, problem.geom, ops, p);
        if m > 0.0 {
            warn!("initial data incompatible with the limit boundary law: mismatch {m:e}");
        }
        (s, Some(m))
    } else {
        (initial.clone(), None)
    };
    run_from(start, mismatch, problem, cfg)
}

/// Continues a run from a solver state (as stored in snapshots or checkpoints).
pub fn resume(state: &StatePair, problem: &Problem, cfg: &TimeStepperConfig) -> Result<Trajectory> {
    problem.params.validate()?;
    cfg.validate()?;
    state.check_dims(problem.ops.n_bulk(), problem.ops.n_surface())?;
    run_from(state.clone(), None, problem, cfg)
}

fn run_from(start: StatePair, mismatch: Option<f64>, problem: &Problem, cfg: &TimeStepperConfig) -> Result<Trajectory> {
    let t0 = start.t;
    let span = cfg.t_end - t0;
    let n_steps = if span <= 0.0 {
        0
    } else {
        ((span / cfg.dt) - 1e-9).ceil().max(1.0) as usize
    };

    let record = |s: &StatePair| DiagnosticsRecord::compute(&problem.physical(s), problem.geom, problem.ops, problem.params, problem.entropy_shift);
    let mut traj = Trajectory {
        diagnostics: vec![record(&start)],
        snapshots: vec![start],
        newton_iterations: Vec::with_capacity(n_steps),
        compatibility_mismatch: mismatch,
    };
    let mut lu = SparseLu::new();
    let mut current = traj.snapshots[0].clone();
    for k in 1..=n_steps {
        let t_target = if k == n_steps { cfg.t_end } else { t0 + k as f64 * cfg.dt };
        let dt = t_target - current.t;
        let forcing = problem.forcing.map(|f| f(t_target));
        let (mut next, iters) = newton_step(&current, dt, problem.ops, problem.params, forcing.as_ref(), cfg, &mut lu)?;
        next.t = t_target;
        traj.newton_iterations.push(iters);
        if k % cfg.snapshot_every == 0 || k == n_steps {
            traj.diagnostics.push(record(&next));
            traj.snapshots.push(next.clone());
        }
        current = next;
    }
    Ok(traj)
}
