//! Run configuration: JSON parsing, field-level validation and initial data.

use std::str::FromStr;

use serde_json::{Map, Value};

use crate::discretization::{DiscreteOperators, TraceOrder};
use crate::dynamics::{ModelParams, StatePair, SystemKind, DEFAULT_POSITIVITY_FLOOR};
use crate::error::{Error, Result};
use crate::geometry::{Geometry, GeometryKind, GeometrySpec};
use crate::integrator::{Damping, TimeStepperConfig, DEFAULT_ENTROPY_SHIFT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// u ≡ 1, v ≡ 1.
    Equilibrium,
    /// Smooth positive u₀ with v₀ = (trace u₀)^{α/β}.
    CompatiblePositive,
    /// u₀ ≡ 1, v₀ ≡ 0.
    IncompatibleJump,
    /// Nonnegative step data for α = β = 1.
    LinearL2,
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "equilibrium" => Ok(Preset::Equilibrium),
            "compatible-positive" => Ok(Preset::CompatiblePositive),
            "incompatible-jump" => Ok(Preset::IncompatibleJump),
            "linear-L2" => Ok(Preset::LinearL2),
            other => Err(format!(
                "unknown preset \"{other}\" (expected equilibrium, compatible-positive, incompatible-jump or linear-L2)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Preset(Preset),
    /// Expressions over x, y, r, theta (and the constants pi, e).
    Expressions { u: String, v: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Distance to the limit solution.
    Rate,
    /// Time-integrated squared boundary defect.
    Defect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputNames {
    pub trajectory: String,
    pub final_state: String,
    pub report: String,
    pub summary: String,
}

impl Default for OutputNames {
    fn default() -> Self {
        Self {
            trajectory: "trajectory.csv".into(),
            final_state: "final_state.json".into(),
            report: "report.csv".into(),
            summary: "summary.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub eps_list: Vec<f64>,
    pub delta_list: Vec<f64>,
    /// Final time for sweeps; falls back to `time.t_end`.
    pub final_time: Option<f64>,
    pub sweep: SweepMode,
    pub modes: usize,
    pub mms_levels: Vec<usize>,
    pub mms_dts: Vec<f64>,
    pub outputs: OutputNames,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub params: ModelParams,
    pub trace_order: TraceOrder,
    pub entropy_shift: f64,
    pub time: TimeStepperConfig,
    pub initial: InitialData,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    /// Stepping config for sweeps: `experiment.T` replaces `time.t_end` when given.
    pub fn sweep_time(&self) -> TimeStepperConfig {
        let mut t = self.time.clone();
        if let Some(tf) = self.experiment.final_time {
            t.t_end = tf;
        }
        t
    }
}

/// Typed access to one JSON object, collecting every violation.
struct Block<'a> {
    path: &'static str,
    map: Option<&'a Map<String, Value>>,
    errors: &'a mut Vec<String>,
}

impl<'a> Block<'a> {
    fn new(root: &'a Map<String, Value>, path: &'static str, errors: &'a mut Vec<String>, allowed: &[&str]) -> Self {
        let map = match root.get(path) {
            None => None,
            Some(Value::Object(m)) => Some(m),
            Some(_) => {
                errors.push(format!("{path}: expected an object"));
                None
            }
        };
        if let Some(m) = map {
            for k in m.keys() {
                if !allowed.contains(&k.as_str()) {
                    errors.push(format!("{path}.{k}: unknown field"));
                }
            }
        }
        Self { path, map, errors }
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.map.and_then(|m| m.get(key))
    }

    fn fail(&mut self, key: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{}.{key}: {msg}", self.path));
    }

    fn f64_or(&mut self, key: &str, default: Option<f64>) -> Option<f64> {
        match self.raw(key) {
            None => {
                if default.is_none() {
                    self.fail(key, "required field missing");
                }
                default
            }
            Some(v) => match v.as_f64() {
                Some(x) => Some(x),
                None => {
                    self.fail(key, format!("expected a number, got {v}"));
                    default
                }
            },
        }
    }

    fn uint_or(&mut self, key: &str, default: Option<u64>) -> Option<u64> {
        match self.raw(key) {
            None => {
                if default.is_none() {
                    self.fail(key, "required field missing");
                }
                default
            }
            Some(v) => match v.as_u64() {
                Some(x) => Some(x),
                None => {
                    self.fail(key, format!("expected a nonnegative integer, got {v}"));
                    default
                }
            },
        }
    }

    fn str_opt(&mut self, key: &str) -> Option<&'a str> {
        match self.raw(key) {
            None => None,
            Some(Value::String(s)) => Some(s.as_str()),
            Some(v) => {
                self.fail(key, format!("expected a string, got {v}"));
                None
            }
        }
    }

    fn f64_list_or(&mut self, key: &str, default: Vec<f64>) -> Vec<f64> {
        match self.raw(key) {
            None => default,
            Some(Value::Array(xs)) => {
                let vals: Option<Vec<f64>> = xs.iter().map(Value::as_f64).collect();
                vals.unwrap_or_else(|| {
                    self.fail(key, "expected a list of numbers");
                    default
                })
            }
            Some(v) => {
                self.fail(key, format!("expected a list of numbers, got {v}"));
                default
            }
        }
    }

    fn uint_list_or(&mut self, key: &str, default: Vec<usize>) -> Vec<usize> {
        match self.raw(key) {
            None => default,
            Some(Value::Array(xs)) => {
                let vals: Option<Vec<usize>> = xs.iter().map(|x| x.as_u64().map(|n| n as usize)).collect();
                vals.unwrap_or_else(|| {
                    self.fail(key, "expected a list of nonnegative integers");
                    default
                })
            }
            Some(v) => {
                self.fail(key, format!("expected a list of integers, got {v}"));
                default
            }
        }
    }
}

fn check_expression(src: &str) -> std::result::Result<(), String> {
    let expr = meval::Expr::from_str(src).map_err(|e| e.to_string())?;
    expr.bind4("x", "y", "r", "theta").map(|_| ()).map_err(|e| e.to_string())
}

/// Parses and validates a JSON run configuration, reporting every violation.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let root: Value = serde_json::from_str(text).map_err(|e| {
        Error::Config(vec![format!("line {}, column {}: {e}", e.line(), e.column())])
    })?;
    let Value::Object(root) = root else {
        return Err(Error::Config(vec!["top level: expected an object".into()]));
    };
    let mut errors = Vec::new();
    for k in root.keys() {
        if !["geometry", "model", "time", "initial", "experiment"].contains(&k.as_str()) {
            errors.push(format!("{k}: unknown block"));
        }
    }

    // geometry
    let mut g = Block::new(&root, "geometry", &mut errors, &["kind", "n_bulk", "n_r", "n_theta"]);
    if g.map.is_none() && !root.contains_key("geometry") {
        g.errors.push("geometry: required block missing".into());
    }
    let geometry = match g.map.map(|_| g.str_opt("kind")) {
        Some(Some("interval")) => g.uint_or("n_bulk", None).map(|n| GeometrySpec::Interval { n_bulk: n as usize }),
        Some(Some("disk")) => {
            let n_r = g.uint_or("n_r", None);
            let n_theta = g.uint_or("n_theta", None);
            n_r.zip(n_theta).map(|(a, b)| GeometrySpec::Disk {
                n_r: a as usize,
                n_theta: b as usize,
            })
        }
        Some(Some(other)) => {
            g.fail("kind", format!("expected \"interval\" or \"disk\", got \"{other}\""));
            None
        }
        Some(None) => {
            g.fail("kind", "required field missing");
            None
        }
        None => None,
    };
    if let Some(spec) = geometry {
        if let Err(e) = Geometry::from_spec(spec) {
            errors.push(format!("geometry: {e}"));
        }
    }

    // model
    let mut m = Block::new(
        &root,
        "model",
        &mut errors,
        &["alpha", "beta", "d_u", "d_v", "epsilon", "delta", "kind", "trace_order", "entropy_shift", "positivity_floor"],
    );
    let alpha = m.uint_or("alpha", Some(1)).unwrap_or(1);
    let beta = m.uint_or("beta", Some(1)).unwrap_or(1);
    let d_u = m.f64_or("d_u", Some(1.0)).unwrap_or(1.0);
    let d_v = m.f64_or("d_v", Some(0.0)).unwrap_or(0.0);
    let epsilon = m.f64_or("epsilon", Some(0.1)).unwrap_or(0.1);
    let delta = m.f64_or("delta", Some(0.0)).unwrap_or(0.0);
    let entropy_shift = m.f64_or("entropy_shift", Some(DEFAULT_ENTROPY_SHIFT)).unwrap_or(DEFAULT_ENTROPY_SHIFT);
    let positivity_floor =
        m.f64_or("positivity_floor", Some(DEFAULT_POSITIVITY_FLOOR)).unwrap_or(DEFAULT_POSITIVITY_FLOOR);
    let kind = match m.str_opt("kind") {
        None | Some("full") => SystemKind::Full,
        Some("regularized") => SystemKind::Regularized,
        Some("limit") => SystemKind::Limit,
        Some(other) => {
            m.fail("kind", format!("expected full, regularized or limit, got \"{other}\""));
            SystemKind::Full
        }
    };
    let trace_order = match m.uint_or("trace_order", Some(2)) {
        Some(1) => TraceOrder::First,
        Some(2) | None => TraceOrder::Second,
        Some(other) => {
            m.fail("trace_order", format!("must be 1 or 2 (got {other})"));
            TraceOrder::Second
        }
    };
    if alpha < 1 {
        m.fail("alpha", format!("must be an integer >= 1 (got {alpha})"));
    }
    if beta < 1 {
        m.fail("beta", format!("must be an integer >= 1 (got {beta})"));
    }
    if d_u <= 0.0 {
        m.fail("d_u", format!("must be positive (got {d_u})"));
    }
    if d_v < 0.0 {
        m.fail("d_v", format!("must be nonnegative (got {d_v})"));
    }
    if matches!(geometry, Some(GeometrySpec::Interval { .. })) && d_v > 0.0 {
        m.fail(
            "d_v",
            format!("must be 0 on the interval: its two-point surface carries no surface diffusion (got {d_v})"),
        );
    }
    if epsilon <= 0.0 {
        m.fail("epsilon", format!("must be positive (got {epsilon})"));
    }
    if delta < 0.0 {
        m.fail("delta", format!("must be nonnegative (got {delta})"));
    }
    if entropy_shift <= 0.0 {
        m.fail("entropy_shift", format!("must be positive (got {entropy_shift})"));
    }
    if positivity_floor < 0.0 {
        m.fail("positivity_floor", format!("must be nonnegative (got {positivity_floor})"));
    }
    let params = ModelParams {
        alpha: alpha.min(u32::MAX as u64) as u32,
        beta: beta.min(u32::MAX as u64) as u32,
        d_u,
        d_v,
        epsilon,
        delta,
        kind,
        positivity_floor,
        reaction_scale: None,
    };

    // time
    let mut t = Block::new(
        &root,
        "time",
        &mut errors,
        &["dt", "t_end", "snapshot_every", "newton_tol", "newton_max_iter", "damping"],
    );
    let dt = t.f64_or("dt", Some(1e-3)).unwrap_or(1e-3);
    let t_end = t.f64_or("t_end", Some(0.25)).unwrap_or(0.25);
    let damping = match t.str_opt("damping") {
        None | Some("backtracking") => Damping::Backtracking,
        Some("none") => Damping::None,
        Some(other) => {
            t.fail("damping", format!("expected none or backtracking, got \"{other}\""));
            Damping::Backtracking
        }
    };
    let time = TimeStepperConfig {
        dt,
        t_end,
        newton_tol: t.f64_or("newton_tol", Some(1e-10)).unwrap_or(1e-10),
        newton_max_iter: t.uint_or("newton_max_iter", Some(50)).unwrap_or(50) as usize,
        damping,
        snapshot_every: t.uint_or("snapshot_every", Some(1)).unwrap_or(1) as usize,
    };
    for v in time.violations() {
        let field = v.split_whitespace().next().unwrap_or("").to_string();
        t.fail(&field, v.split_once(' ').map_or("", |x| x.1));
    }

    // initial
    let mut i = Block::new(&root, "initial", &mut errors, &["preset", "u", "v"]);
    let initial = match (i.str_opt("preset"), i.str_opt("u"), i.str_opt("v")) {
        (Some(name), None, None) => match name.parse::<Preset>() {
            Ok(p) => InitialData::Preset(p),
            Err(e) => {
                i.fail("preset", e);
                InitialData::Preset(Preset::Equilibrium)
            }
        },
        (None, Some(u), Some(v)) => {
            for (key, src) in [("u", u), ("v", v)] {
                if let Err(e) = check_expression(src) {
                    i.fail(key, format!("invalid expression \"{src}\": {e}"));
                }
            }
            InitialData::Expressions {
                u: u.to_string(),
                v: v.to_string(),
            }
        }
        (None, None, None) => InitialData::Preset(Preset::CompatiblePositive),
        _ => {
            i.errors.push("initial: give either \"preset\" or both \"u\" and \"v\" expressions".into());
            InitialData::Preset(Preset::Equilibrium)
        }
    };
    if initial == InitialData::Preset(Preset::LinearL2) && (params.alpha != 1 || params.beta != 1) {
        i.fail("preset", "linear-L2 requires alpha = beta = 1");
    }

    // experiment
    let mut x = Block::new(
        &root,
        "experiment",
        &mut errors,
        &["eps_list", "delta_list", "T", "sweep", "modes", "mms_levels", "mms_dts", "outputs"],
    );
    let eps_list = x.f64_list_or("eps_list", vec![1e-1, 1e-2, 1e-3, 1e-4]);
    let delta_list = x.f64_list_or("delta_list", vec![1e-1, 1e-2, 1e-3, 1e-4]);
    let final_time = x.f64_or("T", Some(f64::NAN)).filter(|v| !v.is_nan());
    let sweep = match x.str_opt("sweep") {
        None | Some("rate") => SweepMode::Rate,
        Some("defect") => SweepMode::Defect,
        Some(other) => {
            x.fail("sweep", format!("expected rate or defect, got \"{other}\""));
            SweepMode::Rate
        }
    };
    let modes = x.uint_or("modes", Some(32)).unwrap_or(32) as usize;
    let mms_levels = x.uint_list_or("mms_levels", vec![32, 64, 128, 256]);
    let mms_dts = x.f64_list_or("mms_dts", vec![0.04, 0.02, 0.01, 0.005]);
    if eps_list.iter().any(|&e| e <= 0.0) {
        x.fail("eps_list", "values must be positive");
    }
    if delta_list.iter().any(|&d| d < 0.0) {
        x.fail("delta_list", "values must be nonnegative");
    }
    if let Some(tf) = final_time {
        if tf <= 0.0 {
            x.fail("T", format!("must be positive (got {tf})"));
        } else if dt > tf {
            x.fail("T", format!("must be at least time.dt ({dt}) (got {tf})"));
        }
    }
    if modes == 0 {
        x.fail("modes", "must be at least 1");
    }
    if mms_levels.len() < 3 || mms_levels.iter().any(|&n| n < 3) {
        x.fail("mms_levels", "need at least three levels, each >= 3");
    }
    if mms_dts.len() < 3 || mms_dts.iter().any(|&d| d <= 0.0) {
        x.fail("mms_dts", "need at least three positive time steps");
    }
    let mut outputs = OutputNames::default();
    match x.raw("outputs") {
        None => {}
        Some(Value::Object(o)) => {
            for (k, v) in o {
                let slot = match k.as_str() {
                    "trajectory" => &mut outputs.trajectory,
                    "final_state" => &mut outputs.final_state,
                    "report" => &mut outputs.report,
                    "summary" => &mut outputs.summary,
                    _ => {
                        x.errors.push(format!("experiment.outputs.{k}: unknown field"));
                        continue;
                    }
                };
                match v.as_str() {
                    Some(s) if !s.is_empty() && !s.contains(['/', '\\']) => *slot = s.to_string(),
                    _ => x.errors.push(format!("experiment.outputs.{k}: expected a plain file name")),
                }
            }
        }
        Some(_) => x.fail("outputs", "expected an object"),
    }

    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    Ok(RunConfig {
        geometry: geometry.expect("validated"),
        params,
        trace_order,
        entropy_shift,
        time,
        initial,
        experiment: ExperimentConfig {
            eps_list,
            delta_list,
            final_time,
            sweep,
            modes,
            mms_levels,
            mms_dts,
            outputs,
        },
    })
}

type PointFn = Box<dyn Fn([f64; 2]) -> f64>;

fn expression_fn(src: &str) -> Result<PointFn> {
    let expr = meval::Expr::from_str(src).map_err(|e| Error::Config(vec![format!("{src}: {e}")]))?;
    let f = expr
        .bind4("x", "y", "r", "theta")
        .map_err(|e| Error::Config(vec![format!("{src}: {e}")]))?;
    Ok(Box::new(move |p: [f64; 2]| f(p[0], p[1], p[0].hypot(p[1]), p[1].atan2(p[0]))))
}

/// Bulk initial profile as a function of position.
pub fn bulk_profile(initial: &InitialData, kind: GeometryKind) -> Result<PointFn> {
    Ok(match initial {
        InitialData::Expressions { u, .. } => expression_fn(u)?,
        InitialData::Preset(Preset::Equilibrium) | InitialData::Preset(Preset::IncompatibleJump) => Box::new(|_| 1.0),
        InitialData::Preset(Preset::CompatiblePositive) => match kind {
            GeometryKind::Interval => Box::new(|p| 1.0 + 0.5 * (std::f64::consts::PI * p[0]).sin()),
            GeometryKind::Disk => Box::new(|p| 1.0 + 0.5 * p[0]),
        },
        InitialData::Preset(Preset::LinearL2) => match kind {
            GeometryKind::Interval => Box::new(|p| if p[0] < 0.5 { 1.0 } else { 0.0 }),
            GeometryKind::Disk => Box::new(|p| if p[0] < 0.0 { 1.0 } else { 0.0 }),
        },
    })
}

/// Initial state on the grid. Fails when any value is negative.
pub fn initial_state(
    initial: &InitialData,
    geom: &Geometry,
    ops: &DiscreteOperators,
    p: &ModelParams,
) -> Result<StatePair> {
    let u = geom.bulk_from_fn(bulk_profile(initial, geom.kind())?);
    let v = match initial {
        InitialData::Expressions { v, .. } => geom.surface_from_fn(expression_fn(v)?),
        InitialData::Preset(Preset::Equilibrium) => vec![1.0; geom.n_surface()],
        InitialData::Preset(Preset::IncompatibleJump) | InitialData::Preset(Preset::LinearL2) => {
            vec![0.0; geom.n_surface()]
        }
        InitialData::Preset(Preset::CompatiblePositive) => {
            let g = p.limit_exponent();
            ops.trace.mul_vec(&u).iter().map(|&z| g.pow(z)).collect()
        }
    };
    let mut problems = Vec::new();
    for (name, xs) in [("initial.u", &u), ("initial.v", &v)] {
        if let Some(k) = xs.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            problems.push(format!("{name}: value {} at node {k} is not a nonnegative number", xs[k]));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    Ok(StatePair::new(u, v, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::assemble;

    const MINIMAL: &str = r#"{"geometry": {"kind": "interval", "n_bulk": 16}, "model": {"alpha": 1, "beta": 2}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.time.dt, 1e-3);
        assert_eq!(c.time.newton_tol, 1e-10);
        assert_eq!(c.entropy_shift, 1e-8);
        assert_eq!(c.trace_order, TraceOrder::Second);
        assert_eq!(c.params.beta, 2);
        assert_eq!(c.experiment.outputs, OutputNames::default());
    }

    #[test]
    fn alpha_zero_names_constraint() {
        let text = r#"{"geometry": {"kind": "interval", "n_bulk": 16}, "model": {"alpha": 0}}"#;
        let Err(Error::Config(errs)) = parse_config(text) else { panic!() };
        assert!(errs.iter().any(|e| e.starts_with("model.alpha") && e.contains(">= 1")), "{errs:?}");
    }

    #[test]
    fn interval_surface_diffusion_rejected() {
        let text = r#"{"geometry": {"kind": "interval", "n_bulk": 16}, "model": {"d_v": 0.5}}"#;
        let Err(Error::Config(errs)) = parse_config(text) else { panic!() };
        assert!(errs.iter().any(|e| e.starts_with("model.d_v") && e.contains("interval")), "{errs:?}");
    }

    #[test]
    fn all_violations_are_reported() {
        let text = r#"{"geometry": {"kind": "disk", "n_r": 2, "n_theta": 8},
                      "model": {"alpha": 0, "beta": 0, "epsilon": -1, "bogus": 1},
                      "time": {"dt": 0.5, "t_end": 0.1}}"#;
        let Err(Error::Config(errs)) = parse_config(text) else { panic!() };
        for needle in ["geometry:", "model.alpha", "model.beta", "model.epsilon", "model.bogus", "time.dt"] {
            assert!(errs.iter().any(|e| e.starts_with(needle)), "missing {needle}: {errs:?}");
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        let Err(Error::Config(errs)) = parse_config("{\"geometry\": \n {") else { panic!() };
        assert!(errs[0].starts_with("line 2"));
    }

    #[test]
    fn expressions_are_checked() {
        let text = r#"{"geometry": {"kind": "disk", "n_r": 4, "n_theta": 8},
                      "initial": {"u": "1 + r^2 * cos(theta)", "v": "1 + q"}}"#;
        let Err(Error::Config(errs)) = parse_config(text) else { panic!() };
        assert_eq!(errs.len(), 1);
        assert!(errs[0].starts_with("initial.v"));
    }

    #[test]
    fn expression_initial_data() {
        let text = r#"{"geometry": {"kind": "disk", "n_r": 4, "n_theta": 8},
                      "model": {"d_v": 1.0},
                      "initial": {"u": "1 + x*y + r^2", "v": "2 + sin(theta)"}}"#;
        let c = parse_config(text).unwrap();
        let g = Geometry::from_spec(c.geometry).unwrap();
        let ops = assemble(&g, 1.0, 1.0, c.trace_order).unwrap();
        let s = initial_state(&c.initial, &g, &ops, &c.params).unwrap();
        let p = g.bulk_coords[5];
        assert!((s.u[5] - (1.0 + p[0] * p[1] + p[0] * p[0] + p[1] * p[1])).abs() < 1e-14);
        let q = g.surface_coords[2];
        assert!((s.v[2] - (2.0 + q[1].atan2(q[0]).sin())).abs() < 1e-14);
    }

    #[test]
    fn negative_initial_data_rejected() {
        let text = r#"{"geometry": {"kind": "interval", "n_bulk": 8}, "initial": {"u": "x - 0.5", "v": "1"}}"#;
        let c = parse_config(text).unwrap();
        let g = Geometry::from_spec(c.geometry).unwrap();
        let ops = assemble(&g, 1.0, 0.0, c.trace_order).unwrap();
        assert!(matches!(initial_state(&c.initial, &g, &ops, &c.params), Err(Error::Config(_))));
    }

    #[test]
    fn presets() {
        let g = Geometry::build_interval(8).unwrap();
        let ops = assemble(&g, 1.0, 0.0, TraceOrder::Second).unwrap();
        let p = ModelParams::new(2, 1, 1.0, 0.0, 0.1);
        let s = initial_state(&InitialData::Preset(Preset::CompatiblePositive), &g, &ops, &p).unwrap();
        let tr = ops.trace.mul_vec(&s.u);
        assert!((s.v[0] - tr[0] * tr[0]).abs() < 1e-14);
        let s = initial_state(&InitialData::Preset(Preset::IncompatibleJump), &g, &ops, &p).unwrap();
        assert!(s.u.iter().all(|&x| x == 1.0) && s.v.iter().all(|&x| x == 0.0));
        let text = r#"{"geometry": {"kind": "interval", "n_bulk": 16}, "model": {"alpha": 2}, "initial": {"preset": "linear-L2"}}"#;
        assert!(parse_config(text).is_err());
    }
}
