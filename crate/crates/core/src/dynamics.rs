//! Reaction kinetics and the implicit (backward Euler) residuals.
//!
//! Unknown layout for the full and regularized systems is `[u; v]`. For the
//! limit system only the bulk field `w` is unknown; its boundary value
//! `z = trace(w)` is eliminated and stored in the state's surface slot.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::discretization::DiscreteOperators;
use crate::error::{check_len, Error, Result};
use crate::geometry::Geometry;
use crate::sparse::CsrMatrix;

/// Components below `-ADMISSIBLE_NEGATIVE` are treated as a loss of positivity.
pub const ADMISSIBLE_NEGATIVE: f64 = 1e-12;

pub const DEFAULT_POSITIVITY_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Full,
    Regularized,
    Limit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: u32,
    pub beta: u32,
    pub d_u: f64,
    pub d_v: f64,
    /// Inverse reaction rate, ε = 1/k.
    pub epsilon: f64,
    /// Regularization strength; 0 means unregularized.
    #[serde(default)]
    pub delta: f64,
    pub kind: SystemKind,
    #[serde(default = "default_floor")]
    pub positivity_floor: f64,
    /// Test hook: overrides the reaction scale 1/ε (0 decouples bulk and surface).
    #[serde(skip)]
    pub reaction_scale: Option<f64>,
}

fn default_floor() -> f64 {
    DEFAULT_POSITIVITY_FLOOR
}

impl ModelParams {
    pub fn new(alpha: u32, beta: u32, d_u: f64, d_v: f64, epsilon: f64) -> Self {
        Self {
            alpha,
            beta,
            d_u,
            d_v,
            epsilon,
            delta: 0.0,
            kind: SystemKind::Full,
            positivity_floor: DEFAULT_POSITIVITY_FLOOR,
            reaction_scale: None,
        }
    }

    pub fn with_kind(mut self, kind: SystemKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.alpha < 1 {
            problems.push(format!("alpha must be >= 1, got {}", self.alpha));
        }
        if self.beta < 1 {
            problems.push(format!("beta must be >= 1, got {}", self.beta));
        }
        if !(self.d_u > 0.0 && self.d_u.is_finite()) {
            problems.push(format!("d_u must be positive, got {}", self.d_u));
        }
        if !(self.d_v >= 0.0 && self.d_v.is_finite()) {
            problems.push(format!("d_v must be nonnegative, got {}", self.d_v));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            problems.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            problems.push(format!("delta must be nonnegative, got {}", self.delta));
        }
        if self.positivity_floor.is_nan() || self.positivity_floor < 0.0 {
            problems.push(format!(
                "positivity_floor must be nonnegative, got {}",
                self.positivity_floor
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(problems.join("; ")))
        }
    }

    /// Reaction scale k = 1/ε unless overridden.
    pub fn rate(&self) -> f64 {
        self.reaction_scale.unwrap_or(1.0 / self.epsilon)
    }

    pub fn limit_exponent(&self) -> LimitExponent {
        LimitExponent(Ratio::new(self.alpha, self.beta))
    }

    fn regularization(&self) -> f64 {
        if self.kind == SystemKind::Regularized {
            self.delta
        } else {
            0.0
        }
    }
}

/// The exponent γ = α/β of the limit boundary law, kept as a reduced fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LimitExponent(Ratio<u32>);

impl LimitExponent {
    pub fn ratio(&self) -> Ratio<u32> {
        self.0
    }

    pub fn is_integer(&self) -> bool {
        *self.0.denom() == 1
    }

    pub fn as_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn pow(&self, z: f64) -> f64 {
        if self.is_integer() {
            z.powi(*self.0.numer() as i32)
        } else {
            z.powf(self.as_f64())
        }
    }

    pub fn dpow(&self, z: f64) -> f64 {
        let g = self.as_f64();
        if self.is_integer() {
            g * z.powi(*self.0.numer() as i32 - 1)
        } else {
            g * z.powf(g - 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl StatePair {
    pub fn new(u: Vec<f64>, v: Vec<f64>, t: f64) -> Self {
        Self { u, v, t }
    }

    pub fn constant(geom: &Geometry, u: f64, v: f64) -> Self {
        Self::new(vec![u; geom.n_bulk()], vec![v; geom.n_surface()], 0.0)
    }

    pub fn check_dims(&self, n_bulk: usize, n_surface: usize) -> Result<()> {
        check_len("state bulk field", n_bulk, self.u.len())?;
        check_len("state surface field", n_surface, self.v.len())
    }

    pub fn is_admissible(&self) -> bool {
        self.u.iter().chain(&self.v).all(|&x| x >= -ADMISSIBLE_NEGATIVE)
    }
}

/// Time-dependent source terms evaluated at the new time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub bulk: Vec<f64>,
    pub surface: Vec<f64>,
}

#[inline]
fn mass_action(u: f64, v: f64, alpha: u32, beta: u32) -> f64 {
    u.powi(alpha as i32) - v.powi(beta as i32)
}

#[inline]
fn regularize(s: f64, delta: f64) -> f64 {
    if delta > 0.0 {
        s / (1.0 + delta * s.abs())
    } else {
        s
    }
}

/// Pointwise reaction density for the system kind (F or F_δ).
#[inline]
pub(crate) fn local_reaction(u: f64, v: f64, p: &ModelParams) -> f64 {
    regularize(mass_action(u, v, p.alpha, p.beta), p.regularization())
}

#[inline]
pub(crate) fn local_jacobian(u: f64, v: f64, p: &ModelParams) -> (f64, f64) {
    let a = p.alpha as i32;
    let b = p.beta as i32;
    let du = a as f64 * u.powi(a - 1);
    let dv = -(b as f64) * v.powi(b - 1);
    let delta = p.regularization();
    if delta > 0.0 {
        let s = mass_action(u, v, p.alpha, p.beta);
        let f = 1.0 / (1.0 + delta * s.abs()).powi(2);
        (du * f, dv * f)
    } else {
        (du, dv)
    }
}

fn check_nonnegative(quantity: &'static str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|&x| x < -ADMISSIBLE_NEGATIVE) {
        Some(index) => Err(Error::Domain {
            quantity,
            index,
            value: xs[index],
            floor: -ADMISSIBLE_NEGATIVE,
        }),
        None => Ok(()),
    }
}

fn check_pair(u_trace: &[f64], v: &[f64]) -> Result<()> {
    check_len("reaction inputs", u_trace.len(), v.len())?;
    check_nonnegative("bulk trace", u_trace)?;
    check_nonnegative("surface concentration", v)
}

/// u^α − v^β, componentwise.
pub fn reaction(u_trace: &[f64], v: &[f64], p: &ModelParams) -> Result<Vec<f64>> {
    check_pair(u_trace, v)?;
    Ok(u_trace
        .iter()
        .zip(v)
        .map(|(&u, &v)| mass_action(u, v, p.alpha, p.beta))
        .collect())
}

/// F_δ(u, v) = (u^α − v^β) / (1 + δ|u^α − v^β|) with δ = `p.delta`.
pub fn reaction_regularized(u_trace: &[f64], v: &[f64], p: &ModelParams) -> Result<Vec<f64>> {
    check_pair(u_trace, v)?;
    Ok(u_trace
        .iter()
        .zip(v)
        .map(|(&u, &v)| regularize(mass_action(u, v, p.alpha, p.beta), p.delta))
        .collect())
}

/// (∂F/∂u, ∂F/∂v) for the reaction used by `p.kind`.
pub fn reaction_jacobian(u_trace: &[f64], v: &[f64], p: &ModelParams) -> Result<(Vec<f64>, Vec<f64>)> {
    check_pair(u_trace, v)?;
    Ok(u_trace.iter().zip(v).map(|(&u, &v)| local_jacobian(u, v, p)).unzip())
}

pub(crate) fn full_residual(
    u: &[f64],
    v: &[f64],
    old: &StatePair,
    dt: f64,
    ops: &DiscreteOperators,
    p: &ModelParams,
    forcing: Option<&Forcing>,
) -> (Vec<f64>, Vec<f64>) {
    let k = p.rate();
    let tr = ops.trace.mul_vec(u);
    let f: Vec<f64> = tr.iter().zip(v).map(|(&a, &b)| local_reaction(a, b, p)).collect();
    let flux = ops.flux_in.mul_vec(&f);
    let ku = ops.bulk_stiffness.mul_vec(u);
    let kv = ops.surface_stiffness.mul_vec(v);
    let alpha = p.alpha as f64;
    let beta = p.beta as f64;

    let mut rb: Vec<f64> = (0..u.len())
        .map(|i| (u[i] - old.u[i]) / dt + ku[i] + alpha * k * flux[i])
        .collect();
    let mut rs: Vec<f64> = (0..v.len())
        .map(|j| (v[j] - old.v[j]) / dt + kv[j] - beta * k * f[j])
        .collect();
    if let Some(src) = forcing {
        rb.iter_mut().zip(&src.bulk).for_each(|(r, s)| *r -= s);
        rs.iter_mut().zip(&src.surface).for_each(|(r, s)| *r -= s);
    }
    (rb, rs)
}

pub(crate) fn full_jacobian(u: &[f64], v: &[f64], dt: f64, ops: &DiscreteOperators, p: &ModelParams) -> CsrMatrix {
    let nb = u.len();
    let ns = v.len();
    let k = p.rate();
    let alpha = p.alpha as f64;
    let beta = p.beta as f64;
    let tr = ops.trace.mul_vec(u);
    let (fu, fv): (Vec<f64>, Vec<f64>) = tr.iter().zip(v).map(|(&a, &b)| local_jacobian(a, b, p)).unzip();

    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(ops.bulk_stiffness.nnz() + 8 * ns + nb);
    for i in 0..nb {
        t.push((i, i, 1.0 / dt));
    }
    t.extend(ops.bulk_stiffness.triplets());
    // bulk rows: α k Φ (F_u T u + F_v v)
    let phi_fu_t = ops.flux_in.scale_columns(&fu).matmul(&ops.trace);
    t.extend(phi_fu_t.triplets().map(|(i, j, x)| (i, j, alpha * k * x)));
    let phi_fv = ops.flux_in.scale_columns(&fv);
    t.extend(phi_fv.triplets().map(|(i, j, x)| (i, nb + j, alpha * k * x)));
    // surface rows: −β k (F_u T u + F_v v)
    let fu_t = ops.trace.scale_rows(&fu);
    t.extend(fu_t.triplets().map(|(i, j, x)| (nb + i, j, -beta * k * x)));
    for (j, &dv) in fv.iter().enumerate() {
        t.push((nb + j, nb + j, 1.0 / dt - beta * k * dv));
    }
    t.extend(ops.surface_stiffness.triplets().map(|(i, j, x)| (nb + i, nb + j, x)));
    CsrMatrix::from_triplets(nb + ns, nb + ns, &t)
}

/// Boundary values z^γ, with z clipped to the positivity floor when γ is
/// fractional. Returns whether any clipping happened.
fn limit_power(z: &[f64], p: &ModelParams) -> (Vec<f64>, bool) {
    let g = p.limit_exponent();
    if g.is_integer() {
        return (z.iter().map(|&x| g.pow(x)).collect(), false);
    }
    let mut clipped = false;
    let out = z
        .iter()
        .map(|&x| {
            if x < p.positivity_floor {
                clipped = true;
                g.pow(p.positivity_floor)
            } else {
                g.pow(x)
            }
        })
        .collect();
    (out, clipped)
}

/// Bulk residual of the limit system with z = trace(w) eliminated.
pub(crate) fn limit_residual(
    w: &[f64],
    old: &StatePair,
    dt: f64,
    ops: &DiscreteOperators,
    p: &ModelParams,
) -> (Vec<f64>, bool) {
    let ratio = p.alpha as f64 / p.beta as f64;
    let z = ops.trace.mul_vec(w);
    let (zg, c1) = limit_power(&z, p);
    let (zg_old, c2) = limit_power(&old.v, p);
    let kzg = ops.surface_stiffness.mul_vec(&zg);
    let lambda: Vec<f64> = (0..z.len())
        .map(|j| ratio * ((zg[j] - zg_old[j]) / dt + kzg[j]))
        .collect();
    let flux = ops.flux_in.mul_vec(&lambda);
    let kw = ops.bulk_stiffness.mul_vec(w);
    let r = (0..w.len())
        .map(|i| (w[i] - old.u[i]) / dt + kw[i] + flux[i])
        .collect();
    (r, c1 || c2)
}

pub(crate) fn limit_jacobian(w: &[f64], dt: f64, ops: &DiscreteOperators, p: &ModelParams) -> CsrMatrix {
    let nb = w.len();
    let ratio = p.alpha as f64 / p.beta as f64;
    let g = p.limit_exponent();
    let z = ops.trace.mul_vec(w);
    let dz: Vec<f64> = z
        .iter()
        .map(|&x| {
            if !g.is_integer() && x < p.positivity_floor {
                0.0
            } else {
                g.dpow(x)
            }
        })
        .collect();
    let ns = z.len();
    // M = (α/β)(I/dt + K_v) diag(dz)
    let mut m: Vec<(usize, usize, f64)> = (0..ns).map(|j| (j, j, ratio * dz[j] / dt)).collect();
    m.extend(
        ops.surface_stiffness
            .scale_columns(&dz)
            .triplets()
            .map(|(i, j, x)| (i, j, ratio * x)),
    );
    let m = CsrMatrix::from_triplets(ns, ns, &m);
    let coupling = ops.flux_in.matmul(&m).matmul(&ops.trace);

    let mut t: Vec<(usize, usize, f64)> = (0..nb).map(|i| (i, i, 1.0 / dt)).collect();
    t.extend(ops.bulk_stiffness.triplets());
    t.extend(coupling.triplets());
    CsrMatrix::from_triplets(nb, nb, &t)
}

/// Backward Euler residual of the full (or regularized) system, bulk ⧺ surface.
pub fn residual_full(
    state_new: &StatePair,
    state_old: &StatePair,
    dt: f64,
    ops: &DiscreteOperators,
    p: &ModelParams,
) -> Result<Vec<f64>> {
    state_new.check_dims(ops.n_bulk(), ops.n_surface())?;
    state_old.check_dims(ops.n_bulk(), ops.n_surface())?;
    check_pair(&ops.trace.mul_vec(&state_new.u), &state_new.v)?;
    let (mut rb, rs) = full_residual(&state_new.u, &state_new.v, state_old, dt, ops, p, None);
    rb.extend(rs);
    Ok(rb)
}

/// Backward Euler residual of the limit system: the bulk block, followed by
/// the constraint block `z − trace(w)` for the stored boundary value.
pub fn residual_limit(
    state_new: &StatePair,
    state_old: &StatePair,
    dt: f64,
    ops: &DiscreteOperators,
    p: &ModelParams,
) -> Result<Vec<f64>> {
    state_new.check_dims(ops.n_bulk(), ops.n_surface())?;
    state_old.check_dims(ops.n_bulk(), ops.n_surface())?;
    let z = ops.trace.mul_vec(&state_new.u);
    if !p.limit_exponent().is_integer() {
        for (quantity, zs) in [("limit boundary value", &z), ("previous limit boundary value", &state_old.v)] {
            if let Some(index) = zs.iter().position(|&x| x < p.positivity_floor) {
                return Err(Error::Domain {
                    quantity,
                    index,
                    value: zs[index],
                    floor: p.positivity_floor,
                });
            }
        }
    } else {
        check_nonnegative("limit boundary value", &z)?;
    }
    let (mut r, _) = limit_residual(&state_new.u, state_old, dt, ops, p);
    r.extend(state_new.v.iter().zip(&z).map(|(a, b)| a - b));
    Ok(r)
}

/// Analytic (u*, v*) pair used to manufacture source terms.
pub trait ManufacturedSolution: Send + Sync {
    fn u(&self, x: [f64; 2], t: f64) -> f64;
    fn u_t(&self, x: [f64; 2], t: f64) -> f64;
    fn laplacian_u(&self, x: [f64; 2], t: f64) -> f64;
    fn grad_u(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn v(&self, x: [f64; 2], t: f64) -> f64;
    fn v_t(&self, x: [f64; 2], t: f64) -> f64;
    fn laplace_beltrami_v(&self, x: [f64; 2], t: f64) -> f64;
}

/// Spatially and temporally constant pair.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSolution {
    pub u: f64,
    pub v: f64,
}

impl ManufacturedSolution for ConstantSolution {
    fn u(&self, _: [f64; 2], _: f64) -> f64 {
        self.u
    }
    fn u_t(&self, _: [f64; 2], _: f64) -> f64 {
        0.0
    }
    fn laplacian_u(&self, _: [f64; 2], _: f64) -> f64 {
        0.0
    }
    fn grad_u(&self, _: [f64; 2], _: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn v(&self, _: [f64; 2], _: f64) -> f64 {
        self.v
    }
    fn v_t(&self, _: [f64; 2], _: f64) -> f64 {
        0.0
    }
    fn laplace_beltrami_v(&self, _: [f64; 2], _: f64) -> f64 {
        0.0
    }
}

type Field = fn([f64; 2], f64) -> f64;

/// A manufactured pair given by plain function pointers.
#[derive(Clone, Copy)]
pub struct AnalyticSolution {
    pub u: Field,
    pub u_t: Field,
    pub laplacian_u: Field,
    pub grad_u: fn([f64; 2], f64) -> [f64; 2],
    pub v: Field,
    pub v_t: Field,
    pub laplace_beltrami_v: Field,
}

impl ManufacturedSolution for AnalyticSolution {
    fn u(&self, x: [f64; 2], t: f64) -> f64 {
        (self.u)(x, t)
    }
    fn u_t(&self, x: [f64; 2], t: f64) -> f64 {
        (self.u_t)(x, t)
    }
    fn laplacian_u(&self, x: [f64; 2], t: f64) -> f64 {
        (self.laplacian_u)(x, t)
    }
    fn grad_u(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        (self.grad_u)(x, t)
    }
    fn v(&self, x: [f64; 2], t: f64) -> f64 {
        (self.v)(x, t)
    }
    fn v_t(&self, x: [f64; 2], t: f64) -> f64 {
        (self.v_t)(x, t)
    }
    fn laplace_beltrami_v(&self, x: [f64; 2], t: f64) -> f64 {
        (self.laplace_beltrami_v)(x, t)
    }
}

/// Source terms that make a manufactured pair an exact solution of
///
///   u_t − d_u Δu = f_Ω,  d_u ∂_n u = −α k F + g,  v_t − d_v Δ_Γ v = β k F + f_Γ.
///
/// The boundary flux source g enters the bulk balance through `flux_in`.
pub struct MmsSource<'a> {
    solution: &'a dyn ManufacturedSolution,
    geom: &'a Geometry,
    ops: &'a DiscreteOperators,
    params: ModelParams,
}

pub fn mms_source<'a>(
    solution: &'a dyn ManufacturedSolution,
    p: &ModelParams,
    geom: &'a Geometry,
    ops: &'a DiscreteOperators,
) -> MmsSource<'a> {
    MmsSource {
        solution,
        geom,
        ops,
        params: p.clone(),
    }
}

impl MmsSource<'_> {
    pub fn at(&self, t: f64) -> Forcing {
        let p = &self.params;
        let sol = self.solution;
        let k = p.rate();
        let mut bulk: Vec<f64> = self
            .geom
            .bulk_coords
            .iter()
            .map(|&x| sol.u_t(x, t) - p.d_u * sol.laplacian_u(x, t))
            .collect();
        let mut g = Vec::with_capacity(self.geom.n_surface());
        let mut surface = Vec::with_capacity(self.geom.n_surface());
        for (&x, n) in self.geom.surface_coords.iter().zip(&self.geom.surface_normals) {
            let f = local_reaction(sol.u(x, t), sol.v(x, t), p);
            let grad = sol.grad_u(x, t);
            let dn = grad[0] * n[0] + grad[1] * n[1];
            g.push(p.d_u * dn + p.alpha as f64 * k * f);
            surface.push(sol.v_t(x, t) - p.d_v * sol.laplace_beltrami_v(x, t) - p.beta as f64 * k * f);
        }
        let gin = self.ops.flux_in.mul_vec(&g);
        bulk.iter_mut().zip(gin).for_each(|(b, x)| *b += x);
        Forcing { bulk, surface }
    }

    /// Exact manufactured state at time t, sampled on the grid.
    pub fn exact(&self, t: f64) -> StatePair {
        StatePair::new(
            self.geom.bulk_from_fn(|x| self.solution.u(x, t)),
            self.geom.surface_from_fn(|x| self.solution.v(x, t)),
            t,
        )
    }
}
