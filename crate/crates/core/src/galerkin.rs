//! Modal Galerkin solver on the interval: Neumann cosine modes in the bulk and
//! the two endpoint values on the surface. An independent check on the
//! finite-volume solver.

use std::f64::consts::{PI, SQRT_2};

use faer::prelude::Solve;
use faer::{Col, Mat};

use crate::diagnostics::DiagnosticsRecord;
use crate::discretization::{assemble, TraceOrder};
use crate::dynamics::{local_jacobian, local_reaction, ModelParams, StatePair};
use crate::error::{check_len, Error, Result};
use crate::geometry::{Geometry, GeometryKind};
use crate::integrator::{Damping, TimeStepperConfig, Trajectory, DEFAULT_ENTROPY_SHIFT};

const PANELS: usize = 64;
const GAUSS_POINTS: usize = 10;

/// Bulk initial data for projection.
pub enum BulkProfile<'a> {
    /// Evaluated pointwise and integrated by composite Gauss-Legendre.
    Function(&'a dyn Fn(f64) -> f64),
    /// Cell averages on a uniform grid of [0, 1], integrated exactly.
    Cells(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinSystem {
    /// Coefficients of φ_0 = 1, φ_j = √2 cos(jπx).
    pub coefficients: Vec<f64>,
    /// Surface values at x = 0 and x = 1.
    pub boundary: [f64; 2],
    pub params: ModelParams,
    pub t: f64,
}

/// φ_j(x).
pub fn basis(j: usize, x: f64) -> f64 {
    if j == 0 {
        1.0
    } else {
        SQRT_2 * (j as f64 * PI * x).cos()
    }
}

/// Neumann eigenvalue (jπ)² of mode j.
pub fn eigenvalue(j: usize) -> f64 {
    (j as f64 * PI).powi(2)
}

fn endpoint_values(j: usize) -> [f64; 2] {
    if j == 0 {
        [1.0, 1.0]
    } else if j.is_multiple_of(2) {
        [SQRT_2, SQRT_2]
    } else {
        [SQRT_2, -SQRT_2]
    }
}

fn series_traces(coefficients: &[f64]) -> [f64; 2] {
    let mut tr = [0.0, 0.0];
    for (j, a) in coefficients.iter().enumerate() {
        let e = endpoint_values(j);
        tr[0] += a * e[0];
        tr[1] += a * e[1];
    }
    tr
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// a_j(0) = ∫₀¹ u₀ φ_j, b(0) = v₀.
pub fn project_initial(u0: BulkProfile, v0: [f64; 2], m: usize, params: &ModelParams) -> Result<GalerkinSystem> {
    if m == 0 {
        return Err(Error::InvalidParams("number of modes must be >= 1".into()));
    }
    let coefficients = match u0 {
        BulkProfile::Function(f) => {
            let (nodes, weights) = gauss_legendre(GAUSS_POINTS);
            let h = 1.0 / PANELS as f64;
            let mut a = vec![0.0; m];
            for panel in 0..PANELS {
                let mid = (panel as f64 + 0.5) * h;
                for (xi, wi) in nodes.iter().zip(&weights) {
                    let x = mid + 0.5 * h * xi;
                    let fx = f(x) * 0.5 * h * wi;
                    for (j, aj) in a.iter_mut().enumerate() {
                        *aj += fx * basis(j, x);
                    }
                }
            }
            a
        }
        BulkProfile::Cells(cells) => {
            let n = cells.len();
            (0..m)
                .map(|j| {
                    (0..n)
                        .map(|i| {
                            let (x0, x1) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
                            let integral = if j == 0 {
                                x1 - x0
                            } else {
                                let k = j as f64 * PI;
                                SQRT_2 * ((k * x1).sin() - (k * x0).sin()) / k
                            };
                            cells[i] * integral
                        })
                        .sum()
                })
                .collect()
        }
    };
    Ok(GalerkinSystem {
        coefficients,
        boundary: v0,
        params: params.clone(),
        t: 0.0,
    })
}

impl GalerkinSystem {
    pub fn modes(&self) -> usize {
        self.coefficients.len()
    }

    /// Bulk values u(0), u(1) by direct series summation.
    pub fn endpoint_traces(&self) -> [f64; 2] {
        series_traces(&self.coefficients)
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.coefficients.iter().enumerate().map(|(j, a)| a * basis(j, x)).sum()
    }

    /// Reconstructed bulk field at the cell centres of an interval geometry.
    pub fn reconstruct(&self, geom: &Geometry) -> Result<Vec<f64>> {
        if geom.kind() != GeometryKind::Interval {
            return Err(Error::InvalidGeometry("Galerkin reconstruction needs an interval".into()));
        }
        Ok(geom.bulk_coords.iter().map(|x| self.evaluate(x[0])).collect())
    }

    /// α ∫u + β Σ v, with ∫u = a_0.
    pub fn mass(&self) -> f64 {
        self.params.alpha as f64 * self.coefficients[0] + self.params.beta as f64 * (self.boundary[0] + self.boundary[1])
    }

    fn reactions(&self, a: &[f64], b: &[f64; 2]) -> [f64; 2] {
        let tr = series_traces(a);
        [local_reaction(tr[0], b[0], &self.params), local_reaction(tr[1], b[1], &self.params)]
    }

    fn derivative(&self, a: &[f64], b: &[f64; 2]) -> (Vec<f64>, [f64; 2]) {
        let p = &self.params;
        let k = p.rate();
        let f = self.reactions(a, b);
        let da = (0..a.len())
            .map(|j| {
                let e = endpoint_values(j);
                -p.d_u * eigenvalue(j) * a[j] - p.alpha as f64 * k * (f[0] * e[0] + f[1] * e[1])
            })
            .collect();
        let db = [p.beta as f64 * k * f[0], p.beta as f64 * k * f[1]];
        (da, db)
    }

    /// Jacobian of the backward Euler residual x/dt − rhs(x) in the unknowns (a, b).
    fn residual_jacobian(&self, a: &[f64], b: &[f64; 2], dt: f64) -> Mat<f64> {
        let p = &self.params;
        let k = p.rate();
        let m = a.len();
        let tr = series_traces(a);
        let jac = [local_jacobian(tr[0], b[0], p), local_jacobian(tr[1], b[1], p)];
        let alpha = p.alpha as f64;
        let beta = p.beta as f64;
        Mat::from_fn(m + 2, m + 2, |r, c| {
            let diag = if r == c { 1.0 / dt } else { 0.0 };
            if r < m {
                let er = endpoint_values(r);
                let lin = if r == c { p.d_u * eigenvalue(r) } else { 0.0 };
                let coupling = if c < m {
                    let ec = endpoint_values(c);
                    alpha * k * (jac[0].0 * ec[0] * er[0] + jac[1].0 * ec[1] * er[1])
                } else {
                    let e = c - m;
                    alpha * k * jac[e].1 * er[e]
                };
                diag + lin + coupling
            } else {
                let e = r - m;
                let coupling = if c < m {
                    -beta * k * jac[e].0 * endpoint_values(c)[e]
                } else if c - m == e {
                    -beta * k * jac[e].1
                } else {
                    0.0
                };
                diag + coupling
            }
        })
    }

    /// One backward Euler step by damped Newton; returns the iteration count.
    pub fn step(&mut self, dt: f64, cfg: &TimeStepperConfig) -> Result<usize> {
        let m = self.modes();
        let a_old = self.coefficients.clone();
        let b_old = self.boundary;
        let residual = |x: &[f64]| -> (Vec<f64>, f64) {
            let b = [x[m], x[m + 1]];
            let (da, db) = self.derivative(&x[..m], &b);
            let mut r: Vec<f64> = (0..m).map(|j| (x[j] - a_old[j]) / dt - da[j]).collect();
            r.push((b[0] - b_old[0]) / dt - db[0]);
            r.push((b[1] - b_old[1]) / dt - db[1]);
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            (r, n)
        };
        let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut x: Vec<f64> = a_old.iter().copied().chain(b_old).collect();
        let (mut r, mut norm) = residual(&x);
        let mut iters = 0;
        let mut converged = norm <= cfg.newton_tol;
        while !converged && iters < cfg.newton_max_iter {
            iters += 1;
            let j = self.residual_jacobian(&x[..m], &[x[m], x[m + 1]], dt);
            let rhs = Col::<f64>::from_fn(m + 2, |i| -r[i]);
            let sol = j.partial_piv_lu().solve(&rhs);
            let delta: Vec<f64> = (0..m + 2).map(|i| sol[i]).collect();
            if delta.iter().any(|d| !d.is_finite()) {
                return Err(Error::LinearSolve("singular Galerkin Jacobian".into()));
            }
            if norm2(&delta) <= cfg.newton_tol * (dt + norm2(&x)) {
                x.iter_mut().zip(&delta).for_each(|(a, d)| *a += d);
                converged = true;
                break;
            }
            let mut lambda = 1.0;
            for halving in 0..=20 {
                let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
                let (rt, nt) = residual(&trial);
                if cfg.damping == Damping::None || nt < norm || halving == 20 {
                    x = trial;
                    r = rt;
                    norm = nt;
                    break;
                }
                lambda *= 0.5;
            }
            converged = norm <= cfg.newton_tol;
        }
        if !converged {
            return Err(Error::NewtonDiverged {
                time: self.t + dt,
                residual: norm,
                iterations: iters,
            });
        }
        self.boundary = [x[m], x[m + 1]];
        x.truncate(m);
        self.coefficients = x;
        self.t += dt;
        Ok(iters)
    }
}

/// Time derivative of (a, b) at the current state.
pub fn galerkin_rhs(sys: &GalerkinSystem) -> Result<(Vec<f64>, [f64; 2])> {
    let tr = sys.endpoint_traces();
    for (quantity, xs) in [("bulk trace", tr), ("surface concentration", sys.boundary)] {
        if let Some(index) = xs.iter().position(|&x| x < -crate::dynamics::ADMISSIBLE_NEGATIVE) {
            return Err(Error::Domain {
                quantity,
                index,
                value: xs[index],
                floor: -crate::dynamics::ADMISSIBLE_NEGATIVE,
            });
        }
    }
    Ok(sys.derivative(&sys.coefficients, &sys.boundary))
}

/// Integrates the modal system to `cfg.t_end`, reconstructing snapshots on `geom`.
/// Returns the trajectory and the final modal state.
pub fn run_galerkin(
    sys: &GalerkinSystem,
    cfg: &TimeStepperConfig,
    geom: &Geometry,
) -> Result<(Trajectory, GalerkinSystem)> {
    cfg.validate()?;
    sys.params.validate()?;
    check_len("Galerkin boundary values", geom.n_surface(), 2)?;
    let mut diag_params = sys.params.clone();
    diag_params.d_v = 0.0;
    let ops = assemble(geom, sys.params.d_u, 0.0, TraceOrder::First)?;
    let snapshot = |s: &GalerkinSystem| -> Result<StatePair> {
        Ok(StatePair::new(s.reconstruct(geom)?, s.boundary.to_vec(), s.t))
    };
    let record = |st: &StatePair| DiagnosticsRecord::compute(st, geom, &ops, &diag_params, DEFAULT_ENTROPY_SHIFT);

    let first = snapshot(sys)?;
    let mut traj = Trajectory {
        diagnostics: vec![record(&first)],
        snapshots: vec![first],
        newton_iterations: Vec::new(),
        compatibility_mismatch: None,
    };
    let mut current = sys.clone();
    let t0 = sys.t;
    let n_steps = ((cfg.t_end - t0) / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    for k in 1..=n_steps {
        let target = if k == n_steps { cfg.t_end } else { t0 + k as f64 * cfg.dt };
        let iters = current.step(target - current.t, cfg)?;
        current.t = target;
        traj.newton_iterations.push(iters);
        if k % cfg.snapshot_every == 0 || k == n_steps {
            let s = snapshot(&current)?;
            traj.diagnostics.push(record(&s));
            traj.snapshots.push(s);
        }
    }
    Ok((traj, current))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: u32, b: u32, eps: f64) -> ModelParams {
        ModelParams::new(a, b, 1.0, 0.0, eps)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(GAUSS_POINTS);
        for deg in 0..2 * GAUSS_POINTS {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        let (x, w) = gauss_legendre(GAUSS_POINTS);
        for i in 0..12 {
            for j in 0..12 {
                let mut s = 0.0;
                for panel in 0..PANELS {
                    let mid = (panel as f64 + 0.5) / PANELS as f64;
                    for (xi, wi) in x.iter().zip(&w) {
                        let t = mid + 0.5 / PANELS as f64 * xi;
                        s += 0.5 / PANELS as f64 * wi * basis(i, t) * basis(j, t);
                    }
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-12, "({i},{j}) {s}");
            }
        }
    }

    #[test]
    fn projection_examples() {
        let p = params(1, 1, 0.1);
        let s = project_initial(BulkProfile::Function(&|_| 1.0), [1.0, 1.0], 6, &p).unwrap();
        assert!((s.coefficients[0] - 1.0).abs() < 1e-14);
        assert!(s.coefficients[1..].iter().all(|a| a.abs() < 1e-14));

        let s = project_initial(BulkProfile::Function(&|x| (PI * x).cos()), [0.0, 0.0], 6, &p).unwrap();
        let expect = [0.0, 1.0 / SQRT_2, 0.0, 0.0, 0.0, 0.0];
        for (a, e) in s.coefficients.iter().zip(expect) {
            assert!((a - e).abs() < 1e-13);
        }

        let s = project_initial(BulkProfile::Function(&|x| x), [0.0, 0.0], 9, &p).unwrap();
        assert!((s.coefficients[0] - 0.5).abs() < 1e-14);
        for j in 1..9 {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let exact = SQRT_2 * (sign - 1.0) / (j as f64 * PI).powi(2);
            assert!((s.coefficients[j] - exact).abs() < 1e-13, "mode {j}");
        }
    }

    #[test]
    fn cell_projection_matches_function_projection_for_constants() {
        let p = params(1, 1, 0.1);
        let a = project_initial(BulkProfile::Cells(&[2.0; 16]), [0.0, 0.0], 5, &p).unwrap();
        assert!((a.coefficients[0] - 2.0).abs() < 1e-14);
        assert!(a.coefficients[1..].iter().all(|c| c.abs() < 1e-13));
    }

    #[test]
    fn equilibrium_has_zero_derivative() {
        for (a, b) in [(1, 1), (2, 1), (1, 3), (3, 2)] {
            let c: f64 = 1.3;
            let vb = c.powf(a as f64 / b as f64);
            let s = project_initial(BulkProfile::Function(&|_| c), [vb, vb], 4, &params(a, b, 0.01)).unwrap();
            let (da, db) = galerkin_rhs(&s).unwrap();
            assert!(da.iter().chain(&db).all(|x| x.abs() < 1e-9), "{a} {b}");
        }
    }

    #[test]
    fn single_mode_linear_reduction() {
        let eps = 0.2;
        let s = project_initial(BulkProfile::Function(&|_| 0.9), [0.4, 0.4], 1, &params(1, 1, eps)).unwrap();
        let (da, db) = galerkin_rhs(&s).unwrap();
        assert!((da[0] + 2.0 / eps * 0.5).abs() < 1e-13);
        assert!((db[0] - 0.5 / eps).abs() < 1e-13 && (db[1] - 0.5 / eps).abs() < 1e-13);
    }

    #[test]
    fn regularized_rate_is_bounded() {
        let eps = 0.1;
        let delta = 0.01;
        let p = params(2, 3, eps).with_kind(crate::dynamics::SystemKind::Regularized).with_delta(delta);
        let s = project_initial(BulkProfile::Function(&|_| 50.0), [0.0, 40.0], 3, &p).unwrap();
        let (_, db) = galerkin_rhs(&s).unwrap();
        assert!(db.iter().all(|d| d.abs() <= 3.0 / (eps * delta) * (1.0 + 1e-12)));
    }

    #[test]
    fn constant_equilibrium_trajectory_is_constant() {
        let g = Geometry::build_interval(16).unwrap();
        let s = project_initial(BulkProfile::Function(&|_| 1.0), [1.0, 1.0], 8, &params(2, 2, 0.1)).unwrap();
        let (traj, _) = run_galerkin(&s, &TimeStepperConfig::new(0.01, 0.1), &g).unwrap();
        for st in &traj.snapshots {
            assert!(st.u.iter().chain(&st.v).all(|x| (x - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn modal_mass_is_conserved_for_equal_stoichiometry() {
        let g = Geometry::build_interval(16).unwrap();
        let s = project_initial(BulkProfile::Function(&|x| 1.0 + 0.5 * x), [0.2, 2.0], 12, &params(2, 2, 0.05)).unwrap();
        let (_, fin) = run_galerkin(&s, &TimeStepperConfig::new(0.005, 0.1), &g).unwrap();
        assert!((fin.mass() - s.mass()).abs() <= 1e-10 * (1.0 + s.mass()));
    }

    #[test]
    fn discrepancy_shrinks_with_modes() {
        // analytic data; the boundary flux limits the cosine series to
        // algebraic convergence, so only a steady contraction is required
        let g = Geometry::build_interval(128).unwrap();
        let p = params(2, 2, 0.1);
        let profile = |x: f64| 1.0 + 0.1 * (PI * x).cos() + 0.05 * (3.0 * x).sin();
        let boundary = [profile(0.0), profile(1.0)];
        let cfg = TimeStepperConfig::new(0.005, 0.1).with_snapshot_every(1000);
        let solve = |m: usize| {
            let s = project_initial(BulkProfile::Function(&profile), boundary, m, &p).unwrap();
            run_galerkin(&s, &cfg, &g).unwrap().1.reconstruct(&g).unwrap()
        };
        let reference = solve(96);
        let errors: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&m| {
                let d: Vec<f64> = solve(m).iter().zip(&reference).map(|(a, b)| a - b).collect();
                g.bulk_l2(&d)
            })
            .collect();
        assert!(errors[0] / errors[1] >= 2.0 && errors[1] / errors[2] >= 2.0, "{errors:?}");
    }

    #[test]
    fn modal_energy_stays_bounded() {
        let p = params(3, 2, 0.05).with_kind(crate::dynamics::SystemKind::Regularized).with_delta(0.1);
        let s = project_initial(BulkProfile::Function(&|x| 0.5 + x), [0.0, 1.5], 16, &p).unwrap();
        let energy = |c: &[f64], b: &[f64; 2]| c.iter().map(|a| a * a).sum::<f64>() + b[0] * b[0] + b[1] * b[1];
        let start = energy(&s.coefficients, &s.boundary);
        let mut sys = s.clone();
        let cfg = TimeStepperConfig::new(0.01, 1.0);
        for _ in 0..100 {
            sys.step(0.01, &cfg).unwrap();
            sys.t += 0.01;
            let e = energy(&sys.coefficients, &sys.boundary);
            assert!(e.is_finite() && e <= 10.0 * start, "{e} vs {start}");
        }
    }
}
