//! Functionals of a state: mass, entropies, Fisher information, extrema and
//! the boundary equilibrium defect.

use std::io::Write;

use serde::Serialize;

use crate::discretization::DiscreteOperators;
use crate::dynamics::{ModelParams, StatePair, ADMISSIBLE_NEGATIVE};
use crate::error::{Error, Result};
use crate::geometry::{Geometry, GeometrySpec};
use crate::sparse::CsrMatrix;

pub const CSV_COLUMNS: [&str; 15] = [
    "t", "mass", "E1", "E2", "E3", "logE", "fisher_b", "fisher_s", "min_u", "min_v", "max_u", "max_v", "neg_norm",
    "defect", "trace_gap",
];

/// α ∫u + β ∫v.
pub fn mass(state: &StatePair, geom: &Geometry, p: &ModelParams) -> f64 {
    p.alpha as f64 * geom.bulk_integral(&state.u) + p.beta as f64 * geom.surface_integral(&state.v)
}

/// β ∫u + α ∫v: the amount conserved by the reaction αU ⇌ βV, where α
/// bulk molecules turn into β surface molecules. Equals [`mass`] when α = β.
pub fn stoichiometric_mass(state: &StatePair, geom: &Geometry, p: &ModelParams) -> f64 {
    p.beta as f64 * geom.bulk_integral(&state.u) + p.alpha as f64 * geom.surface_integral(&state.v)
}

fn check_nonnegative(state: &StatePair) -> Result<()> {
    for (quantity, xs) in [("bulk concentration", &state.u), ("surface concentration", &state.v)] {
        if let Some(index) = xs.iter().position(|&x| x < -ADMISSIBLE_NEGATIVE) {
            return Err(Error::Domain {
                quantity,
                index,
                value: xs[index],
                floor: -ADMISSIBLE_NEGATIVE,
            });
        }
    }
    Ok(())
}

fn entropy_unchecked(state: &StatePair, geom: &Geometry, p: &ModelParams, p_exp: u32) -> f64 {
    let a = p.alpha as f64;
    let b = p.beta as f64;
    let pa = (p_exp * p.alpha + 1) as i32;
    let pb = (p_exp * p.beta + 1) as i32;
    let bulk: f64 = geom.bulk_weights.iter().zip(&state.u).map(|(w, u)| w * u.powi(pa)).sum();
    let surf: f64 = geom.surface_weights.iter().zip(&state.v).map(|(w, v)| w * v.powi(pb)).sum();
    bulk / (p_exp as f64 * a * a + a) + surf / (p_exp as f64 * b * b + b)
}

/// (1/(pα²+α)) ∫u^{pα+1} + (1/(pβ²+β)) ∫v^{pβ+1}.
pub fn entropy_p(state: &StatePair, geom: &Geometry, p: &ModelParams, p_exp: u32) -> Result<f64> {
    if p_exp == 0 {
        return Err(Error::InvalidParams("entropy exponent must be >= 1".into()));
    }
    check_nonnegative(state)?;
    Ok(entropy_unchecked(state, geom, p, p_exp))
}

#[inline]
fn shifted_log_density(x: f64, shift: f64) -> f64 {
    let y = x.max(0.0) + shift;
    y * (y.ln() - 1.0)
}

/// ∫(u+λ)(log(u+λ) − 1) + ∫(v+λ)(log(v+λ) − 1).
pub fn log_entropy(state: &StatePair, geom: &Geometry, shift: f64) -> f64 {
    let bulk: f64 = geom.bulk_weights.iter().zip(&state.u).map(|(w, &u)| w * shifted_log_density(u, shift)).sum();
    let surf: f64 = geom.surface_weights.iter().zip(&state.v).map(|(w, &v)| w * shifted_log_density(v, shift)).sum();
    bulk + surf
}

#[inline]
fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

/// Σ over couplings a<b of g_ab (x_a − x_b)² / H(x_a+λ, x_b+λ), where
/// g_ab = −K_ab w_a / d recovers |face| / distance from the stiffness.
fn face_fisher(k: &CsrMatrix, weights: &[f64], diffusivity: f64, x: &[f64], shift: f64) -> f64 {
    if diffusivity <= 0.0 {
        return 0.0;
    }
    k.triplets()
        .filter(|&(a, b, _)| a < b)
        .map(|(a, b, kab)| {
            let g = -kab * weights[a] / diffusivity;
            let d = x[a] - x[b];
            let h = harmonic_mean(x[a].max(0.0) + shift, x[b].max(0.0) + shift);
            if d == 0.0 || h == 0.0 {
                0.0
            } else {
                g * d * d / h
            }
        })
        .sum()
}

/// Discrete (∫|∇u|²/(u+λ), ∫|∇_Γ v|²/(v+λ)). The bulk sum includes the
/// half-faces between each boundary cell centre and the reconstructed trace.
pub fn fisher(state: &StatePair, geom: &Geometry, ops: &DiscreteOperators, shift: f64) -> (f64, f64) {
    let mut bulk = face_fisher(&ops.bulk_stiffness, &ops.bulk_weights, ops.d_u, &state.u, shift);
    let half = 0.5
        * match geom.spec() {
            GeometrySpec::Interval { n_bulk } => 1.0 / n_bulk as f64,
            GeometrySpec::Disk { n_r, .. } => 1.0 / n_r as f64,
        };
    let trace = ops.trace.mul_vec(&state.u);
    for (link, &tr) in geom.boundary_map.iter().zip(&trace) {
        let uc = state.u[link.bulk];
        let d = tr - uc;
        let h = harmonic_mean(uc.max(0.0) + shift, tr.max(0.0) + shift);
        if d != 0.0 && h > 0.0 {
            bulk += link.face_measure / half * d * d / h;
        }
    }
    let surface = face_fisher(&ops.surface_stiffness, &ops.surface_weights, ops.d_v, &state.v, shift);
    (bulk, surface)
}

/// ‖trace(u)^α − v^β‖_{L²(Γ)} with the owning-cell trace.
pub fn defect(state: &StatePair, geom: &Geometry, p: &ModelParams) -> f64 {
    let tr = geom.adjacent_trace(&state.u);
    let d: Vec<f64> = tr
        .iter()
        .zip(&state.v)
        .map(|(&u, &v)| u.powi(p.alpha as i32) - v.powi(p.beta as i32))
        .collect();
    geom.surface_l2(&d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extrema {
    pub min_u: f64,
    pub min_v: f64,
    pub max_u: f64,
    pub max_v: f64,
    /// Σ w_Ω (u⁻)² + Σ w_Γ (v⁻)².
    pub neg_norm: f64,
    /// max_Γ trace(u) − max_Ω u.
    pub trace_gap: f64,
}

pub fn positivity_and_linf(state: &StatePair, geom: &Geometry) -> Extrema {
    let min = |xs: &[f64]| xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |xs: &[f64]| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let neg = |w: &[f64], xs: &[f64]| -> f64 { w.iter().zip(xs).map(|(w, &x)| w * x.min(0.0).powi(2)).sum() };
    let tr = geom.adjacent_trace(&state.u);
    Extrema {
        min_u: min(&state.u),
        min_v: min(&state.v),
        max_u: max(&state.u),
        max_v: max(&state.v),
        neg_norm: neg(&geom.bulk_weights, &state.u) + neg(&geom.surface_weights, &state.v),
        trace_gap: max(&tr) - max(&state.u),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    /// E_p for p = 1, 2, 3.
    pub entropy: [f64; 3],
    pub log_entropy: f64,
    pub entropy_shift: f64,
    pub fisher_bulk: f64,
    pub fisher_surface: f64,
    pub extrema: Extrema,
    pub defect: f64,
}

impl DiagnosticsRecord {
    /// Evaluates every diagnostic of a physical state. Entropies are computed
    /// without the domain check so that records exist even for states that
    /// lost positivity; `extrema.neg_norm` reports that loss.
    pub fn compute(state: &StatePair, geom: &Geometry, ops: &DiscreteOperators, p: &ModelParams, shift: f64) -> Self {
        let (fisher_bulk, fisher_surface) = fisher(state, geom, ops, shift);
        Self {
            t: state.t,
            mass: mass(state, geom, p),
            entropy: [1, 2, 3].map(|q| entropy_unchecked(state, geom, p, q)),
            log_entropy: log_entropy(state, geom, shift),
            entropy_shift: shift,
            fisher_bulk,
            fisher_surface,
            extrema: positivity_and_linf(state, geom),
            defect: defect(state, geom, p),
        }
    }

    pub fn csv_row(&self) -> String {
        let e = &self.extrema;
        let fields = [
            self.t,
            self.mass,
            self.entropy[0],
            self.entropy[1],
            self.entropy[2],
            self.log_entropy,
            self.fisher_bulk,
            self.fisher_surface,
            e.min_u,
            e.min_v,
            e.max_u,
            e.max_v,
            e.neg_norm,
            self.defect,
            e.trace_gap,
        ];
        fields.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
    }
}

/// Writes a version comment, the fixed column header and one row per record.
pub fn write_csv<W: Write>(out: &mut W, records: &[DiagnosticsRecord]) -> std::io::Result<()> {
    writeln!(out, "# generated by bulksurf {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "{}", CSV_COLUMNS.join(","))?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Trapezoid rule over (t, value) samples.
pub fn trapezoid(samples: &[(f64, f64)]) -> f64 {
    samples.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble, TraceOrder};
    use proptest::prelude::*;
    use std::f64::consts::{E, PI};

    fn params(a: u32, b: u32) -> ModelParams {
        ModelParams::new(a, b, 1.0, 0.0, 0.1)
    }

    #[test]
    fn mass_examples() {
        let d = Geometry::build_disk(8, 16).unwrap();
        let s = StatePair::constant(&d, 1.0, 1.0);
        assert!((mass(&s, &d, &params(2, 3)) - 8.0 * PI).abs() < 1e-12);
        let i = Geometry::build_interval(5).unwrap();
        assert!((mass(&StatePair::constant(&i, 1.0, 1.0), &i, &params(1, 1)) - 3.0).abs() < 1e-14);
        assert_eq!(mass(&StatePair::constant(&i, 0.0, 0.0), &i, &params(3, 2)), 0.0);
    }

    #[test]
    fn entropy_examples() {
        let d = Geometry::build_disk(8, 16).unwrap();
        let e = entropy_p(&StatePair::constant(&d, 1.0, 1.0), &d, &params(1, 1), 1).unwrap();
        assert!((e - 1.5 * PI).abs() < 1e-12);
        let i = Geometry::build_interval(7).unwrap();
        let e = entropy_p(&StatePair::constant(&i, 1.0, 1.0), &i, &params(2, 1), 1).unwrap();
        assert!((e - 7.0 / 6.0).abs() < 1e-14);
        assert_eq!(entropy_p(&StatePair::constant(&i, 0.0, 0.0), &i, &params(2, 1), 3).unwrap(), 0.0);
        let mut s = StatePair::constant(&i, 1.0, 1.0);
        s.u[3] = -1e-6;
        assert!(matches!(entropy_p(&s, &i, &params(1, 1), 1), Err(Error::Domain { .. })));
    }

    #[test]
    fn log_entropy_examples() {
        let i = Geometry::build_interval(9).unwrap();
        let lam = 1e-8;
        let s = StatePair::constant(&i, E - lam, E - lam);
        assert!(log_entropy(&s, &i, lam).abs() < 1e-14);
        let s = StatePair::constant(&i, 1.0, 1.0);
        assert!((log_entropy(&s, &i, 1e-15) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_examples() {
        let d = Geometry::build_disk(5, 10).unwrap();
        let ops = assemble(&d, 1.0, 1.0, TraceOrder::Second).unwrap();
        assert_eq!(fisher(&StatePair::constant(&d, 2.0, 3.0), &d, &ops, 1e-8), (0.0, 0.0));

        let i = Geometry::build_interval(64).unwrap();
        let ops = assemble(&i, 1.0, 0.0, TraceOrder::Second).unwrap();
        let u = i.bulk_from_fn(|x| 1.0 + x[0]);
        let (fb, fs) = fisher(&StatePair::new(u, vec![1.0, 2.0], 0.0), &i, &ops, 1e-8);
        assert!((fb - 2f64.ln()).abs() <= 0.02 * 2f64.ln(), "{fb}");
        assert_eq!(fs, 0.0);
    }

    #[test]
    fn defect_examples() {
        let d = Geometry::build_disk(4, 32).unwrap();
        let s = StatePair::constant(&d, 2.0, 1.0);
        assert!((defect(&s, &d, &params(1, 1)) - (2.0 * PI).sqrt()).abs() < 1e-12);
        let s = StatePair::constant(&d, 4.0, 2.0);
        assert!(defect(&s, &d, &params(1, 2)) == 0.0);
    }

    #[test]
    fn extrema_examples() {
        let i = Geometry::build_interval(4).unwrap();
        let s = StatePair::new(vec![0.5, 2.0, 1.0, 0.0], vec![0.1, 3.0], 0.0);
        let e = positivity_and_linf(&s, &i);
        assert_eq!(e.neg_norm, 0.0);
        assert_eq!(e.trace_gap, -1.5);
        let s = StatePair::new(vec![-1.0, 0.0, 0.0, 0.0], vec![0.0, -2.0], 0.0);
        assert_eq!(positivity_and_linf(&s, &i).neg_norm, 0.25 + 4.0);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let s: Vec<(f64, f64)> = (0..11).map(|k| (k as f64 * 0.1, 3.0 * k as f64 * 0.1)).collect();
        assert!((trapezoid(&s) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn csv_has_fixed_columns() {
        let i = Geometry::build_interval(4).unwrap();
        let ops = assemble(&i, 1.0, 0.0, TraceOrder::Second).unwrap();
        let r = DiagnosticsRecord::compute(&StatePair::constant(&i, 1.0, 1.0), &i, &ops, &params(1, 1), 1e-8);
        let mut buf = Vec::new();
        write_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# generated by bulksurf"));
        assert_eq!(lines[1], "t,mass,E1,E2,E3,logE,fisher_b,fisher_s,min_u,min_v,max_u,max_v,neg_norm,defect,trace_gap");
        assert_eq!(lines[2].split(',').count(), 15);
    }

    // naive reimplementations used as oracles
    fn naive_entropy(u: &[f64], v: &[f64], wu: &[f64], wv: &[f64], a: u32, b: u32, q: u32) -> f64 {
        let (af, bf, qf) = (a as f64, b as f64, q as f64);
        let mut s = 0.0;
        for i in 0..u.len() {
            let mut pw = 1.0;
            for _ in 0..(q * a + 1) {
                pw *= u[i];
            }
            s += wu[i] * pw / (qf * af * af + af);
        }
        for j in 0..v.len() {
            let mut pw = 1.0;
            for _ in 0..(q * b + 1) {
                pw *= v[j];
            }
            s += wv[j] * pw / (qf * bf * bf + bf);
        }
        s
    }

    fn naive_defect(u: &[f64], v: &[f64], g: &Geometry, a: u32, b: u32) -> f64 {
        let mut s = 0.0;
        for j in 0..v.len() {
            let ut = u[g.boundary_map[j].bulk];
            let d = ut.powf(a as f64) - v[j].powf(b as f64);
            s += g.surface_weights[j] * d * d;
        }
        s.sqrt()
    }

    proptest! {
        #[test]
        fn diagnostics_match_naive_sums(seed in 0u64..1000, a in 1u32..4, b in 1u32..4, disk in any::<bool>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = if disk { Geometry::build_disk(3, 8).unwrap() } else { Geometry::build_interval(60).unwrap() };
            let u: Vec<f64> = (0..g.n_bulk()).map(|_| rng.gen_range(0.0..1.5)).collect();
            let v: Vec<f64> = (0..g.n_surface()).map(|_| rng.gen_range(0.0..1.5)).collect();
            let s = StatePair::new(u.clone(), v.clone(), 0.0);
            let p = params(a, b);
            for q in 1..=3 {
                let e = entropy_p(&s, &g, &p, q).unwrap();
                let n = naive_entropy(&u, &v, &g.bulk_weights, &g.surface_weights, a, b, q);
                prop_assert!((e - n).abs() <= 1e-13 * (1.0 + n.abs()));
            }
            let d = defect(&s, &g, &p);
            let n = naive_defect(&u, &v, &g, a, b);
            prop_assert!((d - n).abs() <= 1e-13 * (1.0 + n));
        }

        #[test]
        fn trace_gap_is_never_positive(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Geometry::build_disk(4, 8).unwrap();
            let u: Vec<f64> = (0..g.n_bulk()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = StatePair::new(u, vec![0.0; g.n_surface()], 0.0);
            prop_assert!(positivity_and_linf(&s, &g).trace_gap <= 0.0);
        }

        #[test]
        fn fisher_is_nonnegative(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Geometry::build_disk(4, 8).unwrap();
            let ops = assemble(&g, 1.0, 1.0, TraceOrder::Second).unwrap();
            let u: Vec<f64> = (0..g.n_bulk()).map(|_| rng.gen_range(0.0..2.0)).collect();
            let v: Vec<f64> = (0..g.n_surface()).map(|_| rng.gen_range(0.0..2.0)).collect();
            let (fb, fs) = fisher(&StatePair::new(u, v, 0.0), &g, &ops, 1e-8);
            prop_assert!(fb >= 0.0 && fs >= 0.0);
        }
    }
}
