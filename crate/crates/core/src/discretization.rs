//! Conservative finite-difference operators on the cell-centered grids.
//!
//! Diffusion is written in flux form so that `W K` is symmetric with zero row
//! sums (W = diagonal quadrature weights). The boundary flux enters the bulk
//! through `flux_in = W_Ω⁻¹ Bᵀ W_Γ`, where B selects the owning cell of each
//! surface node. Summing a flux contribution against the bulk weights therefore
//! reproduces the surface integral of the flux density exactly, which is what
//! makes the weighted total mass of the semi-discrete system conserved.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::{Geometry, GeometryKind, GeometrySpec};
use crate::sparse::CsrMatrix;

/// How the bulk value at a surface node is reconstructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[derive(Default)]
pub enum TraceOrder {
    /// Value of the owning cell.
    First,
    /// Linear extrapolation from the two innermost cells along the normal.
    #[default]
    Second,
}


impl TryFrom<u8> for TraceOrder {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(TraceOrder::First),
            2 => Ok(TraceOrder::Second),
            other => Err(format!("trace_order must be 1 or 2, got {other}")),
        }
    }
}

impl From<TraceOrder> for u8 {
    fn from(t: TraceOrder) -> u8 {
        match t {
            TraceOrder::First => 1,
            TraceOrder::Second => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    /// −d_u Δ with zero natural flux; the reaction flux is added separately.
    pub bulk_stiffness: CsrMatrix,
    /// −d_v Δ_Γ; empty on the interval.
    pub surface_stiffness: CsrMatrix,
    /// n_bulk × n_surface, face measure / cell weight in the owning cell.
    pub flux_in: CsrMatrix,
    /// n_surface × n_bulk.
    pub trace: CsrMatrix,
    pub bulk_weights: Vec<f64>,
    pub surface_weights: Vec<f64>,
    pub d_u: f64,
    pub d_v: f64,
    pub trace_order: TraceOrder,
}

pub fn assemble(geom: &Geometry, d_u: f64, d_v: f64, trace_order: TraceOrder) -> Result<DiscreteOperators> {
    if !(d_u > 0.0 && d_u.is_finite()) {
        return Err(Error::InvalidOperator(format!("d_u must be positive, got {d_u}")));
    }
    if !(d_v >= 0.0 && d_v.is_finite()) {
        return Err(Error::InvalidOperator(format!("d_v must be nonnegative, got {d_v}")));
    }
    if geom.kind() == GeometryKind::Interval && d_v > 0.0 {
        return Err(Error::InvalidOperator(
            "d_v must be 0 on the interval: its two-point surface carries no surface diffusion".into(),
        ));
    }

    let nb = geom.n_bulk();
    let ns = geom.n_surface();

    // face couplings (cell a, cell b, coefficient) with coefficient = d_u · |face| / distance
    let mut faces: Vec<(usize, usize, f64)> = Vec::new();
    let mut surface_faces: Vec<(usize, usize, f64)> = Vec::new();
    // (surface node, inner neighbour of the owning cell) for second-order traces
    let inner: Vec<usize> = match geom.spec() {
        GeometrySpec::Interval { n_bulk } => {
            let h = 1.0 / n_bulk as f64;
            for i in 0..n_bulk - 1 {
                faces.push((i, i + 1, d_u / h));
            }
            vec![1, n_bulk - 2]
        }
        GeometrySpec::Disk { n_r, n_theta } => {
            let dr = 1.0 / n_r as f64;
            let dth = 2.0 * std::f64::consts::PI / n_theta as f64;
            let idx = |i: usize, j: usize| i * n_theta + j;
            for i in 0..n_r {
                let r = (i as f64 + 0.5) * dr;
                for j in 0..n_theta {
                    let jn = (j + 1) % n_theta;
                    faces.push((idx(i, j), idx(i, jn), d_u * dr / (r * dth)));
                    if i + 1 < n_r {
                        let r_face = (i as f64 + 1.0) * dr;
                        faces.push((idx(i, j), idx(i + 1, j), d_u * r_face * dth / dr));
                    }
                }
            }
            if d_v > 0.0 {
                for j in 0..n_theta {
                    surface_faces.push((j, (j + 1) % n_theta, d_v / dth));
                }
            }
            (0..n_theta).map(|j| idx(n_r - 2, j)).collect()
        }
    };

    let bulk_stiffness = stiffness_from_faces(nb, &faces, &geom.bulk_weights);
    let surface_stiffness = stiffness_from_faces(ns, &surface_faces, &geom.surface_weights);

    let flux_in = CsrMatrix::from_triplets(
        nb,
        ns,
        &geom
            .boundary_map
            .iter()
            .enumerate()
            .map(|(k, l)| (l.bulk, k, l.face_measure / geom.bulk_weights[l.bulk]))
            .collect::<Vec<_>>(),
    );

    let trace_triplets: Vec<(usize, usize, f64)> = match trace_order {
        TraceOrder::First => geom
            .boundary_map
            .iter()
            .enumerate()
            .map(|(k, l)| (k, l.bulk, 1.0))
            .collect(),
        TraceOrder::Second => geom
            .boundary_map
            .iter()
            .enumerate()
            .flat_map(|(k, l)| [(k, l.bulk, 1.5), (k, inner[k], -0.5)])
            .collect(),
    };
    let trace = CsrMatrix::from_triplets(ns, nb, &trace_triplets);

    Ok(DiscreteOperators {
        bulk_stiffness,
        surface_stiffness,
        flux_in,
        trace,
        bulk_weights: geom.bulk_weights.clone(),
        surface_weights: geom.surface_weights.clone(),
        d_u,
        d_v,
        trace_order,
    })
}

/// Rows of W⁻¹ Σ_faces c (e_a − e_b)(e_a − e_b)ᵀ.
fn stiffness_from_faces(n: usize, faces: &[(usize, usize, f64)], weights: &[f64]) -> CsrMatrix {
    let mut t = Vec::with_capacity(4 * faces.len());
    for &(a, b, c) in faces {
        t.push((a, a, c / weights[a]));
        t.push((a, b, -c / weights[a]));
        t.push((b, b, c / weights[b]));
        t.push((b, a, -c / weights[b]));
    }
    CsrMatrix::from_triplets(n, n, &t)
}

impl DiscreteOperators {
    pub fn n_bulk(&self) -> usize {
        self.bulk_weights.len()
    }

    pub fn n_surface(&self) -> usize {
        self.surface_weights.len()
    }

    /// Bulk-balance contribution of a surface flux density.
    pub fn apply_flux_coupling(&self, flux_density: &[f64]) -> Result<Vec<f64>> {
        check_len("flux coupling", self.n_surface(), flux_density.len())?;
        Ok(self.flux_in.mul_vec(flux_density))
    }

    pub fn apply_trace(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("trace", self.n_bulk(), u.len())?;
        Ok(self.trace.mul_vec(u))
    }

    pub(crate) fn weighted_norm(&self, bulk: &[f64], surface: &[f64]) -> f64 {
        let b: f64 = self.bulk_weights.iter().zip(bulk).map(|(w, r)| w * r * r).sum();
        let s: f64 = self.surface_weights.iter().zip(surface).map(|(w, r)| w * r * r).sum();
        (b + s).sqrt()
    }
}
