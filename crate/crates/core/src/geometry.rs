//! Discrete domains: the unit interval and the unit disk.
//!
//! Both grids are cell-centered. Bulk quadrature uses cell measures, surface
//! quadrature uses the boundary cell-face measures, and every surface node is
//! linked to the bulk cell that owns its face.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serializable description of a geometry; enough to rebuild it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeometrySpec {
    Interval { n_bulk: usize },
    Disk { n_r: usize, n_theta: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Interval,
    Disk,
}

/// Surface node → owning bulk cell, with the measure of the shared face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryLink {
    pub bulk: usize,
    pub face_measure: f64,
}

#[derive(Debug, Clone)]
pub struct Geometry {
    spec: GeometrySpec,
    pub bulk_coords: Vec<[f64; 2]>,
    pub bulk_weights: Vec<f64>,
    pub surface_coords: Vec<[f64; 2]>,
    pub surface_weights: Vec<f64>,
    /// Outward unit normals at the surface nodes.
    pub surface_normals: Vec<[f64; 2]>,
    pub boundary_map: Vec<BoundaryLink>,
}

impl Geometry {
    /// Cell-centered grid on [0, 1]; the two endpoints carry counting measure.
    pub fn build_interval(n_bulk: usize) -> Result<Self> {
        if n_bulk < 3 {
            return Err(Error::InvalidGeometry(format!(
                "interval needs n_bulk >= 3, got {n_bulk}"
            )));
        }
        let h = 1.0 / n_bulk as f64;
        let bulk_coords = (0..n_bulk).map(|i| [(i as f64 + 0.5) * h, 0.0]).collect();
        Ok(Self {
            spec: GeometrySpec::Interval { n_bulk },
            bulk_coords,
            bulk_weights: vec![h; n_bulk],
            surface_coords: vec![[0.0, 0.0], [1.0, 0.0]],
            surface_weights: vec![1.0, 1.0],
            surface_normals: vec![[-1.0, 0.0], [1.0, 0.0]],
            boundary_map: vec![
                BoundaryLink { bulk: 0, face_measure: 1.0 },
                BoundaryLink { bulk: n_bulk - 1, face_measure: 1.0 },
            ],
        })
    }

    /// Cell-centered polar grid on the unit disk. Bulk index of cell (i, j) is
    /// `i * n_theta + j` with `i` the radial and `j` the angular index.
    pub fn build_disk(n_r: usize, n_theta: usize) -> Result<Self> {
        if n_r < 3 {
            return Err(Error::InvalidGeometry(format!("disk needs n_r >= 3, got {n_r}")));
        }
        if n_theta < 8 {
            return Err(Error::InvalidGeometry(format!(
                "disk needs n_theta >= 8, got {n_theta}"
            )));
        }
        if !n_theta.is_multiple_of(2) {
            return Err(Error::InvalidGeometry(format!(
                "disk needs an even n_theta, got {n_theta}"
            )));
        }
        let dr = 1.0 / n_r as f64;
        let dtheta = 2.0 * PI / n_theta as f64;

        let mut bulk_coords = Vec::with_capacity(n_r * n_theta);
        let mut bulk_weights = Vec::with_capacity(n_r * n_theta);
        for i in 0..n_r {
            let r = (i as f64 + 0.5) * dr;
            for j in 0..n_theta {
                let th = j as f64 * dtheta;
                bulk_coords.push([r * th.cos(), r * th.sin()]);
                bulk_weights.push(r * dr * dtheta);
            }
        }
        let surface_coords: Vec<[f64; 2]> = (0..n_theta)
            .map(|j| {
                let th = j as f64 * dtheta;
                [th.cos(), th.sin()]
            })
            .collect();
        let boundary_map = (0..n_theta)
            .map(|j| BoundaryLink {
                bulk: (n_r - 1) * n_theta + j,
                face_measure: dtheta,
            })
            .collect();
        Ok(Self {
            spec: GeometrySpec::Disk { n_r, n_theta },
            bulk_coords,
            bulk_weights,
            surface_normals: surface_coords.clone(),
            surface_coords,
            surface_weights: vec![dtheta; n_theta],
            boundary_map,
        })
    }

    pub fn from_spec(spec: GeometrySpec) -> Result<Self> {
        match spec {
            GeometrySpec::Interval { n_bulk } => Self::build_interval(n_bulk),
            GeometrySpec::Disk { n_r, n_theta } => Self::build_disk(n_r, n_theta),
        }
    }

    pub fn spec(&self) -> GeometrySpec {
        self.spec
    }

    pub fn kind(&self) -> GeometryKind {
        match self.spec {
            GeometrySpec::Interval { .. } => GeometryKind::Interval,
            GeometrySpec::Disk { .. } => GeometryKind::Disk,
        }
    }

    pub fn n_bulk(&self) -> usize {
        self.bulk_weights.len()
    }

    pub fn n_surface(&self) -> usize {
        self.surface_weights.len()
    }

    /// Exact |Ω|.
    pub fn bulk_measure(&self) -> f64 {
        match self.kind() {
            GeometryKind::Interval => 1.0,
            GeometryKind::Disk => PI,
        }
    }

    /// Exact |Γ| (counting measure on the interval's endpoints).
    pub fn surface_measure(&self) -> f64 {
        match self.kind() {
            GeometryKind::Interval => 2.0,
            GeometryKind::Disk => 2.0 * PI,
        }
    }

    pub fn bulk_integral(&self, f: &[f64]) -> f64 {
        self.bulk_weights.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    pub fn surface_integral(&self, g: &[f64]) -> f64 {
        self.surface_weights.iter().zip(g).map(|(w, x)| w * x).sum()
    }

    pub fn bulk_l2(&self, f: &[f64]) -> f64 {
        self.bulk_weights.iter().zip(f).map(|(w, x)| w * x * x).sum::<f64>().sqrt()
    }

    pub fn surface_l2(&self, g: &[f64]) -> f64 {
        self.surface_weights.iter().zip(g).map(|(w, x)| w * x * x).sum::<f64>().sqrt()
    }

    /// Smallest ratio of a boundary cell's volume to its boundary face:
    /// the distance over which a surface flux acts on the bulk.
    pub fn boundary_cell_depth(&self) -> f64 {
        self.boundary_map
            .iter()
            .map(|l| self.bulk_weights[l.bulk] / l.face_measure)
            .fold(f64::INFINITY, f64::min)
    }

    /// Piecewise-constant trace: the value of the owning bulk cell.
    pub fn adjacent_trace(&self, u: &[f64]) -> Vec<f64> {
        self.boundary_map.iter().map(|l| u[l.bulk]).collect()
    }

    pub fn bulk_from_fn(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.bulk_coords.iter().map(|&p| f(p)).collect()
    }

    pub fn surface_from_fn(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.surface_coords.iter().map(|&p| f(p)).collect()
    }
}
