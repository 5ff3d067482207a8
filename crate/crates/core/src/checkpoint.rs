//! JSON checkpoints of solver states.
//!
//! Floats are written in shortest round-trip form and parsed with correct
//! rounding, so a write/read cycle reproduces every value bitwise.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelParams, StatePair};
use crate::error::{Error, Result};
use crate::geometry::{Geometry, GeometrySpec};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: u64,
    pub geometry: GeometrySpec,
    pub t: f64,
    pub u: Vec<f64>,
    /// Surface values as stored by the solver (the trace of `u` for limit runs).
    pub v: Vec<f64>,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(state: &StatePair, geom: &Geometry, params: &ModelParams) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            geometry: geom.spec(),
            t: state.t,
            u: state.u.clone(),
            v: state.v.clone(),
            params: params.clone(),
        }
    }

    pub fn state(&self) -> StatePair {
        StatePair::new(self.u.clone(), self.v.clone(), self.t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint fields are serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        match value.get("schema").and_then(|s| s.as_u64()) {
            Some(SCHEMA_VERSION) => {}
            Some(other) => {
                return Err(Error::Checkpoint(format!(
                    "unsupported schema version {other} (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(Error::Checkpoint("missing schema version".into())),
        }
        let cp: Checkpoint =
            serde_json::from_value(value).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        let geom = Geometry::from_spec(cp.geometry)?;
        if cp.u.len() != geom.n_bulk() || cp.v.len() != geom.n_surface() {
            return Err(Error::Checkpoint(format!(
                "state sizes ({}, {}) do not match the geometry ({}, {})",
                cp.u.len(),
                cp.v.len(),
                geom.n_bulk(),
                geom.n_surface()
            )));
        }
        Ok(cp)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Serializes and re-reads a state.
pub fn checkpoint_roundtrip(state: &StatePair, geom: &Geometry, params: &ModelParams) -> Result<StatePair> {
    Ok(Checkpoint::from_json(&Checkpoint::new(state, geom, params).to_json())?.state())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_bitwise(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Geometry::build_disk(3, 8).unwrap();
            let u: Vec<f64> = (0..g.n_bulk()).map(|_| rng.gen::<f64>() * 10f64.powi(rng.gen_range(-30..30))).collect();
            let v: Vec<f64> = (0..g.n_surface()).map(|_| rng.gen::<f64>() / 3.0).collect();
            let s = StatePair::new(u, v, rng.gen());
            let back = checkpoint_roundtrip(&s, &g, &ModelParams::new(2, 3, 1.0, 0.5, 1e-3)).unwrap();
            prop_assert!(back.u.iter().zip(&s.u).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert!(back.v.iter().zip(&s.v).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back.t.to_bits(), s.t.to_bits());
        }
    }

    #[test]
    fn truncated_file_is_an_error() {
        let g = Geometry::build_interval(4).unwrap();
        let text = Checkpoint::new(&StatePair::constant(&g, 1.0, 2.0), &g, &ModelParams::new(1, 1, 1.0, 0.0, 0.1)).to_json();
        let cut = &text[..text.len() / 2];
        assert!(matches!(Checkpoint::from_json(cut), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let g = Geometry::build_interval(4).unwrap();
        let mut cp = Checkpoint::new(&StatePair::constant(&g, 1.0, 2.0), &g, &ModelParams::new(1, 1, 1.0, 0.0, 0.1));
        cp.schema = 2;
        let e = Checkpoint::from_json(&cp.to_json()).unwrap_err();
        assert!(e.to_string().contains("schema version 2"));
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let g = Geometry::build_interval(4).unwrap();
        let mut cp = Checkpoint::new(&StatePair::constant(&g, 1.0, 2.0), &g, &ModelParams::new(1, 1, 1.0, 0.0, 0.1));
        cp.u.pop();
        assert!(Checkpoint::from_json(&cp.to_json()).is_err());
    }
}
