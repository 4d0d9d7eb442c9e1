//! The assembled traffic model and its on-disk bundle format.
//!
//! A bundle is one JSON document. Floats are written with round-trip
//! precision, so `load(save(m)) == m` and re-saving is byte-identical.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flowmodel::{Flow, OutlierDensity, RateSchedule};
use crate::ingest::Projection;

pub const BUNDLE_VERSION: &str = "flowmap-bundle/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// sha256 of the input trajectory file.
    pub corpus_hash: String,
    /// Parameter record of the run that produced the bundle.
    pub parameters: serde_json::Value,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: String,
    pub projection: Projection,
    pub flows: Vec<Flow>,
    pub schedule: RateSchedule,
    /// Outlier share of each time bin.
    pub outlier_share: Vec<f64>,
    pub outliers: OutlierDensity,
    pub provenance: Provenance,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ModelBundle {
    pub fn validate(&self) -> Result<()> {
        if self.version != BUNDLE_VERSION {
            return Err(Error::Format(format!(
                "unsupported bundle version `{}` (expected `{BUNDLE_VERSION}`)",
                self.version
            )));
        }
        let mut seen = HashSet::new();
        let bins = self.schedule.lambda_tau.len();
        for f in &self.flows {
            if !seen.insert(f.id) {
                return Err(Error::Format(format!("duplicate flow id {}", f.id)));
            }
            if f.track.len() < 2 || f.windows.len() != f.track.len() {
                return Err(Error::Format(format!("flow {} has inconsistent track and windows", f.id)));
            }
            if f.rate_share.len() != bins {
                return Err(Error::Format(format!(
                    "flow {} has {} rate shares for {bins} time bins",
                    f.id,
                    f.rate_share.len()
                )));
            }
        }
        if self.outlier_share.len() != bins || self.outliers.values.len() != self.outliers.grid.len() {
            return Err(Error::Format("outlier share or density has the wrong size".into()));
        }
        Ok(())
    }

    pub fn flow_ids(&self) -> Vec<usize> {
        self.flows.iter().map(|f| f.id).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    /// sha256 of the serialized bundle.
    pub fn model_hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_json()?.as_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
