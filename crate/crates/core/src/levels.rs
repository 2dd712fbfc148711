//! Discrete voltage/frequency operating points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VfLevel {
    /// Supply voltage in volts.
    pub volts: f64,
    /// Clock frequency in GHz.
    pub ghz: f64,
}

impl VfLevel {
    pub const fn new(volts: f64, ghz: f64) -> Self {
        Self { volts, ghz }
    }

    /// The `V²f` product that dynamic power scales with.
    pub fn v2f(&self) -> f64 {
        self.volts * self.volts * self.ghz
    }
}

/// An ordered set of V-F levels, slowest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VfLevels(Vec<VfLevel>);

impl VfLevels {
    pub fn new(mut levels: Vec<VfLevel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config("V-F level set is empty".into()));
        }
        if levels.iter().any(|l| !(l.volts > 0.0 && l.ghz > 0.0)) {
            return Err(Error::Config("V-F levels need positive voltage and frequency".into()));
        }
        levels.sort_by(|a, b| a.ghz.total_cmp(&b.ghz));
        Ok(Self(levels))
    }

    /// 0.9/2.7, 1.0/3.0, 1.1/3.3 and 1.2/3.6 (V/GHz).
    pub fn standard() -> Self {
        Self(vec![
            VfLevel::new(0.9, 2.7),
            VfLevel::new(1.0, 3.0),
            VfLevel::new(1.1, 3.3),
            VfLevel::new(1.2, 3.6),
        ])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<&VfLevel> {
        self.0.get(index).ok_or(Error::UnknownLevel(index))
    }

    pub fn max(&self) -> &VfLevel {
        self.0.last().expect("level set is never empty")
    }

    pub fn as_slice(&self) -> &[VfLevel] {
        &self.0
    }

    /// Ratio of dynamic power at `index` to dynamic power at the top level.
    pub fn dynamic_ratio(&self, index: usize) -> Result<f64> {
        Ok(self.get(index)?.v2f() / self.max().v2f())
    }
}

impl Default for VfLevels {
    fn default() -> Self {
        Self::standard()
    }
}
