use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HwError;
use crate::arch::LayerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreKind {
    Compute,
    Pooling,
    Simd,
}

impl CoreKind {
    /// Matrix layers run on compute cores, pooling on the pooling core, and
    /// elementwise and softmax layers on the SIMD core.
    pub fn runs(self, kind: LayerKind) -> bool {
        match self {
            CoreKind::Compute => kind.is_matrix(),
            CoreKind::Pooling => kind == LayerKind::Pool,
            CoreKind::Simd => matches!(kind, LayerKind::ElementwiseAdd | LayerKind::Softmax),
        }
    }
}

/// Energy constants in pJ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConstants {
    /// Per 8-bit MAC; scales with `(b/8)^2`.
    pub e_mac8: f64,
    pub e_sram: f64,
    pub e_dram: f64,
    /// Per bit per hop.
    pub e_noc: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        Self {
            e_mac8: 0.2,
            e_sram: 0.05,
            e_dram: 3.0,
            e_noc: 0.1,
        }
    }
}

/// Multi-core accelerator description.
///
/// Cores are indexed compute cores first, then the pooling core, then the
/// SIMD core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceleratorSpec {
    pub compute_cores: usize,
    pub macs_per_cycle: u64,
    /// Array rows, mapped to output channels.
    pub array_rows: u64,
    /// Array columns, mapped to input channels.
    pub array_cols: u64,
    pub pooling_core: bool,
    pub simd_core: bool,
    pub sram_bytes: u64,
    pub offchip_bits_per_cycle: u64,
    pub noc_bits_per_cycle: u64,
    pub energy: EnergyConstants,
    /// Full hop-count matrix over all cores. When absent, compute cores form
    /// a ring and auxiliary cores sit one hop from every other core.
    pub noc_hops: Option<Vec<Vec<u32>>>,
}

impl Default for AcceleratorSpec {
    fn default() -> Self {
        Self {
            compute_cores: 4,
            macs_per_cycle: 512,
            array_rows: 16,
            array_cols: 32,
            pooling_core: true,
            simd_core: true,
            sram_bytes: 2 * 1024 * 1024,
            offchip_bits_per_cycle: 64,
            noc_bits_per_cycle: 64,
            energy: EnergyConstants::default(),
            noc_hops: None,
        }
    }
}

impl AcceleratorSpec {
    pub fn from_toml(text: &str) -> Result<Self, HwError> {
        let spec: Self = toml::from_str(text).map_err(|e| HwError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HwError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HwError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("accelerator spec serializes")
    }

    pub fn core_count(&self) -> usize {
        self.compute_cores + self.pooling_core as usize + self.simd_core as usize
    }

    pub fn cores(&self) -> Vec<CoreKind> {
        let mut v = vec![CoreKind::Compute; self.compute_cores];
        if self.pooling_core {
            v.push(CoreKind::Pooling);
        }
        if self.simd_core {
            v.push(CoreKind::Simd);
        }
        v
    }

    pub fn core_kind(&self, core: usize) -> Option<CoreKind> {
        self.cores().get(core).copied()
    }

    /// Cores able to run a layer of the given kind, in index order.
    pub fn compatible_cores(&self, kind: LayerKind) -> Vec<usize> {
        self.cores()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.runs(kind))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn hops(&self, a: usize, b: usize) -> u32 {
        if a == b {
            return 0;
        }
        if let Some(m) = &self.noc_hops {
            return m[a][b];
        }
        let n = self.compute_cores;
        if a < n && b < n {
            let d = a.abs_diff(b);
            d.min(n - d) as u32
        } else {
            1
        }
    }

    pub fn sram_bits(&self) -> u64 {
        self.sram_bytes * 8
    }

    pub fn validate(&self) -> Result<(), HwError> {
        let bad = |m: String| Err(HwError::InvalidSpec(m));
        if self.compute_cores == 0 {
            return bad("at least one compute core is required".into());
        }
        for (name, v) in [
            ("macs_per_cycle", self.macs_per_cycle),
            ("array_rows", self.array_rows),
            ("array_cols", self.array_cols),
            ("sram_bytes", self.sram_bytes),
            ("offchip_bits_per_cycle", self.offchip_bits_per_cycle),
            ("noc_bits_per_cycle", self.noc_bits_per_cycle),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.array_rows * self.array_cols != self.macs_per_cycle {
            return bad(format!(
                "array {}x{} does not match {} MACs/cycle",
                self.array_rows, self.array_cols, self.macs_per_cycle
            ));
        }
        let e = &self.energy;
        for (name, v) in [
            ("e_mac8", e.e_mac8),
            ("e_sram", e.e_sram),
            ("e_dram", e.e_dram),
            ("e_noc", e.e_noc),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("energy constant {name} must be positive"));
            }
        }
        if let Some(m) = &self.noc_hops {
            let n = self.core_count();
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return bad(format!("hop matrix must be {n}x{n}"));
            }
            for a in 0..n {
                for b in 0..n {
                    if (a == b) != (m[a][b] == 0) {
                        return bad(format!("hop count {a}->{b} must be zero exactly on the diagonal"));
                    }
                }
            }
        }
        Ok(())
    }
}
