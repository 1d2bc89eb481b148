//! Run configuration loaded from a TOML file. Command-line flags override
//! file values; `SPIN_SEED` overrides the file's seed.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::bath::BathConfig;
use crate::error::{Error, Result};
use crate::spin_model::{FieldConfig, IsotopeTable, PhysicalConstants};
use crate::tcl::DEFAULT_GRID_POINTS;

pub const SEED_ENV: &str = "SPIN_SEED";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub geometry: Option<PathBuf>,
    pub hyperfine: Option<PathBuf>,
    pub bath: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub horizon_us: f64,
    pub points: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            horizon_us: 20.0,
            points: DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub field: FieldConfig,
    pub constants: PhysicalConstants,
    /// Entries added to or replacing the built-in isotope table.
    pub isotopes: Option<IsotopeTable>,
    pub inputs: Inputs,
    pub protocol: ProtocolConfig,
    /// tcl2, tcl4 or both
    pub method: Option<String>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub include_hetero: bool,
    /// Electron position in the molecule frame, Å.
    pub electron: [f64; 3],
    pub bath: BathConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(dir) = base {
            for p in [&mut cfg.inputs.geometry, &mut cfg.inputs.hyperfine, &mut cfg.inputs.bath, &mut cfg.output]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Relative paths inside the file resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn isotope_table(&self) -> IsotopeTable {
        let mut table = IsotopeTable::default();
        if let Some(extra) = &self.isotopes {
            table.merge(extra);
        }
        table
    }

    /// Seed from `SPIN_SEED` if set, else the configured one.
    pub fn resolved_seed(&self) -> Result<Option<u64>> {
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
            Err(_) => Ok(self.seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        if !(self.protocol.horizon_us > 0.0 && self.protocol.horizon_us.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {} us", self.protocol.horizon_us)));
        }
        if self.protocol.points < 2 {
            return Err(Error::Config("time grid needs at least 2 points".into()));
        }
        for p in [&self.inputs.geometry, &self.inputs.hyperfine, &self.inputs.bath]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        self.bath.validate()
    }
}
