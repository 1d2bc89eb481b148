//! Randomized proton bath in a solvent cube around the molecule.
//!
//! Sites are drawn uniformly in the cube with a ChaCha20 stream seeded from
//! a 64-bit integer (`rand_chacha::ChaCha20Rng::seed_from_u64`), which is
//! portable across platforms. A candidate is rejected when it falls inside
//! the exclusion sphere around the electron or closer than
//! [`MIN_PROTON_SEPARATION`] to an accepted site. Hyperfine couplings come
//! from the electron–proton point dipole.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin_model::{dipolar_geometry, IsotopeTable, NuclearSpin, PhysicalConstants};

pub const AVOGADRO: f64 = 6.02214076e23;
/// Å
pub const MIN_PROTON_SEPARATION: f64 = 1.0;
/// Candidate draws allowed per accepted site.
pub const MAX_ATTEMPTS_PER_SITE: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BathConfig {
    /// Cube edge, Å.
    pub edge: f64,
    /// Cube center, Å.
    pub center: [f64; 3],
    /// g·cm⁻³
    pub solvent_density: f64,
    /// g·mol⁻¹
    pub solvent_molar_mass: f64,
    pub h_sites_per_molecule: u32,
    /// Fraction of solvent hydrogen sites carrying ¹H.
    pub protonation_fraction: f64,
    /// Multiplier on `protonation_fraction` for undeuterated counter-ions.
    pub counter_ion_boost: f64,
    /// Å
    pub exclusion_radius: f64,
    pub seed: u64,
    /// Id of the first generated spin.
    pub first_id: u32,
}

impl Default for BathConfig {
    fn default() -> Self {
        // DMF-d7
        Self {
            edge: 40.0,
            center: [0.0; 3],
            solvent_density: 0.95,
            solvent_molar_mass: 80.0,
            h_sites_per_molecule: 7,
            protonation_fraction: 0.01,
            counter_ion_boost: 2.0,
            exclusion_radius: 6.0,
            seed: 0,
            first_id: 10_000,
        }
    }
}

impl BathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.edge > 0.0 && self.edge.is_finite()) {
            return Err(Error::Config(format!("cube edge must be positive, got {}", self.edge)));
        }
        if !(0.0..=1.0).contains(&self.protonation_fraction) {
            return Err(Error::Config(format!(
                "protonation fraction {} outside [0, 1]",
                self.protonation_fraction
            )));
        }
        if !(self.counter_ion_boost >= 0.0) {
            return Err(Error::Config("counter-ion boost must be non-negative".into()));
        }
        if !(self.exclusion_radius >= 0.0 && self.exclusion_radius < self.edge / 2.0) {
            return Err(Error::Config(format!(
                "exclusion radius {} must lie in [0, edge/2)",
                self.exclusion_radius
            )));
        }
        if !(self.solvent_density > 0.0 && self.solvent_molar_mass > 0.0) {
            return Err(Error::Config("solvent density and molar mass must be positive".into()));
        }
        Ok(())
    }

    /// Protonation fraction after the counter-ion boost, capped at 1.
    pub fn effective_fraction(&self) -> f64 {
        (self.protonation_fraction * self.counter_ion_boost).min(1.0)
    }
}

/// Number of ¹H sites: solvent molecules in the cube × H sites × fraction.
pub fn site_count(config: &BathConfig) -> usize {
    // Å³ → cm³
    let volume = (config.edge * 1e-8).powi(3);
    let molecules = config.solvent_density / config.solvent_molar_mass * AVOGADRO * volume;
    let n = molecules * config.h_sites_per_molecule as f64 * config.effective_fraction();
    n.round() as usize
}

/// A_zz = (μ₀/4π)·γ_e·γ_H·ħ·(3cos²θ − 1)/r³, θ from the z axis.
pub fn point_dipole_azz(
    electron: [f64; 3],
    nucleus: [f64; 3],
    gamma_nucleus: f64,
    c: &PhysicalConstants,
) -> Result<f64> {
    let (r, cos2) = dipolar_geometry(electron, nucleus)
        .map_err(|_| Error::Domain("nucleus sits on the electron".into()))?;
    Ok(c.mu0_over_4pi * c.gamma_e * gamma_nucleus * c.hbar * (3.0 * cos2 - 1.0) / (r * r * r))
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

pub fn generate_bath(
    config: &BathConfig,
    electron: [f64; 3],
    table: &IsotopeTable,
    constants: &PhysicalConstants,
) -> Result<Vec<NuclearSpin>> {
    config.validate()?;
    let half = config.edge / 2.0;
    if (0..3).any(|i| (electron[i] - config.center[i]).abs() > half) {
        return Err(Error::Config(format!("electron position {electron:?} lies outside the cube")));
    }
    let gamma_h = table.get("1H")?.gamma;
    let n = site_count(config);
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let excl2 = config.exclusion_radius * config.exclusion_radius;
    let min2 = MIN_PROTON_SEPARATION * MIN_PROTON_SEPARATION;

    let mut positions: Vec<[f64; 3]> = Vec::with_capacity(n);
    while positions.len() < n {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS_PER_SITE {
            let p: [f64; 3] =
                std::array::from_fn(|i| config.center[i] + config.edge * (rng.random::<f64>() - 0.5));
            let d_e = dist2(p, electron);
            if d_e < excl2 || d_e == 0.0 {
                continue;
            }
            if positions.iter().any(|&q| dist2(p, q) < min2) {
                continue;
            }
            positions.push(p);
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Generation(format!(
                "placed {} of {n} sites; no free position after {MAX_ATTEMPTS_PER_SITE} draws",
                positions.len()
            )));
        }
    }

    positions
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let azz = point_dipole_azz(electron, p, gamma_h, constants)?;
            NuclearSpin::from_table(table, config.first_id + i as u32, "1H", p, azz)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn site_count_dmf() {
        let cfg = BathConfig {
            counter_ion_boost: 1.0,
            ..BathConfig::default()
        };
        // (0.95/80)·6.022e23·6.4e−20·7·0.01
        let oracle: f64 = 0.95 / 80.0 * 6.02214076e23 * 6.4e-20 * 7.0 * 0.01;
        assert_eq!(site_count(&cfg), oracle.round() as usize);
        assert_eq!(site_count(&cfg), 32);

        let none = BathConfig {
            protonation_fraction: 0.0,
            ..cfg.clone()
        };
        assert_eq!(site_count(&none), 0);

        let big = BathConfig {
            protonation_fraction: 0.5,
            counter_ion_boost: 1.0,
            ..cfg.clone()
        };
        let doubled = BathConfig {
            edge: 80.0,
            ..big.clone()
        };
        let (a, b) = (site_count(&big) as f64, site_count(&doubled) as f64);
        assert!((b / a - 8.0).abs() < 8.0 / a);
    }

    #[test]
    fn boost_doubles_default_fraction() {
        assert_eq!(site_count(&BathConfig::default()), 64);
    }

    #[test]
    fn azz_examples() {
        let c = PhysicalConstants::default();
        let g = 2.6752218744e8;
        let on_axis = point_dipole_azz([0.0; 3], [0.0, 0.0, 5.0], g, &c).unwrap();
        let oracle = 1e-7 * 1.76085963e11 * g * 1.054571817e-34 * 2.0 / (5e-10_f64).powi(3);
        assert_relative_eq!(on_axis.abs(), oracle, max_relative = 1e-14);
        assert_relative_eq!(on_axis.abs(), 7.9e6, max_relative = 0.01);

        let far = point_dipole_azz([0.0; 3], [0.0, 0.0, 10.0], g, &c).unwrap();
        assert_relative_eq!(far, on_axis / 8.0, max_relative = 1e-14);

        let cos = (1.0_f64 / 3.0).sqrt();
        let sin = (2.0_f64 / 3.0).sqrt();
        let magic = point_dipole_azz([0.0; 3], [4.0 * sin, 0.0, 4.0 * cos], g, &c).unwrap();
        assert!(magic.abs() < 1e-6);
        assert!(point_dipole_azz([1.0; 3], [1.0; 3], g, &c).is_err());
    }

    #[test]
    fn azz_decreases_with_distance() {
        let c = PhysicalConstants::default();
        let dir = [0.3_f64, -0.5, 0.8];
        let mut last = f64::INFINITY;
        for i in 1..40 {
            let r = 2.0 + i as f64 * 0.5;
            let a = point_dipole_azz([0.0; 3], dir.map(|x| x * r), 2.6752218744e8, &c).unwrap().abs();
            assert!(a < last);
            last = a;
        }
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let table = IsotopeTable::default();
        let c = PhysicalConstants::default();
        let cfg = BathConfig {
            seed: 42,
            ..BathConfig::default()
        };
        let a = generate_bath(&cfg, [0.0; 3], &table, &c).unwrap();
        let b = generate_bath(&cfg, [0.0; 3], &table, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), site_count(&cfg));
        for s in &a {
            assert!(s.position.iter().all(|x| x.abs() <= 20.0));
            assert!(dist2(s.position, [0.0; 3]).sqrt() >= cfg.exclusion_radius);
        }
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                assert!(dist2(a[i].position, a[j].position).sqrt() >= MIN_PROTON_SEPARATION);
            }
        }
        let other = generate_bath(&BathConfig { seed: 43, ..cfg }, [0.0; 3], &table, &c).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn config_errors() {
        let table = IsotopeTable::default();
        let c = PhysicalConstants::default();
        let bad = BathConfig {
            exclusion_radius: 20.0,
            ..BathConfig::default()
        };
        assert!(matches!(generate_bath(&bad, [0.0; 3], &table, &c), Err(Error::Config(_))));
        assert!(generate_bath(&BathConfig::default(), [30.0, 0.0, 0.0], &table, &c).is_err());

        let crowded = BathConfig {
            edge: 6.0,
            exclusion_radius: 0.0,
            protonation_fraction: 1.0,
            counter_ion_boost: 1.0,
            h_sites_per_molecule: 1000,
            ..BathConfig::default()
        };
        assert!(matches!(generate_bath(&crowded, [0.0; 3], &table, &c), Err(Error::Generation(_))));
    }
}
