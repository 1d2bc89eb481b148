//! Physical entities of the central-spin problem: nuclear spins, the static
//! field, the constants table, and the per-pair parameters (Δ, b, α², f) that
//! drive the closed-form echo envelopes.
//!
//! Units: couplings and frequencies in rad·s⁻¹, positions in Å at the
//! interface and meters inside the coupling formulas.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HBAR: f64 = 1.054571817e-34;
pub const MU0_OVER_4PI: f64 = 1e-7;
pub const GAMMA_E: f64 = -1.76085963e11;
pub const ANGSTROM: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mu0_over_4pi: f64,
    pub gamma_e: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: HBAR,
            mu0_over_4pi: MU0_OVER_4PI,
            gamma_e: GAMMA_E,
        }
    }
}

/// Spin quantum number stored as `2I`, so half-integers are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinQuantum(u32);

impl SpinQuantum {
    pub const HALF: SpinQuantum = SpinQuantum(1);

    pub fn from_twice(twice: u32) -> Result<Self> {
        if twice == 0 {
            return Err(Error::Domain("spin quantum number must be at least 1/2".into()));
        }
        Ok(SpinQuantum(twice))
    }

    pub fn from_f64(value: f64) -> Result<Self> {
        let twice = 2.0 * value;
        if !twice.is_finite() || twice < 0.5 || (twice - twice.round()).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "spin quantum number {value} is not a positive multiple of 1/2"
            )));
        }
        Self::from_twice(twice.round() as u32)
    }

    pub fn twice(self) -> u32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    /// `2I + 1`.
    pub fn multiplicity(self) -> usize {
        self.0 as usize + 1
    }

    pub fn is_half(self) -> bool {
        self.0 == 1
    }
}

impl fmt::Display for SpinQuantum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl Serialize for SpinQuantum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for SpinQuantum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        SpinQuantum::from_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotopeData {
    pub spin: SpinQuantum,
    /// rad·s⁻¹·T⁻¹
    pub gamma: f64,
}

/// Isotope tag → (I, γ). Tags look like `1H`, `2D`, `51V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IsotopeTable(BTreeMap<String, IsotopeData>);

impl Default for IsotopeTable {
    fn default() -> Self {
        let half = SpinQuantum(1);
        let entries = [
            ("1H", half, 2.6752218744e8),
            ("2D", SpinQuantum(2), 4.10663e7),
            ("51V", SpinQuantum(7), 7.0455e7),
            ("55Mn", SpinQuantum(5), 6.6453e7),
            ("63Cu", SpinQuantum(3), 7.1118e7),
        ];
        IsotopeTable(
            entries
                .into_iter()
                .map(|(tag, spin, gamma)| (tag.to_string(), IsotopeData { spin, gamma }))
                .collect(),
        )
    }
}

impl IsotopeTable {
    pub fn get(&self, tag: &str) -> Result<IsotopeData> {
        self.0
            .get(tag)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown isotope `{tag}`")))
    }

    pub fn insert(&mut self, tag: impl Into<String>, data: IsotopeData) {
        self.0.insert(tag.into(), data);
    }

    /// Later entries win.
    pub fn merge(&mut self, other: &IsotopeTable) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), *v);
        }
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

/// Chemical element of an isotope tag, with deuterium folded into hydrogen.
pub fn element_of(tag: &str) -> String {
    let sym: String = tag.chars().skip_while(|c| c.is_ascii_digit()).collect();
    chemical_element(&sym)
}

/// Case-normalized element symbol (`cu` → `Cu`).
pub fn normalize_element(sym: &str) -> String {
    let mut chars = sym.trim().chars();
    let mut out = match chars.next() {
        Some(c) => c.to_ascii_uppercase().to_string(),
        None => return String::new(),
    };
    out.extend(chars.map(|c| c.to_ascii_lowercase()));
    out
}

/// Like [`normalize_element`] but D and T map to H.
pub fn chemical_element(sym: &str) -> String {
    let out = normalize_element(sym);
    if out == "D" || out == "T" {
        "H".to_string()
    } else {
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuclearSpin {
    pub id: u32,
    pub isotope: String,
    pub spin: SpinQuantum,
    /// rad·s⁻¹·T⁻¹, signed.
    pub gamma: f64,
    /// Å.
    pub position: [f64; 3],
    /// Hyperfine zz-component, rad·s⁻¹.
    pub azz: f64,
}

impl NuclearSpin {
    pub fn from_table(
        table: &IsotopeTable,
        id: u32,
        isotope: &str,
        position: [f64; 3],
        azz: f64,
    ) -> Result<Self> {
        let data = table.get(isotope)?;
        if position.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("spin {id} has a non-finite position")));
        }
        Ok(NuclearSpin {
            id,
            isotope: isotope.to_string(),
            spin: data.spin,
            gamma: data.gamma,
            position,
            azz,
        })
    }

    pub fn is_homonuclear_with(&self, other: &NuclearSpin) -> bool {
        self.isotope == other.isotope
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    /// Tesla, along z.
    pub b0: f64,
    pub gamma_e: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            b0: 0.35,
            gamma_e: GAMMA_E,
        }
    }
}

impl FieldConfig {
    pub fn new(b0: f64, gamma_e: f64) -> Result<Self> {
        let cfg = Self { b0, gamma_e };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b0 > 0.0 && self.b0.is_finite()) {
            return Err(Error::Config(format!("field B0 must be positive, got {}", self.b0)));
        }
        Ok(())
    }

    pub fn electron_larmor(&self) -> f64 {
        self.gamma_e * self.b0
    }

    pub fn larmor(&self, gamma: f64) -> f64 {
        gamma * self.b0
    }
}

/// Per-pair parameters of the flip-flop echo modulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairParams {
    pub ids: (u32, u32),
    pub delta: f64,
    pub b: f64,
    pub alpha_sq: f64,
    pub freq: f64,
}

impl PairParams {
    pub fn new(ids: (u32, u32), delta: f64, b: f64) -> Self {
        PairParams {
            ids,
            delta,
            b,
            alpha_sq: pair_amplitude(delta, b),
            freq: pair_frequency(delta, b),
        }
    }

    /// √(Δ² + b²).
    pub fn splitting(&self) -> f64 {
        self.delta.hypot(self.b)
    }
}

pub fn pair_delta(a_k: f64, a_l: f64) -> f64 {
    a_k - a_l
}

/// α² = (2Δb / (Δ² + b²))², zero when either argument vanishes.
pub fn pair_amplitude(delta: f64, b: f64) -> f64 {
    if delta == 0.0 || b == 0.0 {
        return 0.0;
    }
    // ratio form stays finite for extreme magnitudes
    let (big, small) = if delta.abs() >= b.abs() {
        (delta.abs(), b.abs())
    } else {
        (b.abs(), delta.abs())
    };
    let r = small / big;
    let s = 2.0 * r / (1.0 + r * r);
    (s * s).min(1.0)
}

pub fn pair_frequency(delta: f64, b: f64) -> f64 {
    0.25 * delta.hypot(b)
}

/// Separation in meters and cos²θ of the vector from `from` to `to`
/// relative to the z axis. Positions in Å.
pub(crate) fn dipolar_geometry(from: [f64; 3], to: [f64; 3]) -> Result<(f64, f64)> {
    let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    if !(r2 > 0.0) {
        return Err(Error::Domain(format!("coincident positions {from:?}")));
    }
    let cos2 = d[2] * d[2] / r2;
    Ok((r2.sqrt() * ANGSTROM, cos2))
}

/// b_kl = −(μ₀/4π)·γ_k·γ_l·ħ·(1 − 3cos²θ)/r³.
pub fn dipolar_coupling(k: &NuclearSpin, l: &NuclearSpin, c: &PhysicalConstants) -> Result<f64> {
    let (r, cos2) = dipolar_geometry(k.position, l.position)
        .map_err(|_| Error::Domain(format!("spins {} and {} share a position", k.id, l.id)))?;
    Ok(-c.mu0_over_4pi * k.gamma * l.gamma * c.hbar * (1.0 - 3.0 * cos2) / (r * r * r))
}

fn ordered_ids(k: &NuclearSpin, l: &NuclearSpin) -> (u32, u32) {
    (k.id.min(l.id), k.id.max(l.id))
}

/// One [`PairParams`] per unordered homonuclear pair, sorted by ids.
/// Heteronuclear pairs are left out; see [`heteronuclear_pairs`].
pub fn build_pairs(spins: &[NuclearSpin], c: &PhysicalConstants) -> Result<Vec<PairParams>> {
    if spins.len() < 2 {
        return Ok(Vec::new());
    }
    let nested: Vec<Vec<PairParams>> = (0..spins.len())
        .into_par_iter()
        .map(|i| {
            let k = &spins[i];
            spins[i + 1..]
                .iter()
                .filter(|l| k.is_homonuclear_with(l))
                .map(|l| {
                    let (lo, hi) = if k.id <= l.id { (k, l) } else { (l, k) };
                    let b = dipolar_coupling(lo, hi, c)?;
                    Ok(PairParams::new(ordered_ids(k, l), pair_delta(lo.azz, hi.azz), b))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut pairs: Vec<PairParams> = nested.into_iter().flatten().collect();
    pairs.sort_by_key(|p| p.ids);
    Ok(pairs)
}

/// Index pairs `(i, j)`, `i < j`, of spins with different isotopes.
pub fn heteronuclear_pairs(spins: &[NuclearSpin]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..spins.len() {
        for j in i + 1..spins.len() {
            if !spins[i].is_homonuclear_with(&spins[j]) {
                out.push((i, j));
            }
        }
    }
    out
}
