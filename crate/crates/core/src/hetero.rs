//! Second-order echo exponent for a heteronuclear pair (one spin with I ≥ ½
//! and a spin-½ partner, Larmor frequencies allowed to differ).
//!
//! The exponent is the pulse-weighted double time integral of the hyperfine
//! field correlation function,
//!
//! ```text
//! W(t) = 2 ∫₀ᵗ ds ∫₀ᵗ ds₁ h(s) h(s₁) Re⟨V(s) V(s₁)⟩,   V = A₁I₁ᶻ + A₂I₂ᶻ,
//! ```
//!
//! evaluated over the maximally mixed pair state, with V(s) in the
//! interaction picture of the pair Hamiltonian G returned by
//! [`hetero_hamiltonian`]. The full square equals twice the real part of the
//! time-ordered integral ∫₀ᵗ ds ∫₀ˢ ds₁. In the eigenbasis of G every
//! frequency component integrates in closed form:
//!
//! ```text
//! ∫₀ᵗ h(s) e^{iωs} ds = −(e^{iωt/2} − 1)² / (iω)
//! W(t) = (32 / D) Σ_{mn} |V_mn|² sin⁴(ω_mn t / 4) / ω_mn²
//! ```

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::ProductSpace;
use crate::spin_model::{
    dipolar_coupling, FieldConfig, IsotopeTable, NuclearSpin, PhysicalConstants, SpinQuantum,
};

pub const PAIR_DIMENSION_CAP: usize = 64;

/// Frequencies below this (rad·s⁻¹) are treated as exactly degenerate.
const DEGENERATE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct HeteroPair {
    pub spin1: NuclearSpin,
    /// Must be spin-½.
    pub spin2: NuclearSpin,
    pub b: f64,
    pub field: FieldConfig,
}

impl HeteroPair {
    pub fn new(spin1: NuclearSpin, spin2: NuclearSpin, b: f64, field: FieldConfig) -> Result<Self> {
        if !spin2.spin.is_half() {
            return Err(Error::Domain(format!(
                "second spin of a heteronuclear pair must be spin-1/2, got I = {}",
                spin2.spin
            )));
        }
        let pair = Self {
            spin1,
            spin2,
            b,
            field,
        };
        pair.check_cap()?;
        Ok(pair)
    }

    /// Orders the spins so the spin-½ one comes second and takes b from the
    /// point-dipole formula. Fails when neither spin is spin-½.
    pub fn from_spins(
        a: &NuclearSpin,
        b: &NuclearSpin,
        field: FieldConfig,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        let coupling = dipolar_coupling(a, b, constants)?;
        let (s1, s2) = if b.spin.is_half() { (a, b) } else { (b, a) };
        Self::new(s1.clone(), s2.clone(), coupling, field)
    }

    fn check_cap(&self) -> Result<()> {
        let dim = self.dimension();
        if dim > PAIR_DIMENSION_CAP {
            return Err(Error::DimensionCap {
                dim,
                cap: PAIR_DIMENSION_CAP,
            });
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.spin1.spin.multiplicity() * self.spin2.spin.multiplicity()
    }

    fn space(&self) -> ProductSpace {
        ProductSpace::new(&[self.spin1.spin, self.spin2.spin])
    }
}

/// G = Σ_k (ω_k − ω̄ + A_k) I_kᶻ + 2b(I₁ᶻI₂ᶻ − ¼(I₁⁺I₂⁻ + I₁⁻I₂⁺)).
///
/// Same normalization as the electron-up block of the exact engine. The
/// mean Larmor frequency ω̄ is removed; it commutes with G and with V.
pub fn hetero_hamiltonian(pair: &HeteroPair) -> Result<DMatrix<f64>> {
    pair.check_cap()?;
    let space = pair.space();
    let w1 = pair.field.larmor(pair.spin1.gamma);
    let w2 = pair.field.larmor(pair.spin2.gamma);
    let mean = 0.5 * (w1 + w2);
    Ok(space.iz(0) * (w1 - mean + pair.spin1.azz)
        + space.iz(1) * (w2 - mean + pair.spin2.azz)
        + space.dipolar(0, 1) * pair.b)
}

/// Spectral form of the pair's correlation function, reusable across times.
#[derive(Debug, Clone)]
pub struct HeteroCorrelation {
    /// (ω_mn, (32/D)|V_mn|²) for every non-degenerate m ≠ n.
    components: Vec<(f64, f64)>,
}

impl HeteroCorrelation {
    pub fn new(pair: &HeteroPair) -> Result<Self> {
        let g = hetero_hamiltonian(pair)?;
        let space = pair.space();
        let v = space.iz(0) * pair.spin1.azz + space.iz(1) * pair.spin2.azz;
        let eig = SymmetricEigen::new(g);
        let u = &eig.eigenvectors;
        let v_eig = u.transpose() * v * u;
        let d = v_eig.nrows();
        let mut components = Vec::new();
        for m in 0..d {
            for n in 0..d {
                let omega = eig.eigenvalues[m] - eig.eigenvalues[n];
                let weight = v_eig[(m, n)] * v_eig[(m, n)];
                if omega.abs() > DEGENERATE && weight > 0.0 {
                    components.push((omega, 32.0 * weight / d as f64));
                }
            }
        }
        components.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { components })
    }

    pub fn w(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|&(omega, weight)| {
                let s = (0.25 * omega * t).sin();
                let s2 = s * s;
                weight * s2 * s2 / (omega * omega)
            })
            .sum()
    }

    /// Largest W on [0, horizon], sampled on a uniform grid plus the first
    /// peak of every frequency component.
    pub fn max_w(&self, horizon: f64, samples: usize) -> f64 {
        let mut candidates: Vec<f64> = (0..samples.max(2))
            .map(|i| horizon * i as f64 / (samples.max(2) - 1) as f64)
            .collect();
        candidates.extend(
            self.components
                .iter()
                .map(|&(omega, _)| 2.0 * PI / omega.abs())
                .filter(|&t| t <= horizon),
        );
        candidates
            .par_iter()
            .map(|&t| self.w(t))
            .reduce(|| 0.0, f64::max)
    }
}

pub fn w_hetero(pair: &HeteroPair, t: f64) -> Result<f64> {
    Ok(HeteroCorrelation::new(pair)?.w(t))
}

/// Geometry and hyperfine defaults for the isotope comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotopeReportParams {
    pub field: FieldConfig,
    /// Å
    pub distance: f64,
    /// Angle of the internuclear vector from z, radians.
    pub theta: f64,
    /// Hyperfine on the proton, rad·s⁻¹; the partner gets zero.
    pub delta: f64,
    /// s
    pub horizon: f64,
    pub samples: usize,
}

impl Default for IsotopeReportParams {
    fn default() -> Self {
        Self {
            field: FieldConfig::default(),
            distance: 3.0,
            theta: 0.0,
            delta: 1.0e5,
            horizon: 100e-6,
            samples: 4001,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsotopeRow {
    pub isotope: String,
    pub spin: SpinQuantum,
    pub b: f64,
    pub max_w: f64,
    /// Decimal exponent of `max_w`; None when it is exactly zero.
    pub order: Option<i32>,
}

pub fn order_of_magnitude(x: f64) -> Option<i32> {
    (x > 0.0).then(|| x.log10().floor() as i32)
}

/// Maximum heteronuclear exponent for each isotope paired with a proton.
pub fn isotope_report(
    isotopes: &[&str],
    params: &IsotopeReportParams,
    table: &IsotopeTable,
    constants: &PhysicalConstants,
) -> Result<Vec<IsotopeRow>> {
    isotopes
        .par_iter()
        .map(|&tag| {
            let data = table.get(tag)?;
            let partner = NuclearSpin::from_table(table, 1, tag, [0.0; 3], 0.0)?;
            let position = [
                params.distance * params.theta.sin(),
                0.0,
                params.distance * params.theta.cos(),
            ];
            let proton = NuclearSpin::from_table(table, 2, "1H", position, params.delta)?;
            let pair = HeteroPair::from_spins(&partner, &proton, params.field, constants)?;
            let max_w = HeteroCorrelation::new(&pair)?.max_w(params.horizon, params.samples);
            Ok(IsotopeRow {
                isotope: tag.to_string(),
                spin: data.spin,
                b: pair.b,
                max_w,
                order: order_of_magnitude(max_w),
            })
        })
        .collect()
}

pub const REPORT_ISOTOPES: [&str; 4] = ["2D", "63Cu", "55Mn", "51V"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::SpinSystem;
    use crate::spin_model::PairParams;
    use crate::tcl::w_tcl2;
    use approx::assert_relative_eq;

    fn spin(tag: &str, id: u32, z: f64, azz: f64) -> NuclearSpin {
        NuclearSpin::from_table(&IsotopeTable::default(), id, tag, [0.0, 0.0, z], azz).unwrap()
    }

    #[test]
    fn homonuclear_block_matches_exact_engine() {
        let (a1, a2, b) = (4.0e4, -1.0e4, 2.2e4);
        let field = FieldConfig::default();
        let pair = HeteroPair::new(spin("1H", 1, 0.0, a1), spin("1H", 2, 2.0, a2), b, field).unwrap();
        let g = hetero_hamiltonian(&pair).unwrap();
        let system = SpinSystem::new(field, vec![pair.spin1.clone(), pair.spin2.clone()])
            .with_coupling(0, 1, b)
            .unwrap();
        let (up, _) = system.conditional_hamiltonians().unwrap();
        assert!((g - up).abs().max() < 1e-9);
    }

    #[test]
    fn dimensions() {
        let field = FieldConfig::default();
        let pair = HeteroPair::new(spin("2D", 1, 0.0, 0.0), spin("1H", 2, 2.0, 0.0), 1e3, field).unwrap();
        assert_eq!(hetero_hamiltonian(&pair).unwrap().shape(), (6, 6));
        let v = HeteroPair::new(spin("51V", 1, 0.0, 0.0), spin("1H", 2, 2.0, 0.0), 1e3, field).unwrap();
        assert_eq!(v.dimension(), 16);
        assert!(HeteroPair::new(spin("1H", 1, 0.0, 0.0), spin("2D", 2, 2.0, 0.0), 1e3, field).is_err());
    }

    #[test]
    fn ladder_flip_flop_elements() {
        let field = FieldConfig::default();
        let b = 3.0e3;
        for tag in ["2D", "63Cu", "55Mn", "51V"] {
            let pair = HeteroPair::new(spin(tag, 1, 0.0, 0.0), spin("1H", 2, 2.0, 0.0), b, field).unwrap();
            let g = hetero_hamiltonian(&pair).unwrap();
            let i1 = pair.spin1.spin.value();
            // |m₁, ↓⟩ → |m₁−1, ↑⟩ ; basis index = 2·(I₁ − m₁) + (½ − m₂)
            let mut m1 = i1;
            while m1 > -i1 + 0.5 {
                let from = 2 * (i1 - m1) as usize + 1;
                let to = 2 * (i1 - (m1 - 1.0)) as usize;
                let m2 = -0.5_f64;
                let expected = -(b / 2.0)
                    * (i1 * (i1 + 1.0) - m1 * (m1 - 1.0)).sqrt()
                    * (0.75 - m2 * (m2 + 1.0)).sqrt();
                assert_relative_eq!(g[(to, from)], expected, max_relative = 1e-12);
                m1 -= 1.0;
            }
        }
    }

    #[test]
    fn homonuclear_reduction() {
        let field = FieldConfig::default();
        let (a1, a2, b) = (6.0e4, 1.0e4, -3.5e4);
        let pair = HeteroPair::new(spin("1H", 1, 0.0, a1), spin("1H", 2, 2.0, a2), b, field).unwrap();
        let corr = HeteroCorrelation::new(&pair).unwrap();
        let pp = PairParams::new((1, 2), a1 - a2, b);
        for i in 1..=50 {
            let t = i as f64 * 1.3e-5 / 50.0;
            let (w, reference) = (corr.w(t), w_tcl2(&pp, t));
            assert!((w - reference).abs() <= 1e-9 * reference.abs().max(1e-12), "t={t}: {w} vs {reference}");
        }
    }

    #[test]
    fn zero_coupling_gives_zero() {
        let field = FieldConfig::default();
        let pair = HeteroPair::new(spin("51V", 1, 0.0, 3e5), spin("1H", 2, 2.0, 1e5), 0.0, field).unwrap();
        let corr = HeteroCorrelation::new(&pair).unwrap();
        for t in [0.0, 1e-6, 3.3e-5, 1e-4] {
            assert_eq!(corr.w(t), 0.0);
        }
    }

    #[test]
    fn suppression_with_detuning() {
        let b = 8.0e3;
        let mut last = f64::INFINITY;
        for gamma in [2.6752218744e8, 2.5e8, 2.0e8, 1.2e8, 4.0e7] {
            let mut s1 = spin("2D", 1, 0.0, 0.0);
            s1.gamma = gamma;
            let pair = HeteroPair::new(s1, spin("1H", 2, 2.0, 1.0e5), b, FieldConfig::default()).unwrap();
            let max = HeteroCorrelation::new(&pair).unwrap().max_w(2e-5, 2001);
            assert!(max >= 0.0 && max <= last, "{max} > {last}");
            last = max;
        }
    }

    #[test]
    fn report_shape() {
        let table = IsotopeTable::default();
        let c = PhysicalConstants::default();
        assert!(isotope_report(&[], &IsotopeReportParams::default(), &table, &c).unwrap().is_empty());
        assert!(matches!(
            isotope_report(&["99Xx"], &IsotopeReportParams::default(), &table, &c),
            Err(Error::Config(_))
        ));
        assert_eq!(order_of_magnitude(3.2e-12), Some(-12));
        assert_eq!(order_of_magnitude(0.0), None);
    }
}
