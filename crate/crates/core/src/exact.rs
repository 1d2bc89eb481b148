//! Dense-Hilbert-space Hahn echo for an electron coupled to a handful of
//! nuclei, plus Uhlmann fidelity against the closed-form envelopes.
//!
//! The Hamiltonian is written in the normalization under which a single pair
//! reproduces the closed-form envelope exactly:
//!
//! ```text
//! H = σᶻ ⊗ Σ_k A_k I_kᶻ + 𝟙 ⊗ [ Σ_k (ω_k − ω̄) I_kᶻ + Σ_{k<l} 2 b_kl (I_kᶻI_lᶻ − ¼(I_k⁺I_l⁻ + I_k⁻I_l⁺)) ]
//! ```
//!
//! σᶻ is the electron Pauli operator. ω_e is dropped (electron rotating
//! frame) and the mean nuclear Larmor frequency ω̄ is removed; Σ I_kᶻ
//! commutes with H, so the second frame change leaves the echo untouched.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::ProductSpace;
use crate::spin_model::{
    dipolar_coupling, pair_amplitude, FieldConfig, NuclearSpin, PairParams, PhysicalConstants,
};
use crate::tcl::{revival_time, w_tcl2, w_tcl4_exponent, EchoProtocol, EchoSeries, Method};

pub const DIMENSION_CAP: usize = 4096;
const PSD_TOLERANCE: f64 = 1e-12;
const BOLTZMANN: f64 = 1.380649e-23;

#[derive(Debug, Clone)]
pub struct SpinSystem {
    pub field: FieldConfig,
    pub nuclei: Vec<NuclearSpin>,
    /// (k, l) with k < l, indices into `nuclei`.
    couplings: BTreeMap<(usize, usize), f64>,
}

impl SpinSystem {
    pub fn new(field: FieldConfig, nuclei: Vec<NuclearSpin>) -> Self {
        Self {
            field,
            nuclei,
            couplings: BTreeMap::new(),
        }
    }

    /// Point-dipole b_kl for every pair of nuclei.
    pub fn with_dipolar_couplings(
        field: FieldConfig,
        nuclei: Vec<NuclearSpin>,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        let mut system = Self::new(field, nuclei);
        for k in 0..system.nuclei.len() {
            for l in k + 1..system.nuclei.len() {
                let b = dipolar_coupling(&system.nuclei[k], &system.nuclei[l], constants)?;
                system.couplings.insert((k, l), b);
            }
        }
        Ok(system)
    }

    pub fn set_coupling(&mut self, k: usize, l: usize, b: f64) -> Result<()> {
        let n = self.nuclei.len();
        if k == l || k >= n || l >= n {
            return Err(Error::Domain(format!("invalid coupling indices ({k}, {l})")));
        }
        if !b.is_finite() {
            return Err(Error::Domain(format!("coupling ({k}, {l}) is not finite")));
        }
        self.couplings.insert((k.min(l), k.max(l)), b);
        Ok(())
    }

    pub fn with_coupling(mut self, k: usize, l: usize, b: f64) -> Result<Self> {
        self.set_coupling(k, l, b)?;
        Ok(self)
    }

    pub fn coupling(&self, k: usize, l: usize) -> f64 {
        self.couplings
            .get(&(k.min(l), k.max(l)))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn nuclear_dimension(&self) -> usize {
        self.nuclei.iter().map(|n| n.spin.multiplicity()).product()
    }

    pub fn dimension(&self) -> usize {
        2 * self.nuclear_dimension()
    }

    fn check_cap(&self) -> Result<()> {
        // overflow-safe product
        let mut dim: usize = 2;
        for n in &self.nuclei {
            dim = dim.saturating_mul(n.spin.multiplicity());
            if dim > DIMENSION_CAP {
                return Err(Error::DimensionCap {
                    dim,
                    cap: DIMENSION_CAP,
                });
            }
        }
        Ok(())
    }

    fn space(&self) -> ProductSpace {
        let spins: Vec<_> = self.nuclei.iter().map(|n| n.spin).collect();
        ProductSpace::new(&spins)
    }

    fn mean_larmor(&self) -> f64 {
        if self.nuclei.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.nuclei.iter().map(|n| self.field.larmor(n.gamma)).sum();
        sum / self.nuclei.len() as f64
    }

    fn nuclear_block(&self, space: &ProductSpace, zeeman_offset: f64) -> DMatrix<f64> {
        let d = space.dimension();
        let mut h = DMatrix::zeros(d, d);
        for (k, n) in self.nuclei.iter().enumerate() {
            h += space.iz(k) * (self.field.larmor(n.gamma) - zeeman_offset);
        }
        for (&(k, l), &b) in &self.couplings {
            if b != 0.0 {
                h += space.dipolar(k, l) * b;
            }
        }
        h
    }

    fn hyperfine(&self, space: &ProductSpace) -> DMatrix<f64> {
        let d = space.dimension();
        self.nuclei
            .iter()
            .enumerate()
            .fold(DMatrix::zeros(d, d), |acc, (k, n)| acc + space.iz(k) * n.azz)
    }

    /// Nuclear Hamiltonians conditioned on the electron being in σᶻ = +1 and
    /// σᶻ = −1, in that order.
    pub fn conditional_hamiltonians(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_cap()?;
        let space = self.space();
        let base = self.nuclear_block(&space, self.mean_larmor());
        let hf = self.hyperfine(&space);
        Ok((&base + &hf, base - hf))
    }
}

/// Full 2D_n × 2D_n Hamiltonian, electron as the leading tensor factor.
pub fn build_hamiltonian(system: &SpinSystem) -> Result<DMatrix<f64>> {
    let (up, down) = system.conditional_hamiltonians()?;
    let dn = up.nrows();
    let mut h = DMatrix::zeros(2 * dn, 2 * dn);
    h.view_mut((0, 0), (dn, dn)).copy_from(&up);
    h.view_mut((dn, dn), (dn, dn)).copy_from(&down);
    Ok(h)
}

/// Initial nuclear state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NuclearState {
    /// Infinite-temperature limit.
    #[default]
    MaximallyMixed,
    /// Gibbs state of the electron-free nuclear Hamiltonian (lab-frame Zeeman).
    Thermal { temperature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectronDensityMatrix(Matrix2<Complex64>);

impl ElectronDensityMatrix {
    pub fn new(m: Matrix2<Complex64>) -> Result<Self> {
        let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-10 {
            return Err(Error::Domain(format!("density matrix is not Hermitian (|ρ−ρ†| = {herm:e})")));
        }
        let tr = m.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::Domain(format!("density matrix trace is {tr}")));
        }
        let m = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(m);
        if let Some(&min) = eig.eigenvalues.iter().min_by(|a, b| a.total_cmp(b)) {
            if min < -PSD_TOLERANCE {
                return Err(Error::Domain(format!("density matrix has eigenvalue {min:e}")));
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.0
    }

    pub fn coherence(&self) -> Complex64 {
        self.0[(0, 1)]
    }

    /// Same populations, coherence replaced by its magnitude.
    pub fn with_zero_phase(&self) -> Self {
        let mut m = self.0;
        let c = Complex64::new(m[(0, 1)].norm(), 0.0);
        m[(0, 1)] = c;
        m[(1, 0)] = c;
        Self(m)
    }
}

impl fmt::Display for ElectronDensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.0;
        write!(f, "[[{}, {}], [{}, {}]]", m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
    }
}

/// Propagator state for one spin system, reused across echo times.
pub struct EchoPropagator {
    up: SymmetricEigen<f64, nalgebra::Dyn>,
    down: SymmetricEigen<f64, nalgebra::Dyn>,
    /// None for the maximally mixed state.
    rho_n: Option<DMatrix<Complex64>>,
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

fn propagator(eig: &SymmetricEigen<f64, nalgebra::Dyn>, tau: f64) -> DMatrix<Complex64> {
    let v = to_complex(&eig.eigenvectors);
    let mut scaled = v.clone();
    for (j, &e) in eig.eigenvalues.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -e * tau);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= phase;
        }
    }
    scaled * v.adjoint()
}

impl EchoPropagator {
    pub fn new(system: &SpinSystem, state: NuclearState) -> Result<Self> {
        let (up, down) = system.conditional_hamiltonians()?;
        let rho_n = match state {
            NuclearState::MaximallyMixed => None,
            NuclearState::Thermal { temperature } => {
                if !(temperature > 0.0) {
                    return Err(Error::Domain(format!("temperature must be positive, got {temperature}")));
                }
                let space = system.space();
                let h = system.nuclear_block(&space, 0.0);
                let beta = crate::spin_model::HBAR / (BOLTZMANN * temperature);
                let eig = SymmetricEigen::new(h);
                let emin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                let weights: Vec<f64> = eig
                    .eigenvalues
                    .iter()
                    .map(|e| (-beta * (e - emin)).exp())
                    .collect();
                let z: f64 = weights.iter().sum();
                let v = &eig.eigenvectors;
                let d = v.nrows();
                let mut rho = DMatrix::zeros(d, d);
                for (j, w) in weights.iter().enumerate() {
                    let col = v.column(j);
                    rho += col * col.transpose() * (w / z);
                }
                Some(to_complex(&rho))
            }
        };
        Ok(Self {
            up: SymmetricEigen::new(up),
            down: SymmetricEigen::new(down),
            rho_n,
        })
    }

    fn nuclear_dimension(&self) -> usize {
        self.up.eigenvalues.len()
    }

    /// Reduced electron density matrix after the echo sequence of total
    /// duration `t`: π/2 preparation into |+⟩, free evolution t/2, ideal π
    /// about x, free evolution t/2.
    pub fn density_matrix(&self, t: f64) -> Result<ElectronDensityMatrix> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("echo time must be >= 0, got {t}")));
        }
        let u0 = propagator(&self.up, 0.5 * t);
        let u1 = propagator(&self.down, 0.5 * t);
        // ρ_e^{cd} = ½ Tr[U_c U_c̄ ρ_n (U_d U_d̄)†]
        let m01 = &u0 * &u1;
        let m10 = &u1 * &u0;
        let d = self.nuclear_dimension() as f64;
        let trace_with = |a: &DMatrix<Complex64>, b: &DMatrix<Complex64>| -> Complex64 {
            let ab = match &self.rho_n {
                Some(rho) => a * rho * b.adjoint(),
                None => a * b.adjoint() / Complex64::new(d, 0.0),
            };
            ab.trace() * 0.5
        };
        let m = Matrix2::new(
            trace_with(&m01, &m01),
            trace_with(&m01, &m10),
            trace_with(&m10, &m01),
            trace_with(&m10, &m10),
        );
        ElectronDensityMatrix::new(m)
    }

    pub fn coherence(&self, t: f64) -> Result<Complex64> {
        Ok(self.density_matrix(t)?.coherence())
    }
}

/// ρ_e⁰¹(t) for the infinite-temperature nuclear state.
pub fn hahn_echo_coherence(system: &SpinSystem, t: f64) -> Result<Complex64> {
    EchoPropagator::new(system, NuclearState::MaximallyMixed)?.coherence(t)
}

/// |ρ_e⁰¹(t)| / |ρ_e⁰¹(0)| on the protocol grid.
pub fn exact_echo_series(
    system: &SpinSystem,
    protocol: &EchoProtocol,
    state: NuclearState,
) -> Result<EchoSeries> {
    let prop = EchoPropagator::new(system, state)?;
    let norm = prop.coherence(0.0)?.norm();
    let values = protocol
        .times()
        .par_iter()
        .map(|&t| Ok(prop.coherence(t)?.norm() / norm))
        .collect::<Result<Vec<_>>>()?;
    Ok(EchoSeries {
        times: protocol.times().to_vec(),
        values,
        method: Method::Exact,
    })
}

/// Electron state implied by a closed-form envelope: populations ½, coherence
/// `initial_coherence · envelope`.
pub fn tcl_density_matrix(envelope: f64, initial_coherence: Complex64) -> Result<ElectronDensityMatrix> {
    if !(0.0..=1.0).contains(&envelope) {
        return Err(Error::Domain(format!("envelope {envelope} outside [0, 1]")));
    }
    let half = Complex64::new(0.5, 0.0);
    let c = initial_coherence * envelope;
    ElectronDensityMatrix::new(Matrix2::new(half, c, c.conj(), half))
}

fn psd_sqrt(m: &Matrix2<Complex64>) -> Matrix2<Complex64> {
    let eig = SymmetricEigen::new(*m);
    let roots = eig.eigenvalues.map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0));
    eig.eigenvectors * Matrix2::from_diagonal(&roots) * eig.eigenvectors.adjoint()
}

/// Uhlmann fidelity (Tr√(√ρ σ √ρ))².
pub fn fidelity(rho: &ElectronDensityMatrix, sigma: &ElectronDensityMatrix) -> f64 {
    let s = psd_sqrt(rho.matrix());
    let inner = s * sigma.matrix() * s;
    let inner = (inner + inner.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(inner);
    let tr: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    (tr * tr).clamp(0.0, 1.0)
}

/// Which side of the α² = 1 tie a sweep point sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepBranch {
    /// |b| < |Δ|
    Weak,
    /// |b| > |Δ|
    Strong,
}

impl fmt::Display for SweepBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepBranch::Weak => "weak",
            SweepBranch::Strong => "strong",
        })
    }
}

/// Reference hyperfine difference used by the sweep, rad·s⁻¹.
pub const SWEEP_DELTA: f64 = 1.0;

/// Dipolar coupling b that gives modulation depth `alpha_sq` with Δ = 1 on
/// the requested branch.
pub fn coupling_for_alpha_sq(alpha_sq: f64, branch: SweepBranch) -> Result<f64> {
    if !(alpha_sq > 0.0 && alpha_sq <= 1.0) {
        return Err(Error::Domain(format!("α² target {alpha_sq} outside (0, 1]")));
    }
    // √α² = 2b/(1 + b²)  ⇒  √α²·b² − 2b + √α² = 0
    let s = alpha_sq.sqrt();
    let disc = (1.0 - s * s).max(0.0).sqrt();
    Ok(match branch {
        SweepBranch::Weak => s / (1.0 + disc),
        SweepBranch::Strong => (1.0 + disc) / s,
    } * SWEEP_DELTA)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub branch: SweepBranch,
    pub alpha_sq: f64,
    pub b: f64,
    pub tcl2_half: f64,
    pub tcl2_revival: f64,
    pub tcl4_half: f64,
    pub tcl4_revival: f64,
}

/// Electron plus two spin-½ nuclei with hyperfine (Δ, 0) and coupling b.
pub fn pair_system(delta: f64, b: f64) -> Result<SpinSystem> {
    let field = FieldConfig::default();
    let gamma = 2.6752218744e8;
    let nucleus = |id: u32, azz: f64, z: f64| NuclearSpin {
        id,
        isotope: "1H".into(),
        spin: crate::spin_model::SpinQuantum::HALF,
        gamma,
        position: [0.0, 0.0, z],
        azz,
    };
    SpinSystem::new(field, vec![nucleus(1, delta, 0.0), nucleus(2, 0.0, 1.0)]).with_coupling(0, 1, b)
}

fn sweep_point(alpha_sq: f64, branch: SweepBranch) -> Result<SweepRow> {
    let b = coupling_for_alpha_sq(alpha_sq, branch)?;
    let system = pair_system(SWEEP_DELTA, b)?;
    let pair = PairParams::new((1, 2), SWEEP_DELTA, b);
    let tau = revival_time(&pair)?;
    let prop = EchoPropagator::new(&system, NuclearState::MaximallyMixed)?;
    let initial = prop.coherence(0.0)?;

    let fid = |t: f64, w: f64| -> Result<f64> {
        let exact = prop.density_matrix(t)?.with_zero_phase();
        let tcl = tcl_density_matrix((-w).exp(), Complex64::new(initial.norm(), 0.0))?;
        Ok(fidelity(&exact, &tcl))
    };
    let half = 0.5 * tau;
    Ok(SweepRow {
        branch,
        alpha_sq: pair_amplitude(SWEEP_DELTA, b),
        b,
        tcl2_half: fid(half, w_tcl2(&pair, half))?,
        tcl2_revival: fid(tau, w_tcl2(&pair, tau))?,
        tcl4_half: fid(half, w_tcl4_exponent(&pair, half))?,
        tcl4_revival: fid(tau, w_tcl4_exponent(&pair, tau))?,
    })
}

/// Fidelity of the TCL2/TCL4 electron state against exact propagation at
/// half revival and full revival, one row per α² target.
pub fn fidelity_sweep(alpha_grid: &[f64], branch: SweepBranch) -> Result<Vec<SweepRow>> {
    alpha_grid
        .par_iter()
        .map(|&a| sweep_point(a, branch))
        .collect()
}

/// α² = k/n for k = 1..=n.
pub fn uniform_alpha_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / n as f64).collect()
}
