//! Spin operators on tensor-product spaces.
//!
//! Single-spin basis is ordered m = +I, I−1, …, −I. In a product space the
//! first factor is the most significant index. All operators used here are
//! real in this basis.

use nalgebra::DMatrix;

use crate::spin_model::SpinQuantum;

pub fn spin_z(spin: SpinQuantum) -> DMatrix<f64> {
    let n = spin.multiplicity();
    let i = spin.value();
    DMatrix::from_fn(n, n, |r, c| if r == c { i - r as f64 } else { 0.0 })
}

/// I⁺ with ⟨m+1|I⁺|m⟩ = √(I(I+1) − m(m+1)).
pub fn spin_raise(spin: SpinQuantum) -> DMatrix<f64> {
    let n = spin.multiplicity();
    let i = spin.value();
    DMatrix::from_fn(n, n, |r, c| {
        if c == r + 1 {
            let m = i - c as f64;
            (i * (i + 1.0) - m * (m + 1.0)).sqrt()
        } else {
            0.0
        }
    })
}

pub fn spin_lower(spin: SpinQuantum) -> DMatrix<f64> {
    spin_raise(spin).transpose()
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Local operators embedded in a product of spins.
#[derive(Debug, Clone)]
pub struct ProductSpace {
    dims: Vec<usize>,
    spins: Vec<SpinQuantum>,
}

impl ProductSpace {
    pub fn new(spins: &[SpinQuantum]) -> Self {
        Self {
            dims: spins.iter().map(|s| s.multiplicity()).collect(),
            spins: spins.to_vec(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dims.iter().product()
    }

    /// 𝟙 ⊗ … ⊗ op(site) ⊗ … ⊗ 𝟙
    pub fn embed(&self, site: usize, op: &DMatrix<f64>) -> DMatrix<f64> {
        let before: usize = self.dims[..site].iter().product();
        let after: usize = self.dims[site + 1..].iter().product();
        let left = DMatrix::<f64>::identity(before, before);
        let right = DMatrix::<f64>::identity(after, after);
        kron(&kron(&left, op), &right)
    }

    pub fn iz(&self, site: usize) -> DMatrix<f64> {
        self.embed(site, &spin_z(self.spins[site]))
    }

    pub fn iplus(&self, site: usize) -> DMatrix<f64> {
        self.embed(site, &spin_raise(self.spins[site]))
    }

    pub fn iminus(&self, site: usize) -> DMatrix<f64> {
        self.embed(site, &spin_lower(self.spins[site]))
    }

    /// Σ_k I_kᶻ
    pub fn total_iz(&self) -> DMatrix<f64> {
        let d = self.dimension();
        (0..self.dims.len()).fold(DMatrix::zeros(d, d), |acc, k| acc + self.iz(k))
    }

    /// Secular dipolar operator with the flip-flop normalization of the echo
    /// engines: 2·(I_kᶻI_lᶻ − ¼(I_k⁺I_l⁻ + I_k⁻I_l⁺)).
    pub fn dipolar(&self, k: usize, l: usize) -> DMatrix<f64> {
        let zz = self.iz(k) * self.iz(l);
        let ff = self.iplus(k) * self.iminus(l) + self.iminus(k) * self.iplus(l);
        (zz - ff * 0.25) * 2.0
    }
}
