//! Closed-form pair-product Hahn-echo envelopes at second (TCL2) and fourth
//! (TCL4) order.
//!
//! Each nuclear pair contributes a decay exponent W(t); the normalized echo is
//! `exp(−Σ W)`. Exponents are summed per time point in sorted order with
//! Neumaier compensation, so the envelope does not depend on pair order.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spin_model::PairParams;

pub const DEFAULT_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Tcl2,
    Tcl4,
    Exact,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Tcl2 => "TCL2",
            Method::Tcl4 => "TCL4",
            Method::Exact => "EXACT",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TCL2" => Ok(Method::Tcl2),
            "TCL4" => Ok(Method::Tcl4),
            "EXACT" => Ok(Method::Exact),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Perturbative order of the closed-form envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TclOrder {
    Second,
    Fourth,
}

impl TclOrder {
    pub fn method(self) -> Method {
        match self {
            TclOrder::Second => Method::Tcl2,
            TclOrder::Fourth => Method::Tcl4,
        }
    }
}

/// Single-pulse Hahn echo sampled on a grid of total evolution times; the π
/// pulse sits at t/2.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoProtocol {
    times: Vec<f64>,
    initial_coherence: Complex64,
}

impl EchoProtocol {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if let Some(&first) = times.first() {
            if !(first >= 0.0) {
                return Err(Error::Domain("echo times must start at t >= 0".into()));
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("echo times must be finite".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("echo times must be strictly increasing".into()));
        }
        Ok(Self {
            times,
            initial_coherence: Complex64::new(0.5, 0.0),
        })
    }

    /// `points` evenly spaced times from 0 to `horizon` inclusive.
    pub fn linspace(horizon: f64, points: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        if points < 2 {
            return Err(Error::Config("time grid needs at least 2 points".into()));
        }
        let step = horizon / (points - 1) as f64;
        let mut times: Vec<f64> = (0..points).map(|i| i as f64 * step).collect();
        times[points - 1] = horizon;
        Self::new(times)
    }

    pub fn with_initial_coherence(mut self, rho01: Complex64) -> Self {
        self.initial_coherence = rho01;
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn initial_coherence(&self) -> Complex64 {
        self.initial_coherence
    }

    pub fn pulse_time(t: f64) -> f64 {
        0.5 * t
    }

    /// +1 before the pulse at `t_p`, −1 from the pulse on.
    pub fn pulse_sign(s: f64, t_p: f64) -> f64 {
        if s < t_p {
            1.0
        } else {
            -1.0
        }
    }
}

/// Normalized echo magnitudes on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub method: Method,
}

impl EchoSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn phase(pair: &PairParams, t: f64) -> f64 {
    0.25 * t * pair.splitting()
}

/// W = α² sin⁴((t/4)√(Δ² + b²)).
pub fn w_tcl2(pair: &PairParams, t: f64) -> f64 {
    let s = phase(pair, t).sin();
    let s2 = s * s;
    pair.alpha_sq * s2 * s2
}

/// Fourth-order exponent: α² sin⁴x + 12 (bΔ/(b²+Δ²))⁴ sin⁸x.
pub fn w_tcl4_exponent(pair: &PairParams, t: f64) -> f64 {
    let s = phase(pair, t).sin();
    let s4 = s.powi(4);
    // (bΔ/(b²+Δ²))² = α²/4
    let q = 0.25 * pair.alpha_sq;
    pair.alpha_sq * s4 + 12.0 * q * q * s4 * s4
}

/// Smallest t > 0 at which a pair's exponent returns to zero.
pub fn revival_time(pair: &PairParams) -> Result<f64> {
    let split = pair.splitting();
    if !(split > 0.0) {
        return Err(Error::Domain(format!(
            "pair {:?} has Δ = b = 0 and no finite revival",
            pair.ids
        )));
    }
    Ok(4.0 * PI / split)
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Accumulated decay exponent Σ W(t) on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayExponents {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl DecayExponents {
    pub fn zeros(times: &[f64]) -> Self {
        Self {
            times: times.to_vec(),
            values: vec![0.0; times.len()],
        }
    }

    /// Sum of per-pair exponents at the given order.
    pub fn from_pairs(pairs: &[PairParams], times: &[f64], order: TclOrder) -> Self {
        let w = match order {
            TclOrder::Second => w_tcl2,
            TclOrder::Fourth => w_tcl4_exponent,
        };
        let values = times
            .par_iter()
            .map_with(Vec::with_capacity(pairs.len()), |buf, &t| {
                buf.clear();
                buf.extend(pairs.iter().map(|p| w(p, t)));
                buf.sort_by(f64::total_cmp);
                compensated_sum(buf.iter().copied())
            })
            .collect();
        Self {
            times: times.to_vec(),
            values,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Element-wise addition of extra exponent terms on the same grid.
    pub fn add_external_w(&mut self, extra: &[f64]) -> Result<()> {
        if extra.len() != self.values.len() {
            return Err(Error::GridMismatch {
                left: self.values.len(),
                right: extra.len(),
            });
        }
        for (acc, &w) in self.values.iter_mut().zip(extra) {
            *acc += w;
        }
        Ok(())
    }

    pub fn envelope(&self, method: Method) -> EchoSeries {
        EchoSeries {
            times: self.times.clone(),
            values: self.values.iter().map(|w| (-w).exp()).collect(),
            method,
        }
    }
}

/// exp(−Σ_pairs W) on the protocol's grid.
pub fn echo_envelope(pairs: &[PairParams], protocol: &EchoProtocol, order: TclOrder) -> EchoSeries {
    DecayExponents::from_pairs(pairs, protocol.times(), order).envelope(order.method())
}

/// Un-normalized coherence ρ₀₁(t) = ρ₀₁(0)·envelope.
pub fn coherence(series: &EchoSeries, protocol: &EchoProtocol) -> Vec<Complex64> {
    series
        .values
        .iter()
        .map(|&v| protocol.initial_coherence() * v)
        .collect()
}
