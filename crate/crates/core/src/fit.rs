//! Least-squares fit of A·exp(−(t/T₂)^β) to an echo series.
//!
//! T₂ starts at the 1/e crossing, β is picked from a coarse grid on
//! [0.5, 3] with A solved linearly, then Levenberg–Marquardt refines
//! (A, ln T₂, β) until the relative parameter change drops below 1e−8 or
//! 500 iterations pass.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::tcl::EchoSeries;

pub const BETA_MIN: f64 = 0.3;
pub const BETA_MAX: f64 = 4.0;
const MIN_POINTS: usize = 8;
const MAX_ITERATIONS: usize = 500;
const TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    /// s
    pub t2: f64,
    pub beta: f64,
    pub amplitude: f64,
    pub residual_rms: f64,
}

pub fn stretched_exp(t: f64, amplitude: f64, t2: f64, beta: f64) -> f64 {
    amplitude * (-(t / t2).powf(beta)).exp()
}

#[derive(Clone, Copy)]
struct Params {
    amplitude: f64,
    ln_t2: f64,
    beta: f64,
}

struct Problem<'a> {
    t: &'a [f64],
    y: &'a [f64],
}

impl Problem<'_> {
    fn sse(&self, p: &Params) -> f64 {
        let t2 = p.ln_t2.exp();
        self.t
            .iter()
            .zip(self.y)
            .map(|(&t, &y)| {
                let r = y - stretched_exp(t, p.amplitude, t2, p.beta);
                r * r
            })
            .sum()
    }

    /// JᵀJ and Jᵀr for parameters (A, ln T₂, β).
    fn normal_equations(&self, p: &Params) -> (Matrix3<f64>, Vector3<f64>) {
        let t2 = p.ln_t2.exp();
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&t, &y) in self.t.iter().zip(self.y) {
            let (u, log) = if t > 0.0 {
                let x = t / t2;
                (x.powf(p.beta), x.ln())
            } else {
                (0.0, 0.0)
            };
            let e = (-u).exp();
            let j = Vector3::new(e, p.amplitude * p.beta * u * e, -p.amplitude * u * log * e);
            let r = y - p.amplitude * e;
            jtj += j * j.transpose();
            jtr += j * r;
        }
        (jtj, jtr)
    }

    /// Best amplitude for fixed (T₂, β).
    fn linear_amplitude(&self, t2: f64, beta: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (&t, &y) in self.t.iter().zip(self.y) {
            let e = stretched_exp(t, 1.0, t2, beta);
            num += e * y;
            den += e * e;
        }
        if den > 0.0 {
            num / den
        } else {
            1.0
        }
    }
}

/// Time at which the data first falls to `level`, linearly interpolated.
fn crossing(t: &[f64], y: &[f64], level: f64) -> Option<f64> {
    for i in 1..y.len() {
        if y[i] <= level && y[i - 1] > level {
            let f = (y[i - 1] - level) / (y[i - 1] - y[i]);
            return Some(t[i - 1] + f * (t[i] - t[i - 1]));
        }
    }
    None
}

fn initial_guess(problem: &Problem) -> Result<Params> {
    let (t, y) = (problem.t, problem.y);
    let a0 = y[0];
    let t2 = match crossing(t, y, a0 / std::f64::consts::E) {
        Some(c) if c > 0.0 => c,
        _ => {
            // no 1/e crossing inside the window: extrapolate as a pure exponential
            let (tl, yl) = (t[t.len() - 1], y[y.len() - 1]);
            let ratio = yl / a0;
            if !(ratio > 0.0 && ratio < 1.0 && tl > 0.0) {
                return Err(Error::Fit("series shows no decay".into()));
            }
            tl / -ratio.ln()
        }
    };
    let mut best = (f64::INFINITY, 1.0, a0);
    for k in 0..=25 {
        let beta = 0.5 + 0.1 * k as f64;
        let a = problem.linear_amplitude(t2, beta);
        let sse = problem.sse(&Params {
            amplitude: a,
            ln_t2: t2.ln(),
            beta,
        });
        if sse < best.0 {
            best = (sse, beta, a);
        }
    }
    Ok(Params {
        amplitude: best.2,
        ln_t2: t2.ln(),
        beta: best.1,
    })
}

fn converged(old: &Params, new: &Params) -> bool {
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE);
    rel(old.amplitude, new.amplitude) < TOLERANCE
        && (old.ln_t2 - new.ln_t2).abs() < TOLERANCE
        && rel(old.beta, new.beta) < TOLERANCE
}

pub fn fit_stretched_exp(series: &EchoSeries) -> Result<FitResult> {
    let (t, y) = (&series.times[..], &series.values[..]);
    if t.len() < MIN_POINTS {
        return Err(Error::Fit(format!("need at least {MIN_POINTS} points, got {}", t.len())));
    }
    if y.iter().any(|v| !v.is_finite()) || t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("series contains non-finite values".into()));
    }
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo <= 1e-12 * hi.abs().max(1e-300) {
        return Err(Error::Fit("series is constant".into()));
    }
    if !(y[y.len() - 1] < y[0]) {
        return Err(Error::Fit("series shows no decay".into()));
    }

    let problem = Problem { t, y };
    let mut p = initial_guess(&problem)?;
    let mut sse = problem.sse(&p);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        let (jtj, jtr) = problem.normal_equations(&p);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut lhs = jtj;
            for i in 0..3 {
                lhs[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = lhs.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = Params {
                amplitude: p.amplitude + step[0],
                ln_t2: p.ln_t2 + step[1],
                beta: (p.beta + step[2]).clamp(BETA_MIN, BETA_MAX),
            };
            let trial_sse = problem.sse(&trial);
            if trial_sse.is_finite() && trial_sse <= sse {
                let done = converged(&p, &trial);
                p = trial;
                sse = trial_sse;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if done {
                    return Ok(finish(&p, sse, t.len()));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(finish(&p, sse, t.len()))
}

fn finish(p: &Params, sse: f64, n: usize) -> FitResult {
    FitResult {
        t2: p.ln_t2.exp(),
        beta: p.beta,
        amplitude: p.amplitude,
        residual_rms: (sse / n as f64).sqrt(),
    }
}
