//! The height chain that dominates `hei_k(φ(n)·D^k_h)` and its supermartingale certificate.

use alloc::vec::Vec;

#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;
use super::params::ParameterSet;
use crate::error::{Error, Result};
use crate::vpso::binomial;

/// Tolerance on the certificate margin for rounding in the power evaluations.
pub const CERTIFICATE_TOL: f64 = 1e-12;

/// One unstopped step: `C(d,2)·h² ∧ 1` on a purebred draw, `d·h ∧ 1` otherwise.
///
/// The product is grouped as `C(d,2)·(h·h)`, the same association used for the operator
/// bound, so the coupling holds bit for bit.
pub fn h_step(h: f64, purebred: bool, d: usize) -> f64 {
    let next = if purebred {
        binomial(d as u32, 2) * (h * h)
    } else {
        d as f64 * h
    };
    next.min(1.0)
}

/// State of the stopped chain `H̃_n = min{H_{n∧τ}, κ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HChainState {
    pub h: f64,
    pub stopped: bool,
    pub kappa: f64,
}

impl HChainState {
    pub fn new(h: f64, kappa: f64) -> Self {
        if h > kappa {
            Self {
                h: kappa,
                stopped: true,
                kappa,
            }
        } else {
            Self {
                h,
                stopped: false,
                kappa,
            }
        }
    }
}

pub fn h_chain_step(state: HChainState, is_purebred_draw: bool, d: usize) -> HChainState {
    if state.stopped {
        return state;
    }
    HChainState::new(h_step(state.h, is_purebred_draw, d), state.kappa)
}

/// `1 − m·κ^{−α1}·h^{α1}`; non-positive values are vacuous.
pub fn diamonds_bound(h: f64, params: &ParameterSet) -> f64 {
    1.0 - params.m as f64 * params.kappa.powf(-params.alpha1) * h.powf(params.alpha1)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CertificateReport {
    pub points: usize,
    /// Smallest `1 − (ν̲·C(d,2)^{α1}s^{α1} + (1−ν̲)d^{α1})` over the grid.
    pub min_margin: f64,
    pub argmin: f64,
    /// Largest `d·s` over the grid; the uncapped step form needs it `<= 1`.
    pub max_linear: f64,
}

/// Checks `E[v(H̃_{n+1}) | H̃_n = s] <= v(s)` with `v(s) = s^{α1}` at every grid point.
pub fn supermartingale_certificate(params: &ParameterSet, s_grid: &[f64]) -> Result<CertificateReport> {
    if s_grid.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut report = CertificateReport {
        points: s_grid.len(),
        min_margin: f64::INFINITY,
        argmin: f64::NAN,
        max_linear: 0.0,
    };
    for &s in s_grid {
        if !(0.0..=params.kappa).contains(&s) {
            return Err(Error::InvalidArgument(alloc::format!(
                "grid point {s} outside [0, κ = {}]",
                params.kappa
            )));
        }
        let margin = 1.0 - params.h_factor(s);
        if margin < -CERTIFICATE_TOL {
            return Err(Error::CertificateFailure { s, margin });
        }
        let lin = params.d as f64 * s;
        if lin > 1.0 {
            return Err(Error::CertificateFailure { s, margin: 1.0 - lin });
        }
        report.max_linear = report.max_linear.max(lin);
        if margin < report.min_margin {
            report.min_margin = margin;
            report.argmin = s;
        }
    }
    Ok(report)
}

/// `points` equally spaced values covering `[0, κ]`.
pub fn kappa_grid(params: &ParameterSet, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => alloc::vec![params.kappa],
        _ => (0..points)
            .map(|i| {
                if i + 1 == points {
                    params.kappa
                } else {
                    params.kappa * i as f64 / (points - 1) as f64
                }
            })
            .collect(),
    }
}

/// Outcome of one run of the stopped chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HRun {
    /// First step at which `H̃ < threshold`.
    pub hit: Option<usize>,
    pub stopped: bool,
    pub last: f64,
}

/// Runs the stopped chain from `h` for at most `steps` steps with purebred draws of
/// probability `nu`, halting early once it is below `threshold` or stopped.
pub fn run_h_chain<R: rand::Rng + ?Sized>(
    h: f64,
    params: &ParameterSet,
    nu: f64,
    threshold: f64,
    steps: usize,
    rng: &mut R,
) -> HRun {
    let mut st = HChainState::new(h, params.kappa);
    for n in 0..=steps {
        if st.h < threshold {
            return HRun {
                hit: Some(n),
                stopped: st.stopped,
                last: st.h,
            };
        }
        if st.stopped || n == steps {
            break;
        }
        let pure = rng.random::<f64>() < nu;
        st = h_chain_step(st, pure, params.d);
    }
    HRun {
        hit: None,
        stopped: st.stopped,
        last: st.h,
    }
}
