//! Points `χ_{a,z} = ⟨ξ_{a,z}, ·⟩` of the Fock-space spectrum and the rotation
//! the lifted dynamics induces on them.

use num_complex::Complex64;

use super::{fock_inner, symmetric_power, FockVector, FockWeight, ModeSet};
use crate::error::{Error, Result};
use crate::linalg::cis;

/// Amplitudes `a_k ≥ 0` and unimodular phases `z_k`, one per mode. Mode 0 is
/// the constant, so `a_0` multiplies `ζ_0` and `z_0` is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTorusPoint {
    a: Vec<f64>,
    z: Vec<Complex64>,
}

/// Radius of convergence of `Σ w^{-2}(n) x^n` for subexponential weights.
pub const R_W: f64 = 1.0;

impl SpectrumTorusPoint {
    pub fn new(a: Vec<f64>, z: Vec<Complex64>) -> Result<Self> {
        if a.len() != z.len() || a.is_empty() {
            return Err(Error::invalid("amplitude and phase vectors must have equal, nonzero length"));
        }
        if a.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("spectrum amplitudes must be finite and nonnegative"));
        }
        if a.iter().map(|x| x * x).sum::<f64>().sqrt() > R_W * (1.0 + 1e-12) {
            return Err(Error::invalid("spectrum amplitude vector exceeds the convergence radius"));
        }
        if z.iter().any(|p| (p.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::invalid("spectrum phases must be unimodular"));
        }
        Ok(SpectrumTorusPoint { a, z })
    }

    /// Point with phases `e^{iθ_k}`.
    pub fn from_angles(a: Vec<f64>, theta: &[f64]) -> Result<Self> {
        SpectrumTorusPoint::new(a, theta.iter().map(|t| cis(*t)).collect())
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.a
    }

    pub fn phases(&self) -> &[Complex64] {
        &self.z
    }

    /// Coordinates of `η = a_0 ζ_0 + Σ_{k≥1} a_k z_k ζ_k`.
    pub fn eta(&self) -> Vec<Complex64> {
        self.a
            .iter()
            .zip(&self.z)
            .enumerate()
            .map(|(k, (a, z))| if k == 0 { Complex64::new(*a, 0.0) } else { z * a })
            .collect()
    }
}

/// `ξ = Σ_{n ≤ Nmax} w^{-2}(n) η^{∨n}` for arbitrary mode coordinates `η`,
/// with the bound `‖η‖^{Nmax+1} Σ_{n>Nmax} w^{-2}(n)` on the omitted tail.
pub fn xi_series(w: &FockWeight, eta: &[Complex64]) -> (FockVector, f64) {
    let mut xi = FockVector::zero(eta.len());
    for n in 0..=w.nmax() {
        xi = xi.add(&symmetric_power(eta, n).scale(Complex64::new(w.inv_w2(n), 0.0)));
    }
    let norm = eta.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let tail = norm.powi(w.nmax() as i32 + 1) * w.tail();
    (xi, tail)
}

/// `χ_{a,z}(v) = ⟨ξ_{a,z}, v⟩` with `ξ` truncated at `Nmax`.
pub fn gelfand_eval(w: &FockWeight, pt: &SpectrumTorusPoint, v: &FockVector) -> Complex64 {
    let (xi, _) = xi_series(w, &pt.eta());
    fock_inner(w, &xi, v)
}

/// `z_k ↦ e^{-iω_k t} z_k`; amplitudes unchanged.
pub fn spectrum_rotate(pt: &SpectrumTorusPoint, modes: &ModeSet, t: f64) -> SpectrumTorusPoint {
    assert_eq!(pt.z.len(), modes.len(), "spectrum point and mode set disagree on the mode count");
    SpectrumTorusPoint {
        a: pt.a.clone(),
        z: pt.z.iter().zip(modes.omegas()).map(|(z, w)| z * cis(-w * t)).collect(),
    }
}
