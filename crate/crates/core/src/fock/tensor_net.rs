//! Normalized expectations of the tensor-network observables built from `n`
//! copies of a von Mises root state, multiplied back together through the
//! RKHA coproduct adjoint.

use num_complex::Complex64;

use crate::dynamics::{dot, von_mises_fourier, FourierObservable, RotationSystem, TorusPoint, VonMisesDensity};
use crate::error::{Error, Result};
use crate::linalg::{cis, l2_norm};
use crate::par::{compensated_sum, Execution};
use crate::rkha::{psi_product, SubexpWeight, TruncatedLattice, Weight};

#[derive(Debug, Clone, PartialEq)]
pub struct TnParams {
    /// Number of tensor factors, `1..=3`.
    pub n: u32,
    /// Concentration of the von Mises state; each factor carries `κ/n`.
    pub kappa: f64,
    /// Per-factor smoothing `√λ_σ`; `0` disables it.
    pub sigma: f64,
    pub tau: f64,
    pub p: f64,
    pub bandwidth: usize,
}

impl Default for TnParams {
    fn default() -> Self {
        TnParams { n: 1, kappa: 4.0, sigma: 0.0, tau: 0.25, p: 0.5, bandwidth: 24 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TnResult {
    pub value: f64,
    /// Bound on the change of `value` from truncating the product state to the
    /// lattice, plus an allowance for rounding in the lattice sums.
    pub truncation_bound: f64,
}

/// `⟨P, M_f P⟩ / ⟨P, P⟩` with `P` the product of the `n` evolved factor states.
pub fn tensor_network_expectation(
    f: &FourierObservable,
    sys: &RotationSystem,
    x: &TorusPoint,
    t: f64,
    params: &TnParams,
) -> Result<TnResult> {
    tensor_network_expectation_with(f, sys, x, t, params, Execution::default())
}

pub fn tensor_network_expectation_with(
    f: &FourierObservable,
    sys: &RotationSystem,
    x: &TorusPoint,
    t: f64,
    params: &TnParams,
    exec: Execution,
) -> Result<TnResult> {
    let d = sys.dim();
    if f.dim() != d || x.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: if f.dim() != d { f.dim() } else { x.dim() } });
    }
    if !(1..=3).contains(&params.n) {
        return Err(Error::invalid("tensor-network order n must be 1, 2 or 3"));
    }
    if !(params.kappa > 0.0) || params.sigma < 0.0 {
        return Err(Error::invalid("need kappa > 0 and sigma >= 0"));
    }
    let defect = f.conjugate_symmetry_defect();
    if defect > 1e-12 {
        return Err(Error::NonRealObservable { defect });
    }
    let w_tau = SubexpWeight::new(params.tau, params.p, d)?;
    let state = VonMisesDensity::centered(x, params.kappa)?;
    let root = state.root(params.n);

    let lat = TruncatedLattice::new(d, params.bandwidth)?;
    let p_trunc = product_state(sys, &w_tau, &root, params, lat, lat, t, exec)?;
    // Reference: factors at twice the bandwidth, multiplied without truncation.
    let ext_factor = TruncatedLattice::new(d, 2 * params.bandwidth)?;
    let ext = TruncatedLattice::new(d, 2 * params.bandwidth * params.n as usize)?;
    let p_ext = product_state(sys, &w_tau, &root, params, ext_factor, ext, t, exec)?;

    let num = quadratic_form(f, &p_trunc);
    let den = quadratic_form(&FourierObservable::constant(d, 1.0), &p_trunc);
    let diff: Vec<Complex64> = ext
        .iter()
        .map(|j| p_ext.coeff(&j) - p_trunc.coeff(&j))
        .collect();
    let ext_norm = p_ext.l2_norm();
    let f_l1 = f.l1_coeff_norm();
    let truncation = 4.0 * f_l1 * l2_norm(&diff) / ext_norm;
    let rounding = 4.0 * f_l1 * (params.n as usize * lat.size()) as f64 * f64::EPSILON;
    Ok(TnResult { value: num / den, truncation_bound: truncation + rounding })
}

/// L² coefficients on `out` of the ψ-product of `n` copies of the smoothed,
/// evolved root state given on `factor_lat`.
#[allow(clippy::too_many_arguments)]
fn product_state(
    sys: &RotationSystem,
    w_tau: &SubexpWeight,
    root: &VonMisesDensity,
    params: &TnParams,
    factor_lat: TruncatedLattice,
    out: TruncatedLattice,
    t: f64,
    exec: Execution,
) -> Result<FourierObservable> {
    let coeffs = von_mises_fourier(root, factor_lat.bandwidth());
    let w_sigma = if params.sigma > 0.0 { Some(SubexpWeight::new(params.sigma, params.p, sys.dim())?) } else { None };
    let factor: Vec<Complex64> = out
        .iter()
        .map(|j| {
            if !factor_lat.contains(&j) {
                return Complex64::default();
            }
            let smooth = w_sigma.as_ref().map_or(1.0, |w| w.lambda(&j).sqrt());
            coeffs.coeff(&j) / w_tau.lambda(&j).sqrt() * smooth * cis(-t * dot(&j, sys.alpha()))
        })
        .collect();
    let mut acc = factor.clone();
    for _ in 1..params.n {
        acc = psi_product(w_tau, &out, &acc, &factor, exec);
    }
    let l2: Vec<Complex64> = out.iter().zip(&acc).map(|(j, c)| c * w_tau.lambda(&j).sqrt()).collect();
    Ok(out.observable(&l2))
}

/// `⟨p, M_f p⟩ = Σ_γ Σ_k conj(p_γ) f̂_k p_{γ-k}`.
fn quadratic_form(f: &FourierObservable, p: &FourierObservable) -> f64 {
    let terms = p.iter().flat_map(|(g, pg)| {
        f.iter().map(move |(k, fk)| {
            let beta: Vec<i64> = g.iter().zip(k).map(|(a, b)| a - b).collect();
            (pg.conj() * fk * p.coeff(&beta)).re
        })
    });
    compensated_sum(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn circle() -> RotationSystem {
        RotationSystem::new(vec![1.0]).unwrap()
    }

    fn x(v: f64) -> TorusPoint {
        TorusPoint::new(vec![v]).unwrap()
    }

    #[test]
    fn unit_observable_is_self_normalized() {
        let one = FourierObservable::constant(1, 1.0);
        for n in 1..=3 {
            for t in [0.0, 0.9, 4.0] {
                let p = TnParams { n, ..TnParams::default() };
                let r = tensor_network_expectation(&one, &circle(), &x(0.3), t, &p).unwrap();
                assert!((r.value - 1.0).abs() < 1e-15, "n={n} t={t}: {}", r.value);
            }
        }
    }

    #[test]
    fn single_factor_matches_quadrature() {
        let kappa = 4.0;
        let x0 = 0.7;
        let r = tensor_network_expectation(
            &FourierObservable::cosine(1, 0),
            &circle(),
            &x(x0),
            0.0,
            &TnParams { kappa, ..TnParams::default() },
        )
        .unwrap();
        let n = 4096;
        let (mut num, mut den) = (0.0, 0.0);
        for l in 0..n {
            let th = TAU * l as f64 / n as f64;
            let p2 = (2.0 * kappa * (th - x0).cos()).exp();
            num += th.cos() * p2;
            den += p2;
        }
        assert!((r.value - num / den).abs() < 1e-12);
    }

    #[test]
    fn orders_agree_within_bounds() {
        let f = FourierObservable::cosine(1, 0);
        let res: Vec<TnResult> = (1..=3)
            .map(|n| {
                let p = TnParams { n, bandwidth: 8, ..TnParams::default() };
                tensor_network_expectation(&f, &circle(), &x(0.4), 1.3, &p).unwrap()
            })
            .collect();
        for r in &res[1..] {
            let gap = (r.value - res[0].value).abs();
            assert!(gap <= r.truncation_bound + res[0].truncation_bound, "{gap} vs {res:?}");
        }
    }

    #[test]
    fn state_follows_the_rotation() {
        let f = FourierObservable::cosine(1, 0);
        let p = TnParams { n: 2, ..TnParams::default() };
        let a = tensor_network_expectation(&f, &circle(), &x(0.4), 1.3, &p).unwrap();
        let b = tensor_network_expectation(&f, &circle(), &x(1.7), 0.0, &p).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn rejects_large_order() {
        let p = TnParams { n: 4, ..TnParams::default() };
        assert!(tensor_network_expectation(&FourierObservable::cosine(1, 0), &circle(), &x(0.0), 0.0, &p).is_err());
    }
}
