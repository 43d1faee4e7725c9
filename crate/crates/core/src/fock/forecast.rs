//! Pointwise forecasts through the second-quantized representation: observables
//! are lifted by integral operators with `m`-fold symmetric kernel powers,
//! evolved by the lifted Koopman group, and read out at the feature point.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::{lifted_evolve, occupations, symmetric_power, FockVector, FockWeight, ModeSet, SpectrumTorusPoint};
use crate::dynamics::{dot, evaluate, FourierObservable, RotationSystem, TorusPoint};
use crate::error::{Error, Result};
use crate::koopman::{analytic_generator, GeneratorSpec};
use crate::linalg::cis;
use crate::par::{map_indexed, CompensatedSum, Execution};
use crate::rkha::{SubexpWeight, TruncatedLattice, Weight};

/// Below this the normalizing function is treated as zero.
pub const MIN_NORMALIZATION: f64 = 1e-8;

const CHUNK: usize = 64;
const KERNEL_QUADRATURE: usize = 8192;

#[derive(Debug, Clone, PartialEq)]
pub struct SqParams {
    /// Symmetric power of the kernel sections.
    pub m: u32,
    /// Feature-map regularity; must satisfy `τ ≤ σ/2`.
    pub sigma: f64,
    pub tau: f64,
    /// Exponent of the subexponential weights.
    pub p: f64,
    /// Width of the Gaussian kernel `exp(-d²/ε²)` in circular distance.
    pub epsilon: f64,
    /// Number of leading generator eigenmodes.
    pub modes: usize,
    /// Lattice bandwidth for the generator and the normalization `ϖ_σ`.
    pub bandwidth: usize,
    /// Quadrature points per dimension.
    pub grid: usize,
    pub fock: FockWeight,
}

impl Default for SqParams {
    fn default() -> Self {
        SqParams {
            m: 1,
            sigma: 0.5,
            tau: 0.25,
            p: 0.5,
            epsilon: 1.0,
            modes: 7,
            bandwidth: 3,
            grid: 256,
            fock: FockWeight::default(),
        }
    }
}

impl SqParams {
    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > self.fock.nmax() {
            return Err(Error::invalid(format!("m = {} must lie in 1..=Nmax ({})", self.m, self.fock.nmax())));
        }
        if !(self.tau > 0.0 && self.tau <= self.sigma / 2.0) {
            return Err(Error::invalid("need 0 < tau <= sigma / 2"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("kernel width epsilon must be positive"));
        }
        if self.grid < 2 {
            return Err(Error::invalid("quadrature grid needs at least 2 points"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqForecast {
    pub value: f64,
    /// `ĝ^{(t)}` and `ĥ^{(t)}` at the feature point.
    pub numerator: Complex64,
    pub denominator: Complex64,
    /// Bound on the feature-series tail beyond `Nmax`.
    pub truncation_mass: f64,
}

/// Fourier coefficients `κ̂(j)`, `|j| ≤ J`, of `θ ↦ exp(-d(θ,0)²/ε²)` on the circle.
pub fn gaussian_kernel_coeffs(epsilon: f64, bandwidth: usize) -> Vec<f64> {
    let n = KERNEL_QUADRATURE;
    let samples: Vec<f64> = (0..n)
        .map(|l| {
            let th = TAU * l as f64 / n as f64;
            let d = if th > PI { TAU - th } else { th };
            (-d * d / (epsilon * epsilon)).exp()
        })
        .collect();
    let jmax = bandwidth as i64;
    (-jmax..=jmax)
        .map(|j| {
            let acc: CompensatedSum = samples
                .iter()
                .enumerate()
                .map(|(l, s)| s * (j as f64 * TAU * l as f64 / n as f64).cos())
                .collect();
            acc.value() / n as f64
        })
        .collect()
}

/// Forecast of `U^t f(x)` using the exact rotation generator.
pub fn second_quantization_forecast(
    f: &FourierObservable,
    sys: &RotationSystem,
    params: &SqParams,
    x: &TorusPoint,
    t: f64,
) -> Result<SqForecast> {
    let lat = TruncatedLattice::new(sys.dim(), params.bandwidth)?;
    let gen = analytic_generator(sys, &lat)?;
    second_quantization_forecast_with(f, &gen, params, x, t, Execution::default())
}

/// As [`second_quantization_forecast`], for any generator on the lattice of
/// bandwidth `params.bandwidth`.
pub fn second_quantization_forecast_with(
    f: &FourierObservable,
    gen: &GeneratorSpec,
    params: &SqParams,
    x: &TorusPoint,
    t: f64,
    exec: Execution,
) -> Result<SqForecast> {
    params.validate()?;
    let lat = *gen.lattice();
    let d = lat.dim();
    if f.dim() != d || x.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: if f.dim() != d { f.dim() } else { x.dim() } });
    }
    if lat.bandwidth() != params.bandwidth {
        return Err(Error::invalid("generator lattice does not match the configured bandwidth"));
    }
    let defect = f.conjugate_symmetry_defect();
    if defect > 1e-12 {
        return Err(Error::NonRealObservable { defect });
    }
    let modes = ModeSet::from_generator(gen, params.modes)?;
    let w_tau = SubexpWeight::new(params.tau, params.p, d)?;
    let w_sigma = SubexpWeight::new(params.sigma, params.p, d)?;
    let idx: Vec<Vec<i64>> = lat.iter().collect();
    let sqrt_tau: Vec<f64> = lat.weights(&w_tau).iter().map(|l| l.sqrt()).collect();

    // κ̂ on the lattice, as a product of per-axis coefficients.
    let axis = gaussian_kernel_coeffs(params.epsilon, params.bandwidth);
    let jm = params.bandwidth as i64;
    let kappa_hat: Vec<f64> = idx.iter().map(|j| j.iter().map(|&ji| axis[(ji + jm) as usize]).product()).collect();

    let occs = occupations(modes.len(), params.m);
    let total = params.grid.pow(d as u32);
    let chunks = total.div_ceil(CHUNK);
    let weight = 1.0 / total as f64;

    type Partial = (Vec<[CompensatedSum; 2]>, Vec<[CompensatedSum; 2]>);

    // Per chunk: compensated partial sums of f(y)·(κ_τ(·,y))^{∨m} and of (κ_τ(·,y))^{∨m}.
    let partials: Vec<Partial> = map_indexed(exec, chunks, |c| {
        let mut g = vec![[CompensatedSum::default(); 2]; occs.len()];
        let mut h = vec![[CompensatedSum::default(); 2]; occs.len()];
        for l in (c * CHUNK)..((c + 1) * CHUNK).min(total) {
            let y = grid_point(l, params.grid, d);
            let section: Vec<Complex64> = idx
                .iter()
                .enumerate()
                .map(|(k, j)| cis(-dot(j, &y)) * (sqrt_tau[k] * kappa_hat[k]))
                .collect();
            let b = modes.project(&section);
            let pow = symmetric_power(&b, params.m);
            let fy = evaluate(f, &TorusPoint::new(y).expect("grid point")).re;
            for (k, occ) in occs.iter().enumerate() {
                let a = pow.amplitude(occ) * weight;
                g[k][0].add(a.re * fy);
                g[k][1].add(a.im * fy);
                h[k][0].add(a.re);
                h[k][1].add(a.im);
            }
        }
        (g, h)
    });
    let collect = |pick: fn(&Partial) -> &Vec<[CompensatedSum; 2]>| {
        let terms = occs.iter().enumerate().map(|(k, occ)| {
            let re: CompensatedSum = partials.iter().map(|p| pick(p)[k][0].value()).collect();
            let im: CompensatedSum = partials.iter().map(|p| pick(p)[k][1].value()).collect();
            (occ.clone(), Complex64::new(re.value(), im.value()))
        });
        FockVector::from_terms(modes.len(), terms).expect("occupations have the mode count")
    };
    let g_hat = lifted_evolve(&modes, &collect(|p| &p.0), t);
    let h_hat = lifted_evolve(&modes, &collect(|p| &p.1), t);

    // Feature point: η = φ_σ(x) / ϖ_σ² in ψ_τ coordinates, projected on the modes.
    let varpi_sq: f64 = lat.weights(&w_sigma).iter().sum();
    let phi: Vec<Complex64> = idx
        .iter()
        .enumerate()
        .map(|(k, j)| cis(-dot(j, x.angles())) * (w_sigma.lambda(j) / (sqrt_tau[k] * varpi_sq)))
        .collect();
    let eta = modes.project(&phi);
    let point = feature_point(&eta)?;
    let (_, truncation_mass) = super::xi_series(&params.fock, &eta);

    let numerator = super::gelfand_eval(&params.fock, &point, &g_hat);
    let denominator = super::gelfand_eval(&params.fock, &point, &h_hat);
    if denominator.norm() < MIN_NORMALIZATION {
        return Err(Error::DegenerateNormalization { value: denominator.norm(), threshold: MIN_NORMALIZATION });
    }
    Ok(SqForecast { value: (numerator / denominator).re, numerator, denominator, truncation_mass })
}

fn grid_point(mut l: usize, n: usize, d: usize) -> Vec<f64> {
    let mut y = vec![0.0; d];
    for slot in y.iter_mut().rev() {
        *slot = TAU * (l % n) as f64 / n as f64;
        l /= n;
    }
    y
}

/// Polar form of mode coordinates as a spectrum point.
fn feature_point(eta: &[Complex64]) -> Result<SpectrumTorusPoint> {
    let a: Vec<f64> = eta.iter().map(|c| c.norm()).collect();
    let z: Vec<Complex64> = eta
        .iter()
        .enumerate()
        .map(|(k, c)| {
            if k == 0 || c.norm() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                c / c.norm()
            }
        })
        .collect();
    if eta[0].im.abs() > 1e-12 || eta[0].re < 0.0 {
        return Err(Error::invalid("leading mode is not the constant function"));
    }
    SpectrumTorusPoint::new(a, z)
}
