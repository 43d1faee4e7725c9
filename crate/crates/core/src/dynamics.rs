//! Measure-preserving test systems: torus rotations and finite periodic orbits,
//! band-limited observables on the torus, and von Mises densities.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{cis, CMatrix};
use crate::report::fmt_real;
use crate::special::{bessel_i_ratios, ln_bessel_i0};

/// Lattice multi-index `j ∈ ℤ^d`.
pub type MultiIndex = Vec<i64>;

/// `j · x` for a multi-index and a vector of reals.
#[inline]
pub fn dot(j: &[i64], x: &[f64]) -> f64 {
    j.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum()
}

/// Reduces an angle to `[0, 2π)`.
#[inline]
pub fn canonical_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// A point on the d-torus with every coordinate in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint(Vec<f64>);

impl TorusPoint {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::invalid("torus point needs at least one angle"));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("torus point angles must be finite"));
        }
        Ok(TorusPoint(theta.into_iter().map(canonical_angle).collect()))
    }

    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// The flow `Φ^t(θ) = θ + tα mod 2π` on the d-torus.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSystem {
    alpha: Vec<f64>,
}

/// A near-rational relation `α_i/α_k ≈ num/den` detected among frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalRelation {
    pub i: usize,
    pub k: usize,
    pub num: i64,
    pub den: i64,
    pub gap: f64,
}

impl RotationSystem {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("rotation needs at least one frequency"));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a == 0.0) {
            return Err(Error::invalid("rotation frequencies must be finite and nonzero"));
        }
        Ok(RotationSystem { alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Koopman eigenfrequency `j · α` of the character `γ_j`.
    pub fn frequency(&self, j: &[i64]) -> f64 {
        dot(j, &self.alpha)
    }

    /// First pair `(i, k)` whose ratio lies within `tol` of a rational with
    /// denominator at most `max_den`. Rational independence cannot be certified
    /// in floating point; this only flags the obvious failures.
    pub fn near_rational_relation(&self, max_den: i64, tol: f64) -> Option<RationalRelation> {
        let d = self.alpha.len();
        for i in 0..d {
            for k in (i + 1)..d {
                let ratio = self.alpha[i] / self.alpha[k];
                for den in 1..=max_den {
                    let num = (ratio * den as f64).round();
                    let gap = (ratio - num / den as f64).abs();
                    if gap <= tol {
                        return Some(RationalRelation { i, k, num: num as i64, den, gap });
                    }
                }
            }
        }
        None
    }
}

/// `(θ + tα) mod 2π`, componentwise.
pub fn flow(sys: &RotationSystem, x: &TorusPoint, t: f64) -> TorusPoint {
    assert_eq!(sys.dim(), x.dim(), "dimension mismatch between system and point");
    TorusPoint(
        x.0.iter()
            .zip(&sys.alpha)
            .map(|(th, a)| canonical_angle(th + t * a))
            .collect(),
    )
}

/// Samples of a rotation trajectory spaced `dt` apart.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub points: Vec<TorusPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with header `t,theta_0,...,theta_{d-1}` and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let d = self.points.first().map_or(0, TorusPoint::dim);
        let mut out = String::from("t");
        for i in 0..d {
            out.push_str(&format!(",theta_{i}"));
        }
        out.push('\n');
        for (n, p) in self.points.iter().enumerate() {
            out.push_str(&fmt_real(n as f64 * self.dt));
            for th in p.angles() {
                out.push(',');
                out.push_str(&fmt_real(*th));
            }
            out.push('\n');
        }
        out
    }
}

/// `x0, Φ^{dt} x0, …, Φ^{(N-1)dt} x0`. Each sample is computed from `x0`
/// directly so rounding does not accumulate along the trajectory.
pub fn sample_trajectory(sys: &RotationSystem, x0: &TorusPoint, dt: f64, n: usize) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::invalid("trajectory length must be at least 1"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("time step must be positive"));
    }
    if sys.dim() != x0.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: x0.dim() });
    }
    let points = (0..n).map(|k| flow(sys, x0, k as f64 * dt)).collect();
    Ok(Trajectory { dt, points })
}

/// Cyclic shift `i ↦ i+1 mod M` on M equally weighted points.
///
/// Point `i` sits at angle `2πi/M` on the circle, so the system is the
/// rotation by `2π/M` sampled on its own orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicOrbitSystem {
    m: usize,
}

impl PeriodicOrbitSystem {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("orbit needs at least one point"));
        }
        Ok(PeriodicOrbitSystem { m })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self, i: usize) -> usize {
        (i + 1) % self.m
    }

    pub fn angle(&self, i: usize) -> f64 {
        TAU * i as f64 / self.m as f64
    }

    /// Invariant measure: uniform weights `1/M`.
    pub fn weights(&self) -> Vec<f64> {
        vec![1.0 / self.m as f64; self.m]
    }

    /// Koopman operator `(Uf)(i) = f(i+1)` in the orthonormal point basis.
    pub fn koopman_matrix(&self) -> CMatrix {
        let mut u = CMatrix::zeros(self.m, self.m);
        for i in 0..self.m {
            u[(i, self.step(i))] = Complex64::new(1.0, 0.0);
        }
        u
    }
}

/// Band-limited function on the d-torus, `f(x) = Σ_j c_j e^{i j·x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierObservable {
    dim: usize,
    coeffs: BTreeMap<MultiIndex, Complex64>,
}

impl FourierObservable {
    pub fn zero(dim: usize) -> Self {
        assert!(dim >= 1);
        FourierObservable { dim, coeffs: BTreeMap::new() }
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (MultiIndex, Complex64)>) -> Result<Self> {
        let mut f = FourierObservable::zero(dim);
        for (j, c) in terms {
            if j.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: j.len() });
            }
            *f.coeffs.entry(j).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        Ok(f)
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut f = FourierObservable::zero(dim);
        f.coeffs.insert(vec![0; dim], Complex64::new(c, 0.0));
        f
    }

    /// The character `γ_j(x) = e^{i j·x}`.
    pub fn character(j: MultiIndex) -> Self {
        let dim = j.len();
        let mut f = FourierObservable::zero(dim);
        f.coeffs.insert(j, Complex64::new(1.0, 0.0));
        f
    }

    /// `cos θ_axis`.
    pub fn cosine(dim: usize, axis: usize) -> Self {
        assert!(axis < dim);
        let mut f = FourierObservable::zero(dim);
        let mut j = vec![0; dim];
        j[axis] = 1;
        f.coeffs.insert(j.clone(), Complex64::new(0.5, 0.0));
        j[axis] = -1;
        f.coeffs.insert(j, Complex64::new(0.5, 0.0));
        f
    }

    /// `sin θ_axis`.
    pub fn sine(dim: usize, axis: usize) -> Self {
        assert!(axis < dim);
        let mut f = FourierObservable::zero(dim);
        let mut j = vec![0; dim];
        j[axis] = 1;
        f.coeffs.insert(j.clone(), Complex64::new(0.0, -0.5));
        j[axis] = -1;
        f.coeffs.insert(j, Complex64::new(0.0, 0.5));
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeff(&self, j: &[i64]) -> Complex64 {
        self.coeffs.get(j).copied().unwrap_or_default()
    }

    pub fn set(&mut self, j: MultiIndex, c: Complex64) {
        assert_eq!(j.len(), self.dim);
        self.coeffs.insert(j, c);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest `|j_i|` over stored (nonzero or not) coefficients.
    pub fn bandwidth(&self) -> i64 {
        self.coeffs
            .keys()
            .flat_map(|j| j.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0)
    }

    /// `max_j |c_{-j} - conj(c_j)|`; zero for real-valued functions.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(j, c)| {
                let neg: MultiIndex = j.iter().map(|x| -x).collect();
                (self.coeff(&neg) - c.conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.conjugate_symmetry_defect() <= tol
    }

    /// ℓ² norm of the coefficients (the L² norm under normalized Haar measure).
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `Σ_j |c_j|`, an upper bound on the sup norm.
    pub fn l1_coeff_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    /// Coefficientwise map `c_j ↦ g(j, c_j)`.
    pub fn map_coeffs(&self, g: impl Fn(&[i64], Complex64) -> Complex64) -> Self {
        FourierObservable {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|(j, c)| (j.clone(), g(j, *c))).collect(),
        }
    }

    /// Largest coefficientwise difference against another observable.
    pub fn max_abs_diff(&self, other: &FourierObservable) -> f64 {
        let keys: std::collections::BTreeSet<&MultiIndex> = self.coeffs.keys().chain(other.coeffs.keys()).collect();
        keys.into_iter()
            .map(|j| (self.coeff(j) - other.coeff(j)).norm())
            .fold(0.0, f64::max)
    }
}

/// `Σ_j c_j e^{i j·x}`.
pub fn evaluate(f: &FourierObservable, x: &TorusPoint) -> Complex64 {
    assert_eq!(f.dim(), x.dim(), "dimension mismatch between observable and point");
    f.iter().map(|(j, c)| c * cis(dot(j, x.angles()))).sum()
}

/// Exact Koopman evolution `U^t f = f ∘ Φ^t`: `c_j ↦ e^{i t (j·α)} c_j`.
pub fn koopman_exact(f: &FourierObservable, sys: &RotationSystem, t: f64) -> FourierObservable {
    assert_eq!(f.dim(), sys.dim(), "dimension mismatch between observable and system");
    f.map_coeffs(|j, c| c * cis(t * sys.frequency(j)))
}

/// Product von Mises density `∏_i e^{κ_i cos(θ_i - μ_i)} / I_0(κ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VonMisesDensity {
    mu: Vec<f64>,
    kappa: Vec<f64>,
}

impl VonMisesDensity {
    pub fn new(mu: Vec<f64>, kappa: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || mu.len() != kappa.len() {
            return Err(Error::invalid("von Mises location and concentration must have equal, nonzero length"));
        }
        if kappa.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
            return Err(Error::invalid("von Mises concentrations must be positive and finite"));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("von Mises locations must be finite"));
        }
        Ok(VonMisesDensity { mu: mu.into_iter().map(canonical_angle).collect(), kappa })
    }

    /// Isotropic density centred at `x`.
    pub fn centered(x: &TorusPoint, kappa: f64) -> Result<Self> {
        VonMisesDensity::new(x.angles().to_vec(), vec![kappa; x.dim()])
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Point value of the density.
    pub fn density(&self, x: &TorusPoint) -> f64 {
        self.mu
            .iter()
            .zip(&self.kappa)
            .zip(x.angles())
            .map(|((m, k), th)| (k * (th - m).cos() - ln_bessel_i0(*k)).exp())
            .product()
    }

    /// `p^{1/n}` renormalized: again von Mises, with concentration `κ/n`.
    pub fn root(&self, n: u32) -> Self {
        assert!(n >= 1);
        VonMisesDensity {
            mu: self.mu.clone(),
            kappa: self.kappa.iter().map(|k| k / n as f64).collect(),
        }
    }

    /// Per-axis Fourier coefficients `I_{|j|}(κ)/I_0(κ) e^{-i j μ}` for `|j| ≤ J`.
    fn axis_coeffs(&self, axis: usize, bandwidth: usize) -> Vec<Complex64> {
        let ratios = bessel_i_ratios(self.kappa[axis], bandwidth);
        let jmax = bandwidth as i64;
        (-jmax..=jmax)
            .map(|j| ratios[j.unsigned_abs() as usize] * cis(-(j as f64) * self.mu[axis]))
            .collect()
    }
}

/// Fourier coefficients of a von Mises density truncated to `|j_i| ≤ J`.
pub fn von_mises_fourier(p: &VonMisesDensity, bandwidth: usize) -> FourierObservable {
    let d = p.dim();
    let axes: Vec<Vec<Complex64>> = (0..d).map(|a| p.axis_coeffs(a, bandwidth)).collect();
    let side = 2 * bandwidth + 1;
    let total = side.pow(d as u32);
    let mut f = FourierObservable::zero(d);
    for flat in 0..total {
        let mut rem = flat;
        let mut j = vec![0i64; d];
        let mut c = Complex64::new(1.0, 0.0);
        for a in (0..d).rev() {
            let k = rem % side;
            rem /= side;
            j[a] = k as i64 - bandwidth as i64;
            c *= axes[a][k];
        }
        f.coeffs.insert(j, c);
    }
    f
}
