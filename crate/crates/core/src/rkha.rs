//! Subexponential weights on the dual lattice, truncated Mercer kernels,
//! RKHA bases and comultiplication, and the diagonal smoothing operators.

use num_complex::Complex64;
use statrs::function::gamma::{gamma, gamma_ur};

use crate::dynamics::{dot, FourierObservable, MultiIndex, TorusPoint};
use crate::error::{Error, Result};
use crate::linalg::cis;
use crate::par::{map_indexed, Execution};

/// A positive, symmetric weight on `ℤ^d` with `λ(0) = 1`.
pub trait Weight: Sync {
    fn lambda(&self, j: &[i64]) -> f64;

    /// `ln λ(j)`, for callers that must avoid underflow.
    fn ln_lambda(&self, j: &[i64]) -> f64 {
        self.lambda(j).ln()
    }
}

/// `λ_τ(j) = ∏_i e^{-τ|j_i|^p}` with `τ > 0`, `0 < p < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubexpWeight {
    tau: f64,
    p: f64,
    d: usize,
}

impl SubexpWeight {
    pub fn new(tau: f64, p: f64, d: usize) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("p must lie in (0, 1), got {p}")));
        }
        if d == 0 {
            return Err(Error::invalid("weight dimension must be at least 1"));
        }
        Ok(SubexpWeight { tau, p, d })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Same exponent and dimension, different `τ`.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        SubexpWeight::new(tau, self.p, self.d)
    }

    /// `Σ_i |j_i|^p`.
    pub fn norm_p(&self, j: &[i64]) -> f64 {
        j.iter().map(|&x| (x.unsigned_abs() as f64).powf(self.p)).sum()
    }

    /// Upper bound on the weight mass outside the box `|j_i| ≤ J`, i.e. on
    /// `Σ_{j ∉ box} λ(j)`, which also bounds the sup-norm kernel truncation error.
    pub fn tail_bound(&self, bandwidth: usize) -> f64 {
        let s = 1.0 / self.p;
        let scale = 1.0 / (self.p * self.tau.powf(s));
        // λ is decreasing in |m|, so Σ_{m>J} λ(m) ≤ ∫_J^∞ e^{-τ m^p} dm.
        let x = self.tau * (bandwidth as f64).powf(self.p);
        let one_sided = scale * gamma(s) * gamma_ur(s, x);
        let total_1d = 1.0 + 2.0 * scale * gamma(s);
        self.d as f64 * 2.0 * one_sided * total_1d.powi(self.d as i32 - 1)
    }
}

impl Weight for SubexpWeight {
    fn lambda(&self, j: &[i64]) -> f64 {
        debug_assert_eq!(j.len(), self.d);
        (-self.tau * self.norm_p(j)).exp()
    }

    fn ln_lambda(&self, j: &[i64]) -> f64 {
        -self.tau * self.norm_p(j)
    }
}

/// The box `{ j ∈ ℤ^d : |j_i| ≤ J }` enumerated lexicographically in
/// `(j_1, …, j_d)`. Flat index is the mixed-radix number with digits `j_i + J`,
/// so negating `j` maps flat index `k` to `size - 1 - k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncatedLattice {
    d: usize,
    bandwidth: usize,
}

impl TruncatedLattice {
    pub fn new(d: usize, bandwidth: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("lattice dimension must be at least 1"));
        }
        let side = 2 * bandwidth + 1;
        if (side as u128).checked_pow(d as u32).is_none_or(|n| n > (1u128 << 40)) {
            return Err(Error::invalid("lattice too large"));
        }
        Ok(TruncatedLattice { d, bandwidth })
    }

    /// Smallest bandwidth whose truncation tail is at most `tol`.
    pub fn for_tail_bound(w: &SubexpWeight, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::invalid("tail tolerance must be positive"));
        }
        let mut hi = 1usize;
        while w.tail_bound(hi) > tol {
            hi *= 2;
            if hi > 1 << 30 {
                return Err(Error::invalid("tail tolerance unreachable"));
            }
        }
        let mut lo = hi / 2;
        while lo + 1 < hi {
            let mid = (lo + hi) / 2;
            if w.tail_bound(mid) > tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let j = if w.tail_bound(lo) <= tol { lo } else { hi };
        TruncatedLattice::new(w.dim(), j)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    fn side(&self) -> usize {
        2 * self.bandwidth + 1
    }

    pub fn size(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    pub fn contains(&self, j: &[i64]) -> bool {
        j.len() == self.d && j.iter().all(|x| x.unsigned_abs() as usize <= self.bandwidth)
    }

    pub fn index_of(&self, j: &[i64]) -> Option<usize> {
        if !self.contains(j) {
            return None;
        }
        let side = self.side();
        Some(j.iter().fold(0, |acc, &x| acc * side + (x + self.bandwidth as i64) as usize))
    }

    pub fn multi_index(&self, mut k: usize) -> MultiIndex {
        debug_assert!(k < self.size());
        let side = self.side();
        let mut j = vec![0i64; self.d];
        for slot in j.iter_mut().rev() {
            *slot = (k % side) as i64 - self.bandwidth as i64;
            k /= side;
        }
        j
    }

    /// Flat index of `-j` given the flat index of `j`.
    pub fn negated(&self, k: usize) -> usize {
        self.size() - 1 - k
    }

    pub fn zero_index(&self) -> usize {
        self.size() / 2
    }

    pub fn iter(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        (0..self.size()).map(move |k| self.multi_index(k))
    }

    /// `λ(j)` at every lattice point, in lattice order.
    pub fn weights(&self, w: &impl Weight) -> Vec<f64> {
        self.iter().map(|j| w.lambda(&j)).collect()
    }

    /// Dense coefficient vector of `f` in lattice order.
    pub fn vectorize(&self, f: &FourierObservable) -> Result<Vec<Complex64>> {
        if f.dim() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: f.dim() });
        }
        let mut v = vec![Complex64::default(); self.size()];
        for (j, c) in f.iter() {
            match self.index_of(j) {
                Some(k) => v[k] = *c,
                None if c.norm() == 0.0 => {}
                None => return Err(Error::OutOfLattice { index: j.clone() }),
            }
        }
        Ok(v)
    }

    /// Observable with the given dense coefficients; exact zeros are dropped.
    pub fn observable(&self, v: &[Complex64]) -> FourierObservable {
        assert_eq!(v.len(), self.size());
        let terms = v
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() != 0.0)
            .map(|(k, c)| (self.multi_index(k), *c));
        FourierObservable::from_terms(self.d, terms).expect("lattice indices have lattice dimension")
    }
}

fn check_point(lat: &TruncatedLattice, x: &TorusPoint) {
    assert_eq!(lat.dim(), x.dim(), "dimension mismatch between lattice and point");
}

/// Truncated Mercer series `k(x, y) = Σ_j λ(j) e^{i j·(y-x)}`.
pub fn kernel_eval(w: &impl Weight, lat: &TruncatedLattice, x: &TorusPoint, y: &TorusPoint) -> Complex64 {
    check_point(lat, x);
    check_point(lat, y);
    let diff: Vec<f64> = y.angles().iter().zip(x.angles()).map(|(b, a)| b - a).collect();
    lat.iter().map(|j| w.lambda(&j) * cis(dot(&j, &diff))).sum()
}

/// `k(x, y_l)` for every `y_l`, with the lattice weights computed once.
pub fn kernel_row(
    w: &impl Weight,
    lat: &TruncatedLattice,
    x: &TorusPoint,
    ys: &[TorusPoint],
    exec: Execution,
) -> Vec<Complex64> {
    check_point(lat, x);
    let lam = lat.weights(w);
    let idx: Vec<MultiIndex> = lat.iter().collect();
    map_indexed(exec, ys.len(), |l| {
        check_point(lat, &ys[l]);
        let diff: Vec<f64> = ys[l].angles().iter().zip(x.angles()).map(|(b, a)| b - a).collect();
        idx.iter().zip(&lam).map(|(j, l)| l * cis(dot(j, &diff))).sum()
    })
}

/// Truncated self-convolution `(λ*λ)(γ) = Σ_{α, γ-α ∈ lat} λ(α) λ(γ-α)` in lattice order.
pub fn self_convolution(w: &impl Weight, lat: &TruncatedLattice, exec: Execution) -> Vec<f64> {
    let lam = lat.weights(w);
    let idx: Vec<MultiIndex> = lat.iter().collect();
    map_indexed(exec, lat.size(), |g| {
        let gamma = &idx[g];
        let mut acc = 0.0;
        for (a, alpha) in idx.iter().enumerate() {
            let beta: MultiIndex = gamma.iter().zip(alpha).map(|(x, y)| x - y).collect();
            if let Some(b) = lat.index_of(&beta) {
                acc += lam[a] * lam[b];
            }
        }
        acc
    })
}

/// `max_{j ∈ lat} (λ*λ)(j) / λ(j)` with the convolution truncated to `lat`.
pub fn subconvolutivity_constant(w: &impl Weight, lat: &TruncatedLattice) -> f64 {
    subconvolutivity_constant_with(w, lat, Execution::default())
}

pub fn subconvolutivity_constant_with(w: &impl Weight, lat: &TruncatedLattice, exec: Execution) -> f64 {
    let conv = self_convolution(w, lat, exec);
    lat.iter()
        .zip(conv)
        .map(|(j, c)| c / w.lambda(&j))
        .fold(0.0, f64::max)
}

/// `λ(nγ)^{1/n}` for `n = 1..=nmax`.
pub fn grs_check(w: &impl Weight, gamma: &[i64], nmax: usize) -> Result<Vec<f64>> {
    if gamma.iter().all(|&x| x == 0) {
        return Err(Error::invalid("GRS check needs a nonzero multi-index"));
    }
    Ok((1..=nmax as i64)
        .map(|n| {
            let ng: MultiIndex = gamma.iter().map(|x| n * x).collect();
            (w.ln_lambda(&ng) / n as f64).exp()
        })
        .collect())
}

/// Partial sum of the Beurling–Domar series `Σ_n ln(1/λ(nγ)) / n²` together
/// with an upper bound on the omitted tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdReport {
    pub partial_sum: f64,
    pub tail_bound: f64,
    pub terms: usize,
}

impl BdReport {
    pub fn upper_bound(&self) -> f64 {
        self.partial_sum + self.tail_bound
    }
}

pub fn bd_check(w: &SubexpWeight, gamma: &[i64], nmax: usize) -> Result<BdReport> {
    if gamma.iter().all(|&x| x == 0) {
        return Err(Error::invalid("BD check needs a nonzero multi-index"));
    }
    if nmax == 0 {
        return Err(Error::invalid("BD check needs at least one term"));
    }
    let mut partial = 0.0;
    for n in 1..=nmax as i64 {
        let ng: MultiIndex = gamma.iter().map(|x| n * x).collect();
        partial += -w.ln_lambda(&ng) / (n * n) as f64;
    }
    // ln(1/λ(nγ)) = τ n^p Σ|γ_i|^p and Σ_{n>N} n^{p-2} ≤ N^{p-1} / (1-p).
    let tail = w.tau() * w.norm_p(gamma) * (nmax as f64).powf(w.p() - 1.0) / (1.0 - w.p());
    Ok(BdReport { partial_sum: partial, tail_bound: tail, terms: nmax })
}

/// `√(λ(α)λ(β)/λ(γ))`, the coefficient of `ψ_α ⊗ ψ_β` in `Δψ_γ`.
#[inline]
pub fn comult_coeff(w: &impl Weight, alpha: &[i64], beta: &[i64], gamma: &[i64]) -> f64 {
    (0.5 * (w.ln_lambda(alpha) + w.ln_lambda(beta) - w.ln_lambda(gamma))).exp()
}

/// All `(α, β)` in `lat` with `α + β = γ`, in lattice order of `α`, with
/// their comultiplication coefficients.
pub fn comult_coeffs(
    w: &impl Weight,
    gamma: &[i64],
    lat: &TruncatedLattice,
) -> Result<Vec<(MultiIndex, MultiIndex, f64)>> {
    if !lat.contains(gamma) {
        return Err(Error::OutOfLattice { index: gamma.to_vec() });
    }
    Ok(lat
        .iter()
        .filter_map(|alpha| {
            let beta: MultiIndex = gamma.iter().zip(&alpha).map(|(g, a)| g - a).collect();
            lat.contains(&beta).then(|| {
                let c = comult_coeff(w, &alpha, &beta, gamma);
                (alpha, beta, c)
            })
        })
        .collect())
}

/// Coordinates of the feature vector `k_x` in the `ψ_j` basis: `√λ(j) e^{-i j·x}`.
pub fn feature_coeffs(w: &impl Weight, lat: &TruncatedLattice, x: &TorusPoint) -> Vec<Complex64> {
    check_point(lat, x);
    lat.iter()
        .map(|j| w.lambda(&j).sqrt() * cis(-dot(&j, x.angles())))
        .collect()
}

/// Product in the algebra, in `ψ` coordinates truncated to `lat`:
/// `(a·b)_γ = Σ_{α+β=γ} √(λ(α)λ(β)/λ(γ)) a_α b_β`. This is also `Δ*(a ⊗ b)`.
pub fn psi_product(
    w: &impl Weight,
    lat: &TruncatedLattice,
    a: &[Complex64],
    b: &[Complex64],
    exec: Execution,
) -> Vec<Complex64> {
    assert_eq!(a.len(), lat.size());
    assert_eq!(b.len(), lat.size());
    let sqrt_lam: Vec<f64> = lat.weights(w).iter().map(|l| l.sqrt()).collect();
    let idx: Vec<MultiIndex> = lat.iter().collect();
    let support: Vec<usize> = (0..a.len()).filter(|&k| a[k].norm() != 0.0).collect();
    map_indexed(exec, lat.size(), |g| {
        let mut acc = Complex64::default();
        for &ai in &support {
            let beta: MultiIndex = idx[g].iter().zip(&idx[ai]).map(|(x, y)| x - y).collect();
            if let Some(bi) = lat.index_of(&beta) {
                acc += a[ai] * b[bi] * (sqrt_lam[ai] * sqrt_lam[bi] / sqrt_lam[g]);
            }
        }
        acc
    })
}

/// Which diagonal operator a [`DiagonalSmoother`] realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherRole {
    /// `G_τ = K_τ* K_τ` on L² Fourier coefficients: `c_j ↦ λ(j) c_j`.
    G,
    /// `K_τ`: L² coefficients in, `ψ_j` coordinates out: `c_j ↦ √λ(j) c_j`.
    K,
    /// `K_τ*`: `ψ_j` coordinates in, L² coefficients out: `d_j ↦ √λ(j) d_j`.
    KStar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalSmoother {
    pub weight: SubexpWeight,
    pub role: SmootherRole,
}

impl DiagonalSmoother {
    pub fn new(weight: SubexpWeight, role: SmootherRole) -> Self {
        DiagonalSmoother { weight, role }
    }

    pub fn multiplier(&self, j: &[i64]) -> f64 {
        match self.role {
            SmootherRole::G => self.weight.lambda(j),
            SmootherRole::K | SmootherRole::KStar => {
                (0.5 * self.weight.ln_lambda(j)).exp()
            }
        }
    }
}

pub fn apply_smoother(op: &DiagonalSmoother, f: &FourierObservable) -> FourierObservable {
    assert_eq!(op.weight.dim(), f.dim(), "dimension mismatch between smoother and observable");
    f.map_coeffs(|j, c| c * op.multiplier(j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    struct Delta;
    impl Weight for Delta {
        fn lambda(&self, j: &[i64]) -> f64 {
            if j.iter().all(|&x| x == 0) {
                1.0
            } else {
                0.0
            }
        }
        fn ln_lambda(&self, j: &[i64]) -> f64 {
            self.lambda(j).ln()
        }
    }

    fn w1(tau: f64) -> SubexpWeight {
        SubexpWeight::new(tau, 0.5, 1).unwrap()
    }

    fn pt(x: &[f64]) -> TorusPoint {
        TorusPoint::new(x.to_vec()).unwrap()
    }

    #[test]
    fn weight_values() {
        assert_eq!(w1(1.0).lambda(&[0]), 1.0);
        assert_relative_eq!(w1(1.0).lambda(&[4]), (-2.0f64).exp(), max_relative = 1e-15);
        let w = SubexpWeight::new(0.5, 0.5, 2).unwrap();
        assert_relative_eq!(w.lambda(&[1, 4]), (-1.5f64).exp(), max_relative = 1e-15);
        assert!(SubexpWeight::new(0.0, 0.5, 1).is_err());
        assert!(SubexpWeight::new(1.0, 1.0, 1).is_err());
    }

    #[test]
    fn lattice_order_and_negation() {
        let lat = TruncatedLattice::new(2, 1).unwrap();
        let all: Vec<MultiIndex> = lat.iter().collect();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0], vec![-1, -1]);
        assert_eq!(all[1], vec![-1, 0]);
        assert_eq!(all[4], vec![0, 0]);
        assert_eq!(lat.zero_index(), 4);
        for (k, j) in all.iter().enumerate() {
            assert_eq!(lat.index_of(j), Some(k));
            let neg: MultiIndex = j.iter().map(|x| -x).collect();
            assert_eq!(lat.multi_index(lat.negated(k)), neg);
        }
        assert_eq!(lat.index_of(&[2, 0]), None);
    }

    #[test]
    fn kernel_diagonal_matches_series() {
        let lat = TruncatedLattice::new(1, 50).unwrap();
        let x = pt(&[0.4]);
        let expected = 1.0 + 2.0 * (1..=50).map(|m| (-(m as f64).sqrt()).exp()).sum::<f64>();
        let k = kernel_eval(&w1(1.0), &lat, &x, &x);
        assert_relative_eq!(k.re, expected, max_relative = 1e-14);
        assert!(k.im.abs() < 1e-12);
    }

    #[test]
    fn kernel_integrates_to_one_and_stays_nonnegative() {
        let lat = TruncatedLattice::new(1, 64).unwrap();
        let x = pt(&[1.0]);
        let ys: Vec<TorusPoint> = (0..512).map(|l| pt(&[TAU * l as f64 / 512.0])).collect();
        let row = kernel_row(&w1(1.0), &lat, &x, &ys, Execution::default());
        let mean = row.iter().map(|c| c.re).sum::<f64>() / 512.0;
        assert!((mean - 1.0).abs() < 1e-8);
        let min = row.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-10, "min {min}");
    }

    #[test]
    fn tail_bound_lattice_restores_positivity() {
        let w = w1(0.1);
        let lat = TruncatedLattice::for_tail_bound(&w, 1e-3).unwrap();
        assert!(w.tail_bound(lat.bandwidth()) <= 1e-3);
        assert!(w.tail_bound(lat.bandwidth() - 1) > 1e-3);
        let ys: Vec<TorusPoint> = (0..512).map(|l| pt(&[TAU * l as f64 / 512.0])).collect();
        let row = kernel_row(&w, &lat, &pt(&[0.0]), &ys, Execution::default());
        let min = row.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-10, "min {min} at J={}", lat.bandwidth());
    }

    #[test]
    fn tail_bound_dominates_actual_tail() {
        let w = w1(1.0);
        for j in [4usize, 16, 64] {
            let actual: f64 = 2.0 * (j as i64 + 1..20_000).map(|m| w.lambda(&[m])).sum::<f64>();
            assert!(w.tail_bound(j) >= actual);
        }
    }

    #[test]
    fn delta_weight_is_subconvolutive_with_one() {
        let lat = TruncatedLattice::new(1, 4).unwrap();
        let conv = self_convolution(&Delta, &lat, Execution::Sequential);
        assert_eq!(conv[lat.zero_index()], 1.0);
        // 0/0 off the support; the constant is read at the support only
        let c = conv[lat.zero_index()] / Delta.lambda(&[0]);
        assert_eq!(c, 1.0);
    }

    #[test]
    fn subconvolutivity_grows_slowly() {
        let w = w1(1.0);
        let cs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&j| subconvolutivity_constant(&w, &TruncatedLattice::new(1, j).unwrap()))
            .collect();
        assert!(cs[0] < cs[1] && cs[1] < cs[2]);
        assert!(cs[1] / cs[0] <= 1.5 && cs[2] / cs[1] <= 1.5);
    }

    #[test]
    fn convolution_at_zero_is_sum_of_squares() {
        let w = w1(1.0);
        let lat = TruncatedLattice::new(1, 32).unwrap();
        let conv = self_convolution(&w, &lat, Execution::default());
        let direct: f64 = lat.weights(&w).iter().map(|l| l * l).sum();
        assert_relative_eq!(conv[lat.zero_index()], direct, max_relative = 1e-12);
    }

    #[test]
    fn grs_sequence() {
        let w = w1(1.0);
        let s = grs_check(&w, &[1], 10_000).unwrap();
        assert_relative_eq!(s[99], (-0.1f64).exp(), max_relative = 1e-14);
        assert!(s.windows(2).all(|p| p[1] > p[0]));
        assert!(1.0 - s[9_999] <= 0.01);
        assert!(grs_check(&w, &[0], 3).is_err());
    }

    #[test]
    fn bd_series_converges() {
        let w = w1(1.0);
        let r = bd_check(&w, &[1], 100_000).unwrap();
        assert!(r.partial_sum.is_finite() && r.tail_bound < 0.02);
        // Σ n^{-3/2} = ζ(3/2) ≈ 2.612; partial sum plus tail brackets it
        assert!(r.partial_sum < 2.6124 && r.upper_bound() > 2.6123);
    }

    #[test]
    fn comult_unit_terms_and_norm() {
        let w = w1(1.0);
        let lat = TruncatedLattice::new(1, 8).unwrap();
        let terms = comult_coeffs(&w, &[3], &lat).unwrap();
        let unit: Vec<f64> = terms
            .iter()
            .filter(|(a, b, _)| (a == &vec![0] && b == &vec![3]) || (a == &vec![3] && b == &vec![0]))
            .map(|t| t.2)
            .collect();
        assert_eq!(unit.len(), 2);
        for c in unit {
            assert!((c - 1.0).abs() < 1e-15);
        }
        let sq: f64 = terms.iter().map(|t| t.2 * t.2).sum();
        let conv = self_convolution(&w, &lat, Execution::Sequential);
        let k = lat.index_of(&[3]).unwrap();
        assert_relative_eq!(sq, conv[k] / w.lambda(&[3]), max_relative = 1e-12);
        assert!(comult_coeffs(&w, &[9], &lat).is_err());
    }

    #[test]
    fn coassociativity_on_small_lattices() {
        // (Δ⊗Id)Δψ_γ and (Id⊗Δ)Δψ_γ both expand to Σ_{α+β+δ=γ} c ψ_α⊗ψ_β⊗ψ_δ;
        // compare coefficients over triples whose partial sums stay in the lattice.
        let w = w1(0.7);
        for jmax in 1..=3 {
            let lat = TruncatedLattice::new(1, jmax).unwrap();
            for g in lat.iter() {
                for (ab, d, c1) in comult_coeffs(&w, &g, &lat).unwrap() {
                    for (a, b, c2) in comult_coeffs(&w, &ab, &lat).unwrap() {
                        let bd = vec![b[0] + d[0]];
                        if !lat.contains(&bd) {
                            continue;
                        }
                        let right = comult_coeff(&w, &a, &bd, &g) * comult_coeff(&w, &b, &d, &bd);
                        assert!((c1 * c2 - right).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn feature_map_reproduces_kernel() {
        let w = SubexpWeight::new(0.8, 0.5, 2).unwrap();
        let lat = TruncatedLattice::new(2, 6).unwrap();
        let x = pt(&[0.3, 2.0]);
        let y = pt(&[5.1, 1.2]);
        let fx = feature_coeffs(&w, &lat, &x);
        let fy = feature_coeffs(&w, &lat, &y);
        assert_eq!(fx[lat.zero_index()], Complex64::new(1.0, 0.0));
        let inner: Complex64 = fx.iter().zip(&fy).map(|(a, b)| a * b.conj()).sum();
        assert!((inner - kernel_eval(&w, &lat, &x, &y)).norm() < 1e-12);
        let nrm: f64 = fx.iter().map(|c| c.norm_sqr()).sum();
        assert!((nrm - kernel_eval(&w, &lat, &x, &x).re).abs() < 1e-12);
    }

    #[test]
    fn psi_product_matches_pointwise_product() {
        let w = w1(0.5);
        let lat = TruncatedLattice::new(1, 6).unwrap();
        let sl: Vec<f64> = lat.weights(&w).iter().map(|l| l.sqrt()).collect();
        // f = cos θ and g = sin 2θ in ψ coordinates
        let mut a = vec![Complex64::default(); lat.size()];
        let mut b = a.clone();
        for (j, c) in [(1i64, Complex64::new(0.5, 0.0)), (-1, Complex64::new(0.5, 0.0))] {
            let k = lat.index_of(&[j]).unwrap();
            a[k] = c / sl[k];
        }
        for (j, c) in [(2i64, Complex64::new(0.0, -0.5)), (-2, Complex64::new(0.0, 0.5))] {
            let k = lat.index_of(&[j]).unwrap();
            b[k] = c / sl[k];
        }
        let prod = psi_product(&w, &lat, &a, &b, Execution::Sequential);
        let th = 0.9;
        let val: Complex64 = lat.iter().zip(&prod).zip(&sl).map(|((j, p), s)| p * s * cis(j[0] as f64 * th)).sum();
        assert!((val.re - th.cos() * (2.0 * th).sin()).abs() < 1e-14);
        let par = psi_product(&w, &lat, &a, &b, Execution::default());
        assert_eq!(prod, par);
    }

    #[test]
    fn smoother_compositions() {
        let w = w1(0.3);
        let s = w1(0.2);
        let f = FourierObservable::from_terms(
            1,
            (-4..=4).map(|j| (vec![j], Complex64::new(1.0 / (1 + j * j) as f64, j as f64 * 0.1))),
        )
        .unwrap();
        let g = |w: SubexpWeight| DiagonalSmoother::new(w, SmootherRole::G);
        let c = FourierObservable::constant(1, 2.0);
        assert_eq!(apply_smoother(&g(w), &c), c);
        let gg = apply_smoother(&g(w), &apply_smoother(&g(s), &f));
        let g_sum = apply_smoother(&g(w1(0.5)), &f);
        assert!(gg.max_abs_diff(&g_sum) < 4.0 * f64::EPSILON);
        let kk = apply_smoother(
            &DiagonalSmoother::new(w, SmootherRole::KStar),
            &apply_smoother(&DiagonalSmoother::new(w, SmootherRole::K), &f),
        );
        assert!(kk.max_abs_diff(&apply_smoother(&g(w), &f)) < 1e-15);
    }

    proptest! {
        #[test]
        fn weights_form_a_semigroup(t in 0.01f64..3.0, s in 0.01f64..3.0, p in 0.1f64..0.9, j in -200i64..200, k in -200i64..200) {
            let a = SubexpWeight::new(t, p, 2).unwrap();
            let b = SubexpWeight::new(s, p, 2).unwrap();
            let c = SubexpWeight::new(t + s, p, 2).unwrap();
            let lhs = a.lambda(&[j, k]) * b.lambda(&[j, k]);
            let rhs = c.lambda(&[j, k]);
            prop_assert!((lhs - rhs).abs() <= 8.0 * f64::EPSILON * (1.0 - rhs.ln()) * rhs);
            prop_assert!(a.lambda(&[j, k]) <= 1.0 && a.lambda(&[j, k]) == a.lambda(&[-j, -k]));
        }

        #[test]
        fn kernel_is_hermitian_and_real(x in 0.0f64..TAU, y in 0.0f64..TAU, tau in 0.2f64..2.0) {
            let w = w1(tau);
            let lat = TruncatedLattice::new(1, 20).unwrap();
            let kxy = kernel_eval(&w, &lat, &pt(&[x]), &pt(&[y]));
            let kyx = kernel_eval(&w, &lat, &pt(&[y]), &pt(&[x]));
            prop_assert!((kxy - kyx.conj()).norm() < 1e-14);
            prop_assert!(kxy.im.abs() < 1e-12);
        }

        #[test]
        fn kernel_gram_is_psd(xs in proptest::collection::vec((0.0f64..TAU, 0.0f64..TAU), 2..32)) {
            let w = SubexpWeight::new(0.5, 0.5, 2).unwrap();
            let lat = TruncatedLattice::new(2, 8).unwrap();
            let pts: Vec<TorusPoint> = xs.iter().map(|(a, b)| pt(&[*a, *b])).collect();
            let n = pts.len();
            let g = crate::linalg::CMatrix::from_fn(n, n, |r, c| kernel_eval(&w, &lat, &pts[r], &pts[c]));
            let g = crate::linalg::hermitian_part(&g);
            prop_assert!(crate::linalg::min_eigenvalue(&g) >= -1e-10);
        }
    }
}
