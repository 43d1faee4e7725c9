//! Truncated weighted symmetric Fock space over a finite set of generator
//! eigenmodes, in the occupation-number basis.
//!
//! The basis element with occupation `(n_0, …, n_{M-1})` is the symmetric
//! product `ζ_0^{∨n_0} ∨ ⋯ ∨ ζ_{M-1}^{∨n_{M-1}}` of orthonormal modes. Its
//! squared norm is `w²(n) ∏ n_k! / n!` with `n = Σ n_k`, and distinct
//! occupations are orthogonal.

mod forecast;
mod spectrum;
mod tensor_net;

pub use forecast::{
    second_quantization_forecast, second_quantization_forecast_with, SqForecast, SqParams,
};
pub use spectrum::{gelfand_eval, spectrum_rotate, xi_series, SpectrumTorusPoint};
pub use tensor_net::{tensor_network_expectation, tensor_network_expectation_with, TnParams, TnResult};

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::koopman::GeneratorSpec;
use crate::linalg::{cis, CVector};

/// Occupation numbers `n_k` per mode.
pub type Occupation = Vec<u32>;

/// `w(n) = e^{σ_w n^{p_w}}` together with the grading cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockWeight {
    sigma_w: f64,
    p_w: f64,
    nmax: u32,
}

impl Default for FockWeight {
    fn default() -> Self {
        FockWeight { sigma_w: 1.5, p_w: 0.9, nmax: 6 }
    }
}

impl FockWeight {
    pub fn new(sigma_w: f64, p_w: f64, nmax: u32) -> Result<Self> {
        if !(sigma_w > 0.0) || !sigma_w.is_finite() {
            return Err(Error::invalid("Fock weight sigma_w must be positive"));
        }
        if !(p_w > 0.0 && p_w < 1.0) {
            return Err(Error::invalid("Fock weight p_w must lie in (0, 1)"));
        }
        Ok(FockWeight { sigma_w, p_w, nmax })
    }

    pub fn nmax(&self) -> u32 {
        self.nmax
    }

    pub fn sigma_w(&self) -> f64 {
        self.sigma_w
    }

    pub fn p_w(&self) -> f64 {
        self.p_w
    }

    pub fn w(&self, n: u32) -> f64 {
        (self.sigma_w * (n as f64).powf(self.p_w)).exp()
    }

    /// `w^{-2}(n)`.
    pub fn inv_w2(&self, n: u32) -> f64 {
        (-2.0 * self.sigma_w * (n as f64).powf(self.p_w)).exp()
    }

    /// `Σ_{n > Nmax} w^{-2}(n)`, summed until the terms drop below `1e-300`.
    pub fn tail(&self) -> f64 {
        let mut total = 0.0;
        let mut n = self.nmax + 1;
        loop {
            let term = self.inv_w2(n);
            total += term;
            if term < 1e-300 || n == u32::MAX {
                return total;
            }
            n += 1;
        }
    }

    /// `Σ_{n ≤ Nmax} w^{-2}(n)`.
    pub fn partial_sum(&self) -> f64 {
        (0..=self.nmax).map(|n| self.inv_w2(n)).sum()
    }
}

/// `n!` as a float; exact for the gradings used here.
pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

pub fn grading(occ: &[u32]) -> u32 {
    occ.iter().sum()
}

/// `∏ n_k! / n!`, the unweighted squared norm of an occupation element.
pub fn occupation_norm_factor(occ: &[u32]) -> f64 {
    occ.iter().map(|&k| factorial(k)).product::<f64>() / factorial(grading(occ))
}

/// All occupations of `modes` modes with total grading `n`, in lexicographic order.
pub fn occupations(modes: usize, n: u32) -> Vec<Occupation> {
    fn rec(prefix: &mut Occupation, modes: usize, left: u32, out: &mut Vec<Occupation>) {
        if prefix.len() + 1 == modes {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(prefix, modes, left - k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if modes == 0 {
        if n == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(&mut Vec::with_capacity(modes), modes, n, &mut out);
    out
}

/// Finite combination of occupation basis elements.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    modes: usize,
    terms: BTreeMap<Occupation, Complex64>,
}

impl FockVector {
    pub fn zero(modes: usize) -> Self {
        FockVector { modes, terms: BTreeMap::new() }
    }

    /// The vacuum `Ω`.
    pub fn vacuum(modes: usize) -> Self {
        Self::basis(vec![0; modes])
    }

    /// A single occupation basis element with amplitude 1.
    pub fn basis(occ: Occupation) -> Self {
        let modes = occ.len();
        let mut v = FockVector::zero(modes);
        v.terms.insert(occ, Complex64::new(1.0, 0.0));
        v
    }

    /// `ζ_k`.
    pub fn mode(modes: usize, k: usize) -> Self {
        assert!(k < modes);
        let mut occ = vec![0; modes];
        occ[k] = 1;
        Self::basis(occ)
    }

    pub fn from_terms(modes: usize, terms: impl IntoIterator<Item = (Occupation, Complex64)>) -> Result<Self> {
        let mut v = FockVector::zero(modes);
        for (occ, c) in terms {
            if occ.len() != modes {
                return Err(Error::DimensionMismatch { expected: modes, got: occ.len() });
            }
            *v.terms.entry(occ).or_default() += c;
        }
        Ok(v)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn amplitude(&self, occ: &[u32]) -> Complex64 {
        self.terms.get(occ).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Occupation, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_grading(&self) -> u32 {
        self.terms.keys().map(|o| grading(o)).max().unwrap_or(0)
    }

    /// Component of grading `n`.
    pub fn grade(&self, n: u32) -> FockVector {
        FockVector {
            modes: self.modes,
            terms: self.terms.iter().filter(|(o, _)| grading(o) == n).map(|(o, c)| (o.clone(), *c)).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> FockVector {
        self.map(|_, c| c * s)
    }

    pub fn add(&self, other: &FockVector) -> FockVector {
        assert_eq!(self.modes, other.modes);
        let mut out = self.clone();
        for (o, c) in &other.terms {
            *out.terms.entry(o.clone()).or_default() += c;
        }
        out
    }

    pub fn map(&self, g: impl Fn(&[u32], Complex64) -> Complex64) -> FockVector {
        FockVector { modes: self.modes, terms: self.terms.iter().map(|(o, c)| (o.clone(), g(o, *c))).collect() }
    }

    /// Largest amplitude difference against another vector.
    pub fn max_abs_diff(&self, other: &FockVector) -> f64 {
        let mut worst = 0.0f64;
        for (o, c) in &self.terms {
            worst = worst.max((c - other.amplitude(o)).norm());
        }
        for (o, c) in &other.terms {
            if !self.terms.contains_key(o) {
                worst = worst.max(c.norm());
            }
        }
        worst
    }
}

/// `⟨u, v⟩`, conjugate-linear in `u`.
pub fn fock_inner(w: &FockWeight, u: &FockVector, v: &FockVector) -> Complex64 {
    assert_eq!(u.modes, v.modes, "Fock vectors over different mode sets");
    let (small, large, flip) = if u.len() <= v.len() { (u, v, false) } else { (v, u, true) };
    let mut acc = Complex64::default();
    for (occ, a) in &small.terms {
        if let Some(b) = large.terms.get(occ) {
            let n = grading(occ);
            let g = w.w(n).powi(2) * occupation_norm_factor(occ);
            acc += if flip { b.conj() * a } else { a.conj() * b } * g;
        }
    }
    acc
}

pub fn fock_norm(w: &FockWeight, u: &FockVector) -> f64 {
    fock_inner(w, u, u).re.max(0.0).sqrt()
}

/// `u ∨ v` truncated at grading `Nmax`; also returns the norm of the dropped part.
pub fn sym_product(w: &FockWeight, u: &FockVector, v: &FockVector) -> (FockVector, f64) {
    assert_eq!(u.modes, v.modes, "Fock vectors over different mode sets");
    let mut kept = FockVector::zero(u.modes);
    let mut dropped = FockVector::zero(u.modes);
    for (a, ca) in &u.terms {
        for (b, cb) in &v.terms {
            let occ: Occupation = a.iter().zip(b).map(|(x, y)| x + y).collect();
            let target = if grading(&occ) <= w.nmax { &mut kept } else { &mut dropped };
            *target.terms.entry(occ).or_default() += ca * cb;
        }
    }
    let mass = fock_norm(w, &dropped);
    (kept, mass)
}

/// `η^{∨n}` for `η = Σ_k c_k ζ_k`: multinomial expansion over occupations of grading `n`.
pub fn symmetric_power(c: &[Complex64], n: u32) -> FockVector {
    let modes = c.len();
    let nf = factorial(n);
    let terms = occupations(modes, n).into_iter().map(|occ| {
        let mut amp = Complex64::new(nf, 0.0);
        for (k, &nk) in occ.iter().enumerate() {
            amp = amp * c[k].powu(nk) / factorial(nk);
        }
        (occ, amp)
    });
    FockVector::from_terms(modes, terms).expect("occupations have the mode count")
}

/// Generator eigenmodes lifted to the Fock space: frequencies and lattice
/// coordinates of the eigenvectors `ζ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    omegas: Vec<f64>,
    vectors: Vec<CVector>,
}

impl ModeSet {
    /// The first `m` sorted eigenpairs of `gen`.
    pub fn from_generator(gen: &GeneratorSpec, m: usize) -> Result<Self> {
        if m == 0 || m > gen.lattice().size() {
            return Err(Error::invalid(format!("mode count {m} outside 1..={}", gen.lattice().size())));
        }
        let pairs = gen.leading_eigenpairs(m);
        Ok(ModeSet {
            omegas: pairs.iter().map(|p| p.omega).collect(),
            vectors: pairs.into_iter().map(|p| p.vector).collect(),
        })
    }

    /// Modes with given frequencies and no lattice representation.
    pub fn from_frequencies(omegas: Vec<f64>) -> Self {
        ModeSet { vectors: Vec::new(), omegas }
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    /// Lattice coordinates of `ζ_k`, if the set came from a generator.
    pub fn vector(&self, k: usize) -> Option<&CVector> {
        self.vectors.get(k)
    }

    /// Coordinates `⟨ζ_k, v⟩` of a lattice vector along every mode.
    pub fn project(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.vectors.len(), self.omegas.len(), "mode set has no lattice vectors");
        self.vectors
            .iter()
            .map(|z| z.iter().zip(v).map(|(a, b)| a.conj() * b).sum())
            .collect()
    }

    /// `Σ_k n_k ω_k`.
    pub fn occupation_frequency(&self, occ: &[u32]) -> f64 {
        occ.iter().zip(&self.omegas).map(|(&n, w)| n as f64 * w).sum()
    }
}

fn check_modes(modes: &ModeSet, v: &FockVector) {
    assert_eq!(modes.len(), v.modes(), "Fock vector and mode set disagree on the mode count");
}

/// `W̃ v`: each occupation element scales by `i Σ n_k ω_k`.
pub fn lifted_generator_apply(modes: &ModeSet, v: &FockVector) -> FockVector {
    check_modes(modes, v);
    v.map(|occ, c| c * Complex64::new(0.0, modes.occupation_frequency(occ)))
}

/// `Ũ^t v`: each occupation element gains the phase `e^{i t Σ n_k ω_k}`.
pub fn lifted_evolve(modes: &ModeSet, v: &FockVector, t: f64) -> FockVector {
    check_modes(modes, v);
    v.map(|occ, c| c * cis(t * modes.occupation_frequency(occ)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    /// Permutation-sum inner product of `f_1∨⋯∨f_n` and `g_1∨⋯∨g_n` for
    /// orthonormal modes, straight from the definition.
    fn permutation_inner(w: &FockWeight, f: &[usize], g: &[usize]) -> f64 {
        fn perms(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in perms(n - 1) {
                for pos in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(pos, n - 1);
                    out.push(q);
                }
            }
            out
        }
        if f.len() != g.len() {
            return 0.0;
        }
        let n = f.len();
        let ps = perms(n);
        let mut total = 0.0;
        for s in &ps {
            for s2 in &ps {
                if (0..n).all(|i| f[s[i]] == g[s2[i]]) {
                    total += 1.0;
                }
            }
        }
        w.w(n as u32).powi(2) * total / factorial(n as u32).powi(2)
    }

    fn modes_of(occ: &[u32]) -> Vec<usize> {
        occ.iter().enumerate().flat_map(|(k, &n)| std::iter::repeat_n(k, n as usize)).collect()
    }

    fn random_vector(modes: usize, max_grade: u32, rng: &mut ChaCha8Rng) -> FockVector {
        let terms: Vec<(Occupation, Complex64)> = (0..=max_grade)
            .flat_map(|n| occupations(modes, n))
            .map(|o| (o, Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
            .collect();
        FockVector::from_terms(modes, terms).unwrap()
    }

    #[test]
    fn weight_defaults_are_summable() {
        let w = FockWeight::default();
        assert_eq!(w.w(0), 1.0);
        assert!((1..10).all(|n| w.w(n) > w.w(n - 1)));
        assert!(w.tail() < 1e-6);
    }

    #[test]
    fn occupation_enumeration() {
        assert_eq!(occupations(3, 2).len(), 6);
        assert_eq!(occupations(7, 3).len(), 84);
        assert_eq!(occupations(2, 0), vec![vec![0, 0]]);
        assert!(occupations(4, 3).iter().all(|o| grading(o) == 3));
    }

    #[test]
    fn small_inner_products() {
        let w = FockWeight::default();
        let vac = FockVector::vacuum(3);
        assert_eq!(fock_inner(&w, &vac, &vac), one());
        let z1 = FockVector::mode(3, 1);
        assert!((fock_inner(&w, &z1, &z1).re - w.w(1).powi(2)).abs() < 1e-12 * w.w(1).powi(2));
        let z12 = FockVector::basis(vec![0, 1, 1]);
        let z11 = FockVector::basis(vec![0, 2, 0]);
        let w2 = w.w(2).powi(2);
        assert!((fock_inner(&w, &z12, &z12).re - w2 / 2.0).abs() < 1e-12 * w2);
        assert!((fock_inner(&w, &z11, &z11).re - w2).abs() < 1e-12 * w2);
        assert_eq!(fock_inner(&w, &z1, &z11), Complex64::default());
    }

    #[test]
    fn closed_form_matches_permutation_sum() {
        let w = FockWeight::default();
        for n in 0..=4 {
            let occs = occupations(3, n);
            for a in &occs {
                for b in &occs {
                    let closed = fock_inner(&w, &FockVector::basis(a.clone()), &FockVector::basis(b.clone())).re;
                    let brute = permutation_inner(&w, &modes_of(a), &modes_of(b));
                    assert!((closed - brute).abs() <= 1e-12 * brute.max(1.0), "{a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn product_unit_commutativity_and_tensor_expansion() {
        let w = FockWeight::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_vector(3, 3, &mut rng);
        assert_eq!(sym_product(&w, &FockVector::vacuum(3), &v).0, v);
        let (a, _) = sym_product(&w, &FockVector::mode(3, 1), &FockVector::mode(3, 2));
        let (b, _) = sym_product(&w, &FockVector::mode(3, 2), &FockVector::mode(3, 1));
        assert_eq!(a, b);

        // ζ_1∨ζ_1 as a tensor is ζ_1⊗ζ_1; ζ_1∨ζ_2 is (ζ_1⊗ζ_2 + ζ_2⊗ζ_1)/2.
        // Their tensor norms times w²(2) must match the Fock norms.
        let (sq, _) = sym_product(&w, &FockVector::mode(2, 0), &FockVector::mode(2, 0));
        assert_eq!(sq, FockVector::basis(vec![2, 0]));
        let tensor_11 = [1.0, 0.0, 0.0, 0.0];
        let tensor_12 = [0.0, 0.5, 0.5, 0.0];
        let w2 = w.w(2).powi(2);
        let norm = |t: &[f64]| t.iter().map(|x| x * x).sum::<f64>() * w2;
        assert!((fock_norm(&w, &sq).powi(2) - norm(&tensor_11)).abs() < 1e-9);
        let (mixed, _) = sym_product(&w, &FockVector::mode(2, 0), &FockVector::mode(2, 1));
        assert!((fock_norm(&w, &mixed).powi(2) - norm(&tensor_12)).abs() < 1e-9);
    }

    #[test]
    fn truncation_reports_dropped_mass() {
        let w = FockWeight::new(1.5, 0.9, 2).unwrap();
        let (p, dropped) = sym_product(&w, &FockVector::basis(vec![2, 0]), &FockVector::mode(2, 1));
        assert!(p.is_empty());
        let expect = w.w(3) * (2.0f64 / 6.0).sqrt();
        assert!((dropped - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn lifted_generator_examples() {
        let modes = ModeSet::from_frequencies(vec![0.0, 1.3, -0.4]);
        let vac = FockVector::vacuum(3);
        assert!(lifted_generator_apply(&modes, &vac).amplitude(&[0, 0, 0]).norm() == 0.0);
        let z1 = lifted_generator_apply(&modes, &FockVector::mode(3, 1));
        assert_eq!(z1.amplitude(&[0, 1, 0]), Complex64::new(0.0, 1.3));
        let z12 = lifted_generator_apply(&modes, &FockVector::basis(vec![0, 1, 1]));
        assert!((z12.amplitude(&[0, 1, 1]) - Complex64::new(0.0, 0.9)).norm() < 1e-15);
    }

    #[test]
    fn symmetric_power_small_cases() {
        let c = [Complex64::new(0.5, 0.1), Complex64::new(-0.2, 0.3)];
        let p2 = symmetric_power(&c, 2);
        assert!((p2.amplitude(&[1, 1]) - c[0] * c[1] * 2.0).norm() < 1e-15);
        assert!((p2.amplitude(&[2, 0]) - c[0] * c[0]).norm() < 1e-15);
        let (prod, _) = sym_product(&FockWeight::default(), &symmetric_power(&c, 1), &symmetric_power(&c, 1));
        assert!(prod.max_abs_diff(&p2) < 1e-15);
    }

    proptest! {
        #[test]
        fn grading_orthogonality(seed in 0u64..200) {
            let w = FockWeight::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_vector(3, 4, &mut rng);
            for a in 0..=4 {
                for b in 0..=4 {
                    if a != b {
                        prop_assert_eq!(fock_inner(&w, &v.grade(a), &v.grade(b)), Complex64::default());
                    }
                }
            }
        }

        #[test]
        fn product_is_associative(seed in 0u64..200) {
            let w = FockWeight::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (u, v, x) = (random_vector(3, 2, &mut rng), random_vector(3, 2, &mut rng), random_vector(3, 2, &mut rng));
            let l = sym_product(&w, &sym_product(&w, &u, &v).0, &x).0;
            let r = sym_product(&w, &u, &sym_product(&w, &v, &x).0).0;
            prop_assert!(l.max_abs_diff(&r) < 1e-12);
        }

        #[test]
        fn leibniz_and_multiplicativity(seed in 0u64..200, t in -4.0f64..4.0) {
            let w = FockWeight::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let modes = ModeSet::from_frequencies(vec![0.0, 1.0, -1.0, 2f64.sqrt()]);
            let (u, v) = (random_vector(4, 3, &mut rng), random_vector(4, 3, &mut rng));
            let uv = sym_product(&w, &u, &v).0;
            let lhs = lifted_generator_apply(&modes, &uv);
            let rhs = sym_product(&w, &lifted_generator_apply(&modes, &u), &v).0
                .add(&sym_product(&w, &u, &lifted_generator_apply(&modes, &v)).0);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
            let ev = lifted_evolve(&modes, &uv, t);
            let prod = sym_product(&w, &lifted_evolve(&modes, &u, t), &lifted_evolve(&modes, &v, t)).0;
            prop_assert!(ev.max_abs_diff(&prod) < 1e-12);
            for n in 0..=6 {
                let g = uv.grade(n);
                let a = fock_norm(&w, &g);
                let b = fock_norm(&w, &lifted_evolve(&modes, &g, t));
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
            prop_assert_eq!(lifted_evolve(&modes, &u, 0.0), u);
        }

        #[test]
        fn product_norm_surrogate(seed in 0u64..100) {
            let w = FockWeight::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (u, v) = (random_vector(3, 3, &mut rng), random_vector(3, 3, &mut rng));
            let (uv, dropped) = sym_product(&w, &u, &v);
            let bound = w.partial_sum().sqrt() * fock_norm(&w, &u) * fock_norm(&w, &v);
            prop_assert!(fock_norm(&w, &uv) <= bound);
            prop_assert!(dropped >= 0.0);
        }
    }
}
