//! Simulated quantum circuit for rotation forecasts: lattice indices are
//! encoded in qubits, the projected generator is an n-term sum of single-qubit
//! `Z` terms, and evolution is a layer of independent phase rotations.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::dynamics::{dot, evaluate, koopman_exact, FourierObservable, RotationSystem, TorusPoint};
use crate::error::{Error, Result};
use crate::linalg::{cis, hermitian_eigen, hermitian_part, CMatrix};
use crate::par::{for_each_chunk_mut, Execution};
use crate::report::fmt_real;
use crate::rkha::{SubexpWeight, Weight};

const CHUNK: usize = 1 << 12;

/// Index set `J_q = {-2^q, …, -1, 1, …, 2^q}` per dimension, `q + 1` qubits each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QubitEncoding {
    d: usize,
    q: u32,
}

impl QubitEncoding {
    pub fn new(d: usize, q: u32) -> Result<Self> {
        if d == 0 || q == 0 {
            return Err(Error::invalid("encoding needs d >= 1 and q >= 1"));
        }
        if d * (q as usize + 1) > 24 {
            return Err(Error::invalid("more than 24 qubits requested"));
        }
        Ok(QubitEncoding { d, q })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    /// Qubit count `d(q + 1)`.
    pub fn n(&self) -> usize {
        self.d * (self.q as usize + 1)
    }

    /// Number of computational basis states.
    pub fn size(&self) -> usize {
        1 << self.n()
    }

    fn bits_per_dim(&self) -> usize {
        self.q as usize + 1
    }

    fn encode_component(&self, j: i64) -> Option<usize> {
        let half = 1i64 << self.q;
        match j {
            j if j < 0 && j >= -half => Some((j + half) as usize),
            j if j > 0 && j <= half => Some((j + half - 1) as usize),
            _ => None,
        }
    }

    fn decode_component(&self, k: usize) -> i64 {
        let half = 1i64 << self.q;
        let k = k as i64;
        if k < half {
            k - half
        } else {
            k - half + 1
        }
    }

    /// Computational basis index of `j`; qubit 0 is the most significant bit.
    pub fn encode_index(&self, j: &[i64]) -> Result<usize> {
        if j.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: j.len() });
        }
        let mut b = 0usize;
        for &ji in j {
            let k = self
                .encode_component(ji)
                .ok_or_else(|| Error::NotEncodable { index: j.to_vec(), q: self.q })?;
            b = (b << self.bits_per_dim()) | k;
        }
        Ok(b)
    }

    pub fn decode_index(&self, mut b: usize) -> Vec<i64> {
        assert!(b < self.size(), "basis index out of range");
        let mask = (1 << self.bits_per_dim()) - 1;
        let mut j = vec![0; self.d];
        for slot in j.iter_mut().rev() {
            *slot = self.decode_component(b & mask);
            b >>= self.bits_per_dim();
        }
        j
    }

    /// Bit string of `j`, qubit 0 first.
    pub fn encode(&self, j: &[i64]) -> Result<Vec<bool>> {
        let b = self.encode_index(j)?;
        let n = self.n();
        Ok((0..n).map(|k| (b >> (n - 1 - k)) & 1 == 1).collect())
    }

    pub fn decode(&self, bits: &[bool]) -> Result<Vec<i64>> {
        if bits.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: bits.len() });
        }
        let b = bits.iter().fold(0usize, |acc, &x| (acc << 1) | x as usize);
        Ok(self.decode_index(b))
    }
}

/// Amplitudes over the `2^n` computational basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    amps: Vec<Complex64>,
}

impl Statevector {
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        if !amps.len().is_power_of_two() {
            return Err(Error::invalid("statevector length must be a power of two"));
        }
        Ok(Statevector { amps })
    }

    /// Rescaled to unit norm.
    pub fn normalized(amps: Vec<Complex64>) -> Result<Self> {
        let mut s = Statevector::new(amps)?;
        let norm = s.norm();
        if norm == 0.0 {
            return Err(Error::invalid("cannot normalize the zero vector"));
        }
        s.amps.iter_mut().for_each(|a| *a /= norm);
        Ok(s)
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn qubits(&self) -> usize {
        self.amps.len().trailing_zeros() as usize
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &Statevector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Statevector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Imaginary weight-1 Walsh coefficients `v_k`, one per qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct WalshCoefficients {
    v: Vec<Complex64>,
}

impl WalshCoefficients {
    pub fn new(v: Vec<Complex64>) -> Self {
        WalshCoefficients { v }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.v
    }

    pub fn qubits(&self) -> usize {
        self.v.len()
    }

    /// `Σ_k v_k Z_k` on basis state `b`.
    pub fn diagonal_entry(&self, b: usize) -> Complex64 {
        let n = self.v.len();
        self.v
            .iter()
            .enumerate()
            .map(|(k, v)| if (b >> (n - 1 - k)) & 1 == 0 { *v } else { -v })
            .sum()
    }
}

/// `decode(b)·α` for every basis index `b`.
pub fn frequency_vector(enc: &QubitEncoding, sys: &RotationSystem) -> Result<Vec<f64>> {
    if sys.dim() != enc.dim() {
        return Err(Error::DimensionMismatch { expected: enc.dim(), got: sys.dim() });
    }
    Ok((0..enc.size()).map(|b| dot(&enc.decode_index(b), sys.alpha())).collect())
}

/// In-place normalized Walsh–Hadamard transform; entry `S` is
/// `2^{-n} Σ_b f(b) (-1)^{|b ∧ S|}`.
pub fn walsh_hadamard(values: &mut [f64]) {
    let len = values.len();
    assert!(len.is_power_of_two(), "length must be a power of two");
    let mut h = 1;
    while h < len {
        for block in values.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / len as f64;
    values.iter_mut().for_each(|x| *x *= scale);
}

/// Weight-1 Walsh coefficients of `freqs`, after checking that every other
/// coefficient vanishes to `1e-10 · max|ω|`.
pub fn walsh_coefficients(freqs: &[f64]) -> Result<WalshCoefficients> {
    if !freqs.len().is_power_of_two() || freqs.len() < 2 {
        return Err(Error::invalid("frequency vector length must be a power of two, at least 2"));
    }
    let n = freqs.len().trailing_zeros() as usize;
    let tol = 1e-10 * freqs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut w = freqs.to_vec();
    walsh_hadamard(&mut w);
    for (s, &value) in w.iter().enumerate() {
        let weight = s.count_ones();
        if weight != 1 && value.abs() > tol {
            return Err(Error::NotAffine { weight, value });
        }
    }
    Ok(WalshCoefficients { v: (0..n).map(|k| Complex64::new(0.0, w[1 << (n - 1 - k)])).collect() })
}

/// `e^{t V} ψ` applied as one diagonal phase per qubit.
pub fn evolve_statevector(coeffs: &WalshCoefficients, psi: &Statevector, t: f64) -> Statevector {
    evolve_statevector_with(coeffs, psi, t, Execution::default())
}

pub fn evolve_statevector_with(coeffs: &WalshCoefficients, psi: &Statevector, t: f64, exec: Execution) -> Statevector {
    let angles: Vec<f64> = coeffs.v.iter().map(|v| t * v.im).collect();
    apply_phase_layer(&angles, psi, exec)
}

/// Multiplies each amplitude by `e^{±i a_k}` per qubit `k`, `+` on bit 0.
fn apply_phase_layer(angles: &[f64], psi: &Statevector, exec: Execution) -> Statevector {
    let n = angles.len();
    assert_eq!(n, psi.qubits(), "coefficient count must match the qubit count");
    let mut out = psi.amps.clone();
    for (k, &a) in angles.iter().enumerate() {
        let (plus, minus) = (cis(a), cis(-a));
        let bit = n - 1 - k;
        for_each_chunk_mut(exec, &mut out, CHUNK, |ci, chunk| {
            let base = ci * CHUNK;
            for (off, amp) in chunk.iter_mut().enumerate() {
                *amp *= if ((base + off) >> bit) & 1 == 0 { plus } else { minus };
            }
        });
    }
    Statevector { amps: out }
}

/// Normalized `√λ(j) e^{-ij·x}` over the encoded indices.
pub fn feature_state(enc: &QubitEncoding, w: &SubexpWeight, x: &TorusPoint) -> Result<Statevector> {
    if w.dim() != enc.dim() || x.dim() != enc.dim() {
        return Err(Error::DimensionMismatch { expected: enc.dim(), got: x.dim() });
    }
    let amps = (0..enc.size())
        .map(|b| {
            let j = enc.decode_index(b);
            cis(-dot(&j, x.angles())) * w.lambda(&j).sqrt()
        })
        .collect();
    Statevector::normalized(amps)
}

/// `S_f` on the encoded span: `f̂(i-j) √(λ(j)/λ(i))`, symmetrized.
pub fn projected_observable(enc: &QubitEncoding, w: &SubexpWeight, f: &FourierObservable) -> Result<CMatrix> {
    if f.dim() != enc.dim() {
        return Err(Error::DimensionMismatch { expected: enc.dim(), got: f.dim() });
    }
    let defect = f.conjugate_symmetry_defect();
    if defect > 1e-12 {
        return Err(Error::NonRealObservable { defect });
    }
    let size = enc.size();
    let idx: Vec<Vec<i64>> = (0..size).map(|b| enc.decode_index(b)).collect();
    let sqrt_lam: Vec<f64> = idx.iter().map(|j| w.lambda(j).sqrt()).collect();
    let mut m = CMatrix::zeros(size, size);
    for (a, i) in idx.iter().enumerate() {
        for (b, j) in idx.iter().enumerate() {
            let diff: Vec<i64> = i.iter().zip(j).map(|(x, y)| x - y).collect();
            let c = f.coeff(&diff);
            if c != Complex64::default() {
                m[(a, b)] = c * (sqrt_lam[b] / sqrt_lam[a]);
            }
        }
    }
    Ok(hermitian_part(&m))
}

/// `⟨ψ, A ψ⟩` for Hermitian `A`.
pub fn statevector_expectation(a: &CMatrix, psi: &Statevector) -> f64 {
    let v = &psi.amps;
    let mut acc = 0.0;
    for (i, vi) in v.iter().enumerate() {
        let row: Complex64 = (0..v.len()).map(|k| a[(i, k)] * v[k]).sum();
        acc += (vi.conj() * row).re;
    }
    acc
}

/// Forecast of `f(Φ^t x)`: the feature state at `x` is evolved by `e^{-tV}`
/// and measured against `S_f`.
pub fn circuit_expectation(
    enc: &QubitEncoding,
    w: &SubexpWeight,
    sys: &RotationSystem,
    f: &FourierObservable,
    x: &TorusPoint,
    t: f64,
) -> Result<f64> {
    let coeffs = walsh_coefficients(&frequency_vector(enc, sys)?)?;
    let psi = evolve_statevector(&coeffs, &feature_state(enc, w, x)?, -t);
    Ok(statevector_expectation(&projected_observable(enc, w, f)?, &psi))
}

/// Shot-based estimate of `⟨ψ, A ψ⟩`: samples eigenvalues of `A` with Born
/// probabilities and averages them.
pub fn sampled_expectation<R: Rng + ?Sized>(a: &CMatrix, psi: &Statevector, shots: usize, rng: &mut R) -> Result<f64> {
    if shots == 0 {
        return Err(Error::invalid("shot count must be positive"));
    }
    let (values, vectors) = hermitian_eigen(a);
    let probs: Vec<f64> = (0..values.len())
        .map(|k| {
            vectors
                .column(k)
                .iter()
                .zip(&psi.amps)
                .map(|(u, p)| u.conj() * p)
                .sum::<Complex64>()
                .norm_sqr()
        })
        .collect();
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::invalid(format!("Born weights: {e}")))?;
    let total: f64 = (0..shots).map(|_| values[dist.sample(rng)]).sum();
    Ok(total / shots as f64)
}

/// Rotation angles `θ_k = -2t·Im(v_k)` so that `rz(θ_k) = e^{t v_k Z}`.
pub fn rotation_angles(coeffs: &WalshCoefficients, t: f64) -> Vec<f64> {
    coeffs.v.iter().map(|v| -2.0 * t * v.im).collect()
}

/// Circuit text realizing `e^{tV}` on `enc`, optionally with the prepared
/// state listed as amplitudes.
pub fn export_circuit(coeffs: &WalshCoefficients, enc: &QubitEncoding, t: f64, prep: Option<&Statevector>) -> String {
    let n = enc.n();
    let mut s = String::new();
    writeln!(s, "// rotation circuit n={n} d={} q={} t={}", enc.dim(), enc.q(), fmt_real(t)).unwrap();
    writeln!(s, "qreg q[{n}];").unwrap();
    if let Some(psi) = prep {
        writeln!(s, "// prepare amplitudes (basis index, re, im)").unwrap();
        for (b, a) in psi.amps.iter().enumerate() {
            writeln!(s, "// amp {b} {} {}", fmt_real(a.re), fmt_real(a.im)).unwrap();
        }
    }
    for (k, theta) in rotation_angles(coeffs, t).iter().enumerate() {
        writeln!(s, "rz({}) q[{k}];", fmt_real(*theta)).unwrap();
    }
    writeln!(s, "// measure expectation of the projected observable").unwrap();
    s
}

/// Rotation angles read back from [`export_circuit`] output, in qubit order.
pub fn parse_circuit(text: &str) -> Result<Vec<f64>> {
    let mut angles = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| l.starts_with("rz(")) {
        let bad = || Error::invalid(format!("malformed rotation line: {line}"));
        let (theta, rest) = line[3..].split_once(')').ok_or_else(bad)?;
        let qubit: usize = rest
            .trim()
            .strip_prefix("q[")
            .and_then(|r| r.strip_suffix("];"))
            .and_then(|r| r.parse().ok())
            .ok_or_else(bad)?;
        if qubit != angles.len() {
            return Err(bad());
        }
        angles.push(theta.parse::<f64>().map_err(|_| bad())?);
    }
    Ok(angles)
}

/// Applies `rz(θ_k)` on every qubit.
pub fn apply_rotations(angles: &[f64], psi: &Statevector) -> Statevector {
    let half: Vec<f64> = angles.iter().map(|a| -a / 2.0).collect();
    apply_phase_layer(&half, psi, Execution::default())
}

/// CSV `q,t,value,exact,abs_error` over resolutions `qs` at fixed `(x, t)`.
pub fn q_sweep_csv(
    sys: &RotationSystem,
    w: &SubexpWeight,
    f: &FourierObservable,
    x: &TorusPoint,
    t: f64,
    qs: &[u32],
) -> Result<String> {
    let exact = evaluate(&koopman_exact(f, sys, t), x).re;
    let mut s = String::from("q,t,value,exact,abs_error\n");
    for &q in qs {
        let enc = QubitEncoding::new(sys.dim(), q)?;
        let value = circuit_expectation(&enc, w, sys, f, x, t)?;
        writeln!(s, "{q},{},{},{},{}", fmt_real(t), fmt_real(value), fmt_real(exact), fmt_real((value - exact).abs())).unwrap();
    }
    Ok(s)
}
