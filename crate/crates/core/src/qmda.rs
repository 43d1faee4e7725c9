//! Classical Bayesian filtering of densities and its density-operator
//! counterpart: the Γ embedding, effects, non-commutative Bayes rule and
//! positivity-preserving compression.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::{evaluate, FourierObservable, PeriodicOrbitSystem, TorusPoint};
use crate::error::{Error, Result};
use crate::linalg::{
    cis, clamped_sqrt, hermitian_defect, hermitian_eigenvalues, hermitian_part, trace, trace_norm,
    unitary_deviation, CMatrix,
};
use crate::report::fmt_real;
use crate::rkha::TruncatedLattice;

/// Evidence below this is treated as zero.
pub const MIN_EVIDENCE: f64 = 1e-14;

/// Probability density with respect to the uniform measure on `N` points:
/// nonnegative values with `Σ σ_i / N = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalDensity {
    values: Vec<f64>,
}

impl ClassicalDensity {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("density needs at least one point"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("density values must be finite and nonnegative"));
        }
        let mass = values.iter().sum::<f64>() / values.len() as f64;
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("density integrates to {mass}, not 1")));
        }
        Ok(ClassicalDensity { values })
    }

    /// Rescales nonnegative weights to a density.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("density weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("density weights sum to zero"));
        }
        let n = weights.len() as f64;
        Ok(ClassicalDensity { values: weights.iter().map(|w| w * n / total).collect() })
    }

    pub fn uniform(n: usize) -> Self {
        ClassicalDensity { values: vec![1.0; n] }
    }

    pub fn point_mass(n: usize, i: usize) -> Self {
        assert!(i < n);
        let mut values = vec![0.0; n];
        values[i] = n as f64;
        ClassicalDensity { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `∫ σ dμ`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `∫ f σ dμ` for real `f` sampled at the points.
    pub fn expectation(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.len());
        self.values.iter().zip(f).map(|(s, v)| s * v).sum::<f64>() / self.len() as f64
    }

    /// Index of the largest value (first on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = k;
        }
    }
    best
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::invalid("density operator must be a nonempty square matrix"));
        }
        let defect = hermitian_defect(&matrix);
        if defect > 1e-12 {
            return Err(Error::invalid(format!("density operator is not Hermitian (defect {defect:e})")));
        }
        let tr = trace(&matrix);
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(Error::invalid(format!("density operator trace is {tr}, not 1")));
        }
        let min = hermitian_eigenvalues(&matrix)[0];
        if min < -1e-10 {
            return Err(Error::invalid(format!("density operator has negative eigenvalue {min:e}")));
        }
        Ok(DensityOperator { matrix: hermitian_part(&matrix) })
    }

    /// Hermitian part of `m` scaled to unit trace, without positivity checks.
    fn normalized(m: &CMatrix, tr: f64) -> Self {
        DensityOperator { matrix: hermitian_part(m) / Complex64::new(tr, 0.0) }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `tr(ρ A)`.
    pub fn expectation(&self, a: &CMatrix) -> Complex64 {
        trace(&(&self.matrix * a))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }
}

/// Hermitian matrix with spectrum in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    matrix: CMatrix,
}

impl Effect {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::invalid("effect must be a nonempty square matrix"));
        }
        let defect = hermitian_defect(&matrix);
        if defect > 1e-12 {
            return Err(Error::invalid(format!("effect is not Hermitian (defect {defect:e})")));
        }
        let eig = hermitian_eigenvalues(&matrix);
        if eig[0] < -1e-10 || eig[eig.len() - 1] > 1.0 + 1e-10 {
            return Err(Error::invalid("effect spectrum leaves [0, 1]"));
        }
        Ok(Effect { matrix: hermitian_part(&matrix) })
    }

    pub fn identity(n: usize) -> Self {
        Effect { matrix: CMatrix::identity(n, n) }
    }

    /// Multiplication by a likelihood with values in `[0, 1]`, in the point basis.
    pub fn diagonal(likelihood: &[f64]) -> Result<Self> {
        if likelihood.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::invalid("likelihood values must lie in [0, 1]"));
        }
        Ok(Effect { matrix: diag(likelihood) })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn diag(v: &[f64]) -> CMatrix {
    CMatrix::from_fn(v.len(), v.len(), |i, j| if i == j { Complex64::new(v[i], 0.0) } else { Complex64::default() })
}

/// `Γ(σ)`: the projector onto the unit vector `√σ` in the orthonormal point basis.
pub fn gamma_embed(sigma: &ClassicalDensity) -> Result<DensityOperator> {
    let n = sigma.len() as f64;
    if !(sigma.mass() > 0.0) {
        return Err(Error::invalid("cannot embed a zero density"));
    }
    let v: Vec<Complex64> = sigma.values().iter().map(|s| Complex64::new((s / n).sqrt(), 0.0)).collect();
    let m = CMatrix::from_fn(v.len(), v.len(), |i, j| v[i] * v[j]);
    let tr = trace(&m).re;
    Ok(DensityOperator::normalized(&m, tr))
}

/// Bayes' rule with a pointwise likelihood; returns the posterior and the evidence.
pub fn classical_analysis(sigma: &ClassicalDensity, likelihood: &[f64]) -> Result<(ClassicalDensity, f64)> {
    if likelihood.len() != sigma.len() {
        return Err(Error::DimensionMismatch { expected: sigma.len(), got: likelihood.len() });
    }
    if likelihood.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::invalid("likelihood values must be finite and nonnegative"));
    }
    let evidence = sigma.expectation(likelihood);
    if !(evidence > MIN_EVIDENCE) {
        return Err(Error::ZeroEvidence { evidence });
    }
    let values = sigma.values().iter().zip(likelihood).map(|(s, l)| s * l / evidence).collect();
    Ok((ClassicalDensity { values }, evidence))
}

/// `T ρ T†` for a unitary state-evolution matrix `T`.
///
/// With Koopman matrix `U` acting on observables, states evolve under the
/// transfer operator, so `T = U†`; this makes `Γ` intertwine the classical
/// and quantum forecasts.
pub fn quantum_forecast(t: &CMatrix, rho: &DensityOperator) -> Result<DensityOperator> {
    if t.nrows() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: t.nrows() });
    }
    let deviation = unitary_deviation(t);
    if deviation > 1e-10 {
        return Err(Error::NotUnitary { deviation });
    }
    let m = t * rho.matrix() * t.adjoint();
    let tr = trace(&m).re;
    Ok(DensityOperator::normalized(&m, tr))
}

/// `√e ρ √e / tr(√e ρ √e)`; returns the posterior and the evidence `tr(ρ e)`.
pub fn quantum_analysis(rho: &DensityOperator, e: &Effect) -> Result<(DensityOperator, f64)> {
    if e.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: e.dim() });
    }
    let root = clamped_sqrt(e.matrix(), 0.0, 1.0);
    let m = &root * rho.matrix() * &root;
    let evidence = trace(&m).re;
    if !(evidence > MIN_EVIDENCE) {
        return Err(Error::ZeroEvidence { evidence });
    }
    Ok((DensityOperator::normalized(&m, evidence), evidence))
}

/// `Π_L A Π_L` as an `L×L` matrix: the top-left block in the basis order.
pub fn compress(a: &CMatrix, l: usize) -> Result<CMatrix> {
    if l == 0 || l > a.nrows() || l > a.ncols() {
        return Err(Error::invalid(format!("compression rank {l} outside 1..={}", a.nrows())));
    }
    Ok(a.view((0, 0), (l, l)).into_owned())
}

/// Compression of a density operator, renormalized to unit trace.
pub fn compress_density(rho: &DensityOperator, l: usize) -> Result<DensityOperator> {
    let m = compress(rho.matrix(), l)?;
    let tr = trace(&m).re;
    if !(tr > 0.0) {
        return Err(Error::ZeroTrace);
    }
    Ok(DensityOperator::normalized(&m, tr))
}

pub fn compress_effect(e: &Effect, l: usize) -> Result<Effect> {
    Ok(Effect { matrix: compress(e.matrix(), l)? })
}

/// Multiplication by `f` on the lattice basis `e_k`: entry `(j, k)` is `f̂(j - k)`.
pub fn multiplication_operator(f: &FourierObservable, lat: &TruncatedLattice) -> CMatrix {
    let n = lat.size();
    CMatrix::from_fn(n, n, |r, c| {
        let j = lat.multi_index(r);
        let k = lat.multi_index(c);
        let diff: Vec<i64> = j.iter().zip(&k).map(|(a, b)| a - b).collect();
        f.coeff(&diff)
    })
}

/// Discrete Fourier frequency of column `c`: `0, 1, -1, 2, -2, …`.
pub fn dft_frequency(c: usize) -> i64 {
    let m = c.div_ceil(2) as i64;
    if c % 2 == 1 {
        m
    } else {
        -m
    }
}

/// Unitary whose column `c` holds the samples `e^{i k_c θ_i} / √N` of the
/// discrete Fourier mode of frequency [`dft_frequency`]`(c)` at the points
/// `θ_i = 2πi/N`. `A ↦ F† A F` maps point-basis matrices to the Fourier basis.
pub fn fourier_basis(n: usize) -> CMatrix {
    let norm = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |i, c| cis(dft_frequency(c) as f64 * TAU * i as f64 / n as f64) * norm)
}

/// Systems the filter can run on.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterSystem {
    /// Exact cyclic shift on `M` points.
    Orbit(PeriodicOrbitSystem),
    /// Circle rotation by `α·dt` per step, represented on `n` equispaced grid
    /// points (odd `n`) through band-limited interpolation.
    GridRotation { alpha: f64, n: usize, dt: f64 },
}

impl FilterSystem {
    pub fn grid_rotation(alpha: f64, n: usize, dt: f64) -> Result<Self> {
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::invalid("grid rotation needs an odd number of points ≥ 3"));
        }
        if !alpha.is_finite() || alpha == 0.0 || !(dt > 0.0) {
            return Err(Error::invalid("grid rotation needs nonzero alpha and positive dt"));
        }
        Ok(FilterSystem::GridRotation { alpha, n, dt })
    }

    pub fn len(&self) -> usize {
        match self {
            FilterSystem::Orbit(s) => s.len(),
            FilterSystem::GridRotation { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn angle(&self, i: usize) -> f64 {
        TAU * i as f64 / self.len() as f64
    }

    /// True state angle after `step` steps from grid point `x0`.
    pub fn true_angle(&self, x0: usize, step: usize) -> f64 {
        match self {
            FilterSystem::Orbit(s) => s.angle((x0 + step) % s.len()),
            FilterSystem::GridRotation { alpha, dt, .. } => {
                crate::dynamics::canonical_angle(self.angle(x0) + step as f64 * alpha * dt)
            }
        }
    }

    /// State-evolution unitary in the point basis.
    pub fn transfer_matrix(&self) -> CMatrix {
        match self {
            FilterSystem::Orbit(s) => s.koopman_matrix().adjoint(),
            FilterSystem::GridRotation { alpha, n, dt } => {
                let f = fourier_basis(*n);
                let mut scaled = f.clone();
                for c in 0..*n {
                    let ph = cis(-(dft_frequency(c) as f64) * alpha * dt);
                    scaled.column_mut(c).iter_mut().for_each(|z| *z *= ph);
                }
                scaled * f.adjoint()
            }
        }
    }

    /// Push-forward `σ ∘ Φ^{-1}`. For grid rotations the shifted band-limited
    /// interpolant is sampled, clipped at zero and renormalized.
    pub fn classical_forecast(&self, sigma: &ClassicalDensity) -> Result<ClassicalDensity> {
        if sigma.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: sigma.len() });
        }
        match self {
            FilterSystem::Orbit(s) => {
                let m = s.len();
                let values = (0..m).map(|i| sigma.values()[(i + m - 1) % m]).collect();
                Ok(ClassicalDensity { values })
            }
            FilterSystem::GridRotation { .. } => {
                let t = self.transfer_matrix();
                let shifted: Vec<f64> = (0..self.len())
                    .map(|i| {
                        (0..self.len())
                            .map(|k| t[(i, k)] * sigma.values()[k])
                            .sum::<Complex64>()
                            .re
                            .max(0.0)
                    })
                    .collect();
                ClassicalDensity::from_weights(&shifted)
            }
        }
    }
}

/// Observation likelihood `κ(y, y')` with values in `[0, 1]` and `κ(y, y) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LikelihoodKernel {
    /// `exp(-‖y - y'‖² / (2ε²))`.
    Gaussian { epsilon: f64 },
    /// Indicator of `max_i |y_i - y'_i| ≤ δ`.
    Event { delta: f64 },
    Uninformative,
}

impl LikelihoodKernel {
    pub fn eval(&self, y: &[f64], yp: &[f64]) -> f64 {
        match *self {
            LikelihoodKernel::Gaussian { epsilon } => {
                let d2: f64 = y.iter().zip(yp).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * epsilon * epsilon)).exp()
            }
            LikelihoodKernel::Event { delta } => {
                let hit = y.iter().zip(yp).all(|(a, b)| (a - b).abs() <= delta);
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
            LikelihoodKernel::Uninformative => 1.0,
        }
    }
}

/// Observation map `h` (real Fourier observables on the circle), likelihood
/// kernel and additive Gaussian noise level for synthetic observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    h: Vec<FourierObservable>,
    kernel: LikelihoodKernel,
    noise_std: f64,
}

impl ObservationModel {
    pub fn new(h: Vec<FourierObservable>, kernel: LikelihoodKernel, noise_std: f64) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::invalid("observation map needs at least one component"));
        }
        for f in &h {
            if f.dim() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: f.dim() });
            }
            let defect = f.conjugate_symmetry_defect();
            if defect > 1e-12 {
                return Err(Error::NonRealObservable { defect });
            }
        }
        match kernel {
            LikelihoodKernel::Gaussian { epsilon } if !(epsilon > 0.0) => {
                return Err(Error::invalid("Gaussian kernel width must be positive"))
            }
            LikelihoodKernel::Event { delta } if !(delta > 0.0) => {
                return Err(Error::invalid("event resolution must be positive"))
            }
            _ => {}
        }
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::invalid("noise level must be finite and nonnegative"));
        }
        Ok(ObservationModel { h, kernel, noise_std })
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn kernel(&self) -> LikelihoodKernel {
        self.kernel
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// `h(θ)`.
    pub fn observe(&self, theta: f64) -> Vec<f64> {
        let x = TorusPoint::new(vec![theta]).expect("finite angle");
        self.h.iter().map(|f| evaluate(f, &x).re).collect()
    }

    /// `κ(y, h(θ_i))` at every point of the system.
    pub fn likelihood(&self, sys: &FilterSystem, y: &[f64]) -> Vec<f64> {
        (0..sys.len()).map(|i| self.kernel.eval(y, &self.observe(sys.angle(i)))).collect()
    }
}

/// Basis in which effects and states are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterBasis {
    Point,
    Fourier,
}

/// Multiplication by the likelihood of `y`, in the requested basis.
pub fn effect_from_observation(
    model: &ObservationModel,
    sys: &FilterSystem,
    y: &[f64],
    basis: FilterBasis,
) -> Result<Effect> {
    if y.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: y.len() });
    }
    let l = model.likelihood(sys, y);
    let e = Effect::diagonal(&l)?;
    Ok(match basis {
        FilterBasis::Point => e,
        FilterBasis::Fourier => {
            let f = fourier_basis(sys.len());
            Effect { matrix: hermitian_part(&(f.adjoint() * e.matrix() * &f)) }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    Classical,
    Quantum,
    /// Quantum filter compressed to the `L` lowest Fourier modes.
    Projected(usize),
}

impl FilterMode {
    pub fn label(&self) -> String {
        match self {
            FilterMode::Classical => "classical".into(),
            FilterMode::Quantum => "quantum".into(),
            FilterMode::Projected(l) => format!("projected-{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub system: FilterSystem,
    pub model: ObservationModel,
    /// Grid index of the true initial state.
    pub x0: usize,
    pub steps: usize,
    pub modes: Vec<FilterMode>,
    pub prior: ClassicalDensity,
    pub seed: u64,
}

/// Per-step, per-mode filter output.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRecord {
    pub step: usize,
    pub mode: FilterMode,
    /// Forecast state in the point basis (classical values or operator diagonal).
    pub prior: Vec<f64>,
    pub posterior: Vec<f64>,
    pub evidence: f64,
    /// Trace-norm distance to `Γ` of the classical posterior (quantum modes only).
    pub consistency: Option<f64>,
    /// Grid index of the posterior maximum.
    pub estimate: usize,
    /// Circular distance between the estimate and the true state.
    pub estimate_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace {
    pub records: Vec<FilterRecord>,
}

impl FilterTrace {
    pub fn mode(&self, mode: FilterMode) -> impl Iterator<Item = &FilterRecord> {
        self.records.iter().filter(move |r| r.mode == mode)
    }

    /// CSV with header `step,mode,evidence,consistency_trace_norm,estimate_error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mode,evidence,consistency_trace_norm,estimate_error\n");
        for r in &self.records {
            let c = r.consistency.map(fmt_real).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step,
                r.mode.label(),
                fmt_real(r.evidence),
                c,
                fmt_real(r.estimate_error)
            ));
        }
        out
    }
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d).min(PI)
}

/// Synthetic observations `h(x_n) + noise` for steps `1..=steps`.
pub fn generate_observations(cfg: &FilterConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = (cfg.model.noise_std() > 0.0).then(|| Normal::new(0.0, cfg.model.noise_std()).expect("valid std"));
    (1..=cfg.steps)
        .map(|n| {
            let mut y = cfg.model.observe(cfg.system.true_angle(cfg.x0, n));
            if let Some(dist) = &noise {
                for v in &mut y {
                    *v += dist.sample(&mut rng);
                }
            }
            y
        })
        .collect()
}

enum State {
    Classical(ClassicalDensity),
    Quantum(DensityOperator),
}

/// Runs every requested mode over the same synthetic observation stream.
pub fn run_filter(cfg: &FilterConfig) -> Result<FilterTrace> {
    let ys = generate_observations(cfg);
    run_filter_with_observations(cfg, &ys)
}

/// Runs the filter on a given observation stream (`ys[n-1]` is observed at step `n`).
pub fn run_filter_with_observations(cfg: &FilterConfig, ys: &[Vec<f64>]) -> Result<FilterTrace> {
    let sys = &cfg.system;
    let n = sys.len();
    if cfg.steps == 0 {
        return Err(Error::invalid("filter needs at least one step"));
    }
    if ys.len() < cfg.steps {
        return Err(Error::invalid(format!("{} observations supplied for {} steps", ys.len(), cfg.steps)));
    }
    if cfg.prior.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cfg.prior.len() });
    }
    if cfg.x0 >= n {
        return Err(Error::invalid("initial state index outside the grid"));
    }
    let t_point = sys.transfer_matrix();
    let f = fourier_basis(n);

    struct Lane {
        mode: FilterMode,
        state: State,
        transfer: CMatrix,
    }
    let mut lanes = Vec::with_capacity(cfg.modes.len());
    let gamma0 = gamma_embed(&cfg.prior)?;
    for &mode in &cfg.modes {
        let lane = match mode {
            FilterMode::Classical => Lane { mode, state: State::Classical(cfg.prior.clone()), transfer: t_point.clone() },
            FilterMode::Quantum => Lane { mode, state: State::Quantum(gamma0.clone()), transfer: t_point.clone() },
            FilterMode::Projected(l) => {
                let rho = DensityOperator::normalized(&(f.adjoint() * gamma0.matrix() * &f), 1.0);
                let t_l = compress(&(f.adjoint() * &t_point * &f), l)?;
                Lane { mode, state: State::Quantum(compress_density(&rho, l)?), transfer: t_l }
            }
        };
        lanes.push(lane);
    }

    let mut reference = cfg.prior.clone();
    let mut records = Vec::with_capacity(cfg.steps * lanes.len());
    for step in 1..=cfg.steps {
        let abort = |e: Error| Error::FilterAborted { step, source: Box::new(e) };
        let y = &ys[step - 1];
        if y.len() != cfg.model.dim() {
            return Err(abort(Error::DimensionMismatch { expected: cfg.model.dim(), got: y.len() }));
        }
        let truth = sys.true_angle(cfg.x0, step);
        let likelihood = cfg.model.likelihood(sys, y);
        let e_point = Effect::diagonal(&likelihood).map_err(abort)?;
        reference = classical_analysis(&sys.classical_forecast(&reference).map_err(abort)?, &likelihood)
            .map_err(abort)?
            .0;
        let reference_gamma = gamma_embed(&reference).map_err(abort)?;

        for lane in &mut lanes {
            let (prior, posterior, evidence, consistency) = match (&lane.state, lane.mode) {
                (State::Classical(s), _) => {
                    let p = sys.classical_forecast(s).map_err(abort)?;
                    let (post, ev) = classical_analysis(&p, &likelihood).map_err(abort)?;
                    let out = (p.values().to_vec(), post.values().to_vec(), ev, None);
                    lane.state = State::Classical(post);
                    out
                }
                (State::Quantum(rho), FilterMode::Projected(l)) => {
                    let p = quantum_forecast(&lane.transfer, rho).map_err(abort)?;
                    let e_f = Effect { matrix: hermitian_part(&(f.adjoint() * e_point.matrix() * &f)) };
                    let e_l = compress_effect(&e_f, l).map_err(abort)?;
                    let (post, ev) = quantum_analysis(&p, &e_l).map_err(abort)?;
                    let lift = |r: &DensityOperator| {
                        let mut full = CMatrix::zeros(n, n);
                        full.view_mut((0, 0), (l, l)).copy_from(r.matrix());
                        hermitian_part(&(&f * full * f.adjoint()))
                    };
                    let prior_pt = lift(&p);
                    let post_pt = lift(&post);
                    let consistency = trace_norm(&(reference_gamma.matrix() - &post_pt));
                    let d = |m: &CMatrix| (0..n).map(|i| m[(i, i)].re * n as f64).collect::<Vec<f64>>();
                    let out = (d(&prior_pt), d(&post_pt), ev, Some(consistency));
                    lane.state = State::Quantum(post);
                    out
                }
                (State::Quantum(rho), _) => {
                    let p = quantum_forecast(&lane.transfer, rho).map_err(abort)?;
                    let (post, ev) = quantum_analysis(&p, &e_point).map_err(abort)?;
                    let consistency = trace_norm(&(reference_gamma.matrix() - post.matrix()));
                    let scale = |v: Vec<f64>| v.into_iter().map(|x| x * n as f64).collect::<Vec<f64>>();
                    let out = (scale(p.diagonal()), scale(post.diagonal()), ev, Some(consistency));
                    lane.state = State::Quantum(post);
                    out
                }
            };
            let estimate = argmax(&posterior);
            records.push(FilterRecord {
                step,
                mode: lane.mode,
                prior,
                posterior,
                evidence,
                consistency,
                estimate,
                estimate_error: circular_distance(sys.angle(estimate), truth),
            });
        }
    }
    Ok(FilterTrace { records })
}
