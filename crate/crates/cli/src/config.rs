//! Experiment configuration: JSON with a schema version, unknown keys rejected.

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub fock: FockConfig,
    #[serde(default)]
    pub qmda: QmdaConfig,
    #[serde(default)]
    pub qcirc: QcircConfig,
    #[serde(default)]
    pub rotate: RotateConfig,
    #[serde(default)]
    pub koopman: KoopmanConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Rotation { alpha: Vec<f64>, x0: Vec<f64> },
    Orbit { m: usize, x0: usize },
    GridRotation { alpha: f64, n: usize, dt: f64, x0: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub tau: f64,
    pub p: f64,
    /// Checked against the system when present.
    pub d: Option<usize>,
    #[serde(alias = "J")]
    pub bandwidth: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { tau: 0.25, p: 0.5, d: None, bandwidth: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FockConfig {
    pub sigma_w: f64,
    pub p_w: f64,
    pub nmax: u32,
    pub modes: usize,
    pub sigma: f64,
    pub epsilon: f64,
    pub grid: usize,
    pub m: Vec<u32>,
    pub tn_n: Vec<u32>,
    pub tn_kappa: f64,
    pub tn_bandwidth: usize,
}

impl Default for FockConfig {
    fn default() -> Self {
        FockConfig {
            sigma_w: 1.5,
            p_w: 0.9,
            nmax: 6,
            modes: 7,
            sigma: 0.5,
            epsilon: 1.0,
            grid: 256,
            m: vec![1, 2, 3],
            tn_n: vec![1, 2, 3],
            tn_kappa: 4.0,
            tn_bandwidth: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LikelihoodConfig {
    Gaussian { epsilon: f64 },
    Event { delta: f64 },
    Uninformative,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Cos,
    Sin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QmdaConfig {
    /// Fourier modes kept by the projected filter.
    pub l: usize,
    pub observables: Vec<Component>,
    pub likelihood: LikelihoodConfig,
    pub noise: f64,
    pub steps: usize,
    /// CSV of observations, one row per step, one column per observable.
    pub observations: Option<String>,
}

impl Default for QmdaConfig {
    fn default() -> Self {
        QmdaConfig {
            l: 5,
            observables: vec![Component::Cos, Component::Sin],
            likelihood: LikelihoodConfig::Gaussian { epsilon: 0.5 },
            noise: 0.1,
            steps: 20,
            observations: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableConfig {
    Cosine { axis: usize },
    Sine { axis: usize },
    Constant { value: f64 },
}

impl Default for ObservableConfig {
    fn default() -> Self {
        ObservableConfig::Cosine { axis: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QcircConfig {
    pub q: Vec<u32>,
    pub t: Vec<f64>,
    pub tau: f64,
    pub p: f64,
    pub observable: ObservableConfig,
    /// Shot-sampled estimates alongside the exact expectation.
    pub shots: Option<usize>,
    /// Evolution time of the exported circuit; the last `t` when absent.
    pub export_t: Option<f64>,
}

impl Default for QcircConfig {
    fn default() -> Self {
        QcircConfig {
            q: vec![2, 3, 4, 5, 6],
            t: vec![0.0, 2.0],
            tau: 0.2,
            p: 0.5,
            observable: ObservableConfig::default(),
            shots: None,
            export_t: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RotateConfig {
    pub dt: f64,
    pub samples: usize,
}

impl Default for RotateConfig {
    fn default() -> Self {
        RotateConfig { dt: 0.1, samples: 100 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorChoice {
    Analytic,
    DataDriven,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KoopmanConfig {
    pub generator: GeneratorChoice,
    /// Sampling interval and length of the trajectory for the data-driven generator.
    pub dt: f64,
    pub samples: usize,
    pub t: Vec<f64>,
    pub observable: ObservableConfig,
    pub tensor_network: bool,
}

impl Default for KoopmanConfig {
    fn default() -> Self {
        KoopmanConfig {
            generator: GeneratorChoice::Analytic,
            dt: 0.01,
            samples: 5000,
            t: vec![0.0, 0.5, 1.0],
            observable: ObservableConfig::default(),
            tensor_network: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

/// A rejected configuration value and its key path.
#[derive(Debug)]
pub struct Invalid {
    pub path: String,
    pub reason: String,
}

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

fn check(ok: bool, path: &str, reason: &str) -> Result<(), Invalid> {
    if ok {
        Ok(())
    } else {
        Err(Invalid { path: path.into(), reason: reason.into() })
    }
}

fn finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, Invalid> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| Invalid {
            path: e.path().to_string(),
            reason: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Torus dimension of a rotation system.
    pub fn dim(&self) -> Option<usize> {
        match &self.system {
            SystemConfig::Rotation { alpha, .. } => Some(alpha.len()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), Invalid> {
        check(self.schema_version == SCHEMA_VERSION, "schema_version", "unsupported schema version")?;
        match &self.system {
            SystemConfig::Rotation { alpha, x0 } => {
                check(!alpha.is_empty() && alpha.len() <= 2, "system.alpha", "dimension must be 1 or 2")?;
                check(finite(alpha), "system.alpha", "must be finite")?;
                check(x0.len() == alpha.len(), "system.x0", "length must match system.alpha")?;
                check(finite(x0), "system.x0", "must be finite")?;
            }
            SystemConfig::Orbit { m, x0 } => {
                check(*m >= 1, "system.m", "must be at least 1")?;
                check(x0 < m, "system.x0", "must be below system.m")?;
            }
            SystemConfig::GridRotation { alpha, n, dt, x0 } => {
                check(alpha.is_finite() && dt.is_finite(), "system.alpha", "alpha and dt must be finite")?;
                check(*n >= 3 && n % 2 == 1, "system.n", "must be odd and at least 3")?;
                check(x0 < n, "system.x0", "must be below system.n")?;
            }
        }
        let k = &self.kernel;
        check(k.tau > 0.0 && k.tau.is_finite(), "kernel.tau", "must be positive")?;
        check(k.p > 0.0 && k.p < 1.0, "kernel.p", "must lie in (0, 1)")?;
        check(k.bandwidth >= 1 && k.bandwidth <= 16, "kernel.bandwidth", "must lie in 1..=16")?;
        if let (Some(d), Some(sd)) = (k.d, self.dim()) {
            check(d == sd, "kernel.d", "must match the system dimension")?;
        }
        let f = &self.fock;
        check(f.sigma_w > 0.0 && f.p_w > 0.0 && f.p_w < 1.0, "fock.sigma_w", "need sigma_w > 0 and 0 < p_w < 1")?;
        check((1..=8).contains(&f.nmax), "fock.nmax", "must lie in 1..=8")?;
        check((1..=8).contains(&f.modes), "fock.modes", "must lie in 1..=8")?;
        check(f.sigma > 0.0 && k.tau <= f.sigma / 2.0, "fock.sigma", "need kernel.tau <= sigma / 2")?;
        check(f.epsilon > 0.0, "fock.epsilon", "must be positive")?;
        check(f.grid >= 2 && f.grid <= 4096, "fock.grid", "must lie in 2..=4096")?;
        check(f.m.iter().all(|m| (1..=f.nmax).contains(m)), "fock.m", "entries must lie in 1..=nmax")?;
        check(f.tn_n.iter().all(|n| (1..=3).contains(n)), "fock.tn_n", "entries must lie in 1..=3")?;
        check(f.tn_kappa > 0.0, "fock.tn_kappa", "must be positive")?;
        check((1..=64).contains(&f.tn_bandwidth), "fock.tn_bandwidth", "must lie in 1..=64")?;
        let q = &self.qmda;
        check(q.l >= 1, "qmda.l", "must be at least 1")?;
        check(!q.observables.is_empty(), "qmda.observables", "must not be empty")?;
        check(q.noise >= 0.0 && q.noise.is_finite(), "qmda.noise", "must be nonnegative")?;
        check(q.steps >= 1, "qmda.steps", "must be at least 1")?;
        match q.likelihood {
            LikelihoodConfig::Gaussian { epsilon } => check(epsilon > 0.0, "qmda.likelihood.epsilon", "must be positive")?,
            LikelihoodConfig::Event { delta } => check(delta > 0.0, "qmda.likelihood.delta", "must be positive")?,
            LikelihoodConfig::Uninformative => {}
        }
        let c = &self.qcirc;
        check(c.q.iter().all(|q| (1..=10).contains(q)), "qcirc.q", "entries must lie in 1..=10")?;
        check(!c.t.is_empty() && finite(&c.t), "qcirc.t", "must be a nonempty list of finite times")?;
        check(c.tau > 0.0 && c.p > 0.0 && c.p < 1.0, "qcirc.tau", "need tau > 0 and 0 < p < 1")?;
        check(c.shots != Some(0), "qcirc.shots", "must be positive")?;
        let r = &self.rotate;
        check(r.dt > 0.0 && r.dt.is_finite(), "rotate.dt", "must be positive")?;
        check(r.samples >= 1, "rotate.samples", "must be at least 1")?;
        let kc = &self.koopman;
        check(kc.dt > 0.0, "koopman.dt", "must be positive")?;
        check(kc.samples >= 2, "koopman.samples", "must be at least 2")?;
        check(finite(&kc.t), "koopman.t", "must be finite")?;
        for (path, obs) in [("koopman.observable", &kc.observable), ("qcirc.observable", &c.observable)] {
            if let (ObservableConfig::Cosine { axis } | ObservableConfig::Sine { axis }, Some(d)) = (obs, self.dim()) {
                check(*axis < d, path, "axis exceeds the system dimension")?;
            }
        }
        Ok(())
    }
}
