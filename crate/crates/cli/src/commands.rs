use std::fmt::Write as _;

use opdyn::dynamics::{evaluate, koopman_exact, sample_trajectory, FourierObservable, PeriodicOrbitSystem, RotationSystem, TorusPoint};
use opdyn::fock::{second_quantization_forecast_with, tensor_network_expectation_with, FockWeight, SqParams, TnParams};
use opdyn::koopman::{analytic_generator, data_driven_generator, eigenfrequency_csv, evolve, lemma8_residual, GeneratorSpec};
use opdyn::par::map_indexed;
use opdyn::qcirc::{
    circuit_expectation, export_circuit, feature_state, frequency_vector, projected_observable, sampled_expectation,
    walsh_coefficients, QubitEncoding,
};
use opdyn::qmda::{run_filter, run_filter_with_observations, ClassicalDensity, FilterConfig, FilterMode, FilterSystem, LikelihoodKernel, ObservationModel};
use opdyn::report::fmt_real;
use opdyn::rkha::{SubexpWeight, TruncatedLattice};
use opdyn::Execution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Component, ExperimentConfig, GeneratorChoice, LikelihoodConfig, ObservableConfig, SystemConfig};
use crate::CliError;

/// A named output file.
pub struct Artifact {
    pub name: &'static str,
    pub body: String,
}

fn rotation(cfg: &ExperimentConfig) -> Result<(RotationSystem, TorusPoint), CliError> {
    match &cfg.system {
        SystemConfig::Rotation { alpha, x0 } => {
            let sys = RotationSystem::new(alpha.clone())?;
            if let Some(r) = sys.near_rational_relation(100, 1e-9) {
                eprintln!(
                    "warning: alpha[{}]/alpha[{}] is within {:.1e} of {}/{}; the rotation may not be ergodic",
                    r.i, r.k, r.gap, r.num, r.den
                );
            }
            Ok((sys, TorusPoint::new(x0.clone())?))
        }
        _ => Err(CliError::Invalid("system.kind: this command needs a rotation system".into())),
    }
}

fn observable(obs: &ObservableConfig, d: usize) -> FourierObservable {
    match *obs {
        ObservableConfig::Cosine { axis } => FourierObservable::cosine(d, axis),
        ObservableConfig::Sine { axis } => FourierObservable::sine(d, axis),
        ObservableConfig::Constant { value } => FourierObservable::constant(d, value),
    }
}

pub fn rotate(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let (sys, x0) = rotation(cfg)?;
    let tr = sample_trajectory(&sys, &x0, cfg.rotate.dt, cfg.rotate.samples)?;
    Ok(vec![Artifact { name: "trajectory.csv", body: tr.to_csv() }])
}

pub fn filter(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let (system, x0) = match &cfg.system {
        SystemConfig::Orbit { m, x0 } => (FilterSystem::Orbit(PeriodicOrbitSystem::new(*m)?), *x0),
        SystemConfig::GridRotation { alpha, n, dt, x0 } => (FilterSystem::grid_rotation(*alpha, *n, *dt)?, *x0),
        SystemConfig::Rotation { .. } => {
            return Err(CliError::Invalid("system.kind: filter needs an orbit or grid_rotation system".into()))
        }
    };
    let q = &cfg.qmda;
    let h = q
        .observables
        .iter()
        .map(|c| match c {
            Component::Cos => FourierObservable::cosine(1, 0),
            Component::Sin => FourierObservable::sine(1, 0),
        })
        .collect();
    let kernel = match q.likelihood {
        LikelihoodConfig::Gaussian { epsilon } => LikelihoodKernel::Gaussian { epsilon },
        LikelihoodConfig::Event { delta } => LikelihoodKernel::Event { delta },
        LikelihoodConfig::Uninformative => LikelihoodKernel::Uninformative,
    };
    let n = system.len();
    if q.l > n {
        return Err(CliError::Invalid(format!("qmda.l: must not exceed the {n} system states")));
    }
    let fc = FilterConfig {
        system,
        model: ObservationModel::new(h, kernel, q.noise)?,
        x0,
        steps: q.steps,
        modes: vec![FilterMode::Classical, FilterMode::Quantum, FilterMode::Projected(q.l)],
        prior: ClassicalDensity::uniform(n),
        seed: cfg.seed,
    };
    let trace = match &q.observations {
        Some(path) => run_filter_with_observations(&fc, &read_observations(path, q.observables.len())?)?,
        None => run_filter(&fc)?,
    };
    Ok(vec![Artifact { name: "filter.csv", body: trace.to_csv() }])
}

fn read_observations(path: &str, width: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Invalid(format!("qmda.observations: {e}")))?;
        if rec.len() != width + 1 {
            return Err(CliError::Invalid(format!(
                "qmda.observations: row {} has {} columns, expected t plus {width}",
                i + 1,
                rec.len()
            )));
        }
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Invalid(format!("qmda.observations: row {}: {e}", i + 1)))?;
        rows.push(row[1..].to_vec());
    }
    Ok(rows)
}

pub fn koopman(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<Artifact>, CliError> {
    let (sys, x0) = rotation(cfg)?;
    let d = sys.dim();
    let k = &cfg.kernel;
    let kc = &cfg.koopman;
    let lat = TruncatedLattice::new(d, k.bandwidth)?;
    let gen: GeneratorSpec = match kc.generator {
        GeneratorChoice::Analytic => analytic_generator(&sys, &lat)?,
        GeneratorChoice::DataDriven => {
            let tr = sample_trajectory(&sys, &x0, kc.dt, kc.samples)?;
            data_driven_generator(&tr.points, kc.dt, &lat)?
        }
    };
    let w = SubexpWeight::new(k.tau, k.p, d)?;
    let f = observable(&kc.observable, d);

    let mut evo = String::from("t,value,exact,abs_error,lemma8_residual\n");
    for &t in &kc.t {
        let value = evaluate(&evolve(&gen, &f, t)?, &x0).re;
        let exact = evaluate(&koopman_exact(&f, &sys, t), &x0).re;
        let res = lemma8_residual(&w, &gen, &f, t)?;
        writeln!(evo, "{},{},{},{},{}", fmt_real(t), fmt_real(value), fmt_real(exact), fmt_real((value - exact).abs()), fmt_real(res)).unwrap();
    }

    let fc = &cfg.fock;
    let fock = FockWeight::new(fc.sigma_w, fc.p_w, fc.nmax)?;
    let header = "t,m_or_n,value,exact,abs_error,truncation_mass\n";
    let mut sq = String::from(header);
    for &t in &kc.t {
        let exact = evaluate(&koopman_exact(&f, &sys, t), &x0).re;
        for &m in &fc.m {
            let params = SqParams {
                m,
                sigma: fc.sigma,
                tau: k.tau,
                p: k.p,
                epsilon: fc.epsilon,
                modes: fc.modes,
                bandwidth: k.bandwidth,
                grid: fc.grid,
                fock,
            };
            let r = second_quantization_forecast_with(&f, &gen, &params, &x0, t, exec)?;
            writeln!(sq, "{},{m},{},{},{},{}", fmt_real(t), fmt_real(r.value), fmt_real(exact), fmt_real((r.value - exact).abs()), fmt_real(r.truncation_mass)).unwrap();
        }
    }
    let mut out = vec![
        Artifact { name: "eigenfrequencies.csv", body: eigenfrequency_csv(&gen, &sys) },
        Artifact { name: "evolution.csv", body: evo },
        Artifact { name: "forecast_sq.csv", body: sq },
    ];
    if kc.tensor_network {
        let mut tn = String::from(header);
        for &t in &kc.t {
            let exact = evaluate(&koopman_exact(&f, &sys, t), &x0).re;
            for &n in &fc.tn_n {
                let params = TnParams { n, kappa: fc.tn_kappa, sigma: 0.0, tau: k.tau, p: k.p, bandwidth: fc.tn_bandwidth };
                let r = tensor_network_expectation_with(&f, &sys, &x0, t, &params, exec)?;
                writeln!(tn, "{},{n},{},{},{},{}", fmt_real(t), fmt_real(r.value), fmt_real(exact), fmt_real((r.value - exact).abs()), fmt_real(r.truncation_bound)).unwrap();
            }
        }
        out.push(Artifact { name: "forecast_tn.csv", body: tn });
    }
    Ok(out)
}

pub fn qcirc(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<Artifact>, CliError> {
    let (sys, x0) = rotation(cfg)?;
    let d = sys.dim();
    let c = &cfg.qcirc;
    let w = SubexpWeight::new(c.tau, c.p, d)?;
    let f = observable(&c.observable, d);
    let points: Vec<(f64, u32)> = c.t.iter().flat_map(|&t| c.q.iter().map(move |&q| (t, q))).collect();
    let values = map_indexed(exec, points.len(), |i| {
        let (t, q) = points[i];
        let enc = QubitEncoding::new(d, q)?;
        circuit_expectation(&enc, &w, &sys, &f, &x0, t)
    });
    let mut csv = String::from("q,t,value,exact,abs_error\n");
    for (&(t, q), v) in points.iter().zip(values) {
        let v = v?;
        let exact = evaluate(&koopman_exact(&f, &sys, t), &x0).re;
        writeln!(csv, "{q},{},{},{},{}", fmt_real(t), fmt_real(v), fmt_real(exact), fmt_real((v - exact).abs())).unwrap();
    }
    let mut out = vec![Artifact { name: "qcirc.csv", body: csv }];

    if let Some(shots) = c.shots {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut s = String::from("q,t,shots,estimate,value\n");
        for &(t, q) in &points {
            let enc = QubitEncoding::new(d, q)?;
            let coeffs = walsh_coefficients(&frequency_vector(&enc, &sys)?)?;
            let psi = opdyn::qcirc::evolve_statevector_with(&coeffs, &feature_state(&enc, &w, &x0)?, -t, exec);
            let a = projected_observable(&enc, &w, &f)?;
            let est = sampled_expectation(&a, &psi, shots, &mut rng)?;
            let value = opdyn::qcirc::statevector_expectation(&a, &psi);
            writeln!(s, "{q},{},{shots},{},{}", fmt_real(t), fmt_real(est), fmt_real(value)).unwrap();
        }
        out.push(Artifact { name: "qcirc_shots.csv", body: s });
    }

    let q = *c.q.iter().max().unwrap_or(&2);
    let t = c.export_t.unwrap_or(*c.t.last().expect("validated nonempty"));
    let enc = QubitEncoding::new(d, q)?;
    let coeffs = walsh_coefficients(&frequency_vector(&enc, &sys)?)?;
    let psi = feature_state(&enc, &w, &x0)?;
    // states move forward in time under e^{-tV}
    out.push(Artifact { name: "circuit.txt", body: export_circuit(&coeffs, &enc, -t, Some(&psi)) });
    Ok(out)
}
