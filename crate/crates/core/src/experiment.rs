//! Configuration-driven runs: build the pieces, simulate, certify, report.

use std::fs;
use std::path::Path;

use nalgebra::{Complex, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, LipschitzSource, PlantSpec};
use crate::error::{Error, Result};
use crate::modfun::ModulatingFunction;
use crate::observer::{estimate_lipschitz, kappa_bound, KappaInputs, ObserverDesign};
use crate::plant::{
    make_affine_plant, make_chain_plant, make_tanks_plant, LipschitzConstants, PlantModel,
};
use crate::sim::{error_metrics, run_experiment, ErrorMetrics, SimulationSetup, Trajectory};
use crate::transform::{activation_time, TransformT};

pub const DEFAULT_SEED: u64 = 0;

pub fn build_plant(cfg: &ExperimentConfig) -> Result<PlantModel> {
    let plant = match &cfg.plant {
        PlantSpec::Chain => make_chain_plant(cfg.n)?,
        PlantSpec::Tanks { params, .. } => make_tanks_plant(*params, cfg.input_bound)?,
        PlantSpec::Affine {
            weights,
            offset,
            input_gain,
        } => make_affine_plant(weights.clone(), *offset, *input_gain, cfg.input_bound)?,
    };
    Ok(plant.with_input_bound(cfg.input_bound))
}

/// Simulation setup plus the transformation and plant constants it used.
pub fn build_setup(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(SimulationSetup, LipschitzConstants)> {
    let mf = ModulatingFunction::exponential(cfg.m, cfg.t0)?;
    let t_a = activation_time(cfg.n, &mf, cfg.eps)?;
    let transform = TransformT::new(cfg.n, mf)?.with_mu_floor(cfg.mu_floor);
    let design = ObserverDesign::new(
        DVector::from_vec(cfg.gain.clone()),
        cfg.q.matrix(cfg.n)?,
        t_a,
    )?
    .nonlinearity_aware(cfg.nonlinearity_aware);
    let plant = build_plant(cfg)?;
    let constants = match &cfg.lipschitz {
        LipschitzSource::Plant => plant.constants(),
        LipschitzSource::Values(c) => *c,
        LipschitzSource::Estimate {
            region,
            samples,
            input,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            estimate_lipschitz(&plant, region, *samples, *input, &mut rng)?
        }
    };
    let plant = plant.with_constants(constants);
    let setup = SimulationSetup {
        plant,
        design,
        transform,
        z0: DVector::from_vec(cfg.z0.clone()),
        xi_hat0: DVector::from_vec(cfg.xi_hat0.clone()),
        t_end: cfg.t_end,
        dt: cfg.dt,
        input: cfg.input,
    };
    Ok((setup, constants))
}

/// Convergence certificate for a design.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub activation_time: f64,
    pub eigenvalues: Vec<Complex<f64>>,
    pub lyapunov_residual: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub m0: f64,
    pub input_bound: f64,
    pub constants: LipschitzConstants,
    pub varpi: f64,
    pub tau: f64,
    /// `None` when `varpi ≤ 0`.
    pub kappa: Option<f64>,
}

pub fn certify(
    setup: &SimulationSetup,
    constants: LipschitzConstants,
    tau_span: f64,
    tau_points: usize,
) -> Result<Certificate> {
    let design = &setup.design;
    let mf = setup.transform.modulating_function();
    let t_a = design.activation_time();
    let m0 = mf.sup_abs();
    let input_bound = setup.plant.input_bound();
    let varpi = design.varpi(m0, input_bound, &constants);
    let tau = setup
        .transform
        .sup_inverse_norm_sq(t_a, tau_span, tau_points)?;
    let kappa = match kappa_bound(
        design.p(),
        varpi,
        &KappaInputs {
            tau,
            xi_hat0_norm: setup.xi_hat0.norm(),
            delta_f: constants.delta_f,
            delta_g: constants.delta_g,
            m0,
            t_a,
            t0: mf.t0(),
        },
    ) {
        Ok(k) => Some(k),
        Err(Error::CertificateUnavailable { .. }) => None,
        Err(e) => return Err(e),
    };
    let (p_min, p_max) = design.p_spectrum();
    let (q_min, _) = design.q_spectrum();
    Ok(Certificate {
        activation_time: t_a,
        eigenvalues: design.error_eigenvalues().to_vec(),
        lyapunov_residual: design.lyapunov_residual(),
        p_min,
        p_max,
        q_min,
        m0,
        input_bound,
        constants,
        varpi,
        tau,
        kappa,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub trajectory: Trajectory,
    pub certificate: Certificate,
    pub metrics: Option<ErrorMetrics>,
}

impl Outcome {
    /// `key = value` summary, one quantity per line.
    pub fn summary(&self) -> String {
        let c = &self.certificate;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("activation_time", format!("{:.17}", c.activation_time));
        kv(
            "eigenvalues",
            c.eigenvalues
                .iter()
                .map(|e| {
                    if e.im == 0.0 {
                        format!("{:.12}", e.re)
                    } else {
                        format!("{:.12}{:+.12}i", e.re, e.im)
                    }
                })
                .collect::<Vec<_>>()
                .join(", "),
        );
        kv("lyapunov_residual", format!("{:e}", c.lyapunov_residual));
        kv("lambda_min_p", format!("{:.17e}", c.p_min));
        kv("lambda_max_p", format!("{:.17e}", c.p_max));
        kv("lambda_min_q", format!("{:.17e}", c.q_min));
        kv("m0", format!("{}", c.m0));
        kv("input_bound", format!("{}", c.input_bound));
        kv("gamma_f", format!("{:.17e}", c.constants.gamma_f));
        kv("delta_f", format!("{:.17e}", c.constants.delta_f));
        kv("gamma_g", format!("{:.17e}", c.constants.gamma_g));
        kv("delta_g", format!("{:.17e}", c.constants.delta_g));
        kv("varpi", format!("{:.17e}", c.varpi));
        kv("tau", format!("{:.17e}", c.tau));
        kv(
            "kappa",
            c.kappa
                .map_or_else(|| "unavailable".to_string(), |k| format!("{k:.17e}")),
        );
        match &self.metrics {
            Some(m) => {
                kv("sup_error", format!("{:.17e}", m.sup_error));
                kv("sup_error_time", format!("{:.17}", m.sup_time));
                kv("terminal_error", format!("{:.17e}", m.terminal_error));
                kv(
                    "time_to_threshold",
                    m.time_to_threshold
                        .map_or_else(|| "never".into(), |t| format!("{t:.17}")),
                );
            }
            None => kv("sup_error", "unavailable".into()),
        }
        kv("samples", format!("{}", self.trajectory.samples.len()));
        match &self.trajectory.termination {
            Some(t) => {
                kv("status", "truncated".into());
                kv("last_valid_time", format!("{:.17}", t.last_valid_time));
                kv("error", t.error.to_string());
            }
            None => kv("status", "complete".into()),
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let file = fs::File::create(dir.join("trajectory.csv"))?;
        self.trajectory.write_csv(std::io::BufWriter::new(file))?;
        fs::write(dir.join("summary.txt"), self.summary())?;
        Ok(())
    }
}

/// Run a configured experiment end to end.
pub fn run(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let (setup, constants) = build_setup(cfg, seed)?;
    let certificate = certify(&setup, constants, cfg.tau_span, cfg.tau_points)?;
    let trajectory = run_experiment(&setup)?;
    let metrics = error_metrics(&trajectory, certificate.activation_time, cfg.threshold).ok();
    Ok(Outcome {
        trajectory,
        certificate,
        metrics,
    })
}
