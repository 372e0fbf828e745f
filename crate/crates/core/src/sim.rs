//! Fixed-step co-simulation of plant, transformed state and observer.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::observer::{observer_rhs, recover_state, xi_rhs, ObserverDesign};
use crate::plant::{InputSignal, PlantModel};
use crate::transform::TransformT;

pub const DEFAULT_DT: f64 = 1e-3;

/// One classical fourth-order Runge–Kutta step.
///
/// Domain errors raised by `rhs` are re-tagged with the stage time.
pub fn rk4_step<F>(mut rhs: F, state: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    if !(dt > 0.0) {
        return Err(Error::arg(format!("step size must be positive, got {dt}")));
    }
    let mut eval = |s: f64, x: &DVector<f64>| {
        rhs(s, x).map_err(|e| match e {
            Error::Domain(msg) => Error::Domain(format!("at t = {s}: {msg}")),
            other => other,
        })
    };
    let half = 0.5 * dt;
    let k1 = eval(t, state)?;
    let k2 = eval(t + half, &(state + &k1 * half))?;
    let k3 = eval(t + half, &(state + &k2 * half))?;
    let k4 = eval(t + dt, &(state + &k3 * dt))?;
    Ok(state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Everything needed for one simulation run.
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub plant: PlantModel,
    pub design: ObserverDesign,
    pub transform: TransformT,
    pub z0: DVector<f64>,
    pub xi_hat0: DVector<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub input: InputSignal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub z: DVector<f64>,
    pub xi: DVector<f64>,
    pub xi_hat: DVector<f64>,
    pub z_hat: DVector<f64>,
    pub y: f64,
    pub u: f64,
    pub err_z: f64,
    pub err_xi: f64,
}

/// Why a run stopped before the end of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Termination {
    pub last_valid_time: f64,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub order: usize,
    pub t0: f64,
    pub dt: f64,
    pub activation_time: f64,
    pub samples: Vec<Sample>,
    pub termination: Option<Termination>,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.termination.is_none()
    }

    /// Samples at or after `t_a`.
    pub fn after(&self, t_a: f64) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.t >= t_a)
    }

    pub fn csv_header(&self) -> String {
        let n = self.order;
        let mut cols = vec!["t".to_string()];
        for prefix in ["z", "xi", "xihat", "zhat"] {
            cols.extend((1..=n).map(|i| format!("{prefix}{i}")));
        }
        cols.extend(["y", "u", "err_z", "err_xi"].map(String::from));
        cols.join(",")
    }

    /// CSV with a fixed header and 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            push_num(&mut line, s.t);
            for v in s.z.iter().chain(&s.xi).chain(&s.xi_hat).chain(&s.z_hat) {
                line.push(',');
                push_num(&mut line, *v);
            }
            for v in [s.y, s.u, s.err_z, s.err_xi] {
                line.push(',');
                push_num(&mut line, v);
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

fn push_num(s: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(s, "{v:.16e}");
}

/// Integrate `[z; ξ; ξ̂]` jointly on the grid `t0 + k·dt`.
///
/// Plant domain errors stop the run early; the returned trajectory then
/// carries a [`Termination`] marker.
pub fn run_experiment(setup: &SimulationSetup) -> Result<Trajectory> {
    let SimulationSetup {
        plant,
        design,
        transform: tr,
        z0,
        xi_hat0,
        t_end,
        dt,
        input,
    } = setup;
    let n = tr.order();
    let (dt, t_end) = (*dt, *t_end);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::arg(format!("step size must be positive, got {dt}")));
    }
    if plant.order() != n || design.order() != n || z0.len() != n || xi_hat0.len() != n {
        return Err(Error::arg(format!(
            "dimension mismatch: transform order {n}, plant {}, gain {}, z0 {}, xihat0 {}",
            plant.order(),
            design.order(),
            z0.len(),
            xi_hat0.len()
        )));
    }
    if xi_hat0[0] != 0.0 {
        return Err(Error::arg("first component of xihat0 must be zero"));
    }
    let t0 = tr.modulating_function().t0();
    if !(t_end > t0) {
        return Err(Error::arg(format!(
            "horizon end {t_end} must exceed t0 = {t0}"
        )));
    }
    let t_a = design.activation_time();
    let bound = plant.input_bound();
    let steps = ((t_end - t0) / dt).round() as usize;

    let rhs = |t: f64, x: &DVector<f64>| -> Result<DVector<f64>> {
        let z = x.rows(0, n).into_owned();
        let xi = x.rows(n, n).into_owned();
        let xh = x.rows(2 * n, n).into_owned();
        let u = input.value(t, bound);
        let y = plant.output(&z);
        let mut d = DVector::zeros(3 * n);
        d.rows_mut(0, n).copy_from(&plant.rhs(&z, u)?);
        d.rows_mut(n, n)
            .copy_from(&xi_rhs(&xi, t, y, u, plant, tr, t_a, Some(&z))?);
        d.rows_mut(2 * n, n)
            .copy_from(&observer_rhs(&xh, t, y, u, design, plant, tr)?);
        Ok(d)
    };

    let record = |t: f64, x: &DVector<f64>| -> Result<Sample> {
        let z = x.rows(0, n).into_owned();
        let xi = x.rows(n, n).into_owned();
        let xi_hat = x.rows(2 * n, n).into_owned();
        let z_hat = recover_state(&xi_hat, t, t_a, tr)?;
        Ok(Sample {
            t,
            y: plant.output(&z),
            u: input.value(t, bound),
            err_z: (&z - &z_hat).norm(),
            err_xi: (&xi - &xi_hat).norm(),
            z,
            xi,
            xi_hat,
            z_hat,
        })
    };

    let mut x = DVector::zeros(3 * n);
    x.rows_mut(0, n).copy_from(z0);
    x.rows_mut(2 * n, n).copy_from(xi_hat0);

    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(record(t0, &x)?);
    let mut termination = None;
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let next = rk4_step(&rhs, &x, t, dt).and_then(|nx| {
            if nx.iter().all(|v| v.is_finite()) {
                Ok(nx)
            } else {
                Err(Error::Numerical(format!(
                    "non-finite state after step at t = {t}"
                )))
            }
        });
        match next.and_then(|nx| record(t0 + (k + 1) as f64 * dt, &nx).map(|s| (nx, s))) {
            Ok((nx, s)) => {
                x = nx;
                samples.push(s);
            }
            Err(e @ (Error::Domain(_) | Error::Numerical(_) | Error::Singular { .. })) => {
                termination = Some(Termination {
                    last_valid_time: t,
                    error: e,
                });
                break;
            }
            Err(e) => return Err(e),
        }
    }

    Ok(Trajectory {
        order: n,
        t0,
        dt,
        activation_time: t_a,
        samples,
        termination,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    /// `sup_{t ≥ t_a} ‖z - ẑ‖`.
    pub sup_error: f64,
    pub sup_time: f64,
    /// First time after which the error stays at or below the threshold.
    pub time_to_threshold: Option<f64>,
    pub terminal_error: f64,
    pub terminal_time: f64,
}

pub fn error_metrics(traj: &Trajectory, t_a: f64, threshold: f64) -> Result<ErrorMetrics> {
    let window: Vec<&Sample> = traj.after(t_a).collect();
    let last = *window
        .last()
        .ok_or_else(|| Error::arg(format!("trajectory has no samples at or after t_a = {t_a}")))?;
    let mut sup = (0.0f64, window[0].t);
    for s in &window {
        if s.err_z > sup.0 {
            sup = (s.err_z, s.t);
        }
    }
    let mut settled = None;
    for s in window.iter().rev() {
        if s.err_z <= threshold {
            settled = Some(s.t);
        } else {
            break;
        }
    }
    Ok(ErrorMetrics {
        sup_error: sup.0,
        sup_time: sup.1,
        time_to_threshold: settled,
        terminal_error: last.err_z,
        terminal_time: last.t,
    })
}
