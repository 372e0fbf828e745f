//! wasm-bindgen entry points for the browser demo in `www/`.
//!
//! Each export is a thin wrapper over a plain function so the logic can be
//! tested natively.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use mfobserver::modfun::ModulatingFunction;
use mfobserver::observer::{lyapunov_solve, sym_eigenvalues, varpi, ObserverDesign};
use mfobserver::plant::{make_tanks_plant, InputSignal, TankParams};
use mfobserver::sim::{run_experiment, SimulationSetup};
use mfobserver::transform::{activation_time, TransformT};
use nalgebra::{DMatrix, DVector};
use wasm_bindgen::prelude::*;

/// Values per row in the [`simulate_tanks`] output.
pub const ROW: usize = 7;
/// Leading values before the rows: t_a, row count, last valid time.
pub const HEADER: usize = 3;

const MAX_ROWS: usize = 2000;
const DT: f64 = 1e-3;
const INPUT_BOUND: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TanksRun {
    pub k1: f64,
    pub k2: f64,
    pub eps: f64,
    pub z0: [f64; 2],
    pub xi_hat2: f64,
    pub v_p: f64,
    pub t_end: f64,
}

/// Flattened run: `[t_a, rows, last_t, (t, z1, z2, zhat1, zhat2, err_z, u)*]`.
pub fn run_tanks(run: &TanksRun) -> Result<Vec<f64>, String> {
    if !(run.t_end > 0.0 && run.t_end <= 600.0) {
        return Err(format!("horizon {} must lie in (0, 600]", run.t_end));
    }
    let e = |e: mfobserver::Error| e.to_string();
    let mf = ModulatingFunction::exponential(2, 0.0).map_err(e)?;
    let t_a = activation_time(2, &mf, run.eps).map_err(e)?;
    let setup = SimulationSetup {
        plant: make_tanks_plant(TankParams::default(), INPUT_BOUND).map_err(e)?,
        design: ObserverDesign::new(
            DVector::from_vec(vec![run.k1, run.k2]),
            DMatrix::identity(2, 2),
            t_a,
        )
        .map_err(e)?,
        transform: TransformT::new(2, mf).map_err(e)?,
        z0: DVector::from_row_slice(&run.z0),
        xi_hat0: DVector::from_vec(vec![0.0, run.xi_hat2]),
        t_end: run.t_end,
        dt: DT,
        input: InputSignal::Constant(run.v_p),
    };
    let traj = run_experiment(&setup).map_err(e)?;
    let every = traj.samples.len().div_ceil(MAX_ROWS).max(1);
    let last_t = traj.samples.last().map_or(0.0, |s| s.t);

    let mut out = vec![t_a, 0.0, last_t];
    let mut rows = 0;
    for (k, s) in traj.samples.iter().enumerate() {
        if k % every != 0 && k + 1 != traj.samples.len() {
            continue;
        }
        out.extend_from_slice(&[s.t, s.z[0], s.z[1], s.z_hat[0], s.z_hat[1], s.err_z, s.u]);
        rows += 1;
    }
    out[1] = rows as f64;
    Ok(out)
}

/// `[re1, im1, re2, im2, lambda_min(P), lambda_max(P), varpi]` for Q = q_scale I.
pub fn gain_report(
    k1: f64,
    k2: f64,
    q_scale: f64,
    input_bound: f64,
    gamma_f: f64,
) -> Result<Vec<f64>, String> {
    if !(q_scale > 0.0) {
        return Err("Q scale must be positive".into());
    }
    let gain = DVector::from_vec(vec![k1, k2]);
    let q = DMatrix::identity(2, 2) * q_scale;
    let sol = lyapunov_solve(&gain, &q).map_err(|e| e.to_string())?;
    let p = sym_eigenvalues(&sol.p);
    let mut out: Vec<f64> = sol.eigenvalues.iter().flat_map(|c| [c.re, c.im]).collect();
    out.extend([
        p[0],
        p[1],
        varpi(&sol.p, &q, 1.0, input_bound, gamma_f, 0.0),
    ]);
    Ok(out)
}

pub fn activation(n: usize, m: usize, eps: f64) -> Result<f64, String> {
    if m < n {
        return Err(format!("m = {m} must be at least n = {n}"));
    }
    let mf = ModulatingFunction::exponential(m, 0.0).map_err(|e| e.to_string())?;
    activation_time(n, &mf, eps).map_err(|e| e.to_string())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_tanks(
    k1: f64,
    k2: f64,
    eps: f64,
    z1: f64,
    z2: f64,
    xi_hat2: f64,
    v_p: f64,
    t_end: f64,
) -> Result<Vec<f64>, JsError> {
    run_tanks(&TanksRun {
        k1,
        k2,
        eps,
        z0: [z1, z2],
        xi_hat2,
        v_p,
        t_end,
    })
    .map_err(|m| JsError::new(&m))
}

#[wasm_bindgen]
pub fn check_gain(
    k1: f64,
    k2: f64,
    q_scale: f64,
    input_bound: f64,
    gamma_f: f64,
) -> Result<Vec<f64>, JsError> {
    gain_report(k1, k2, q_scale, input_bound, gamma_f).map_err(|m| JsError::new(&m))
}

#[wasm_bindgen]
pub fn activation_time_for(n: usize, m: usize, eps: f64) -> Result<f64, JsError> {
    activation(n, m, eps).map_err(|m| JsError::new(&m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_run() -> TanksRun {
        TanksRun {
            k1: 30.0,
            k2: 200.0,
            eps: 0.01,
            z0: [4.0, 4.0],
            xi_hat2: 4.0,
            v_p: 5.0,
            t_end: 10.0,
        }
    }

    #[test]
    fn tanks_layout_and_convergence() {
        let out = run_tanks(&default_run()).unwrap();
        assert!((out[0] - 0.38013).abs() < 1e-4);
        let rows = out[1] as usize;
        assert_eq!(out.len(), HEADER + rows * ROW);
        assert!(rows <= MAX_ROWS + 1);
        let last = &out[HEADER + (rows - 1) * ROW..];
        assert!((last[0] - 10.0).abs() < 1e-9);
        assert_eq!(out[2], last[0]);
        let rel = last[5] / (last[1].hypot(last[2]));
        assert!(rel < 0.05, "{rel}");
    }

    #[test]
    fn bad_inputs_are_errors() {
        let mut r = default_run();
        r.eps = 1.5;
        assert!(run_tanks(&r).is_err());
        r.eps = 0.01;
        r.t_end = -1.0;
        assert!(run_tanks(&r).is_err());
        assert!(gain_report(0.0, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(activation(3, 2, 0.01).is_err());
    }

    #[test]
    fn gain_report_matches_poles() {
        let r = gain_report(30.0, 200.0, 1.0, 0.0, 0.0).unwrap();
        let mut re = [r[0], r[2]];
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 20.0).abs() < 1e-9 && (re[1] + 10.0).abs() < 1e-9);
        assert!((r[4] - 0.016748).abs() < 1e-6);
        assert!(r[6] < 0.0);
        assert!(gain_report(30.0, 200.0, 0.01, 0.0, 0.0).unwrap()[6] > 0.0);
    }

    #[test]
    fn activation_matches_closed_form() {
        let want = -(1.0 - 0.01f64.powf(0.25)).ln();
        assert!((activation(2, 2, 0.01).unwrap() - want).abs() < 1e-12);
    }
}
