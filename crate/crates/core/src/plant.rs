//! Canonical-form plants `ż = A z + Ψ(z, u)`, `y = z_1`, where `Ψ` is zero
//! except for its last row `f(z, u) + g(z) u`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Lower bound on the tank-2 level before the model is considered invalid.
pub const TANK_LEVEL_FLOOR: f64 = 1e-6;

/// Constants `γ_f, δ_f, γ_g, δ_g` with
/// `|f(z1) - f(z2)|² ≤ γ_f² ‖z1 - z2‖² + δ_f²` and likewise for `g`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LipschitzConstants {
    pub gamma_f: f64,
    pub delta_f: f64,
    pub gamma_g: f64,
    pub delta_g: f64,
}

/// Last row of `Ψ`.
pub trait LastRow: Send + Sync {
    /// Drift part `f(z, u)`. The input appears here for models such as the
    /// coupled tanks, whose printed nonlinearity mixes `u` into the drift.
    fn drift(&self, z: &[f64], u: f64) -> Result<f64>;

    /// Input gain `g(z)`.
    fn input_gain(&self, z: &[f64]) -> Result<f64>;
}

#[derive(Clone)]
pub struct PlantModel {
    name: String,
    order: usize,
    row: Arc<dyn LastRow>,
    input_bound: f64,
    constants: LipschitzConstants,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("name", &self.name)
            .field("order", &self.order)
            .field("input_bound", &self.input_bound)
            .field("constants", &self.constants)
            .finish_non_exhaustive()
    }
}

impl PlantModel {
    pub fn new(
        name: impl Into<String>,
        order: usize,
        row: Arc<dyn LastRow>,
        input_bound: f64,
        constants: LipschitzConstants,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::arg("plant order must be at least 1"));
        }
        if !(input_bound >= 0.0) {
            return Err(Error::arg("input bound must be non-negative"));
        }
        Ok(Self {
            name: name.into(),
            order,
            row,
            input_bound,
            constants,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn input_bound(&self) -> f64 {
        self.input_bound
    }

    pub fn constants(&self) -> LipschitzConstants {
        self.constants
    }

    pub fn with_constants(mut self, constants: LipschitzConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn with_input_bound(mut self, bound: f64) -> Self {
        self.input_bound = bound;
        self
    }

    pub fn f(&self, z: &[f64], u: f64) -> Result<f64> {
        self.row.drift(z, u)
    }

    pub fn g(&self, z: &[f64]) -> Result<f64> {
        self.row.input_gain(z)
    }

    /// `f(z, u) + g(z) u`.
    pub fn last_row(&self, z: &[f64], u: f64) -> Result<f64> {
        Ok(self.f(z, u)? + self.g(z)? * u)
    }

    pub fn output(&self, z: &DVector<f64>) -> f64 {
        z[0]
    }

    /// `A z + Ψ(z, u)`.
    pub fn rhs(&self, z: &DVector<f64>, u: f64) -> Result<DVector<f64>> {
        let n = self.order;
        let mut dz = DVector::zeros(n);
        for i in 0..n - 1 {
            dz[i] = z[i + 1];
        }
        dz[n - 1] = self.last_row(z.as_slice(), u)?;
        Ok(dz)
    }
}

/// `f ≡ 0`, `g ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Integrators;

impl LastRow for Integrators {
    fn drift(&self, _z: &[f64], _u: f64) -> Result<f64> {
        Ok(0.0)
    }

    fn input_gain(&self, _z: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

/// Pure integrator chain of order `n`; all Lipschitz constants vanish.
pub fn make_chain_plant(n: usize) -> Result<PlantModel> {
    PlantModel::new(
        format!("chain{n}"),
        n,
        Arc::new(Integrators),
        0.0,
        LipschitzConstants::default(),
    )
}

/// `f(z) = w·z + c`, `g(z) = b` (constant). Used for synthetic tests.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRow {
    pub weights: Vec<f64>,
    pub offset: f64,
    pub input_gain: f64,
}

impl LastRow for AffineRow {
    fn drift(&self, z: &[f64], _u: f64) -> Result<f64> {
        Ok(self.weights.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + self.offset)
    }

    fn input_gain(&self, _z: &[f64]) -> Result<f64> {
        Ok(self.input_gain)
    }
}

/// Plant whose last row is affine in the state, with exact Lipschitz constants.
pub fn make_affine_plant(
    weights: Vec<f64>,
    offset: f64,
    input_gain: f64,
    input_bound: f64,
) -> Result<PlantModel> {
    let n = weights.len();
    let gamma_f = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    PlantModel::new(
        format!("affine{n}"),
        n,
        Arc::new(AffineRow {
            weights,
            offset,
            input_gain,
        }),
        input_bound,
        LipschitzConstants {
            gamma_f,
            ..Default::default()
        },
    )
}

/// Coupled-tanks physical parameters (any consistent unit system).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TankParams {
    /// Outflow orifice area of tank 1.
    pub a_o1: f64,
    /// Outflow orifice area of tank 2.
    pub a_o2: f64,
    pub a_t1: f64,
    pub a_t2: f64,
    /// Pump flow constant per volt.
    pub k_p: f64,
    pub g_acc: f64,
}

impl Default for TankParams {
    /// Placeholder values in cm / s units, typical of laboratory two-tank rigs.
    fn default() -> Self {
        Self {
            a_o1: 0.1781,
            a_o2: 0.1781,
            a_t1: 15.5179,
            a_t2: 15.5179,
            k_p: 3.3,
            g_acc: 981.0,
        }
    }
}

impl TankParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("A_o1", self.a_o1),
            ("A_o2", self.a_o2),
            ("A_t1", self.a_t1),
            ("A_t2", self.a_t2),
            ("K_p", self.k_p),
            ("g_acc", self.g_acc),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::arg(format!(
                    "tank parameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// The coupled-tanks nonlinearity `φ(z, V_p)`, with `z = (z1, z2)`.
///
/// `z1` is the tank-2 level (the measured output). The input is the pump
/// voltage and enters only through the first term.
pub fn tanks_phi(z: &[f64], params: &TankParams, v_p: f64) -> Result<f64> {
    let (z1, z2) = (z[0], z[1]);
    if !(z1 > TANK_LEVEL_FLOOR) {
        return Err(Error::domain(format!(
            "tank level z1 = {z1} is not above {TANK_LEVEL_FLOOR}"
        )));
    }
    let TankParams {
        a_o1,
        a_o2,
        a_t1,
        a_t2,
        k_p,
        g_acc,
    } = *params;
    let root = (2.0 * g_acc * z1).sqrt();
    let denom = a_t2 * z2 + a_o2 * root;
    if denom.abs() <= 1e-12 * (a_t2 * z2.abs() + a_o2 * root) {
        return Err(Error::domain(format!(
            "pump term denominator vanishes at z = ({z1}, {z2})"
        )));
    }
    Ok(
        -(a_o1 * a_o1 * g_acc / (a_t1 * a_t2)) * (1.0 + k_p * v_p / denom)
            - (a_o2 * g_acc / a_t2) * (z2 / root),
    )
}

#[derive(Debug, Clone, Copy)]
pub struct CoupledTanks {
    pub params: TankParams,
}

impl LastRow for CoupledTanks {
    fn drift(&self, z: &[f64], u: f64) -> Result<f64> {
        tanks_phi(z, &self.params, u)
    }

    fn input_gain(&self, _z: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

pub fn make_tanks_plant(params: TankParams, input_bound: f64) -> Result<PlantModel> {
    params.validate()?;
    PlantModel::new(
        "tanks",
        2,
        Arc::new(CoupledTanks { params }),
        input_bound,
        LipschitzConstants::default(),
    )
}

/// Scalar input signal, clipped to `±bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSignal {
    Constant(f64),
    Step {
        time: f64,
        before: f64,
        after: f64,
    },
    Sine {
        amplitude: f64,
        frequency: f64,
        offset: f64,
    },
}

impl InputSignal {
    pub fn raw(&self, t: f64) -> f64 {
        match *self {
            InputSignal::Constant(v) => v,
            InputSignal::Step {
                time,
                before,
                after,
            } => {
                if t < time {
                    before
                } else {
                    after
                }
            }
            InputSignal::Sine {
                amplitude,
                frequency,
                offset,
            } => offset + amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(),
        }
    }

    pub fn value(&self, t: f64, bound: f64) -> f64 {
        self.raw(t).clamp(-bound, bound)
    }
}
