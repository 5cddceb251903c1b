use serde::{Deserialize, Serialize};

use super::{check_dims, integrate_hold, OdeSystem, Plant};
use crate::error::{Error, Result};

/// Reactor parameters. Units: kJ, kmol, m³, K, kg, hr.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CstrParams {
    /// Activation energy, kJ/kmol.
    pub activation_energy: f64,
    /// Reactor volume, m³.
    pub volume: f64,
    /// Volumetric flow rate, m³/hr.
    pub flow: f64,
    /// Gas constant, kJ/(kmol K).
    pub gas_constant: f64,
    /// Feed temperature, K.
    pub feed_temperature: f64,
    /// Steady-state feed concentration, kmol/m³.
    pub feed_concentration_ss: f64,
    /// Steady-state reactor concentration, kmol/m³.
    pub concentration_ss: f64,
    /// Steady-state heat input, kJ/hr.
    pub heat_ss: f64,
    /// Steady-state reactor temperature, K.
    pub temperature_ss: f64,
    /// Reaction enthalpy, kJ/kmol.
    pub reaction_enthalpy: f64,
    /// Heat capacity, kJ/(kg K).
    pub heat_capacity: f64,
    /// Liquid density, kg/m³.
    pub density: f64,
    /// Pre-exponential factor, m³/(kmol hr).
    pub pre_exponential: f64,
}

impl Default for CstrParams {
    fn default() -> Self {
        Self {
            activation_energy: 5.0e4,
            volume: 1.0,
            flow: 5.0,
            gas_constant: 8.314,
            feed_temperature: 300.0,
            feed_concentration_ss: 4.0,
            concentration_ss: 1.95,
            heat_ss: 0.0,
            temperature_ss: 402.0,
            reaction_enthalpy: -1.15e4,
            heat_capacity: 0.231,
            density: 1000.0,
            pre_exponential: 8.46e6,
        }
    }
}

/// Material and energy balances of an exothermic second-order reaction.
///
/// State `x = (C_A − C_As, T − T_s)`, input `u = (ΔC_A0, ΔQ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CstrPlant {
    pub params: CstrParams,
    pub substeps: usize,
}

impl Default for CstrPlant {
    fn default() -> Self {
        Self {
            params: CstrParams::default(),
            substeps: 10,
        }
    }
}

impl CstrPlant {
    pub fn new(params: CstrParams, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::InvalidConfig("substeps must be at least 1".into()));
        }
        Ok(Self { params, substeps })
    }

    /// Right-hand side in deviation variables.
    pub fn cstr_rhs(&self, x: &[f64], u: &[f64]) -> Result<[f64; 2]> {
        if x.len() != 2 || u.len() != 2 {
            return Err(Error::dims("cstr state/input", 2, x.len().max(u.len())));
        }
        let p = &self.params;
        let ca = p.concentration_ss + x[0];
        let t = p.temperature_ss + x[1];
        if !(t > 0.0) || !t.is_finite() || !ca.is_finite() {
            return Err(Error::NonPhysical(format!("temperature {t} K")));
        }
        let ca0 = p.feed_concentration_ss + u[0];
        let q = p.heat_ss + u[1];
        let rate = p.pre_exponential * (-p.activation_energy / (p.gas_constant * t)).exp() * ca * ca;
        let dilution = p.flow / p.volume;
        let dca = dilution * (ca0 - ca) - rate;
        let dt = dilution * (p.feed_temperature - t) + q / (p.density * p.heat_capacity * p.volume)
            - p.reaction_enthalpy / (p.density * p.heat_capacity) * rate;
        Ok([dca, dt])
    }

    pub fn absolute(&self, x: &[f64]) -> [f64; 2] {
        [x[0] + self.params.concentration_ss, x[1] + self.params.temperature_ss]
    }
}

impl OdeSystem for CstrPlant {
    fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.cstr_rhs(x, u)?.to_vec())
    }

    fn is_valid_state(&self, x: &[f64]) -> bool {
        let [ca, t] = self.absolute(x);
        ca.is_finite() && t.is_finite() && ca >= 0.0 && t > 0.0
    }
}

impl Plant for CstrPlant {
    fn name(&self) -> &str {
        "cstr"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn advance(&self, x: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>> {
        check_dims(self, x, u)?;
        integrate_hold(self, x, u, dt, self.substeps)
    }

    fn output_names(&self) -> Vec<String> {
        vec!["CA".into(), "T".into()]
    }

    fn outputs(&self, x: &[f64]) -> Vec<f64> {
        self.absolute(x).to_vec()
    }
}
