use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the cooling loop, SI units throughout.
///
/// Masses are in kg, specific heats in J/(kg K), conductances `hA` in W/K,
/// flow rates in kg/s and temperatures in °C. Any key missing from a
/// parameters file takes its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsParams {
    /// Coolant specific heat, J/(kg K).
    pub cp_fluid: f64,
    /// Cold-plate and heat exchanger wall specific heat, J/(kg K).
    pub cp_wall: f64,
    /// Wall mass of each cold plate, kg.
    pub cphx_wall_mass: f64,
    /// Coolant mass inside each cold plate, kg.
    pub cphx_fluid_mass: f64,
    /// Coolant mass in the tank, kg.
    pub tank_fluid_mass: f64,
    /// Wall mass of the liquid-liquid heat exchanger, kg.
    pub llhx_wall_mass: f64,
    /// Coolant mass on the primary side of the heat exchanger, kg.
    pub llhx_primary_mass: f64,
    /// Sink-loop fluid mass on the secondary side of the heat exchanger, kg.
    pub llhx_secondary_mass: f64,
    /// Wall to coolant conductance of each cold plate, W/K.
    pub ha_cphx: f64,
    /// Wall to primary-side conductance of the heat exchanger, W/K.
    pub ha_llhx_primary: f64,
    /// Wall to secondary-side conductance of the heat exchanger, W/K.
    pub ha_llhx_secondary: f64,
    /// Sink inlet temperature, °C.
    pub t_sink: f64,
    /// Sink-loop mass flow, kg/s.
    pub sink_flow: f64,
    /// Pump mass flow, kg/s.
    pub pump_flow: f64,
    /// Initial cold-plate wall temperature, °C.
    pub t_wall_init: f64,
    /// Initial cold-plate coolant temperature, °C.
    pub t_fluid_init: f64,
    /// Initial tank and heat exchanger temperature, °C.
    pub t_loop_init: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            cp_fluid: 4184.0,
            cp_wall: 896.0,
            cphx_wall_mass: 1.15,
            cphx_fluid_mass: 0.2,
            tank_fluid_mass: 2.01,
            llhx_wall_mass: 1.2,
            llhx_primary_mass: 0.3,
            llhx_secondary_mass: 0.3,
            ha_cphx: 500.0,
            ha_llhx_primary: 1000.0,
            ha_llhx_secondary: 1000.0,
            t_sink: 15.0,
            sink_flow: 0.2,
            pump_flow: 0.4,
            t_wall_init: 20.0,
            t_fluid_init: 20.0,
            t_loop_init: 15.0,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cp_fluid", self.cp_fluid),
            ("cp_wall", self.cp_wall),
            ("cphx_wall_mass", self.cphx_wall_mass),
            ("cphx_fluid_mass", self.cphx_fluid_mass),
            ("tank_fluid_mass", self.tank_fluid_mass),
            ("llhx_wall_mass", self.llhx_wall_mass),
            ("llhx_primary_mass", self.llhx_primary_mass),
            ("llhx_secondary_mass", self.llhx_secondary_mass),
            ("ha_cphx", self.ha_cphx),
            ("ha_llhx_primary", self.ha_llhx_primary),
            ("ha_llhx_secondary", self.ha_llhx_secondary),
            ("sink_flow", self.sink_flow),
            ("pump_flow", self.pump_flow),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("parameter {name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("t_sink", self.t_sink),
            ("t_wall_init", self.t_wall_init),
            ("t_fluid_init", self.t_fluid_init),
            ("t_loop_init", self.t_loop_init),
        ] {
            if !v.is_finite() {
                return Err(Error::Validation(format!("parameter {name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}
