//! Three-tank water process: tanks 1 and 2 in series through valve `v12`, tanks 2
//! and 3 communicating through valve `v23` at height `h_con`, pump 1 feeding tank 1
//! from the reservoir and pump 2 returning water from tank 3 to tank 1.
//!
//! Mass balance per tank (all flows in m³/s, divided by the tank area `A`):
//!
//! ```text
//! A x1' = P1 + P2 - Q12
//! A x2' = Q12 - Q23 - Q23h + Q32h
//! A x3' = Q23 + Q23h - Q32h - P2
//! ```

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Dynamics;

/// Water levels of the three tanks (m).
pub type Levels = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantParams {
    /// Tank cross-section (m²).
    #[serde(rename = "A")]
    pub tank_area: f64,
    /// Pipe cross-section (m²).
    #[serde(rename = "a")]
    pub pipe_area: f64,
    pub grav: f64,
    pub h_con: f64,
    /// Pump 1 delivery at full command (m³/s).
    pub k1: f64,
    /// Pump 2 gain (dimensionless).
    pub k2: f64,
    /// Integration step (s).
    pub dt: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            tank_area: 0.01,
            pipe_area: 0.0005,
            grav: 9.81,
            h_con: 0.05,
            k1: 1e-4,
            k2: 0.2,
            dt: 0.1,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.tank_area > 0.0, "plant.A must be > 0"),
            (self.pipe_area > 0.0, "plant.a must be > 0"),
            (self.grav > 0.0, "plant.grav must be > 0"),
            (self.h_con >= 0.0, "plant.h_con must be >= 0"),
            (self.k1 >= 0.0, "plant.k1 must be >= 0"),
            (self.k2 >= 0.0, "plant.k2 must be >= 0"),
            (self.dt > 0.0, "plant.dt must be > 0"),
        ];
        for (ok, msg) in checks {
            // NaN fails every comparison above, so it is rejected too.
            if !ok {
                return Err(Error::Config(msg.to_string()));
            }
        }
        Ok(())
    }
}

/// Actuator commands `u_k`: valve openings and pump-1 duty, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorInput {
    pub v12: f64,
    pub v23: f64,
    pub pump1: f64,
}

impl ActuatorInput {
    pub fn new(v12: f64, v23: f64, pump1: f64) -> Self {
        ActuatorInput {
            v12: v12.clamp(0.0, 1.0),
            v23: v23.clamp(0.0, 1.0),
            pump1: pump1.clamp(0.0, 1.0),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.v12, self.v23, self.pump1]
    }
}

impl Default for ActuatorInput {
    fn default() -> Self {
        ActuatorInput {
            v12: 0.0,
            v23: 0.0,
            pump1: 1.0,
        }
    }
}

/// Volumetric flows (m³/s) at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flows {
    pub q12: f64,
    pub q23: f64,
    pub q23h: f64,
    pub q32h: f64,
    pub p1: f64,
    pub p2: f64,
}

/// Unit step, inclusive at zero.
#[inline]
fn step_fn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `sqrt(2 g h)` with the head clamped at zero.
#[inline]
fn torricelli(grav: f64, head: f64) -> f64 {
    (2.0 * grav * head.max(0.0)).sqrt()
}

pub fn flows(x: &Levels, u: &ActuatorInput, params: &PlantParams) -> Flows {
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    let a = params.pipe_area;
    let g = params.grav;
    let hc = params.h_con;

    let q12 = a * u.v12 * torricelli(g, x1);
    let q23 = a
        * u.v23
        * step_fn(x2 - hc)
        * step_fn(x3 - hc)
        * sign(x2 - x3)
        * torricelli(g, (x2 - x3).abs());
    let q23h = a * u.v23 * step_fn(x2 - hc) * step_fn(hc - x3) * torricelli(g, x2 - hc);
    let q32h = a * u.v23 * step_fn(x3 - hc) * step_fn(hc - x2) * torricelli(g, x3 - hc);
    let p2 = params.k2 * a * torricelli(g, x3);
    let p1 = params.k1 * u.pump1;

    Flows {
        q12,
        q23,
        q23h,
        q32h,
        p1,
        p2,
    }
}

/// Level rates `x'` (m/s).
pub fn derivative(x: &Levels, u: &ActuatorInput, params: &PlantParams) -> Levels {
    let f = flows(x, u, params);
    Vector3::new(
        f.p1 + f.p2 - f.q12,
        f.q12 - f.q23 - f.q23h + f.q32h,
        f.q23 + f.q23h - f.q32h - f.p2,
    ) / params.tank_area
}

/// One forward-Euler step plus optional process noise; levels are clamped at zero.
pub fn step(x: &Levels, u: &ActuatorInput, params: &PlantParams, noise: Option<&Levels>) -> Levels {
    let mut next = x + derivative(x, u, params) * params.dt;
    if let Some(w) = noise {
        next += w;
    }
    next.map(|v| v.max(0.0))
}

/// Identity observation `y = x + v`.
pub fn measure(x: &Levels, noise: Option<&Levels>) -> Levels {
    match noise {
        Some(v) => x + v,
        None => *x,
    }
}

/// Noise-free discrete map, shared by the plant and the estimator.
#[derive(Debug, Clone, Copy)]
pub struct ThreeTankModel {
    pub params: PlantParams,
}

impl Dynamics<3> for ThreeTankModel {
    type Input = ActuatorInput;

    fn transition(&self, x: &Levels, u: &ActuatorInput) -> Levels {
        step(x, u, &self.params, None)
    }
}

/// Gains of the low-level level controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerParams {
    /// Valve opening change per metre of level error outside the dead band.
    pub valve_gain: f64,
    /// Pump duty change per metre of total-level deficit outside the dead band.
    pub pump_gain: f64,
    /// Errors with magnitude up to this value (m) leave commands at their nominal value.
    pub deadband: f64,
    /// Valve openings that hold the setpoints in equilibrium. `None` derives them
    /// from the plant parameters, see [`ControllerParams::balanced_openings`].
    pub v12_nominal: Option<f64>,
    pub v23_nominal: Option<f64>,
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            valve_gain: 2.0,
            pump_gain: 50.0,
            deadband: 0.01,
            v12_nominal: None,
            v23_nominal: None,
        }
    }
}

impl ControllerParams {
    /// Valve openings for which `setpoints` is an equilibrium with pump 1 off.
    ///
    /// With pump 1 idle the water circulates 1 → 2 → 3 → 1, so `Q12 = P2` and
    /// `Q23 = P2`, giving `v12 = k2 sqrt(x3 / x1)` and `v23 = k2 sqrt(x3 / (x2 - x3))`
    /// when both tanks 2 and 3 sit above the connection.
    pub fn balanced_openings(setpoints: &Levels, plant: &PlantParams) -> Result<(f64, f64)> {
        let (s1, s2, s3) = (setpoints[0], setpoints[1], setpoints[2]);
        if !(s1 > 0.0 && s2 > s3 && s3 >= plant.h_con) {
            return Err(Error::Config(format!(
                "setpoints {:?} need x1 > 0 and x2 > x3 >= h_con to derive nominal valve openings",
                setpoints.as_slice()
            )));
        }
        let v12 = plant.k2 * (s3 / s1).sqrt();
        let v23 = plant.k2 * (s3 / (s2 - s3)).sqrt();
        if v12 > 1.0 || v23 > 1.0 {
            return Err(Error::Config(format!(
                "setpoints {:?} need valve openings above 1 ({v12:.3}, {v23:.3})",
                setpoints.as_slice()
            )));
        }
        Ok((v12, v23))
    }

    /// Fills in the nominal openings from the plant model when they are unset.
    pub fn resolve(&self, setpoints: &Levels, plant: &PlantParams) -> Result<ControllerParams> {
        let mut out = *self;
        if out.v12_nominal.is_none() || out.v23_nominal.is_none() {
            let (v12, v23) = Self::balanced_openings(setpoints, plant)?;
            out.v12_nominal.get_or_insert(v12);
            out.v23_nominal.get_or_insert(v23);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.valve_gain >= 0.0 && self.pump_gain >= 0.0 && self.deadband >= 0.0) {
            return Err(Error::Config(
                "controller gains and deadband must be >= 0".to_string(),
            ));
        }
        for v in [self.v12_nominal, self.v23_nominal].into_iter().flatten() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "nominal valve opening {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[inline]
fn dead_zone(e: f64, band: f64) -> f64 {
    if e > band {
        e - band
    } else if e < -band {
        e + band
    } else {
        0.0
    }
}

/// Stateless proportional level control with a dead band.
///
/// Each valve opens further when its upstream tank sits above its setpoint; pump 1
/// runs while the total level is short of the total setpoint and cuts off once it
/// is reached (maximum-level control). Inside the dead band every command is
/// exactly its nominal value, so commands are constant at steady state.
pub fn level_controller(y: &Levels, setpoints: &Levels, params: &ControllerParams) -> ActuatorInput {
    let band = params.deadband;
    let v12 = params.v12_nominal.unwrap_or(0.5) + params.valve_gain * dead_zone(y[0] - setpoints[0], band);
    let v23 = params.v23_nominal.unwrap_or(0.5) + params.valve_gain * dead_zone(y[1] - setpoints[1], band);
    let deficit = setpoints.sum() - y.sum();
    let pump1 = params.pump_gain * dead_zone(deficit, band).max(0.0);
    ActuatorInput::new(v12, v23, pump1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn open(v: f64) -> ActuatorInput {
        ActuatorInput {
            v12: v,
            v23: v,
            pump1: 1.0,
        }
    }

    #[test]
    fn empty_tanks_only_pump_one() {
        let p = PlantParams::default();
        let f = flows(&Vector3::zeros(), &open(0.0), &p);
        assert_eq!((f.q12, f.q23, f.q23h, f.q32h, f.p2), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(f.p1, p.k1);
        let d = derivative(&Vector3::zeros(), &open(0.0), &p);
        assert_eq!(d, Vector3::new(p.k1 / p.tank_area, 0.0, 0.0));
    }

    #[test]
    fn equal_levels_above_connection_no_exchange() {
        let p = PlantParams::default();
        for v in [0.0, 0.3, 1.0] {
            let f = flows(&Vector3::new(0.2, 0.15, 0.15), &open(v), &p);
            assert_eq!(f.q23, 0.0);
            assert_eq!(f.q23h, 0.0);
            assert_eq!(f.q32h, 0.0);
        }
    }

    // Reference values evaluated by hand from the flow formulas.
    #[test]
    fn flows_at_reference_point() {
        let p = PlantParams::default();
        let f = flows(&Vector3::new(0.30, 0.20, 0.10), &open(0.5), &p);
        assert_relative_eq!(f.q12, 0.0006065269985746719, max_relative = 1e-12);
        assert_relative_eq!(f.q23, 0.00035017852589786256, max_relative = 1e-12);
        assert_eq!(f.q23h, 0.0);
        assert_eq!(f.q32h, 0.0);
        assert_eq!(f.p1, 1e-4);
        assert_relative_eq!(f.p2, 0.00014007141035914504, max_relative = 1e-12);

        let d = derivative(&Vector3::new(0.30, 0.20, 0.10), &open(0.5), &p);
        assert_relative_eq!(d[0], -0.03664555882155268, max_relative = 1e-12);
        assert_relative_eq!(d[1], 0.025634847267680932, max_relative = 1e-12);
        assert_relative_eq!(d[2], 0.021010711553871752, max_relative = 1e-12);
    }

    #[test]
    fn flows_below_connection() {
        let p = PlantParams::default();
        let f = flows(&Vector3::new(0.2, 0.12, 0.03), &open(0.5), &p);
        assert_relative_eq!(f.q12, 0.0004952272205765753, max_relative = 1e-12);
        assert_eq!(f.q23, 0.0);
        assert_relative_eq!(f.q23h, 0.00029298037476936916, max_relative = 1e-12);
        assert_eq!(f.q32h, 0.0);
        assert_relative_eq!(f.p2, 7.672027111526655e-05, max_relative = 1e-12);

        // Mirror case: tank 3 above the connection, tank 2 below.
        let f = flows(&Vector3::new(0.2, 0.03, 0.12), &open(0.5), &p);
        assert_eq!(f.q23, 0.0);
        assert_eq!(f.q23h, 0.0);
        assert_relative_eq!(f.q32h, 0.00029298037476936916, max_relative = 1e-12);
    }

    #[test]
    fn internal_flows_cancel() {
        let p = PlantParams::default();
        for x in [
            Vector3::new(0.3, 0.2, 0.1),
            Vector3::new(0.01, 0.4, 0.02),
            Vector3::new(0.5, 0.03, 0.3),
        ] {
            for pump in [0.0, 0.4, 1.0] {
                let u = ActuatorInput::new(0.7, 0.2, pump);
                let d = derivative(&x, &u, &p);
                assert_relative_eq!(d.sum() * p.tank_area, p.k1 * pump, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn step_examples() {
        let p = PlantParams::default();
        // Zero derivative: empty tanks with pump 1 off.
        let idle = ActuatorInput::new(0.5, 0.5, 0.0);
        assert_eq!(step(&Vector3::zeros(), &idle, &p, None), Vector3::zeros());

        let next = step(&Vector3::zeros(), &open(0.0), &p, None);
        assert_relative_eq!(next[0], 0.1 * p.k1 / p.tank_area, epsilon = 1e-15);
        assert_eq!((next[1], next[2]), (0.0, 0.0));

        let pushed = step(
            &Vector3::new(0.001, 0.2, 0.1),
            &open(1.0),
            &p,
            Some(&Vector3::new(-0.5, 0.0, 0.0)),
        );
        assert_eq!(pushed[0], 0.0);
    }

    #[test]
    fn measure_examples() {
        let x = Vector3::new(0.3, 0.2, 0.1);
        assert_eq!(measure(&x, None), x);
        let y = measure(&x, Some(&Vector3::new(0.001, -0.002, 0.0)));
        assert_relative_eq!(y, Vector3::new(0.301, 0.198, 0.1), epsilon = 1e-15);
    }

    #[test]
    fn balanced_openings_hold_equilibrium() {
        let p = PlantParams::default();
        let sp = Vector3::new(0.3, 0.2, 0.1);
        let (v12, v23) = ControllerParams::balanced_openings(&sp, &p).unwrap();
        let d = derivative(&sp, &ActuatorInput::new(v12, v23, 0.0), &p);
        assert!(d.norm() < 1e-12, "{d:?}");
        assert!(ControllerParams::balanced_openings(&Vector3::new(0.3, 0.1, 0.2), &p).is_err());
    }

    #[test]
    fn controller_constant_at_setpoint() {
        let p = PlantParams::default();
        let sp = Vector3::new(0.3, 0.2, 0.1);
        let c = ControllerParams::default().resolve(&sp, &p).unwrap();
        let a = level_controller(&sp, &sp, &c);
        let b = level_controller(&(sp + Vector3::new(0.004, -0.003, 0.002)), &sp, &c);
        assert_eq!(a, b);
        assert_eq!(a.pump1, 0.0);
        assert_eq!(a.v12, c.v12_nominal.unwrap());
    }

    #[test]
    fn controller_outputs_bounded() {
        let c = ControllerParams {
            v12_nominal: Some(0.5),
            v23_nominal: Some(0.5),
            ..Default::default()
        };
        let sp = Vector3::new(0.3, 0.2, 0.1);
        for y in [
            Vector3::new(-10.0, 5.0, 1e6),
            Vector3::new(10.0, -5.0, -1e6),
            Vector3::zeros(),
        ] {
            let u = level_controller(&y, &sp, &c);
            for v in u.as_array() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let p = PlantParams {
            dt: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = PlantParams {
            tank_area: f64::NAN,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        assert!(PlantParams::default().validate().is_ok());
    }
}
