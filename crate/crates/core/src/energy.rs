//! Quadrotor power model and plan energy costing.
//!
//! Forward flight uses thrust `T = (m_b + m_c) g + F_d` with pitch
//! `θ = atan(F_d / ((m_b + m_c) g))`; the induced velocity solves
//!
//! ```text
//! v_i = 2T / (π d² r ρ sqrt((v cos θ)² + (v sin θ + v_i)²))
//! ```
//!
//! and forward power is `(v sin θ + v_i) T / ε`. Hover power is
//! `T^{3/2} / (ε sqrt(π d² r ρ / 2))` at `T = (m_b + m_c) g`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Physical description of one drone. SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneSpec {
    pub body_mass: f64,
    pub battery_mass: f64,
    pub rotor_count: u32,
    pub rotor_diameter: f64,
    pub power_efficiency: f64,
    pub ground_speed: f64,
    /// Drag force at `ground_speed`, newtons.
    pub drag_force: f64,
    pub air_density: f64,
    pub gravity: f64,
    /// Battery capacity, joules.
    pub battery_capacity: f64,
}

/// Nominal LiPo 2S cell voltage used to convert mAh ratings to joules.
pub const LIPO_2S_VOLTS: f64 = 7.4;

pub fn mah_to_joules(mah: f64, volts: f64) -> f64 {
    mah / 1000.0 * volts * 3600.0
}

impl DroneSpec {
    /// DJI Phantom 4 Pro: 1.07 kg body, 0.31 kg 6000 mAh 2S battery, four
    /// 0.35 m rotors, 6.94 m/s cruise with 4.1134 N drag. The efficiency of
    /// 0.8 puts 30 minutes of cruise at ~1.09 batteries and 30 minutes of
    /// hover at ~0.72.
    pub fn phantom4_pro() -> Self {
        Self {
            body_mass: 1.07,
            battery_mass: 0.31,
            rotor_count: 4,
            rotor_diameter: 0.35,
            power_efficiency: 0.8,
            ground_speed: 6.94,
            drag_force: 4.1134,
            air_density: 1.225,
            gravity: 9.81,
            battery_capacity: mah_to_joules(6000.0, LIPO_2S_VOLTS),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "phantom4-pro" | "dji-phantom-4-pro" => Some(Self::phantom4_pro()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("body_mass", self.body_mass),
            ("battery_mass", self.battery_mass),
            ("rotor_diameter", self.rotor_diameter),
            ("power_efficiency", self.power_efficiency),
            ("air_density", self.air_density),
            ("gravity", self.gravity),
            ("battery_capacity", self.battery_capacity),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if self.rotor_count == 0 {
            return invalid("rotor_count must be >= 1");
        }
        if self.power_efficiency > 1.0 {
            return invalid("power_efficiency must be <= 1");
        }
        if !(self.ground_speed >= 0.0) || !(self.drag_force >= 0.0) {
            return invalid("ground_speed and drag_force must be >= 0");
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.body_mass + self.battery_mass
    }

    pub fn weight(&self) -> f64 {
        self.total_mass() * self.gravity
    }

    /// Same drone at another cruise speed, with drag scaled by `(v / v0)²`.
    pub fn with_speed(&self, speed: f64) -> Self {
        let drag = if self.ground_speed > 0.0 {
            self.drag_force * (speed / self.ground_speed).powi(2)
        } else {
            0.0
        };
        Self {
            ground_speed: speed,
            drag_force: drag,
            ..*self
        }
    }

    /// `π d² r ρ / 2`, the momentum-theory disk term.
    fn disk_term(&self) -> f64 {
        0.5 * PI * self.rotor_diameter.powi(2) * self.rotor_count as f64 * self.air_density
    }

    pub fn regime(&self) -> Result<FlightRegime> {
        let w = self.weight();
        let pitch = (self.drag_force / w).atan();
        let thrust = w + self.drag_force;
        let induced_velocity = solve_induced_velocity(self, thrust, pitch)?;
        Ok(FlightRegime {
            thrust,
            pitch,
            drag: self.drag_force,
            induced_velocity,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightRegime {
    pub thrust: f64,
    pub pitch: f64,
    pub drag: f64,
    pub induced_velocity: f64,
}

const MAX_ITERATIONS: usize = 10_000;
const RESIDUAL_TOL: f64 = 1e-9;

/// Right-hand side of the induced-velocity relation.
pub fn induced_velocity_rhs(spec: &DroneSpec, thrust: f64, pitch: f64, vi: f64) -> f64 {
    let v = spec.ground_speed;
    let horiz = v * pitch.cos();
    let vert = v * pitch.sin() + vi;
    thrust / (spec.disk_term() * (horiz * horiz + vert * vert).sqrt())
}

/// Solve the induced-velocity fixed point with damped iteration (factor 0.5),
/// falling back to bisection whenever a step leaves the bracket or stalls.
pub fn solve_induced_velocity(spec: &DroneSpec, thrust: f64, pitch: f64) -> Result<f64> {
    if !(thrust > 0.0) || !thrust.is_finite() {
        return invalid(format!("thrust must be positive, got {thrust}"));
    }
    let f = |vi: f64| induced_velocity_rhs(spec, thrust, pitch, vi);
    let rel = |vi: f64| ((vi - f(vi)) / vi).abs();

    // The root never exceeds the hover value sqrt(T / (π d² r ρ / 2)) when
    // sin θ >= 0; widen generously for negative pitch.
    let hover_vi = (thrust / spec.disk_term()).sqrt();
    let mut lo = 0.0_f64;
    let mut hi = hover_vi.max(1e-12);
    while hi - f(hi) < 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numerical("induced velocity bracket diverged".into()));
        }
    }

    let mut x = 0.5 * hi;
    let mut last_res = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let fx = f(x);
        let g = x - fx;
        if g < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let res = (g / x).abs();
        if res < RESIDUAL_TOL {
            return Ok(x);
        }
        let damped = 0.5 * x + 0.5 * fx;
        x = if damped > lo && damped < hi && res < 0.9 * last_res {
            damped
        } else {
            0.5 * (lo + hi)
        };
        last_res = res;
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    if rel(x) < RESIDUAL_TOL {
        return Ok(x);
    }
    Err(Error::Numerical(format!(
        "induced velocity did not converge (thrust {thrust}, pitch {pitch}, last {x})"
    )))
}

/// Forward-flight power draw in watts.
pub fn forward_power(spec: &DroneSpec) -> Result<f64> {
    let r = spec.regime()?;
    Ok((spec.ground_speed * r.pitch.sin() + r.induced_velocity) * r.thrust / spec.power_efficiency)
}

/// Hover power draw in watts.
pub fn hover_power(spec: &DroneSpec) -> f64 {
    spec.weight().powf(1.5) / (spec.power_efficiency * spec.disk_term().sqrt())
}

/// Battery fraction used by `fly_time` seconds of cruise and `hover_time`
/// seconds of hover. Values above 1 are infeasible.
pub fn plan_energy(spec: &DroneSpec, fly_time: f64, hover_time: f64) -> Result<f64> {
    Ok(EnergyModel::new(spec)?.energy(fly_time, hover_time))
}

/// Precomputed power figures for one spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub forward_watts: f64,
    pub hover_watts: f64,
    pub capacity: f64,
    pub ground_speed: f64,
}

impl EnergyModel {
    pub fn new(spec: &DroneSpec) -> Result<Self> {
        spec.validate()?;
        let forward_watts = if spec.ground_speed > 0.0 {
            forward_power(spec)?
        } else {
            hover_power(spec)
        };
        Ok(Self {
            forward_watts,
            hover_watts: hover_power(spec),
            capacity: spec.battery_capacity,
            ground_speed: spec.ground_speed,
        })
    }

    pub fn energy(&self, fly_time: f64, hover_time: f64) -> f64 {
        (self.forward_watts * fly_time + self.hover_watts * hover_time) / self.capacity
    }

    pub fn joules(&self, fraction: f64) -> f64 {
        fraction * self.capacity
    }
}
