//! Simulated microcontroller layer.
//!
//! Per-wheel PID loops on first-order motor plants, the two-axis positioning
//! device with limit-switch homing, and the night lights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{inverse_kinematics, ChassisParams, Twist2D, WheelSpeeds};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Bound on the integral contribution `ki * integral`, in command units.
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 1.0,
            ki: 10.0,
            kd: 0.0,
            integral_limit: 40.0,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp >= 0.0 && self.ki >= 0.0 && self.kd >= 0.0) {
            return Err(Error::invalid("PID gains must be non-negative"));
        }
        if !(self.integral_limit > 0.0) {
            return Err(Error::invalid("integral_limit must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    /// Accumulated error (error * seconds).
    pub integral: f64,
    pub prev_measurement: Option<f64>,
}

impl PidState {
    pub fn integral_term(&self, gains: &PidGains) -> f64 {
        gains.ki * self.integral
    }
}

/// One positional PID update with clamped integral and derivative on measurement.
pub fn pid_step(
    gains: &PidGains,
    state: PidState,
    setpoint: f64,
    measurement: f64,
    dt: f64,
) -> Result<(f64, PidState)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let error = setpoint - measurement;
    let mut integral = state.integral + error * dt;
    if gains.ki > 0.0 {
        let bound = gains.integral_limit / gains.ki;
        integral = integral.clamp(-bound, bound);
    }
    let derivative = match state.prev_measurement {
        Some(prev) => -(measurement - prev) / dt,
        None => 0.0,
    };
    let command = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    Ok((
        command,
        PidState {
            integral,
            prev_measurement: Some(measurement),
        },
    ))
}

/// First-order motor: `tau * dw/dt = gain * u - w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelPlant {
    pub time_constant: f64,
    pub gain: f64,
    pub omega: f64,
}

impl Default for WheelPlant {
    fn default() -> Self {
        Self {
            time_constant: 0.1,
            gain: 1.0,
            omega: 0.0,
        }
    }
}

impl WheelPlant {
    /// Advances the plant under a command held constant over `dt` (exact ZOH).
    pub fn step(&mut self, command: f64, dt: f64) -> f64 {
        let alpha = 1.0 - (-dt / self.time_constant).exp();
        self.omega += (self.gain * command - self.omega) * alpha;
        self.omega
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelController {
    pub gains: PidGains,
    pub state: PidState,
}

/// Advances all four wheel loops one PID + plant step and returns achieved speeds.
pub fn wheel_loop_step(
    controllers: &mut [WheelController; 4],
    target: &WheelSpeeds,
    plants: &mut [WheelPlant; 4],
    dt: f64,
) -> Result<WheelSpeeds> {
    let targets = target.as_array();
    let mut achieved = [0.0; 4];
    for i in 0..4 {
        let c = &mut controllers[i];
        let (u, st) = pid_step(&c.gains, c.state, targets[i], plants[i].omega, dt)?;
        c.state = st;
        achieved[i] = plants[i].step(u, dt);
    }
    Ok(WheelSpeeds::from_array(achieved))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub steps_per_rev: u32,
    pub microstep_factor: u32,
    /// Output travel per motor revolution: the screw pitch in mm for the
    /// linear axis, degrees for the tilt axis.
    pub travel_per_rev: f64,
    /// Full stroke, mm or degrees.
    pub stroke: f64,
    /// Units per second while homing.
    pub homing_speed: f64,
    /// Units per second for commanded strokes.
    pub operational_speed: f64,
}

impl AxisSpec {
    pub fn linear() -> Self {
        Self {
            steps_per_rev: 200,
            microstep_factor: 256,
            travel_per_rev: 6.35,
            stroke: 350.0,
            homing_speed: 20.0,
            operational_speed: 40.0,
        }
    }

    pub fn tilt() -> Self {
        Self {
            steps_per_rev: 200,
            microstep_factor: 256,
            travel_per_rev: 360.0,
            stroke: 26.0,
            homing_speed: 5.0,
            operational_speed: 10.0,
        }
    }

    pub fn microsteps_per_rev(&self) -> u64 {
        u64::from(self.steps_per_rev) * u64::from(self.microstep_factor)
    }

    pub fn validate(&self) -> Result<()> {
        if self.microsteps_per_rev() == 0 {
            return Err(Error::invalid("steps_per_rev * microstep_factor must be positive"));
        }
        for (n, v) in [
            ("stroke", self.stroke),
            ("travel_per_rev", self.travel_per_rev),
            ("homing_speed", self.homing_speed),
            ("operational_speed", self.operational_speed),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{n} must be positive")));
            }
        }
        Ok(())
    }
}

/// Microsteps needed to cover `travel` (axis units), rounded half away from zero.
pub fn microsteps_for_travel(spec: &AxisSpec, travel: f64) -> Result<u64> {
    spec.validate()?;
    if !(0.0..=spec.stroke).contains(&travel) {
        return Err(Error::Range(format!("travel {travel} outside [0, {}]", spec.stroke)));
    }
    let steps = travel / spec.travel_per_rev * spec.microsteps_per_rev() as f64;
    Ok(steps.round() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DevicePhase {
    Unhomed,
    Homing,
    Ready,
    Moving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceTarget {
    Deploy,
    Retract,
    TiltForward,
    TiltHome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    /// Linear extension in metres.
    pub linear_pos: f64,
    /// Tilt in degrees.
    pub tilt_pos: f64,
    pub phase: DevicePhase,
    pub switch_linear: bool,
    pub switch_tilt: bool,
    pub motion: Option<DeviceTarget>,
}

impl DeviceState {
    /// Power-on state at the given positions; the switches reflect retraction.
    pub fn power_on(linear_pos: f64, tilt_pos: f64) -> Self {
        let mut s = Self {
            linear_pos,
            tilt_pos,
            phase: DevicePhase::Unhomed,
            switch_linear: false,
            switch_tilt: false,
            motion: None,
        };
        s.refresh_switches();
        s
    }

    fn refresh_switches(&mut self) {
        self.switch_linear = self.linear_pos == 0.0;
        self.switch_tilt = self.tilt_pos == 0.0;
    }
}

impl Default for DeviceState {
    fn default() -> Self {
        Self::power_on(0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceSpec {
    pub linear: AxisSpec,
    pub tilt: AxisSpec,
}

impl Default for DeviceSpec {
    fn default() -> Self {
        Self {
            linear: AxisSpec::linear(),
            tilt: AxisSpec::tilt(),
        }
    }
}

/// Moves `pos` toward `target` by at most `max_delta`, landing exactly on it.
fn approach(pos: f64, target: f64, max_delta: f64) -> f64 {
    if (target - pos).abs() <= max_delta {
        target
    } else {
        pos + max_delta.copysign(target - pos)
    }
}

/// Drives both axes toward their retraction switches.
pub fn homing_step(spec: &DeviceSpec, state: &DeviceState, dt: f64) -> Result<DeviceState> {
    match state.phase {
        DevicePhase::Unhomed | DevicePhase::Homing => {}
        p => {
            return Err(Error::InvalidState(format!("homing not allowed in {p:?}")));
        }
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let mut next = *state;
    next.motion = None;
    if state.switch_linear && state.switch_tilt {
        next.linear_pos = 0.0;
        next.tilt_pos = 0.0;
        next.phase = DevicePhase::Ready;
        return Ok(next);
    }
    next.phase = DevicePhase::Homing;
    next.linear_pos = approach(state.linear_pos, 0.0, spec.linear.homing_speed / 1000.0 * dt);
    next.tilt_pos = approach(state.tilt_pos, 0.0, spec.tilt.homing_speed * dt);
    next.refresh_switches();
    if next.switch_linear && next.switch_tilt {
        next.phase = DevicePhase::Ready;
    }
    Ok(next)
}

/// Starts a predefined stroke.
pub fn device_command(state: &DeviceState, target: DeviceTarget) -> Result<DeviceState> {
    if state.phase != DevicePhase::Ready {
        return Err(Error::Busy(format!("device is {:?}", state.phase)));
    }
    let mut next = *state;
    next.phase = DevicePhase::Moving;
    next.motion = Some(target);
    Ok(next)
}

/// Advances an in-progress stroke at operational speed.
pub fn motion_step(spec: &DeviceSpec, state: &DeviceState, dt: f64) -> DeviceState {
    let mut next = *state;
    let Some(target) = state.motion else {
        return next;
    };
    if state.phase != DevicePhase::Moving {
        return next;
    }
    let lin_max = spec.linear.stroke / 1000.0;
    let done = match target {
        DeviceTarget::Deploy | DeviceTarget::Retract => {
            let end = if target == DeviceTarget::Deploy { lin_max } else { 0.0 };
            next.linear_pos = approach(state.linear_pos, end, spec.linear.operational_speed / 1000.0 * dt);
            next.linear_pos == end
        }
        DeviceTarget::TiltForward | DeviceTarget::TiltHome => {
            let end = if target == DeviceTarget::TiltForward {
                spec.tilt.stroke
            } else {
                0.0
            };
            next.tilt_pos = approach(state.tilt_pos, end, spec.tilt.operational_speed * dt);
            next.tilt_pos == end
        }
    };
    next.linear_pos = next.linear_pos.clamp(0.0, lin_max);
    next.tilt_pos = next.tilt_pos.clamp(0.0, spec.tilt.stroke);
    next.refresh_switches();
    if done {
        next.phase = DevicePhase::Ready;
        next.motion = None;
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Lights {
    pub on: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LightsAck {
    pub on: bool,
    pub changed: bool,
}

impl Lights {
    pub fn set_lights(&mut self, on: bool) -> LightsAck {
        let changed = self.on != on;
        self.on = on;
        LightsAck { on, changed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowLayerConfig {
    pub pid: PidGains,
    pub plant_time_constant: f64,
    pub plant_gain: f64,
    /// Inner wheel-loop period in seconds.
    pub inner_dt: f64,
    pub device: DeviceSpec,
}

impl Default for LowLayerConfig {
    fn default() -> Self {
        Self {
            pid: PidGains::default(),
            plant_time_constant: 0.1,
            plant_gain: 1.0,
            inner_dt: 1e-3,
            device: DeviceSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowLayerTelemetry {
    pub wheel_target: WheelSpeeds,
    pub wheel_speeds: WheelSpeeds,
    pub device: DeviceState,
    pub lights: bool,
}

/// The microcontroller: owns wheel loops, the positioning device and lights.
#[derive(Debug, Clone)]
pub struct LowLayer {
    config: LowLayerConfig,
    chassis: ChassisParams,
    controllers: [WheelController; 4],
    plants: [WheelPlant; 4],
    target: WheelSpeeds,
    achieved: WheelSpeeds,
    device: DeviceState,
    lights: Lights,
}

impl LowLayer {
    pub fn new(config: LowLayerConfig, chassis: ChassisParams, device: DeviceState) -> Self {
        let controller = WheelController {
            gains: config.pid,
            state: PidState::default(),
        };
        let plant = WheelPlant {
            time_constant: config.plant_time_constant,
            gain: config.plant_gain,
            omega: 0.0,
        };
        Self {
            config,
            chassis,
            controllers: [controller; 4],
            plants: [plant; 4],
            target: WheelSpeeds::default(),
            achieved: WheelSpeeds::default(),
            device,
            lights: Lights::default(),
        }
    }

    pub fn device(&self) -> &DeviceState {
        &self.device
    }

    pub fn lights(&self) -> bool {
        self.lights.on
    }

    pub fn set_lights(&mut self, on: bool) -> LightsAck {
        self.lights.set_lights(on)
    }

    pub fn command_device(&mut self, target: DeviceTarget) -> Result<()> {
        self.device = device_command(&self.device, target)?;
        Ok(())
    }

    /// One outer tick: inverse kinematics of `twist`, wheel loops at the inner
    /// rate, then homing or stroke motion.
    pub fn tick(&mut self, twist: &Twist2D, dt: f64) -> Result<LowLayerTelemetry> {
        self.target = inverse_kinematics(&self.chassis, twist)?;
        let inner = self.config.inner_dt.min(dt);
        let n = (dt / inner).round().max(1.0) as usize;
        let sub = dt / n as f64;
        for _ in 0..n {
            self.achieved = wheel_loop_step(&mut self.controllers, &self.target, &mut self.plants, sub)?;
        }
        self.device = match self.device.phase {
            DevicePhase::Unhomed | DevicePhase::Homing => homing_step(&self.config.device, &self.device, dt)?,
            DevicePhase::Moving => motion_step(&self.config.device, &self.device, dt),
            DevicePhase::Ready => self.device,
        };
        Ok(self.telemetry())
    }

    pub fn telemetry(&self) -> LowLayerTelemetry {
        LowLayerTelemetry {
            wheel_target: self.target,
            wheel_speeds: self.achieved,
            device: self.device,
            lights: self.lights.on,
        }
    }
}
