//! Spatial coordinates and kinematics: ground users, the UAV relay, and the
//! LEO satellite arc with its handover window.
//!
//! Frame: right-handed, ground plane at z = 0, satellite ground track along
//! the positive x axis.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Euclidean distance in meters.
pub fn distance(a: Vec3, b: Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Rectangular hotspot footprint, symmetric about the origin.
#[derive(Debug, Clone, Copy)]
pub struct HotspotRegion {
    pub half_width_x: f64,
    pub half_width_y: f64,
}

impl HotspotRegion {
    pub fn new(half_width_x: f64, half_width_y: f64) -> Result<Self> {
        if half_width_x <= 0.0 || half_width_y <= 0.0 {
            return Err(Error::InvalidArgument(
                "hotspot half-widths must be positive".into(),
            ));
        }
        Ok(Self {
            half_width_x,
            half_width_y,
        })
    }

    pub fn clamp_xy(&self, x: f64, y: f64) -> (f64, f64) {
        (
            x.clamp(-self.half_width_x, self.half_width_x),
            y.clamp(-self.half_width_y, self.half_width_y),
        )
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.half_width_x && y.abs() <= self.half_width_y
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UavState {
    /// z is the fixed cruise altitude and never changes.
    pub position: Vec3,
    /// Maximum travel distance per step, meters.
    pub max_step: f64,
}

/// Kinematic update: move by `speed` along `yaw` in the horizontal plane,
/// then clamp each coordinate into the hotspot box.
pub fn uav_step(state: &UavState, yaw: f64, speed: f64, region: &HotspotRegion) -> Result<UavState> {
    if !(0.0..std::f64::consts::TAU).contains(&yaw) {
        return Err(Error::InvalidArgument(format!(
            "yaw {yaw} outside [0, 2pi)"
        )));
    }
    if !(0.0..=state.max_step).contains(&speed) {
        return Err(Error::InvalidArgument(format!(
            "speed {speed} outside [0, {}]",
            state.max_step
        )));
    }
    let x = state.position.x + speed * yaw.cos();
    let y = state.position.y + speed * yaw.sin();
    let (x, y) = region.clamp_xy(x, y);
    Ok(UavState {
        position: Vec3::new(x, y, state.position.z),
        max_step: state.max_step,
    })
}

/// Visibility window of one satellite pass over a hotspot.
#[derive(Debug, Clone, Copy)]
pub struct ServiceWindow {
    pub phase_enter: f64,
    pub phase_leave: f64,
    pub delta_phase: f64,
    pub delta_t: f64,
}

/// Orbit angles at which the satellite enters and leaves the hotspot
/// footprint, and the resulting service duration.
pub fn service_window(
    half_width_x: f64,
    orbit_radius: f64,
    angular_velocity: f64,
) -> Result<ServiceWindow> {
    if half_width_x >= orbit_radius {
        return Err(Error::InvalidArgument(format!(
            "hotspot half-width {half_width_x} must be smaller than orbit radius {orbit_radius}"
        )));
    }
    if angular_velocity <= 0.0 {
        return Err(Error::InvalidArgument(
            "angular velocity must be positive".into(),
        ));
    }
    let phase_enter = (-half_width_x / orbit_radius).asin();
    let phase_leave = (half_width_x / orbit_radius).asin();
    let delta_phase = phase_leave - phase_enter;
    Ok(ServiceWindow {
        phase_enter,
        phase_leave,
        delta_phase,
        delta_t: delta_phase / angular_velocity,
    })
}

/// Circular prograde arc in the x–z plane, centered on the Earth's center at
/// (0, y_offset, R^E below the ground plane). Handover wraps the elapsed
/// service time modulo the window duration.
#[derive(Debug, Clone, Copy)]
pub struct OrbitModel {
    pub earth_radius: f64,
    pub orbit_radius: f64,
    pub angular_velocity: f64,
    pub y_offset: f64,
    pub phase_enter: f64,
    pub phase_leave: f64,
    pub service_duration: f64,
}

impl OrbitModel {
    /// Build the orbit serving a hotspot of the given half-width.
    pub fn for_region(
        earth_radius: f64,
        altitude: f64,
        angular_velocity: f64,
        half_width_x: f64,
    ) -> Result<Self> {
        if altitude <= 0.0 {
            return Err(Error::InvalidArgument("altitude must be positive".into()));
        }
        let orbit_radius = earth_radius + altitude;
        let w = service_window(half_width_x, orbit_radius, angular_velocity)?;
        Ok(Self {
            earth_radius,
            orbit_radius,
            angular_velocity,
            y_offset: 0.0,
            phase_enter: w.phase_enter,
            phase_leave: w.phase_leave,
            service_duration: w.delta_t,
        })
    }
}

/// Satellite position at elapsed time `t` since the start of the first
/// service window.
pub fn satellite_position(orbit: &OrbitModel, t: f64) -> Vec3 {
    let elapsed = t % orbit.service_duration;
    let phase = orbit.phase_enter + orbit.angular_velocity * elapsed;
    Vec3::new(
        orbit.orbit_radius * phase.sin(),
        orbit.y_offset,
        -orbit.earth_radius + orbit.orbit_radius * phase.cos(),
    )
}
