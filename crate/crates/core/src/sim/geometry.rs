use serde::{Deserialize, Serialize};

use crate::dynamics::AgvState;

/// Width of the plant's position interval, `0.6 - (-1.2)`.
pub const TASK_SPAN: f64 = 1.8;
/// Left end of the plant's position interval.
pub const TASK_START: f64 = -1.2;

/// Straight track below an elevated access point. The track starts
/// `track_offset` metres (horizontally) from the AP foot and extends away from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub ap_height: f64,
    pub track_offset: f64,
    pub track_length: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            ap_height: 3.0,
            track_offset: 4.0,
            track_length: 10.0,
        }
    }
}

/// Where the vehicle is as seen from the AP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalView {
    /// Horizontal distance from the AP foot (m).
    pub ground: f64,
    pub range: f64,
    /// Depression angle from the AP (rad).
    pub theta: f64,
    /// Line-of-sight speed, positive moving away (m/s).
    pub radial_velocity: f64,
}

impl Geometry {
    /// Metres per task unit.
    pub fn metres_per_unit(&self) -> f64 {
        self.track_length / TASK_SPAN
    }

    pub fn ground_position(&self, x: f64) -> f64 {
        self.track_offset + (x - TASK_START) * self.metres_per_unit()
    }

    /// Inverse of [`Geometry::ground_position`].
    pub fn task_position(&self, ground: f64) -> f64 {
        TASK_START + (ground - self.track_offset) / self.metres_per_unit()
    }

    /// Horizontal speed (m/s) of a task-unit displacement per QI.
    pub fn ground_speed(&self, v: f64, qi_duration: f64) -> f64 {
        v * self.metres_per_unit() / qi_duration
    }

    /// Task-unit displacement per QI for a horizontal speed.
    pub fn task_speed(&self, ground_speed: f64, qi_duration: f64) -> f64 {
        ground_speed * qi_duration / self.metres_per_unit()
    }

    /// Shortest and longest AP distance along the track.
    pub fn range_span(&self) -> (f64, f64) {
        let r = |p: f64| p.hypot(self.ap_height);
        (r(self.track_offset), r(self.track_offset + self.track_length))
    }
}

pub fn physical_map(state: &AgvState, geometry: &Geometry, qi_duration: f64) -> PhysicalView {
    let ground = geometry.ground_position(state.x);
    let range = ground.hypot(geometry.ap_height);
    let theta = geometry.ap_height.atan2(ground);
    // unit line-of-sight vector has horizontal component ground / range
    let radial_velocity = if range > 0.0 {
        geometry.ground_speed(state.v, qi_duration) * ground / range
    } else {
        0.0
    };
    PhysicalView {
        ground,
        range,
        theta,
        radial_velocity,
    }
}
