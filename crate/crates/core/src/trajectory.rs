//! Waypoint trajectories with per-waypoint hover bookkeeping.
//!
//! A trajectory is flown from `start`: each segment from the previous
//! waypoint (or `start`) to the next is covered in the fixed time `t_fly`, so
//! the segment velocity is `(s(n) - s(n-1)) / t_fly`. `hover_counts[n]` is the
//! number of sensing hovers performed at waypoint `n`; optimized stages hover
//! once at every `mu`-th waypoint, while the straight baseline parks at one
//! waypoint and hovers there repeatedly.

use crate::{Error, Point, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: Point,
    pub waypoints: Vec<Point>,
    /// Segment-average velocities, one per waypoint (see module docs).
    pub velocities: Vec<Point>,
    /// Sensing hovers performed at each waypoint.
    pub hover_counts: Vec<u32>,
}

impl Trajectory {
    /// Build a trajectory whose velocities follow from the waypoints and
    /// whose hover pattern is one hover at every `mu`-th waypoint.
    pub fn from_waypoints(start: Point, waypoints: Vec<Point>, t_fly: f64, mu: u32) -> Self {
        let velocities = derive_velocities(start, &waypoints, t_fly);
        let hover_counts = (1..=waypoints.len())
            .map(|n| if (n as u32).is_multiple_of(mu) { 1 } else { 0 })
            .collect();
        Trajectory { start, waypoints, velocities, hover_counts }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.velocities.iter().map(|v| v.norm()).collect()
    }

    /// Total number of sensing hovers.
    pub fn hover_total(&self) -> u32 {
        self.hover_counts.iter().sum()
    }

    /// Hover locations with multiplicity (one entry per hover event).
    pub fn hover_points(&self) -> Vec<Point> {
        let mut pts = Vec::new();
        for (wp, &c) in self.waypoints.iter().zip(&self.hover_counts) {
            for _ in 0..c {
                pts.push(*wp);
            }
        }
        pts
    }

    pub fn last_waypoint(&self) -> Option<Point> {
        self.waypoints.last().copied()
    }

    /// Append another trajectory that starts where this one ends.
    pub fn extend(&mut self, other: &Trajectory) -> Result<()> {
        let end = self.last_waypoint().unwrap_or(self.start);
        if end.dist(other.start) > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "trajectory concatenation mismatch: ends at ({}, {}), next starts at ({}, {})",
                end.x, end.y, other.start.x, other.start.y
            )));
        }
        self.waypoints.extend_from_slice(&other.waypoints);
        self.velocities.extend_from_slice(&other.velocities);
        self.hover_counts.extend_from_slice(&other.hover_counts);
        Ok(())
    }

    /// Check waypoint/velocity bookkeeping before energy accounting.
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() != self.velocities.len() {
            return Err(Error::InconsistentTrajectory {
                waypoints: self.waypoints.len(),
                velocities: self.velocities.len(),
            });
        }
        if self.waypoints.len() != self.hover_counts.len() {
            return Err(Error::InconsistentTrajectory {
                waypoints: self.waypoints.len(),
                velocities: self.hover_counts.len(),
            });
        }
        Ok(())
    }
}

pub fn derive_velocities(start: Point, waypoints: &[Point], t_fly: f64) -> Vec<Point> {
    let mut prev = start;
    waypoints
        .iter()
        .map(|&w| {
            let v = (w - prev) * (1.0 / t_fly);
            prev = w;
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocities_follow_segments() {
        let t = Trajectory::from_waypoints(
            Point::new(0.0, 0.0),
            vec![Point::new(30.0, 0.0), Point::new(30.0, 45.0)],
            1.5,
            5,
        );
        assert_eq!(t.velocities[0], Point::new(20.0, 0.0));
        assert_eq!(t.velocities[1], Point::new(0.0, 30.0));
        assert_eq!(t.hover_counts, vec![0, 0]);
    }

    #[test]
    fn hover_cadence_marks_every_mu_th() {
        let wps = (1..=10).map(|i| Point::new(i as f64, 0.0)).collect();
        let t = Trajectory::from_waypoints(Point::ZERO, wps, 1.0, 3);
        assert_eq!(t.hover_counts, vec![0, 0, 1, 0, 0, 1, 0, 0, 1, 0]);
        assert_eq!(t.hover_total(), 3);
    }

    #[test]
    fn extend_requires_continuity() {
        let mut a = Trajectory::from_waypoints(Point::ZERO, vec![Point::new(1.0, 0.0)], 1.0, 5);
        let b = Trajectory::from_waypoints(Point::new(5.0, 5.0), vec![Point::new(6.0, 5.0)], 1.0, 5);
        assert!(a.extend(&b).is_err());
        let c = Trajectory::from_waypoints(Point::new(1.0, 0.0), vec![Point::new(2.0, 0.0)], 1.0, 5);
        a.extend(&c).unwrap();
        assert_eq!(a.len(), 2);
    }
}
