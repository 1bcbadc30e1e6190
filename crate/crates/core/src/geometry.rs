use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A position in scanner space, millimeters.
pub type Point3 = [f64; 3];

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("a streamline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite coordinate at vertex {0}")]
    NonFinite(usize),
}

/// An ordered polyline through white matter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Streamline {
    points: Vec<Point3>,
}

impl Streamline {
    pub fn new(points: Vec<Point3>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self { points })
    }

    pub(crate) fn new_unchecked(points: Vec<Point3>) -> Self {
        debug_assert!(points.len() >= 2);
        Self { points }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Point3 {
        self.points[0]
    }

    pub fn last(&self) -> Point3 {
        self.points[self.points.len() - 1]
    }

    /// Polyline arc length.
    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| distance(&w[0], &w[1])).sum()
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self { points }
    }

    pub fn map_points(&self, f: impl Fn(Point3) -> Point3) -> Self {
        Self { points: self.points.iter().map(|&p| f(p)).collect() }
    }
}

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}
