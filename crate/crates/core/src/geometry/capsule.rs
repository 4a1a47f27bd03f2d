use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// A line segment swept by a sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

/// Closest points between two capsule axes together with the segment
/// parameters at which they occur.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentClosest {
    pub s: f64,
    pub t: f64,
    pub p: Vec3,
    pub q: Vec3,
}

impl SegmentClosest {
    pub fn distance(&self) -> f64 {
        (self.p - self.q).norm()
    }
}

impl Capsule {
    pub fn new(a: Vec3, b: Vec3, radius: f64) -> Self {
        Self { a, b, radius }
    }

    /// Zero-length capsule, i.e. a sphere.
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Self::new(center, center, radius)
    }

    pub fn is_valid(&self) -> bool {
        self.radius >= 0.0
            && self.radius.is_finite()
            && self.a.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }

    pub fn point_at(&self, s: f64) -> Vec3 {
        self.a + (self.b - self.a) * s
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Capsule {
        Capsule {
            a: iso.transform_point(&Point3::from(self.a)).coords,
            b: iso.transform_point(&Point3::from(self.b)).coords,
            radius: self.radius,
        }
    }

    pub fn closest_axis_points(&self, other: &Capsule) -> SegmentClosest {
        segment_closest(&self.a, &self.b, &other.a, &other.b)
    }

    /// Signed surface distance. Negative values are penetration depth.
    pub fn distance(&self, other: &Capsule) -> f64 {
        self.closest_axis_points(other).distance() - self.radius - other.radius
    }
}

pub fn capsule_distance(a: &Capsule, b: &Capsule) -> f64 {
    a.distance(b)
}

/// Closest points between segments `p1 q1` and `p2 q2`.
///
/// Clamped closest-point parameterization. Zero-length segments fall out of
/// the same code path: their parameter collapses to 0 by clamping.
pub fn segment_closest(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> SegmentClosest {
    const EPS: f64 = 1e-12;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let c = d1.dot(&r);
    let b = d1.dot(&d2);
    let denom = a * e - b * b;

    let mut s = if denom > EPS * a.max(1.0) * e.max(1.0) {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = if e > EPS { (b * s + f) / e } else { 0.0 };
    if t <= 0.0 {
        t = 0.0;
        s = if a > EPS { (-c / a).clamp(0.0, 1.0) } else { 0.0 };
    } else if t > 1.0 {
        t = 1.0;
        s = if a > EPS { ((b - c) / a).clamp(0.0, 1.0) } else { 0.0 };
    }
    SegmentClosest {
        s,
        t,
        p: p1 + d1 * s,
        q: p2 + d2 * t,
    }
}
