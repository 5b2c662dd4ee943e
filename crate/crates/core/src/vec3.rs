//! Small helpers over `[f64; 3]` points and vectors.

pub type Point3 = [f64; 3];

#[inline]
pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Squared Euclidean distance, evaluated as `dx*dx + dy*dy + dz*dz`.
///
/// Every exact-equality test in the crate (kd-tree vs. exhaustive scan)
/// relies on all call sites sharing this exact expression.
#[inline]
pub fn dist_sq(a: Point3, b: Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn dist(a: Point3, b: Point3) -> f64 {
    dist_sq(a, b).sqrt()
}

#[inline]
pub fn norm_sq(a: Point3) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    norm_sq(a).sqrt()
}

/// Unit vector along `a`; `None` when `|a|` is below `eps`.
#[inline]
pub fn normalized(a: Point3, eps: f64) -> Option<Point3> {
    let n = norm(a);
    if n < eps {
        None
    } else {
        Some(scale(a, 1.0 / n))
    }
}

#[inline]
pub fn is_finite(a: Point3) -> bool {
    a[0].is_finite() && a[1].is_finite() && a[2].is_finite()
}
