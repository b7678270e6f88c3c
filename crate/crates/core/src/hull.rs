//! Planar convex hulls (monotone chain) and polygon area (shoelace).

use crate::error::{Error, Result};

fn cross(o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull of 2D points in counter-clockwise order, collinear boundary
/// points removed.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    if points.len() < 3 {
        return Err(Error::DegenerateHull(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::DegenerateHull("fewer than 3 distinct points".into()));
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        return Err(Error::DegenerateHull("all points collinear".into()));
    }
    Ok(lower)
}

/// Area of the convex hull of the given points.
pub fn convex_hull_area_2d(points: &[[f64; 2]]) -> Result<f64> {
    let hull = convex_hull_2d(points)?;
    let mut twice_area = 0.0;
    for i in 0..hull.len() {
        let a = &hull[i];
        let b = &hull[(i + 1) % hull.len()];
        twice_area += a[0] * b[1] - b[0] * a[1];
    }
    Ok(0.5 * twice_area.abs())
}
