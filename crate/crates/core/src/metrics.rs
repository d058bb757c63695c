//! Scalar measurements over trajectories.

use crate::error::{invalid, Result};
use crate::geometry::{self, Vec3};
use crate::model::Trajectory;

/// Normalized cumulative chord length at every waypoint.
///
/// The first value is exactly 0 and the last exactly 1. A trajectory whose
/// waypoints all coincide falls back to the index parameterization `i/(N-1)`.
pub fn arc_length_params(traj: &Trajectory) -> Vec<f64> {
    let wps = traj.waypoints();
    let n = wps.len();
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in wps.windows(2) {
        acc += geometry::dist(w[0].position(), w[1].position());
        cumulative.push(acc);
    }
    if acc > 0.0 {
        for s in cumulative.iter_mut() {
            *s /= acc;
        }
    } else {
        for (i, s) in cumulative.iter_mut().enumerate() {
            *s = i as f64 / (n - 1) as f64;
        }
    }
    // Pin the end exactly; rounding in the division can leave 1 - ulp.
    cumulative[n - 1] = 1.0;
    cumulative
}

/// Index of the waypoint closest to `point` and its distance. Ties go to the
/// smallest index.
pub fn nearest_index(traj: &Trajectory, point: Vec3) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, w) in traj.waypoints().iter().enumerate() {
        let d = geometry::dist(w.position(), point);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Largest second difference of positions, normalized by the mean chord.
///
/// Zero for evenly spaced collinear points; grows with the sharpest turn.
pub fn roughness(traj: &Trajectory) -> Result<f64> {
    let p = traj.positions();
    if p.len() < 3 {
        return Err(invalid(format!(
            "roughness needs at least 3 waypoints, got {}",
            p.len()
        )));
    }
    let mean_chord = traj.chord_length() / (p.len() - 1) as f64;
    if mean_chord == 0.0 {
        return Ok(0.0);
    }
    let max_second = p
        .windows(3)
        .map(|w| {
            let d2 = geometry::add(geometry::sub(w[2], geometry::scale(w[1], 2.0)), w[0]);
            geometry::norm(d2)
        })
        .fold(0.0, f64::max);
    Ok(max_second / mean_chord)
}

/// Discrete Fréchet distance between the waypoint positions of `a` and `b`.
///
/// Dynamic program over the `|a| x |b|` coupling lattice, keeping one row.
pub fn discrete_frechet(a: &Trajectory, b: &Trajectory) -> f64 {
    let pa = a.positions();
    let pb = b.positions();
    let m = pb.len();
    let mut row = vec![0.0f64; m];
    for (i, &p) in pa.iter().enumerate() {
        let mut diag = 0.0f64;
        for j in 0..m {
            let d = geometry::dist(p, pb[j]);
            let above = row[j];
            let value = match (i, j) {
                (0, 0) => d,
                (0, _) => row[j - 1].max(d),
                (_, 0) => above.max(d),
                _ => diag.min(above).min(row[j - 1]).max(d),
            };
            diag = above;
            row[j] = value;
        }
    }
    row[m - 1]
}
