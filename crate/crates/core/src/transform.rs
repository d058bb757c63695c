//! Deterministic reference transforms.
//!
//! Each function is pure: it borrows the input trajectory and returns a new
//! one. They back the script builtins and double as oracles for scripts that
//! implement the same adaptation by hand.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::geometry::{self, Vec3};
use crate::metrics::{arc_length_params, nearest_index};
use crate::model::{BlendMode, Trajectory, Waypoint};

/// Maximum project-then-smooth rounds in [`enforce_min_distance`].
pub const CLEARANCE_ROUNDS: usize = 5;

/// Points closer than `d - CLEARANCE_SLACK` count as violating clearance.
/// Keeps freshly projected points (which sit at `d` up to rounding) from
/// re-triggering another round.
const CLEARANCE_SLACK: f64 = 1e-9;

fn ensure_finite3(name: &str, v: Vec3) -> Result<()> {
    if geometry::is_finite(v) {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {v:?}")))
    }
}

fn rebuild(waypoints: Vec<Waypoint>) -> Result<Trajectory> {
    Trajectory::new(waypoints)
}

/// Centered moving average with pinned endpoints.
///
/// Interior waypoint `i` is replaced by the mean over `i-h..=i+h` where `h`
/// is half the window, shrunk symmetrically near the ends so the window stays
/// centered. Positions and speeds are both averaged.
pub fn smooth(traj: &Trajectory, window: usize) -> Result<Trajectory> {
    smooth_impl(traj, window, true)
}

fn smooth_impl(traj: &Trajectory, window: usize, speeds: bool) -> Result<Trajectory> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(invalid(format!(
            "smoothing window must be a positive odd integer, got {window}"
        )));
    }
    let src = traj.waypoints();
    let n = src.len();
    let half = window / 2;
    let mut out = src.to_vec();
    for i in 1..n.saturating_sub(1) {
        let h = half.min(i).min(n - 1 - i);
        if h == 0 {
            continue;
        }
        let k = (2 * h + 1) as f64;
        let mut acc = [0.0; 4];
        for w in &src[i - h..=i + h] {
            acc[0] += w.x;
            acc[1] += w.y;
            acc[2] += w.z;
            acc[3] += w.v;
        }
        out[i].x = acc[0] / k;
        out[i].y = acc[1] / k;
        out[i].z = acc[2] / k;
        if speeds {
            out[i].v = acc[3] / k;
        }
    }
    rebuild(out)
}

/// `n` waypoints at uniform arc-length spacing, linearly interpolating
/// positions and speeds. The original endpoints are copied exactly.
pub fn resample(traj: &Trajectory, n: usize) -> Result<Trajectory> {
    if n < 2 {
        return Err(invalid(format!("resample needs n >= 2, got {n}")));
    }
    let src = traj.waypoints();
    let s = arc_length_params(traj);
    let mut out = Vec::with_capacity(n);
    out.push(src[0]);
    let mut seg = 0;
    for j in 1..n - 1 {
        let u = j as f64 / (n - 1) as f64;
        while seg + 2 < src.len() && s[seg + 1] < u {
            seg += 1;
        }
        // Skip zero-length segments so the interpolation parameter is defined.
        while seg + 2 < src.len() && s[seg + 1] <= s[seg] {
            seg += 1;
        }
        let (a, b) = (src[seg], src[seg + 1]);
        let span = s[seg + 1] - s[seg];
        let t = if span > 0.0 {
            ((u - s[seg]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let p = geometry::lerp(a.position(), b.position(), t);
        out.push(Waypoint::from_position(p, a.v + (b.v - a.v) * t));
    }
    out.push(src[src.len() - 1]);
    rebuild(out)
}

/// Shift every waypoint by `offset` weighted along arc length by `mode`.
/// Speeds are unchanged; waypoints with zero weight are copied bit-for-bit.
pub fn translate_blend(traj: &Trajectory, offset: Vec3, mode: BlendMode) -> Result<Trajectory> {
    ensure_finite3("offset", offset)?;
    let s = arc_length_params(traj);
    let out = traj
        .waypoints()
        .iter()
        .zip(&s)
        .map(|(w, &si)| {
            let weight = mode.weight(si);
            if weight == 0.0 {
                *w
            } else {
                w.with_position(geometry::add(w.position(), geometry::scale(offset, weight)))
            }
        })
        .collect();
    rebuild(out)
}

/// Move waypoints radially away from (`factor > 1`) or toward (`factor < 1`)
/// `center`. With `preserve_endpoints` the displacement is tapered by the
/// `4s(1-s)` bump so the first and last waypoints stay put.
pub fn radial_rescale(
    traj: &Trajectory,
    center: Vec3,
    factor: f64,
    preserve_endpoints: bool,
) -> Result<Trajectory> {
    ensure_finite3("center", center)?;
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(invalid(format!(
            "rescale factor must be positive, got {factor}"
        )));
    }
    let s = arc_length_params(traj);
    let out = traj
        .waypoints()
        .iter()
        .zip(&s)
        .map(|(w, &si)| {
            let taper = if preserve_endpoints {
                BlendMode::FixBoth.weight(si)
            } else {
                1.0
            };
            if taper == 0.0 {
                return *w;
            }
            let p = w.position();
            let d = geometry::scale(geometry::sub(p, center), factor - 1.0);
            w.with_position(geometry::add(p, geometry::scale(d, taper)))
        })
        .collect();
    rebuild(out)
}

fn project_violations(wps: &mut [Waypoint], center: Vec3, d: f64) -> bool {
    let mut any = false;
    for w in wps.iter_mut() {
        let offset = geometry::sub(w.position(), center);
        let r = geometry::norm(offset);
        if r < d - CLEARANCE_SLACK {
            let dir = geometry::normalize(offset).unwrap_or([1.0, 0.0, 0.0]);
            *w = w.with_position(geometry::add(center, geometry::scale(dir, d)));
            any = true;
        }
    }
    any
}

fn has_violation(wps: &[Waypoint], center: Vec3, d: f64) -> bool {
    wps.iter()
        .any(|w| geometry::dist(w.position(), center) < d - CLEARANCE_SLACK)
}

/// Push waypoints out to at least distance `d` from `center`.
///
/// Alternates projection onto the sphere of radius `d` with a window-3
/// position smoothing, for at most [`CLEARANCE_ROUNDS`] rounds, then does a
/// final unsmoothed projection if smoothing pulled anything back inside.
/// Speeds are never modified.
pub fn enforce_min_distance(traj: &Trajectory, center: Vec3, d: f64) -> Result<Trajectory> {
    ensure_finite3("center", center)?;
    if !(d >= 0.0 && d.is_finite()) {
        return Err(invalid(format!(
            "minimum distance must be non-negative, got {d}"
        )));
    }
    let mut current = traj.clone();
    for _ in 0..CLEARANCE_ROUNDS {
        if !has_violation(current.waypoints(), center, d) {
            return Ok(current);
        }
        let mut wps = current.into_waypoints();
        project_violations(&mut wps, center, d);
        current = smooth_impl(&rebuild(wps)?, 3, false)?;
    }
    let mut wps = current.into_waypoints();
    project_violations(&mut wps, center, d);
    rebuild(wps)
}

/// Cosine falloff: 1 inside the radius, tapering to 0 at twice the radius.
pub fn speed_falloff(rho: f64) -> f64 {
    if rho <= 1.0 {
        1.0
    } else if rho < 2.0 {
        0.5 * (1.0 + (PI * (rho - 1.0)).cos())
    } else {
        0.0
    }
}

/// Change speed near `center`.
///
/// In relative mode `factor` multiplies the speed; in absolute mode it is a
/// target speed. Either way the effect is blended by [`speed_falloff`] of
/// `distance / radius`, so waypoints at two radii or more are untouched.
pub fn scale_speed_near(
    traj: &Trajectory,
    center: Vec3,
    radius: f64,
    factor: f64,
    absolute: bool,
) -> Result<Trajectory> {
    ensure_finite3("center", center)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(format!("radius must be positive, got {radius}")));
    }
    if !(factor >= 0.0 && factor.is_finite()) {
        return Err(invalid(format!(
            "speed factor must be non-negative, got {factor}"
        )));
    }
    let out = traj
        .waypoints()
        .iter()
        .map(|w| {
            let g = speed_falloff(geometry::dist(w.position(), center) / radius);
            if g == 0.0 {
                return *w;
            }
            let v = if absolute {
                w.v + g * (factor - w.v)
            } else {
                w.v * (1.0 + g * (factor - 1.0))
            };
            Waypoint {
                v: v.max(0.0),
                ..*w
            }
        })
        .collect();
    rebuild(out)
}

/// Stop at the waypoint nearest `center`, dropping everything after it and
/// ramping speed linearly to zero over the last `ramp` kept waypoints.
pub fn truncate_at_nearest(traj: &Trajectory, center: Vec3, ramp: usize) -> Result<Trajectory> {
    ensure_finite3("center", center)?;
    if ramp == 0 {
        return Err(invalid("ramp must be at least 1"));
    }
    let (k, _) = nearest_index(traj, center);
    let src = traj.waypoints();
    if k == 0 {
        return rebuild(vec![
            Waypoint { v: 0.0, ..src[0] },
            Waypoint { v: 0.0, ..src[1] },
        ]);
    }
    let m = ramp.min(k);
    let mut out = src[..=k].to_vec();
    for (i, w) in out.iter_mut().enumerate().skip(k + 1 - m) {
        w.v *= (k - i) as f64 / m as f64;
    }
    rebuild(out)
}

/// Append an Archimedean spiral in the horizontal plane of the goal.
///
/// Point `j` (1-based) sits at angle `2π·turns·j/n_points` and radius
/// `max_radius·j/n_points`, so the last point lands exactly on `max_radius`.
/// Appended speeds copy the goal waypoint's speed.
pub fn append_spiral(
    traj: &Trajectory,
    max_radius: f64,
    turns: f64,
    n_points: usize,
) -> Result<Trajectory> {
    if !(max_radius > 0.0 && max_radius.is_finite()) {
        return Err(invalid(format!(
            "spiral radius must be positive, got {max_radius}"
        )));
    }
    if !(turns > 0.0 && turns.is_finite()) {
        return Err(invalid(format!(
            "spiral turns must be positive, got {turns}"
        )));
    }
    if n_points < 4 {
        return Err(invalid(format!(
            "spiral needs at least 4 points, got {n_points}"
        )));
    }
    let goal = *traj.last();
    let mut out = traj.waypoints().to_vec();
    out.reserve(n_points);
    let sweep = 2.0 * PI * turns;
    for j in 1..=n_points {
        let frac = j as f64 / n_points as f64;
        let theta = frac * sweep;
        let r = max_radius * frac;
        out.push(Waypoint::new(
            goal.x + r * theta.cos(),
            goal.y + r * theta.sin(),
            goal.z,
            goal.v,
        ));
    }
    rebuild(out)
}
