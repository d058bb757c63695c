//! The fixed function table visible to scripts.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Builtin {
    pub name: &'static str,
    pub signature: &'static str,
    pub summary: &'static str,
}

const fn b(name: &'static str, signature: &'static str, summary: &'static str) -> Builtin {
    Builtin {
        name,
        signature,
        summary,
    }
}

pub const BUILTINS: &[Builtin] = &[
    b(
        "get_trajectory",
        "get_trajectory()",
        "returns a copy of the current trajectory as a list of [x, y, z, velocity] lists",
    ),
    b(
        "detect_objects",
        "detect_objects(name)",
        "returns the [x, y, z] coordinates of the named object if it is present, else None",
    ),
    b("len", "len(x)", "number of elements in a list or characters in a string"),
    b("range", "range(stop) / range(start, stop[, step])", "list of integers; for-loops must iterate over range(...)"),
    b("abs", "abs(x)", "absolute value"),
    b("min", "min(a, b, ...) / min(list)", "smallest number"),
    b("max", "max(a, b, ...) / max(list)", "largest number"),
    b("sum", "sum(list)", "sum of a list of numbers"),
    b("sqrt", "sqrt(x)", "square root of a non-negative number"),
    b("sin", "sin(x)", "sine of an angle in radians"),
    b("cos", "cos(x)", "cosine of an angle in radians"),
    b("atan2", "atan2(y, x)", "angle of the vector (x, y) in radians"),
    b("int", "int(x)", "truncates a number toward zero"),
    b("float", "float(x)", "converts a number or boolean to a number"),
    b("round", "round(x)", "nearest integer, ties to even"),
    b("list", "list(x)", "shallow copy of a list"),
    b("deepcopy", "deepcopy(x)", "recursive copy of nested lists"),
    b("norm3", "norm3(a)", "length of the 3-vector a"),
    b("dist3", "dist3(a, b)", "distance between the 3-vectors a and b"),
    b("lerp", "lerp(a, b, t)", "a + t * (b - a) for 3-vectors"),
    b(
        "smooth_trajectory",
        "smooth_trajectory(t, window)",
        "centered moving average with an odd window; endpoints stay fixed",
    ),
    b(
        "resample_trajectory",
        "resample_trajectory(t, n)",
        "n waypoints spaced uniformly along the path",
    ),
    b(
        "translate_blend",
        "translate_blend(t, offset, mode)",
        "adds offset weighted along the path; mode is \"uniform\", \"fix_start\", \"fix_goal\" or \"fix_both\"",
    ),
    b(
        "radial_rescale",
        "radial_rescale(t, center, factor, preserve_endpoints)",
        "scales each waypoint's distance from center by factor",
    ),
    b(
        "enforce_min_distance",
        "enforce_min_distance(t, center, d)",
        "pushes waypoints out to at least distance d from center and smooths the result",
    ),
    b(
        "scale_speed_near",
        "scale_speed_near(t, center, radius, factor, absolute)",
        "changes speed near center: multiplies by factor, or sets it to factor when absolute is True; no effect beyond 2 * radius",
    ),
    b(
        "truncate_at_nearest",
        "truncate_at_nearest(t, center, ramp)",
        "cuts the path at the waypoint closest to center, slowing to a stop over the last ramp waypoints",
    ),
    b(
        "append_spiral",
        "append_spiral(t, max_radius, turns, n)",
        "appends n waypoints spiralling outward from the goal in the horizontal plane",
    ),
    b(
        "nearest_index",
        "nearest_index(t, point)",
        "index of the waypoint closest to point",
    ),
    b(
        "arc_length_params",
        "arc_length_params(t)",
        "normalized arc-length position of every waypoint, from 0 to 1",
    ),
];

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.iter().any(|b| b.name == name)
}

/// Names bound as global variables before a script runs.
pub const CONSTANTS: &[(&str, f64)] = &[("pi", std::f64::consts::PI)];
