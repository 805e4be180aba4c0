use std::f64::consts::PI;

pub const HOURS_PER_DAY: f64 = 24.0;

/// Distance in hours between two times of day on the 24 h circle.
///
/// `min(b − a, a − b + 24)` for `a < b`, symmetric otherwise; always in
/// `[0, 12]`.
pub fn circ_distance(a: f64, b: f64) -> f64 {
    debug_assert!((0.0..HOURS_PER_DAY).contains(&a), "hour out of range: {a}");
    debug_assert!((0.0..HOURS_PER_DAY).contains(&b), "hour out of range: {b}");
    if a < b {
        (b - a).min(a - b + HOURS_PER_DAY)
    } else {
        (a - b).min(b - a + HOURS_PER_DAY)
    }
}

/// Reduce any real hour into `[0, 24)`.
pub fn wrap_hour(h: f64) -> f64 {
    let r = h.rem_euclid(HOURS_PER_DAY);
    // rem_euclid can round up to exactly 24.0 for tiny negative inputs
    if r >= HOURS_PER_DAY {
        0.0
    } else {
        r
    }
}

pub fn minute_to_hour(minute: u16) -> f64 {
    minute as f64 / 60.0
}

pub fn to_cartesian(hour: f64) -> (f64, f64) {
    let theta = 2.0 * PI * hour / HOURS_PER_DAY;
    (theta.cos(), theta.sin())
}

/// Mean direction of a set of hours. `None` when the resultant vector
/// vanishes (e.g. two antipodal points).
pub fn circular_mean(hours: &[f64]) -> Option<f64> {
    if hours.is_empty() {
        return None;
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for &h in hours {
        let (x, y) = to_cartesian(h);
        sx += x;
        sy += y;
    }
    let n = hours.len() as f64;
    if (sx / n).hypot(sy / n) < 1e-12 {
        return None;
    }
    Some(wrap_hour(sy.atan2(sx) * HOURS_PER_DAY / (2.0 * PI)))
}
