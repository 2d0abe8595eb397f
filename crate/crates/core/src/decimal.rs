//! Decimal snapping for grid arithmetic.
//!
//! Grid values are built from decimal steps (0.2, 0.5, ...). Plain float
//! arithmetic drifts (`4.0 - 4.2 = -0.20000000000000018`), so results are
//! rounded back to the number of decimal places the inputs carry.

const MAX_PLACES: u32 = 12;

/// Decimal places in the shortest representation of `value`, capped at 12.
pub fn places(value: f64) -> u32 {
    let text = format!("{}", value.abs());
    match text.split_once('.') {
        Some((_, frac)) => (frac.len() as u32).min(MAX_PLACES),
        None => 0,
    }
}

pub fn round_to(value: f64, places: u32) -> f64 {
    let scale = 10f64.powi(places.min(MAX_PLACES) as i32);
    let rounded = (value * scale).round() / scale;
    if rounded.is_finite() {
        rounded
    } else {
        value
    }
}
