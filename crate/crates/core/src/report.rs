//! Plain-text numeric output shared by the CSV writers.

/// Round-trippable decimal with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}
