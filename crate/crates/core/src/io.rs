//! Text output helpers shared by the CSV writers.

/// Shortest representation that parses back to the identical `f64`.
///
/// Plain decimal for moderate magnitudes, scientific otherwise, so tiny or
/// huge values never expand into hundreds of digits. Negative zero prints
/// as `0`.
pub fn fmt_f64(v: f64) -> String {
    let mag = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if (1e-4..1e15).contains(&mag) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
