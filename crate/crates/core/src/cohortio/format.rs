/// Full-precision text form of `x` that parses back to the same bits.
///
/// Uses the shortest round-trip digits, switching to exponent notation
/// outside `[1e-5, 1e16)` so tiny and huge values stay compact.
pub fn fmt_real(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// `1.55 (1.55-1.56)`
pub fn fmt_hr_ci(hr: f64, low: f64, high: f64) -> String {
    format!("{hr:.2} ({low:.2}-{high:.2})")
}

pub fn fmt_percent(x: f64) -> String {
    format!("{x:.1}%")
}
