//! Stable text formatting for numbers written to artifacts.

/// Round-trippable decimal rendering: positional for moderate magnitudes,
/// scientific otherwise, `inf`/`-inf`/`nan` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if (1e-4..1e15).contains(&a) {
        let s = format!("{x}");
        if s.parse::<f64>() == Ok(x) {
            return s;
        }
    }
    format!("{x:e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.0, 1.0, -2.5, 1e-300, std::f64::consts::PI, 1e20, 123456.789, 0.00012] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(1e-7), "1e-7");
    }
}
