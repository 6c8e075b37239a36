//! Numerically stable scalar primitives shared by the comparison functions.

/// Below this gap `1 - p` the `p = 1` logarithmic forms are used.
pub const UNIT_POWER_GAP: f64 = 1e-12;

pub fn is_unit_power(p: f64) -> bool {
    1.0 - p < UNIT_POWER_GAP
}

/// `(1+t)^a`.
#[inline]
pub fn damping_power(t: f64, a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else {
        (a * t.ln_1p()).exp()
    }
}

/// `∫_0^t (1+s)^{-p} ds`: `((1+t)^{1-p} - 1)/(1-p)`, or `log(1+t)` at `p = 1`.
pub fn weighted_time(p: f64, t: f64) -> f64 {
    let l = t.ln_1p();
    if is_unit_power(p) {
        l
    } else {
        let q = 1.0 - p;
        (q * l).exp_m1() / q
    }
}

/// `((1+t)^{1+p} - 1)/(1+p)`.
pub fn parabolic_time(p: f64, t: f64) -> f64 {
    let q = 1.0 + p;
    (q * t.ln_1p()).exp_m1() / q
}

/// `(1 - e^{-x})/x`, continuous at 0.
pub fn one_minus_exp_over(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// `(1 - (1+x) e^{-x})/x²`, continuous at 0 with limit 1/2.
pub fn exp_moment(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        // Taylor series: 1/2 - x/3 + x²/8 - x³/30 + x⁴/144
        0.5 + x * (-1.0 / 3.0 + x * (1.0 / 8.0 + x * (-1.0 / 30.0 + x / 144.0)))
    } else {
        (-(-x).exp_m1() - x * (-x).exp()) / (x * x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weighted_time_cases() {
        assert_relative_eq!(weighted_time(0.0, 3.0), 3.0, max_relative = 1e-15);
        assert_relative_eq!(weighted_time(0.5, 3.0), 2.0, max_relative = 1e-15);
        assert_relative_eq!(weighted_time(1.0, 1.0), 2f64.ln(), max_relative = 1e-15);
        // tiny t keeps full relative precision
        assert_relative_eq!(weighted_time(0.3, 1e-12), 1e-12, max_relative = 1e-11);
    }

    #[test]
    fn weighted_time_continuous_at_unit_power() {
        for &t in &[0.5, 10.0, 1000.0] {
            let near = weighted_time(1.0 - 1e-10, t);
            assert_relative_eq!(near, t.ln_1p(), max_relative = 1e-8);
        }
    }

    #[test]
    fn parabolic_time_cases() {
        assert_relative_eq!(parabolic_time(0.0, 1.0), 1.0);
        assert_relative_eq!(parabolic_time(1.0, 1.0), 1.5);
        assert_eq!(parabolic_time(0.7, 0.0), 0.0);
    }

    #[test]
    fn exp_helpers_match_direct_forms() {
        for &x in &[0.05f64, 0.5, 3.0, 40.0] {
            let direct = (1.0 - (1.0 + x) * (-x).exp()) / (x * x);
            assert_relative_eq!(exp_moment(x), direct, max_relative = 1e-12);
            assert_relative_eq!(one_minus_exp_over(x), (1.0 - (-x).exp()) / x, max_relative = 1e-14);
        }
        // the series branch meets the closed form at the switch point
        assert_relative_eq!(exp_moment(0.999e-3), exp_moment(1.001e-3), max_relative = 1e-5);
        assert_relative_eq!(exp_moment(0.0), 0.5);
        assert_relative_eq!(one_minus_exp_over(0.0), 1.0);
    }
}
