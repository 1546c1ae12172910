use crate::blood_input::{McifResult, TimeActivityCurve};
use crate::phantom::InputModel;

/// Plasma input for graphical analysis.
#[derive(Debug, Clone, PartialEq)]
pub enum BloodInputCurve {
    /// Frame values (an IDIF), linearly interpolated from `(0, 0)`.
    Sampled(TimeActivityCurve),
    /// A closed-form curve (an MCIF).
    Parametric(InputModel),
}

/// Grid step for integrating sampled curves: 1 s.
const GRID_MIN: f64 = 1.0 / 60.0;

impl BloodInputCurve {
    /// `Cp(t)`.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Parametric(m) => m.concentration(t),
            Self::Sampled(tac) => interpolate(tac, t),
        }
    }

    /// `integral_0^t Cp`: exact for parametric curves, trapezoid on a 1 s
    /// grid (ending exactly at `t`) for sampled ones.
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            Self::Parametric(m) => m.integral(t),
            Self::Sampled(tac) => {
                if t <= 0.0 {
                    return 0.0;
                }
                let steps = (t / GRID_MIN).ceil() as usize;
                let mut area = 0.0;
                let mut prev = (0.0, interpolate(tac, 0.0));
                for k in 1..=steps {
                    let tk = if k == steps { t } else { k as f64 * GRID_MIN };
                    let v = interpolate(tac, tk);
                    area += 0.5 * (prev.1 + v) * (tk - prev.0);
                    prev = (tk, v);
                }
                area
            }
        }
    }
}

impl From<&McifResult> for BloodInputCurve {
    fn from(r: &McifResult) -> Self {
        Self::Parametric(r.input)
    }
}

/// Piecewise-linear through `(0, 0)` and the frame midpoints; held constant
/// after the last midpoint.
fn interpolate(tac: &TimeActivityCurve, t: f64) -> f64 {
    let (ts, vs) = (tac.t_mid(), tac.value());
    if t <= 0.0 || ts.is_empty() {
        return 0.0;
    }
    let i = ts.partition_point(|&x| x < t);
    if i == ts.len() {
        return vs[ts.len() - 1];
    }
    if ts[i] == t {
        return vs[i];
    }
    let (t0, v0) = if i == 0 { (0.0, 0.0) } else { (ts[i - 1], vs[i - 1]) };
    v0 + (vs[i] - v0) * (t - t0) / (ts[i] - t0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_interpolation_and_integral() {
        let tac = TimeActivityCurve::new(vec![1.0, 2.0, 4.0], vec![2.0, 4.0, 0.0], vec![1.0, 1.0, 1.0]).unwrap();
        let c = BloodInputCurve::Sampled(tac);
        assert_eq!(c.value(0.5), 1.0);
        assert_eq!(c.value(2.0), 4.0);
        assert_eq!(c.value(3.0), 2.0);
        assert_eq!(c.value(9.0), 0.0);
        // piecewise linear, so the 1 s trapezoid is exact up to round-off
        let exact = 1.0 + 3.0 + 4.0;
        assert!((c.integral(4.0) - exact).abs() < 1e-9);
        assert!((c.integral(1.5) - (1.0 + 0.5 * (2.0 + 3.0) * 0.5)).abs() < 1e-9);
    }

    #[test]
    fn parametric_uses_closed_form() {
        let m = InputModel::standard_fdg();
        let c = BloodInputCurve::Parametric(m);
        assert_eq!(c.integral(30.0), m.integral(30.0));
        assert_eq!(c.value(30.0), m.concentration(30.0));
    }
}
