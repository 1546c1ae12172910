use crate::error::{Error, Result};

/// Tri-exponential arterial plasma curve
///
/// `Cp(t) = (A1 t - A2 - A3) e^{l1 t} + A2 e^{l2 t} + A3 e^{l3 t}`,
///
/// which is zero at injection (`t = 0`) by construction. Time in minutes,
/// concentration in the units of `A2`, `A3` (`A1` per minute).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputModel {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

/// Horizon over which nonnegativity is checked (minutes).
const CHECK_HORIZON_MIN: f64 = 60.0;

impl InputModel {
    /// Validated constructor: all rates `<= 0` and `Cp >= 0` on a 1 s grid
    /// over the first hour.
    pub fn new(a1: f64, a2: f64, a3: f64, lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let m = Self {
            a1,
            a2,
            a3,
            lambda1,
            lambda2,
            lambda3,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.params();
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InputModelInvalid(format!("non-finite parameter in {p:?}")));
        }
        if [self.lambda1, self.lambda2, self.lambda3].iter().any(|&l| l > 0.0) {
            return Err(Error::InputModelInvalid("decay rates must be <= 0".into()));
        }
        let steps = (CHECK_HORIZON_MIN * 60.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / 60.0;
            let c = self.concentration(t);
            if c < 0.0 {
                return Err(Error::InputModelInvalid(format!("Cp({t:.4} min) = {c} < 0")));
            }
        }
        Ok(())
    }

    /// Population FDG plasma curve (Feng-type parameters) scaled to Bq/mL.
    pub fn standard_fdg() -> Self {
        Self {
            a1: 851.1225e3,
            a2: 21.8798e3,
            a3: 20.8113e3,
            lambda1: -4.133859,
            lambda2: -0.01043449,
            lambda3: -0.1190996,
        }
    }

    pub fn params(&self) -> [f64; 6] {
        [self.a1, self.a2, self.a3, self.lambda1, self.lambda2, self.lambda3]
    }

    pub fn from_params(p: [f64; 6]) -> Self {
        Self {
            a1: p[0],
            a2: p[1],
            a3: p[2],
            lambda1: p[3],
            lambda2: p[4],
            lambda3: p[5],
        }
    }

    /// Multiply every amplitude by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            a1: self.a1 * s,
            a2: self.a2 * s,
            a3: self.a3 * s,
            ..*self
        }
    }

    /// `Cp(t)`; zero before injection.
    pub fn concentration(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        (self.a1 * t - self.a2 - self.a3) * (self.lambda1 * t).exp()
            + self.a2 * (self.lambda2 * t).exp()
            + self.a3 * (self.lambda3 * t).exp()
    }

    /// Closed-form `integral_0^t Cp`.
    pub fn integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.a1 * int_t_exp(self.lambda1, t) - (self.a2 + self.a3) * int_exp(self.lambda1, t)
            + self.a2 * int_exp(self.lambda2, t)
            + self.a3 * int_exp(self.lambda3, t)
    }

    /// Mean of `Cp` over `[start, end]`.
    pub fn frame_average(&self, start: f64, end: f64) -> f64 {
        if end <= start {
            return self.concentration(start);
        }
        (self.integral(end) - self.integral(start)) / (end - start)
    }
}

/// `integral_0^t e^{l s} ds`
fn int_exp(l: f64, t: f64) -> f64 {
    if l == 0.0 {
        t
    } else {
        (l * t).exp_m1() / l
    }
}

/// `integral_0^t s e^{l s} ds`
fn int_t_exp(l: f64, t: f64) -> f64 {
    let x = l * t;
    if x.abs() < 0.5 {
        // t^2 * sum_n x^n / (n! (n + 2))
        let mut term = 1.0;
        let mut sum = 0.5;
        for n in 1..30 {
            term *= x / n as f64;
            sum += term / (n as f64 + 2.0);
        }
        t * t * sum
    } else {
        ((x - 1.0) * x.exp() + 1.0) / (l * l)
    }
}
