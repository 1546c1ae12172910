use super::InputModel;
use crate::error::{Error, Result};

/// Irreversible two-tissue-compartment rate constants (k4 = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticParams {
    /// mL/min/mL
    pub k1: f64,
    /// 1/min
    pub k2: f64,
    /// 1/min
    pub k3: f64,
    /// Blood volume fraction in [0, 1).
    pub vb: f64,
}

impl KineticParams {
    pub fn new(k1: f64, k2: f64, k3: f64, vb: f64) -> Result<Self> {
        let p = Self { k1, k2, k3, vb };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { k1, k2, k3, vb } = *self;
        if [k1, k2, k3, vb].iter().any(|v| !v.is_finite()) {
            return Err(Error::SpecInvalid(format!("non-finite kinetic parameter in {self:?}")));
        }
        if k1 < 0.0 || k2 < 0.0 || k3 < 0.0 {
            return Err(Error::SpecInvalid(format!("rate constants must be >= 0: {self:?}")));
        }
        if k1 > 0.0 && k2 + k3 <= 0.0 {
            return Err(Error::SpecInvalid("k2 + k3 must be > 0 when K1 > 0".into()));
        }
        if !(0.0..1.0).contains(&vb) {
            return Err(Error::SpecInvalid(format!("vb must lie in [0, 1), got {vb}")));
        }
        Ok(())
    }

    /// Net influx rate `K1 k3 / (k2 + k3)` (1/min).
    pub fn ki(&self) -> f64 {
        if self.k1 == 0.0 {
            0.0
        } else {
            self.k1 * self.k3 / (self.k2 + self.k3)
        }
    }
}

/// Integration settings for [`tissue_response`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeConfig {
    /// Largest RK4 step, minutes.
    pub max_step: f64,
}

/// 0.1 s.
pub const DEFAULT_STEP_MIN: f64 = 0.1 / 60.0;
/// Steps above 1 s are refused.
pub const MAX_ALLOWED_STEP_MIN: f64 = 1.0 / 60.0;

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            max_step: DEFAULT_STEP_MIN,
        }
    }
}

/// Tissue compartments sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TissueCurve {
    pub t: Vec<f64>,
    /// Free tracer.
    pub c1: Vec<f64>,
    /// Trapped (phosphorylated) tracer.
    pub c2: Vec<f64>,
    /// Total measured concentration `(1 - vb)(C1 + C2) + vb Cp`.
    pub ct: Vec<f64>,
}

/// Solve `dC1/dt = K1 Cp - (k2 + k3) C1`, `dC2/dt = k3 C1` from zero
/// initial conditions with fixed-step RK4, sampled at `t_grid`.
///
/// Each interval between grid points is split into equal steps no longer
/// than `cfg.max_step`, so the samples land exactly on the grid.
pub fn tissue_response(
    params: &KineticParams,
    input: &InputModel,
    t_grid: &[f64],
    cfg: OdeConfig,
) -> Result<TissueCurve> {
    params.validate()?;
    if !(cfg.max_step > 0.0) || cfg.max_step > MAX_ALLOWED_STEP_MIN {
        return Err(Error::StepTooCoarse {
            step_s: cfg.max_step * 60.0,
        });
    }
    if t_grid.first() != Some(&0.0) {
        return Err(Error::SpecInvalid("time grid must start at 0".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::SpecInvalid("time grid must be strictly increasing".into()));
    }

    let KineticParams { k1, k2, k3, vb } = *params;
    let kout = k2 + k3;
    let rhs = |t: f64, c1: f64| -> (f64, f64) { (k1 * input.concentration(t) - kout * c1, k3 * c1) };

    let n = t_grid.len();
    let mut c1s = Vec::with_capacity(n);
    let mut c2s = Vec::with_capacity(n);
    let (mut c1, mut c2) = (0.0f64, 0.0f64);
    c1s.push(c1);
    c2s.push(c2);
    for w in t_grid.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / cfg.max_step).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for s in 0..steps {
            let t = w[0] + s as f64 * h;
            let (a1, a2) = rhs(t, c1);
            let (b1, b2) = rhs(t + 0.5 * h, c1 + 0.5 * h * a1);
            let (d1, d2) = rhs(t + 0.5 * h, c1 + 0.5 * h * b1);
            let (e1, e2) = rhs(t + h, c1 + h * d1);
            c1 += h / 6.0 * (a1 + 2.0 * b1 + 2.0 * d1 + e1);
            c2 += h / 6.0 * (a2 + 2.0 * b2 + 2.0 * d2 + e2);
        }
        // RK4 round-off can leave -1e-18 at the very start
        c1s.push(c1.max(0.0));
        c2s.push(c2.max(0.0));
    }
    let ct = t_grid
        .iter()
        .zip(c1s.iter().zip(&c2s))
        .map(|(&t, (&a, &b))| (1.0 - vb) * (a + b) + vb * input.concentration(t))
        .collect();
    Ok(TissueCurve {
        t: t_grid.to_vec(),
        c1: c1s,
        c2: c2s,
        ct,
    })
}
