//! Two-type Brock–Hommes heterogeneous-beliefs model in deviation form.
//!
//! Fundamentalists (`g1 = b1 = 0`) compete with trend followers `(g2, b2)`:
//!
//! ```text
//! U_h      = (x_t - R x_{t-1}) (g_h x_{t-2} + b_h - R x_{t-1})
//! n_h      = exp(beta U_h) / sum_j exp(beta U_j)
//! x_{t+1}  = (n_1 (g_1 x_t + b_1) + n_2 (g_2 x_t + b_2)) / R + eps,  eps ~ N(0, sigma^2)
//! ```

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitude beyond which a trajectory is considered diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BhConstants {
    /// Gross risk-free return `R`.
    pub r: f64,
    /// Intensity of choice.
    pub beta: f64,
    pub noise_std: f64,
    /// Initial price deviation, used for `x_0`, `x_{-1}` and `x_{-2}`.
    pub x0: f64,
    /// Fundamentalist belief, kept configurable for experimentation.
    pub g1: f64,
    pub b1: f64,
}

impl Default for BhConstants {
    fn default() -> Self {
        Self {
            r: 1.01,
            beta: 120.0,
            noise_std: 0.04,
            x0: 0.0,
            g1: 0.0,
            b1: 0.0,
        }
    }
}

/// Price deviation history and the current belief fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BhState {
    /// `[x_t, x_{t-1}, x_{t-2}]`.
    pub x: [f64; 3],
    /// Fractions of fundamentalists and trend followers.
    pub n: [f64; 2],
    pub tick: usize,
}

impl BhState {
    pub fn initial(consts: &BhConstants) -> Self {
        Self {
            x: [consts.x0; 3],
            n: [0.5, 0.5],
            tick: 0,
        }
    }

    pub fn price(&self) -> f64 {
        self.x[0]
    }
}

/// Advance the model one price tick.
pub fn bh_step<R: rand::Rng + ?Sized>(
    state: &BhState,
    g2: f64,
    b2: f64,
    consts: &BhConstants,
    rng: &mut R,
) -> Result<BhState> {
    let [xt, xt1, xt2] = state.x;
    let r = consts.r;
    let realized = xt - r * xt1;
    let u1 = realized * (consts.g1 * xt2 + consts.b1 - r * xt1);
    let u2 = realized * (g2 * xt2 + b2 - r * xt1);

    // softmax with the max subtracted
    let (a1, a2) = (consts.beta * u1, consts.beta * u2);
    let m = a1.max(a2);
    let (e1, e2) = ((a1 - m).exp(), (a2 - m).exp());
    let z = e1 + e2;
    let n1 = e1 / z;
    let n2 = 1.0 - n1;

    let eps: f64 = StandardNormal.sample(rng);
    let next = (n1 * (consts.g1 * xt + consts.b1) + n2 * (g2 * xt + b2)) / r + consts.noise_std * eps;
    if !next.is_finite() || next.abs() > DIVERGENCE_LIMIT {
        return Err(Error::BhDiverged { tick: state.tick + 1 });
    }
    Ok(BhState {
        x: [next, xt, xt1],
        n: [n1, n2],
        tick: state.tick + 1,
    })
}

/// Generates consecutive windows of price deviations.
#[derive(Debug, Clone)]
pub struct BrockHommes {
    state: BhState,
    g2: f64,
    b2: f64,
    consts: BhConstants,
}

impl BrockHommes {
    pub fn new(theta: &[f64], consts: BhConstants) -> Self {
        Self {
            state: BhState::initial(&consts),
            g2: theta[0],
            b2: theta[1],
            consts,
        }
    }

    pub fn state(&self) -> &BhState {
        &self.state
    }

    pub fn fill<R: rand::Rng + ?Sized>(&mut self, out: &mut [f64], rng: &mut R) -> Result<()> {
        for slot in out.iter_mut() {
            self.state = bh_step(&self.state, self.g2, self.b2, &self.consts, rng)?;
            *slot = self.state.price();
        }
        Ok(())
    }
}
