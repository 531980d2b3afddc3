//! Work tradeoff of erasing a uniformly random bit with error probability `epsilon`.
//!
//! A level-preserving erasure of a qubit with degenerate levels sends both
//! inputs to 0 with probability `1 - epsilon` and to 1 otherwise. The
//! Gibbs-stochastic condition on each output reads
//! `e^{beta w0} + e^{beta w1} = 1/(1 - epsilon)` (success branches) and
//! `e^{beta wbar0} + e^{beta wbar1} = 1/epsilon` (failure branches).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::thermo::ThermalContext;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LandauerSpec {
    pub epsilon: f64,
    pub w0: f64,
    pub w1: f64,
    /// Failure-branch works; unused when `epsilon = 0`.
    pub wbar0: f64,
    pub wbar1: f64,
}

impl LandauerSpec {
    /// Equal works on both success branches and on both failure branches.
    pub fn symmetric(epsilon: f64, ctx: &ThermalContext) -> Result<Self> {
        check_epsilon(epsilon)?;
        let t = ctx.temperature();
        let w = t * (1.0 / (2.0 * (1.0 - epsilon))).ln();
        let wbar = if epsilon > 0.0 { t * (1.0 / (2.0 * epsilon)).ln() } else { f64::INFINITY };
        Ok(Self {
            epsilon,
            w0: w,
            w1: w,
            wbar0: wbar,
            wbar1: wbar,
        })
    }

    /// Largest violation of the two branch constraints.
    pub fn constraint_residual(&self, ctx: &ThermalContext) -> f64 {
        let b = ctx.beta();
        let success = ((b * self.w0).exp() + (b * self.w1).exp() - 1.0 / (1.0 - self.epsilon)).abs();
        let failure = if self.epsilon > 0.0 {
            ((b * self.wbar0).exp() + (b * self.wbar1).exp() - 1.0 / self.epsilon).abs()
        } else {
            0.0
        };
        success.max(failure)
    }

    pub fn mean_work(&self) -> f64 {
        let success = (1.0 - self.epsilon) * 0.5 * (self.w0 + self.w1);
        if self.epsilon > 0.0 {
            success + self.epsilon * 0.5 * (self.wbar0 + self.wbar1)
        } else {
            success
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LandauerPoint {
    pub w0: f64,
    /// `None` outside the domain `e^{beta w0} < 1/(1 - epsilon)`.
    pub w1: Option<f64>,
    pub mean_work: Option<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandauerCurve {
    pub epsilon: f64,
    /// Symmetric failure-branch work `T ln(1/(2 epsilon))`; absent at `epsilon = 0`.
    pub wbar: Option<f64>,
    pub points: Vec<LandauerPoint>,
    /// Feasible point of least average work spent, i.e. largest `mean_work`.
    pub least_cost: Option<LandauerPoint>,
    /// Every feasible point has `w0 < 0` and `w1 < 0`.
    pub all_negative: bool,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Argument(format!("epsilon must lie in [0, 1), got {epsilon}")));
    }
    Ok(())
}

/// Solves the success constraint for `w1` at each `w0` and reports the mean work.
///
/// Work counts as yield, so erasure has negative mean work and the cheapest
/// protocol is the one with the largest mean work.
pub fn landauer_tradeoff(epsilon: f64, ctx: &ThermalContext, w0_grid: &[f64]) -> Result<LandauerCurve> {
    check_epsilon(epsilon)?;
    let t = ctx.temperature();
    let wbar = (epsilon > 0.0).then(|| t * (1.0 / (2.0 * epsilon)).ln());
    let failure_cost = wbar.map_or(0.0, |w| epsilon * w);
    let points: Vec<LandauerPoint> = w0_grid
        .iter()
        .map(|&w0| {
            let rest = 1.0 / (1.0 - epsilon) - (ctx.beta() * w0).exp();
            if rest > 0.0 && w0.is_finite() {
                let w1 = t * rest.ln();
                LandauerPoint {
                    w0,
                    w1: Some(w1),
                    mean_work: Some((1.0 - epsilon) * 0.5 * (w0 + w1) + failure_cost),
                    feasible: true,
                }
            } else {
                LandauerPoint {
                    w0,
                    w1: None,
                    mean_work: None,
                    feasible: false,
                }
            }
        })
        .collect();
    let least_cost = points
        .iter()
        .filter(|p| p.feasible)
        .max_by(|a, b| a.mean_work.unwrap().total_cmp(&b.mean_work.unwrap()))
        .copied();
    let all_negative = points
        .iter()
        .filter(|p| p.feasible)
        .all(|p| p.w0 < 0.0 && p.w1.unwrap() < 0.0);
    Ok(LandauerCurve {
        epsilon,
        wbar,
        points,
        least_cost,
        all_negative,
    })
}

/// `w_sym + k h` for `k` in `-256..64`, with `h = T ln 2 / 64` and `w_sym`
/// the symmetric success-branch work. The grid stops one step short of the
/// domain edge `w_sym + T ln 2`.
pub fn landauer_sweep_grid(epsilon: f64, ctx: &ThermalContext) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    let t = ctx.temperature();
    let w_sym = t * (1.0 / (2.0 * (1.0 - epsilon))).ln();
    let h = t * std::f64::consts::LN_2 / 64.0;
    Ok((-256..64).map(|k| w_sym + k as f64 * h).collect())
}
