//! Monte Carlo estimators for the second-law and Jarzynski equalities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{marginals, WorkKernel};
use crate::thermo::{fine_grained_free_energy, DiagState, ThermalContext};

/// Below this effective sample size the standard error is flagged.
const MIN_EFFECTIVE_SAMPLES: f64 = 100.0;
/// Flag when one draw carries more than this share of the estimate.
const MAX_SINGLE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub s: usize,
    pub s_prime: usize,
    pub w: f64,
    /// `f_s' - f_s + w`; `+inf` when `s` is unpopulated.
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub effective_samples: f64,
    /// The exponential estimator is dominated by rare draws.
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub n: usize,
    pub seed: u64,
    /// `<exp(beta v)>`, expected 1.
    pub second_law: McEstimate,
    /// `<exp(beta (w - f_s))>`, expected `Z'`.
    pub generalized_jarzynski: McEstimate,
    /// Draws came from a proposal mixing the state with the uniform
    /// distribution because the state lacks full support.
    pub importance_sampled: bool,
    #[serde(skip)]
    pub samples: Vec<TrajectorySample>,
}

#[derive(Default)]
struct Accumulator {
    sum: f64,
    sum_sq: f64,
    max: f64,
}

impl Accumulator {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        self.max = self.max.max(x.abs());
    }

    fn finish(&self, n: usize) -> McEstimate {
        let nf = n as f64;
        let mean = self.sum / nf;
        let var = if n > 1 {
            ((self.sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            f64::INFINITY
        };
        let effective_samples = if self.sum_sq > 0.0 { self.sum * self.sum / self.sum_sq } else { nf };
        McEstimate {
            mean,
            std_error: (var / nf).sqrt(),
            effective_samples,
            unreliable: effective_samples < MIN_EFFECTIVE_SAMPLES
                || (self.sum != 0.0 && self.max / self.sum.abs() > MAX_SINGLE_SHARE),
        }
    }
}

/// Draws `n` trajectories `(s, s', w)` by inverse-CDF sampling over the
/// joint distribution in lexicographic entry order.
///
/// For full-support states the estimators are the plain sample means of
/// `exp(beta v)` and `exp(beta (w - f_s))`. Otherwise draws come from
/// `q = (state + uniform) / 2` and each term is divided by `q(s)` in the
/// cancelled form, so the estimates still target 1 and `Z'`. When
/// `keep_samples` is false only the estimates are returned.
pub fn sample_trajectories(
    state: &DiagState,
    kernel: &WorkKernel,
    ctx: &ThermalContext,
    seed: u64,
    n: i64,
    keep_samples: bool,
) -> Result<MonteCarloReport> {
    if n <= 0 {
        return Err(Error::Argument(format!("sample count must be positive, got {n}")));
    }
    let n = n as usize;
    let m = marginals(state, kernel)?;
    let f = fine_grained_free_energy(state, kernel.initial(), ctx)?;
    let f_final = fine_grained_free_energy(&m.final_state, kernel.final_spectrum(), ctx)?;
    let beta = ctx.beta();

    let importance_sampled = !state.is_full_support();
    let d = state.len();
    let q: Vec<f64> = if importance_sampled {
        state.probs().iter().map(|p| 0.5 * (p + 1.0 / d as f64)).collect()
    } else {
        state.probs().to_vec()
    };

    struct Entry {
        s: usize,
        sp: usize,
        w: f64,
        v: f64,
        term_v: f64,
        term_j: f64,
    }
    let mut entries = Vec::new();
    let mut cdf = Vec::new();
    let mut total = 0.0;
    for ((s, sp, k), p) in kernel.iter() {
        let weight = q[s] * p;
        if weight <= 0.0 {
            continue;
        }
        let w = kernel.grid().value(k);
        let (term_v, term_j) = if importance_sampled {
            let e_s = kernel.initial().energy(s);
            (
                m.final_state.probs()[sp] * kernel.gibbs_factor(ctx, s, sp, k) / q[s],
                (beta * (w - e_s)).exp() / q[s],
            )
        } else {
            let v = f_final.values[sp] - f.values[s] + w;
            ((beta * v).exp(), (beta * (w - f.values[s])).exp())
        };
        total += weight;
        cdf.push(total);
        entries.push(Entry {
            s,
            sp,
            w,
            v: f_final.values[sp] - f.values[s] + w,
            term_v,
            term_j,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc_v = Accumulator::default();
    let mut acc_j = Accumulator::default();
    let mut samples = Vec::with_capacity(if keep_samples { n } else { 0 });
    for _ in 0..n {
        let u = rng.random::<f64>() * total;
        let i = cdf.partition_point(|&c| c <= u).min(entries.len() - 1);
        let e = &entries[i];
        acc_v.push(e.term_v);
        acc_j.push(e.term_j);
        if keep_samples {
            samples.push(TrajectorySample {
                s: e.s,
                s_prime: e.sp,
                w: e.w,
                v: e.v,
            });
        }
    }
    Ok(MonteCarloReport {
        n,
        seed,
        second_law: acc_v.finish(n),
        generalized_jarzynski: acc_j.finish(n),
        importance_sampled,
        samples,
    })
}
