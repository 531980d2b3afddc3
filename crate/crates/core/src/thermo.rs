//! Spectra, quasi-classical states and their thermodynamic summaries.
//!
//! Units have `k_B = 1`, so the temperature is `T = 1 / beta` and entropies
//! are in nats. All types are immutable once constructed.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(p) = 1` accepted by [`DiagState::new`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Inverse temperature of the reservoir.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalContext {
    beta: f64,
}

impl ThermalContext {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Context(format!("beta must be positive and finite, got {beta}")));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }

    /// Boltzmann factor `exp(-beta * energy)`.
    pub fn boltzmann(&self, energy: f64) -> f64 {
        (-self.beta * energy).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub label: String,
    pub energy: f64,
}

/// Ordered energy levels with unique labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySpectrum {
    levels: Vec<Level>,
}

impl EnergySpectrum {
    pub fn new(levels: Vec<Level>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Spectrum("spectrum must contain at least one level".into()));
        }
        let mut seen = HashSet::new();
        for level in &levels {
            if !level.energy.is_finite() {
                return Err(Error::Spectrum(format!(
                    "level '{}' has non-finite energy {}",
                    level.label, level.energy
                )));
            }
            if !seen.insert(level.label.as_str()) {
                return Err(Error::Spectrum(format!("duplicate level label '{}'", level.label)));
            }
        }
        Ok(Self { levels })
    }

    /// Spectrum with labels `"0"`, `"1"`, ...
    pub fn from_energies(energies: &[f64]) -> Result<Self> {
        Self::new(
            energies
                .iter()
                .enumerate()
                .map(|(i, &energy)| Level {
                    label: i.to_string(),
                    energy,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn energy(&self, index: usize) -> f64 {
        self.levels[index].energy
    }

    pub fn energies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.levels[index].label
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.label == label)
    }

    pub fn partition_function(&self, ctx: &ThermalContext) -> f64 {
        self.levels.iter().map(|l| ctx.boltzmann(l.energy)).sum()
    }

    /// Same labels, energies replaced by `energy + offset[i]`.
    pub fn shifted(&self, offsets: &[f64]) -> Result<Self> {
        if offsets.len() != self.len() {
            return Err(Error::dim("spectrum shift", self.len(), offsets.len()));
        }
        Self::new(
            self.levels
                .iter()
                .zip(offsets)
                .map(|(l, o)| Level {
                    label: l.label.clone(),
                    energy: l.energy + o,
                })
                .collect(),
        )
    }
}

/// Populations of a quasi-classical (energy-diagonal) state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagState {
    probs: Vec<f64>,
}

impl DiagState {
    /// Validates nonnegativity and normalization to within [`NORMALIZATION_TOL`].
    /// Inputs are never silently renormalized; see [`DiagState::normalized`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Distribution("empty distribution".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Distribution(format!("entry {i} is {p}")));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Distribution(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Explicit renormalization of nonnegative weights.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || !(total > 0.0) {
            return Err(Error::Distribution("weights must be nonnegative with positive sum".into()));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Caller guarantees the invariants up to its own tolerance.
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn gibbs(spectrum: &EnergySpectrum, ctx: &ThermalContext) -> Self {
        let weights: Vec<f64> = spectrum.levels().iter().map(|l| ctx.boltzmann(l.energy)).collect();
        let z: f64 = weights.iter().sum();
        Self {
            probs: weights.into_iter().map(|w| w / z).collect(),
        }
    }

    pub fn uniform(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Distribution("empty distribution".into()));
        }
        Ok(Self {
            probs: vec![1.0 / dim as f64; dim],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_full_support(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub fn check_aligned(&self, spectrum: &EnergySpectrum) -> Result<()> {
        if self.len() != spectrum.len() {
            return Err(Error::dim("state/spectrum alignment", spectrum.len(), self.len()));
        }
        Ok(())
    }

    /// Shannon entropy in nats with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    pub fn mean_energy(&self, spectrum: &EnergySpectrum) -> f64 {
        self.probs.iter().zip(spectrum.levels()).map(|(p, l)| p * l.energy).sum()
    }

    /// `F = <H> - T S`.
    pub fn free_energy(&self, spectrum: &EnergySpectrum, ctx: &ThermalContext) -> f64 {
        self.mean_energy(spectrum) - ctx.temperature() * self.entropy()
    }

    /// Largest absolute deviation from the Gibbs populations.
    pub fn distance_to_gibbs(&self, spectrum: &EnergySpectrum, ctx: &ThermalContext) -> f64 {
        let gibbs = Self::gibbs(spectrum, ctx);
        self.probs
            .iter()
            .zip(gibbs.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `(1 - eta) * self + eta * other`.
    pub fn mix(&self, other: &DiagState, eta: f64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::dim("state mixture", self.len(), other.len()));
        }
        Self::normalized(
            self.probs
                .iter()
                .zip(other.probs())
                .map(|(a, b)| (1.0 - eta) * a + eta * b)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermoSummary {
    pub partition_function: f64,
    pub entropy: f64,
    pub free_energy: f64,
    pub gibbs: DiagState,
}

pub fn thermo_summary(
    spectrum: &EnergySpectrum,
    ctx: &ThermalContext,
    state: &DiagState,
) -> Result<ThermoSummary> {
    state.check_aligned(spectrum)?;
    Ok(ThermoSummary {
        partition_function: spectrum.partition_function(ctx),
        entropy: state.entropy(),
        free_energy: state.free_energy(spectrum, ctx),
        gibbs: DiagState::gibbs(spectrum, ctx),
    })
}

/// Per-level free energies `f_s = E_s + T ln P(s)`; unpopulated levels hold
/// `f64::NEG_INFINITY` and are excluded from the mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FineGrainedFreeEnergy {
    pub values: Vec<f64>,
    pub mean: f64,
}

impl FineGrainedFreeEnergy {
    /// `exp(beta f_s)`, which is `P(s) exp(beta E_s)` and vanishes on empty levels.
    pub fn exp_beta(&self, ctx: &ThermalContext) -> Vec<f64> {
        self.values.iter().map(|f| (ctx.beta() * f).exp()).collect()
    }
}

pub fn fine_grained_free_energy(
    state: &DiagState,
    spectrum: &EnergySpectrum,
    ctx: &ThermalContext,
) -> Result<FineGrainedFreeEnergy> {
    state.check_aligned(spectrum)?;
    let t = ctx.temperature();
    let values: Vec<f64> = state
        .probs()
        .iter()
        .zip(spectrum.levels())
        .map(|(&p, l)| if p > 0.0 { l.energy + t * p.ln() } else { f64::NEG_INFINITY })
        .collect();
    let mean = state
        .probs()
        .iter()
        .zip(&values)
        .filter(|(&p, _)| p > 0.0)
        .map(|(p, f)| p * f)
        .sum();
    Ok(FineGrainedFreeEnergy { values, mean })
}
