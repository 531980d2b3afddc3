//! Problem documents: JSON schema, validation and conversion to model types.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{random_dyadic_kernel, random_kernel, WorkGrid, WorkKernel, ROW_TOL};
use crate::majorize::WorkShiftForm;
use crate::thermo::{DiagState, EnergySpectrum, Level, ThermalContext};

pub const DEFAULT_TOL: f64 = 1e-10;

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelDoc {
    pub label: String,
    pub energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub levels: Vec<LevelDoc>,
}

/// `[s_label, s'_label, w, p]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEntry(pub String, pub String, pub f64, pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Seeded Gibbs-stochastic kernel on the document grid.
    RandomKernel,
    /// Seeded dyadic kernel; energies must be multiples of `T ln 2`.
    Dyadic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorDoc {
    pub kind: GeneratorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denom_bits: Option<u32>,
}

/// Work values `alpha[s'] - gamma[s]`, keyed by level label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftDoc {
    pub gamma: BTreeMap<String, f64>,
    pub alpha: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathDoc {
    pub half_range: u32,
    pub denom_bits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderDoc {
    pub dim: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitaryKind {
    #[default]
    Random,
    QuasiClassical,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDoc {
    Position(usize),
    Momentum(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumDoc {
    pub bath: Vec<f64>,
    pub ladder: LadderDoc,
    #[serde(default)]
    pub unitary: UnitaryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightDoc>,
    /// Pure system state `[re, im]` per level; overrides level probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub beta: f64,
    pub initial: SystemDoc,
    #[serde(default, rename = "final", skip_serializing_if = "Option::is_none")]
    pub final_: Option<SystemDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<KernelEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<ShiftDoc>,
    /// Gibbs sums may fall short of one (exact erasure to pure states).
    #[serde(default, skip_serializing_if = "is_false")]
    pub closure: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath: Option<BathDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantum: Option<QuantumDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn invalid(path: impl Into<String>, message: impl std::fmt::Display) -> Error {
    Error::Validation {
        path: path.into(),
        message: message.to_string(),
    }
}

/// Parses and validates a JSON problem document.
pub fn parse_problem(text: &str) -> Result<ProblemDocument> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ProblemDocument = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    doc.validate()?;
    Ok(doc)
}

impl ProblemDocument {
    /// Canonical serialization: fixed key order, 17-digit floats.
    pub fn to_canonical_json(&self) -> Result<String> {
        super::format::to_json(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.context()?;
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        let initial = self.initial_spectrum()?;
        self.initial_state()?;
        let final_ = self.final_spectrum()?;
        self.final_state()?;
        if let Some(grid) = &self.grid {
            WorkGrid::new(grid.clone()).map_err(|e| invalid("grid", e))?;
        }
        if let Some(entries) = &self.kernel {
            if self.generator.is_some() {
                return Err(invalid("generator", "give either kernel entries or a generator"));
            }
            self.kernel_from_entries(entries, &initial, &final_)?;
        }
        if let Some(g) = &self.generator {
            if g.kind == GeneratorKind::RandomKernel && self.grid.is_none() {
                return Err(invalid("generator", "random_kernel needs a grid"));
            }
        }
        if self.shift.is_some() {
            self.shift_form()?;
        }
        if let Some(eps) = self.epsilon {
            if !(0.0..1.0).contains(&eps) {
                return Err(invalid("epsilon", format!("must lie in [0, 1), got {eps}")));
            }
        }
        if let Some(n) = self.samples {
            if n <= 0 {
                return Err(invalid("samples", format!("must be positive, got {n}")));
            }
        }
        if let Some(q) = &self.quantum {
            if let Some(a) = &q.amplitudes {
                if a.len() != initial.len() {
                    return Err(invalid("quantum.amplitudes", format!("expected {} entries, got {}", initial.len(), a.len())));
                }
            }
        }
        Ok(())
    }

    pub fn context(&self) -> Result<ThermalContext> {
        ThermalContext::new(self.beta).map_err(|e| invalid("beta", e))
    }

    fn spectrum(sys: &SystemDoc, path: &str) -> Result<EnergySpectrum> {
        EnergySpectrum::new(
            sys.levels
                .iter()
                .map(|l| Level {
                    label: l.label.clone(),
                    energy: l.energy,
                })
                .collect(),
        )
        .map_err(|e| invalid(format!("{path}.levels"), e))
    }

    fn state(sys: &SystemDoc, path: &str) -> Result<Option<DiagState>> {
        let given = sys.levels.iter().filter(|l| l.prob.is_some()).count();
        if given == 0 {
            return Ok(None);
        }
        if given != sys.levels.len() {
            return Err(invalid(format!("{path}.levels"), "give a probability for every level or for none"));
        }
        for (i, l) in sys.levels.iter().enumerate() {
            let p = l.prob.unwrap();
            if !(p.is_finite() && p >= 0.0) {
                return Err(invalid(format!("{path}.levels[{i}].prob"), format!("negative or non-finite probability {p}")));
            }
        }
        DiagState::new(sys.levels.iter().map(|l| l.prob.unwrap()).collect())
            .map(Some)
            .map_err(|e| invalid(format!("{path}.levels"), e))
    }

    pub fn initial_spectrum(&self) -> Result<EnergySpectrum> {
        Self::spectrum(&self.initial, "initial")
    }

    pub fn initial_state(&self) -> Result<Option<DiagState>> {
        Self::state(&self.initial, "initial")
    }

    /// Defaults to the initial spectrum.
    pub fn final_spectrum(&self) -> Result<EnergySpectrum> {
        match &self.final_ {
            Some(f) => Self::spectrum(f, "final"),
            None => self.initial_spectrum(),
        }
    }

    pub fn final_state(&self) -> Result<Option<DiagState>> {
        match &self.final_ {
            Some(f) => Self::state(f, "final"),
            None => Ok(None),
        }
    }

    pub fn require_initial_state(&self) -> Result<DiagState> {
        self.initial_state()?
            .ok_or_else(|| invalid("initial.levels", "this command needs level probabilities"))
    }

    pub fn require_final_state(&self) -> Result<DiagState> {
        self.final_state()?
            .ok_or_else(|| invalid("final.levels", "this command needs final level probabilities"))
    }

    pub fn work_grid(&self) -> Result<Option<WorkGrid>> {
        self.grid
            .as_ref()
            .map(|g| WorkGrid::new(g.clone()).map_err(|e| invalid("grid", e)))
            .transpose()
    }

    fn kernel_from_entries(
        &self,
        entries: &[KernelEntry],
        initial: &EnergySpectrum,
        final_: &EnergySpectrum,
    ) -> Result<WorkKernel> {
        let grid = match self.work_grid()? {
            Some(g) => g,
            None => WorkGrid::new(entries.iter().map(|e| e.2).collect()).map_err(|e| invalid("kernel", e))?,
        };
        let mut keyed = Vec::with_capacity(entries.len());
        for (i, KernelEntry(s, sp, w, p)) in entries.iter().enumerate() {
            let s = initial
                .index_of(s)
                .ok_or_else(|| invalid(format!("kernel[{i}][0]"), format!("unknown initial level '{s}'")))?;
            let sp = final_
                .index_of(sp)
                .ok_or_else(|| invalid(format!("kernel[{i}][1]"), format!("unknown final level '{sp}'")))?;
            let k = grid
                .index_of(*w)
                .ok_or_else(|| invalid(format!("kernel[{i}][2]"), format!("work value {w} is not on the grid")))?;
            if !(p.is_finite() && *p >= 0.0) {
                return Err(invalid(format!("kernel[{i}][3]"), format!("negative or non-finite probability {p}")));
            }
            keyed.push(((s, sp, k), *p));
        }
        let kernel = WorkKernel::unnormalized(initial.clone(), final_.clone(), grid, keyed).map_err(|e| invalid("kernel", e))?;
        for (s, sum) in kernel.row_sums().into_iter().enumerate() {
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(invalid("kernel", format!("row '{}' sums to {sum}", initial.label(s))));
            }
        }
        Ok(kernel)
    }

    /// Kernel from explicit entries or from the seeded generator.
    pub fn kernel(&self) -> Result<Option<WorkKernel>> {
        let initial = self.initial_spectrum()?;
        let final_ = self.final_spectrum()?;
        if let Some(entries) = &self.kernel {
            return self.kernel_from_entries(entries, &initial, &final_).map(Some);
        }
        let Some(g) = &self.generator else {
            return Ok(None);
        };
        let ctx = self.context()?;
        match g.kind {
            GeneratorKind::RandomKernel => {
                let grid = self.work_grid()?.ok_or_else(|| invalid("grid", "random_kernel needs a grid"))?;
                random_kernel(&initial, &final_, &grid, &ctx, self.seed).map(Some)
            }
            GeneratorKind::Dyadic => {
                let delta = ctx.temperature() * std::f64::consts::LN_2;
                let units = |sp: &EnergySpectrum, path: &str| -> Result<Vec<i64>> {
                    sp.energies()
                        .iter()
                        .map(|e| {
                            let x = e / delta;
                            if (x - x.round()).abs() > 1e-9 {
                                Err(invalid(path, format!("energy {e} is not a multiple of T ln 2")))
                            } else {
                                Ok(x.round() as i64)
                            }
                        })
                        .collect()
                };
                let iu = units(&initial, "initial.levels")?;
                let fu = units(&final_, "final.levels")?;
                random_dyadic_kernel(&iu, &fu, delta, &ctx, g.denom_bits.unwrap_or(8), self.seed).map(Some)
            }
        }
    }

    pub fn require_kernel(&self) -> Result<WorkKernel> {
        self.kernel()?
            .ok_or_else(|| invalid("kernel", "this command needs kernel entries or a generator"))
    }

    pub fn shift_form(&self) -> Result<Option<WorkShiftForm>> {
        let Some(shift) = &self.shift else {
            return Ok(None);
        };
        let pick = |map: &BTreeMap<String, f64>, sp: &EnergySpectrum, path: &str| -> Result<Vec<f64>> {
            if map.len() != sp.len() {
                return Err(invalid(path, format!("expected {} labels, got {}", sp.len(), map.len())));
            }
            sp.levels()
                .iter()
                .map(|l| {
                    map.get(&l.label)
                        .copied()
                        .ok_or_else(|| invalid(path, format!("missing level '{}'", l.label)))
                })
                .collect()
        };
        let gamma = pick(&shift.gamma, &self.initial_spectrum()?, "shift.gamma")?;
        let alpha = pick(&shift.alpha, &self.final_spectrum()?, "shift.alpha")?;
        WorkShiftForm::new(gamma, alpha).map(Some).map_err(|e| invalid("shift", e))
    }
}

/// Labelled quadruples of a kernel, in key order.
pub fn kernel_entries(kernel: &WorkKernel) -> Vec<KernelEntry> {
    kernel
        .iter()
        .map(|((s, sp, k), p)| {
            KernelEntry(
                kernel.initial().label(s).to_string(),
                kernel.final_spectrum().label(sp).to_string(),
                kernel.grid().value(k),
                p,
            )
        })
        .collect()
}
