//! Dense-matrix quantum layer: energy-conserving unitaries on system, bath
//! and a cyclic weight, their channels, and quantum fluctuation identities.

mod channel;
mod identities;
mod linalg;
mod weight;

pub use channel::{backward_dual_closed_form, channels_from_unitary, system_bath_channel, QuantumChannel};
pub use identities::{
    check_quantum_gibbs_stochastic, classical_quantum_identities, induced_classical_kernel, quantum_crooks_check,
    quantum_identities, tpm_check, unitality_error, QuantumCrooksReport, QuantumIdentityReport, TpmReport,
    FULL_RANK_ETA, QUASI_CLASSICAL_TOL,
};
pub use linalg::{CMatrix, DensityOperator, Eigen, GibbsSuperoperator, HermitianOperator, C64};
pub use weight::{
    build_energy_conserving_unitary, random_quasi_classical_unitary, random_unitary, EnergyConservingUnitary,
    WeightLadder,
};
