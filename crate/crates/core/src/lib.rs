//! Numerical verification of exact fluctuation relations on small driven
//! Hamiltonian systems: Jarzynski and Crooks relations (classical and
//! two-point-measurement quantum), microreversibility of driven flows and
//! propagators, the Kubo fluctuation-dissipation theorem and the Einstein
//! relation.

pub mod brownian;
pub mod classical;
pub mod error;
pub mod linear_response;
pub mod model;
pub mod quadrature;
pub mod quantum;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use brownian::{BrownianConfig, BrownianRun, EinsteinReport, Estimate};
pub use classical::{Direction, Observable, TrajectoryRecord, WorkEnsemble};
pub use error::{Error, Result};
pub use linear_response::{BohrTerm, ResponseData};
pub use model::{
    time_reverse, CMatrix, ClassicalKind, ClassicalModel, ForceProtocol, Parity, PhasePoint, ProtocolShape,
    QuantumModel, C64,
};
pub use quantum::{TPMDistribution, TpmEntry};
pub use spectral::{spectral_decompose, SpectralDecomposition};
pub use stats::{BinRule, CrooksFit, WorkHistogram};
