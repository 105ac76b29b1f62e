//! Heralded linear-optical preparation of qudit GHZ states.
//!
//! Fock-space simulation, the scheme's circuit builder, herald enumeration
//! with feed-forward corrections, a permanent-based cross-check, path-encoded
//! compilation and a numerical probe of the photon-number bound.

pub mod error;
pub mod fock;
pub mod gates;
pub mod ghz;
pub mod herald;
pub mod multirail;
pub mod permanent;
pub mod probe;

pub use error::{Error, Result};
pub use fock::{FockState, LinearMap, ModeDescriptor, ModeId, ModeKind, ModeRegistry, Occupation};
pub use gates::{flatten, Circuit, DetectorGroup, GateKind, GateSpec};
pub use ghz::{build_ghz_circuit, build_ghz_circuit_with, BsPlacement, GhzCircuitPlan};
pub use herald::{herald_report, plan_report, Correction, Eq7Match, HeraldOutcome, HeraldReport};
pub use multirail::{compile_multirail, MultirailCircuit};
pub use permanent::permanent;
pub use probe::{probe, probe_with, CandidateNetwork, ProbeOptions, ProbeResult};
