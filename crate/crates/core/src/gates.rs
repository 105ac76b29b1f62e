//! Gate constructors and the circuit description they are bound into.
//!
//! Gates bind to explicit mode ids; naming wires is the job of whoever builds
//! the circuit.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockState, LinearMap, ModeId, ModeKind, ModeRegistry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    /// `a†_{k,s} -> a†_{k+s mod d, s}` on a `d x d` (rail, internal) block.
    #[serde(rename = "CN_d")]
    CnD,
    /// `a†_{k,s} -> a†_{k-s mod d, s}`.
    #[serde(rename = "CN_d_inverse")]
    CnDInverse,
    /// Internal-state discrete Fourier transform on `d` modes.
    #[serde(rename = "F_d")]
    Fourier,
    /// Cyclic shift `|k> -> |k+1 mod d>` on `d` modes.
    #[serde(rename = "X_d")]
    Shift,
    /// Beam splitter with amplitude transmissivity `t` into a dedicated sink.
    #[serde(rename = "BS")]
    BeamSplitter,
    /// Mode relabelling.
    #[serde(rename = "Rewire")]
    Rewire,
    /// Path-encoded `d`-port Fourier splitter.
    #[serde(rename = "FourierPort")]
    FourierPort,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::CnD => "CN_d",
            GateKind::CnDInverse => "CN_d_inverse",
            GateKind::Fourier => "F_d",
            GateKind::Shift => "X_d",
            GateKind::BeamSplitter => "BS",
            GateKind::Rewire => "Rewire",
            GateKind::FourierPort => "FourierPort",
        }
    }
}

/// One gate application. `binding` lists the modes the gate acts on in the
/// order its matrix expects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub kind: GateKind,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<(ModeId, ModeId)>>,
    pub binding: Vec<ModeId>,
}

impl GateSpec {
    pub fn cn_d(d: usize, binding: Vec<ModeId>) -> Self {
        Self { kind: GateKind::CnD, d, t: None, permutation: None, binding }
    }

    pub fn cn_d_inverse(d: usize, binding: Vec<ModeId>) -> Self {
        Self { kind: GateKind::CnDInverse, d, t: None, permutation: None, binding }
    }

    pub fn fourier(d: usize, binding: Vec<ModeId>) -> Self {
        Self { kind: GateKind::Fourier, d, t: None, permutation: None, binding }
    }

    pub fn fourier_port(d: usize, binding: Vec<ModeId>) -> Self {
        Self { kind: GateKind::FourierPort, d, t: None, permutation: None, binding }
    }

    pub fn shift(d: usize, binding: Vec<ModeId>) -> Self {
        Self { kind: GateKind::Shift, d, t: None, permutation: None, binding }
    }

    pub fn beam_splitter(t: f64, mode: ModeId, sink: ModeId) -> Self {
        Self { kind: GateKind::BeamSplitter, d: 2, t: Some(t), permutation: None, binding: vec![mode, sink] }
    }

    /// Every mode the gate reads or writes.
    pub fn touched_modes(&self) -> BTreeSet<ModeId> {
        let mut m: BTreeSet<ModeId> = self.binding.iter().copied().collect();
        if let Some(p) = &self.permutation {
            m.extend(p.iter().flat_map(|&(a, b)| [a, b]));
        }
        m
    }

    /// The matrix this gate applies, bound to its modes.
    pub fn linear_map(&self) -> Result<LinearMap> {
        match self.kind {
            GateKind::CnD => gate_cn_d(self.d, &self.binding),
            GateKind::CnDInverse => gate_cn_d_inverse(self.d, &self.binding),
            GateKind::Fourier | GateKind::FourierPort => gate_fourier(self.d, &self.binding),
            GateKind::Shift => gate_x_d(self.d, &self.binding),
            GateKind::BeamSplitter => {
                let t = self.t.ok_or_else(|| Error::Binding("BS needs a transmissivity".into()))?;
                match self.binding.as_slice() {
                    &[mode, sink] => gate_bs(t, mode, sink),
                    _ => Err(Error::Binding("BS binds exactly [mode, sink]".into())),
                }
            }
            GateKind::Rewire => {
                let perm = self
                    .permutation
                    .as_ref()
                    .ok_or_else(|| Error::Binding("Rewire needs a permutation".into()))?;
                LinearMap::permutation(perm)
            }
        }
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn check_d(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::Domain(format!("d must be >= 2, got {d}")));
    }
    Ok(())
}

fn check_len(what: &str, binding: &[ModeId], expected: usize) -> Result<()> {
    if binding.len() != expected {
        return Err(Error::Binding(format!(
            "{what} binds {expected} modes, got {}",
            binding.len()
        )));
    }
    Ok(())
}

fn rail_internal_permutation(d: usize, binding: &[ModeId], step: impl Fn(usize, usize) -> usize) -> Result<LinearMap> {
    check_d(d)?;
    check_len("CN_d", binding, d * d)?;
    let mut m = DMatrix::zeros(d * d, d * d);
    for k in 0..d {
        for s in 0..d {
            m[(step(k, s) * d + s, k * d + s)] = c(1.0);
        }
    }
    LinearMap::square(binding.to_vec(), m)
}

/// Generalized CNOT between a photon's rail (target) and internal state
/// (control). `binding[k * d + s]` is rail `k`, internal state `s`.
pub fn gate_cn_d(d: usize, binding: &[ModeId]) -> Result<LinearMap> {
    rail_internal_permutation(d, binding, |k, s| (k + s) % d)
}

pub fn gate_cn_d_inverse(d: usize, binding: &[ModeId]) -> Result<LinearMap> {
    rail_internal_permutation(d, binding, |k, s| (k + d - s) % d)
}

/// Unitary Fourier matrix `F[r][s] = w^{rs} / sqrt(d)`, `w = exp(2 pi i / d)`.
pub fn fourier_matrix(d: usize) -> DMatrix<Complex64> {
    let norm = 1.0 / (d as f64).sqrt();
    DMatrix::from_fn(d, d, |r, s| {
        Complex64::from_polar(norm, 2.0 * PI * ((r * s) % d) as f64 / d as f64)
    })
}

/// `a†_s -> (1/sqrt d) sum_r w^{sr} a†_r`.
pub fn gate_fourier(d: usize, binding: &[ModeId]) -> Result<LinearMap> {
    check_d(d)?;
    check_len("F_d", binding, d)?;
    LinearMap::square(binding.to_vec(), fourier_matrix(d))
}

pub fn gate_x_d(d: usize, binding: &[ModeId]) -> Result<LinearMap> {
    check_d(d)?;
    check_len("X_d", binding, d)?;
    let mut m = DMatrix::zeros(d, d);
    for k in 0..d {
        m[((k + 1) % d, k)] = c(1.0);
    }
    LinearMap::square(binding.to_vec(), m)
}

/// `a†_mode -> t a†_mode + sqrt(1-t^2) a†_sink`, completed to a unitary on
/// the two-mode block.
pub fn gate_bs(t: f64, mode: ModeId, sink: ModeId) -> Result<LinearMap> {
    if !(0.0..=1.0).contains(&t) || t.is_nan() {
        return Err(Error::Domain(format!("transmissivity must lie in [0, 1], got {t}")));
    }
    let r = (1.0 - t * t).max(0.0).sqrt();
    let m = DMatrix::from_row_slice(2, 2, &[c(t), c(r), c(r), c(-t)]);
    LinearMap::square(vec![mode, sink], m)
}

/// Relabelling gate `from -> to`.
pub fn gate_rewire(permutation: Vec<(ModeId, ModeId)>) -> Result<GateSpec> {
    LinearMap::permutation(&permutation)?;
    let binding = permutation.iter().map(|p| p.0).collect();
    Ok(GateSpec { kind: GateKind::Rewire, d: 0, t: None, permutation: Some(permutation), binding })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorBasis {
    Fourier,
}

/// Number-resolving detectors on the `d` internal modes of one wire. The
/// Fourier part of the detection is an explicit `F_d` gate in the circuit;
/// index `r` of `modes` is detector `r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorGroup {
    pub modes: Vec<ModeId>,
    pub basis: DetectorBasis,
    pub required_count: usize,
}

impl DetectorGroup {
    pub fn fourier(modes: Vec<ModeId>) -> Self {
        Self { modes, basis: DetectorBasis::Fourier, required_count: 1 }
    }
}

/// Ordered gate list bound to a registry, with the heralding detectors and
/// loss ports it declares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub registry: Arc<ModeRegistry>,
    pub ops: Vec<GateSpec>,
    pub detector_groups: Vec<DetectorGroup>,
    pub sinks: Vec<ModeId>,
    /// Modes that carry the heralded state.
    #[serde(default)]
    pub outputs: Vec<ModeId>,
}

impl Circuit {
    pub fn new(n: usize, d: usize, registry: Arc<ModeRegistry>) -> Self {
        Self { n, d, registry, ops: Vec::new(), detector_groups: Vec::new(), sinks: Vec::new(), outputs: Vec::new() }
    }

    pub fn push(&mut self, op: GateSpec) {
        self.ops.push(op);
    }

    pub fn validate(&self) -> Result<()> {
        for op in &self.ops {
            for &m in &op.binding {
                self.registry.check(m)?;
            }
            if let Some(p) = &op.permutation {
                for &(a, b) in p {
                    self.registry.check(a)?;
                    self.registry.check(b)?;
                }
            }
            op.linear_map()?;
        }
        let mut seen = BTreeSet::new();
        for g in &self.detector_groups {
            if g.required_count != 1 {
                return Err(Error::Format("detector groups require exactly one photon".into()));
            }
            for &m in &g.modes {
                self.registry.check(m)?;
                if !seen.insert(m) {
                    return Err(Error::Format(format!("mode {m} is in two detector groups")));
                }
            }
        }
        for &m in &self.outputs {
            self.registry.check(m)?;
            if seen.contains(&m) {
                return Err(Error::Format(format!("output mode {m} is also detected")));
            }
        }
        for &m in &self.sinks {
            self.registry.check(m)?;
            if self.registry.get(m).map(|d| d.kind) != Some(ModeKind::Sink) {
                return Err(Error::Format(format!("mode {m} is declared as a sink but is not one")));
            }
        }
        Ok(())
    }

    /// Evolves `input` through every gate in order.
    pub fn run(&self, input: &FockState) -> Result<FockState> {
        let mut state = input.clone();
        for op in &self.ops {
            state = state.apply_linear(&op.linear_map()?)?;
        }
        Ok(state)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuits are serializable")
    }

    pub fn from_json(text: &str) -> Result<Circuit> {
        let c: Circuit = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

/// The whole circuit as a single unitary on all registry modes.
pub fn flatten(circuit: &Circuit) -> Result<LinearMap> {
    let n = circuit.registry.len();
    let mut u = DMatrix::identity(n, n);
    for op in &circuit.ops {
        u = op.linear_map()?.embed(n)? * u;
    }
    let modes: Vec<ModeId> = (0..n).map(ModeId).collect();
    LinearMap::square(modes, u)
}
