//! Compilation to a purely path-encoded circuit.
//!
//! Every `(subsystem, rail, internal)` mode becomes its own path. Gates that
//! only move photons between internal states and rails become path
//! permutations, internal-state Fourier gates become multiport splitters and
//! beam splitters are kept.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockState, LinearMap, ModeDescriptor, ModeId, ModeKind, ModeRegistry};
use crate::gates::{gate_rewire, Circuit, DetectorGroup, GateKind, GateSpec};
use crate::ghz::GhzCircuitPlan;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultirailCircuit {
    pub circuit: Circuit,
    /// `path_of[m]` is the path carrying original mode `m`.
    pub path_of: Vec<ModeId>,
    pub output_wires: Vec<Vec<ModeId>>,
}

impl MultirailCircuit {
    pub fn gate_count(&self) -> usize {
        self.circuit.ops.len()
    }

    pub fn mode_count(&self) -> usize {
        self.circuit.registry.len()
    }

    pub fn path(&self, m: ModeId) -> ModeId {
        self.path_of[m.0]
    }

    /// Moves a state of the original circuit onto the paths.
    pub fn lift_state(&self, state: &FockState) -> Result<FockState> {
        state.relabel(&self.circuit.registry, |m| self.path(m))
    }

    /// One element per line: `PERM a:b ...`, `FOURIER p...`, `BS p sink t=..`,
    /// then the `DETECT` groups and `OUTPUT` paths.
    pub fn netlist(&self) -> String {
        let mut s = String::new();
        let c = &self.circuit;
        let _ = writeln!(s, "# N={} d={} paths={} ops={}", c.n, c.d, self.mode_count(), self.gate_count());
        for op in &c.ops {
            match op.kind {
                GateKind::Rewire => {
                    let moved: Vec<String> = op
                        .permutation
                        .iter()
                        .flatten()
                        .filter(|(a, b)| a != b)
                        .map(|(a, b)| format!("{a}:{b}"))
                        .collect();
                    if !moved.is_empty() {
                        let _ = writeln!(s, "PERM {}", moved.join(" "));
                    }
                }
                GateKind::FourierPort => {
                    let _ = writeln!(s, "FOURIER {}", join(&op.binding));
                }
                GateKind::BeamSplitter => {
                    let _ = writeln!(s, "BS {} t={:.12}", join(&op.binding), op.t.unwrap_or(1.0));
                }
                other => {
                    let _ = writeln!(s, "# unexpected {}", other.name());
                }
            }
        }
        for g in &c.detector_groups {
            let _ = writeln!(s, "DETECT {}", join(&g.modes));
        }
        for w in &self.output_wires {
            let _ = writeln!(s, "OUTPUT {}", join(w));
        }
        s
    }
}

fn join(modes: &[ModeId]) -> String {
    modes.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ")
}

/// Path of `(j, k, s)`: the `d * d` paths of a subsystem are ordered by
/// internal state, then rail.
fn path_index(d: usize, j: usize, k: usize, s: usize) -> usize {
    j * d * d + s * d + k
}

fn path_registry(plan: &GhzCircuitPlan) -> Result<(ModeRegistry, Vec<ModeId>)> {
    let d = plan.d;
    let src = plan.registry();
    let mut path_of = vec![ModeId(0); src.len()];
    let mut modes: Vec<Option<ModeDescriptor>> = vec![None; src.len()];
    let system = plan.n * d * d;
    let mut next_sink = system;
    for m in src.modes() {
        let id = match (m.kind, m.subsystem, m.rail, m.internal) {
            (ModeKind::System, Some(j), Some(k), Some(s)) => path_index(d, j, k, s),
            _ => {
                next_sink += 1;
                next_sink - 1
            }
        };
        if id >= src.len() {
            return Err(Error::Unsupported("registry is not a scheme grid".into()));
        }
        path_of[m.id.0] = ModeId(id);
        let desc = match (m.kind, m.subsystem, m.rail, m.internal) {
            (ModeKind::System, Some(j), Some(k), Some(s)) => ModeDescriptor {
                id: ModeId(id),
                kind: ModeKind::System,
                subsystem: Some(j),
                rail: Some(s * d + k),
                internal: Some(0),
                label: format!("p{j}[{}]", s * d + k),
            },
            _ => ModeDescriptor { id: ModeId(id), ..m.clone() },
        };
        modes[id] = Some(desc);
    }
    let modes = modes
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Unsupported("registry is not a scheme grid".into()))?;
    Ok((ModeRegistry::from_modes(modes)?, path_of))
}

fn permutation_pairs(map: &LinearMap) -> Result<Vec<(ModeId, ModeId)>> {
    let m = map.matrix();
    let mut pairs = Vec::with_capacity(m.ncols());
    for (c, &from) in map.input_modes().iter().enumerate() {
        let rows: Vec<usize> = (0..m.nrows()).filter(|&r| m[(r, c)].norm() > 0.0).collect();
        match rows.as_slice() {
            &[r] if (m[(r, c)] - Complex64::new(1.0, 0.0)).norm() < 1e-15 => {
                pairs.push((from, map.output_modes()[r]))
            }
            _ => return Err(Error::Unsupported("gate is not a mode permutation".into())),
        }
    }
    Ok(pairs)
}

/// Rewrites each gate of `plan` onto paths.
pub fn compile_multirail(plan: &GhzCircuitPlan) -> Result<MultirailCircuit> {
    let (registry, path_of) = path_registry(plan)?;
    let registry = Arc::new(registry);
    let p = |m: ModeId| path_of[m.0];
    let src = &plan.circuit;
    let mut circ = Circuit::new(src.n, src.d, Arc::clone(&registry));
    for op in &src.ops {
        let compiled = match op.kind {
            GateKind::Fourier | GateKind::FourierPort => {
                GateSpec::fourier_port(op.d, op.binding.iter().map(|&m| p(m)).collect())
            }
            GateKind::CnD | GateKind::CnDInverse | GateKind::Shift | GateKind::Rewire => {
                let pairs = permutation_pairs(&op.linear_map()?)?;
                gate_rewire(pairs.into_iter().map(|(a, b)| (p(a), p(b))).collect())?
            }
            GateKind::BeamSplitter => {
                let t = op.t.ok_or_else(|| Error::Binding("BS needs a transmissivity".into()))?;
                GateSpec::beam_splitter(t, p(op.binding[0]), p(op.binding[1]))
            }
        };
        circ.push(compiled);
    }
    circ.detector_groups = src
        .detector_groups
        .iter()
        .map(|g| DetectorGroup::fourier(g.modes.iter().map(|&m| p(m)).collect()))
        .collect();
    circ.sinks = src.sinks.iter().map(|&m| p(m)).collect();
    circ.outputs = src.outputs.iter().map(|&m| p(m)).collect();
    circ.validate()?;
    let output_wires = plan.output_wires.iter().map(|w| w.iter().map(|&m| p(m)).collect()).collect();
    Ok(MultirailCircuit { circuit: circ, path_of, output_wires })
}

/// Permutation identifying each original mode with its path.
pub fn relabel_isometry(plan: &GhzCircuitPlan, compiled: &MultirailCircuit) -> Result<LinearMap> {
    let n = plan.registry().len();
    if compiled.mode_count() != n || compiled.path_of.len() != n {
        return Err(Error::Domain(format!(
            "registries differ in size: {n} modes vs {} paths",
            compiled.mode_count()
        )));
    }
    let pairs: Vec<(ModeId, ModeId)> = (0..n).map(|i| (ModeId(i), compiled.path_of[i])).collect();
    LinearMap::permutation(&pairs)
}

/// True when every op only permutes paths, splits `d` paths with a Fourier
/// port or is a two-path beam splitter.
pub fn is_path_only(c: &Circuit) -> bool {
    c.ops.iter().all(|op| match op.kind {
        GateKind::Rewire => op.linear_map().and_then(|m| permutation_pairs(&m)).is_ok(),
        GateKind::FourierPort => op.binding.len() == op.d,
        GateKind::BeamSplitter => op.binding.len() == 2,
        _ => false,
    })
}

/// `P U P^T` for a permutation map `P` given as `from -> to` pairs.
pub fn conjugate(u: &DMatrix<Complex64>, p: &LinearMap) -> Result<DMatrix<Complex64>> {
    let n = u.nrows();
    let pm = p.embed(n)?;
    Ok(&pm * u * pm.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::flatten;
    use crate::ghz::build_ghz_circuit;

    #[test]
    fn qubit_fourier_is_balanced_splitter() {
        let plan = build_ghz_circuit(2, 2, 1.0).unwrap();
        let mr = compile_multirail(&plan).unwrap();
        let first = &mr.circuit.ops[0];
        assert_eq!(first.kind, GateKind::FourierPort);
        let m = first.linear_map().unwrap();
        let h = 1.0 / 2f64.sqrt();
        for v in m.matrix().iter() {
            assert!((v.norm() - h).abs() < 1e-15);
        }
    }

    #[test]
    fn structure_and_unitary() {
        for (n, d) in [(2, 2), (2, 3), (3, 3)] {
            let plan = build_ghz_circuit(n, d, 0.5).unwrap();
            let mr = compile_multirail(&plan).unwrap();
            assert!(is_path_only(&mr.circuit));
            assert!(!is_path_only(&plan.circuit));
            let p = relabel_isometry(&plan, &mr).unwrap();
            let orig = flatten(&plan.circuit).unwrap();
            let comp = flatten(&mr.circuit).unwrap();
            let conj = conjugate(orig.matrix(), &p).unwrap();
            let diff = (conj - comp.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "({n},{d}) {diff}");
        }
    }

    #[test]
    fn relabel_round_trip() {
        let plan = build_ghz_circuit(2, 3, 0.5).unwrap();
        let mr = compile_multirail(&plan).unwrap();
        let p = relabel_isometry(&plan, &mr).unwrap();
        let n = plan.registry().len();
        let pm = p.embed(n).unwrap();
        assert_eq!(&pm * pm.transpose(), DMatrix::identity(n, n));
        let other = build_ghz_circuit(3, 3, 0.5).unwrap();
        assert!(relabel_isometry(&other, &mr).is_err());
    }

    #[test]
    fn netlist_lines() {
        let plan = build_ghz_circuit(3, 3, 1.0 / 3f64.sqrt()).unwrap();
        let mr = compile_multirail(&plan).unwrap();
        let text = mr.netlist();
        assert_eq!(text.lines().filter(|l| l.starts_with("BS ")).count(), 3);
        assert_eq!(text.lines().filter(|l| l.starts_with("DETECT ")).count(), 6);
        assert!(text.lines().any(|l| l.starts_with("PERM ")));
        assert!(text.contains("t=0.577350269190"));
        for l in text.lines().filter(|l| !l.starts_with('#')) {
            let head = l.split_whitespace().next().unwrap();
            assert!(["PERM", "FOURIER", "BS", "DETECT", "OUTPUT"].contains(&head), "{l}");
        }
    }
}
