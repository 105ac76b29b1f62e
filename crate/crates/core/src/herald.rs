//! Heralding: detector-outcome enumeration, feed-forward correction and the
//! success-probability report.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockState, ModeId, Occupation};
use crate::gates::Circuit;
use crate::ghz::{psuc_formula, GhzCircuitPlan};

/// Outcomes whose corrected fidelity is at least `1 - FID_EPS` count as
/// correctable.
pub const FID_EPS: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct HeraldOutcome {
    /// Fired detector index per group.
    pub pattern: Vec<usize>,
    pub probability: f64,
    /// Normalized state of the undetected, non-sink modes.
    pub conditional: FockState,
}

/// Feed-forward applied to the logical photons: on subsystem `j`, first
/// `X_d^{shifts[j]}`, then the diagonal `phases[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub phases: Vec<Vec<Complex64>>,
    pub shifts: Vec<usize>,
}

impl Correction {
    pub fn identity(n: usize, d: usize) -> Self {
        Self { phases: vec![vec![Complex64::new(1.0, 0.0); d]; n], shifts: vec![0; n] }
    }

    pub fn is_identity(&self) -> bool {
        self.shifts.iter().all(|&s| s == 0)
            && self.phases.iter().flatten().all(|p| (p - Complex64::new(1.0, 0.0)).norm() < 1e-15)
    }

    /// Applies the correction to photons on `output_wires`; other photons are
    /// left alone.
    pub fn apply(&self, state: &FockState, output_wires: &[Vec<ModeId>]) -> Result<FockState> {
        let lookup = LogicalLookup::new(state.registry().len(), output_wires);
        let terms = state.terms().iter().map(|(occ, amp)| {
            let mut a = *amp;
            let photons = occ.photons().map(|m| match lookup.get(m) {
                Some((j, k)) => {
                    let d = output_wires[j].len();
                    let k2 = (k + self.shifts[j]) % d;
                    a *= self.phases[j][k2];
                    output_wires[j][k2]
                }
                None => m,
            });
            let o = Occupation::from_modes(photons.collect::<Vec<_>>());
            (o, a)
        });
        FockState::from_terms(state.registry(), state.photon_count(), terms)
    }
}

#[derive(Clone, Debug)]
pub struct CorrectedOutcome {
    pub outcome: HeraldOutcome,
    pub correction: Correction,
    pub corrected_fidelity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eq7Match {
    Single,
    Aggregate,
    Neither,
}

#[derive(Clone, Debug)]
pub struct HeraldReport {
    pub outcomes: Vec<CorrectedOutcome>,
    /// Probability of the all-zero pattern.
    pub p_single: f64,
    /// Total probability of correctable patterns.
    pub p_aggregate: f64,
    /// Total probability of one photon per group and none in a sink.
    pub p_herald: f64,
    pub eq7_value: Option<f64>,
    pub eq7_match: Eq7Match,
}

#[derive(Serialize)]
struct OutcomeDump<'a> {
    pattern: &'a [usize],
    probability: f64,
    corrected_fidelity: f64,
    correction: &'a Correction,
}

#[derive(Serialize)]
struct ReportDump<'a> {
    p_single: f64,
    p_aggregate: f64,
    p_herald: f64,
    eq7_value: Option<f64>,
    eq7_match: Eq7Match,
    correctable_outcomes: usize,
    outcomes: Vec<OutcomeDump<'a>>,
}

impl HeraldReport {
    pub fn correctable(&self) -> impl Iterator<Item = &CorrectedOutcome> {
        self.outcomes.iter().filter(|o| o.corrected_fidelity >= 1.0 - FID_EPS)
    }

    pub fn outcome(&self, pattern: &[usize]) -> Option<&CorrectedOutcome> {
        self.outcomes
            .binary_search_by(|o| o.outcome.pattern.as_slice().cmp(pattern))
            .ok()
            .map(|i| &self.outcomes[i])
    }

    pub fn to_json(&self) -> serde_json::Value {
        let dump = ReportDump {
            p_single: self.p_single,
            p_aggregate: self.p_aggregate,
            p_herald: self.p_herald,
            eq7_value: self.eq7_value,
            eq7_match: self.eq7_match,
            correctable_outcomes: self.correctable().count(),
            outcomes: self
                .outcomes
                .iter()
                .map(|o| OutcomeDump {
                    pattern: &o.outcome.pattern,
                    probability: o.outcome.probability,
                    corrected_fidelity: o.corrected_fidelity,
                    correction: &o.correction,
                })
                .collect(),
        };
        serde_json::to_value(dump).expect("report is serializable")
    }
}

/// Maps detector modes to `(group, index)` and flags sinks.
struct DetectorLookup {
    group_of: Vec<Option<(usize, usize)>>,
    sink: Vec<bool>,
    groups: usize,
}

impl DetectorLookup {
    fn new(circuit: &Circuit) -> Self {
        let n = circuit.registry.len();
        let mut group_of = vec![None; n];
        for (g, grp) in circuit.detector_groups.iter().enumerate() {
            for (r, m) in grp.modes.iter().enumerate() {
                group_of[m.0] = Some((g, r));
            }
        }
        let mut sink = vec![false; n];
        for m in &circuit.sinks {
            sink[m.0] = true;
        }
        Self { group_of, sink, groups: circuit.detector_groups.len() }
    }

    /// Detector pattern and remaining photons, or `None` if the ket fails the
    /// herald.
    fn classify(&self, occ: &Occupation) -> Option<(Vec<usize>, Occupation)> {
        let mut pattern = vec![usize::MAX; self.groups];
        let mut rest = Vec::new();
        for m in occ.photons() {
            if self.sink[m.0] {
                return None;
            }
            match self.group_of[m.0] {
                Some((g, r)) => {
                    if pattern[g] != usize::MAX {
                        return None;
                    }
                    pattern[g] = r;
                }
                None => rest.push(m),
            }
        }
        if pattern.contains(&usize::MAX) {
            return None;
        }
        Some((pattern, Occupation::from_modes(rest)))
    }
}

/// Splits `state` by detector pattern, keeping kets with exactly one photon
/// per group and none in a sink. Outcomes come in lexicographic pattern order.
pub fn enumerate_outcomes(state: &FockState, circuit: &Circuit) -> Result<Vec<HeraldOutcome>> {
    if !std::sync::Arc::ptr_eq(state.registry(), &circuit.registry) && **state.registry() != *circuit.registry {
        return Err(Error::RegistryMismatch);
    }
    let lookup = DetectorLookup::new(circuit);
    let remaining = state.photon_count().saturating_sub(lookup.groups);
    let mut buckets: BTreeMap<Vec<usize>, Vec<(Occupation, Complex64)>> = BTreeMap::new();
    for (occ, amp) in state.terms() {
        if let Some((pattern, rest)) = lookup.classify(occ) {
            buckets.entry(pattern).or_default().push((rest, *amp));
        }
    }
    let mut out = Vec::with_capacity(buckets.len());
    for (pattern, terms) in buckets {
        let cond = FockState::from_terms(state.registry(), remaining, terms)?;
        let probability = cond.norm_sqr();
        if probability > 0.0 {
            out.push(HeraldOutcome { pattern, probability, conditional: cond.normalized() });
        }
    }
    Ok(out)
}

/// Post-selected evolution of `input` through `circuit`.
#[derive(Clone, Debug)]
pub struct HeraldedEvolution {
    /// Output restricted to kets that pass the herald.
    pub state: FockState,
    /// Squared norm discarded along the way.
    pub rejected: f64,
}

/// Evolves `input` while discarding herald failures as early as possible.
///
/// Gates on disjoint modes commute, so the circuit is reordered: repeatedly,
/// the detector group or sink needing the fewest outstanding gates has those
/// gates run (in their original relative order). Once no remaining gate
/// touches a group or sink, kets with the wrong photon count there are
/// dropped. The surviving state equals the herald projection of
/// [`Circuit::run`].
pub fn evolve_heralded(circuit: &Circuit, input: &FockState) -> Result<HeraldedEvolution> {
    let ops = &circuit.ops;
    let touched: Vec<BTreeSet<ModeId>> = ops.iter().map(|o| o.touched_modes()).collect();
    let mut last_touch: Vec<Option<usize>> = vec![None; circuit.registry.len()];
    for (i, t) in touched.iter().enumerate() {
        for m in t {
            last_touch[m.0] = Some(i);
        }
    }
    let closure = |i: usize, emitted: &[bool]| {
        let mut set = BTreeSet::new();
        let mut stack = vec![i];
        while let Some(k) = stack.pop() {
            if emitted[k] || !set.insert(k) {
                continue;
            }
            stack.extend((0..k).filter(|&p| !emitted[p] && !set.contains(&p) && !touched[p].is_disjoint(&touched[k])));
        }
        set
    };
    let mut targets: Vec<usize> = circuit
        .detector_groups
        .iter()
        .flat_map(|g| g.modes.iter().filter_map(|m| last_touch[m.0]).max())
        .chain(circuit.sinks.iter().filter_map(|m| last_touch[m.0]))
        .collect();
    targets.sort_unstable();
    targets.dedup();

    let mut pruner = Pruner::new(circuit, &last_touch);
    let mut emitted = vec![false; ops.len()];
    let mut state = input.clone();
    let mut rejected = pruner.prune(&mut state, &emitted);
    loop {
        let next = targets
            .iter()
            .filter(|&&i| !emitted[i])
            .map(|&i| closure(i, &emitted))
            .min_by_key(|c| c.len());
        let batch = match next {
            Some(c) => c,
            None => match emitted.iter().position(|e| !e) {
                Some(i) => closure(i, &emitted),
                None => break,
            },
        };
        for k in batch {
            state = state.apply_linear(&ops[k].linear_map()?)?;
            emitted[k] = true;
        }
        rejected += pruner.prune(&mut state, &emitted);
    }
    Ok(HeraldedEvolution { state, rejected })
}

/// Tracks which groups and sinks are final and drops kets that fail them.
struct Pruner<'a> {
    circuit: &'a Circuit,
    last_touch: &'a [Option<usize>],
    group_of: Vec<Option<usize>>,
    group_done: Vec<bool>,
    sink_done: Vec<bool>,
}

impl<'a> Pruner<'a> {
    fn new(circuit: &'a Circuit, last_touch: &'a [Option<usize>]) -> Self {
        let mut group_of = vec![None; circuit.registry.len()];
        for (g, grp) in circuit.detector_groups.iter().enumerate() {
            for m in &grp.modes {
                group_of[m.0] = Some(g);
            }
        }
        Self {
            circuit,
            last_touch,
            group_of,
            group_done: vec![false; circuit.detector_groups.len()],
            sink_done: vec![false; circuit.sinks.len()],
        }
    }

    fn finished(&self, m: ModeId, emitted: &[bool]) -> bool {
        self.last_touch[m.0].is_none_or(|i| emitted[i])
    }

    fn prune(&mut self, state: &mut FockState, emitted: &[bool]) -> f64 {
        let mut new_groups = Vec::new();
        for (g, grp) in self.circuit.detector_groups.iter().enumerate() {
            if !self.group_done[g] && grp.modes.iter().all(|&m| self.finished(m, emitted)) {
                self.group_done[g] = true;
                new_groups.push(g);
            }
        }
        let mut new_sinks = Vec::new();
        for (i, &m) in self.circuit.sinks.iter().enumerate() {
            if !self.sink_done[i] && self.finished(m, emitted) {
                self.sink_done[i] = true;
                new_sinks.push(m);
            }
        }
        if new_groups.is_empty() && new_sinks.is_empty() {
            return 0.0;
        }
        let (kept, dropped) = state.retain(|occ| {
            let mut counts = vec![0usize; new_groups.len()];
            for m in occ.photons() {
                if new_sinks.contains(&m) {
                    return false;
                }
                if let Some(g) = self.group_of[m.0] {
                    if let Some(i) = new_groups.iter().position(|&x| x == g) {
                        counts[i] += 1;
                    }
                }
            }
            counts.iter().all(|&c| c == 1)
        });
        *state = kept;
        dropped
    }
}

/// Probability of kets that fail the herald: a group with zero or several
/// photons, or any photon in a sink.
pub fn rejected_probability(state: &FockState, circuit: &Circuit) -> f64 {
    let lookup = DetectorLookup::new(circuit);
    state
        .terms()
        .iter()
        .filter(|(occ, _)| lookup.classify(occ).is_none())
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

struct LogicalLookup {
    of: Vec<Option<(usize, usize)>>,
}

impl LogicalLookup {
    fn new(n_modes: usize, output_wires: &[Vec<ModeId>]) -> Self {
        let mut of = vec![None; n_modes];
        for (j, wires) in output_wires.iter().enumerate() {
            for (k, m) in wires.iter().enumerate() {
                if m.0 < n_modes {
                    of[m.0] = Some((j, k));
                }
            }
        }
        Self { of }
    }

    fn get(&self, m: ModeId) -> Option<(usize, usize)> {
        self.of.get(m.0).copied().flatten()
    }

    /// Logical values per subsystem when the ket has exactly one photon on
    /// each subsystem's output wires and nothing else.
    fn logical(&self, occ: &Occupation, n: usize) -> Option<Vec<usize>> {
        let mut vals = vec![usize::MAX; n];
        for m in occ.photons() {
            let (j, k) = self.get(m)?;
            if vals[j] != usize::MAX {
                return None;
            }
            vals[j] = k;
        }
        (!vals.contains(&usize::MAX)).then_some(vals)
    }
}

fn unit_phase(z: Complex64) -> Complex64 {
    let n = z.norm();
    if n == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        z / n
    }
}

/// Best local correction mapping `conditional` onto `target`.
///
/// If the logical kets of `conditional` all share one offset pattern
/// `k_j - k_0`, shifts undo the offsets and subsystem 0 absorbs all relative
/// phases, which is optimal over the correction class. Otherwise the identity
/// is returned with the raw overlap.
pub fn solve_correction(
    conditional: &FockState,
    target: &FockState,
    output_wires: &[Vec<ModeId>],
) -> Result<(Correction, f64)> {
    let n = output_wires.len();
    let d = output_wires.first().map_or(0, Vec::len);
    let psi2 = conditional.norm_sqr();
    let g2 = target.norm_sqr();
    if psi2 == 0.0 || g2 == 0.0 {
        return Ok((Correction::identity(n, d), 0.0));
    }
    let lookup = LogicalLookup::new(conditional.registry().len(), output_wires);

    // target must be correlated for the phase solution to apply
    let mut g = vec![Complex64::new(0.0, 0.0); d];
    let mut target_correlated = true;
    for (occ, amp) in target.terms() {
        match lookup.logical(occ, n) {
            Some(v) if v.iter().all(|&k| k == v[0]) => g[v[0]] = *amp,
            _ => target_correlated = false,
        }
    }

    let mut offsets: Option<Vec<usize>> = None;
    let mut consistent = target_correlated;
    let mut c = vec![Complex64::new(0.0, 0.0); d];
    for (occ, amp) in conditional.terms() {
        if !consistent {
            break;
        }
        let Some(v) = lookup.logical(occ, n) else { continue };
        let off: Vec<usize> = v.iter().map(|&k| (k + d - v[0]) % d).collect();
        match &offsets {
            None => offsets = Some(off),
            Some(o) if *o != off => consistent = false,
            _ => {}
        }
        c[v[0]] += amp;
    }

    if consistent {
        let shifts: Vec<usize> = offsets.unwrap_or_else(|| vec![0; n]).iter().map(|&o| (d - o) % d).collect();
        let mut corr = Correction { phases: vec![vec![Complex64::new(1.0, 0.0); d]; n], shifts };
        for k in 0..d {
            corr.phases[0][k] = unit_phase(g[k]) * unit_phase(c[k]).conj();
        }
        let overlap: f64 = (0..d).map(|k| g[k].norm() * c[k].norm()).sum();
        return Ok((corr, (overlap * overlap / (psi2 * g2)).min(1.0)));
    }
    let ov = target.inner_product(conditional)?;
    Ok((Correction::identity(n, d), (ov.norm_sqr() / (psi2 * g2)).min(1.0)))
}

/// Runs `circuit` on `input` and scores every heralded outcome against
/// `target`. `eq7` is the closed-form value the two probabilities are compared
/// with.
pub fn herald_report(
    circuit: &Circuit,
    input: &FockState,
    output_wires: &[Vec<ModeId>],
    target: &FockState,
    eq7: Option<f64>,
) -> Result<HeraldReport> {
    let out = evolve_heralded(circuit, input)?;
    report_from_state(&out.state, circuit, output_wires, target, eq7)
}

/// As [`herald_report`], for an already evolved state.
pub fn report_from_state(
    out: &FockState,
    circuit: &Circuit,
    output_wires: &[Vec<ModeId>],
    target: &FockState,
    eq7: Option<f64>,
) -> Result<HeraldReport> {
    let outcomes = enumerate_outcomes(out, circuit)?;
    let mut scored = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let (correction, fid) = solve_correction(&o.conditional, target, output_wires)?;
        scored.push(CorrectedOutcome { outcome: o, correction, corrected_fidelity: fid });
    }
    let zero = vec![0; circuit.detector_groups.len()];
    let p_single = scored
        .iter()
        .find(|o| o.outcome.pattern == zero)
        .map_or(0.0, |o| o.outcome.probability);
    let p_aggregate: f64 = scored
        .iter()
        .filter(|o| o.corrected_fidelity >= 1.0 - FID_EPS)
        .map(|o| o.outcome.probability)
        .sum();
    let p_herald: f64 = scored.iter().map(|o| o.outcome.probability).sum();
    let close = |x: f64, y: f64| ((x - y) / y).abs() <= 1e-9;
    let eq7_match = match eq7 {
        Some(v) if close(p_single, v) => Eq7Match::Single,
        Some(v) if close(p_aggregate, v) => Eq7Match::Aggregate,
        _ => Eq7Match::Neither,
    };
    Ok(HeraldReport { outcomes: scored, p_single, p_aggregate, p_herald, eq7_value: eq7, eq7_match })
}

/// Full pipeline for a GHZ plan against the uniform GHZ target.
pub fn plan_report(plan: &GhzCircuitPlan) -> Result<HeraldReport> {
    let target = plan.target(None)?;
    herald_report(
        &plan.circuit,
        &plan.initial_state(),
        &plan.output_wires,
        &target,
        Some(psuc_formula(plan.n, plan.d)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghz::build_ghz_circuit;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn correlated(plan: &GhzCircuitPlan, amps: &[Complex64]) -> FockState {
        plan.target(Some(amps)).unwrap()
    }

    #[test]
    fn identity_when_already_target() {
        let plan = build_ghz_circuit(3, 3, 0.5).unwrap();
        let g = plan.target(None).unwrap();
        let (corr, f) = solve_correction(&g, &g, &plan.output_wires).unwrap();
        assert!(corr.is_identity());
        assert!((f - 1.0).abs() < 1e-14);
    }

    #[test]
    fn minus_sign_fixed_on_first_subsystem() {
        let plan = build_ghz_circuit(3, 3, 0.5).unwrap();
        let g = plan.target(None).unwrap();
        let psi = correlated(&plan, &[c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)]);
        let (corr, f) = solve_correction(&psi, &g, &plan.output_wires).unwrap();
        assert!((f - 1.0).abs() < 1e-14);
        let expect = [c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)];
        for k in 0..3 {
            assert!((corr.phases[0][k] - expect[k]).norm() < 1e-15);
        }
        let fixed = corr.apply(&psi, &plan.output_wires).unwrap().normalized();
        assert!((g.inner_product(&fixed).unwrap().norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unequal_magnitudes_cap_fidelity() {
        let plan = build_ghz_circuit(3, 3, 0.5).unwrap();
        let g = plan.target(None).unwrap();
        let psi = correlated(&plan, &[c(1.0, 0.0), c(0.0, 0.5), c(-1.0, 0.0)]);
        let (_, f) = solve_correction(&psi, &g, &plan.output_wires).unwrap();
        assert!((f - 25.0 / 27.0).abs() < 1e-14);
    }

    #[test]
    fn shifted_correlations_are_undone() {
        let plan = build_ghz_circuit(2, 3, 0.5).unwrap();
        let g = plan.target(None).unwrap();
        let w = &plan.output_wires;
        // |0,1> + |1,2> + |2,0>
        let terms = (0..3).map(|k| (Occupation::from_modes([w[0][k], w[1][(k + 1) % 3]]), c(1.0, 0.0)));
        let psi = FockState::from_terms(plan.registry(), 2, terms).unwrap();
        let (corr, f) = solve_correction(&psi, &g, w).unwrap();
        assert_eq!(corr.shifts, vec![0, 2]);
        assert!((f - 1.0).abs() < 1e-14);
        let fixed = corr.apply(&psi, w).unwrap().normalized();
        assert!((g.inner_product(&fixed).unwrap().norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn uncorrelated_falls_back_to_overlap() {
        let plan = build_ghz_circuit(2, 2, 0.5).unwrap();
        let g = plan.target(None).unwrap();
        let w = &plan.output_wires;
        let psi = FockState::from_terms(
            plan.registry(),
            2,
            [
                (Occupation::from_modes([w[0][0], w[1][0]]), c(1.0, 0.0)),
                (Occupation::from_modes([w[0][0], w[1][1]]), c(1.0, 0.0)),
            ],
        )
        .unwrap();
        let (corr, f) = solve_correction(&psi, &g, w).unwrap();
        assert!(corr.is_identity());
        assert!((f - 0.25).abs() < 1e-14);
    }

    #[test]
    fn no_detectors_single_outcome() {
        let plan = build_ghz_circuit(2, 2, 0.5).unwrap();
        let mut circ = crate::gates::Circuit::new(2, 2, Arc::clone(plan.registry()));
        circ.outputs = plan.circuit.outputs.clone();
        let s = plan.initial_state().scaled(c(0.5, 0.0));
        let out = enumerate_outcomes(&s, &circ).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].pattern.is_empty());
        assert!((out[0].probability - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bell_pair_report() {
        let plan = build_ghz_circuit(2, 2, 1.0).unwrap();
        let rep = plan_report(&plan).unwrap();
        assert_eq!(rep.outcomes.len(), 4);
        assert!((rep.p_aggregate - 0.125).abs() < 1e-12);
        assert!(rep.p_single <= rep.p_aggregate);
        assert_eq!(rep.eq7_match, Eq7Match::Aggregate);
        let out = plan.circuit.run(&plan.initial_state()).unwrap();
        let total = rep.p_herald + rejected_probability(&out, &plan.circuit);
        assert!((total - 1.0).abs() < 1e-12);
    }
}
