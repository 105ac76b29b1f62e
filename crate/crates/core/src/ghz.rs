//! The heralded GHZ circuit for `(N, d, t)` and its closed-form predictions.
//!
//! Mode `(j, k, s)` is subsystem `j`, rail `k`, internal state `s`. Every
//! subsystem starts with `d` photons of distinct internal states on rail 0.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{factorial, make_registry, FockState, ModeId, ModeRegistry, Occupation};
use crate::gates::{gate_rewire, Circuit, DetectorGroup, GateSpec};

/// Where the amplitude-carving beam splitters go.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsPlacement {
    /// One BS per middle wire of every subsystem.
    #[default]
    PerSubsystem,
    /// One BS per middle wire of subsystem 0 only.
    FirstSubsystem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhzCircuitPlan {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub t: f64,
    pub placement: BsPlacement,
    pub circuit: Circuit,
    /// `output_wires[j][k]` carries logical value `k` of subsystem `j`.
    pub output_wires: Vec<Vec<ModeId>>,
    /// `middle_wires[j]` lists the outputs for `k = 1..d-1` (exclusive) that
    /// pass a beam splitter.
    pub middle_wires: Vec<Vec<ModeId>>,
}

impl GhzCircuitPlan {
    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.circuit.registry
    }

    pub fn photon_count(&self) -> usize {
        self.n * self.d
    }

    /// Injected photons: `prod_{j,s} a†_{j,0,s} |vac>`.
    pub fn initial_state(&self) -> FockState {
        injected_state(self.registry(), self.n, self.d)
    }

    /// `sum_k x_k prod_j a†_{output_wires[j][k]} |vac>`, or the uniform GHZ
    /// state when `amplitudes` is `None`.
    pub fn target(&self, amplitudes: Option<&[Complex64]>) -> Result<FockState> {
        ghz_target(self.registry(), &self.output_wires, amplitudes)
    }
}

fn check_params(n: usize, d: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("N must be >= 2, got {n}")));
    }
    if d < 2 {
        return Err(Error::Domain(format!("d must be >= 2, got {d}")));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("transmissivity must lie in [0, 1], got {t}")));
    }
    Ok(())
}

fn mode(d: usize, j: usize, k: usize, s: usize) -> ModeId {
    ModeId((j * d + k) * d + s)
}

fn rail(d: usize, j: usize, k: usize) -> Vec<ModeId> {
    (0..d).map(|s| mode(d, j, k, s)).collect()
}

fn block(d: usize, j: usize) -> Vec<ModeId> {
    (0..d * d).map(|i| ModeId(j * d * d + i)).collect()
}

pub fn build_ghz_circuit(n: usize, d: usize, t: f64) -> Result<GhzCircuitPlan> {
    build_ghz_circuit_with(n, d, t, BsPlacement::PerSubsystem)
}

pub fn build_ghz_circuit_with(n: usize, d: usize, t: f64, placement: BsPlacement) -> Result<GhzCircuitPlan> {
    check_params(n, d)?;
    check_t(t)?;
    let middle = d - 2;
    let bs_subsystems = match placement {
        BsPlacement::PerSubsystem => n,
        BsPlacement::FirstSubsystem => 1,
    };
    let n_sinks = middle * bs_subsystems;
    let registry = Arc::new(make_registry(n, d, n_sinks)?);
    let mut circ = Circuit::new(n, d, Arc::clone(&registry));

    // preparation: internal states to the Fourier basis
    for j in 0..n {
        circ.push(GateSpec::fourier(d, rail(d, j, 0)));
    }
    for j in 0..n {
        circ.push(GateSpec::cn_d(d, block(d, j)));
    }
    // the last rail of each subsystem moves to the next subsystem, cyclically
    let mut perm = Vec::with_capacity(n * d);
    for j in 0..n {
        for s in 0..d {
            perm.push((mode(d, j, d - 1, s), mode(d, (j + 1) % n, d - 1, s)));
        }
    }
    circ.push(gate_rewire(perm)?);
    for j in 0..n {
        circ.push(GateSpec::shift(d, rail(d, j, d - 1)));
        circ.push(GateSpec::fourier(d, rail(d, j, 0)));
        circ.push(GateSpec::fourier(d, rail(d, j, d - 1)));
    }
    for j in 0..n {
        circ.push(GateSpec::cn_d_inverse(d, block(d, j)));
    }
    // photons on middle rail k leave the inverse CN on (rail 0, internal k)
    let mut middle_wires = Vec::with_capacity(n);
    let mut sink = n * d * d;
    for j in 0..n {
        let wires: Vec<ModeId> = (1..d - 1).map(|k| mode(d, j, 0, k)).collect();
        if j < bs_subsystems {
            for &w in &wires {
                circ.push(GateSpec::beam_splitter(t, w, ModeId(sink)));
                circ.sinks.push(ModeId(sink));
                sink += 1;
            }
        }
        middle_wires.push(wires);
    }
    // Fourier-basis detection on rails 1..d
    for j in 0..n {
        for k in 1..d {
            circ.push(GateSpec::fourier(d, rail(d, j, k)));
            circ.detector_groups.push(DetectorGroup::fourier(rail(d, j, k)));
        }
    }
    let output_wires: Vec<Vec<ModeId>> = (0..n).map(|j| rail(d, j, 0)).collect();
    circ.outputs = output_wires.iter().flatten().copied().collect();
    circ.validate()?;
    Ok(GhzCircuitPlan { n, d, t, placement, circuit: circ, output_wires, middle_wires })
}

fn injected_state(registry: &Arc<ModeRegistry>, n: usize, d: usize) -> FockState {
    let occ = Occupation::from_modes((0..n).flat_map(|j| (0..d).map(move |s| mode(d, j, 0, s))));
    FockState::basis(registry, occ).expect("injected modes exist")
}

/// The injected `dN`-photon state on the scheme's registry (with its
/// per-subsystem sinks). The Fourier preparation is the circuit's first layer.
pub fn initial_state(n: usize, d: usize) -> Result<FockState> {
    if n < 1 || d < 2 {
        return Err(Error::Domain(format!("need N >= 1 and d >= 2, got ({n}, {d})")));
    }
    let registry = Arc::new(make_registry(n, d, (d - 2) * n)?);
    Ok(injected_state(&registry, n, d))
}

pub fn ghz_target(
    registry: &Arc<ModeRegistry>,
    output_wires: &[Vec<ModeId>],
    amplitudes: Option<&[Complex64]>,
) -> Result<FockState> {
    let d = output_wires.first().map_or(0, Vec::len);
    let n = output_wires.len();
    let uniform = vec![Complex64::new(1.0 / (d as f64).sqrt(), 0.0); d];
    let amps = amplitudes.unwrap_or(&uniform);
    if amps.len() != d || output_wires.iter().any(|w| w.len() != d) {
        return Err(Error::Domain("target needs one amplitude per logical value".into()));
    }
    let terms = (0..d).map(|k| (Occupation::from_modes(output_wires.iter().map(|w| w[k])), amps[k]));
    FockState::from_terms(registry, n, terms)
}

/// `d (d!/d^d)^{2N}` as a reduced fraction, when it fits in 128 bits.
pub fn psuc_exact(n: usize, d: usize) -> Option<(u128, u128)> {
    let fact: u128 = (1..=d as u128).product();
    let exp = 2 * n as u32;
    let num = fact.checked_pow(exp)?;
    let den = (d as u128).checked_pow(2 * d as u32 * n as u32 - 1)?;
    let g = gcd(num, den);
    Some((num / g, den / g))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `log10 P_suc(N, d)`, evaluated in log space.
pub fn log10_psuc(n: usize, d: usize) -> f64 {
    let ln_fact: f64 = (2..=d).map(|k| (k as f64).ln()).sum();
    let ln = (d as f64).ln() + 2.0 * n as f64 * (ln_fact - d as f64 * (d as f64).ln());
    ln / std::f64::consts::LN_10
}

pub fn psuc_formula(n: usize, d: usize) -> f64 {
    match psuc_exact(n, d) {
        Some((num, den)) => num as f64 / den as f64,
        None => 10f64.powf(log10_psuc(n, d)),
    }
}

/// Unnormalized heralded amplitudes of `|k, ..., k>` on the all-zero
/// pattern, with the detector normalization factored out.
///
/// Term `k` carries the sign `(-1)^{kN}` that the derivation leaves on it.
pub fn final_amplitudes(n: usize, d: usize, t: f64) -> Vec<Complex64> {
    let ni = n as i32;
    let base = (factorial(d) / (d as f64).powi(d as i32)).powi(ni);
    let middle = base * ((d as f64).sqrt() * t).powi(ni);
    (0..d)
        .map(|k| {
            let mag = if k == 0 || k == d - 1 { base } else { middle };
            let sign = if (k * n).is_multiple_of(2) { 1.0 } else { -1.0 };
            Complex64::new(sign * mag, 0.0)
        })
        .collect()
}

/// Success probability of the two-party scheme based on zero-transmission
/// laws, which uses `2d + 1` photons.
pub fn ztl_bell_psuc(d: usize) -> f64 {
    d as f64 * factorial(2 * d - 1) / ((2 * d + 1) as f64).powi(2 * d as i32 - 1)
}

fn check_identity_d(d: usize) -> Result<()> {
    if !(2..=8).contains(&d) {
        return Err(Error::Domain(format!("identity checks need 2 <= d <= 8, got {d}")));
    }
    Ok(())
}

fn tilde_annihilator(d: usize, modes: &[ModeId], j: usize) -> Vec<(ModeId, Complex64)> {
    // a_{j~} = (1/sqrt d) sum_s w^{-js} a_s
    (0..d)
        .map(|s| {
            let phase = -2.0 * PI * ((j * s) % d) as f64 / d as f64;
            (modes[s], Complex64::from_polar(1.0 / (d as f64).sqrt(), phase))
        })
        .collect()
}

fn all_internal_states(d: usize) -> (Arc<ModeRegistry>, Vec<ModeId>, FockState) {
    let reg = Arc::new(make_registry(1, d, 0).expect("valid grid"));
    let modes: Vec<ModeId> = (0..d).map(ModeId).collect();
    let state = FockState::basis(&reg, Occupation::from_modes(modes.iter().copied())).expect("valid modes");
    (reg, modes, state)
}

fn annihilate_powers(state: FockState, d: usize, modes: &[ModeId], zero: usize, top: usize) -> Result<FockState> {
    let a0 = tilde_annihilator(d, modes, 0);
    let atop = tilde_annihilator(d, modes, d - 1);
    let mut s = state;
    for _ in 0..top {
        s = s.annihilate(&atop)?;
    }
    for _ in 0..zero {
        s = s.annihilate(&a0)?;
    }
    Ok(s)
}

/// Max-norm residual of
/// `a_{0~}^l a_{(d-1)~}^{d-1-l} prod_s a†_s |vac> =
///  (-1)^{d-1-l} l! (d-1-l)! / sqrt(d)^{d-2} a†_{(d-1-l)~} |vac>`.
pub fn identity1_check(d: usize, l: usize) -> Result<f64> {
    check_identity_d(d)?;
    if l >= d {
        return Err(Error::Domain(format!("need l < d, got l = {l}, d = {d}")));
    }
    let (reg, modes, state) = all_internal_states(d);
    let lhs = annihilate_powers(state, d, &modes, l, d - 1 - l)?;
    let sign = if (d - 1 - l).is_multiple_of(2) { 1.0 } else { -1.0 };
    let coef = sign * factorial(l) * factorial(d - 1 - l) / (d as f64).sqrt().powi(d as i32 - 2);
    let q = d - 1 - l;
    let rhs_terms = (0..d).map(|s| {
        let phase = 2.0 * PI * ((q * s) % d) as f64 / d as f64;
        (Occupation::from_modes([modes[s]]), Complex64::from_polar(coef / (d as f64).sqrt(), phase))
    });
    let rhs = FockState::from_terms(&reg, 1, rhs_terms)?;
    Ok(max_difference(&lhs, &rhs))
}

/// Norm of `a_{0~}^m a_{(d-1)~}^{d-m} prod_s a†_s |vac>`, which vanishes.
pub fn identity2_check(d: usize, m: usize) -> Result<f64> {
    check_identity_d(d)?;
    if m == 0 || m >= d {
        return Err(Error::Domain(format!("need 1 <= m <= d-1, got m = {m}, d = {d}")));
    }
    let (_, modes, state) = all_internal_states(d);
    let out = annihilate_powers(state, d, &modes, m, d - m)?;
    Ok(out.norm_sqr().sqrt())
}

fn max_difference(a: &FockState, b: &FockState) -> f64 {
    let mut worst: f64 = 0.0;
    for (o, x) in a.terms() {
        worst = worst.max((x - b.amplitude(o)).norm());
    }
    for (o, y) in b.terms() {
        worst = worst.max((a.amplitude(o) - y).norm());
    }
    worst
}

/// One row of the closed-form success-probability table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsucRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub photons: usize,
    pub p_suc: f64,
    pub log10_p_suc: f64,
}

pub fn psuc_table(d_list: &[usize], n_list: &[usize]) -> Result<Vec<PsucRow>> {
    let mut rows = Vec::new();
    for &d in d_list {
        for &n in n_list {
            check_params(n, d)?;
            rows.push(PsucRow { n, d, photons: n * d, p_suc: psuc_formula(n, d), log10_p_suc: log10_psuc(n, d) });
        }
    }
    Ok(rows)
}

/// The photon count and success probability reported for the brute-force
/// three-party qutrit search with the zero-transmission scheme.
pub const ZTL_CITED_N3_D3: (usize, f64) = (25, 1e-10);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZtlRow {
    pub d: usize,
    pub ours_photons: usize,
    pub ours_psuc: f64,
    pub ztl_photons: usize,
    pub ztl_psuc_or_cited: Option<f64>,
    pub ratio: Option<f64>,
}

/// Comparison rows for `N = 2` (closed form) or `N = 3` (cited point at
/// `d = 3`, absent elsewhere).
pub fn ztl_comparison(n: usize, d_list: &[usize]) -> Result<Vec<ZtlRow>> {
    let mut rows = Vec::new();
    for &d in d_list {
        check_params(n, d)?;
        let ours = psuc_formula(n, d);
        let (photons, ztl) = match (n, d) {
            (2, _) => (2 * d + 1, Some(ztl_bell_psuc(d))),
            (3, 3) => (ZTL_CITED_N3_D3.0, Some(ZTL_CITED_N3_D3.1)),
            _ => (0, None),
        };
        rows.push(ZtlRow {
            d,
            ours_photons: n * d,
            ours_psuc: ours,
            ztl_photons: photons,
            ztl_psuc_or_cited: ztl,
            ratio: ztl.map(|z| ours / z),
        });
    }
    Ok(rows)
}
