//! Transition amplitudes from matrix permanents, independent of the Fock
//! expansion engine.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{FockState, LinearMap, ModeId, Occupation};
use crate::gates::{flatten, Circuit};

/// Largest matrix [`permanent`] accepts.
pub const MAX_PERMANENT_DIM: usize = 24;

/// Ryser's formula with Gray-code subset order, `O(2^n n)`.
pub fn permanent(m: &DMatrix<Complex64>) -> Result<Complex64> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Domain(format!("permanent needs a square matrix, got {}x{}", n, m.ncols())));
    }
    if n > MAX_PERMANENT_DIM {
        return Err(Error::Capacity(format!("permanent of a {n}x{n} matrix exceeds the {MAX_PERMANENT_DIM} limit")));
    }
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut in_set = vec![false; n];
    let mut total = Complex64::new(0.0, 0.0);
    for g in 1u64..(1u64 << n) {
        // the column that flips between consecutive Gray codes
        let j = g.trailing_zeros() as usize;
        let sign = if in_set[j] { -1.0 } else { 1.0 };
        in_set[j] = !in_set[j];
        for (i, s) in row_sums.iter_mut().enumerate() {
            *s += m[(i, j)] * sign;
        }
        let prod = row_sums.iter().fold(Complex64::new(1.0, 0.0), |acc, s| acc * s);
        let size = (g ^ (g >> 1)).count_ones() as usize;
        if (n - size).is_multiple_of(2) {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(total)
}

fn index_of(modes: &[ModeId], m: ModeId) -> Result<usize> {
    modes.iter().position(|&x| x == m).ok_or(Error::UnknownMode(m))
}

/// `<out| U |in>` for the many-photon evolution induced by `u`.
///
/// Rows and columns of the permanent's submatrix repeat each mode by its
/// occupation, in ascending mode order.
pub fn amplitude_via_permanent(u: &LinearMap, in_occ: &Occupation, out_occ: &Occupation) -> Result<Complex64> {
    if in_occ.total() != out_occ.total() {
        return Err(Error::PhotonMismatch(in_occ.total(), out_occ.total()));
    }
    let cols: Vec<usize> = in_occ
        .photons()
        .map(|m| index_of(u.input_modes(), m))
        .collect::<Result<_>>()?;
    let rows: Vec<usize> = out_occ
        .photons()
        .map(|m| index_of(u.output_modes(), m))
        .collect::<Result<_>>()?;
    let n = cols.len();
    let sub = DMatrix::from_fn(n, n, |r, c| u.matrix()[(rows[r], cols[c])]);
    let per = permanent(&sub)?;
    Ok(per / (in_occ.factorial_product() * out_occ.factorial_product()).sqrt())
}

fn pattern_occupation(circuit: &Circuit, pattern: &[usize], rest: &Occupation) -> Result<Occupation> {
    if pattern.len() != circuit.detector_groups.len() {
        return Err(Error::Domain(format!(
            "pattern has {} entries for {} detector groups",
            pattern.len(),
            circuit.detector_groups.len()
        )));
    }
    let mut modes: Vec<ModeId> = rest.photons().collect();
    for (g, &r) in circuit.detector_groups.iter().zip(pattern) {
        let m = *g
            .modes
            .get(r)
            .ok_or_else(|| Error::Domain(format!("detector index {r} out of range")))?;
        modes.push(m);
    }
    Ok(Occupation::from_modes(modes))
}

/// Probability of seeing `pattern` on the detectors together with `rest` on
/// the remaining modes, starting from the basis state `input`.
pub fn herald_probability_via_permanent(
    circuit: &Circuit,
    input: &Occupation,
    pattern: &[usize],
    rest: &Occupation,
) -> Result<f64> {
    check_size(input.total())?;
    let u = flatten(circuit)?;
    let out = pattern_occupation(circuit, pattern, rest)?;
    if out.total() != input.total() {
        return Ok(0.0);
    }
    Ok(amplitude_via_permanent(&u, input, &out)?.norm_sqr())
}

fn check_size(photons: usize) -> Result<()> {
    if photons > MAX_PERMANENT_DIM {
        return Err(Error::Capacity(format!(
            "{photons} photons exceed the permanent engine's {MAX_PERMANENT_DIM}-photon limit"
        )));
    }
    Ok(())
}

/// Unnormalized conditional state for `pattern`, restricted to kets whose
/// remaining photons all sit on `modes`.
pub fn conditional_via_permanent(
    circuit: &Circuit,
    input: &Occupation,
    pattern: &[usize],
    modes: &[ModeId],
) -> Result<FockState> {
    check_size(input.total())?;
    let u = flatten(circuit)?;
    let remaining = input
        .total()
        .checked_sub(circuit.detector_groups.len())
        .ok_or_else(|| Error::Domain("fewer photons than detector groups".into()))?;
    let mut terms = Vec::new();
    for rest in occupations(modes, remaining) {
        let out = pattern_occupation(circuit, pattern, &rest)?;
        terms.push((rest, amplitude_via_permanent(&u, input, &out)?));
    }
    FockState::from_terms(&circuit.registry, remaining, terms)
}

/// Every occupation of `n` photons over `modes`.
pub fn occupations(modes: &[ModeId], n: usize) -> Vec<Occupation> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    fn rec(modes: &[ModeId], start: usize, left: usize, cur: &mut Vec<ModeId>, out: &mut Vec<Occupation>) {
        if left == 0 {
            out.push(Occupation::from_modes(cur.iter().copied()));
            return;
        }
        for i in start..modes.len() {
            cur.push(modes[i]);
            rec(modes, i, left - 1, cur, out);
            cur.pop();
        }
    }
    rec(modes, 0, n, &mut cur, &mut out);
    out
}

/// Number of occupations of `n` photons over `m` modes.
pub fn occupation_count(m: usize, n: usize) -> f64 {
    if m == 0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    crate::fock::binomial(m + n - 1, n)
}
