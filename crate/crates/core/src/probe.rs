//! Numerical evidence for the photon-number lower bound.
//!
//! A candidate network sends `M` single photons through a linear-optical
//! transformation. Only the rows of that transformation seen by the herald
//! matter: `M - N` detectors each expecting one photon in internal state 0,
//! and the `N * d` (party, internal state) output modes. These rows form the
//! `R x M` block `A`, with `R = (M - N) + N d`. The heralded amplitude of any
//! output is a permanent of rows of `A`, so the corrected fidelity is
//! invariant under rescaling `A`; and every matrix, rescaled into the unit
//! ball, is a corner of a unitary ([`unitary_dilation`]). Searching over
//! unconstrained `A` therefore covers every unitary network.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::factorial;
use crate::gates::flatten;
use crate::ghz::build_ghz_circuit;
use crate::permanent::permanent;

/// A candidate in the restriction-system form: output-row vectors
/// `alpha[j][s][p]` and the herald tensor `x_tilde` over ordered `N`-tuples of
/// photon indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateNetwork {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub alpha: Vec<Vec<Vec<Complex64>>>,
    /// Entry for `(p_1, .., p_N)` at index `sum_a p_a M^(N-1-a)`.
    pub x_tilde: Vec<Complex64>,
}

fn check_dims(n: usize, d: usize, m: usize) -> Result<()> {
    if n < 1 || d < 2 || m < n {
        return Err(Error::Domain(format!("need N >= 1, d >= 2, M >= N; got ({n}, {d}, {m})")));
    }
    if m > 12 {
        return Err(Error::Capacity(format!("probe supports M <= 12, got {m}")));
    }
    Ok(())
}

/// Rows of the herald block: detectors first, then output `(j, s)` at
/// `M - N + j d + s`.
pub fn block_rows(n: usize, d: usize, m: usize) -> usize {
    (m - n) + n * d
}

impl CandidateNetwork {
    pub fn from_block(n: usize, d: usize, a: &DMatrix<Complex64>) -> Result<Self> {
        let m = a.ncols();
        check_dims(n, d, m)?;
        if a.nrows() != block_rows(n, d, m) {
            return Err(Error::Domain(format!(
                "herald block needs {} rows, got {}",
                block_rows(n, d, m),
                a.nrows()
            )));
        }
        let det = m - n;
        let alpha = (0..n)
            .map(|j| (0..d).map(|s| (0..m).map(|p| a[(det + j * d + s, p)]).collect()).collect())
            .collect();
        let mut x_tilde = vec![Complex64::new(0.0, 0.0); m.pow(n as u32)];
        for (idx, x) in x_tilde.iter_mut().enumerate() {
            let tuple = digits(idx, m, n);
            if !distinct(&tuple) {
                continue;
            }
            let rest: Vec<usize> = (0..m).filter(|p| !tuple.contains(p)).collect();
            let sub = DMatrix::from_fn(det, det, |r, c| a[(r, rest[c])]);
            // each unordered assignment of the rest is counted once
            *x = permanent(&sub)?;
        }
        Ok(Self { n, d, m, alpha, x_tilde })
    }

    /// `sum_P X~_P prod_a alpha[j_a][s_a][p_a]`.
    pub fn restriction(&self, js: &[usize], ss: &[usize]) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for (idx, x) in self.x_tilde.iter().enumerate() {
            if x.norm() == 0.0 {
                continue;
            }
            let tuple = digits(idx, self.m, self.n);
            let mut prod = *x;
            for a in 0..self.n {
                prod *= self.alpha[js[a]][ss[a]][tuple[a]];
            }
            total += prod;
        }
        total
    }
}

fn digits(mut idx: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = idx % base;
        idx /= base;
    }
    out
}

fn distinct(v: &[usize]) -> bool {
    v.iter().enumerate().all(|(i, a)| !v[..i].contains(a))
}

/// Evaluates the restriction system over every `(j_1..j_N, s_1..s_N)`.
///
/// `off_target` is the largest modulus among combinations that must vanish
/// (repeated parties or unequal internal states). `on_target[s]` is the value
/// for parties `1..N` in order, all in state `s`.
pub fn restriction_residual(c: &CandidateNetwork) -> (f64, Vec<Complex64>) {
    let (n, d) = (c.n, c.d);
    let mut off: f64 = 0.0;
    let combos = (n * d).pow(n as u32);
    for idx in 0..combos {
        let pairs = digits(idx, n * d, n);
        let js: Vec<usize> = pairs.iter().map(|x| x / d).collect();
        let ss: Vec<usize> = pairs.iter().map(|x| x % d).collect();
        let on = distinct(&js) && ss.iter().all(|&s| s == ss[0]);
        if !on {
            off = off.max(c.restriction(&js, &ss).norm());
        }
    }
    let ident: Vec<usize> = (0..n).collect();
    let on_target = (0..d).map(|s| c.restriction(&ident, &vec![s; n])).collect();
    (off, on_target)
}

/// Heralded output amplitudes of a block, as a sparse state over output
/// occupations (rows are `j d + s`).
pub struct BlockObjective {
    n: usize,
    d: usize,
    m: usize,
    occupations: Vec<(Vec<usize>, f64)>,
    target_index: Vec<usize>,
}

impl BlockObjective {
    pub fn new(n: usize, d: usize, m: usize) -> Result<Self> {
        check_dims(n, d, m)?;
        let outs: Vec<crate::fock::ModeId> = (0..n * d).map(crate::fock::ModeId).collect();
        let mut occupations = Vec::new();
        let mut target_index = vec![usize::MAX; d];
        for occ in crate::permanent::occupations(&outs, n) {
            let rows: Vec<usize> = occ.photons().map(|m| m.0).collect();
            let norm = 1.0 / occ.factorial_product().sqrt();
            for (s, slot) in target_index.iter_mut().enumerate() {
                if rows.iter().enumerate().all(|(j, &r)| r == j * d + s) && rows.len() == n {
                    *slot = occupations.len();
                }
            }
            occupations.push((rows, norm));
        }
        Ok(Self { n, d, m, occupations, target_index })
    }

    /// Heralded amplitudes, one per output occupation.
    pub fn amplitudes(&self, a: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
        let det = self.m - self.n;
        let mut out = Vec::with_capacity(self.occupations.len());
        let mut sub = DMatrix::zeros(self.m, self.m);
        for (rows, norm) in &self.occupations {
            for c in 0..self.m {
                for r in 0..det {
                    sub[(r, c)] = a[(r, c)];
                }
                for (i, &row) in rows.iter().enumerate() {
                    sub[(det + i, c)] = a[(det + row, c)];
                }
            }
            out.push(permanent(&sub)? * *norm);
        }
        Ok(out)
    }

    /// Fidelity with the uniform GHZ state after the best local phases:
    /// `(sum_s |c_s|)^2 / (d ||v||^2)`.
    pub fn fidelity(&self, a: &DMatrix<Complex64>) -> Result<f64> {
        let amps = self.amplitudes(a)?;
        let norm2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if norm2 < 1e-30 {
            return Ok(0.0);
        }
        let s: f64 = self.target_index.iter().map(|&i| amps[i].norm()).sum();
        Ok((s * s / (self.d as f64 * norm2)).min(1.0))
    }

    pub fn rows(&self) -> usize {
        block_rows(self.n, self.d, self.m)
    }
}

/// The herald block of the GHZ scheme itself (`M = dN`) on the all-zero
/// pattern, taken from the flattened circuit at `t = 1/sqrt d`.
pub fn witness_block(n: usize, d: usize) -> Result<DMatrix<Complex64>> {
    let plan = build_ghz_circuit(n, d, 1.0 / (d as f64).sqrt())?;
    let u = flatten(&plan.circuit)?;
    let inputs: Vec<usize> = plan.initial_state().terms()[0].0.photons().map(|m| m.0).collect();
    let mut rows: Vec<usize> = plan.circuit.detector_groups.iter().map(|g| g.modes[0].0).collect();
    rows.extend(plan.output_wires.iter().flatten().map(|m| m.0));
    Ok(DMatrix::from_fn(rows.len(), inputs.len(), |r, c| u.matrix()[(rows[r], inputs[c])]))
}

/// Unitary `[[A, (I - A A†)^½], [(I - A† A)^½, -A†]]` containing `A / σ_max`
/// (scaled into the unit ball when needed) as its top-left block.
pub fn unitary_dilation(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (r, m) = a.shape();
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let a = if smax > 1.0 { a / Complex64::new(smax, 0.0) } else { a.clone() };
    let defect = |b: &DMatrix<Complex64>| -> DMatrix<Complex64> {
        let svd = b.clone().svd(true, false);
        let w = svd.u.expect("left vectors requested");
        let k = svd.singular_values.len();
        let mut diag = DMatrix::zeros(k, k);
        for i in 0..k {
            let s = svd.singular_values[i].min(1.0);
            diag[(i, i)] = Complex64::new((1.0 - s * s).sqrt() - 1.0, 0.0);
        }
        DMatrix::identity(b.nrows(), b.nrows()) + &w * diag * w.adjoint()
    };
    let top = defect(&a);
    let bottom = defect(&a.adjoint());
    let mut u = DMatrix::zeros(r + m, r + m);
    u.view_mut((0, 0), (r, m)).copy_from(&a);
    u.view_mut((0, m), (r, r)).copy_from(&top);
    u.view_mut((r, 0), (m, m)).copy_from(&bottom);
    u.view_mut((r, m), (m, r)).copy_from(&(-a.adjoint()));
    u
}

#[derive(Clone, Debug)]
pub struct ProbeOptions {
    /// Gradient steps per restart.
    pub iterations: usize,
    pub time_budget: Option<Duration>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { iterations: 120, time_budget: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub restarts: usize,
    pub seed: u64,
    pub best_fidelity: f64,
    pub best_params: Vec<f64>,
    /// Final objective of each restart.
    pub history: Vec<f64>,
    /// True when the time budget stopped the search early.
    pub partial: bool,
}

fn to_block(x: &[f64], rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |r, c| {
        let i = 2 * (r * cols + c);
        Complex64::new(x[i], x[i + 1])
    })
}

fn rescale(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        let target = (x.len() as f64 / 2.0).sqrt();
        x.iter_mut().for_each(|v| *v *= target / norm);
    }
}

/// Gradient ascent with forward differences and a backtracking step.
fn refine(obj: &BlockObjective, x: &mut Vec<f64>, iterations: usize) -> Result<f64> {
    let (rows, cols) = (obj.rows(), obj.m);
    let f = |x: &[f64]| obj.fidelity(&to_block(x, rows, cols));
    let mut fx = f(x)?;
    let mut step = 0.5;
    let h = 1e-7;
    let mut grad = vec![0.0; x.len()];
    for _ in 0..iterations {
        for i in 0..x.len() {
            let old = x[i];
            x[i] = old + h;
            grad[i] = (f(x)? - fx) / h;
            x[i] = old;
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-12 {
            break;
        }
        let mut improved = false;
        while step > 1e-10 {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(v, g)| v + step * g / gnorm).collect();
            let ft = f(&trial)?;
            if ft > fx {
                *x = trial;
                fx = ft;
                step *= 1.5;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
        rescale(x);
    }
    Ok(fx)
}

/// Multistart local search for the best corrected fidelity reachable with `M`
/// photons. Deterministic for a given seed. A search that fails proves
/// nothing; it only adds evidence.
pub fn probe(n: usize, d: usize, m: usize, restarts: usize, seed: u64) -> Result<ProbeResult> {
    probe_with(n, d, m, restarts, seed, &ProbeOptions::default())
}

pub fn probe_with(n: usize, d: usize, m: usize, restarts: usize, seed: u64, opts: &ProbeOptions) -> Result<ProbeResult> {
    if n * d > 8 {
        return Err(Error::Capacity(format!("probe supports dN <= 8, got {}", n * d)));
    }
    let obj = BlockObjective::new(n, d, m)?;
    let dim = 2 * obj.rows() * m;
    let start = Instant::now();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut history = Vec::with_capacity(restarts);
    let mut partial = false;
    for restart in 0..restarts {
        if opts.time_budget.is_some_and(|b| start.elapsed() > b) {
            partial = true;
            break;
        }
        // one stream per restart keeps results independent of scheduling
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let mut x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        rescale(&mut x);
        let fx = refine(&obj, &mut x, opts.iterations)?;
        history.push(fx);
        if fx > best.0 {
            best = (fx, x);
        }
    }
    Ok(ProbeResult {
        n,
        d,
        m,
        restarts: history.len(),
        seed,
        best_fidelity: best.0.max(0.0),
        best_params: best.1,
        history,
        partial,
    })
}

/// Binomial-weighted count of output occupations the objective enumerates.
pub fn output_space_size(n: usize, d: usize) -> f64 {
    factorial(n * d + n - 1) / (factorial(n) * factorial(n * d - 1))
}
