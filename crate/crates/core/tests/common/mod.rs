//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use qudit_ghz::fock::make_registry;
use qudit_ghz::gates::gate_rewire;
use qudit_ghz::{Circuit, GateSpec, ModeId};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Permanent straight from the definition, `O(n!)`.
pub fn naive_permanent(m: &DMatrix<Complex64>) -> Complex64 {
    fn rec(m: &DMatrix<Complex64>, row: usize, used: &mut Vec<bool>) -> Complex64 {
        if row == m.nrows() {
            return Complex64::new(1.0, 0.0);
        }
        let mut sum = Complex64::new(0.0, 0.0);
        for c in 0..m.ncols() {
            if !used[c] {
                used[c] = true;
                sum += m[(row, c)] * rec(m, row + 1, used);
                used[c] = false;
            }
        }
        sum
    }
    rec(m, 0, &mut vec![false; m.ncols()])
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// Random circuit over the two-subsystem qubit grid plus four sinks (12 modes).
pub fn random_circuit(rng: &mut ChaCha8Rng) -> Circuit {
    let reg = Arc::new(make_registry(2, 2, 4).unwrap());
    let mut c = Circuit::new(2, 2, Arc::clone(&reg));
    let system: Vec<ModeId> = (0..8).map(ModeId).collect();
    for _ in 0..rng.gen_range(3..9) {
        let j = rng.gen_range(0..2);
        let block: Vec<ModeId> = (0..4).map(|i| ModeId(4 * j + i)).collect();
        let rail = rng.gen_range(0..2);
        let pair = vec![block[2 * rail], block[2 * rail + 1]];
        let op = match rng.gen_range(0..6) {
            0 => GateSpec::cn_d(2, block),
            1 => GateSpec::cn_d_inverse(2, block),
            2 => GateSpec::fourier(2, pair),
            3 => GateSpec::shift(2, pair),
            4 => GateSpec::beam_splitter(rng.gen_range(0.0..1.0), system[rng.gen_range(0..8)], ModeId(8 + rng.gen_range(0..4))),
            _ => {
                let mut to = system.clone();
                to.shuffle(rng);
                gate_rewire(system.iter().copied().zip(to).collect()).unwrap()
            }
        };
        c.push(op);
    }
    c.validate().unwrap();
    c
}
