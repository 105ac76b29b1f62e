//! Expansion engine against permanents, and Ryser against the definition.

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use qudit_ghz::permanent::{amplitude_via_permanent, occupations};
use qudit_ghz::{flatten, permanent, FockState, ModeId, Occupation};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{naive_permanent, random_circuit, random_matrix};

#[test]
fn ryser_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=7 {
        for _ in 0..5 {
            let m = random_matrix(&mut rng, n);
            let a = permanent(&m).unwrap();
            let b = naive_permanent(&m);
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0), "n={n}: {a} vs {b}");
        }
    }
}

#[test]
fn fifty_random_circuits_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let all: Vec<ModeId> = (0..12).map(ModeId).collect();
    for case in 0..50 {
        let c = random_circuit(&mut rng);
        let photons = rng.gen_range(1..=6);
        let input = Occupation::from_modes((0..photons).map(|_| all[rng.gen_range(0..8)]));
        let state = FockState::basis(&c.registry, input.clone()).unwrap();
        let out = c.run(&state).unwrap();
        let u = flatten(&c).unwrap();
        for occ in occupations(&all, photons) {
            let a = amplitude_via_permanent(&u, &input, &occ).unwrap();
            let b = out.amplitude(&occ);
            assert!((a - b).norm() <= 1e-10, "case {case} {occ:?}: {a} vs {b}");
        }
    }
}

#[test]
fn scheme_pattern_agrees_across_engines() {
    let plan = qudit_ghz::build_ghz_circuit(2, 3, 0.6).unwrap();
    let input = plan.initial_state().terms()[0].0.clone();
    let outs: Vec<ModeId> = plan.output_wires.iter().flatten().copied().collect();
    let full = plan.circuit.run(&plan.initial_state()).unwrap();
    for pattern in [[0, 0, 0, 0], [1, 2, 0, 1], [2, 2, 2, 2]] {
        let cond = qudit_ghz::permanent::conditional_via_permanent(&plan.circuit, &input, &pattern, &outs).unwrap();
        let fixed: Vec<ModeId> = plan.circuit.detector_groups.iter().zip(pattern).map(|(g, r)| g.modes[r]).collect();
        for (rest, amp) in cond.terms() {
            let mut modes: Vec<ModeId> = rest.photons().collect();
            modes.extend(&fixed);
            let b = full.amplitude(&Occupation::from_modes(modes));
            assert!((amp - b).norm() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn permanent_is_linear_in_each_row(seed in any::<u64>(), n in 1usize..7, re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, n);
        let row = rng.gen_range(0..n);
        let lambda = Complex64::new(re, im);
        let mut scaled = m.clone();
        for c in 0..n {
            scaled[(row, c)] *= lambda;
        }
        let a = permanent(&scaled).unwrap();
        let b = permanent(&m).unwrap() * lambda;
        prop_assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
    }

    #[test]
    fn permanent_ignores_row_and_column_order(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, n);
        let mut rows: Vec<usize> = (0..n).collect();
        let mut cols: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        cols.shuffle(&mut rng);
        let p = DMatrix::from_fn(n, n, |r, c| m[(rows[r], cols[c])]);
        let (a, b) = (permanent(&m).unwrap(), permanent(&p).unwrap());
        prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
    }
}
