mod common;

use cogassess::activity::{
    em_train, viterbi_decode, Alphabet, ContextTuple, EmConfig, HdbnModel, LabeledSequence, ROW_TOLERANCE,
};
use common::hdbn_oracle::{enumerate_best, path_log_prob, random_tables, sample, table_distance, total_variation, Tables};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_alphabet() -> Alphabet {
    Alphabet::custom([3, 2, 3, 2]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn viterbi_matches_enumeration(seed in any::<u64>(), k in 1usize..=4, n in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = small_alphabet();
        let t = random_tables(&mut rng, k, a);
        let (obs, _) = sample(&t, &mut rng, n);
        let d = viterbi_decode(&t.model(a), &obs).unwrap();
        let (best, _) = enumerate_best(&t, &obs);
        let path: Vec<usize> = d.labels.iter().map(|l| l - 1).collect();
        prop_assert!((d.log_probability - best).abs() <= 1e-9 * best.abs().max(1.0));
        prop_assert!((path_log_prob(&t, &obs, &path) - best).abs() <= 1e-9 * best.abs().max(1.0));
    }

    #[test]
    fn decoding_is_permutation_equivariant(seed in any::<u64>(), k in 2usize..=4, n in 1usize..=30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = small_alphabet();
        let t = random_tables(&mut rng, k, a);
        let (obs, _) = sample(&t, &mut rng, n);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.rotate_left(1 + (seed as usize) % (k - 1));
        let plain = viterbi_decode(&t.model(a), &obs).unwrap();
        let pt = t.permuted(&perm);
        let swapped = viterbi_decode(&pt.model(a), &obs).unwrap();
        let mapped: Vec<usize> = plain.labels.iter().map(|l| perm[l - 1]).collect();
        let got: Vec<usize> = swapped.labels.iter().map(|l| l - 1).collect();
        let tol = 1e-9 * plain.log_probability.abs().max(1.0);
        prop_assert!((plain.log_probability - swapped.log_probability).abs() <= tol);
        // Equal-scoring paths (e.g. repeated observations) may break ties differently.
        if got != mapped {
            prop_assert_eq!(path_log_prob(&pt, &obs, &got), path_log_prob(&pt, &obs, &mapped));
        }
    }

    #[test]
    fn em_likelihood_never_decreases(seed in any::<u64>(), k in 1usize..=4, seqs in 1usize..=4, len in 2usize..=40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = small_alphabet();
        let t = random_tables(&mut rng, 3, a);
        let data: Vec<LabeledSequence> = (0..seqs).map(|_| LabeledSequence::unlabeled(sample(&t, &mut rng, len).0)).collect();
        let cfg = EmConfig { max_iters: 60, tol: 1e-12, seed, ..EmConfig::default() };
        let fit = em_train(&data, k, a, &cfg).unwrap();
        for w in fit.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8, "{} then {}", w[0], w[1]);
        }
        prop_assert!(fit.model.max_row_error() <= ROW_TOLERANCE);
        prop_assert!(fit.model.log_prior.iter().chain(fit.model.log_transition.iter().flatten()).all(|v| v.is_finite()));
        prop_assert!(fit.model.log_emission.iter().flatten().flatten().all(|v| v.is_finite()));
    }
}

/// Three well separated activities with sticky transitions.
fn planted() -> Tables {
    let peaked = |v: usize, at: &[usize], mass: f64| -> Vec<f64> {
        let rest = (1.0 - mass) / (v - at.len()) as f64;
        (0..v).map(|s| if at.contains(&s) { mass / at.len() as f64 } else { rest }).collect()
    };
    Tables {
        prior: vec![0.5, 0.3, 0.2],
        transition: vec![vec![0.9, 0.06, 0.04], vec![0.05, 0.85, 0.1], vec![0.08, 0.07, 0.85]],
        emission: [
            vec![peaked(8, &[0, 1], 0.7), peaked(8, &[2, 3], 0.7), peaked(8, &[5, 6], 0.7)],
            vec![peaked(4, &[0], 0.6), peaked(4, &[1], 0.6), peaked(4, &[3], 0.6)],
            vec![peaked(4, &[1], 0.8), peaked(4, &[2], 0.8), peaked(4, &[0, 3], 0.8)],
            vec![peaked(8, &[0], 0.5), peaked(8, &[4], 0.5), peaked(8, &[7], 0.5)],
        ],
    }
}

#[test]
fn planted_model_is_recovered() {
    let truth = planted();
    let a = Alphabet::new(4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut starts = [0usize; 3];
    let data: Vec<LabeledSequence> = (0..200)
        .map(|_| {
            let (obs, states) = sample(&truth, &mut rng, 60);
            starts[states[0]] += 1;
            LabeledSequence::unlabeled(obs)
        })
        .collect();
    let cfg = EmConfig { max_iters: 2000, tol: 1e-10, ..EmConfig::default() };
    let fit = em_train(&data, 3, a, &cfg).unwrap();
    let fitted = Tables::of(&fit.model);
    let (dist, perm) = table_distance(&truth, &fitted);
    assert!(dist <= 0.05, "worst row total variation {dist}");
    // the prior sees one draw per sequence, so compare with the sampled starts
    let empirical: Vec<f64> = starts.iter().map(|&c| c as f64 / 200.0).collect();
    let prior: Vec<f64> = (0..3).map(|i| fitted.prior[perm[i]]).collect();
    assert!(total_variation(&empirical, &prior) <= 0.05, "{empirical:?} vs {prior:?}");
    for w in fit.trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-8);
    }
}

#[test]
fn deterministic_emissions_decode_exactly() {
    let a = Alphabet::new(4);
    let k = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut t = random_tables(&mut rng, k, a);
    for s in 0..k {
        for l in 0..4 {
            t.emission[l][s] = (0..a.sizes[l]).map(|v| if v == s { 1.0 } else { 0.0 }).collect();
        }
    }
    let (obs, states) = sample(&t, &mut rng, 200);
    let d = viterbi_decode(&t.model(a), &obs).unwrap();
    assert_eq!(d.labels, states.iter().map(|s| s + 1).collect::<Vec<_>>());
    let covered: f64 = d.intervals.iter().map(|i| i.duration_s()).sum();
    assert_eq!(covered, 200.0);
}

#[test]
fn uniform_model_decodes_to_first_activity() {
    let a = Alphabet::new(6);
    let row = |n: usize| vec![1.0 / n as f64; n];
    let m = HdbnModel::from_probabilities(a, row(13), vec![row(13); 13], a.sizes.map(|v| vec![row(v); 13])).unwrap();
    let obs: Vec<ContextTuple> = (0..30)
        .map(|i| ContextTuple { slice: i, gesture: 1 + i % 8, posture: 1 + i % 6, ambient: Some(1 + i % 3), object: None })
        .collect();
    assert_eq!(viterbi_decode(&m, &obs).unwrap().labels, vec![1; 30]);
}

#[test]
fn model_round_trips_through_json() {
    let a = small_alphabet();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = random_tables(&mut rng, 3, a);
    let (obs, _) = sample(&t, &mut rng, 50);
    let fit = em_train(&[LabeledSequence::unlabeled(obs.clone())], 3, a, &EmConfig::default()).unwrap();
    let back: HdbnModel = serde_json::from_str(&serde_json::to_string(&fit.model).unwrap()).unwrap();
    assert_eq!(back, fit.model);
    assert_eq!(viterbi_decode(&back, &obs).unwrap(), viterbi_decode(&fit.model, &obs).unwrap());
}

