//! EER and minDCF against a brute-force threshold sweep.

use marginlab_core::metrics::{compute_eer, compute_min_dcf, eer_from_rates, DcfSpec, TrialScore};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Evaluates error rates at every midpoint between consecutive distinct
/// scores, plus one threshold above and one below all scores, by counting.
fn brute_force_rates(trials: &[TrialScore]) -> Vec<(f64, f64, f64)> {
    let mut scores: Vec<f64> = trials.iter().map(|t| t.score).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.dedup();
    let mut thresholds = vec![scores[0] + 1.0];
    thresholds.extend(scores.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    thresholds.push(scores[scores.len() - 1] - 1.0);

    let nt = trials.iter().filter(|t| t.is_target).count() as f64;
    let nn = trials.len() as f64 - nt;
    thresholds
        .into_iter()
        .map(|th| {
            let miss = trials.iter().filter(|t| t.is_target && t.score < th).count() as f64;
            let fa = trials.iter().filter(|t| !t.is_target && t.score >= th).count() as f64;
            (miss / nt, fa / nn, th)
        })
        .collect()
}

fn oracle_eer(trials: &[TrialScore]) -> f64 {
    eer_from_rates(&brute_force_rates(trials)).eer
}

fn oracle_min_dcf(trials: &[TrialScore], spec: &DcfSpec) -> f64 {
    brute_force_rates(trials)
        .iter()
        .map(|&(pm, pf, _)| spec.cost(pm, pf) / spec.normalizer())
        .fold(f64::INFINITY, f64::min)
}

fn random_trials(rng: &mut ChaCha8Rng, n: usize) -> Vec<TrialScore> {
    // Coarse quantization in some sets forces ties.
    let levels = if rng.random_bool(0.3) { Some(rng.random_range(3..40)) } else { None };
    let shift = rng.random_range(0.0..1.5);
    let mut trials: Vec<TrialScore> = (0..n)
        .map(|_| {
            let target = rng.random_bool(0.3);
            let mut s: f64 = rng.random_range(-1.0..1.0) + if target { shift } else { 0.0 };
            if let Some(l) = levels {
                s = (s * l as f64).round() / l as f64;
            }
            TrialScore::new(s, target)
        })
        .collect();
    trials[0].is_target = true;
    trials[1].is_target = false;
    trials
}

#[test]
fn sweep_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let spec = DcfSpec::default();
    for _ in 0..200 {
        let n = rng.random_range(2..=1000);
        let trials = random_trials(&mut rng, n);
        let eer = compute_eer(&trials).unwrap().eer;
        assert!((eer - oracle_eer(&trials)).abs() <= 1e-12);
        let dcf = compute_min_dcf(&trials, &spec).unwrap().min_dcf;
        assert!((dcf - oracle_min_dcf(&trials, &spec)).abs() <= 1e-12);
        assert!(dcf <= 1.0 + 1e-12);
    }
}

#[test]
fn fifty_trial_min_dcf_with_other_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let trials = random_trials(&mut rng, 50);
    let spec = DcfSpec {
        p_target: 0.05,
        c_miss: 10.0,
        c_fa: 1.0,
    };
    let got = compute_min_dcf(&trials, &spec).unwrap().min_dcf;
    assert!((got - oracle_min_dcf(&trials, &spec)).abs() <= 1e-12);
}

fn trial_set() -> impl Strategy<Value = Vec<TrialScore>> {
    prop::collection::vec((-1.0..1.0f64, any::<bool>()), 2..300).prop_map(|v| {
        let mut t: Vec<TrialScore> = v.into_iter().map(|(s, y)| TrialScore::new(s, y)).collect();
        t[0].is_target = true;
        t[1].is_target = false;
        t
    })
}

proptest! {
    #[test]
    fn rank_preserving_transform_leaves_metrics_unchanged(trials in trial_set()) {
        let transformed: Vec<TrialScore> = trials
            .iter()
            .map(|t| TrialScore::new((3.0 * t.score).tanh() + t.score.powi(3), t.is_target))
            .collect();
        // The transform must keep order and ties in floating point.
        let order = |v: &[TrialScore]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].score.total_cmp(&v[j].score).then(i.cmp(&j)));
            let ties: Vec<bool> = idx.windows(2).map(|w| v[w[0]].score == v[w[1]].score).collect();
            (idx, ties)
        };
        prop_assume!(order(&trials) == order(&transformed));
        let spec = DcfSpec::default();
        prop_assert_eq!(compute_eer(&trials).unwrap().eer, compute_eer(&transformed).unwrap().eer);
        prop_assert_eq!(
            compute_min_dcf(&trials, &spec).unwrap().min_dcf,
            compute_min_dcf(&transformed, &spec).unwrap().min_dcf
        );
    }

    #[test]
    fn min_dcf_bounded_by_eer_operating_point(trials in trial_set()) {
        let spec = DcfSpec::default();
        let eer = compute_eer(&trials).unwrap();
        let min = compute_min_dcf(&trials, &spec).unwrap().min_dcf;
        prop_assert!(min <= 1.0);
        let nt = trials.iter().filter(|t| t.is_target).count() as f64;
        let nn = trials.len() as f64 - nt;
        let pm = trials.iter().filter(|t| t.is_target && t.score < eer.threshold).count() as f64 / nt;
        let pf = trials.iter().filter(|t| !t.is_target && t.score >= eer.threshold).count() as f64 / nn;
        prop_assert!(min <= spec.cost(pm, pf) / spec.normalizer() + 1e-15);
    }
}
