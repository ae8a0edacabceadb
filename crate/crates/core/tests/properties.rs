use marginlab_core::loss::{
    amsoftmax_toy_grad, angular_softmax_loss, circle_loss, circle_loss_general, circle_toy_grad,
    classification_loss_grad, softmax_loss, CircleParams, LossSpec, SimilarityState,
};
use marginlab_core::schedule::ChunkMarginSpec;
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = LossSpec> {
    prop_oneof![
        (1.0..64.0f64).prop_map(LossSpec::softmax),
        (1.0..64.0f64, 0.0..0.6f64).prop_map(|(s, m)| LossSpec::am_softmax(s, m)),
        (1.0..64.0f64, 0.0..0.6f64).prop_map(|(s, m)| LossSpec::arc_softmax(s, m)),
        (1.0..64.0f64, 0.01..0.99f64).prop_map(|(s, m)| LossSpec::circle(s, m)),
    ]
}

fn cosines_and_label() -> impl Strategy<Value = (Vec<f64>, usize)> {
    prop::collection::vec(-1.0..=1.0f64, 2..20).prop_flat_map(|c| {
        let n = c.len();
        (Just(c), 0..n)
    })
}

proptest! {
    #[test]
    fn losses_are_non_negative((cos, label) in cosines_and_label(), spec in spec_strategy()) {
        let (loss, grad) = classification_loss_grad(&cos, label, &spec).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn am_toy_gradient_depends_on_difference_only(
        sp in 0.0..0.5f64, sn in 0.0..0.5f64, delta in -0.5..0.5f64, classes in 2usize..6000,
    ) {
        let spec = LossSpec::am_softmax(30.0, 0.2);
        let a = amsoftmax_toy_grad(sp, sn, &spec, classes).unwrap();
        let b = amsoftmax_toy_grad(sp + delta, sn + delta, &spec, classes).unwrap();
        prop_assert_eq!(a.g_p, a.g_n);
        prop_assert!((a.g_p - b.g_p).abs() <= 1e-12 * a.g_p.abs().max(1e-300) + 1e-300);
    }

    #[test]
    fn am_toy_gradient_exact_on_dyadic_shifts(i in 0u32..40, j in 0u32..40, k in 0u32..64) {
        let (sp, sn, delta) = (i as f64 / 64.0, j as f64 / 64.0, k as f64 / 256.0);
        let spec = LossSpec::am_softmax(30.0, 0.25);
        let a = amsoftmax_toy_grad(sp, sn, &spec, 100).unwrap();
        let b = amsoftmax_toy_grad(sp + delta, sn + delta, &spec, 100).unwrap();
        prop_assert_eq!(a.g_p, b.g_p);
        prop_assert_eq!(a.g_n, b.g_n);
    }

    #[test]
    fn circle_toy_gradients_point_toward_optimum(
        sp in -1.0..=1.0f64, sn in 0.0..=1.0f64, m in 0.05..0.9f64, classes in 2usize..6000,
    ) {
        let g = circle_toy_grad(sp, sn, &LossSpec::circle(60.0, m), classes).unwrap();
        prop_assert!(g.g_p >= 0.0);
        prop_assert!(g.g_n >= 0.0);
    }

    #[test]
    fn circle_loss_non_increasing_in_positive(
        a in -1.0..=1.0f64, b in -1.0..=1.0f64,
        negs in prop::collection::vec(-1.0..=1.0f64, 1..8), m in 0.05..0.9f64, s in 1.0..64.0f64,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let spec = LossSpec::circle(s, m);
        let l_lo = circle_loss(&SimilarityState::new(lo, negs.clone()).unwrap(), &spec).unwrap();
        let l_hi = circle_loss(&SimilarityState::new(hi, negs).unwrap(), &spec).unwrap();
        prop_assert!(l_hi <= l_lo);
    }

    #[test]
    fn circle_loss_minimal_at_zero_negative(
        sp in -1.0..=1.0f64, sn in -1.0..=1.0f64, m in 0.05..0.9f64, s in 1.0..64.0f64,
    ) {
        let spec = LossSpec::circle(s, m);
        let at = circle_loss(&SimilarityState::new(sp, vec![sn]).unwrap(), &spec).unwrap();
        let zero = circle_loss(&SimilarityState::new(sp, vec![0.0]).unwrap(), &spec).unwrap();
        prop_assert!(zero <= at);
    }

    #[test]
    fn general_form_reduces_to_circle_loss(
        sp in -1.0..=1.0f64, negs in prop::collection::vec(-1.0..=1.0f64, 1..30),
        m in 0.01..0.99f64, s in 1.0..64.0f64,
    ) {
        let st = SimilarityState::new(sp, negs).unwrap();
        let a = circle_loss(&st, &LossSpec::circle(s, m)).unwrap();
        let b = circle_loss_general(&st, &CircleParams::reduced(s, m)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()) + 1e-300, "{} vs {}", a, b);
    }

    #[test]
    fn identity_angular_equals_scaled_softmax(
        angles in prop::collection::vec(0.0..=core::f64::consts::PI, 2..20), s in 1.0..64.0f64,
    ) {
        let a = angular_softmax_loss(angles[0], &angles[1..], &LossSpec::angular(s, 1.0, 0.0, 0.0)).unwrap();
        let logits: Vec<f64> = angles.iter().map(|t| s * t.cos()).collect();
        let b = softmax_loss(&logits, 0).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()) + 1e-300, "{} vs {}", a, b);
    }

    #[test]
    fn circle_boundary_gives_equal_logits(sn_frac in 0.0..=1.0f64, m in 0.05..0.7f64) {
        // Any point on (1 - s_p)² + s_n² = 2m² with s_p <= 1.
        let sn = sn_frac * m * std::f64::consts::SQRT_2;
        let sp = 1.0 - (2.0 * m * m - sn * sn).max(0.0).sqrt();
        prop_assume!(sp >= -1.0);
        let l = circle_loss(&SimilarityState::new(sp, vec![sn]).unwrap(), &LossSpec::circle(60.0, m)).unwrap();
        prop_assert!((l - std::f64::consts::LN_2).abs() < 1e-9, "{}", l);
    }

    #[test]
    fn chunk_margin_is_affine_and_bounded(
        m0 in 0.01..0.99f64, lambda in 0.0..=1.0f64, l_min in 1usize..500, span in 1usize..500,
    ) {
        let spec = ChunkMarginSpec::new(m0, lambda, l_min, l_min + span).unwrap();
        let mut prev = f64::INFINITY;
        for l in l_min..=l_min + span {
            let m = spec.chunk_margin(l).unwrap();
            prop_assert!(m <= prev);
            prop_assert!(m >= (1.0 - lambda) * m0 - 1e-15 && m <= m0);
            prev = m;
        }
        let mid = spec.chunk_margin(l_min + span / 2).unwrap();
        let frac = (span / 2) as f64 / span as f64;
        prop_assert!((mid - (m0 + frac * ((1.0 - lambda) * m0 - m0))).abs() < 1e-14);
    }
}

#[test]
fn circle_boundary_is_exact_on_dyadic_points() {
    for (sp, sn, m) in [(0.5, 0.5, 0.5), (0.75, 0.25, 0.25), (0.875, 0.125, 0.125)] {
        let l = circle_loss(&SimilarityState::new(sp, vec![sn]).unwrap(), &LossSpec::circle(60.0, m)).unwrap();
        assert_eq!(l, std::f64::consts::LN_2);
    }
}
