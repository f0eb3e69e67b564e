use graphirl::data::{featurize_frame, BoundingBox, FrameGraph};
use graphirl::encoder::EncoderParams;
use graphirl::env::{reset, rollout, step, Action, EnvConfig, Expert};
use graphirl::numcore::{adam_step, AdamState, Matrix};
use graphirl::policy::{fitness, Policy, RewardSource, PARAM_COUNT};
use graphirl::reward::RewardModel;
use graphirl::tcc::{pair_loss, pair_loss_and_gradients};
use proptest::prelude::*;

fn boxes(m: usize) -> impl Strategy<Value = Vec<BoundingBox>> {
    prop::collection::vec((0.0..0.8f64, 0.0..0.8f64, 0.01..0.2f64, 0.01..0.2f64), m)
        .prop_map(|v| v.into_iter().map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h).unwrap()).collect())
}

fn frames(m: usize, n: usize) -> impl Strategy<Value = Vec<FrameGraph>> {
    prop::collection::vec(boxes(m), n).prop_map(|seq| seq.iter().map(|b| featurize_frame(b).unwrap()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adam_is_identity_without_gradient_or_decay(
        data in prop::collection::vec(-5.0..5.0f64, 1..20),
        lr in 1e-6..1e-1f64,
        steps in 1usize..5,
    ) {
        let mut p = Matrix::row_vector(data.clone());
        let mut state = AdamState::new([&p], lr, 0.0);
        let zero = vec![Matrix::zeros(1, data.len())];
        for _ in 0..steps {
            adam_step(&mut [&mut p], &zero, &mut state).unwrap();
        }
        prop_assert_eq!(p.data(), &data[..]);
    }

    #[test]
    fn encoder_ignores_object_enumeration_order(
        b in boxes(4),
        seed in 0u64..1000,
        shuffle in Just(()).prop_perturb(|_, mut rng| {
            let mut order: Vec<usize> = (0..4).collect();
            for i in (1..4).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            order
        }),
    ) {
        let enc = EncoderParams::init(4, 16, 8, seed).unwrap();
        let frame = featurize_frame(&b).unwrap();
        let rows: Vec<Vec<f64>> = shuffle.iter().map(|&i| frame.object(i).as_slice().to_vec()).collect();
        let permuted = FrameGraph::from_features(Matrix::from_rows(&rows).unwrap()).unwrap();
        let (x, y) = (enc.encode_frame(&frame).unwrap(), enc.encode_frame(&permuted).unwrap());
        for (u, v) in x.iter().zip(&y) {
            prop_assert!((u - v).abs() < 1e-12);
        }
        prop_assert_eq!(x, enc.encode_frame(&frame).unwrap());
    }

    #[test]
    fn interaction_term_reaches_the_embedding(b in boxes(3), seed in 0u64..1000) {
        let enc = EncoderParams::init(3, 16, 8, seed).unwrap();
        let mut cut = enc.clone();
        for w in cut.phi_in.tensors_mut() {
            w.scale(0.0);
        }
        let frame = featurize_frame(&b).unwrap();
        prop_assert_ne!(enc.encode_frame(&frame).unwrap(), cut.encode_frame(&frame).unwrap());
    }

    #[test]
    fn reward_is_nonpositive_and_orders_by_distance(
        goal in prop::collection::vec(-2.0..2.0f64, 4),
        a in prop::collection::vec(-2.0..2.0f64, 4),
        b in prop::collection::vec(-2.0..2.0f64, 4),
        scale in 1e-3..10.0f64,
    ) {
        let rm = RewardModel::new(EncoderParams::init(2, 4, 4, 0).unwrap(), goal.clone(), scale).unwrap();
        let d = |x: &[f64]| x.iter().zip(&goal).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        let (ra, rb) = (rm.reward_from_embedding(&a), rm.reward_from_embedding(&b));
        prop_assert!(ra <= 0.0 && rb <= 0.0);
        prop_assert_eq!(rm.reward_from_embedding(&goal), 0.0);
        if d(&a) < d(&b) {
            prop_assert!(ra > rb);
        }
    }

    #[test]
    fn dynamics_are_pure(seed in 0u64..10_000, dx in -0.1..0.1f64, dy in -0.1..0.1f64) {
        let cfg = EnvConfig::push2d();
        let s = reset(&cfg, seed);
        let a = Action::new(dx, dy, &cfg);
        let (x, y) = (step(&s, a, &cfg), step(&s, a, &cfg));
        prop_assert_eq!(x.state, y.state);
        prop_assert_eq!(x.done, y.done);
        prop_assert_eq!(s.t + 1, x.state.t);
    }

    #[test]
    fn policy_fitness_is_a_function_of_its_inputs(
        params in prop::collection::vec(-1.0..1.0f64, PARAM_COUNT),
        seeds in prop::collection::vec(0u64..1000, 1..4),
    ) {
        let cfg = EnvConfig::push2d();
        let policy = Policy::new(params, cfg.max_step, cfg.task).unwrap();
        let f = fitness(&policy, &cfg, RewardSource::GroundTruth, &seeds).unwrap();
        prop_assert_eq!(f, fitness(&policy.clone(), &cfg, RewardSource::GroundTruth, &seeds).unwrap());
        prop_assert!(f <= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Central differences on sampled coordinates, skipping stencils that
    /// straddle a ReLU kink.
    #[test]
    fn pair_loss_gradient_matches_finite_differences(
        fa in frames(3, 5),
        fb in frames(3, 6),
        seed in 0u64..1000,
        picks in prop::collection::vec((0usize..12, 0usize..1000), 24),
    ) {
        const H: f64 = 1e-5;
        let enc = EncoderParams::init(3, 8, 6, seed).unwrap();
        let (base, grads) = pair_loss_and_gradients(&enc, &fa, &fb, 0.1, 1.0).unwrap();
        let mut probe = enc.clone();
        for (t, k) in picks {
            let k = k % grads[t].len();
            let orig = probe.tensors()[t].data()[k];
            probe.tensors_mut()[t].data_mut()[k] = orig + H;
            let up = pair_loss(&probe, &fa, &fb, 0.1, 1.0).unwrap();
            probe.tensors_mut()[t].data_mut()[k] = orig - H;
            let down = pair_loss(&probe, &fa, &fb, 0.1, 1.0).unwrap();
            probe.tensors_mut()[t].data_mut()[k] = orig;
            if (up + down - 2.0 * base).abs() > 1e-2 * (up - down).abs().max(1e-12) {
                continue;
            }
            let (a, n) = (grads[t].data()[k], (up - down) / (2.0 * H));
            let err = (a - n).abs();
            prop_assert!(err < 1e-8 || err / a.abs().max(n.abs()) < 1e-4, "t{} k{}: {} vs {}", t, k, a, n);
        }
    }
}

#[test]
fn expert_rollouts_are_reproducible() {
    let cfg = EnvConfig::push2d();
    for seed in 0..20 {
        let x = rollout(&cfg, &Expert::new(&cfg, seed), seed);
        let y = rollout(&cfg, &Expert::new(&cfg, seed), seed);
        assert_eq!(x.states, y.states);
    }
}
