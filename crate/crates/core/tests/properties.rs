use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uacer::nn::{Activation, InitConfig, Mlp};
use uacer::sac::{ReplayBuffer, Transition};
use uacer::tdu::{aggregate_weights, aggregate_with_beta, AggregationMode, TduSchedule};

const FD_STEP: f64 = 1e-6;

fn activation(i: u8) -> Activation {
    Activation::DIVERSE[usize::from(i) % 3]
}

/// `sum(out * g)`, the scalar whose gradient backward computes for `grad_out = g`.
fn weighted_output(net: &Mlp, x: &Array2<f64>, g: &Array2<f64>) -> f64 {
    (net.forward_batch(x.view()).unwrap() * g).sum()
}

fn near_kink(net: &Mlp, x: &Array2<f64>) -> bool {
    let (_, tape) = net.forward_tape(x.view()).unwrap();
    (0..tape.num_layers()).any(|i| {
        net.layers()[i].activation != Activation::Identity
            && net.layers()[i].activation != Activation::Elu
            && tape.pre_activation(i).iter().any(|z| z.abs() < 1e-4)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backward_matches_finite_differences(
        seed in any::<u64>(),
        dims in prop::collection::vec(1usize..5, 2..5),
        acts in prop::collection::vec(0u8..3, 3),
        batch in 1usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden: Vec<Activation> = (0..dims.len() - 2).map(|i| activation(acts[i])).collect();
        let mut net = Mlp::new(&dims, &hidden, InitConfig::default(), &mut rng).unwrap();
        let x = Array2::from_shape_fn((batch, dims[0]), |(i, j)| ((seed >> (i + j)) % 7) as f64 / 3.0 - 1.0);
        let g = Array2::from_shape_fn((batch, dims[dims.len() - 1]), |(i, j)| 0.5 + 0.25 * (i + j) as f64);
        prop_assume!(!near_kink(&net, &x));

        let (_, tape) = net.forward_tape(x.view()).unwrap();
        let grads = net.backward(&tape, g.view()).unwrap();

        for l in 0..net.layers().len() {
            let (rows, cols) = net.layers()[l].weights.dim();
            for r in 0..rows {
                for c in 0..cols {
                    let w0 = net.layers()[l].weights[[r, c]];
                    net.layers_mut()[l].weights[[r, c]] = w0 + FD_STEP;
                    let up = weighted_output(&net, &x, &g);
                    net.layers_mut()[l].weights[[r, c]] = w0 - FD_STEP;
                    let down = weighted_output(&net, &x, &g);
                    net.layers_mut()[l].weights[[r, c]] = w0;
                    let fd = (up - down) / (2.0 * FD_STEP);
                    let an = grads.weights[l][[r, c]];
                    prop_assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "layer {l} w[{r},{c}]: fd {fd} vs {an}");
                }
                let b0 = net.layers()[l].bias[r];
                net.layers_mut()[l].bias[r] = b0 + FD_STEP;
                let up = weighted_output(&net, &x, &g);
                net.layers_mut()[l].bias[r] = b0 - FD_STEP;
                let down = weighted_output(&net, &x, &g);
                net.layers_mut()[l].bias[r] = b0;
                let fd = (up - down) / (2.0 * FD_STEP);
                prop_assert!((fd - grads.biases[l][r]).abs() <= 1e-5 * (1.0 + fd.abs()));
            }
        }
        for i in 0..batch {
            for j in 0..dims[0] {
                let mut xp = x.clone();
                xp[[i, j]] += FD_STEP;
                let mut xm = x.clone();
                xm[[i, j]] -= FD_STEP;
                let fd = (weighted_output(&net, &xp, &g) - weighted_output(&net, &xm, &g)) / (2.0 * FD_STEP);
                prop_assert!((fd - grads.input[[i, j]]).abs() <= 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn aggregate_stays_within_mean_plus_minus_beta_std(
        q in prop::collection::vec(-1e3f64..1e3, 2..12),
        beta in 0.0f64..2.0,
    ) {
        let r = aggregate_with_beta(&q, AggregationMode::TduExponential, beta).unwrap();
        let lo = q.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(r.mean >= lo - 1e-9 && r.mean <= hi + 1e-9);
        prop_assert!(r.std >= 0.0);
        prop_assert!((r.q_e - (r.mean + beta * r.std)).abs() <= 1e-9 * (1.0 + r.q_e.abs()));
        let pess = aggregate_with_beta(&q, AggregationMode::PessimismMin, beta).unwrap();
        prop_assert!(pess.q_e <= r.mean + 1e-9);
        let min = aggregate_with_beta(&q, AggregationMode::MinOfAll, beta).unwrap();
        prop_assert_eq!(min.q_e, lo);
    }

    #[test]
    fn aggregate_is_permutation_invariant_and_shift_equivariant(
        q in prop::collection::vec(-100f64..100.0, 2..9),
        shift in -50f64..50.0,
        rot in 0usize..9,
    ) {
        for mode in AggregationMode::ALL {
            let base = aggregate_with_beta(&q, mode, 0.4).unwrap();
            let mut p = q.clone();
            p.rotate_left(rot % q.len());
            let permuted = aggregate_with_beta(&p, mode, 0.4).unwrap();
            prop_assert_eq!(base, permuted);
            let shifted: Vec<f64> = q.iter().map(|v| v + shift).collect();
            let s = aggregate_with_beta(&shifted, mode, 0.4).unwrap();
            prop_assert!((s.q_e - base.q_e - shift).abs() <= 1e-9 * (1.0 + base.q_e.abs() + shift.abs()));
        }
    }

    #[test]
    fn aggregate_weights_match_finite_differences(
        q in prop::collection::vec(-10f64..10.0, 2..7),
        beta in 0.0f64..1.0,
    ) {
        let mode = AggregationMode::TduExponential;
        let r = aggregate_with_beta(&q, mode, beta).unwrap();
        prop_assume!(r.std > 1e-3);
        let w = aggregate_weights(&q, mode, beta).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for k in 0..q.len() {
            let mut up = q.clone();
            up[k] += FD_STEP;
            let mut down = q.clone();
            down[k] -= FD_STEP;
            let fd = (aggregate_with_beta(&up, mode, beta).unwrap().q_e
                - aggregate_with_beta(&down, mode, beta).unwrap().q_e)
                / (2.0 * FD_STEP);
            prop_assert!((fd - w[k]).abs() < 1e-6, "k {k}: {fd} vs {}", w[k]);
        }
    }

    #[test]
    fn beta_schedule_decreases_to_its_floor(
        beta_min in 0.0f64..0.5,
        lambda in 0.1f64..10.0,
        total in 1u32..500,
    ) {
        let s = TduSchedule::new(1.0 - beta_min, beta_min, lambda, total, AggregationMode::TduExponential).unwrap();
        prop_assert!((s.beta(0).unwrap() - 1.0).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for n in 0..=total {
            let b = s.beta(n).unwrap();
            prop_assert!(b <= prev && b >= beta_min);
            prev = b;
        }
    }

    #[test]
    fn replay_samples_are_distinct_and_bounded(
        len in 1usize..200,
        batch in 1usize..64,
        seed in any::<u64>(),
    ) {
        let mut buf = ReplayBuffer::new(150, 1, 1).unwrap();
        for i in 0..len {
            buf.push(Transition {
                state: vec![i as f64],
                protagonist_action: vec![0.0],
                adversary_action: vec![0.0],
                reward: i as f64,
                next_state: vec![0.0],
                done: false,
            });
        }
        prop_assert_eq!(buf.len(), len.min(150));
        let sample = buf.sample(batch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(sample.len(), batch.min(buf.len()));
        let mut ids: Vec<u64> = sample.iter().map(|t| t.reward as u64).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), sample.len());
        // oldest entries are evicted first
        let oldest = len.saturating_sub(150) as u64;
        prop_assert!(ids.iter().all(|&i| i >= oldest));
    }
}
