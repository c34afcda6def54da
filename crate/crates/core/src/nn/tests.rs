use super::*;
use crate::autograd::gradcheck::random_tensor;
use rand::{Rng, SeedableRng};

fn rand_input(shape: &[usize], seed: u64) -> Tensor<f64> {
    random_tensor(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn single_conv_with_bias_has_ten_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut init = Init::<f64, _> { params: ParamStore::new(), rng: &mut rng };
    init.conv("c", 1, 1, 3, true);
    assert_eq!(init.params.param_count(), 10);
}

#[test]
fn rcl_unit_parameter_count() {
    let b = Block::<f64>::rcl(16, 16, 2, 0);
    assert_eq!(b.param_count(), 4_656);
}

#[test]
fn transition_parameter_count_and_shape() {
    let b = Block::<f64>::transition(25, None, 0);
    assert_eq!(b.param_count(), 362);
    let y = b.apply(&rand_input(&[1, 25, 64, 64], 1), Mode::Train).unwrap();
    assert_eq!(y.shape(), &[1, 12, 32, 32]);
    let same = Block::<f64>::transition(6, Some(6), 0);
    assert_eq!(same.apply(&rand_input(&[2, 6, 4, 4], 2), Mode::Train).unwrap().shape(), &[2, 6, 2, 2]);
    assert!(b.apply(&rand_input(&[1, 25, 5, 4], 1), Mode::Train).is_err());
}

#[test]
fn rcl_output_width_is_independent_of_t() {
    for t in 0..4 {
        let b = Block::<f64>::rcl(3, 7, t, 1);
        assert_eq!(b.apply(&rand_input(&[2, 3, 6, 6], 2), Mode::Train).unwrap().shape(), &[2, 7, 6, 6]);
    }
    let b = Block::<f64>::rcl(3, 7, 1, 1);
    assert!(b.apply(&rand_input(&[2, 4, 6, 6], 2), Mode::Train).is_err());
}

#[test]
fn rcl_t0_equals_feedforward_path() {
    let b = Block::<f64>::rcl(4, 6, 0, 3);
    let x = rand_input(&[2, 4, 8, 8], 4);
    for mode in [Mode::Train, Mode::Eval] {
        let out = b.apply(&x, mode).unwrap();
        let ff = b.rcl_feedforward(&x, mode).unwrap();
        let diff = out.data().iter().zip(ff.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-12, "{diff}");
    }
}

#[test]
fn zero_recurrent_kernel_makes_output_independent_of_t() {
    let mut b = Block::<f64>::rcl(4, 6, 0, 5);
    let wr = b.params().find("rcl.wr.weight").unwrap();
    b.params_mut().value_mut(wr).data_mut().iter_mut().for_each(|v| *v = 0.0);
    let x = rand_input(&[2, 4, 8, 8], 6);
    let base = b.apply(&x, Mode::Train).unwrap();
    for t in 1..4 {
        b.set_t(t);
        let out = b.apply(&x, Mode::Train).unwrap();
        let diff = out.data().iter().zip(base.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-12, "t={t}: {diff}");
    }
}

#[test]
fn dcrc_block_channel_arithmetic() {
    let spec = DcrcBlockSpec { layers_per_block: 3, growth_rate: 5, t: 2, input_channels: 10 };
    assert_eq!(spec.output_channels(), 25);
    assert_eq!(spec.layer_input_channels(3), 20);
    let b = Block::<f64>::dcrc(spec, 0);
    let w3 = b.params().find("dcrc.layer3.wf.weight").unwrap();
    assert_eq!(b.params().value(w3).shape(), &[5, 20, 3, 3]);
    assert_eq!(b.apply(&rand_input(&[1, 10, 4, 4], 0), Mode::Train).unwrap().shape(), &[1, 25, 4, 4]);
}

#[test]
fn empty_dcrc_block_is_identity() {
    let spec = DcrcBlockSpec { layers_per_block: 0, growth_rate: 5, t: 2, input_channels: 4 };
    let b = Block::<f64>::dcrc(spec, 0);
    let x = rand_input(&[1, 4, 4, 4], 9);
    assert_eq!(b.apply(&x, Mode::Train).unwrap(), x);
    assert_eq!(b.param_count(), 0);
}

#[test]
fn random_dcrc_specs_obey_channel_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..50 {
        let spec = DcrcBlockSpec {
            layers_per_block: rng.random_range(0..4),
            growth_rate: rng.random_range(1..6),
            t: rng.random_range(0..3),
            input_channels: rng.random_range(1..8),
        };
        let b = Block::<f64>::dcrc(spec, rng.random());
        let y = b.apply(&rand_input(&[1, spec.input_channels, 4, 4], 1), Mode::Train).unwrap();
        assert_eq!(y.shape()[1], spec.input_channels + spec.layers_per_block * spec.growth_rate);
    }
}

#[test]
fn dcrn_channel_trace_and_logits() {
    let spec = ModelSpec::dcrn(3, 3);
    let trace: Vec<usize> = spec.channel_trace().into_iter().map(|(_, c)| c).collect();
    assert_eq!(trace, vec![16, 31, 15, 30, 15, 30, 15, 30, 3]);
    let model = Model::<f64>::build(&spec, 1).unwrap();
    let y = model.predict(&rand_input(&[2, 3, 64, 64], 3)).unwrap();
    assert_eq!(y.shape(), &[2, 3]);
    assert!(model.predict(&rand_input(&[1, 3, 12, 12], 3)).is_err());
    assert!(model.predict(&rand_input(&[1, 1, 16, 16], 3)).is_err());
}

#[test]
fn r2unet_shapes_and_probability_range() {
    let model = build_r2unet::<f64>(1, 2, 0).unwrap();
    let mut g = Graph::new();
    let x = g.input(rand_input(&[1, 1, 64, 64], 5), false);
    let out = model.forward(&mut g, x, Mode::Train).unwrap();
    let y = g.value(out.output);
    assert_eq!(y.shape(), &[1, 1, 64, 64]);
    let (lo, hi) = y.data().iter().fold((1.0f64, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    assert!(lo > 0.0 && hi < 1.0, "range [{lo}, {hi}]");
    let m = model.param_id("dec1.match.weight").unwrap();
    assert_eq!(model.params().value(m).shape(), &[16, 48, 1, 1]);
    assert!(model.predict(&rand_input(&[1, 1, 20, 20], 5)).is_err());
}

#[test]
fn udnet_head_is_linear_and_unfolds_three_times() {
    let model = build_udnet::<f64>(1, 3, 0).unwrap();
    let mut g = Graph::new();
    let x = g.input(rand_input(&[1, 1, 16, 16], 7), false);
    let vars = model.params().bind(&mut g);
    let out = model.forward_bound(&mut g, &vars, x, Mode::Eval).unwrap();
    assert_eq!(out.logits, out.output);
    let units = model.rcl_units();
    assert_eq!(units.len(), 14);
    for u in units {
        assert_eq!(g.use_count(vars[u.recurrent_weight().index()]), 3);
    }
}

#[test]
fn r2unet_and_udnet_share_topology() {
    let a = build_r2unet::<f64>(1, 2, 0).unwrap();
    let b = build_udnet::<f64>(1, 3, 0).unwrap();
    assert_eq!(a.param_table(), b.param_table());
    assert_eq!(a.param_count(), 1_006_273);
}

#[test]
fn same_seed_gives_identical_parameters() {
    for spec in [ModelSpec::dcrn(3, 2), ModelSpec::r2unet(1)] {
        let a = Model::<f32>::build(&spec, 9).unwrap();
        let b = Model::<f32>::build(&spec, 9).unwrap();
        let c = Model::<f32>::build(&spec, 10).unwrap();
        let bits = |m: &Model<f32>| -> Vec<u32> {
            m.params().params().flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
    }
}

#[test]
fn spec_text_round_trip() {
    for spec in [ModelSpec::dcrn(3, 4), ModelSpec::r2unet(1).with_padding(Padding::Circular), ModelSpec::udnet(3)] {
        let text = spec.to_string();
        assert_eq!(text.parse::<ModelSpec>().unwrap(), spec);
    }
    assert!("family=unet".parse::<ModelSpec>().is_err());
    assert!("family=dcrn;classes=1".parse::<ModelSpec>().is_err());
    assert!("family=r2unet;padding=valid".parse::<ModelSpec>().is_err());
    assert!("family=dcrn;bogus=1".parse::<ModelSpec>().is_err());
}

#[test]
fn circular_r2unet_commutes_with_wrapped_shift() {
    let spec = ModelSpec::r2unet(1).with_padding(Padding::Circular);
    let model = Model::<f64>::build(&spec, 2).unwrap();
    let x = rand_input(&[1, 1, 64, 64], 8);
    let shift = |t: &Tensor<f64>, dy: usize, dx: usize| {
        let mut out = vec![0.0; 64 * 64];
        for y in 0..64 {
            for xx in 0..64 {
                out[((y + dy) % 64) * 64 + (xx + dx) % 64] = t.data()[y * 64 + xx];
            }
        }
        Tensor::from_f64(&[1, 1, 64, 64], &out).unwrap()
    };
    // Batch statistics are shift invariant; untrained running statistics would saturate the sigmoid.
    let run = |x: Tensor<f64>| {
        let mut g = Graph::new();
        let xv = g.input(x, false);
        let out = model.forward(&mut g, xv, Mode::Train).unwrap();
        g.value(out.output).clone()
    };
    let y = run(x.clone());
    assert!(y.data().iter().any(|&v| v > 0.01 && v < 0.99));
    let ys = run(shift(&x, 16, 16));
    let expect = shift(&y, 16, 16);
    let diff = ys.data().iter().zip(expect.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-6, "{diff}");
}

#[test]
fn small_dcrn_gradient_check() {
    let spec = ModelSpec { blocks: 2, layers: 2, growth: 3, stem_channels: 4, ..ModelSpec::dcrn(1, 2) };
    let report = grad_check_model(&spec, 8, &GradCheckOptions::new(1e-4).sampled(3), None).unwrap();
    assert!(report.passed(), "{}", report.to_table());
    assert_eq!(report.tensors.len(), Model::<f64>::build(&spec, 0).unwrap().params().len() + 1);
}

#[test]
fn train_mode_updates_running_stats_eval_does_not() {
    let mut model = Model::<f64>::build(&ModelSpec::dcrn(1, 2), 0).unwrap();
    let x = rand_input(&[2, 1, 16, 16], 1);
    let before: Vec<Tensor<f64>> = model.params().buffers().map(|(_, t)| t.clone()).collect();
    model.predict(&x).unwrap();
    let after_eval: Vec<Tensor<f64>> = model.params().buffers().map(|(_, t)| t.clone()).collect();
    assert_eq!(before, after_eval);
    let mut g = Graph::new();
    let xv = g.input(x, false);
    model.forward(&mut g, xv, Mode::Train).unwrap();
    model.apply_stat_updates(&mut g);
    let after_train: Vec<Tensor<f64>> = model.params().buffers().map(|(_, t)| t.clone()).collect();
    assert_ne!(before, after_train);
}
