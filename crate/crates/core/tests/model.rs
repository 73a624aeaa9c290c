mod common;

use bcresnet::model::{
    cost_report, count_mults, count_params, input_shape, ModelConfig, ModelParams,
};
use bcresnet::nn::{Ctx, Module};
use bcresnet::{Shape, Tensor};
use common::{random, rng};

const TAUS: [f64; 6] = [1.0, 1.5, 2.0, 3.0, 6.0, 8.0];

#[test]
fn widths_scale_with_tau() {
    let w = |tau| ModelConfig::bc_resnet(tau).widths().unwrap();
    assert_eq!(w(1.0).stages, [8, 12, 16, 20]);
    assert_eq!((w(1.0).stem, w(1.0).head), (16, 32));
    assert_eq!(w(8.0).stages, [64, 96, 128, 160]);
    assert_eq!(w(1.5).stages, [12, 18, 24, 30]);
}

#[test]
fn invalid_tau_is_rejected() {
    for tau in [0.0, -1.0, f64::NAN, 0.01] {
        assert!(ModelConfig::bc_resnet(tau).validate().is_err(), "{tau}");
        assert!(count_params(&ModelConfig::bc_resnet(tau)).is_err());
    }
}

#[test]
fn shape_ledger_follows_layer_map() {
    let m = ModelParams::<f32>::build(ModelConfig::bc_resnet(1.0), &mut rng(0)).unwrap();
    let x = random(input_shape(1, 98), 1);
    let (logits, trace) = m.forward(&x, &mut Ctx::eval()).unwrap();
    assert_eq!(
        trace.shape_ledger,
        [
            (16, 20),
            (8, 20),
            (12, 10),
            (16, 5),
            (20, 5),
            (20, 1),
            (32, 1),
            (32, 1),
            (12, 1)
        ]
    );
    assert_eq!(logits.shape(), Shape::new(1, 12, 1, 1));
}

#[test]
fn allocated_parameters_match_the_count() {
    for tau in TAUS {
        let cfg = ModelConfig::bc_resnet(tau);
        let m = ModelParams::<f32>::build(cfg, &mut rng(1)).unwrap();
        assert_eq!(
            m.num_params() as u64,
            count_params(&cfg).unwrap(),
            "tau {tau}"
        );
    }
}

#[test]
fn metered_forward_matches_analytic_mults() {
    for tau in [1.0, 1.5, 3.0] {
        for frames in [98, 100, 37] {
            let cfg = ModelConfig::bc_resnet(tau);
            let m = ModelParams::<f32>::build(cfg, &mut rng(2)).unwrap();
            let mut ctx = Ctx::eval();
            m.forward(&random(input_shape(1, frames), 3), &mut ctx)
                .unwrap();
            assert_eq!(
                ctx.meter.mults,
                count_mults(&cfg, frames).unwrap(),
                "tau {tau} W {frames}"
            );
        }
    }
}

#[test]
fn report_totals_are_layer_sums() {
    let r = cost_report(&ModelConfig::bc_resnet(2.0), 100).unwrap();
    assert_eq!(r.params, r.layers.iter().map(|l| l.params).sum::<u64>());
    assert_eq!(r.mults, r.layers.iter().map(|l| l.mults).sum::<u64>());
    assert!(r.to_string().contains("total params"));
}

#[test]
fn costs_increase_with_tau() {
    let costs: Vec<(u64, u64)> = TAUS
        .iter()
        .map(|&t| {
            let cfg = ModelConfig::bc_resnet(t);
            (count_params(&cfg).unwrap(), count_mults(&cfg, 100).unwrap())
        })
        .collect();
    for w in costs.windows(2) {
        assert!(w[1].0 > w[0].0 && w[1].1 > w[0].1);
    }
}

#[test]
fn identical_batch_rows_give_identical_logits() {
    let m = ModelParams::<f32>::build(ModelConfig::bc_resnet(1.0), &mut rng(4)).unwrap();
    let one = random::<f32>(input_shape(1, 98), 5);
    let x = Tensor::stack_batch(&[one.clone(), one]).unwrap();
    let rows = m.predict(&x).unwrap();
    assert_eq!(rows[0], rows[1]);
    assert_eq!(rows[0].len(), 12);
}

#[test]
fn zero_input_gives_finite_logits() {
    let m = ModelParams::<f32>::build(ModelConfig::bc_resnet(1.0), &mut rng(6)).unwrap();
    let rows = m.predict(&Tensor::zeros(input_shape(2, 98))).unwrap();
    assert!(rows.iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn wrong_height_is_rejected() {
    let m = ModelParams::<f32>::build(ModelConfig::bc_resnet(1.0), &mut rng(7)).unwrap();
    let x = Tensor::<f32>::zeros(Shape::new(1, 1, 32, 98));
    assert!(m.forward(&x, &mut Ctx::eval()).is_err());
    let mut cfg = ModelConfig::bc_resnet(1.0);
    cfg.n_mels = 64;
    assert!(ModelParams::<f32>::build(cfg, &mut rng(0)).is_err());
}

#[test]
fn training_step_moves_running_stats_only_on_commit() {
    let mut m = ModelParams::<f32>::build(ModelConfig::bc_resnet(1.0), &mut rng(8)).unwrap();
    let before = m.stem_bn.running_mean.clone();
    let x = random(input_shape(2, 20), 9);
    let (_, trace) = m.forward(&x, &mut Ctx::train(0)).unwrap();
    assert_eq!(m.stem_bn.running_mean, before);
    m.commit_stats(&trace);
    assert_ne!(m.stem_bn.running_mean, before);
}

#[test]
fn cast_round_trip_preserves_values() {
    let m = ModelParams::<f32>::build(ModelConfig::bc_resnet(1.5), &mut rng(10)).unwrap();
    let back = m.cast::<f64>().cast::<f32>();
    let x = random(input_shape(1, 30), 11);
    assert_eq!(m.predict(&x).unwrap(), back.predict(&x).unwrap());
}
