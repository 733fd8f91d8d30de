mod common;

use hierdit::corpus::{generate_triplet, CorpusConfig, MotionPreset};
use hierdit::model::checkpoint::{trainer_from_bytes, trainer_to_bytes};
use hierdit::model::{decode_to_image, sample, DitModel, EncodedTriplet, ModelConfig, TrainConfig, TrainPhase, Trainer};
use hierdit::raster::RgbImage;

fn model_config() -> ModelConfig {
    ModelConfig {
        d_model: 48,
        heads: 2,
        depth: 2,
        grid: 4,
        patch: 4,
        pool_kernel: Some(2),
        seed: 21,
        ..ModelConfig::default()
    }
}

fn data(model: &DitModel, seed: u64, count: usize) -> Vec<EncodedTriplet> {
    let cfg = CorpusConfig {
        seed,
        count,
        size: model.config.image_size(),
        min_primitives: 1,
        max_primitives: 1,
        motion: MotionPreset::Small,
        ..CorpusConfig::default()
    };
    (0..count)
        .map(|i| {
            let (_, _, t) = generate_triplet(&cfg, i).unwrap();
            EncodedTriplet::encode(&t.target, &t.lineart, &t.reference, model).unwrap()
        })
        .collect()
}

fn pixel_mse(a: &RgbImage, b: &RgbImage) -> f64 {
    let n = a.as_raw().len() as f64;
    a.as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| ((x as f64 - y as f64) / 255.0).powi(2))
        .sum::<f64>()
        / n
}

#[test]
fn overfits_a_single_triplet() {
    let model = DitModel::new(model_config()).unwrap();
    let one = data(&model, 1, 1);
    // Eight noise draws of the same triplet per update.
    let cfg = TrainConfig {
        lr: 3e-3,
        batch_size: 8,
        seed: 2,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(model, TrainPhase::Pretrain, cfg).unwrap();
    let losses: Vec<f64> = (0..500).map(|_| t.step_on(&one).unwrap()).collect();
    // Timesteps and noise are redrawn every step, so average the tail.
    let tail = losses[480..].iter().sum::<f64>() / 20.0;
    assert!(losses[0] >= 10.0 * tail, "first {} tail {}", losses[0], tail);
}

#[test]
fn training_beats_the_untrained_model_on_held_out_pairs() {
    let untrained = DitModel::new(model_config()).unwrap();
    let train = data(&untrained, 3, 16);
    let held_out = data(&untrained, 4, 4);
    let mut t = Trainer::new(
        untrained.clone(),
        TrainPhase::Pretrain,
        TrainConfig {
            lr: 3e-3,
            batch_size: 4,
            seed: 5,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    for _ in 0..150 {
        t.step_on(&train).unwrap();
    }
    let mut t = t
        .into_lora(TrainConfig {
            lr: 3e-3,
            batch_size: 4,
            seed: 6,
            ..TrainConfig::default()
        })
        .unwrap();
    for _ in 0..100 {
        t.step_on(&train).unwrap();
    }
    let score = |m: &DitModel| {
        held_out
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let out = sample(m, &s.line, &s.reference, 10, 100 + i as u64).unwrap();
                pixel_mse(&decode_to_image(&out, 4).unwrap(), &decode_to_image(&s.target, 4).unwrap())
            })
            .sum::<f64>()
            / held_out.len() as f64
    };
    let (before, after) = (score(&untrained), score(&t.model));
    assert!(after < before, "trained {after} untrained {before}");
}

#[test]
fn resuming_from_a_checkpoint_matches_an_uninterrupted_run() {
    let model = DitModel::new(model_config()).unwrap();
    let set = data(&model, 7, 6);
    let cfg = TrainConfig {
        lr: 2e-3,
        batch_size: 2,
        grad_accum: 2,
        seed: 8,
    };
    let mut straight = Trainer::new(model.clone(), TrainPhase::Lora, cfg.clone()).unwrap();
    let mut resumed = Trainer::new(model, TrainPhase::Lora, cfg).unwrap();
    let a: Vec<f64> = (0..12).map(|_| straight.step_on(&set).unwrap()).collect();
    let mut b: Vec<f64> = (0..5).map(|_| resumed.step_on(&set).unwrap()).collect();
    let mut resumed = trainer_from_bytes(&trainer_to_bytes(&resumed)).unwrap();
    b.extend((0..7).map(|_| resumed.step_on(&set).unwrap()));
    assert_eq!(a, b);
    assert_eq!(straight.step, resumed.step);
    assert_eq!(straight.model, resumed.model);
    assert_eq!(trainer_to_bytes(&straight), trainer_to_bytes(&resumed));
}

#[test]
fn loss_on_a_fixed_batch_is_a_function_of_the_seed() {
    let model = DitModel::new(model_config()).unwrap();
    let set = data(&model, 9, 3);
    let batch: Vec<&EncodedTriplet> = set.iter().collect();
    let loss = |seed| {
        let t = Trainer::new(
            model.clone(),
            TrainPhase::Lora,
            TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        t.loss_and_grad(&batch, &t.draws(3, batch.len())).unwrap()
    };
    let (l1, g1) = loss(1);
    let (l2, g2) = loss(1);
    assert_eq!(l1, l2);
    assert_eq!(g1, g2);
    assert_ne!(loss(2).0, l1);
}
