mod common;

use common::{all_model_kinds, build_model, random_input, random_table, TEST_VOCAB_ROWS};
use moodseq::models::{
    AudioVariant, EncoderKind, FusionKind, HeadMode, Modality, ModelGraph, ModelInput, ModelKind, ModelSpec, TextVariant,
    AUDIO_FEATURES, EXTRACTOR_WIDTH,
};
use moodseq::nn::Ctx;
use moodseq::tensor::{Tape, Tensor};
use moodseq::training::{train_step, Adam, AdamConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn zero_input(spec: &ModelSpec, batch: usize) -> ModelInput<f64> {
    let modality = spec.kind.modality();
    ModelInput {
        audio: (modality != Modality::Text).then(|| Tensor::zeros([batch, spec.timestep, AUDIO_FEATURES])),
        tokens: (modality != Modality::Audio).then(|| vec![0; batch * spec.window]),
        batch,
    }
}

fn assert_distribution(p: &[f64; 5]) {
    assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0), "{p:?}");
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6, "{p:?}");
}

#[test]
fn bilstm_tcnn_maps_a_window_to_five_classes() {
    let model = build_model(ModelKind::Audio { variant: AudioVariant::BilstmTcnn }, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = model.predict(&random_input(&mut rng, &model.spec, 1)).unwrap();
    assert_eq!(p.probs.len(), 1);
    assert_distribution(&p.probs[0]);
}

#[test]
fn every_timestep_and_window_builds() {
    for t in [16, 32, 64] {
        let spec = ModelSpec::new(ModelKind::Audio { variant: AudioVariant::LstmTcnn }, t, 0, 0, 1);
        let model = ModelGraph::<f64>::build(&spec, None).unwrap();
        let p = model.predict(&zero_input(&spec, 2)).unwrap();
        assert_eq!(p.probs.len(), 2);
    }
    let table = random_table(&mut ChaCha8Rng::seed_from_u64(1));
    for w in [16, 32, 64, 128] {
        let spec = ModelSpec::new(ModelKind::Text { variant: TextVariant::BilstmAttn }, 16, w, TEST_VOCAB_ROWS, 1);
        let model = ModelGraph::<f64>::build(&spec, Some(&table)).unwrap();
        let p = model.predict(&zero_input(&spec, 1)).unwrap();
        assert_eq!(p.attention.unwrap()[0].len(), w);
    }
    let bad = ModelSpec::new(ModelKind::Audio { variant: AudioVariant::LstmFc }, 20, 0, 0, 1);
    assert!(ModelGraph::<f64>::build(&bad, None).is_err());
}

#[test]
fn bidirectional_lstm_block_has_twice_the_parameters() {
    let count = |kind, prefix: &str| build_model(kind, 0).params.count_prefix(prefix);
    let uni = count(ModelKind::Audio { variant: AudioVariant::LstmFc }, "audio.lstm");
    let bi = count(ModelKind::Audio { variant: AudioVariant::BilstmFc }, "audio.lstm");
    assert!(uni > 0);
    assert_eq!(bi, 2 * uni);
    let uni = count(ModelKind::Text { variant: TextVariant::LstmFc }, "text.lstm");
    let bi = count(ModelKind::Text { variant: TextVariant::BilstmFc }, "text.lstm");
    assert_eq!(bi, 2 * uni);
    assert!(
        build_model(ModelKind::Audio { variant: AudioVariant::BilstmFc }, 0).params.count(true)
            > build_model(ModelKind::Audio { variant: AudioVariant::LstmFc }, 0).params.count(true)
    );
}

#[test]
fn text_bilstm_feeds_a_200_wide_state() {
    let fc1_input = |variant| {
        let model = build_model(ModelKind::Text { variant }, 0);
        let (_, p) = model.params.iter().find(|(_, p)| p.name.starts_with("text.fc1") && p.value.rank() == 2).unwrap();
        p.value.shape().iter().copied().find(|&d| d != 256).unwrap()
    };
    assert_eq!(fc1_input(TextVariant::BilstmFc), 200);
    assert_eq!(fc1_input(TextVariant::LstmFc), 100);
}

#[test]
fn zero_and_padding_inputs_give_distributions() {
    for kind in all_model_kinds() {
        let model = build_model(kind, 3);
        let p = model.predict(&zero_input(&model.spec, 2)).unwrap();
        for row in &p.probs {
            assert_distribution(row);
        }
    }
}

#[test]
fn random_inputs_give_distributions() {
    for kind in all_model_kinds() {
        for seed in 0..5 {
            let model = build_model(kind, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
            let p = model.predict(&random_input(&mut rng, &model.spec, 3)).unwrap();
            for row in &p.probs {
                assert_distribution(row);
            }
        }
    }
}

#[test]
fn attention_outputs_are_exported() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = build_model(ModelKind::Text { variant: TextVariant::BilstmAttn }, 2);
    let p = model.predict(&random_input(&mut rng, &model.spec, 2)).unwrap();
    for row in p.attention.unwrap() {
        assert_eq!(row.len(), 16);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    for encoder in [EncoderKind::Uni, EncoderKind::Bi] {
        let model = build_model(ModelKind::Fused { encoder, fusion: FusionKind::AttnAlignFuse }, 2);
        let p = model.predict(&random_input(&mut rng, &model.spec, 2)).unwrap();
        for w in p.modality_weights.unwrap() {
            assert!((w[0] + w[1] - 1.0).abs() < 1e-9 && w[0] > 0.0 && w[1] > 0.0);
        }
        let plain = build_model(ModelKind::Fused { encoder, fusion: FusionKind::MaxpoolConcat }, 2);
        assert!(plain.predict(&random_input(&mut rng, &plain.spec, 1)).unwrap().modality_weights.is_none());
    }
}

#[test]
fn extractor_and_classifier_share_lower_layers() {
    let table = random_table(&mut ChaCha8Rng::seed_from_u64(4));
    for kind in [
        ModelKind::Audio { variant: AudioVariant::BilstmTcnn },
        ModelKind::Audio { variant: AudioVariant::LstmFc },
        ModelKind::Text { variant: TextVariant::BilstmAttn },
    ] {
        let classifier = ModelSpec::new(kind, 16, 16, TEST_VOCAB_ROWS, 4);
        let extractor = ModelSpec { head: HeadMode::Extractor, ..classifier.clone() };
        let c = ModelGraph::<f64>::build(&classifier, Some(&table)).unwrap();
        let e = ModelGraph::<f64>::build(&extractor, Some(&table)).unwrap();
        let mut shared = 0;
        for (_, p) in c.params.iter() {
            // The extractor keeps every timestep, so it has no summarising attention.
            if p.name.contains(".out.") || p.name.contains(".attention.") {
                continue;
            }
            let q = e.params.by_name(&p.name).unwrap();
            assert_eq!(p.value.shape(), q.value.shape(), "{}", p.name);
            assert!(p.value.data().iter().zip(q.value.data()).all(|(a, b)| a.to_bits() == b.to_bits()), "{}", p.name);
            shared += 1;
        }
        assert!(shared > 4);
        let (_, out) = e.params.iter().filter(|(_, p)| p.name.contains(".out.") && p.value.rank() == 2).last().unwrap();
        assert!(out.value.shape().contains(&EXTRACTOR_WIDTH));
        assert!(e.predict(&zero_input(&extractor, 1)).is_err());
    }
}

#[test]
fn fused_gradient_reaches_both_extractors() {
    for fusion in [FusionKind::MaxpoolConcat, FusionKind::AttnAlign, FusionKind::AttnAlignFuse] {
        let model = build_model(ModelKind::Fused { encoder: EncoderKind::Bi, fusion }, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = random_input(&mut rng, &model.spec, 4);
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &model.params, true, 0);
        let out = model.forward(&mut ctx, &input).unwrap();
        let loss = ctx.tape.cross_entropy(out.logits, &[0, 1, 3, 4]).unwrap();
        tape.backward(loss).unwrap();
        for prefix in ["audio.", "text.", "fusion."] {
            let norm: f64 = tape
                .param_grads()
                .into_iter()
                .filter(|(id, _)| model.params.get(*id).name.starts_with(prefix))
                .map(|(_, g)| g.iter().map(|x| x * x).sum::<f64>())
                .sum();
            assert!(norm > 0.0, "{fusion:?}: no gradient under {prefix}");
        }
    }
}

#[test]
fn one_step_moves_parameters_but_not_embeddings() {
    for kind in all_model_kinds() {
        let mut model = build_model(kind, 6);
        let before = model.params.clone();
        let mut adam = Adam::new(AdamConfig::default(), &model.params);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let input = random_input(&mut rng, &model.spec, 4);
        train_step(&mut model, &mut adam, &input, &[0, 1, 2, 3], Some(5.0), 0).unwrap();
        let mut moved = 0;
        for ((_, old), (_, new)) in before.iter().zip(model.params.iter()) {
            let changed = old.value.data() != new.value.data();
            if old.name.ends_with(".table") {
                assert!(!changed, "{kind:?}: embedding table {} changed", old.name);
            }
            moved += changed as usize;
        }
        assert!(moved > 0, "{kind:?}: nothing moved");
    }
}
