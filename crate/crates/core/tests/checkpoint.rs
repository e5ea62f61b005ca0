mod common;

use common::{build_model, random_input};
use moodseq::checkpoint::{Checkpoint, CheckpointMeta};
use moodseq::data::{DataOptions, Pipeline};
use moodseq::models::{AudioVariant, EncoderKind, FusionKind, Modality, ModelKind, TextVariant};
use moodseq::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn checkpoint_for(kind: ModelKind) -> (Checkpoint, moodseq::models::ModelGraph<f32>) {
    let model = build_model(kind, 8).cast::<f32>();
    let pipeline = Pipeline {
        modality: kind.modality(),
        timestep: 16,
        window: 16,
        options: DataOptions::default(),
        stats: None,
        vocab: None,
    };
    let meta = CheckpointMeta {
        model: model.spec.clone(),
        pipeline,
        vocab_hash: (kind.modality() != Modality::Audio).then_some(42),
        best_epoch: 3,
    };
    (Checkpoint::new(meta, &model), model)
}

#[test]
fn round_trip_gives_bitwise_equal_predictions() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [
        ModelKind::Audio { variant: AudioVariant::BilstmTcnn },
        ModelKind::Text { variant: TextVariant::BilstmAttn },
        ModelKind::Fused { encoder: EncoderKind::Bi, fusion: FusionKind::AttnAlignFuse },
    ] {
        let (ckpt, model) = checkpoint_for(kind);
        let path = dir.path().join("m.mseq");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.meta, ckpt.meta);
        assert_eq!(loaded.to_bytes().unwrap(), ckpt.to_bytes().unwrap());
        let restored = loaded.model().unwrap();
        let input = random_input(&mut ChaCha8Rng::seed_from_u64(1), &model.spec, 4);
        let input = moodseq::models::ModelInput {
            audio: input.audio.map(|a| a.cast::<f32>()),
            tokens: input.tokens,
            batch: input.batch,
        };
        let (a, b) = (model.predict(&input).unwrap(), restored.predict(&input).unwrap());
        for (x, y) in a.probs.iter().flatten().zip(b.probs.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn version_mismatch_is_reported() {
    let (ckpt, _) = checkpoint_for(ModelKind::Audio { variant: AudioVariant::LstmFc });
    let mut bytes = ckpt.to_bytes().unwrap();
    bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
    let err = Checkpoint::from_bytes(&bytes, "m.mseq".as_ref()).unwrap_err();
    assert!(matches!(err, Error::Format { .. }));
    assert!(err.to_string().contains("unsupported checkpoint version 2"), "{err}");
}

#[test]
fn damaged_files_are_format_errors() {
    let (ckpt, _) = checkpoint_for(ModelKind::Audio { variant: AudioVariant::LstmFc });
    let bytes = ckpt.to_bytes().unwrap();
    for damaged in [&bytes[..bytes.len() - 3], &bytes[..10], b"XXXX".as_slice()] {
        let err = Checkpoint::from_bytes(damaged, "m.mseq".as_ref()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(Checkpoint::from_bytes(&longer, "m.mseq".as_ref()).is_err());
}
