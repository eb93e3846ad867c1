use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::codec::{ImagePlanes, Plane};
use crate::error::Error;
use crate::losses::perceptual_loss;
use crate::networks::{build_discriminator, build_generator_with_blocks, default_feature_extractor, Network};
use crate::tensor::{Graph, Tensor};

fn textured(w: usize, h: usize, seed: u64) -> ImagePlanes {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f32 = rng.random_range(0.0..6.0);
    let rgb: Vec<u8> = (0..w * h * 3)
        .map(|i| {
            let (x, y, c) = ((i / 3) % w, (i / 3) / w, i % 3);
            let v = 128.0 + 60.0 * ((x as f32 * 0.3 + phase).sin() * (y as f32 * 0.2 + c as f32).cos());
            (v + rng.random_range(-10.0..10.0)).clamp(0.0, 255.0) as u8
        })
        .collect();
    ImagePlanes::from_rgb8(w, h, &rgb).unwrap()
}

fn toy_data(n: usize, size: usize, patch: usize) -> Dataset {
    Dataset::from_images((0..n).map(|i| (format!("img{i}"), textured(size, size, i as u64))).collect(), patch).unwrap()
}

fn toy_config(loss: LossKind) -> TrainConfig {
    TrainConfig {
        patch_size: 32,
        batch_size: 2,
        iterations: 3,
        qfs: vec![10],
        loss,
        channels: 1,
        residual_blocks: 1,
        learning_rate: 1e-3,
        checkpoint_interval: 0,
        ..TrainConfig::default()
    }
}

#[test]
fn config_defaults_and_toml() {
    let d = TrainConfig::default();
    assert_eq!((d.patch_size, d.batch_size, d.learning_rate, d.beta1), (128, 16, 1e-4, 0.9));
    assert_eq!(d.qfs, vec![10, 20, 30, 40]);
    let cfg = TrainConfig::from_toml_str("patch_size = 32\nloss = \"gan_l1\"\nqfs = [10]\n").unwrap();
    assert_eq!((cfg.patch_size, cfg.loss, cfg.lambda), (32, LossKind::GanL1, 1e-3));
    assert_eq!(TrainConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
    for bad in ["patch_size = 40", "batch_size = 0", "qfs = []", "qfs = [0]", "beta1 = 1.0", "wat = 1", "loss = \"l2\""] {
        assert!(matches!(TrainConfig::from_toml_str(bad), Err(Error::Config(_))), "{bad}");
    }
    assert_eq!("gan_l1".parse::<LossKind>().unwrap(), LossKind::GanL1);
    assert!("x".parse::<LossKind>().is_err());
}

#[test]
fn default_batch_shape() {
    let data = toy_data(2, 136, 128);
    let cfg = TrainConfig::default();
    let b = sample_batch(&data, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(b.hq.shape().0, [16, 3, 128, 128]);
    assert_eq!(b.lq.shape(), b.hq.shape());
    assert!(b.hq.data().iter().chain(b.lq.data()).all(|v| (-1.0..=1.0).contains(v)));
    assert!(b.qfs.iter().all(|q| cfg.qfs.contains(q)));
}

#[test]
fn sampling_is_seeded() {
    let data = toy_data(3, 48, 32);
    let cfg = toy_config(LossKind::Mse);
    let draw = |seed| sample_batch(&data, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let (a, b) = (draw(7), draw(7));
    assert!(a.hq.data().iter().zip(b.hq.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a, b);
    assert_ne!(a.hq, draw(8).hq);
}

#[test]
fn small_images_are_skipped() {
    let imgs = vec![("big".to_string(), textured(40, 40, 0)), ("small".to_string(), textured(40, 20, 1))];
    let data = Dataset::from_images(imgs, 32).unwrap();
    assert_eq!((data.len(), data.skipped.clone()), (1, vec!["small".to_string()]));
    assert!(Dataset::from_images(vec![("s".into(), textured(8, 8, 2))], 32).is_err());
}

#[test]
fn quality_100_is_nearly_lossless() {
    let data = toy_data(2, 48, 32);
    let cfg = TrainConfig {
        qfs: vec![100],
        batch_size: 4,
        ..toy_config(LossKind::Mse)
    };
    let b = sample_batch(&data, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let mse = b
        .hq
        .data()
        .iter()
        .zip(b.lq.data())
        .map(|(&x, &y)| ((denormalize(x) - denormalize(y)) as f64).powi(2))
        .sum::<f64>()
        / b.hq.len() as f64;
    assert!(10.0 * (255.0f64.powi(2) / mse).log10() > 50.0);
}

#[test]
fn augmentation_preserves_pixels() {
    // a flipped and rotated crop is a permutation of the crop's pixels
    let p = Plane::new(4, 4, (0..16).map(|v| v as f32).collect()).unwrap();
    let mut q = p.flip_horizontal().flip_vertical().rotate90().data;
    q.sort_by(f32::total_cmp);
    assert_eq!(q, p.data);
}

fn fresh_generator() -> Network<f32> {
    Network::init(build_generator_with_blocks(1, 2).unwrap(), 5)
}

#[test]
fn checkpoint_round_trip() {
    let g = fresh_generator();
    let meta = CheckpointMeta::for_network(&g, 12, Some(&toy_config(LossKind::Mse)));
    let bytes = encode_checkpoint(&g, &meta).unwrap();
    assert_eq!(&bytes[..4], b"ARCK");
    let raw = decode_checkpoint(&bytes).unwrap();
    assert_eq!(raw.meta, meta);
    let loaded = Network::from_parameters(g.spec().clone(), raw.tensors).unwrap();
    for (a, b) in g.params().iter().zip(loaded.params()) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(encode_checkpoint(&loaded, &meta).unwrap(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    save_checkpoint(&path, &g, &meta).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    let (net, m) = load_generator(&path).unwrap();
    assert_eq!((net.params(), m.iteration), (g.params(), 12));
}

#[test]
fn checkpoint_rejections() {
    let g = fresh_generator();
    let meta = CheckpointMeta::for_network(&g, 0, None);
    let bytes = encode_checkpoint(&g, &meta).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    std::fs::write(&path, &bytes).unwrap();
    match load_checkpoint(&path, build_discriminator(1).unwrap()) {
        Err(Error::Checkpoint(m)) => assert!(m.contains("gen.head"), "{m}"),
        other => panic!("{:?}", other.map(|_| ())),
    }
    for cut in [3, 11, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Checkpoint(_))), "cut {cut}");
    }
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(decode_checkpoint(&magic).is_err());
    let mut version = bytes.clone();
    version[4] = 2;
    match decode_checkpoint(&version) {
        Err(Error::Checkpoint(m)) => assert!(m.contains("version 2")),
        other => panic!("{:?}", other.map(|_| ())),
    }
    let mut trailing = bytes;
    trailing.push(0);
    assert!(decode_checkpoint(&trailing).is_err());
}

#[test]
fn discriminator_path_naming() {
    use std::path::Path;
    assert_eq!(discriminator_path(Path::new("/a/g.ckpt")), Path::new("/a/g.disc.ckpt"));
    assert_eq!(discriminator_path(Path::new("model")), Path::new("model.disc"));
}

#[test]
fn one_iteration_changes_parameters() {
    let data = toy_data(2, 48, 32);
    for loss in [LossKind::Mse, LossKind::Ssim] {
        let mut t = Trainer::new(&toy_config(loss)).unwrap();
        let before = t.generator().params().to_vec();
        let row = t.step(&data).unwrap();
        assert!(row.g_loss.is_finite() && row.d_loss.is_none());
        assert_ne!(t.generator().params(), &before[..]);
        assert_eq!(t.iteration(), 1);
    }
}

#[test]
fn updates_touch_only_their_network() {
    let data = toy_data(2, 48, 32);
    let cfg = toy_config(LossKind::Gan);
    let mut t = Trainer::new(&cfg).unwrap();
    let batch = sample_batch(&data, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let (g0, d0) = (t.generator().params().to_vec(), t.discriminator().unwrap().params().to_vec());
    let mut row = LogRow::empty(1);
    t.discriminator_step(&batch, &mut row).unwrap();
    assert_eq!(t.generator().params(), &g0[..]);
    let d1 = t.discriminator().unwrap().params().to_vec();
    assert_ne!(d1, d0);
    t.generator_step(&batch, &mut row).unwrap();
    assert_eq!(t.discriminator().unwrap().params(), &d1[..]);
    assert_ne!(t.generator().params(), &g0[..]);
}

#[test]
fn zero_lambda_matches_perceptual_training() {
    let data = toy_data(2, 48, 32);
    let cfg = TrainConfig {
        lambda: 0.0,
        iterations: 3,
        ..toy_config(LossKind::Gan)
    };
    let gan = train_gan(&cfg, &data, &TrainOutput::default()).unwrap();

    let mut gen = Network::<f32>::init(build_generator_with_blocks(1, 1).unwrap(), cfg.seed);
    let phi = default_feature_extractor::<f32>(1).unwrap();
    let opt = Adam {
        lr: cfg.learning_rate,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        epsilon: cfg.epsilon,
    };
    let mut state = AdamState::new(gen.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.iterations {
        let b = sample_batch(&data, &cfg, &mut rng).unwrap();
        let g = Graph::new();
        let bound = gen.bind(&g, true);
        let (hq, lq) = (g.constant(b.hq), g.constant(b.lq));
        let rq = gen.forward(&g, &bound, lq).unwrap();
        let loss = perceptual_loss(&g, hq, rq, &phi).unwrap();
        let mut grads = g.backward(loss).unwrap();
        let grads: Vec<Tensor<f32>> = bound
            .vars
            .iter()
            .zip(gen.params())
            .map(|(v, p)| grads.take_or_zeros(*v, p.shape()))
            .collect();
        opt.step(gen.params_mut(), &grads, &mut state).unwrap();
    }
    for (a, b) in gan.generator.params().iter().zip(gen.params()) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn loss_kind_must_match_loop() {
    let data = toy_data(1, 48, 32);
    let out = TrainOutput::default();
    assert!(matches!(train_direct(&toy_config(LossKind::Gan), &data, &out), Err(Error::Config(_))));
    assert!(matches!(train_gan(&toy_config(LossKind::Mse), &data, &out), Err(Error::Config(_))));
}

#[test]
fn run_writes_log_and_checkpoints() {
    let data = toy_data(2, 48, 32);
    let dir = tempfile::tempdir().unwrap();
    let out = TrainOutput {
        checkpoint: Some(dir.path().join("g.ckpt")),
        loss_log: Some(dir.path().join("loss.csv")),
    };
    let cfg = TrainConfig {
        checkpoint_interval: 2,
        ..toy_config(LossKind::GanL1)
    };
    let res = train(&cfg, &data, &out).unwrap();
    assert_eq!(res.history.len(), 3);
    let log = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], LOG_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,") && lines[1].split(',').all(|f| !f.is_empty()));
    let (g, gm) = load_generator(dir.path().join("g.ckpt")).unwrap();
    assert_eq!(gm.iteration, 3);
    assert_eq!(g.params(), res.generator.params());
    let (d, dm) = load_network(dir.path().join("g.disc.ckpt")).unwrap();
    assert_eq!(dm.network, "discriminator");
    assert_eq!(d.params(), res.discriminator.unwrap().params());
}
