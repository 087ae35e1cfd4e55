//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.
//!
//! The training-scale criteria (4, 5, 6) are ignored by default; run them with
//! `cargo test --release -p crossmodal-core --test acceptance -- --include-ignored --nocapture`.
//! Setting `CROSSMODAL_ACCEPTANCE_CACHE` to a directory reuses trained
//! perception models and per-seed reports across runs.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use crossmodal_core::acoustics::{
    doppler_frequency, gaussian_decay_amplitude, inverse_square_amplitude, received_tones, synthesize_frame_audio,
    AcousticsConfig, Displacement, SineBank, SoundEmitter, SoundReceiver,
};
use crossmodal_core::env::{make_env, Action, SoundPayload};
use crossmodal_core::generative::{
    kl_to_standard_prior, load_avae, save_avae, symmetric_kl, AvaeArchitecture, AvaeModel, DiagonalGaussian,
    LossWeights, SoundNormalizer,
};
use crossmodal_core::pipeline::{
    collect_dataset, derive_seed, evaluate, evaluate_perception, run_baseline, stage1_train_perception,
    stage2_train_policy, stage3_evaluate_transfer, Baseline, EvalPolicy, PairedDataset, SeedDomain, TransferReport,
};
use crossmodal_core::{Error, ExperimentConfig, Modality, ModalitySubset};
use ndarray::{Array2, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn verdict(id: &str, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {id} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    println!("{line}");
    let log = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance.log");
    if let Ok(mut f) = std::fs::OpenOptions::new().create(true).append(true).open(log) {
        let _ = writeln!(f, "{line}");
    }
}

fn cache_dir() -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::var_os("CROSSMODAL_ACCEPTANCE_CACHE")?);
    std::fs::create_dir_all(&dir).ok()?;
    Some(dir)
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// Criterion 1

/// Returns the heard frequency and the denominator of the ratio.
fn doppler_oracle(e: &SoundEmitter, r: &SoundReceiver, c: f64, unit: bool) -> (f64, f64) {
    let (mut dx, mut dy) = (e.position[0] - r.position[0], e.position[1] - r.position[1]);
    if unit {
        let n = dx.hypot(dy);
        dx /= n;
        dy /= n;
    }
    let approach = r.velocity[0] * dx + r.velocity[1] * dy;
    let recede = e.velocity[0] * -dx + e.velocity[1] * -dy;
    (e.base_frequency * (c + approach) / (c - recede), c - recede)
}

fn pcm_oracle(emitters: &[SoundEmitter], receiver: [f64; 2], cfg: &AcousticsConfig, scale: f64) -> Vec<i16> {
    (0..cfg.samples_per_frame)
        .map(|k| {
            let mut s = 0.0;
            for e in emitters {
                let dx = (e.position[0] - receiver[0]) * scale;
                let dy = (e.position[1] - receiver[1]) * scale;
                let a = e.base_amplitude * (-cfg.decay * (dx * dx + dy * dy)).exp();
                s += a * (2.0 * PI * e.base_frequency * k as f64 / cfg.sample_rate).sin();
            }
            let s = s.clamp(-cfg.max_amplitude, cfg.max_amplitude);
            (s / cfg.max_amplitude * 32767.0).round() as i16
        })
        .collect()
}

fn point(rng: &mut ChaCha8Rng, r: f64) -> [f64; 2] {
    [rng.random_range(-r..r), rng.random_range(-r..r)]
}

#[test]
fn criterion_1_acoustics_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let c = 20.0;
    let mut worst = 0.0f64;
    let mut geometries = 0;
    while geometries < 1000 {
        let e = SoundEmitter {
            id: "e".into(),
            position: point(&mut rng, 3.0),
            velocity: point(&mut rng, 8.0),
            base_frequency: rng.random_range(100.0..2000.0),
            base_amplitude: rng.random_range(0.1..2.0),
        };
        let r = SoundReceiver {
            id: "r".into(),
            position: point(&mut rng, 3.0),
            velocity: point(&mut rng, 8.0),
        };
        let d2 = (e.position[0] - r.position[0]).powi(2) + (e.position[1] - r.position[1]).powi(2);
        if d2 < 0.01 {
            continue;
        }
        for (mode, unit) in [(Displacement::Raw, false), (Displacement::Unit, true)] {
            let (want, denominator) = doppler_oracle(&e, &r, c, unit);
            match doppler_frequency(&e, &r, c, mode) {
                Ok(got) => worst = worst.max((got - want).abs()),
                Err(Error::DegenerateGeometry(_)) if denominator <= 1e-6 => {}
                Err(other) => panic!("unexpected error {other}"),
            }
        }
        let k = rng.random_range(0.5..2.0);
        let got = inverse_square_amplitude(e.position, r.position, k).unwrap();
        worst = worst.max((got - k / d2).abs());
        let decay = rng.random_range(0.0..0.5);
        let got = gaussian_decay_amplitude(&e, r.position, decay);
        worst = worst.max((got - e.base_amplitude * (-decay * d2).exp()).abs());
        geometries += 1;
    }

    let cfg = AcousticsConfig::default();
    let scale = 5.0;
    let mut mismatches = 0usize;
    let mut bank = SineBank::default();
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let emitters: Vec<SoundEmitter> = (0..n)
            .map(|i| SoundEmitter {
                id: format!("e{i}"),
                position: point(&mut rng, 1.0),
                velocity: [0.0, 0.0],
                base_frequency: [261.0, 329.0, 392.0, 466.0][rng.random_range(0..4)],
                base_amplitude: rng.random_range(0.0..1.0),
            })
            .collect();
        let receivers: Vec<SoundReceiver> = (0..4)
            .map(|i| SoundReceiver::stationary(format!("r{i}"), point(&mut rng, 1.0)))
            .collect();
        let tones = received_tones(&emitters, &receivers, cfg.decay, scale);
        let direct = synthesize_frame_audio(&tones, &cfg).unwrap();
        let banked = bank.synthesize(&tones, &cfg).unwrap();
        for (i, r) in receivers.iter().enumerate() {
            let want = pcm_oracle(&emitters, r.position, &cfg, scale);
            mismatches += want.iter().zip(&direct[i]).filter(|(a, b)| a != b).count();
            mismatches += want.iter().zip(&banked[i]).filter(|(a, b)| a != b).count();
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-9 && mismatches == 0 && elapsed < Duration::from_secs(60);
    verdict(
        "1",
        "acoustics exactness",
        pass,
        &format!("max scalar error {worst:.2e} over 1000 geometries, {mismatches} PCM sample mismatches over 100 emitter sets, {}", secs(elapsed)),
    );
    assert!(pass);
}

// Criterion 2

fn log_density(x: &[f64], g: &DiagonalGaussian) -> f64 {
    x.iter()
        .zip(&g.mean)
        .zip(&g.log_var)
        .map(|((x, m), lv)| -0.5 * ((2.0 * PI).ln() + lv + (x - m).powi(2) / lv.exp()))
        .sum()
}

fn mc_kl(p: &DiagonalGaussian, q: &DiagonalGaussian, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut x = vec![0.0; p.dim()];
    let mut acc = 0.0;
    for _ in 0..n {
        for (d, xd) in x.iter_mut().enumerate() {
            let eps: f64 = StandardNormal.sample(rng);
            *xd = p.mean[d] + (0.5 * p.log_var[d]).exp() * eps;
        }
        acc += log_density(&x, p) - log_density(&x, q);
    }
    acc / n as f64
}

fn random_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> DiagonalGaussian {
    let mean = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
    let log_var = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
    DiagonalGaussian::new(mean, log_var).unwrap()
}

#[test]
fn criterion_2_kl_matches_monte_carlo() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let n = 1_000_000;
    let prior = DiagonalGaussian::standard(10);
    let (mut worst_prior, mut worst_sym) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let p = random_gaussian(&mut rng, 10);
        let q = random_gaussian(&mut rng, 10);
        let kl = mc_kl(&p, &prior, n, &mut rng);
        worst_prior = worst_prior.max((kl_to_standard_prior(&p) - kl).abs());
        let sym = mc_kl(&p, &q, n, &mut rng) + mc_kl(&q, &p, n, &mut rng);
        worst_sym = worst_sym.max((symmetric_kl(&p, &q).unwrap() - sym).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst_prior <= 1e-2 && worst_sym <= 1e-2 && elapsed < Duration::from_secs(120);
    verdict(
        "2",
        "KL versus Monte Carlo",
        pass,
        &format!("max |error| prior {worst_prior:.2e}, symmetric {worst_sym:.2e} on 50 Gaussians, {}", secs(elapsed)),
    );
    assert!(pass);
}

// Criterion 3

fn set_param(m: &mut AvaeModel<f64>, index: usize, k: usize, delta: f64) {
    let mut i = 0;
    for n in m.nets_mut() {
        for p in n.params_mut() {
            if i == index {
                p.value.as_slice_mut().expect("contiguous")[k] += delta;
            }
            i += 1;
        }
    }
}

#[test]
fn criterion_3_gradient_check() {
    let start = Instant::now();
    let weights = LossWeights {
        lambda_image: 1.0,
        lambda_sound: 1.0,
        beta: 1.0,
        alpha: 1.0,
    };
    let mut m = AvaeModel::<f64>::new(AvaeArchitecture::tiny(), weights, SoundNormalizer::identity(6), 303).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    let b = 6;
    let xi = ArrayD::from_shape_fn(IxDyn(&[b, 1, 8, 8]), |_| rng.random::<f64>());
    let xs = ArrayD::from_shape_fn(IxDyn(&[b, 6]), |_| rng.random::<f64>());
    let ei = Array2::from_shape_fn((b, 4), |_| StandardNormal.sample(&mut rng));
    let es = Array2::from_shape_fn((b, 4), |_| StandardNormal.sample(&mut rng));
    m.zero_grad();
    m.forward_backward(&xi, &xs, &ei, &es).unwrap();
    let analytic: Vec<Vec<f64>> =
        m.nets().iter().flat_map(|n| n.params()).map(|p| p.grad.iter().copied().collect()).collect();
    let total: usize = analytic.iter().map(Vec::len).sum();
    let h = 1e-5;
    let (mut checked, mut worst) = (0usize, 0.0f64);
    for (pi, grads) in analytic.iter().enumerate() {
        let stride = (total / 400).max(1);
        for k in (pi % stride..grads.len()).step_by(stride) {
            set_param(&mut m, pi, k, h);
            let up = m.loss_terms(&xi, &xs, &ei, &es).unwrap().total(&weights);
            set_param(&mut m, pi, k, -2.0 * h);
            let down = m.loss_terms(&xi, &xs, &ei, &es).unwrap().total(&weights);
            set_param(&mut m, pi, k, h);
            let numeric = (up - down) / (2.0 * h);
            let a = grads[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = checked >= 100 && worst <= 1e-3 && elapsed < Duration::from_secs(120);
    verdict(
        "3",
        "gradient check",
        pass,
        &format!("{checked} parameters, max relative error {worst:.2e}, {}", secs(elapsed)),
    );
    assert!(pass);
}

// Shared pieces of the training-scale criteria

struct Perception {
    model: AvaeModel<f32>,
    first_loss: f64,
    final_loss: f64,
    train_time: Duration,
}

fn train_perception(cfg: &ExperimentConfig, tag: &str) -> (Perception, PairedDataset) {
    let mut env = make_env(cfg).unwrap();
    let seed = cfg.pipeline.dataset_seed;
    let dataset = collect_dataset(env.as_mut(), cfg.avae.dataset_size, seed, None).unwrap();
    let key = format!("{tag}-{}", &cfg.digest()[..16]);
    if let Some(dir) = cache_dir() {
        let (model_path, meta_path) = (dir.join(format!("{key}.avae")), dir.join(format!("{key}.json")));
        if let (Ok(model), Ok(meta)) = (load_avae(&model_path), std::fs::read_to_string(&meta_path)) {
            let v: serde_json::Value = serde_json::from_str(&meta).unwrap();
            eprintln!("{tag}: reusing cached perception model");
            let p = Perception {
                model,
                first_loss: v["first"].as_f64().unwrap(),
                final_loss: v["final"].as_f64().unwrap(),
                train_time: Duration::from_secs_f64(v["seconds"].as_f64().unwrap()),
            };
            return (p, dataset);
        }
    }
    let start = Instant::now();
    let (model, history) = stage1_train_perception(&dataset, cfg, seed, |e| {
        eprintln!("{tag}: epoch {} total {:.4} ({})", e.epoch, e.total, secs(start.elapsed()));
    })
    .unwrap();
    let p = Perception {
        first_loss: history.epochs.first().unwrap().total,
        final_loss: history.epochs.last().unwrap().total,
        train_time: start.elapsed(),
        model,
    };
    if let Some(dir) = cache_dir() {
        save_avae(&p.model, &dir.join(format!("{key}.avae"))).unwrap();
        let meta = serde_json::json!({"first": p.first_loss, "final": p.final_loss, "seconds": p.train_time.as_secs_f64()});
        std::fs::write(dir.join(format!("{key}.json")), meta.to_string()).unwrap();
    }
    (p, dataset)
}

/// Runs `f` for one seed, or reuses its cached report.
fn seed_report(
    cfg: &ExperimentConfig,
    label: &str,
    seed: u64,
    f: impl FnOnce() -> TransferReport,
) -> TransferReport {
    let path = cache_dir().map(|d| d.join(format!("{}-{label}-{seed}-{}.json", cfg.scenario_name(), &cfg.digest()[..16])));
    if let Some(p) = &path {
        if let Ok(r) = TransferReport::read(p) {
            eprintln!("{label} seed {seed}: reusing cached report");
            return r;
        }
    }
    let r = f();
    if let Some(p) = &path {
        r.write(p, &p.with_extension("csv")).unwrap();
    }
    eprintln!("{label} seed {seed}: per-step {:.3} discounted {:.3}", r.over_episodes.per_step.mean, r.over_episodes.discounted.mean);
    r
}

fn transfer_seed(cfg: &ExperimentConfig, model: &AvaeModel<f32>, seed: u64) -> TransferReport {
    let mut env = make_env(cfg).unwrap();
    let (train, test) = (&cfg.pipeline.train_modality, &cfg.pipeline.test_modality);
    let digest = model.digest();
    let start = Instant::now();
    let run = stage2_train_policy(env.as_mut(), model, train, &cfg.agent, seed, |e| {
        if e.episode % 25 == 0 {
            eprintln!(
                "avae seed {seed}: episode {} frames {} return {:.2} ({})",
                e.episode,
                e.frames,
                e.episode_return,
                secs(start.elapsed())
            );
        }
    })
    .unwrap();
    let agent_digest = run.agent.digest();
    let outcomes =
        stage3_evaluate_transfer(env.as_mut(), model, &run.agent, test, cfg.pipeline.eval_episodes, seed, cfg.agent.gamma)
            .unwrap();
    assert_eq!(model.digest(), digest);
    assert_eq!(run.agent.digest(), agent_digest);
    TransferReport::new("avae", cfg.scenario_name(), Some(train.clone()), Some(test.clone()), cfg.digest(), cfg.agent.gamma, outcomes)
}

fn baseline_seed(cfg: &ExperimentConfig, kind: Baseline, dataset: &PairedDataset, seed: u64) -> TransferReport {
    let mut env = make_env(cfg).unwrap();
    let start = Instant::now();
    let (_, outcomes) = run_baseline(kind, env.as_mut(), cfg, Some(dataset), seed, |e| {
        if e.episode % 25 == 0 {
            eprintln!("{kind} seed {seed}: episode {} frames {} return {:.2} ({})", e.episode, e.frames, e.episode_return, secs(start.elapsed()));
        }
    })
    .unwrap();
    TransferReport::new(kind.to_string(), cfg.scenario_name(), None, None, cfg.digest(), cfg.agent.gamma, outcomes)
}

fn pooled(cfg: &ExperimentConfig, label: &str, f: impl Fn(u64) -> TransferReport) -> TransferReport {
    let reports: Vec<TransferReport> = cfg.pipeline.seeds.iter().map(|&s| seed_report(cfg, label, s, || f(s))).collect();
    TransferReport::merge(&reports).unwrap()
}

// Criterion 4

#[test]
#[ignore = "trains the desk-scale perception model"]
fn criterion_4_perception_quality() {
    let cfg = ExperimentConfig::preset("pendulum-desk").unwrap();
    let (p, dataset) = train_perception(&cfg, "pendulum");
    let mut env = make_env(&cfg).unwrap();
    let held_seed = derive_seed(cfg.pipeline.dataset_seed, SeedDomain::DatasetEpisodes, 1 << 32);
    let held_out = collect_dataset(env.as_mut(), 1000, held_seed, dataset.normalizer.as_ref()).unwrap();
    let q = evaluate_perception(&p.model, &held_out, 404).unwrap();
    let quality = q.cross_modal_mse < q.prior_sample_mse && p.final_loss < p.first_loss;
    verdict(
        "4",
        "perception quality",
        quality,
        &format!(
            "held-out cross-modal MSE {:.5} vs prior-sample MSE {:.5}; loss first {:.3} final {:.3}",
            q.cross_modal_mse, q.prior_sample_mse, p.first_loss, p.final_loss
        ),
    );
    let fast = p.train_time <= Duration::from_secs(30 * 60);
    verdict("4", "perception runtime", fast, &format!("stage 1 took {} (limit 1800s)", secs(p.train_time)));
    assert!(quality && fast);
}

// Criterion 5

#[test]
#[ignore = "trains nine pendulum policies"]
fn criterion_5_pendulum_transfer() {
    let cfg = ExperimentConfig::preset("pendulum-desk").unwrap();
    let (p, dataset) = train_perception(&cfg, "pendulum");
    let random = pooled(&cfg, "random", |s| baseline_seed(&cfg, Baseline::Random, &dataset, s));
    let sound = pooled(&cfg, "native-sound", |s| baseline_seed(&cfg, Baseline::NativeSound, &dataset, s));
    let avae = pooled(&cfg, "avae", |s| transfer_seed(&cfg, &p.model, s));
    let (r, a, s) = (
        random.over_episodes.per_step.mean,
        avae.over_episodes.per_step.mean,
        sound.over_episodes.per_step.mean,
    );
    let gap = 0.5 * (6.30 - 2.00);
    let pass = r < a && a <= s && a - r >= gap;
    verdict(
        "5",
        "pendulum transfer",
        pass,
        &format!(
            "per-step reward random {r:.3}, avae image->sound {a:.3}, native sound {s:.3}; gap {:.3} (need {gap:.3}); episodes {}",
            a - r,
            avae.episodes.len()
        ),
    );
    assert!(pass);
}

// Criterion 6

#[test]
#[ignore = "trains three HyperHot policies"]
fn criterion_6_hyperhot_transfer() {
    let cfg = ExperimentConfig::preset("hyperhot-desk").unwrap();
    let (p, dataset) = train_perception(&cfg, "hyperhot");
    let random = pooled(&cfg, "random", |s| baseline_seed(&cfg, Baseline::Random, &dataset, s));
    let avae = pooled(&cfg, "avae", |s| transfer_seed(&cfg, &p.model, s));
    let win = |r: &TransferReport| r.over_episodes.win_rate.unwrap().mean;
    let disc = |r: &TransferReport| r.over_episodes.discounted.mean;
    let pass = win(&avae) >= 2.0 * win(&random) && disc(&avae) - disc(&random) >= 0.25;
    verdict(
        "6",
        "hyperhot transfer",
        pass,
        &format!(
            "win rate random {:.3}, avae image->sound {:.3}; discounted random {:.3}, avae {:.3}; episodes {}",
            win(&random),
            win(&avae),
            disc(&random),
            disc(&avae),
            avae.episodes.len()
        ),
    );
    assert!(pass);
}

// Criteria 7 and 8 at a small scale

fn small_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("pendulum").unwrap();
    cfg.avae.dataset_size = 256;
    cfg.avae.epochs = 2;
    cfg.agent.max_frames = 600;
    cfg.agent.warmup = 200;
    cfg.agent.batch_size = 32;
    cfg.agent.hidden = vec![32, 32];
    cfg.pipeline.eval_episodes = 2;
    cfg.pipeline.seeds = vec![0, 1];
    cfg
}

#[test]
fn criterion_7_purity_and_frozen_digests() {
    let cfg = small_cfg();
    let mut env = make_env(&cfg).unwrap();
    let dataset = collect_dataset(env.as_mut(), cfg.avae.dataset_size, 0, None).unwrap();
    let (model, _) = stage1_train_perception(&dataset, &cfg, 0, |_| {}).unwrap();
    let after_stage1 = model.digest();
    let image = ModalitySubset::single(Modality::Image);
    let sound = ModalitySubset::single(Modality::Sound);
    let run = stage2_train_policy(env.as_mut(), &model, &image, &cfg.agent, 0, |_| {}).unwrap();
    let after_stage2 = model.digest();
    let (agent_digest, model_counters, agent_counters) = (run.agent.digest(), model.counters(), run.agent.counters());
    let outcomes = stage3_evaluate_transfer(env.as_mut(), &model, &run.agent, &sound, 3, 0, cfg.agent.gamma).unwrap();
    let updates = model.counters().total() - model_counters.total() + run.agent.counters().total() - agent_counters.total();
    let frozen = after_stage1 == after_stage2 && after_stage2 == model.digest() && agent_digest == run.agent.digest();
    let pass = updates == 0 && frozen && outcomes.len() == 3 && model.encode_calls(Modality::Sound) > 0;
    verdict(
        "7",
        "zero-shot purity and frozen digests",
        pass,
        &format!("{updates} updates during stage 3, model digest {} unchanged: {frozen}", &after_stage1[..12]),
    );
    assert!(pass);
}

fn pcm_episode(seed: u64) -> Vec<i16> {
    let cfg = ExperimentConfig::preset("hyperhot-desk").unwrap();
    let mut env = make_env(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    env.reset(seed).unwrap();
    for _ in 0..60 {
        let step = env.step(env.random_action(&mut rng)).unwrap();
        if let SoundPayload::Pcm(p) = &step.observation.sound {
            out.extend(p.iter().copied());
        }
        if step.terminal {
            break;
        }
    }
    out
}

fn small_pipeline(cfg: &ExperimentConfig) -> (String, TransferReport, TransferReport) {
    let mut env = make_env(cfg).unwrap();
    let dataset = collect_dataset(env.as_mut(), cfg.avae.dataset_size, cfg.pipeline.dataset_seed, None).unwrap();
    let (model, _) = stage1_train_perception(&dataset, cfg, 0, |_| {}).unwrap();
    let (train, test) = (&cfg.pipeline.train_modality, &cfg.pipeline.test_modality);
    let mut outcomes = Vec::new();
    for &seed in &cfg.pipeline.seeds {
        let run = stage2_train_policy(env.as_mut(), &model, train, &cfg.agent, seed, |_| {}).unwrap();
        outcomes.extend(
            stage3_evaluate_transfer(env.as_mut(), &model, &run.agent, test, cfg.pipeline.eval_episodes, seed, cfg.agent.gamma)
                .unwrap(),
        );
    }
    let avae = TransferReport::new("avae", "pendulum", None, None, cfg.digest(), cfg.agent.gamma, outcomes);
    let random: Vec<_> = cfg
        .pipeline
        .seeds
        .iter()
        .flat_map(|&s| evaluate(env.as_mut(), None, EvalPolicy::Random, cfg.pipeline.eval_episodes, s, cfg.agent.gamma).unwrap())
        .collect();
    let random = TransferReport::new("random", "pendulum", None, None, cfg.digest(), cfg.agent.gamma, random);
    (dataset.digest(), avae, random)
}

#[test]
fn criterion_8_determinism() {
    let start = Instant::now();
    let cfg = small_cfg();
    let (d1, a1, r1) = small_pipeline(&cfg);
    let (d2, a2, r2) = small_pipeline(&cfg);
    let datasets = d1 == d2;
    let pcm = pcm_episode(5) == pcm_episode(5) && !pcm_episode(5).is_empty();
    let close = |x: &TransferReport, y: &TransferReport| {
        let s = |r: &TransferReport| {
            let o = &r.over_episodes;
            [o.undiscounted.mean, o.undiscounted.std, o.discounted.mean, o.discounted.std, o.per_step.mean, o.per_step.std]
        };
        s(x).iter().zip(s(y)).all(|(a, b)| (a - b).abs() <= 1e-12) && x.verify(1e-12)
    };
    let reports = close(&a1, &a2) && close(&r1, &r2);
    let mut env = make_env(&cfg).unwrap();
    let mut trace = |seed| {
        let mut v = vec![env.reset(seed).unwrap().image];
        for _ in 0..5 {
            v.push(env.step(Action::Continuous(1.0)).unwrap().observation.image);
        }
        v
    };
    let envs = trace(3) == trace(3);
    let elapsed = start.elapsed();
    let pass = datasets && pcm && reports && envs && elapsed < Duration::from_secs(600);
    verdict(
        "8",
        "determinism",
        pass,
        &format!("datasets equal {datasets}, PCM equal {pcm}, report aggregates within 1e-12 {reports}, {}", secs(elapsed)),
    );
    assert!(pass);
}
