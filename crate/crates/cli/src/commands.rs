use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use crossmodal_core::acoustics::{encode_pcm16, frame_wave, AcousticsConfig, Tone};
use crossmodal_core::agents::{load_agent, parse_training_log, save_agent, EpisodeRecord};
use crossmodal_core::config::ScenarioConfig;
use crossmodal_core::env::{make_env, write_png_gray, write_wav_mono16, MultimodalEnv, SoundPayload};
use crossmodal_core::generative::{load_avae, parse_loss_csv, save_avae, AvaeModel};
use crossmodal_core::pipeline::{
    baseline_encoder, collect_dataset, evaluate as evaluate_episodes, evaluate_native, run_baseline, stage1_train_perception,
    stage2_train_policy, stage3_evaluate_transfer, train_policy as train_on_encoder, Baseline, EvalPolicy, PairedDataset, PolicyRun,
    TransferReport,
};
use crossmodal_core::{Error, ExperimentConfig, ModalitySubset};
use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::plots;
use crate::run::Run;
use crate::Common;

fn config(common: &Common) -> Result<ExperimentConfig> {
    ExperimentConfig::load(&common.config).map_err(|e| match e {
        Error::MissingArtifact(p) => Error::Config(format!("no config file or preset named {}", p.display())).into(),
        other => anyhow::Error::from(other).context(format!("loading config {}", common.config)),
    })
}

fn policy_seed(common: &Common, cfg: &ExperimentConfig) -> u64 {
    common.seed.or_else(|| cfg.pipeline.seeds.first().copied()).unwrap_or(0)
}

fn load_dataset(run: &mut Run, path: &Path) -> Result<PairedDataset> {
    run.input(path)?;
    Ok(PairedDataset::load(path)?)
}

fn load_model(run: &mut Run, path: &Path) -> Result<AvaeModel<f32>> {
    run.input(path)?;
    Ok(load_avae(path)?)
}

fn check_scenario(cfg: &ExperimentConfig, dataset: &PairedDataset) -> Result<()> {
    if dataset.env != cfg.scenario_name() {
        return Err(Error::Config(format!(
            "dataset was collected in {} but the config describes {}",
            dataset.env,
            cfg.scenario_name()
        ))
        .into());
    }
    Ok(())
}

fn log_episode(e: &EpisodeRecord) {
    if e.episode.is_multiple_of(10) {
        log::info!(
            "episode {} frames {} return {:.2} loss {:.4} exploration {:.3}",
            e.episode,
            e.frames,
            e.episode_return,
            e.mean_loss,
            e.exploration
        );
    }
}

fn save_policy(run: &mut Run, policy: &PolicyRun) -> Result<()> {
    save_agent(&policy.agent, &run.output("agent.xmod"))?;
    std::fs::write(run.output("training_log.csv"), EpisodeRecord::to_csv(&policy.log))?;
    let name = run.dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    plots::learning_curves(&[(name, policy.log.clone())], &run.output("learning_curve.svg"))?;
    Ok(())
}

fn write_report(run: &mut Run, report: &TransferReport) -> Result<()> {
    report.write(&run.output("report.json"), &run.output("report.csv"))?;
    let o = &report.over_episodes;
    log::info!(
        "{}: per-step {:.3} ± {:.3}, return {:.2} ± {:.2}, discounted {:.3} ± {:.3}{}",
        report.label,
        o.per_step.mean,
        o.per_step.std,
        o.undiscounted.mean,
        o.undiscounted.std,
        o.discounted.mean,
        o.discounted.std,
        o.win_rate.map(|w| format!(", win rate {:.3}", w.mean)).unwrap_or_default()
    );
    Ok(())
}

pub fn collect(common: &Common, samples: Option<usize>) -> Result<PathBuf> {
    let mut cfg = config(common)?;
    if let Some(m) = samples {
        cfg.avae.dataset_size = m;
    }
    let seed = common.seed.unwrap_or(cfg.pipeline.dataset_seed);
    let mut run = Run::start(&common.out, "collect", &cfg, seed)?;
    let mut env = make_env(&cfg)?;
    let dataset = collect_dataset(env.as_mut(), cfg.avae.dataset_size, seed, None)?;
    dataset.save(&run.output("dataset.xmod"))?;
    log::info!("collected {} samples, digest {}", dataset.len(), dataset.digest());
    Ok(run.finish()?)
}

pub fn train_perception(common: &Common, dataset: &Path, epochs: Option<usize>) -> Result<PathBuf> {
    let mut cfg = config(common)?;
    if let Some(e) = epochs {
        cfg.avae.epochs = e;
    }
    let seed = common.seed.unwrap_or(cfg.pipeline.dataset_seed);
    let mut run = Run::start(&common.out, "train-perception", &cfg, seed)?;
    let data = load_dataset(&mut run, dataset)?;
    check_scenario(&cfg, &data)?;
    let (model, history) = stage1_train_perception(&data, &cfg, seed, |e| {
        log::info!("epoch {} total loss {:.4}", e.epoch, e.total);
    })?;
    let digest = save_avae(&model, &run.output("avae.xmod"))?;
    history.write_csv(&run.output("loss.csv"))?;
    plots::loss_terms(&history.rows(), &run.output("loss.svg"))?;
    log::info!("perception model digest {digest}");
    Ok(run.finish()?)
}

pub struct PolicyArgs {
    pub model: Option<PathBuf>,
    pub train_modality: Option<ModalitySubset>,
    pub baseline: Option<Baseline>,
    pub dataset: Option<PathBuf>,
    pub frames: Option<usize>,
}

pub fn train_policy(common: &Common, args: PolicyArgs) -> Result<PathBuf> {
    let mut cfg = config(common)?;
    if let Some(f) = args.frames {
        cfg.agent.max_frames = f;
    }
    if let Some(m) = &args.train_modality {
        cfg.pipeline.train_modality = m.clone();
    }
    let seed = policy_seed(common, &cfg);
    let mut run = Run::start(&common.out, "train-policy", &cfg, seed)?;
    let mut env = make_env(&cfg)?;
    let policy = match args.baseline {
        Some(Baseline::Random) => {
            return Err(Error::Config("the random baseline has nothing to train; use evaluate --baseline random".into()).into())
        }
        Some(kind) => {
            let dataset = args.dataset.as_deref().map(|p| load_dataset(&mut run, p)).transpose()?;
            let encoder = baseline_encoder(kind, env.as_mut(), &cfg, dataset.as_ref(), seed)?.expect("native baseline");
            train_on_encoder(env.as_mut(), encoder.as_ref(), &cfg.agent, seed, log_episode)?
        }
        None => {
            let path = args
                .model
                .ok_or_else(|| Error::Config("train-policy needs --model or --baseline".into()))?;
            let model = load_model(&mut run, &path)?;
            stage2_train_policy(env.as_mut(), &model, &cfg.pipeline.train_modality, &cfg.agent, seed, log_episode)?
        }
    };
    save_policy(&mut run, &policy)?;
    Ok(run.finish()?)
}

pub struct EvalArgs {
    pub model: Option<PathBuf>,
    pub agent: Option<PathBuf>,
    pub train_modality: Option<ModalitySubset>,
    pub test_modality: Option<ModalitySubset>,
    pub baseline: Option<Baseline>,
    pub dataset: Option<PathBuf>,
    pub episodes: Option<usize>,
    pub frames: Option<usize>,
}

pub fn avae_label(train: &ModalitySubset, test: &ModalitySubset) -> String {
    format!("avae {train}->{test}")
}

pub fn evaluate(common: &Common, args: EvalArgs) -> Result<PathBuf> {
    let mut cfg = config(common)?;
    if let Some(n) = args.episodes {
        cfg.pipeline.eval_episodes = n;
    }
    if let Some(f) = args.frames {
        cfg.agent.max_frames = f;
    }
    if let Some(m) = &args.train_modality {
        cfg.pipeline.train_modality = m.clone();
    }
    if let Some(m) = &args.test_modality {
        cfg.pipeline.test_modality = m.clone();
    }
    let seed = policy_seed(common, &cfg);
    let (episodes, gamma) = (cfg.pipeline.eval_episodes, cfg.agent.gamma);
    let mut run = Run::start(&common.out, "evaluate", &cfg, seed)?;
    let mut env = make_env(&cfg)?;
    let scenario = cfg.scenario_name();
    let report = match args.baseline {
        Some(Baseline::Random) => {
            let outcomes = evaluate_episodes(env.as_mut(), None, EvalPolicy::Random, episodes, seed, gamma)?;
            TransferReport::new("random", scenario, None, None, cfg.digest(), gamma, outcomes)
        }
        Some(kind) => {
            let dataset = args.dataset.as_deref().map(|p| load_dataset(&mut run, p)).transpose()?;
            let outcomes = match &args.agent {
                Some(path) => {
                    run.input(path)?;
                    let agent = load_agent(path)?;
                    let encoder = baseline_encoder(kind, env.as_mut(), &cfg, dataset.as_ref(), seed)?.expect("native baseline");
                    evaluate_native(env.as_mut(), encoder.as_ref(), &agent, episodes, seed, gamma)?
                }
                None => {
                    let (policy, outcomes) = run_baseline(kind, env.as_mut(), &cfg, dataset.as_ref(), seed, log_episode)?;
                    if let Some(p) = &policy {
                        save_policy(&mut run, p)?;
                    }
                    outcomes
                }
            };
            TransferReport::new(kind.to_string(), scenario, None, None, cfg.digest(), gamma, outcomes)
        }
        None => {
            let (model_path, agent_path) = match (&args.model, &args.agent) {
                (Some(m), Some(a)) => (m, a),
                _ => return Err(Error::Config("evaluate needs --model and --agent, or --baseline".into()).into()),
            };
            let model = load_model(&mut run, model_path)?;
            run.input(agent_path)?;
            let agent = load_agent(agent_path)?;
            let (train, test) = (&cfg.pipeline.train_modality, &cfg.pipeline.test_modality);
            let outcomes = stage3_evaluate_transfer(env.as_mut(), &model, &agent, test, episodes, seed, gamma)
                .context("zero-shot evaluation")?;
            TransferReport::new(
                avae_label(train, test),
                scenario,
                Some(train.clone()),
                Some(test.clone()),
                cfg.digest(),
                gamma,
                outcomes,
            )
        }
    };
    write_report(&mut run, &report)?;
    Ok(run.finish()?)
}

/// Pools reports by scenario and method, in first-seen order.
pub fn pool_reports(reports: Vec<TransferReport>) -> Result<Vec<TransferReport>> {
    let mut groups: Vec<((String, String), Vec<TransferReport>)> = Vec::new();
    for r in reports {
        let key = (r.scenario.clone(), r.label.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(_, g)| TransferReport::merge(&g).map_err(anyhow::Error::from))
        .collect()
}

fn pm(a: &crossmodal_core::pipeline::Aggregate, digits: usize) -> String {
    format!("{:.*} ± {:.*}", digits, a.mean, digits, a.std)
}

/// Markdown table of mean ± std over pooled episodes, one row per method.
pub fn markdown_table(reports: &[TransferReport]) -> String {
    let mut by_scenario: BTreeMap<&str, Vec<&TransferReport>> = BTreeMap::new();
    for r in reports {
        by_scenario.entry(&r.scenario).or_default().push(r);
    }
    let mut out = String::new();
    for (scenario, rows) in by_scenario {
        let wins = rows.iter().any(|r| r.over_episodes.win_rate.is_some());
        out.push_str(&format!("## {scenario}\n\n"));
        out.push_str("| Method | Train | Test | Avg. reward per step | Episode return | Discounted return |");
        out.push_str(if wins { " Win rate |" } else { "" });
        out.push_str(" Seeds | Episodes |\n|---|---|---|---|---|---|");
        out.push_str(if wins { "---|" } else { "" });
        out.push_str("---|---|\n");
        for r in rows {
            let o = &r.over_episodes;
            let modality = |m: &Option<ModalitySubset>| m.as_ref().map(|m| m.to_string()).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |",
                r.label,
                modality(&r.train_modality),
                modality(&r.test_modality),
                pm(&o.per_step, 3),
                pm(&o.undiscounted, 2),
                pm(&o.discounted, 3),
            ));
            if wins {
                out.push_str(&format!(" {} |", o.win_rate.map(|w| pm(&w, 3)).unwrap_or_else(|| "-".into())));
            }
            out.push_str(&format!(" {} | {} |\n", r.seeds.len(), r.episodes.len()));
        }
        out.push('\n');
    }
    out
}

pub fn report(common: &Common, reports: &[PathBuf], logs: &[PathBuf], loss: Option<&Path>) -> Result<PathBuf> {
    let cfg = config(common)?;
    let mut run = Run::start(&common.out, "report", &cfg, common.seed.unwrap_or(0))?;
    let mut loaded = Vec::new();
    for path in reports {
        run.input(path)?;
        loaded.push(TransferReport::read(path)?);
    }
    let pooled = pool_reports(loaded)?;
    let table = markdown_table(&pooled);
    std::fs::write(run.output("table.md"), &table)?;
    print!("{table}");
    let scenarios: Vec<String> = {
        let mut s: Vec<String> = pooled.iter().map(|r| r.scenario.clone()).collect();
        s.dedup();
        s.sort();
        s.dedup();
        s
    };
    for scenario in scenarios {
        let rows: Vec<&TransferReport> = pooled.iter().filter(|r| r.scenario == scenario).collect();
        plots::method_bars(&rows, &run.output(&format!("bars-{scenario}.svg")))?;
    }
    let mut curves = Vec::new();
    for path in logs {
        run.input(path)?;
        let text = std::fs::read_to_string(path)?;
        let records = parse_training_log(&text).with_context(|| format!("parsing {}", path.display()))?;
        curves.push((curve_name(path), records));
    }
    plots::learning_curves(&curves, &run.output("learning_curves.svg"))?;
    if let Some(path) = loss {
        run.input(path)?;
        let rows = parse_loss_csv(&std::fs::read_to_string(path)?).with_context(|| format!("parsing {}", path.display()))?;
        plots::loss_terms(&rows, &run.output("loss.svg"))?;
    }
    Ok(run.finish()?)
}

fn curve_name(path: &Path) -> String {
    let parent = path.parent().and_then(|p| p.file_name());
    match parent {
        Some(p) => p.to_string_lossy().into_owned(),
        None => path.display().to_string(),
    }
}

fn receiver_ids(cfg: &ExperimentConfig) -> Vec<String> {
    match &cfg.scenario {
        ScenarioConfig::Pendulum(p) => p.receivers.iter().map(|r| r.id.clone()).collect(),
        ScenarioConfig::Hyperhot(h) => h.receivers.clone(),
    }
}

/// Newest frame of each receiver, rendered as audio samples.
fn newest_frame(sound: &SoundPayload, acoustics: &AcousticsConfig) -> Vec<Vec<f64>> {
    match sound {
        SoundPayload::Pcm(p) => {
            let last = p.index_axis(Axis(0), p.len_of(Axis(0)) - 1);
            last.outer_iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
        }
        SoundPayload::Tones(t) => {
            let last = t.index_axis(Axis(0), t.len_of(Axis(0)) - 1);
            last.outer_iter()
                .map(|r| {
                    frame_wave(
                        &[Tone {
                            frequency: r[0],
                            amplitude: r[1],
                        }],
                        acoustics,
                    )
                })
                .collect()
        }
    }
}

pub fn audio_dump(common: &Common, frames: usize, images: bool) -> Result<PathBuf> {
    let cfg = config(common)?;
    let seed = common.seed.unwrap_or(0);
    let mut run = Run::start(&common.out, "audio-dump", &cfg, seed)?;
    let (acoustics, pcm) = match &cfg.scenario {
        ScenarioConfig::Hyperhot(h) => (h.acoustics(), true),
        ScenarioConfig::Pendulum(_) => (AcousticsConfig::default(), false),
    };
    let mut env = make_env(&cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = receiver_ids(&cfg);
    let mut tracks: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    let mut obs = env.reset(seed)?;
    for frame in 0..frames {
        for (track, samples) in tracks.iter_mut().zip(newest_frame(&obs.sound, &acoustics)) {
            track.extend(samples);
        }
        if images {
            let img = obs.image.index_axis(Axis(0), obs.image.len_of(Axis(0)) - 1).to_owned();
            write_png_gray(&run.output(&format!("frame_{frame:04}.png")), &img)?;
        }
        let step = env.step(MultimodalEnv::random_action(env.as_ref(), &mut rng))?;
        obs = step.observation;
        if step.terminal {
            break;
        }
    }
    let peak = tracks.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for (id, track) in ids.iter().zip(&tracks) {
        let samples: Vec<i16> = if pcm {
            track.iter().map(|&v| v as i16).collect()
        } else {
            let scale = if peak > 0.0 { peak } else { 1.0 };
            encode_pcm16(&track.iter().map(|v| v / scale).collect::<Vec<_>>(), 1.0)?
        };
        write_wav_mono16(&run.output(&format!("{id}.wav")), &samples, acoustics.sample_rate.round() as u32)?;
    }
    log::info!("wrote {} receivers, {} samples each", ids.len(), tracks.first().map_or(0, Vec::len));
    Ok(run.finish()?)
}
