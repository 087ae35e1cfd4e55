use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::ModalitySubset;

pub const REPORT_CSV_HEADER: &str = "seed,episode,steps,return,discounted_return,per_step_reward,win";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub episode: usize,
    pub steps: usize,
    pub undiscounted: f64,
    pub discounted: f64,
    pub per_step: f64,
    /// Only for games with a win condition.
    pub win: Option<bool>,
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }

    fn close(&self, other: &Self, tol: f64) -> bool {
        let eq = |a: f64, b: f64| (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol;
        eq(self.mean, other.mean) && eq(self.std, other.std)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub undiscounted: Aggregate,
    pub discounted: Aggregate,
    pub per_step: Aggregate,
    pub win_rate: Option<Aggregate>,
}

impl Summary {
    fn close(&self, other: &Self, tol: f64) -> bool {
        let wins = match (&self.win_rate, &other.win_rate) {
            (Some(a), Some(b)) => a.close(b, tol),
            (None, None) => true,
            _ => false,
        };
        self.undiscounted.close(&other.undiscounted, tol)
            && self.discounted.close(&other.discounted, tol)
            && self.per_step.close(&other.per_step, tol)
            && wins
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub episodes: usize,
    pub undiscounted: f64,
    pub discounted: f64,
    pub per_step: f64,
    pub win_rate: Option<f64>,
}

/// Evaluation of one method over several seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub label: String,
    pub scenario: String,
    pub train_modality: Option<ModalitySubset>,
    pub test_modality: Option<ModalitySubset>,
    pub config_digest: String,
    pub gamma: f64,
    pub seeds: Vec<u64>,
    pub episodes: Vec<EpisodeOutcome>,
    /// Over all episodes pooled.
    pub over_episodes: Summary,
    /// Over per-seed means.
    pub over_seeds: Summary,
    pub per_seed: Vec<SeedSummary>,
}

fn summarize(outcomes: &[EpisodeOutcome]) -> Summary {
    let has_wins = outcomes.iter().any(|o| o.win.is_some());
    Summary {
        undiscounted: Aggregate::of(outcomes.iter().map(|o| o.undiscounted)),
        discounted: Aggregate::of(outcomes.iter().map(|o| o.discounted)),
        per_step: Aggregate::of(outcomes.iter().map(|o| o.per_step)),
        win_rate: has_wins.then(|| Aggregate::of(outcomes.iter().map(|o| o.win == Some(true)).map(f64::from))),
    }
}

fn derived(mut outcomes: Vec<EpisodeOutcome>) -> (Vec<EpisodeOutcome>, Vec<u64>, Vec<SeedSummary>, Summary, Summary) {
    outcomes.sort_by_key(|o| (o.seed, o.episode));
    let mut seeds: Vec<u64> = outcomes.iter().map(|o| o.seed).collect();
    seeds.dedup();
    let per_seed: Vec<SeedSummary> = seeds
        .iter()
        .map(|&s| {
            let mine: Vec<EpisodeOutcome> = outcomes.iter().filter(|o| o.seed == s).copied().collect();
            let sum = summarize(&mine);
            SeedSummary {
                seed: s,
                episodes: mine.len(),
                undiscounted: sum.undiscounted.mean,
                discounted: sum.discounted.mean,
                per_step: sum.per_step.mean,
                win_rate: sum.win_rate.map(|w| w.mean),
            }
        })
        .collect();
    let over_seeds = Summary {
        undiscounted: Aggregate::of(per_seed.iter().map(|s| s.undiscounted)),
        discounted: Aggregate::of(per_seed.iter().map(|s| s.discounted)),
        per_step: Aggregate::of(per_seed.iter().map(|s| s.per_step)),
        win_rate: per_seed
            .iter()
            .all(|s| s.win_rate.is_some())
            .then(|| Aggregate::of(per_seed.iter().filter_map(|s| s.win_rate)))
            .filter(|_| !per_seed.is_empty()),
    };
    let over_episodes = summarize(&outcomes);
    (outcomes, seeds, per_seed, over_episodes, over_seeds)
}

impl TransferReport {
    pub fn new(
        label: impl Into<String>,
        scenario: impl Into<String>,
        train_modality: Option<ModalitySubset>,
        test_modality: Option<ModalitySubset>,
        config_digest: impl Into<String>,
        gamma: f64,
        outcomes: Vec<EpisodeOutcome>,
    ) -> Self {
        let (episodes, seeds, per_seed, over_episodes, over_seeds) = derived(outcomes);
        Self {
            label: label.into(),
            scenario: scenario.into(),
            train_modality,
            test_modality,
            config_digest: config_digest.into(),
            gamma,
            seeds,
            episodes,
            over_episodes,
            over_seeds,
            per_seed,
        }
    }

    /// Pools several reports of the same method.
    pub fn merge(reports: &[TransferReport]) -> Result<Self> {
        let first = reports.first().ok_or_else(|| Error::Config("nothing to merge".into()))?;
        let mut outcomes = Vec::new();
        for r in reports {
            if r.label != first.label || r.scenario != first.scenario || r.config_digest != first.config_digest {
                return Err(Error::Config(format!("cannot merge report {} into {}", r.label, first.label)));
            }
            outcomes.extend(r.episodes.iter().copied());
        }
        Ok(Self::new(
            first.label.clone(),
            first.scenario.clone(),
            first.train_modality.clone(),
            first.test_modality.clone(),
            first.config_digest.clone(),
            first.gamma,
            outcomes,
        ))
    }

    /// True when every aggregate equals its recomputation to `tol`.
    pub fn verify(&self, tol: f64) -> bool {
        let (_, seeds, per_seed, over_episodes, over_seeds) = derived(self.episodes.clone());
        let seeds_ok = seeds == self.seeds && per_seed.len() == self.per_seed.len();
        let per_seed_ok = per_seed.iter().zip(&self.per_seed).all(|(a, b)| {
            a.seed == b.seed
                && a.episodes == b.episodes
                && (a.undiscounted - b.undiscounted).abs() <= tol
                && (a.discounted - b.discounted).abs() <= tol
                && (a.per_step - b.per_step).abs() <= tol
                && match (a.win_rate, b.win_rate) {
                    (Some(x), Some(y)) => (x - y).abs() <= tol,
                    (None, None) => true,
                    _ => false,
                }
        });
        seeds_ok && per_seed_ok && over_episodes.close(&self.over_episodes, tol) && over_seeds.close(&self.over_seeds, tol)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for o in &self.episodes {
            let win = match o.win {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                o.seed, o.episode, o.steps, o.undiscounted, o.discounted, o.per_step, win
            )
            .expect("string write");
        }
        out
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        std::fs::write(json_path, serde_json::to_string_pretty(self)?)?;
        std::fs::write(csv_path, self.to_csv())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcome(seed: u64, episode: usize, r: f64, win: Option<bool>) -> EpisodeOutcome {
        EpisodeOutcome {
            seed,
            episode,
            steps: 10,
            undiscounted: r,
            discounted: r * 0.9,
            per_step: r / 10.0,
            win,
        }
    }

    #[test]
    fn aggregates_by_hand() {
        let r = TransferReport::new(
            "m",
            "hyperhot",
            None,
            None,
            "d",
            0.99,
            vec![
                outcome(2, 0, 10.0, Some(true)),
                outcome(1, 0, -1.0, Some(false)),
                outcome(1, 1, -1.0, Some(false)),
                outcome(2, 1, -1.0, Some(false)),
            ],
        );
        assert_eq!(r.seeds, vec![1, 2]);
        assert_eq!(r.over_episodes.undiscounted.mean, 7.0 / 4.0);
        assert_eq!(r.over_episodes.win_rate.unwrap().mean, 0.25);
        assert_eq!(r.per_seed[1].undiscounted, 4.5);
        assert_eq!(r.over_seeds.undiscounted, Aggregate { mean: 1.75, std: 2.75 });
        assert!(r.verify(1e-12));
        let mut tampered = r.clone();
        tampered.episodes[0].undiscounted += 1e-6;
        assert!(!tampered.verify(1e-12));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let r = TransferReport::new("m", "pendulum", None, None, "d", 0.99, vec![outcome(0, 0, -3.5, None)]);
        assert!(r.to_csv().ends_with("0,0,10,-3.5,-3.15,-0.35,\n"));
        let dir = tempfile::tempdir().unwrap();
        let (j, c) = (dir.path().join("r.json"), dir.path().join("r.csv"));
        r.write(&j, &c).unwrap();
        assert_eq!(TransferReport::read(&j).unwrap(), r);
        assert!(matches!(
            TransferReport::read(&dir.path().join("none.json")),
            Err(Error::MissingArtifact(_))
        ));
    }

    proptest! {
        #[test]
        fn aggregates_recompute(rs in proptest::collection::vec((0u64..4, -100.0..100.0f64, proptest::bool::ANY), 1..60)) {
            let outcomes: Vec<EpisodeOutcome> = rs.iter().enumerate().map(|(i, &(s, r, w))| outcome(s, i, r, Some(w))).collect();
            let r = TransferReport::new("m", "x", None, None, "d", 0.99, outcomes);
            prop_assert!(r.verify(1e-12));
            let back: TransferReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
            prop_assert!(back.verify(1e-12));
        }
    }
}
