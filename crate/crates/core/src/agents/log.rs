use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRAINING_LOG_HEADER: &str = "episode,frames,return,discounted_return,mean_loss,mean_actor_objective,exploration";

/// One row of the per-episode training log. Missing means are NaN.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Cumulative environment frames at the end of the episode.
    pub frames: usize,
    pub episode_return: f64,
    pub discounted_return: f64,
    pub mean_loss: f64,
    pub mean_actor_objective: f64,
    pub exploration: f64,
}

impl EpisodeRecord {
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{},{}",
            self.episode,
            self.frames,
            self.episode_return,
            self.discounted_return,
            self.mean_loss,
            self.mean_actor_objective,
            self.exploration
        )
        .expect("string write");
        s
    }

    pub fn to_csv(records: &[EpisodeRecord]) -> String {
        let mut out = String::from(TRAINING_LOG_HEADER);
        out.push('\n');
        for r in records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

pub fn parse_training_log(text: &str) -> Result<Vec<EpisodeRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRAINING_LOG_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing training log header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: i + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", f.len())));
        }
        let num = |k: usize| f[k].trim().parse::<f64>().map_err(|e| bad(format!("field {}: {e}", k + 1)));
        let int = |k: usize| f[k].trim().parse::<usize>().map_err(|e| bad(format!("field {}: {e}", k + 1)));
        out.push(EpisodeRecord {
            episode: int(0)?,
            frames: int(1)?,
            episode_return: num(2)?,
            discounted_return: num(3)?,
            mean_loss: num(4)?,
            mean_actor_objective: num(5)?,
            exploration: num(6)?,
        });
    }
    Ok(out)
}
