use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Sound,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Image, Modality::Sound];

    pub fn index(self) -> usize {
        match self {
            Modality::Image => 0,
            Modality::Sound => 1,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Image => "image",
            Modality::Sound => "sound",
        })
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" | "vision" | "v" => Ok(Modality::Image),
            "sound" | "audio" | "s" => Ok(Modality::Sound),
            other => Err(Error::Config(format!("unknown modality {other:?}"))),
        }
    }
}

/// A non-empty set of modalities.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Modality>", into = "Vec<Modality>")]
pub struct ModalitySubset(BTreeSet<Modality>);

impl ModalitySubset {
    pub fn new(modalities: impl IntoIterator<Item = Modality>) -> Result<Self> {
        let set: BTreeSet<_> = modalities.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Config("modality subset must not be empty".into()));
        }
        Ok(Self(set))
    }

    pub fn single(m: Modality) -> Self {
        Self(BTreeSet::from([m]))
    }

    pub fn contains(&self, m: Modality) -> bool {
        self.0.contains(&m)
    }

    pub fn iter(&self) -> impl Iterator<Item = Modality> + '_ {
        self.0.iter().copied()
    }

    /// The modality, if the subset holds exactly one.
    pub fn as_single(&self) -> Option<Modality> {
        if self.0.len() == 1 {
            self.0.iter().next().copied()
        } else {
            None
        }
    }
}

impl TryFrom<Vec<Modality>> for ModalitySubset {
    type Error = Error;

    fn try_from(v: Vec<Modality>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ModalitySubset> for Vec<Modality> {
    fn from(s: ModalitySubset) -> Self {
        s.0.into_iter().collect()
    }
}

impl fmt::Display for ModalitySubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.0.iter().map(|m| m.to_string()).collect();
        f.write_str(&names.join("+"))
    }
}

impl std::str::FromStr for ModalitySubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(
            s.split(['+', ','])
                .filter(|p| !p.trim().is_empty())
                .map(|p| p.trim().parse())
                .collect::<Result<Vec<_>>>()?,
        )
    }
}
