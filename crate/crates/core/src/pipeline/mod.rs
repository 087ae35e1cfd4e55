//! The three-stage experiment: collect and learn perception, learn a policy
//! on one modality's latent codes, evaluate it zero-shot on another.

mod dataset;
mod encoder;
mod quality;
mod report;
mod stages;

pub use dataset::{collect_dataset, PairedDataset, DATASET_KIND};
pub use encoder::{LatentStateEncoder, RawStateEncoder, StateEncoder};
pub use quality::{evaluate_perception, PerceptionQuality};
pub use report::{Aggregate, EpisodeOutcome, SeedSummary, Summary, TransferReport, REPORT_CSV_HEADER};
pub use stages::{
    baseline_encoder, evaluate, evaluate_native, run_baseline, stage1_train_perception, stage2_train_policy, stage3_evaluate_transfer, train_policy,
    Baseline, EvalPolicy, PolicyRun,
};

/// Seed streams that never overlap: one per purpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedDomain {
    DatasetEpisodes = 1,
    TrainingEpisodes = 2,
    EvaluationEpisodes = 3,
    AgentInit = 4,
    RandomPolicy = 5,
    Normalizer = 6,
}

/// Mixes `(base, domain, index)` into an independent 64-bit seed.
pub fn derive_seed(base: u64, domain: SeedDomain, index: u64) -> u64 {
    let mut z = base
        ^ (domain as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03);
    for _ in 0..2 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}
