use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.6,
            valid_fraction: 0.2,
            test_fraction: 0.2,
            seed: 7,
        }
    }
}

/// Event ids of each partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fr = [self.train_fraction, self.valid_fraction, self.test_fraction];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(PipelineError::Config(
                "split fractions must each be in (0, 1) and sum to 1".into(),
            ));
        }
        Ok(())
    }

    /// Partition sizes: validation and test are rounded, training takes the remainder.
    pub fn counts(&self, n_events: usize) -> (usize, usize, usize) {
        let valid = (self.valid_fraction * n_events as f64).round() as usize;
        let test = (self.test_fraction * n_events as f64).round() as usize;
        (n_events.saturating_sub(valid + test), valid, test)
    }
}

/// Seeded shuffle of `0..n_events` followed by a contiguous train/valid/test partition.
pub fn split_events(n_events: usize, spec: &SplitSpec) -> Result<EventSplit, PipelineError> {
    spec.validate()?;
    let (n_train, n_valid, n_test) = spec.counts(n_events);
    if n_events < 5 || n_train == 0 || n_valid == 0 || n_test == 0 || n_train + n_valid + n_test != n_events {
        return Err(PipelineError::TooFewEvents(n_events));
    }
    let mut ids: Vec<usize> = (0..n_events).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let part = |range: std::ops::Range<usize>| {
        let mut v = ids[range].to_vec();
        v.sort_unstable();
        v
    };
    Ok(EventSplit {
        train: part(0..n_train),
        valid: part(n_train..n_train + n_valid),
        test: part(n_train + n_valid..n_events),
    })
}
