use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::records::Trajectory;
use crate::error::{Error, Result};

/// A contiguous window `start..start + len` of trajectory `trajectory`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub trajectory: usize,
    pub start: usize,
    pub len: usize,
    pub start_time_s: i64,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// `n_samples` windows, each from a uniformly drawn trajectory with at least
/// two records, length uniform in `[2, min(leng, trajectory length)]` and a
/// uniform start. Returns the windows and the number of trajectories skipped
/// for being shorter than two records.
pub fn segment_trajectories(trajectories: &[Trajectory], leng: usize, n_samples: usize, seed: u64) -> Result<(Vec<Segment>, usize)> {
    if leng < 2 {
        return Err(Error::Argument(format!("leng must be at least 2, got {leng}")));
    }
    let eligible: Vec<usize> = (0..trajectories.len()).filter(|&i| trajectories[i].len() >= 2).collect();
    let skipped = trajectories.len() - eligible.len();
    if skipped > 0 {
        log::info!("skipped {skipped} trajectories shorter than 2 records");
    }
    if eligible.is_empty() {
        return Ok((Vec::new(), skipped));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let ti = eligible[rng.random_range(0..eligible.len())];
        let n = trajectories[ti].len();
        let len = rng.random_range(2..=leng.min(n));
        let start = rng.random_range(0..=n - len);
        out.push(Segment {
            trajectory: ti,
            start,
            len,
            start_time_s: trajectories[ti].records[start].timestamp_s,
        });
    }
    Ok((out, skipped))
}

/// Sorts by start time and cuts by count in `ratio` proportions; the
/// train and validation sizes are floored and the remainder goes to test.
pub fn chronological_split(mut segments: Vec<Segment>, ratio: [usize; 3]) -> Result<(Vec<Segment>, Vec<Segment>, Vec<Segment>)> {
    if segments.len() < 10 {
        return Err(Error::Config(format!("need at least 10 segments to split, found {}", segments.len())));
    }
    let total: usize = ratio.iter().sum();
    if total == 0 {
        return Err(Error::Config("split ratio must be positive".into()));
    }
    segments.sort_by_key(|s| (s.start_time_s, s.trajectory, s.start, s.len));
    let n = segments.len();
    let n_train = n * ratio[0] / total;
    let n_val = n * ratio[1] / total;
    let test = segments.split_off(n_train + n_val);
    let val = segments.split_off(n_train);
    Ok((segments, val, test))
}
