//! Frame-level stratified k-fold and video-level train/val/test splits.
//!
//! The two schemes differ in one respect that matters: k-fold assigns
//! individual frames, so neighbouring frames of one video land on both sides
//! of every fold boundary, while the video split keeps each video whole.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasetgen::Sample;
use crate::ingest::VideoMeta;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("{samples} samples cannot fill {k} folds")]
    TooFewSamples { samples: usize, k: usize },
    #[error("duplicate sample id {0}")]
    DuplicateSample(String),
    #[error("ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("{0} is not covered by the assignment")]
    Uncovered(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::Train, Part::Val, Part::Test];
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
        })
    }
}

impl std::str::FromStr for Part {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Part::Train),
            "val" => Ok(Part::Val),
            "test" => Ok(Part::Test),
            other => Err(format!("unknown split part {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    pub shuffled: bool,
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.fold_of.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Fold of each id, in order.
    pub fn folds_for(&self, sample_ids: &[String]) -> Result<Vec<usize>, SplitError> {
        sample_ids
            .iter()
            .map(|id| {
                self.fold_of
                    .get(id)
                    .copied()
                    .ok_or_else(|| SplitError::Uncovered(id.clone()))
            })
            .collect()
    }
}

/// Stratified, seeded k-fold over samples. Each class's samples are shuffled
/// and dealt round-robin; the dealing cursor carries over between classes
/// (classes in lexicographic order) so overall fold sizes stay balanced too.
pub fn kfold_frame_split(
    samples: &[Sample],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, SplitError> {
    if k < 2 {
        return Err(SplitError::InvalidK(k));
    }
    if samples.len() < k {
        return Err(SplitError::TooFewSamples {
            samples: samples.len(),
            k,
        });
    }
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for s in samples {
        if !seen.insert(s.sample_id.as_str()) {
            return Err(SplitError::DuplicateSample(s.sample_id.clone()));
        }
        by_class.entry(&s.label).or_default().push(&s.sample_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = BTreeMap::new();
    let mut cursor = 0usize;
    for ids in by_class.values_mut() {
        // Sort first so the result does not depend on input order.
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            fold_of.insert((*id).to_string(), cursor % k);
            cursor += 1;
        }
    }
    Ok(FoldAssignment {
        k,
        seed,
        stratified: true,
        shuffled: true,
        fold_of,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl SplitAssignment {
    pub fn part_of(&self, video_id: &str) -> Option<Part> {
        Part::ALL
            .into_iter()
            .find(|&p| self.videos(p).iter().any(|v| v == video_id))
    }

    pub fn videos(&self, part: Part) -> &[String] {
        match part {
            Part::Train => &self.train,
            Part::Val => &self.val,
            Part::Test => &self.test,
        }
    }

    /// video id → part lookup table.
    pub fn index(&self) -> BTreeMap<&str, Part> {
        Part::ALL
            .into_iter()
            .flat_map(|p| self.videos(p).iter().map(move |v| (v.as_str(), p)))
            .collect()
    }

    /// Row indices of each part (train, val, test) given every row's video.
    pub fn rows_by_part(&self, row_videos: &[String]) -> Result<[Vec<usize>; 3], SplitError> {
        let index = self.index();
        let mut parts: [Vec<usize>; 3] = Default::default();
        for (i, v) in row_videos.iter().enumerate() {
            let part = index
                .get(v.as_str())
                .ok_or_else(|| SplitError::Uncovered(v.clone()))?;
            parts[Part::ALL
                .iter()
                .position(|p| p == part)
                .expect("known part")]
            .push(i);
        }
        Ok(parts)
    }
}

/// Apportions `n` items to (train, val, test) by largest remainder. Leftover
/// items go to the largest fractional remainders; equal remainders favour
/// train, then test, then val.
pub fn largest_remainder(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    const EPS: f64 = 1e-9;
    let quotas = ratios.map(|r| r * n as f64);
    let mut counts = quotas.map(|q| (q + EPS).floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut leftover = n.saturating_sub(assigned);
    // train, test, val
    let mut order = [0usize, 2, 1];
    let frac = |i: usize| (quotas[i] - counts[i] as f64).max(0.0);
    order.sort_by(|&a, &b| {
        let (fa, fb) = (frac(a), frac(b));
        if (fa - fb).abs() <= EPS {
            std::cmp::Ordering::Equal
        } else {
            fb.partial_cmp(&fa).unwrap()
        }
    });
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    counts
}

/// Per individual, shuffles that individual's videos and cuts them into
/// train/val/test by [`largest_remainder`] over video counts. Frame counts
/// are deliberately ignored.
pub fn video_level_split(
    videos: &[VideoMeta],
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment, SplitError> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0)
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(SplitError::InvalidRatios(ratios));
    }
    let mut by_label: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for v in videos {
        by_label.entry(&v.weak_label).or_default().push(&v.video_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<String>; 3] = Default::default();
    for (label, ids) in by_label.iter_mut() {
        ids.sort_unstable();
        ids.dedup();
        ids.shuffle(&mut rng);
        let counts = largest_remainder(ids.len(), ratios);
        if ids.len() == 1 {
            log::warn!("individual {label} has a single video; it goes to train only");
        } else if counts.iter().filter(|&&c| c > 0).count() < 3 {
            log::warn!(
                "individual {label} has {} videos; split {:?} leaves a part empty",
                ids.len(),
                counts
            );
        }
        let mut it = ids.iter();
        for (part, &count) in parts.iter_mut().zip(&counts) {
            part.extend(it.by_ref().take(count).map(|s| s.to_string()));
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok(SplitAssignment {
        train,
        val,
        test,
        seed,
        ratios,
    })
}

/// Video descriptors recovered from a dataset when no manifest is at hand.
pub fn videos_from_samples(samples: &[Sample]) -> Vec<VideoMeta> {
    let mut seen = BTreeMap::new();
    for s in samples {
        seen.entry(s.video_id.clone())
            .or_insert_with(|| s.label.clone());
    }
    seen.into_iter()
        .map(|(video_id, weak_label)| VideoMeta {
            video_id,
            weak_label,
            source: crate::ingest::Source::Webcam,
            frame_count: 0,
            width: 1,
            height: 1,
            frames_dir: String::new(),
        })
        .collect()
}
