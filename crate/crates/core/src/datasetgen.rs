//! Materializes dataset variants (full frame or ROI crop, score threshold)
//! from a manifest and per-frame best detections.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{frame_file_name, BBox, BestDetections, VideoMeta};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("detection refers to video {0} missing from the manifest")]
    UnknownVideo(String),
    #[error("invalid variant selector {0:?}")]
    InvalidVariant(String),
}

/// ROI flag plus score threshold τ. The four reference variants are
/// noROI/ROI × τ ∈ {0, 0.5}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetVariant {
    pub use_roi: bool,
    pub score_threshold: f64,
}

impl DatasetVariant {
    pub const fn new(use_roi: bool, score_threshold: f64) -> Self {
        Self {
            use_roi,
            score_threshold,
        }
    }

    pub const REFERENCE: [DatasetVariant; 4] = [
        DatasetVariant::new(false, 0.0),
        DatasetVariant::new(true, 0.0),
        DatasetVariant::new(false, 0.5),
        DatasetVariant::new(true, 0.5),
    ];

    /// Short name such as `roi_s0.5`, usable in file names.
    pub fn slug(&self) -> String {
        format!(
            "{}_s{}",
            if self.use_roi { "roi" } else { "noroi" },
            self.score_threshold
        )
    }
}

impl fmt::Display for DatasetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},S{}",
            if self.use_roi { "ROI" } else { "noROI" },
            self.score_threshold
        )
    }
}

/// Parses selectors like `roi,s0.5`, `noroi,s0` or `ROI,S0.5`.
impl FromStr for DatasetVariant {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatasetError::InvalidVariant(s.to_string());
        let mut roi = None;
        let mut tau = None;
        for tok in s.split([',', '_']).map(|t| t.trim().to_ascii_lowercase()) {
            match tok.as_str() {
                "roi" if roi.is_none() => roi = Some(true),
                "noroi" if roi.is_none() => roi = Some(false),
                t if t.starts_with('s') && tau.is_none() => {
                    let v: f64 = t[1..].parse().map_err(|_| bad())?;
                    if !(0.0..=1.0).contains(&v) {
                        return Err(bad());
                    }
                    tau = Some(v);
                }
                _ => return Err(bad()),
            }
        }
        match (roi, tau) {
            (Some(use_roi), Some(score_threshold)) => Ok(Self::new(use_roi, score_threshold)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub video_id: String,
    pub frame_index: usize,
    pub label: String,
    pub score: f64,
    pub image_ref: String,
    /// Clamped ROI, present iff the variant uses ROIs.
    pub crop: Option<BBox>,
}

pub fn sample_id(video_id: &str, frame: usize) -> String {
    format!("{video_id}:{frame:06}")
}

/// Builds one dataset variant: one sample per best detection with
/// `score >= τ`, labelled with its video's weak label, sorted by
/// (video id, frame). Detections whose box misses the frame entirely are
/// dropped for every variant so the ROI flag never changes membership.
///
/// `frames_root` is prepended to each video's `frames_dir` when forming
/// `image_ref` (usually the manifest's directory).
pub fn build_dataset(
    manifest: &[VideoMeta],
    best: &BestDetections,
    variant: DatasetVariant,
    frames_root: &Path,
) -> Result<Vec<Sample>, DatasetError> {
    let videos: BTreeMap<&str, &VideoMeta> =
        manifest.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let mut samples = Vec::new();
    for (video_id, frames) in best {
        let video = videos
            .get(video_id.as_str())
            .ok_or_else(|| DatasetError::UnknownVideo(video_id.clone()))?;
        let dir = frames_root.join(&video.frames_dir);
        for (&frame, det) in frames {
            if det.score < variant.score_threshold {
                continue;
            }
            let Some(clamped) = det.bbox.clamp_to(video.width, video.height) else {
                log::warn!(
                    "dropping {video_id} frame {frame}: box {:?} misses the {}x{} frame",
                    det.bbox,
                    video.width,
                    video.height
                );
                continue;
            };
            samples.push(Sample {
                sample_id: sample_id(video_id, frame),
                video_id: video_id.clone(),
                frame_index: frame,
                label: video.weak_label.clone(),
                score: det.score,
                image_ref: dir
                    .join(frame_file_name(frame))
                    .to_string_lossy()
                    .into_owned(),
                crop: variant.use_roi.then_some(clamped),
            });
        }
    }
    if samples.is_empty() {
        log::warn!("dataset {variant} is empty: no detection reaches the threshold");
    }
    Ok(samples)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub per_class: BTreeMap<String, usize>,
    pub total: usize,
    pub min_per_class: usize,
    pub max_per_class: usize,
}

pub fn dataset_stats(samples: &[Sample]) -> DatasetStats {
    let mut per_class = BTreeMap::new();
    for s in samples {
        *per_class.entry(s.label.clone()).or_insert(0usize) += 1;
    }
    DatasetStats {
        total: samples.len(),
        min_per_class: per_class.values().copied().min().unwrap_or(0),
        max_per_class: per_class.values().copied().max().unwrap_or(0),
        per_class,
    }
}

/// On-disk `dataset.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub variant: DatasetVariant,
    pub manifest: String,
    pub detections: String,
    pub stats: DatasetStats,
    pub samples: Vec<Sample>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{best_per_video, DetectionRecord, Source};
    use proptest::prelude::*;

    fn video(id: &str, label: &str) -> VideoMeta {
        VideoMeta {
            video_id: id.into(),
            weak_label: label.into(),
            source: Source::Camcorder,
            frame_count: 10,
            width: 100,
            height: 80,
            frames_dir: format!("frames/{id}"),
        }
    }

    fn det(video: &str, frame: usize, score: f64, bbox: BBox) -> DetectionRecord {
        DetectionRecord {
            video_id: video.into(),
            frame_index: frame,
            bbox,
            score,
        }
    }

    #[test]
    fn variant_selectors() {
        assert_eq!(
            "roi,s0.5".parse::<DatasetVariant>().unwrap(),
            DatasetVariant::new(true, 0.5)
        );
        assert_eq!(
            "noROI,S0".parse::<DatasetVariant>().unwrap(),
            DatasetVariant::new(false, 0.0)
        );
        assert_eq!(
            "roi_s0.5".parse::<DatasetVariant>().unwrap(),
            DatasetVariant::new(true, 0.5)
        );
        assert!("roi".parse::<DatasetVariant>().is_err());
        assert!("roi,s1.5".parse::<DatasetVariant>().is_err());
        assert!("roi,noroi,s0".parse::<DatasetVariant>().is_err());
        for v in DatasetVariant::REFERENCE {
            assert_eq!(v.slug().parse::<DatasetVariant>().unwrap(), v);
        }
    }

    #[test]
    fn build_thresholds_and_crops() {
        let manifest = vec![video("a", "Opala"), video("b", "Leki")];
        let dets = vec![
            det("a", 0, 0.28, BBox::new(10, 10, 50, 80)),
            det("a", 1, 0.5, BBox::new(-10, 0, 30, 30)),
            det("b", 4, 0.9, BBox::new(90, 70, 30, 30)),
        ];
        let best = best_per_video(&dets);
        let all = build_dataset(
            &manifest,
            &best,
            DatasetVariant::new(true, 0.0),
            Path::new("root"),
        )
        .unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[0].crop, Some(BBox::new(10, 10, 50, 70)));
        assert_eq!(all[1].crop, Some(BBox::new(0, 0, 20, 30)));
        assert_eq!(all[2].label, "Leki");
        assert!(all[2].image_ref.ends_with("000004.png"));

        let strict = build_dataset(
            &manifest,
            &best,
            DatasetVariant::new(false, 0.5),
            Path::new("root"),
        )
        .unwrap();
        let ids: Vec<_> = strict.iter().map(|s| s.sample_id.as_str()).collect();
        assert_eq!(ids, ["a:000001", "b:000004"]);
        assert!(strict.iter().all(|s| s.crop.is_none()));
    }

    #[test]
    fn threshold_one_gives_empty() {
        let manifest = vec![video("a", "x")];
        let best = best_per_video(&[det("a", 0, 0.99, BBox::new(0, 0, 5, 5))]);
        assert!(build_dataset(
            &manifest,
            &best,
            DatasetVariant::new(false, 1.0),
            Path::new(".")
        )
        .unwrap()
        .is_empty());
    }

    #[test]
    fn unknown_video_is_error() {
        let best = best_per_video(&[det("zz", 0, 0.9, BBox::new(0, 0, 5, 5))]);
        assert!(matches!(
            build_dataset(&[video("a", "x")], &best, DatasetVariant::new(false, 0.0), Path::new(".")),
            Err(DatasetError::UnknownVideo(v)) if v == "zz"
        ));
    }

    #[test]
    fn off_frame_boxes_dropped_in_every_variant() {
        let manifest = vec![video("a", "x")];
        let best = best_per_video(&[
            det("a", 0, 0.9, BBox::new(200, 0, 5, 5)),
            det("a", 1, 0.9, BBox::new(0, 0, 5, 5)),
        ]);
        for v in DatasetVariant::REFERENCE {
            assert_eq!(
                build_dataset(&manifest, &best, v, Path::new("."))
                    .unwrap()
                    .len(),
                1
            );
        }
    }

    #[test]
    fn stats_counts() {
        assert_eq!(dataset_stats(&[]), DatasetStats::default());
        let mk = |label: &str, i: usize| Sample {
            sample_id: format!("{label}{i}"),
            video_id: "v".into(),
            frame_index: i,
            label: label.into(),
            score: 1.0,
            image_ref: String::new(),
            crop: None,
        };
        let samples = vec![mk("A", 0), mk("A", 1), mk("B", 2), mk("A", 3)];
        let stats = dataset_stats(&samples);
        assert_eq!(
            (stats.min_per_class, stats.max_per_class, stats.total),
            (1, 3, 4)
        );
    }

    proptest! {
        #[test]
        fn higher_threshold_is_subset(
            scores in proptest::collection::vec(0.0f64..=1.0, 1..80),
            t1 in 0.0f64..=1.0,
            t2 in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let manifest = vec![video("a", "x"), video("b", "y")];
            let dets: Vec<_> = scores
                .iter()
                .enumerate()
                .map(|(i, &s)| det(if i % 3 == 0 { "b" } else { "a" }, i, s, BBox::new(i as i64 - 20, 5, 30, 30)))
                .collect();
            let best = best_per_video(&dets);
            for roi in [false, true] {
                let low = build_dataset(&manifest, &best, DatasetVariant::new(roi, lo), Path::new(".")).unwrap();
                let high = build_dataset(&manifest, &best, DatasetVariant::new(roi, hi), Path::new(".")).unwrap();
                for s in &high {
                    prop_assert!(s.score >= hi);
                    prop_assert!(low.contains(s));
                }
            }
            let plain = build_dataset(&manifest, &best, DatasetVariant::new(false, lo), Path::new(".")).unwrap();
            let roi = build_dataset(&manifest, &best, DatasetVariant::new(true, lo), Path::new(".")).unwrap();
            prop_assert_eq!(plain.len(), roi.len());
            for (p, r) in plain.iter().zip(&roi) {
                let mut r = r.clone();
                prop_assert!(r.crop.is_some());
                r.crop = None;
                prop_assert_eq!(p, &r);
            }
        }
    }
}
