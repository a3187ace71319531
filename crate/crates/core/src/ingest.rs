//! Detector output parsing and best-detection selection.
//!
//! Detections arrive as JSON lines, one hit per line:
//! `{"video_id":"v1","frame":0,"bbox":[10,10,50,80],"score":0.28}`.
//! The video manifest is a CSV with header
//! `video_id,weak_label,source,frame_count,width,height,frames_dir`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed detection on line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("score {score} out of [0, 1] on line {line}")]
    ScoreOutOfRange { line: usize, score: f64 },
    #[error("non-positive box {w}x{h} on line {line}")]
    NonPositiveBox { line: usize, w: i64, h: i64 },
    #[error("records span multiple videos ({first} and {other})")]
    MixedVideos { first: String, other: String },
    #[error("invalid manifest row {row}: {reason}")]
    InvalidManifest { row: usize, reason: String },
    #[error("duplicate video id {0} in manifest")]
    DuplicateVideo(String),
}

/// Acquisition device of a video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Webcam,
    Camcorder,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Webcam => f.write_str("webcam"),
            Source::Camcorder => f.write_str("camcorder"),
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "webcam" => Ok(Source::Webcam),
            "camcorder" => Ok(Source::Camcorder),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

/// One manifest row. `weak_label` is the individual the whole video is
/// attributed to; every detection in the video inherits it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub weak_label: String,
    pub source: Source,
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    /// Directory holding the extracted frames, `{frame:06}.png`.
    pub frames_dir: String,
}

/// Axis-aligned box in pixels, top-left origin. `x`/`y` may be negative for
/// boxes hanging off the frame edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl BBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        Self { x, y, w, h }
    }

    /// Intersection with a `width`×`height` frame, `None` when empty.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BBox> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.w).min(i64::from(width));
        let y1 = (self.y + self.h).min(i64::from(height));
        if x1 <= x0 || y1 <= y0 {
            None
        } else {
            Some(BBox::new(x0, y0, x1 - x0, y1 - y0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub video_id: String,
    pub frame_index: usize,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionLine {
    video_id: String,
    frame: usize,
    bbox: [i64; 4],
    score: f64,
}

/// Parses a JSON-lines detection stream. Blank lines are skipped; every other
/// line yields exactly one record, in file order.
pub fn parse_detections(stream: &str) -> Result<Vec<DetectionRecord>, IngestError> {
    let mut out = Vec::new();
    for (idx, raw) in stream.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: DetectionLine =
            serde_json::from_str(line).map_err(|e| IngestError::MalformedLine {
                line: line_no,
                reason: e.to_string(),
            })?;
        if !(0.0..=1.0).contains(&parsed.score) {
            return Err(IngestError::ScoreOutOfRange {
                line: line_no,
                score: parsed.score,
            });
        }
        let [x, y, w, h] = parsed.bbox;
        if w <= 0 || h <= 0 {
            return Err(IngestError::NonPositiveBox {
                line: line_no,
                w,
                h,
            });
        }
        out.push(DetectionRecord {
            video_id: parsed.video_id,
            frame_index: parsed.frame,
            bbox: BBox::new(x, y, w, h),
            score: parsed.score,
        });
    }
    Ok(out)
}

/// Inverse of [`parse_detections`].
pub fn serialize_detections(records: &[DetectionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let line = DetectionLine {
            video_id: r.video_id.clone(),
            frame: r.frame_index,
            bbox: [r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h],
            score: r.score,
        };
        // Serializing a plain struct of strings and numbers cannot fail.
        out.push_str(&serde_json::to_string(&line).expect("detection serializes"));
        out.push('\n');
    }
    out
}

/// Keeps the highest-scoring detection of every frame. Equal scores keep the
/// record that came first in `records`.
pub fn select_best_per_frame(
    records: &[DetectionRecord],
) -> Result<BTreeMap<usize, DetectionRecord>, IngestError> {
    let mut best: BTreeMap<usize, DetectionRecord> = BTreeMap::new();
    let Some(first) = records.first() else {
        return Ok(best);
    };
    for r in records {
        if r.video_id != first.video_id {
            return Err(IngestError::MixedVideos {
                first: first.video_id.clone(),
                other: r.video_id.clone(),
            });
        }
        match best.get(&r.frame_index) {
            Some(kept) if kept.score >= r.score => {}
            _ => {
                best.insert(r.frame_index, r.clone());
            }
        }
    }
    Ok(best)
}

/// Per-video best detections, keyed by video id then frame index.
pub type BestDetections = BTreeMap<String, BTreeMap<usize, DetectionRecord>>;

/// Groups a multi-video detection list by video (preserving relative order)
/// and applies [`select_best_per_frame`] to each group.
pub fn best_per_video(records: &[DetectionRecord]) -> BestDetections {
    let mut groups: BTreeMap<&str, Vec<DetectionRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.video_id).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(vid, recs)| {
            let best = select_best_per_frame(&recs).expect("grouped by video id");
            (vid.to_string(), best)
        })
        .collect()
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestRow {
    video_id: String,
    weak_label: String,
    source: String,
    frame_count: i64,
    width: i64,
    height: i64,
    frames_dir: String,
}

pub const MANIFEST_HEADER: [&str; 7] = [
    "video_id",
    "weak_label",
    "source",
    "frame_count",
    "width",
    "height",
    "frames_dir",
];

/// Reads and validates a video manifest.
pub fn read_manifest<R: Read>(reader: R) -> Result<Vec<VideoMeta>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::InvalidManifest {
            row: 0,
            reason: e.to_string(),
        })?
        .clone();
    if headers
        .iter()
        .map(str::trim)
        .ne(MANIFEST_HEADER.iter().copied())
    {
        return Err(IngestError::InvalidManifest {
            row: 0,
            reason: format!("expected header {}", MANIFEST_HEADER.join(",")),
        });
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ManifestRow>().enumerate() {
        let row_no = i + 1;
        let bad = |reason: String| IngestError::InvalidManifest {
            row: row_no,
            reason,
        };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let source = row.source.parse::<Source>().map_err(bad)?;
        if row.frame_count < 0 {
            return Err(bad("negative frame_count".into()));
        }
        if row.width <= 0
            || row.height <= 0
            || row.width > i64::from(u32::MAX)
            || row.height > i64::from(u32::MAX)
        {
            return Err(bad(format!(
                "invalid frame size {}x{}",
                row.width, row.height
            )));
        }
        if row.weak_label.trim().is_empty() {
            return Err(bad("empty weak_label".into()));
        }
        if !seen.insert(row.video_id.clone()) {
            return Err(IngestError::DuplicateVideo(row.video_id));
        }
        out.push(VideoMeta {
            video_id: row.video_id,
            weak_label: row.weak_label,
            source,
            frame_count: row.frame_count as usize,
            width: row.width as u32,
            height: row.height as u32,
            frames_dir: row.frames_dir,
        });
    }
    Ok(out)
}

pub fn write_manifest<W: Write>(writer: W, videos: &[VideoMeta]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for v in videos {
        wtr.serialize(ManifestRow {
            video_id: v.video_id.clone(),
            weak_label: v.weak_label.clone(),
            source: v.source.to_string(),
            frame_count: v.frame_count as i64,
            width: i64::from(v.width),
            height: i64::from(v.height),
            frames_dir: v.frames_dir.clone(),
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// File name of frame `index` inside a video's `frames_dir`.
pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.png")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(frame: usize, score: f64) -> DetectionRecord {
        DetectionRecord {
            video_id: "v1".into(),
            frame_index: frame,
            bbox: BBox::new(0, 0, 10, 10),
            score,
        }
    }

    #[test]
    fn parses_single_line() {
        let recs =
            parse_detections(r#"{"video_id":"v1","frame":0,"bbox":[10,10,50,80],"score":0.28}"#)
                .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].score, 0.28);
        assert_eq!(recs[0].bbox, BBox::new(10, 10, 50, 80));
    }

    #[test]
    fn empty_stream_is_empty() {
        assert!(parse_detections("").unwrap().is_empty());
        assert!(parse_detections("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_lines() {
        let err = parse_detections(r#"{"video_id":"v1","frame":0,"bbox":[1,1,5,5],"score":1.2}"#)
            .unwrap_err();
        assert!(matches!(err, IngestError::ScoreOutOfRange { line: 1, .. }));

        let err = parse_detections(
            "\n{\"video_id\":\"v1\",\"frame\":0,\"bbox\":[1,1,0,5],\"score\":0.2}",
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::NonPositiveBox { line: 2, .. }));

        let err = parse_detections("{\"video_id\":\"v1\"").unwrap_err();
        assert!(matches!(err, IngestError::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn best_keeps_max_score() {
        let best = select_best_per_frame(&[rec(7, 0.28), rec(7, 0.61), rec(3, 0.1)]).unwrap();
        assert_eq!(best.len(), 2);
        assert_eq!(best[&7].score, 0.61);
    }

    #[test]
    fn best_ties_keep_earliest() {
        let mut a = rec(1, 0.5);
        a.bbox = BBox::new(1, 1, 1, 1);
        let b = rec(1, 0.5);
        let best = select_best_per_frame(&[a.clone(), b]).unwrap();
        assert_eq!(best[&1], a);
    }

    #[test]
    fn best_rejects_mixed_videos() {
        let mut other = rec(0, 0.1);
        other.video_id = "v2".into();
        assert!(matches!(
            select_best_per_frame(&[rec(0, 0.2), other]),
            Err(IngestError::MixedVideos { .. })
        ));
    }

    #[test]
    fn best_identity_on_one_per_frame() {
        let recs: Vec<_> = (0..5).map(|f| rec(f, 0.1 * f as f64)).collect();
        let best = select_best_per_frame(&recs).unwrap();
        let rekeyed: BTreeMap<_, _> = recs.iter().map(|r| (r.frame_index, r.clone())).collect();
        assert_eq!(best, rekeyed);
    }

    #[test]
    fn best_matches_brute_force_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut recs = Vec::new();
        let mut per_frame = BTreeMap::<usize, usize>::new();
        while recs.len() < 1000 {
            let f = rng.random_range(0..400);
            let n = per_frame.entry(f).or_insert(0);
            if *n == 5 {
                continue;
            }
            *n += 1;
            // Coarse scores so ties actually occur.
            let s = f64::from(rng.random_range(0..20u32)) / 19.0;
            let mut r = rec(f, s);
            r.bbox = BBox::new(recs.len() as i64, 0, 1, 1);
            recs.push(r);
        }
        let best = select_best_per_frame(&recs).unwrap();
        for (&frame, kept) in &best {
            let all: Vec<&DetectionRecord> =
                recs.iter().filter(|r| r.frame_index == frame).collect();
            let max = all.iter().map(|r| r.score).fold(f64::MIN, f64::max);
            let first_max = all.iter().find(|r| r.score == max).unwrap();
            assert_eq!(kept, *first_max);
        }
        assert_eq!(best.len(), per_frame.len());
    }

    #[test]
    fn clamp_trims_edges() {
        assert_eq!(
            BBox::new(-5, -5, 20, 20).clamp_to(10, 10),
            Some(BBox::new(0, 0, 10, 10))
        );
        assert_eq!(
            BBox::new(8, 2, 5, 3).clamp_to(10, 10),
            Some(BBox::new(8, 2, 2, 3))
        );
        assert_eq!(BBox::new(10, 0, 5, 5).clamp_to(10, 10), None);
    }

    #[test]
    fn manifest_round_trip() {
        let videos = vec![VideoMeta {
            video_id: "v000".into(),
            weak_label: "Opala".into(),
            source: Source::Webcam,
            frame_count: 12,
            width: 64,
            height: 48,
            frames_dir: "frames/v000".into(),
        }];
        let mut buf = Vec::new();
        write_manifest(&mut buf, &videos).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with(&MANIFEST_HEADER.join(",")));
        assert_eq!(read_manifest(&buf[..]).unwrap(), videos);
    }

    #[test]
    fn manifest_rejects_bad_size() {
        let text =
            "video_id,weak_label,source,frame_count,width,height,frames_dir\nv,a,webcam,3,0,10,d\n";
        assert!(matches!(
            read_manifest(text.as_bytes()),
            Err(IngestError::InvalidManifest { row: 1, .. })
        ));
    }

    fn arb_record() -> impl Strategy<Value = DetectionRecord> {
        (
            "[a-z0-9_]{1,8}",
            0usize..100_000,
            -500i64..2000,
            -500i64..2000,
            1i64..1000,
            1i64..1000,
            0.0f64..=1.0,
        )
            .prop_map(
                |(video_id, frame_index, x, y, w, h, score)| DetectionRecord {
                    video_id,
                    frame_index,
                    bbox: BBox::new(x, y, w, h),
                    score,
                },
            )
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(records in proptest::collection::vec(arb_record(), 0..30)) {
            let text = serialize_detections(&records);
            prop_assert_eq!(parse_detections(&text).unwrap(), records);
        }

        #[test]
        fn best_scores_dominate(scores in proptest::collection::vec((0usize..10, 0.0f64..=1.0), 1..60)) {
            let recs: Vec<_> = scores.iter().map(|&(f, s)| rec(f, s)).collect();
            let best = select_best_per_frame(&recs).unwrap();
            for r in &recs {
                prop_assert!(best[&r.frame_index].score >= r.score);
            }
        }
    }
}
