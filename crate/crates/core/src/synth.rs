//! Deterministic synthetic corpora of weakly labelled videos.
//!
//! Every video shows one individual as a textured colored patch over a
//! per-video background. The background color, gradient and illumination
//! stay fixed within a video, and consecutive frames differ only by a small
//! patch displacement and pixel noise (both scaled by `jitter`). A classifier
//! can therefore score near-perfectly on frames of videos it has seen by
//! recognizing the scene, while held-out videos have to be recognized from
//! the patch alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;
use crate::ingest::{
    frame_file_name, serialize_detections, write_manifest, BBox, DetectionRecord, Source, VideoMeta,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("cannot write {path}: {reason}")]
    DiskWrite { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_classes: usize,
    /// Inclusive range; each class draws its video count uniformly.
    pub videos_per_class: [usize; 2],
    pub frames_per_video: usize,
    pub frame_width: u32,
    pub frame_height: u32,
    /// Side of the square individual patch, in pixels.
    pub patch_size: u32,
    /// Frame-to-frame variation: patch displacement std in pixels and the
    /// amplitude of uniform pixel noise in intensity levels. 0 makes every
    /// frame of a video identical.
    pub jitter: f64,
    /// 0 renders every individual as the same neutral gray patch.
    pub appearance_strength: f64,
    /// 0 gives every video the same flat gray background.
    pub nuisance_strength: f64,
    /// Std of the per-video shift of an individual's hue, in degrees.
    pub hue_jitter: f64,
    /// Probability that a video shows an individual other than its label.
    pub mislabel_rate: f64,
    /// Probability that a video comes from the camcorder.
    pub camcorder_fraction: f64,
    /// Beta(α, β) of webcam detection scores.
    pub webcam_score: [f64; 2],
    pub camcorder_score: [f64; 2],
    /// Probability of a second, lower-scored detection in a frame.
    pub extra_detection_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_classes: 6,
            videos_per_class: [10, 10],
            frames_per_video: 100,
            frame_width: 64,
            frame_height: 48,
            patch_size: 20,
            jitter: 1.0,
            appearance_strength: 1.0,
            nuisance_strength: 1.0,
            hue_jitter: 30.0,
            mislabel_rate: 0.05,
            camcorder_fraction: 0.5,
            webcam_score: [2.0, 5.0],
            camcorder_score: [5.0, 2.0],
            extra_detection_rate: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let cfg: SynthConfig =
            toml::from_str(text).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_classes == 0 || self.frames_per_video == 0 {
            return bad("n_classes and frames_per_video must be >= 1".into());
        }
        let [lo, hi] = self.videos_per_class;
        if lo == 0 || hi < lo {
            return bad(format!(
                "videos_per_class [{lo}, {hi}] must satisfy 1 <= min <= max"
            ));
        }
        if self.patch_size == 0
            || self.patch_size > self.frame_width
            || self.patch_size > self.frame_height
        {
            return bad(format!(
                "patch_size {} must fit in the {}x{} frame",
                self.patch_size, self.frame_width, self.frame_height
            ));
        }
        for (name, v) in [
            ("mislabel_rate", self.mislabel_rate),
            ("camcorder_fraction", self.camcorder_fraction),
            ("extra_detection_rate", self.extra_detection_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        for (name, v) in [
            ("jitter", self.jitter),
            ("appearance_strength", self.appearance_strength),
            ("nuisance_strength", self.nuisance_strength),
            ("hue_jitter", self.hue_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be a finite value >= 0"));
            }
        }
        if self.mislabel_rate > 0.0 && self.n_classes < 2 {
            return bad("mislabeling needs at least two classes".into());
        }
        for (name, [a, b]) in [
            ("webcam_score", self.webcam_score),
            ("camcorder_score", self.camcorder_score),
        ] {
            if !(a > 0.0 && b > 0.0) {
                return bad(format!("{name} Beta parameters must be > 0"));
            }
        }
        Ok(())
    }
}

pub fn class_name(i: usize) -> String {
    format!("indiv{i:02}")
}

/// Fixed look of one individual.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Appearance {
    hue: f64,
    /// Stripe cycles across the patch.
    frequency: f64,
    /// Stripe orientation in radians.
    angle: f64,
}

fn appearance(i: usize, n: usize, offset: f64) -> Appearance {
    Appearance {
        hue: (offset + 360.0 * i as f64 / n as f64) % 360.0,
        frequency: 1.5 + (i % 3) as f64,
        angle: std::f64::consts::PI * (i % 4) as f64 / 4.0,
    }
}

/// Everything fixed for the duration of one video.
#[derive(Debug, Clone)]
struct VideoPlan {
    meta: VideoMeta,
    rendered: usize,
    patch_rgb: [f64; 3],
    look: Appearance,
    bg_rgb: [f64; 3],
    gradient: (f64, f64),
    illumination: f64,
    anchor: (f64, f64),
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|k| a[k] + (b[k] - a[k]) * t)
}

const GRAY: [f64; 3] = [0.5, 0.5, 0.5];

fn video_rng(seed: u64, video: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(video as u64 + 1);
    rng
}

fn plan_videos(cfg: &SynthConfig) -> Vec<VideoPlan> {
    let mut corpus_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hue_offset = corpus_rng.random_range(0.0..360.0);
    let looks: Vec<Appearance> = (0..cfg.n_classes)
        .map(|i| appearance(i, cfg.n_classes, hue_offset))
        .collect();
    let counts: Vec<usize> = (0..cfg.n_classes)
        .map(|_| corpus_rng.random_range(cfg.videos_per_class[0]..=cfg.videos_per_class[1]))
        .collect();

    let mut plans = Vec::new();
    for (class, &count) in counts.iter().enumerate() {
        for k in 0..count {
            let index = plans.len();
            let mut rng = video_rng(cfg.seed, index);
            let rendered = if rng.random_bool(cfg.mislabel_rate) {
                let other = rng.random_range(0..cfg.n_classes - 1);
                if other >= class {
                    other + 1
                } else {
                    other
                }
            } else {
                class
            };
            let source = if rng.random_bool(cfg.camcorder_fraction) {
                Source::Camcorder
            } else {
                Source::Webcam
            };
            let look = looks[rendered];
            let hue_shift = Normal::new(0.0, cfg.hue_jitter)
                .expect("finite std")
                .sample(&mut rng);
            let patch_rgb = mix(
                GRAY,
                hsv_to_rgb(look.hue + hue_shift, 0.85, 0.9),
                cfg.appearance_strength.min(1.0),
            );
            let s = cfg.nuisance_strength;
            let bg = hsv_to_rgb(
                rng.random_range(0.0..360.0),
                rng.random_range(0.15..0.9),
                rng.random_range(0.25..0.95),
            );
            let bg_rgb = mix(GRAY, bg, s.min(1.0));
            let gradient = (
                s * rng.random_range(-0.4..0.4),
                s * rng.random_range(-0.4..0.4),
            );
            let illumination = 1.0 + s * rng.random_range(-0.3..0.3);
            let (pw, ph) = (
                cfg.frame_width - cfg.patch_size,
                cfg.frame_height - cfg.patch_size,
            );
            let anchor = (
                rng.random_range(0.0..=pw as f64),
                rng.random_range(0.0..=ph as f64),
            );
            let video_id = format!("{}_v{k:02}", class_name(class));
            plans.push(VideoPlan {
                meta: VideoMeta {
                    video_id: video_id.clone(),
                    weak_label: class_name(class),
                    source,
                    frame_count: cfg.frames_per_video,
                    width: cfg.frame_width,
                    height: cfg.frame_height,
                    frames_dir: format!("frames/{video_id}"),
                },
                rendered,
                patch_rgb,
                look,
                bg_rgb,
                gradient,
                illumination,
                anchor,
            });
        }
    }
    plans
}

/// Renders every frame of a video with its detections. Frame-level draws
/// come from the video's own RNG stream, after the plan's draws.
fn render_video(
    cfg: &SynthConfig,
    plan: &VideoPlan,
    index: usize,
) -> (Vec<Image>, Vec<DetectionRecord>) {
    let mut rng = video_rng(cfg.seed, index);
    // Skip the plan's draws so frames do not reuse them.
    rng.set_word_pos(1 << 20);
    let (w, h, p) = (cfg.frame_width, cfg.frame_height, cfg.patch_size);
    let [a, b] = match plan.meta.source {
        Source::Webcam => cfg.webcam_score,
        Source::Camcorder => cfg.camcorder_score,
    };
    let beta = Beta::new(a, b).expect("validated parameters");
    let shift = Normal::new(0.0, cfg.jitter).expect("finite std");

    let mut frames = Vec::with_capacity(cfg.frames_per_video);
    let mut dets = Vec::new();
    for f in 0..cfg.frames_per_video {
        let px = (plan.anchor.0 + shift.sample(&mut rng))
            .round()
            .clamp(0.0, (w - p) as f64) as u32;
        let py = (plan.anchor.1 + shift.sample(&mut rng))
            .round()
            .clamp(0.0, (h - p) as f64) as u32;
        let mut data = Vec::with_capacity((w * h * 3) as usize);
        for y in 0..h {
            for x in 0..w {
                let shade = 1.0
                    + plan.gradient.0 * (x as f64 / w as f64 - 0.5)
                    + plan.gradient.1 * (y as f64 / h as f64 - 0.5);
                let mut rgb = plan.bg_rgb.map(|c| c * shade);
                if x >= px && x < px + p && y >= py && y < py + p {
                    let (u, v) = ((x - px) as f64 / p as f64, (y - py) as f64 / p as f64);
                    let phase = u * plan.look.angle.cos() + v * plan.look.angle.sin();
                    let stripe =
                        1.0 + 0.35 * (std::f64::consts::TAU * plan.look.frequency * phase).sin();
                    rgb = plan.patch_rgb.map(|c| c * stripe);
                }
                for c in rgb {
                    let noise = if cfg.jitter > 0.0 {
                        rng.random_range(-cfg.jitter..=cfg.jitter)
                    } else {
                        0.0
                    };
                    data.push(
                        (c * plan.illumination * 255.0 + noise)
                            .round()
                            .clamp(0.0, 255.0) as u8,
                    );
                }
            }
        }
        frames.push(Image::new(w, h, 3, data).expect("consistent buffer"));
        let score = beta.sample(&mut rng);
        dets.push(DetectionRecord {
            video_id: plan.meta.video_id.clone(),
            frame_index: f,
            bbox: BBox::new(px as i64, py as i64, p as i64, p as i64),
            score,
        });
        if rng.random_bool(cfg.extra_detection_rate) {
            let (ew, eh) = (rng.random_range(4..=p), rng.random_range(4..=p));
            dets.push(DetectionRecord {
                video_id: plan.meta.video_id.clone(),
                frame_index: f,
                bbox: BBox::new(
                    rng.random_range(0..=(w - ew) as i64),
                    rng.random_range(0..=(h - eh) as i64),
                    ew as i64,
                    eh as i64,
                ),
                score: score * rng.random_range(0.0..1.0),
            });
        }
    }
    (frames, dets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub manifest: Vec<VideoMeta>,
    pub detections: Vec<DetectionRecord>,
    /// Individual actually rendered in each video, by video id.
    pub rendered: BTreeMap<String, String>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    std::fs::write(path, bytes).map_err(|e| SynthError::DiskWrite {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Writes `manifest.csv`, `detections.jsonl`, `truth.csv`, `synth.toml` and
/// `frames/<video_id>/<frame>.png` under `out_dir`. Output is byte-identical
/// for equal configs.
pub fn generate_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let plans = plan_videos(cfg);
    let mkdir = |p: &Path| {
        std::fs::create_dir_all(p).map_err(|e| SynthError::DiskWrite {
            path: p.display().to_string(),
            reason: e.to_string(),
        })
    };
    mkdir(out_dir)?;
    let per_video: Vec<Vec<DetectionRecord>> = plans
        .par_iter()
        .enumerate()
        .map(|(i, plan)| {
            let dir = out_dir.join(&plan.meta.frames_dir);
            mkdir(&dir)?;
            let (frames, dets) = render_video(cfg, plan, i);
            for (f, img) in frames.iter().enumerate() {
                let path = dir.join(frame_file_name(f));
                img.save_png(&path).map_err(|e| SynthError::DiskWrite {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                })?;
            }
            Ok(dets)
        })
        .collect::<Result<_, SynthError>>()?;
    let detections: Vec<DetectionRecord> = per_video.into_iter().flatten().collect();
    let manifest: Vec<VideoMeta> = plans.iter().map(|p| p.meta.clone()).collect();
    let rendered: BTreeMap<String, String> = plans
        .iter()
        .map(|p| (p.meta.video_id.clone(), class_name(p.rendered)))
        .collect();

    let mut buf = Vec::new();
    write_manifest(&mut buf, &manifest).map_err(|e| SynthError::DiskWrite {
        path: out_dir.join("manifest.csv").display().to_string(),
        reason: e.to_string(),
    })?;
    write_file(&out_dir.join("manifest.csv"), &buf)?;
    write_file(
        &out_dir.join("detections.jsonl"),
        serialize_detections(&detections).as_bytes(),
    )?;
    let mut truth = String::from("video_id,weak_label,rendered\n");
    for p in &plans {
        writeln!(
            truth,
            "{},{},{}",
            p.meta.video_id,
            p.meta.weak_label,
            class_name(p.rendered)
        )
        .unwrap();
    }
    write_file(&out_dir.join("truth.csv"), truth.as_bytes())?;
    write_file(&out_dir.join("synth.toml"), cfg.to_toml().as_bytes())?;
    Ok(SynthOutput {
        manifest,
        detections,
        rendered,
    })
}
