//! Handcrafted descriptor: Hu moments (7) ‖ Haralick texture (13) ‖ HSV color
//! histogram (512 for the default 8×8×8 joint histogram).

pub mod haralick;
pub mod histogram;
pub mod hu;

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classic::Matrix;
use crate::datasetgen::Sample;
use crate::image::{Image, ImageError};

pub use haralick::haralick_features;
pub use histogram::{color_histogram, HistMode};
pub use hu::hu_moments;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image has zero total intensity")]
    ZeroMass,
    #[error("no valid pixel pair for a co-occurrence matrix")]
    DegenerateImage,
    #[error("color histogram needs a 3-channel image")]
    NotColor,
    #[error("expected a single-channel image")]
    NotGray,
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
    #[error("sample {sample}: {source}")]
    Image {
        sample: String,
        #[source]
        source: ImageError,
    },
    #[error("sample {sample}: {source}")]
    Sample {
        sample: String,
        #[source]
        source: Box<FeatureError>,
    },
    #[error("feature table: {0}")]
    Table(String),
}

pub const HU_DIM: usize = 7;
pub const HARALICK_DIM: usize = 13;

/// Descriptor settings, persisted next to every feature table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub hist_bins: usize,
    pub hist_mode: HistMode,
    pub glcm_levels: usize,
    pub glcm_distance: usize,
    /// Angles whose statistics are averaged.
    pub glcm_angles: [u16; 4],
    pub hu_signed_log: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            hist_bins: 8,
            hist_mode: HistMode::Joint,
            glcm_levels: 32,
            glcm_distance: 1,
            glcm_angles: [0, 45, 90, 135],
            hu_signed_log: false,
        }
    }
}

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        HU_DIM + HARALICK_DIM + self.hist_mode.dim(self.hist_bins)
    }
}

/// ITU-R 601 luma, rounded; gray input is returned unchanged.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round() as u8)
        .collect();
    Image::new(img.width(), img.height(), 1, data).expect("same geometry")
}

/// Full descriptor of an RGB image.
pub fn extract_from_image(img: &Image, cfg: &FeatureConfig) -> Result<Vec<f64>, FeatureError> {
    let gray = to_grayscale(img);
    let mut hu = hu_moments(&gray)?;
    if cfg.hu_signed_log {
        hu = hu::signed_log(hu);
    }
    let texture = haralick_features(&gray, cfg.glcm_levels)?;
    let hist = color_histogram(img, cfg.hist_bins, cfg.hist_mode)?;
    let mut out = Vec::with_capacity(cfg.dim());
    out.extend_from_slice(&hu);
    out.extend_from_slice(&texture);
    out.extend(hist);
    Ok(out)
}

/// Loads the sample's frame, applies its ROI crop if any, and extracts the
/// descriptor.
pub fn load_sample_image(sample: &Sample) -> Result<Image, ImageError> {
    let img = Image::load(&sample.image_ref)?;
    match sample.crop {
        None => Ok(img),
        Some(b) => img.crop(b.x as u32, b.y as u32, b.w as u32, b.h as u32),
    }
}

pub fn extract_feature_vector(
    sample: &Sample,
    cfg: &FeatureConfig,
) -> Result<Vec<f64>, FeatureError> {
    let img = load_sample_image(sample).map_err(|source| FeatureError::Image {
        sample: sample.sample_id.clone(),
        source,
    })?;
    extract_from_image(&img, cfg).map_err(|e| FeatureError::Sample {
        sample: sample.sample_id.clone(),
        source: Box::new(e),
    })
}

/// Feature rows with the provenance columns that travel with them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub sample_ids: Vec<String>,
    pub labels: Vec<String>,
    pub video_ids: Vec<String>,
    pub values: Matrix,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    /// Sub-table of the given row indices, in that order.
    pub fn select(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            sample_ids: rows.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i].clone()).collect(),
            video_ids: rows.iter().map(|&i| self.video_ids[i].clone()).collect(),
            values: self.values.select_rows(rows),
        }
    }

    /// Writes `sample_id,label,video_id,f0..f{d-1}`. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["sample_id".to_string(), "label".into(), "video_id".into()];
        header.extend((0..self.values.cols()).map(|j| format!("f{j}")));
        wtr.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            rec.clear();
            rec.push(self.sample_ids[i].clone());
            rec.push(self.labels[i].clone());
            rec.push(self.video_ids[i].clone());
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<FeatureTable, FeatureError> {
        let bad = |m: String| FeatureError::Table(m);
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        if headers.len() < 4
            || &headers[0] != "sample_id"
            || &headers[1] != "label"
            || &headers[2] != "video_id"
        {
            return Err(bad("expected header sample_id,label,video_id,f0..".into()));
        }
        let dim = headers.len() - 3;
        let mut t = FeatureTable {
            sample_ids: Vec::new(),
            labels: Vec::new(),
            video_ids: Vec::new(),
            values: Matrix::zeros(0, dim),
        };
        let mut data = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            t.sample_ids.push(rec[0].to_string());
            t.labels.push(rec[1].to_string());
            t.video_ids.push(rec[2].to_string());
            for field in rec.iter().skip(3) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| bad(format!("row {}: bad value {field:?}", i + 1)))?;
                data.push(v);
            }
        }
        t.values = Matrix::new(t.sample_ids.len(), dim, data).map_err(|e| bad(e.to_string()))?;
        Ok(t)
    }
}

/// Extracts every sample's descriptor, in input order.
pub fn extract_table(
    samples: &[Sample],
    cfg: &FeatureConfig,
) -> Result<FeatureTable, FeatureError> {
    let rows: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| extract_feature_vector(s, cfg))
        .collect::<Result<_, _>>()?;
    let dim = cfg.dim();
    let values = Matrix::new(rows.len(), dim, rows.into_iter().flatten().collect())
        .map_err(|e| FeatureError::Table(e.to_string()))?;
    Ok(FeatureTable {
        sample_ids: samples.iter().map(|s| s.sample_id.clone()).collect(),
        labels: samples.iter().map(|s| s.label.clone()).collect(),
        video_ids: samples.iter().map(|s| s.video_id.clone()).collect(),
        values,
    })
}

/// Sidecar JSON describing how a feature table was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub config: FeatureConfig,
    pub dim: usize,
    pub layout: Vec<(String, usize)>,
    /// Path of the source `dataset.json`.
    pub dataset: String,
    /// Variant name of the source dataset, e.g. `ROI,S0.5`.
    pub variant: String,
    pub rows: usize,
}

impl FeatureSidecar {
    pub fn new(config: FeatureConfig, dataset: &Path, variant: String, rows: usize) -> Self {
        Self {
            config,
            dim: config.dim(),
            layout: vec![
                ("hu".into(), HU_DIM),
                ("haralick".into(), HARALICK_DIM),
                (
                    "color_histogram".into(),
                    config.hist_mode.dim(config.hist_bins),
                ),
            ],
            dataset: dataset.display().to_string(),
            variant,
            rows,
        }
    }
}
