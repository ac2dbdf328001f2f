//! On-disk dataset format.
//!
//! A dataset directory holds `manifest.json` plus, per sample, one file per
//! frame (`<sample>_<test>_<burst>.f64`, tests and bursts numbered from 1, or
//! `<sample>_0_0.f64` for a cleaned frame) and one validity file
//! `<sample>.mask`. Frame files are packed little-endian f64 in
//! `[pattern][frequency][R, X]` order, with 0.0 written for invalid patterns.
//! The validity file concatenates one LSB-first bitmap of `ceil(n_patterns/8)`
//! bytes per frame, in frame order.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use impedscope_core::dataset::{Dataset, SampleRecord, SpectralFrame, BURSTS_PER_TEST, FRAMES_PER_SITE};
use impedscope_core::label::PathologyVocabulary;
use impedscope_core::{Error as CoreError, FrequencyGrid};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ValidationError;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub sample_id: String,
    pub patient_id: String,
    pub pathology: String,
    pub completeness: f64,
    /// Relative to the manifest directory.
    pub frames: Vec<String>,
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub frequencies_hz: Vec<f64>,
    /// `standard`, `compact` or a geometry file path.
    pub geometry: String,
    pub n_patterns: usize,
    pub patients: Vec<String>,
    pub samples: Vec<SampleEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| ValidationError::new(format!("manifest {}: {e}", path.display())))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(ValidationError::new(format!(
                "manifest schema version {} is not supported (expected {SCHEMA_VERSION})",
                m.schema_version
            ))
            .into());
        }
        let mut derived: Vec<String> = m.samples.iter().map(|s| s.patient_id.clone()).collect();
        derived.sort();
        derived.dedup();
        if derived != m.patients {
            return Err(ValidationError::new("manifest patient list does not match the sample entries").into());
        }
        Ok(m)
    }

    pub fn grid(&self) -> anyhow::Result<FrequencyGrid> {
        Ok(FrequencyGrid::new(self.frequencies_hz.clone())?)
    }
}

/// Frame file names of a sample in frame order.
pub fn frame_names(sample_id: &str, n_frames: usize) -> Vec<String> {
    if n_frames == 1 {
        return vec![format!("{sample_id}_0_0.f64")];
    }
    (0..n_frames)
        .map(|i| format!("{sample_id}_{}_{}.f64", i / BURSTS_PER_TEST + 1, i % BURSTS_PER_TEST + 1))
        .collect()
}

pub fn encode_frame(frame: &SpectralFrame) -> Vec<u8> {
    let n_freq = frame.n_freq();
    let mut out = Vec::with_capacity(frame.n_patterns() * n_freq * 16);
    for p in 0..frame.n_patterns() {
        let ok = frame.is_valid(p);
        for z in frame.spectrum(p) {
            let (r, x) = if ok { (z.re, z.im) } else { (0.0, 0.0) };
            out.extend_from_slice(&r.to_le_bytes());
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn bitmap_len(n_patterns: usize) -> usize {
    n_patterns.div_ceil(8)
}

pub fn encode_validity(valid: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bitmap_len(valid.len())];
    for (i, &v) in valid.iter().enumerate() {
        if v {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

pub fn decode_validity(bytes: &[u8], n_patterns: usize) -> Vec<bool> {
    (0..n_patterns).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

/// Parses a frame file; a size that is not `n_patterns` rows is a
/// dimension mismatch.
pub fn decode_frame(bytes: &[u8], n_patterns: usize, n_freq: usize, valid: Vec<bool>, context: &str) -> anyhow::Result<SpectralFrame> {
    let row = n_freq * 16;
    if row == 0 || bytes.len() % row != 0 || bytes.len() / row != n_patterns {
        return Err(CoreError::DimensionMismatch {
            context: format!("pattern rows of {context}"),
            expected: n_patterns,
            found: bytes.len().checked_div(row).unwrap_or(0),
        }
        .into());
    }
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let r = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let x = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(r, x)
        })
        .collect();
    Ok(SpectralFrame::new(n_patterns, n_freq, values, valid)?)
}

/// Writes the frame and validity files of one sample and returns its entry.
pub fn write_sample(dir: &Path, sample: &SampleRecord) -> anyhow::Result<SampleEntry> {
    let names = frame_names(&sample.sample_id, sample.frames.len());
    let mut mask = Vec::new();
    for (frame, name) in sample.frames.iter().zip(&names) {
        let path = dir.join(name);
        fs::write(&path, encode_frame(frame)).with_context(|| format!("writing {}", path.display()))?;
        mask.extend(encode_validity(frame.valid()));
    }
    let mask_name = format!("{}.mask", sample.sample_id);
    let path = dir.join(&mask_name);
    fs::write(&path, mask).with_context(|| format!("writing {}", path.display()))?;
    Ok(SampleEntry {
        sample_id: sample.sample_id.clone(),
        patient_id: sample.patient_id.clone(),
        pathology: sample.label.raw_pathology.clone(),
        completeness: sample.completeness,
        frames: names,
        mask: mask_name,
    })
}

pub fn write_manifest(dir: &Path, grid: &FrequencyGrid, geometry: &str, n_patterns: usize, samples: Vec<SampleEntry>) -> anyhow::Result<PathBuf> {
    let mut patients: Vec<String> = samples.iter().map(|s| s.patient_id.clone()).collect();
    patients.sort();
    patients.dedup();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        frequencies_hz: grid.values().to_vec(),
        geometry: geometry.to_string(),
        n_patterns,
        patients,
        samples,
    };
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Writes a whole dataset into `dir` (created if needed).
pub fn save_dataset(dir: &Path, dataset: &Dataset, geometry: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let entries = dataset
        .samples
        .par_iter()
        .map(|s| write_sample(dir, s))
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_manifest(dir, &dataset.grid, geometry, dataset.n_patterns, entries)
}

fn read_sample(dir: &Path, m: &Manifest, entry: &SampleEntry, vocabulary: &PathologyVocabulary) -> anyhow::Result<SampleRecord> {
    let n_frames = entry.frames.len();
    if n_frames != FRAMES_PER_SITE && n_frames != 1 {
        return Err(CoreError::DimensionMismatch {
            context: format!("frames of sample `{}`", entry.sample_id),
            expected: FRAMES_PER_SITE,
            found: n_frames,
        }
        .into());
    }
    let label = vocabulary.map_label(&entry.pathology)?;
    let mask_path = dir.join(&entry.mask);
    let mask = fs::read(&mask_path).with_context(|| format!("reading {}", mask_path.display()))?;
    let bl = bitmap_len(m.n_patterns);
    if mask.len() != bl * n_frames {
        return Err(CoreError::DimensionMismatch {
            context: format!("validity bytes of sample `{}`", entry.sample_id),
            expected: bl * n_frames,
            found: mask.len(),
        }
        .into());
    }
    let frames = entry
        .frames
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let path = dir.join(name);
            let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            let valid = decode_validity(&mask[i * bl..(i + 1) * bl], m.n_patterns);
            decode_frame(&bytes, m.n_patterns, m.frequencies_hz.len(), valid, &format!("frame {name}"))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(SampleRecord {
        sample_id: entry.sample_id.clone(),
        patient_id: entry.patient_id.clone(),
        label,
        frames,
        completeness: entry.completeness,
    })
}

/// Loads every sample, passing each through `transform` as soon as it is
/// read so raw frames need not all be held at once.
pub fn load_dataset_with<F>(manifest_path: &Path, vocabulary: &PathologyVocabulary, transform: F) -> anyhow::Result<(Manifest, Dataset)>
where
    F: Fn(SampleRecord) -> anyhow::Result<SampleRecord> + Sync,
{
    let m = Manifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let grid = m.grid()?;
    let samples = m
        .samples
        .par_iter()
        .map(|e| transform(read_sample(dir, &m, e, vocabulary)?))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let ds = Dataset::new(grid, m.n_patterns, samples)?;
    Ok((m, ds))
}

pub fn load_dataset(manifest_path: &Path, vocabulary: &PathologyVocabulary) -> anyhow::Result<(Manifest, Dataset)> {
    load_dataset_with(manifest_path, vocabulary, Ok)
}
