//! Burst filtering, averaging, completeness gating, z-score normalisation and
//! feature assembly.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::{SampleRecord, SpectralFrame, BURSTS_PER_TEST, FRAMES_PER_SITE, TESTS_PER_SITE};
use crate::geometry::MaskSet;
use crate::{math, Error, Result};

/// `|Z| = sqrt(R^2 + X^2)`.
pub fn impedance_magnitude(r: f64, x: f64) -> Result<f64> {
    if !r.is_finite() || !x.is_finite() {
        return Err(Error::NonFinite("impedance component".into()));
    }
    Ok(math::hypot(r, x))
}

#[inline]
fn magnitude(z: Complex64) -> f64 {
    math::hypot(z.re, z.im)
}

/// Quality thresholds for raw bursts. The defaults accept everything finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Injection current amplitude; measured voltage = |Z| * current.
    pub injection_current_a: f64,
    pub voltage_floor_v: f64,
    pub voltage_ceiling_v: f64,
    pub min_impedance_ohm: f64,
    pub max_impedance_ohm: f64,
    /// Largest tolerated |Z| deviation of a burst from the median of its
    /// test's surviving bursts, relative to that median, at any frequency.
    pub max_burst_deviation: f64,
    /// Largest tolerated fraction of removed patterns for a sample to stay.
    pub completeness_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            injection_current_a: 1e-4,
            voltage_floor_v: 0.0,
            voltage_ceiling_v: f64::INFINITY,
            min_impedance_ohm: 0.0,
            max_impedance_ohm: f64::INFINITY,
            max_burst_deviation: f64::INFINITY,
            completeness_threshold: 0.60,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = self.voltage_floor_v <= self.voltage_ceiling_v
            && self.min_impedance_ohm <= self.max_impedance_ohm;
        if !ordered {
            return Err(Error::InvalidArgument("filter bounds must be ordered".into()));
        }
        if !(0.0..=1.0).contains(&self.completeness_threshold) {
            return Err(Error::InvalidArgument("completeness threshold must be in [0, 1]".into()));
        }
        if !(self.injection_current_a > 0.0) || !(self.max_burst_deviation >= 0.0) {
            return Err(Error::InvalidArgument(
                "injection current must be positive and deviation cap non-negative".into(),
            ));
        }
        Ok(())
    }

    fn entry_ok(&self, z: Complex64) -> bool {
        if !z.re.is_finite() || !z.im.is_finite() {
            return false;
        }
        let m = magnitude(z);
        let v = m * self.injection_current_a;
        v >= self.voltage_floor_v
            && v <= self.voltage_ceiling_v
            && m >= self.min_impedance_ohm
            && m <= self.max_impedance_ohm
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Filters the nine raw frames of a site and averages the survivors: first
/// over bursts within each test, then over tests. A pattern stays valid when
/// at least one test keeps at least one burst.
///
/// Returns the cleaned frame and its completeness (valid / total patterns).
pub fn filter_and_average(sample: &SampleRecord, config: &FilterConfig) -> Result<(SpectralFrame, f64)> {
    if sample.frames.len() != FRAMES_PER_SITE {
        return Err(Error::DimensionMismatch {
            context: alloc::format!("raw frames of sample `{}`", sample.sample_id),
            expected: FRAMES_PER_SITE,
            found: sample.frames.len(),
        });
    }
    let n_patterns = sample.frames[0].n_patterns();
    let n_freq = sample.frames[0].n_freq();
    let mut out = SpectralFrame::filled(n_patterns, n_freq, Complex64::new(0.0, 0.0));
    let mut test_sum = vec![Complex64::new(0.0, 0.0); n_freq];
    let mut burst_sum = vec![Complex64::new(0.0, 0.0); n_freq];
    let mut scratch = Vec::with_capacity(BURSTS_PER_TEST);
    let check_deviation = config.max_burst_deviation.is_finite();

    for p in 0..n_patterns {
        test_sum.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        let mut tests_kept = 0usize;
        for t in 0..TESTS_PER_SITE {
            let mut keep = [false; BURSTS_PER_TEST];
            for (b, k) in keep.iter_mut().enumerate() {
                let frame = sample.frame(t, b);
                *k = frame.is_valid(p) && frame.spectrum(p).iter().all(|&z| config.entry_ok(z));
            }
            if check_deviation && keep.iter().filter(|k| **k).count() >= 2 {
                let mut reject = [false; BURSTS_PER_TEST];
                for f in 0..n_freq {
                    scratch.clear();
                    scratch.extend(
                        (0..BURSTS_PER_TEST)
                            .filter(|&b| keep[b])
                            .map(|b| magnitude(sample.frame(t, b).get(p, f))),
                    );
                    let med = median(&mut scratch);
                    for b in (0..BURSTS_PER_TEST).filter(|&b| keep[b]) {
                        let m = magnitude(sample.frame(t, b).get(p, f));
                        let dev = if med > 0.0 { math::abs(m - med) / med } else { 0.0 };
                        if dev > config.max_burst_deviation {
                            reject[b] = true;
                        }
                    }
                }
                for b in 0..BURSTS_PER_TEST {
                    keep[b] &= !reject[b];
                }
            }
            let kept = keep.iter().filter(|k| **k).count();
            if kept == 0 {
                continue;
            }
            burst_sum.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for b in (0..BURSTS_PER_TEST).filter(|&b| keep[b]) {
                for (acc, &z) in burst_sum.iter_mut().zip(sample.frame(t, b).spectrum(p)) {
                    *acc += z;
                }
            }
            for (acc, z) in test_sum.iter_mut().zip(&burst_sum) {
                *acc += z / kept as f64;
            }
            tests_kept += 1;
        }
        if tests_kept == 0 {
            out.valid_mut()[p] = false;
            continue;
        }
        for (dst, z) in out.spectrum_mut(p).iter_mut().zip(&test_sum) {
            *dst = z / tests_kept as f64;
        }
    }
    let n_valid = out.n_valid();
    if n_valid == 0 {
        return Err(Error::UnusableSample(sample.sample_id.clone()));
    }
    Ok((out, n_valid as f64 / n_patterns as f64))
}

/// Replaces the raw frames of a sample by its cleaned frame.
pub fn clean_sample(sample: &SampleRecord, config: &FilterConfig) -> Result<SampleRecord> {
    let (frame, completeness) = filter_and_average(sample, config)?;
    Ok(SampleRecord {
        sample_id: sample.sample_id.clone(),
        patient_id: sample.patient_id.clone(),
        label: sample.label.clone(),
        frames: vec![frame],
        completeness,
    })
}

/// True when the removed-pattern fraction does not exceed `threshold`.
pub fn passes_completeness(completeness: f64, threshold: f64) -> bool {
    1.0 - completeness <= threshold + 1e-12
}

/// Keeps samples whose removed-pattern fraction is at most `threshold`;
/// returns the kept samples and the ids of the removed ones.
pub fn apply_completeness_gate(samples: Vec<SampleRecord>, threshold: f64) -> (Vec<SampleRecord>, Vec<String>) {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for s in samples {
        if passes_completeness(s.completeness, threshold) {
            kept.push(s);
        } else {
            removed.push(s.sample_id);
        }
    }
    (kept, removed)
}

/// Dense row-major feature matrix with one column per (pattern, frequency).
/// Missing entries (pattern invalid for that sample) are NaN until
/// normalisation maps them to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub patterns: Vec<usize>,
    /// Selected frequency indices, ascending.
    pub frequencies: Vec<usize>,
    pub data: Vec<f64>,
    /// Rows whose sample has no valid pattern inside the mask.
    pub flagged_rows: Vec<usize>,
}

impl FeatureMatrix {
    /// N_input = |patterns| * |frequencies|.
    pub fn n_cols(&self) -> usize {
        self.patterns.len() * self.frequencies.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_cols();
        &self.data[i * w..(i + 1) * w]
    }

    /// `(pattern index, frequency index)` of a column.
    pub fn column_key(&self, col: usize) -> (usize, usize) {
        let nf = self.frequencies.len();
        (self.patterns[col / nf], self.frequencies[col % nf])
    }

    /// Position of a column's frequency within `frequencies`.
    pub fn column_frequency_slot(&self, col: usize) -> usize {
        col % self.frequencies.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let w = self.n_cols();
        let mut data = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            n_rows: rows.len(),
            patterns: self.patterns.clone(),
            frequencies: self.frequencies.clone(),
            data,
            flagged_rows: rows
                .iter()
                .enumerate()
                .filter(|(_, r)| self.flagged_rows.contains(r))
                .map(|(i, _)| i)
                .collect(),
        }
    }
}

/// Builds `|Z|` features of cleaned samples over `mask x frequencies`.
pub fn assemble_features(samples: &[&SampleRecord], mask: &MaskSet, frequencies: &[usize]) -> Result<FeatureMatrix> {
    if frequencies.is_empty() {
        return Err(Error::InvalidArgument("empty frequency subset".into()));
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask(mask.name.clone()));
    }
    let mut freqs = frequencies.to_vec();
    freqs.sort_unstable();
    freqs.dedup();
    let width = mask.len() * freqs.len();
    let mut data = Vec::with_capacity(samples.len() * width);
    let mut flagged_rows = Vec::new();
    for (row, s) in samples.iter().enumerate() {
        let frame = s.cleaned()?;
        if let Some(&f) = freqs.iter().find(|&&f| f >= frame.n_freq()) {
            return Err(Error::InvalidArgument(alloc::format!("frequency index {f} out of range")));
        }
        let mut any = false;
        for &p in &mask.indices {
            if p >= frame.n_patterns() {
                return Err(Error::DimensionMismatch {
                    context: "mask index".into(),
                    expected: frame.n_patterns(),
                    found: p + 1,
                });
            }
            if frame.is_valid(p) {
                any = true;
                let spec = frame.spectrum(p);
                data.extend(freqs.iter().map(|&f| magnitude(spec[f])));
            } else {
                data.extend(core::iter::repeat(f64::NAN).take(freqs.len()));
            }
        }
        if !any {
            flagged_rows.push(row);
        }
    }
    Ok(FeatureMatrix {
        n_rows: samples.len(),
        patterns: mask.indices.clone(),
        frequencies: freqs,
        data,
        flagged_rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// One mean/std per frequency, pooled over all pattern columns.
    #[default]
    PerFrequency,
    /// One mean/std per column.
    PerColumn,
}

/// Values with population std below this are treated as constant.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Z-score parameters fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mode: NormalizationMode,
    /// One entry per group (frequency slot or column).
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Normalizer {
    fn group(&self, m: &FeatureMatrix, col: usize) -> usize {
        match self.mode {
            NormalizationMode::PerFrequency => m.column_frequency_slot(col),
            NormalizationMode::PerColumn => col,
        }
    }

    /// Population mean/std over observed (non-NaN) training entries.
    pub fn fit(train: &FeatureMatrix, mode: NormalizationMode) -> Result<Self> {
        if train.n_rows == 0 {
            return Err(Error::InvalidArgument("normalisation needs training rows".into()));
        }
        let n_groups = match mode {
            NormalizationMode::PerFrequency => train.frequencies.len(),
            NormalizationMode::PerColumn => train.n_cols(),
        };
        let mut norm = Normalizer {
            mode,
            means: vec![0.0; n_groups],
            stds: vec![0.0; n_groups],
        };
        let w = train.n_cols();
        let mut sum = vec![0.0; n_groups];
        let mut count = vec![0usize; n_groups];
        for r in 0..train.n_rows {
            for (c, &v) in train.data[r * w..(r + 1) * w].iter().enumerate() {
                if !v.is_nan() {
                    let g = norm.group(train, c);
                    sum[g] += v;
                    count[g] += 1;
                }
            }
        }
        for g in 0..n_groups {
            norm.means[g] = if count[g] > 0 { sum[g] / count[g] as f64 } else { 0.0 };
        }
        let mut sq = vec![0.0; n_groups];
        for r in 0..train.n_rows {
            for (c, &v) in train.data[r * w..(r + 1) * w].iter().enumerate() {
                if !v.is_nan() {
                    let g = norm.group(train, c);
                    let d = v - norm.means[g];
                    sq[g] += d * d;
                }
            }
        }
        for g in 0..n_groups {
            norm.stds[g] = if count[g] > 0 {
                math::sqrt(sq[g] / count[g] as f64)
            } else {
                0.0
            };
        }
        Ok(norm)
    }

    /// Z-scores in place; missing entries and degenerate groups become 0.
    pub fn apply(&self, m: &mut FeatureMatrix) {
        let w = m.n_cols();
        let groups: Vec<usize> = (0..w).map(|c| self.group(m, c)).collect();
        for r in 0..m.n_rows {
            for (c, v) in m.data[r * w..(r + 1) * w].iter_mut().enumerate() {
                let g = groups[c];
                *v = if v.is_nan() || self.stds[g] < DEGENERATE_STD {
                    0.0
                } else {
                    (*v - self.means[g]) / self.stds[g]
                };
            }
        }
    }
}

/// Fits on `train` and transforms both matrices with the training parameters.
pub fn zscore_per_frequency(
    mut train: FeatureMatrix,
    mut apply: FeatureMatrix,
    mode: NormalizationMode,
) -> Result<(FeatureMatrix, FeatureMatrix, Normalizer)> {
    if train.frequencies != apply.frequencies || train.patterns != apply.patterns {
        return Err(Error::InvalidArgument("train/apply column layouts differ".into()));
    }
    let norm = Normalizer::fit(&train, mode)?;
    norm.apply(&mut train);
    norm.apply(&mut apply);
    Ok((train, apply, norm))
}
