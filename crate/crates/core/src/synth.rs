//! Cole-model synthetic cohorts: patient-grouped, labelled raw frames with
//! patient, site, pattern and burst variation, pattern dropout and optional
//! class contrast at chosen frequencies.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SampleRecord, SpectralFrame, FRAMES_PER_SITE};
use crate::geometry::{ElectrodeArray, PatternUniverse};
use crate::label::PathologyVocabulary;
use crate::rng::{SeedPath, Stream};
use crate::{math, Error, FrequencyGrid, Result};

/// Single-dispersion Cole parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueModel {
    pub r0: f64,
    pub r_inf: f64,
    pub fc: f64,
    pub alpha: f64,
}

impl TissueModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > self.r_inf && self.r_inf > 0.0 && self.fc > 0.0 && self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(
                "tissue model needs R0 > Rinf > 0, fc > 0, 0 < alpha <= 1".into(),
            ));
        }
        Ok(())
    }
}

/// `Z(f) = Rinf + (R0 - Rinf) / (1 + (i f / fc)^alpha)`.
pub fn cole_impedance(m: &TissueModel, f: f64) -> Complex64 {
    let r = math::powf(f / m.fc, m.alpha);
    let theta = core::f64::consts::FRAC_PI_2 * m.alpha;
    let denom = Complex64::new(1.0 + r * libm::cos(theta), r * libm::sin(theta));
    Complex64::new(m.r_inf, 0.0) + Complex64::new(m.r0 - m.r_inf, 0.0) / denom
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    /// Raw pathology string written to the manifest.
    pub pathology: String,
    pub n_patients: usize,
    pub tissue: TissueModel,
    /// When set, each patient's R0 is uniform in this range instead of
    /// lognormal around `tissue.r0`.
    #[serde(default)]
    pub r0_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Lognormal sigma of patient-level R0/Rinf multipliers.
    pub patient_sigma: f64,
    /// Lognormal sigma of the per-site multiplier.
    pub sample_sigma: f64,
    /// Lognormal sigma of the per-(site, pattern) multiplier.
    pub pattern_sigma: f64,
    /// Relative Gaussian noise on R and X of every burst.
    pub burst_sigma: f64,
    /// Probability that a pattern is invalid in all frames of a site.
    pub dropout: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            patient_sigma: 0.10,
            sample_sigma: 0.05,
            pattern_sigma: 0.05,
            burst_sigma: 0.01,
            dropout: 0.0,
        }
    }
}

/// Multiplies `|Z|` at `frequencies` by `1 + shift * class_index + jitter * N`
/// with `N` drawn per (site, pattern, frequency).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastSpec {
    /// Zero-based frequency indices.
    pub frequencies: Vec<usize>,
    pub shift: f64,
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub classes: Vec<ClassSpec>,
    pub samples_per_patient: usize,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub contrast: Option<ContrastSpec>,
    /// Scale every pattern by its VV distance over the mean VV distance.
    #[serde(default = "yes")]
    pub geometric_modulation: bool,
}

fn yes() -> bool {
    true
}

impl CohortSpec {
    pub fn validate(&self, grid: &FrequencyGrid) -> Result<()> {
        if self.classes.is_empty() || self.samples_per_patient == 0 {
            return Err(Error::InvalidArgument("cohort needs classes and samples per patient".into()));
        }
        for c in &self.classes {
            c.tissue.validate()?;
            if let Some([lo, hi]) = c.r0_range {
                if !(lo > c.tissue.r_inf && hi >= lo) {
                    return Err(Error::InvalidArgument(format!("bad R0 range for `{}`", c.pathology)));
                }
            }
        }
        let n = &self.noise;
        let sigmas = [n.patient_sigma, n.sample_sigma, n.pattern_sigma, n.burst_sigma];
        if sigmas.iter().any(|s| !(*s >= 0.0)) || !(0.0..1.0).contains(&n.dropout) {
            return Err(Error::InvalidArgument("noise sigmas must be >= 0 and dropout in [0, 1)".into()));
        }
        if let Some(c) = &self.contrast {
            if c.frequencies.iter().any(|&f| f >= grid.len()) {
                return Err(Error::InvalidArgument("contrast frequency out of range".into()));
            }
        }
        Ok(())
    }

    pub fn n_patients(&self) -> usize {
        self.classes.iter().map(|c| c.n_patients).sum()
    }
}

/// Per-pattern multiplier `VV distance / mean VV distance` (all ones when
/// modulation is off).
pub fn geometric_factors(universe: &PatternUniverse, array: &ElectrodeArray, enabled: bool) -> Result<Vec<f64>> {
    if !enabled {
        return Ok(alloc::vec![1.0; universe.len()]);
    }
    let d: Vec<f64> = universe
        .iter()
        .map(|p| {
            array
                .distance(p.vv.0, p.vv.1)
                .ok_or_else(|| Error::Geometry(format!("unknown VV electrodes {:?}", p.vv)))
        })
        .collect::<Result<_>>()?;
    let mean = math::mean(&d);
    Ok(d.iter().map(|v| v / mean).collect())
}

/// Identity of one generated site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSlot {
    pub class: usize,
    pub patient_id: String,
    pub sample_id: String,
}

/// Patients numbered across classes in spec order, sites within patients.
pub fn sample_slots(spec: &CohortSpec) -> Vec<SampleSlot> {
    let mut slots = Vec::new();
    let mut p = 0usize;
    for (class, c) in spec.classes.iter().enumerate() {
        for _ in 0..c.n_patients {
            p += 1;
            let patient_id = format!("P{p:03}");
            for s in 0..spec.samples_per_patient {
                slots.push(SampleSlot {
                    class,
                    patient_id: patient_id.clone(),
                    sample_id: format!("{patient_id}-S{}", s + 1),
                });
            }
        }
    }
    slots
}

fn lognormal(rng: &mut Stream, sigma: f64) -> f64 {
    if sigma == 0.0 {
        1.0
    } else {
        math::exp(sigma * rng.normal())
    }
}

fn patient_tissue(spec: &CohortSpec, class: usize, patient_id: &str, seed: SeedPath) -> TissueModel {
    let c = &spec.classes[class];
    let mut rng = seed.child("patient").child(patient_id).stream();
    let mut t = c.tissue;
    let sigma = spec.noise.patient_sigma;
    let r0_mult = lognormal(&mut rng, sigma);
    let rinf_mult = lognormal(&mut rng, sigma);
    t.r0 = match c.r0_range {
        Some([lo, hi]) => rng.uniform_range(lo, hi),
        None => t.r0 * r0_mult,
    };
    t.r_inf = (t.r_inf * rinf_mult).min(0.95 * t.r0);
    t
}

/// Nine raw frames for one site. Output depends only on
/// `(spec, grid, factors, slot, seed)`.
pub fn generate_sample(
    spec: &CohortSpec,
    grid: &FrequencyGrid,
    factors: &[f64],
    vocabulary: &PathologyVocabulary,
    slot: &SampleSlot,
    seed: u64,
) -> Result<SampleRecord> {
    let root = SeedPath::root(seed).child("synth");
    let class = &spec.classes[slot.class];
    let label = vocabulary.map_label(&class.pathology)?;
    let tissue = patient_tissue(spec, slot.class, &slot.patient_id, root);
    let mut rng = root.child("sample").child(&slot.sample_id).stream();
    let noise = &spec.noise;
    let site = lognormal(&mut rng, noise.sample_sigma);
    let base: Vec<Complex64> = grid.values().iter().map(|&f| cole_impedance(&tissue, f) * site).collect();
    let n_patterns = factors.len();
    let n_freq = grid.len();

    let mut clean = Vec::with_capacity(n_patterns * n_freq);
    let mut valid = Vec::with_capacity(n_patterns);
    let mut gains = alloc::vec![1.0; n_freq];
    for &g in factors {
        let m = g * lognormal(&mut rng, noise.pattern_sigma);
        valid.push(!(noise.dropout > 0.0 && rng.bernoulli(noise.dropout)));
        if let Some(c) = &spec.contrast {
            for &f in &c.frequencies {
                gains[f] = (1.0 + c.shift * slot.class as f64 + c.jitter * rng.normal()).max(0.05);
            }
        }
        clean.extend(base.iter().zip(&gains).map(|(z, k)| z * (m * k)));
    }

    let mut frames = Vec::with_capacity(FRAMES_PER_SITE);
    for _ in 0..FRAMES_PER_SITE {
        let mut values = clean.clone();
        if noise.burst_sigma > 0.0 {
            for z in values.iter_mut() {
                let s = noise.burst_sigma * math::hypot(z.re, z.im);
                *z += Complex64::new(s * rng.normal(), s * rng.normal());
            }
        }
        for (p, ok) in valid.iter().enumerate() {
            if !ok {
                values[p * n_freq..(p + 1) * n_freq].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            }
        }
        frames.push(SpectralFrame::new(n_patterns, n_freq, values, valid.clone())?);
    }
    Ok(SampleRecord {
        sample_id: slot.sample_id.clone(),
        patient_id: slot.patient_id.clone(),
        label,
        frames,
        completeness: 1.0,
    })
}

/// Whole cohort in memory; for large universes prefer per-slot generation.
pub fn generate_cohort(
    spec: &CohortSpec,
    grid: &FrequencyGrid,
    factors: &[f64],
    vocabulary: &PathologyVocabulary,
    seed: u64,
) -> Result<Dataset> {
    spec.validate(grid)?;
    let samples = sample_slots(spec)
        .iter()
        .map(|slot| generate_sample(spec, grid, factors, vocabulary, slot, seed))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(grid.clone(), factors.len(), samples)
}

/// Randomly reassigns labels between patients (each patient keeps a single
/// label; class sizes are preserved).
pub fn permute_patient_labels(dataset: &mut Dataset, seed: u64) {
    let patients = dataset.patient_ids();
    let mut labels: BTreeMap<&str, _> = BTreeMap::new();
    for s in &dataset.samples {
        labels.entry(s.patient_id.as_str()).or_insert_with(|| s.label.clone());
    }
    let mut pool: Vec<_> = patients.iter().map(|p| labels[p.as_str()].clone()).collect();
    SeedPath::root(seed).child("permute-labels").stream().shuffle(&mut pool);
    let new: BTreeMap<String, _> = patients.into_iter().zip(pool).collect();
    for s in &mut dataset.samples {
        s.label = new[&s.patient_id].clone();
    }
}

/// Randomly permutes labels across samples (class sizes are preserved;
/// patients may end up with mixed labels).
pub fn permute_sample_labels(dataset: &mut Dataset, seed: u64) {
    let mut pool: Vec<_> = dataset.samples.iter().map(|s| s.label.clone()).collect();
    SeedPath::root(seed).child("permute-sample-labels").stream().shuffle(&mut pool);
    for (s, l) in dataset.samples.iter_mut().zip(pool) {
        s.label = l;
    }
}
