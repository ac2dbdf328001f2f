//! In-memory dataset types shared by every stage.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::label::{TaskSpec, TissueLabel};
use crate::{Error, FrequencyGrid, Result};

pub const TESTS_PER_SITE: usize = 3;
pub const BURSTS_PER_TEST: usize = 3;
pub const FRAMES_PER_SITE: usize = TESTS_PER_SITE * BURSTS_PER_TEST;

/// Complex impedance for one acquisition, `[pattern][frequency]` row-major,
/// with a validity flag per pattern. Values of invalid patterns carry no
/// meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrame {
    n_patterns: usize,
    n_freq: usize,
    values: Vec<Complex64>,
    valid: Vec<bool>,
}

impl SpectralFrame {
    pub fn new(n_patterns: usize, n_freq: usize, values: Vec<Complex64>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != n_patterns * n_freq {
            return Err(Error::DimensionMismatch {
                context: "frame values".into(),
                expected: n_patterns * n_freq,
                found: values.len(),
            });
        }
        if valid.len() != n_patterns {
            return Err(Error::DimensionMismatch {
                context: "frame validity".into(),
                expected: n_patterns,
                found: valid.len(),
            });
        }
        Ok(SpectralFrame {
            n_patterns,
            n_freq,
            values,
            valid,
        })
    }

    pub fn filled(n_patterns: usize, n_freq: usize, value: Complex64) -> Self {
        SpectralFrame {
            n_patterns,
            n_freq,
            values: alloc::vec![value; n_patterns * n_freq],
            valid: alloc::vec![true; n_patterns],
        }
    }

    pub fn n_patterns(&self) -> usize {
        self.n_patterns
    }

    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_mut(&mut self) -> &mut [bool] {
        &mut self.valid
    }

    pub fn spectrum(&self, pattern: usize) -> &[Complex64] {
        &self.values[pattern * self.n_freq..(pattern + 1) * self.n_freq]
    }

    pub fn spectrum_mut(&mut self, pattern: usize) -> &mut [Complex64] {
        &mut self.values[pattern * self.n_freq..(pattern + 1) * self.n_freq]
    }

    pub fn get(&self, pattern: usize, freq: usize) -> Complex64 {
        self.values[pattern * self.n_freq + freq]
    }

    pub fn is_valid(&self, pattern: usize) -> bool {
        self.valid[pattern]
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// One tissue site: nine raw frames (3 tests x 3 bursts, test-major) or, after
/// preprocessing, a single cleaned frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub patient_id: String,
    pub label: TissueLabel,
    pub frames: Vec<SpectralFrame>,
    /// Retained patterns / total patterns; 1.0 until preprocessing runs.
    pub completeness: f64,
}

impl SampleRecord {
    pub fn frame(&self, test: usize, burst: usize) -> &SpectralFrame {
        &self.frames[test * BURSTS_PER_TEST + burst]
    }

    pub fn is_cleaned(&self) -> bool {
        self.frames.len() == 1
    }

    pub fn cleaned(&self) -> Result<&SpectralFrame> {
        match self.frames.as_slice() {
            [frame] => Ok(frame),
            _ => Err(Error::InvalidArgument(format!(
                "sample `{}` has {} frames; expected one cleaned frame",
                self.sample_id,
                self.frames.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: FrequencyGrid,
    pub n_patterns: usize,
    pub samples: Vec<SampleRecord>,
}

impl Dataset {
    pub fn new(grid: FrequencyGrid, n_patterns: usize, samples: Vec<SampleRecord>) -> Result<Self> {
        let ds = Dataset {
            grid,
            n_patterns,
            samples,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Every frame matches the pattern universe and grid, and every sample
    /// has either 9 raw frames or one cleaned frame.
    pub fn validate(&self) -> Result<()> {
        for s in &self.samples {
            if s.frames.len() != FRAMES_PER_SITE && s.frames.len() != 1 {
                return Err(Error::DimensionMismatch {
                    context: format!("frames of sample `{}`", s.sample_id),
                    expected: FRAMES_PER_SITE,
                    found: s.frames.len(),
                });
            }
            for f in &s.frames {
                if f.n_patterns() != self.n_patterns {
                    return Err(Error::DimensionMismatch {
                        context: format!("pattern rows of sample `{}`", s.sample_id),
                        expected: self.n_patterns,
                        found: f.n_patterns(),
                    });
                }
                if f.n_freq() != self.grid.len() {
                    return Err(Error::DimensionMismatch {
                        context: format!("frequency columns of sample `{}`", s.sample_id),
                        expected: self.grid.len(),
                        found: f.n_freq(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn patient_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.samples.iter().map(|s| s.patient_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// The samples of a dataset that belong to a task, with class ids.
#[derive(Debug, Clone)]
pub struct TaskView<'a> {
    pub task: TaskSpec,
    pub samples: Vec<&'a SampleRecord>,
    pub classes: Vec<usize>,
}

impl<'a> TaskView<'a> {
    pub fn new(dataset: &'a Dataset, task: TaskSpec) -> Self {
        let mut samples = Vec::new();
        let mut classes = Vec::new();
        for s in &dataset.samples {
            if let Some(c) = task.class_of(s.label.category) {
                samples.push(s);
                classes.push(c);
            }
        }
        TaskView { task, samples, classes }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn patient_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.samples.iter().map(|s| s.patient_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.task.n_classes()];
        for &c in &self.classes {
            counts[c] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::{PathologyVocabulary, TissueCategory};
    use alloc::string::ToString;
    use alloc::vec;

    fn sample(id: &str, pathology: &str, n_patterns: usize) -> SampleRecord {
        SampleRecord {
            sample_id: id.to_string(),
            patient_id: "p".to_string(),
            label: PathologyVocabulary::standard().map_label(pathology).unwrap(),
            frames: vec![SpectralFrame::filled(n_patterns, 31, Complex64::new(1.0, 0.0)); 9],
            completeness: 1.0,
        }
    }

    #[test]
    fn rejects_short_frames() {
        let grid = FrequencyGrid::standard();
        let err = Dataset::new(grid, 7728, vec![sample("a", "cancer", 7727)]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 7728, found: 7727, .. }));
    }

    #[test]
    fn empty_dataset_is_fine() {
        let ds = Dataset::new(FrequencyGrid::standard(), 7728, vec![]).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn task_view_counts_only_task_classes() {
        let grid = FrequencyGrid::standard();
        let ds = Dataset::new(
            grid,
            4,
            vec![
                sample("a", "cancer", 4),
                sample("b", "healthy", 4),
                sample("c", "other", 4),
                sample("d", "severe dysplasia", 4),
                sample("e", "hyperkeratosis", 4),
            ],
        )
        .unwrap();
        for id in 1..=3u8 {
            let task = TaskSpec::new(id).unwrap();
            let view = TaskView::new(&ds, task.clone());
            let direct = ds
                .samples
                .iter()
                .filter(|s| task.classes.contains(&s.label.category))
                .count();
            assert_eq!(view.len(), direct);
            assert!(view.samples.iter().all(|s| s.label.category != TissueCategory::Other));
        }
        assert_eq!(TaskView::new(&ds, TaskSpec::new(1).unwrap()).len(), 2);
        assert_eq!(TaskView::new(&ds, TaskSpec::new(3).unwrap()).len(), 4);
    }
}
