use std::fs;
use std::path::Path;

use impedscope::config::ExperimentConfig;
use impedscope::error::exit_code;
use impedscope::io::{load_dataset, save_dataset, Manifest, MANIFEST};
use impedscope::model_io::{self, decode, encode};
use impedscope::pipeline::{load_prepared, predict_saved, Experiment};
use impedscope_core::label::PathologyVocabulary;
use impedscope_core::preprocess::{clean_sample, FilterConfig};
use impedscope_core::synth::{generate_sample, geometric_factors, sample_slots, ClassSpec, CohortSpec, NoiseModel, TissueModel};
use impedscope_core::dataset::Dataset;
use impedscope_core::{ElectrodeArray, FrequencyGrid, PatternUniverse};

fn tiny_cohort(array: &ElectrodeArray, dropout: f64, seed: u64) -> Dataset {
    let grid = FrequencyGrid::standard();
    let u = PatternUniverse::enumerate_all(array);
    let tissue = |r0: f64| TissueModel {
        r0,
        r_inf: 250.0,
        fc: 9000.0,
        alpha: 0.8,
    };
    let spec = CohortSpec {
        classes: vec![
            ClassSpec {
                pathology: "healthy".into(),
                n_patients: 3,
                tissue: tissue(1200.0),
                r0_range: None,
            },
            ClassSpec {
                pathology: "OSCC".into(),
                n_patients: 3,
                tissue: tissue(800.0),
                r0_range: None,
            },
        ],
        samples_per_patient: 2,
        noise: NoiseModel {
            dropout,
            ..NoiseModel::default()
        },
        contrast: None,
        geometric_modulation: true,
    };
    let factors = geometric_factors(&u, array, true).unwrap();
    let vocab = PathologyVocabulary::standard();
    let samples = sample_slots(&spec)
        .iter()
        .map(|s| generate_sample(&spec, &grid, &factors, &vocab, s, seed).unwrap())
        .collect();
    Dataset::new(grid, u.len(), samples).unwrap()
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn raw_dataset_round_trips_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tiny_cohort(&ElectrodeArray::compact(), 0.1, 3);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    save_dataset(&a, &ds, "compact").unwrap();
    let (_, loaded) = load_dataset(&a.join(MANIFEST), &PathologyVocabulary::standard()).unwrap();
    assert_eq!(loaded.samples.len(), ds.samples.len());
    for (x, y) in loaded.samples.iter().zip(&ds.samples) {
        assert_eq!(x.frames.len(), 9);
        for (fx, fy) in x.frames.iter().zip(&y.frames) {
            assert_eq!(fx.valid(), fy.valid());
            for p in (0..fx.n_patterns()).filter(|&p| fx.is_valid(p)) {
                assert_eq!(fx.spectrum(p), fy.spectrum(p));
            }
        }
    }
    save_dataset(&b, &loaded, "compact").unwrap();
    assert_eq!(tree_bytes(&a), tree_bytes(&b));
}

#[test]
fn cleaned_dataset_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tiny_cohort(&ElectrodeArray::compact(), 0.0, 4);
    let cleaned: Vec<_> = raw.samples.iter().map(|s| clean_sample(s, &FilterConfig::default()).unwrap()).collect();
    let ds = Dataset::new(raw.grid.clone(), raw.n_patterns, cleaned).unwrap();
    save_dataset(tmp.path(), &ds, "compact").unwrap();
    let (m, loaded) = load_dataset(&tmp.path().join(MANIFEST), &PathologyVocabulary::standard()).unwrap();
    assert!(m.samples.iter().all(|s| s.frames.len() == 1));
    assert_eq!(loaded.samples, ds.samples);
}

#[test]
fn short_frame_is_a_dimension_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tiny_cohort(&ElectrodeArray::standard(), 0.0, 5);
    let one = Dataset::new(ds.grid.clone(), ds.n_patterns, ds.samples[..1].to_vec()).unwrap();
    save_dataset(tmp.path(), &one, "standard").unwrap();
    let m = Manifest::load(&tmp.path().join(MANIFEST)).unwrap();
    let frame = tmp.path().join(&m.samples[0].frames[0]);
    let bytes = fs::read(&frame).unwrap();
    fs::write(&frame, &bytes[..bytes.len() - 31 * 16]).unwrap();
    let err = load_dataset(&tmp.path().join(MANIFEST), &PathologyVocabulary::standard()).unwrap_err();
    let core = err.downcast_ref::<impedscope_core::Error>().expect("core error");
    match core {
        impedscope_core::Error::DimensionMismatch { expected, found, .. } => {
            assert_eq!((*expected, *found), (7728, 7727));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(exit_code(&err), 2);
}

#[test]
fn unknown_pathology_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tiny_cohort(&ElectrodeArray::compact(), 0.0, 6);
    save_dataset(tmp.path(), &ds, "compact").unwrap();
    let path = tmp.path().join(MANIFEST);
    let text = fs::read_to_string(&path).unwrap().replacen("\"OSCC\"", "\"lichen planus\"", 1);
    fs::write(&path, text).unwrap();
    let err = load_dataset(&path, &PathologyVocabulary::standard()).unwrap_err();
    assert!(matches!(err.downcast_ref(), Some(impedscope_core::Error::UnknownPathology(p)) if p == "lichen planus"));
}

fn trained(tmp: &Path, model: &str) -> (ExperimentConfig, Dataset, model_io::SavedModel) {
    let ds = tiny_cohort(&ElectrodeArray::compact(), 0.05, 7);
    let data = tmp.join("data");
    save_dataset(&data, &ds, "compact").unwrap();
    let cfg_path = tmp.join("config.json");
    fs::write(
        &cfg_path,
        format!(
            r#"{{ "geometry": "compact", "dataset": "data", "n_folds": 3,
                "train": {{ "params": {model}, "mask": "All", "frequencies": {{ "fixed": [1, 5, 31] }} }} }}"#
        ),
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let res = cfg.resources().unwrap();
    let prepared = load_prepared(&cfg, &res).unwrap();
    let exp = Experiment::new(&cfg, &res, &prepared.dataset, 1).unwrap();
    let saved = exp.train(&exp.candidate_from(cfg.train.as_ref().unwrap()).unwrap()).unwrap();
    (cfg, prepared.dataset, saved)
}

#[test]
fn model_files_round_trip_for_every_family() {
    for model in [
        r#"{ "model": "svm", "kernel": "poly", "c": 2.0 }"#,
        r#"{ "model": "random_forest", "n_trees": 15, "max_depth": 5, "max_features": 0.5 }"#,
        r#"{ "model": "logistic", "c": 0.5, "max_iter": 300 }"#,
    ] {
        let tmp = tempfile::tempdir().unwrap();
        let (_, ds, saved) = trained(tmp.path(), model);
        assert_eq!(saved.pipeline.frequencies, vec![0, 4, 30]);
        let bytes = encode(&saved).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(back, saved);
        assert_eq!(encode(&back).unwrap(), bytes);
        let samples: Vec<_> = ds.samples.iter().collect();
        assert_eq!(predict_saved(&back, &samples).unwrap(), predict_saved(&saved, &samples).unwrap());
    }
}

#[test]
fn corrupt_model_files_are_validation_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, _, saved) = trained(tmp.path(), r#"{ "model": "logistic" }"#);
    let bytes = encode(&saved).unwrap();
    let mut extra = bytes.clone();
    extra.push(0);
    let mut magic = bytes.clone();
    magic[0] = b'X';
    let mut version = bytes.clone();
    version[8] = 9;
    for bad in [&bytes[..bytes.len() - 3], &extra[..], &magic[..], &version[..]] {
        let err = decode(bad).unwrap_err();
        assert_eq!(exit_code(&err), 2, "{err:#}");
    }
}
