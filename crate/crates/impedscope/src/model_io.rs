//! Versioned binary model files.
//!
//! Layout: magic `IMPSCOPE`, u32 format version, u8 model kind, then two
//! length-prefixed blobs: the feature pipeline as JSON (mask, frequencies,
//! z-score parameters, hyperparameters) and the learned parameters as packed
//! little-endian numbers.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use impedscope_core::classifier::forest::{Node, Tree};
use impedscope_core::classifier::svm::{BinarySvm, KernelFn};
use impedscope_core::classifier::{ForestModel, HyperParams, Kernel, Learned, LogisticModel, ModelKind, SvmModel, TrainedModel};
use impedscope_core::preprocess::{NormalizationMode, Normalizer};
use serde::{Deserialize, Serialize};

use crate::error::ValidationError;

pub const MAGIC: &[u8; 8] = b"IMPSCOPE";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to turn a cleaned sample into the model's input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub task: u8,
    pub class_names: Vec<String>,
    pub mask_name: String,
    pub mask_indices: Vec<usize>,
    /// Zero-based, ascending.
    pub frequencies: Vec<usize>,
    pub normalization: NormalizationMode,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub params: HyperParams,
    pub present: Vec<usize>,
    pub n_features: usize,
    pub seed: u64,
    pub converged: bool,
}

impl FeaturePipeline {
    pub fn normalizer(&self) -> Normalizer {
        Normalizer {
            mode: self.normalization,
            means: self.means.clone(),
            stds: self.stds.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub pipeline: FeaturePipeline,
    pub model: TrainedModel,
}

fn kind_code(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Svm => 0,
        ModelKind::RandomForest => 1,
        ModelKind::Logistic => 2,
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|x| self.f64(*x));
    }
    fn blob(&mut self, b: &[u8]) {
        self.usize(b.len());
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> anyhow::Result<&'a [u8]> {
        if self.buf.len() - self.at < n {
            bail!(ValidationError::new("model file is truncated"));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> anyhow::Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> anyhow::Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into()?))
    }
    fn u64(&mut self) -> anyhow::Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into()?))
    }
    fn usize(&mut self) -> anyhow::Result<usize> {
        Ok(usize::try_from(self.u64()?)?)
    }
    fn f64(&mut self) -> anyhow::Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into()?))
    }
    fn len(&mut self, elem: usize) -> anyhow::Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(elem) > self.buf.len() - self.at {
            bail!(ValidationError::new("model file is truncated"));
        }
        Ok(n)
    }
    fn f64s(&mut self) -> anyhow::Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn blob(&mut self) -> anyhow::Result<&'a [u8]> {
        let n = self.len(1)?;
        self.take(n)
    }
    fn bool(&mut self) -> anyhow::Result<bool> {
        Ok(self.u8()? != 0)
    }
}

fn write_learned(w: &mut Writer, learned: &Learned) {
    match learned {
        Learned::Logistic(m) => {
            w.usize(m.n_classes);
            w.usize(m.n_features);
            w.u8(m.converged as u8);
            w.usize(m.iterations);
            w.f64s(&m.params);
            w.f64s(&m.loss_history);
        }
        Learned::Svm(m) => {
            w.u8(Kernel::ALL.iter().position(|k| *k == m.kernel.kind).expect("known kernel") as u8);
            w.f64(m.kernel.gamma);
            w.u32(m.kernel.degree);
            w.f64(m.kernel.coef0);
            w.usize(m.n_classes);
            w.u8(m.converged as u8);
            w.usize(m.machines.len());
            for b in &m.machines {
                w.f64s(&b.support);
                w.f64s(&b.coef);
                w.f64(b.rho);
                w.f64(b.platt_a);
                w.f64(b.platt_b);
                w.u8(b.converged as u8);
            }
        }
        Learned::RandomForest(m) => {
            w.usize(m.n_classes);
            w.usize(m.n_features);
            w.usize(m.trees.len());
            for t in &m.trees {
                w.usize(t.nodes.len());
                for n in &t.nodes {
                    match *n {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            w.u8(0);
                            w.u32(feature);
                            w.f64(threshold);
                            w.u32(left);
                            w.u32(right);
                        }
                        Node::Leaf { class } => {
                            w.u8(1);
                            w.u32(class);
                        }
                    }
                }
            }
        }
    }
}

fn read_learned(r: &mut Reader, kind: ModelKind) -> anyhow::Result<Learned> {
    Ok(match kind {
        ModelKind::Logistic => Learned::Logistic(LogisticModel {
            n_classes: r.usize()?,
            n_features: r.usize()?,
            converged: r.bool()?,
            iterations: r.usize()?,
            params: r.f64s()?,
            loss_history: r.f64s()?,
        }),
        ModelKind::Svm => {
            let k = r.u8()? as usize;
            let kind = *Kernel::ALL
                .get(k)
                .ok_or_else(|| ValidationError::new(format!("unknown kernel code {k}")))?;
            let kernel = KernelFn {
                kind,
                gamma: r.f64()?,
                degree: r.u32()?,
                coef0: r.f64()?,
            };
            let n_classes = r.usize()?;
            let converged = r.bool()?;
            let n = r.len(1)?;
            let machines = (0..n)
                .map(|_| {
                    Ok(BinarySvm {
                        support: r.f64s()?,
                        coef: r.f64s()?,
                        rho: r.f64()?,
                        platt_a: r.f64()?,
                        platt_b: r.f64()?,
                        converged: r.bool()?,
                    })
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            Learned::Svm(SvmModel {
                kernel,
                n_classes,
                machines,
                converged,
            })
        }
        ModelKind::RandomForest => {
            let n_classes = r.usize()?;
            let n_features = r.usize()?;
            let n_trees = r.len(1)?;
            let trees = (0..n_trees)
                .map(|_| {
                    let n = r.len(5)?;
                    let nodes = (0..n)
                        .map(|_| {
                            Ok(match r.u8()? {
                                0 => Node::Split {
                                    feature: r.u32()?,
                                    threshold: r.f64()?,
                                    left: r.u32()?,
                                    right: r.u32()?,
                                },
                                1 => Node::Leaf { class: r.u32()? },
                                t => bail!(ValidationError::new(format!("unknown tree node tag {t}"))),
                            })
                        })
                        .collect::<anyhow::Result<Vec<_>>>()?;
                    let len = nodes.len();
                    let dangling = |node: &Node| matches!(*node, Node::Split { left, right, .. } if left as usize >= len || right as usize >= len);
                    if len == 0 || nodes.iter().any(dangling) {
                        bail!(ValidationError::new("malformed tree in model file"));
                    }
                    Ok(Tree { nodes })
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            Learned::RandomForest(ForestModel {
                n_classes,
                n_features,
                trees,
            })
        }
    })
}

pub fn encode(saved: &SavedModel) -> anyhow::Result<Vec<u8>> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(kind_code(saved.model.params.kind()));
    w.blob(&serde_json::to_vec(&saved.pipeline)?);
    let mut learned = Writer::default();
    write_learned(&mut learned, &saved.model.learned);
    w.blob(&learned.0);
    Ok(w.0)
}

pub fn decode(bytes: &[u8]) -> anyhow::Result<SavedModel> {
    let mut r = Reader { buf: bytes, at: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        bail!(ValidationError::new("not an impedscope model file"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        bail!(ValidationError::new(format!("model format version {version} is not supported")));
    }
    let code = r.u8()?;
    let kind = [ModelKind::Svm, ModelKind::RandomForest, ModelKind::Logistic]
        .into_iter()
        .find(|k| kind_code(*k) == code)
        .ok_or_else(|| ValidationError::new(format!("unknown model kind {code}")))?;
    let pipeline: FeaturePipeline =
        serde_json::from_slice(r.blob()?).map_err(|e| ValidationError::new(format!("model pipeline: {e}")))?;
    if pipeline.params.kind() != kind {
        bail!(ValidationError::new("model kind does not match its hyperparameters"));
    }
    let mut lr = Reader { buf: r.blob()?, at: 0 };
    let learned = read_learned(&mut lr, kind)?;
    if r.at != bytes.len() || lr.at != lr.buf.len() {
        bail!(ValidationError::new("trailing bytes in model file"));
    }
    let model = TrainedModel {
        params: pipeline.params.clone(),
        n_classes: pipeline.class_names.len(),
        present: pipeline.present.clone(),
        n_features: pipeline.n_features,
        seed: pipeline.seed,
        converged: pipeline.converged,
        learned,
    };
    Ok(SavedModel { pipeline, model })
}

pub fn save(path: &Path, saved: &SavedModel) -> anyhow::Result<()> {
    fs::write(path, encode(saved)?).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> anyhow::Result<SavedModel> {
    decode(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)
}
