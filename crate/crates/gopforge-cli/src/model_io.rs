//! The `.gopm-model` container: a JSON manifest (architecture, operator
//! names, fit metadata, config echo, per-step history) followed by the full
//! 64-bit little-endian weight payload.
//!
//! Round-trips are bitwise: loading and re-saving reproduces the file, and
//! a loaded model's forward outputs equal the original's bit for bit. The
//! manifest deliberately excludes wall-clock times and the worker count so
//! identical experiments produce byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use gopforge::layers::ProjectionKind;
use gopforge::{
    AlgorithmKind, GopLayerParams, HiddenBlock, LinearLayerParams, Matrix, MemoryProjection,
    NetworkModel, OperatorSet, OutputActivation, OutputLayer, Standardizer, StepRecord,
};

use crate::CliError;

pub const MODEL_MAGIC: &[u8; 8] = b"GOPMODEL";
pub const MODEL_VERSION: u32 = 1;
pub const MODEL_EXTENSION: &str = "gopm-model";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OpsetNames {
    pub nodal: String,
    pub pool: String,
    pub act: String,
}

impl From<OperatorSet> for OpsetNames {
    fn from(set: OperatorSet) -> Self {
        Self {
            nodal: set.nodal.name().to_string(),
            pool: set.pool.name().to_string(),
            act: set.act.name().to_string(),
        }
    }
}

impl OpsetNames {
    pub fn to_set(&self) -> Result<OperatorSet, CliError> {
        OperatorSet::from_names(&self.nodal, &self.pool, &self.act).ok_or_else(|| {
            CliError::io(format!(
                "corrupt model file: unknown operator set ({}, {}, {})",
                self.nodal, self.pool, self.act
            ))
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryManifest {
    pub kind: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub ridge: f64,
    pub energy_threshold: Option<f64>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockManifest {
    pub opset: OpsetNames,
    pub fan_in: usize,
    pub fan_out: usize,
    pub memory: Option<MemoryManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputManifest {
    /// "linear" or "gop".
    pub kind: String,
    /// Activation name for linear outputs.
    pub activation: Option<String>,
    /// Operator set for GOP outputs.
    pub opset: Option<OpsetNames>,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Per-step history echoed into the manifest. Wall-clock seconds live in
/// `steps.csv`, not here, to keep model files byte-identical across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: usize,
    pub candidates: usize,
    pub opset: OpsetNames,
    pub best_loss: f64,
    pub accuracy: f64,
    pub stopped: bool,
    pub shln_input_width: usize,
    pub output_fan_in: usize,
    pub memory_dim: usize,
    pub failures: usize,
    pub gis_draw: Option<usize>,
}

impl From<&StepRecord> for HistoryRecord {
    fn from(r: &StepRecord) -> Self {
        Self {
            step: r.step,
            candidates: r.candidates,
            opset: r.opset.into(),
            best_loss: r.best_loss,
            accuracy: r.accuracy,
            stopped: r.stopped,
            shln_input_width: r.shln_input_width,
            output_fan_in: r.output_fan_in,
            memory_dim: r.memory_dim,
            failures: r.failures,
            gis_draw: r.gis_draw,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub algorithm: String,
    pub input_dim: usize,
    pub output_dim: usize,
    pub blocks: Vec<BlockManifest>,
    pub output_layer: OutputManifest,
    pub standardized: bool,
    /// Uniform weight-initialization bound used by the run.
    pub weight_init_bound: f64,
    pub run_seed: u64,
    pub class_names: Option<Vec<String>>,
    pub config_echo: serde_json::Value,
    pub history: Vec<HistoryRecord>,
}

fn write_matrix(w: &mut impl Write, m: &Matrix) -> std::io::Result<()> {
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_vector(w: &mut impl Write, v: &[f64]) -> std::io::Result<()> {
    w.write_all(&(1u64).to_le_bytes())?;
    w.write_all(&(v.len() as u64).to_le_bytes())?;
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read, what: &str) -> Result<Matrix, CliError> {
    let corrupt = |detail: String| CliError::io(format!("corrupt model file: {}", detail));
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)
        .map_err(|_| corrupt(format!("truncated while reading {}", what)))?;
    let rows = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)
        .map_err(|_| corrupt(format!("truncated while reading {}", what)))?;
    let cols = u64::from_le_bytes(b8) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        r.read_exact(&mut b8)
            .map_err(|_| corrupt(format!("truncated while reading {}", what)))?;
        data.push(f64::from_le_bytes(b8));
    }
    Matrix::from_vec(rows, cols, data)
        .map_err(|e| corrupt(format!("invalid {}: {}", what, e)))
}

fn read_vector(r: &mut impl Read, what: &str) -> Result<Vec<f64>, CliError> {
    let m = read_matrix(r, what)?;
    if m.rows() != 1 {
        return Err(CliError::io(format!(
            "corrupt model file: {} is not a vector",
            what
        )));
    }
    Ok(m.data().to_vec())
}

/// Builds the manifest for a trained model.
pub fn build_manifest(
    model: &NetworkModel<f64>,
    run_seed: u64,
    class_names: Option<Vec<String>>,
    config_echo: serde_json::Value,
    history: &[StepRecord],
) -> ModelManifest {
    let blocks = model
        .blocks
        .iter()
        .map(|b| BlockManifest {
            opset: b.gop.opset.into(),
            fan_in: b.gop.fan_in(),
            fan_out: b.gop.fan_out(),
            memory: b.memory.as_ref().map(|m| MemoryManifest {
                kind: m.kind.name().to_string(),
                in_dim: m.in_dim(),
                out_dim: m.out_dim(),
                ridge: m.ridge,
                energy_threshold: m.energy_threshold,
                eigenvalues: m.eigenvalues.clone(),
            }),
        })
        .collect();
    let output_layer = match &model.output {
        OutputLayer::Linear(p) => OutputManifest {
            kind: "linear".into(),
            activation: Some(p.activation.name().to_string()),
            opset: None,
            fan_in: p.fan_in(),
            fan_out: p.fan_out(),
        },
        OutputLayer::Gop(p) => OutputManifest {
            kind: "gop".into(),
            activation: None,
            opset: Some(p.opset.into()),
            fan_in: p.fan_in(),
            fan_out: p.fan_out(),
        },
    };
    ModelManifest {
        format_version: MODEL_VERSION,
        algorithm: model.kind.name().to_string(),
        input_dim: model.input_dim(),
        output_dim: model.output_dim(),
        blocks,
        output_layer,
        standardized: model.standardizer.is_some(),
        weight_init_bound: gopforge::layers::INIT_BOUND,
        run_seed,
        class_names,
        config_echo,
        history: history.iter().map(HistoryRecord::from).collect(),
    }
}

pub fn save_model(path: &Path, model: &NetworkModel<f64>, manifest: &ModelManifest) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::io(format!("cannot create {}: {}", path.display(), e)))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| CliError::io(format!("writing {}: {}", path.display(), e));

    let manifest_bytes = serde_json::to_vec(manifest)
        .map_err(|e| CliError::io(format!("manifest serialization: {}", e)))?;
    w.write_all(MODEL_MAGIC).map_err(io_err)?;
    w.write_all(&MODEL_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(manifest_bytes.len() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&manifest_bytes).map_err(io_err)?;

    for block in &model.blocks {
        write_matrix(&mut w, &block.gop.weights).map_err(io_err)?;
        write_vector(&mut w, &block.gop.bias).map_err(io_err)?;
        if let Some(m) = &block.memory {
            write_vector(&mut w, &m.mean).map_err(io_err)?;
            write_matrix(&mut w, &m.basis).map_err(io_err)?;
        }
    }
    match &model.output {
        OutputLayer::Linear(p) => {
            write_matrix(&mut w, &p.weights).map_err(io_err)?;
            write_vector(&mut w, &p.bias).map_err(io_err)?;
        }
        OutputLayer::Gop(p) => {
            write_matrix(&mut w, &p.weights).map_err(io_err)?;
            write_vector(&mut w, &p.bias).map_err(io_err)?;
        }
    }
    if let Some(s) = &model.standardizer {
        write_vector(&mut w, &s.mean).map_err(io_err)?;
        write_vector(&mut w, &s.std).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(NetworkModel<f64>, ModelManifest), CliError> {
    let corrupt = |detail: &str| CliError::io(format!("corrupt model file {}: {}", path.display(), detail));
    let file = File::open(path)
        .map_err(|e| CliError::io(format!("cannot open {}: {}", path.display(), e)))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
    if &magic != MODEL_MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|_| corrupt("truncated header"))?;
    let version = u32::from_le_bytes(b4);
    if version != MODEL_VERSION {
        return Err(corrupt(&format!("unsupported format version {}", version)));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(|_| corrupt("truncated header"))?;
    let manifest_len = u64::from_le_bytes(b8) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    r.read_exact(&mut manifest_bytes).map_err(|_| corrupt("truncated manifest"))?;
    let manifest: ModelManifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| corrupt(&format!("manifest does not parse: {}", e)))?;

    let kind = AlgorithmKind::from_name(&manifest.algorithm)
        .ok_or_else(|| corrupt(&format!("unknown algorithm '{}'", manifest.algorithm)))?;

    let mut blocks = Vec::with_capacity(manifest.blocks.len());
    for bm in &manifest.blocks {
        let weights = read_matrix(&mut r, "block weights")?;
        let bias = read_vector(&mut r, "block bias")?;
        if weights.rows() != bm.fan_in || weights.cols() != bm.fan_out || bias.len() != bm.fan_out {
            return Err(corrupt("block payload does not match its manifest dims"));
        }
        let memory = match &bm.memory {
            None => None,
            Some(mm) => {
                let mean = read_vector(&mut r, "memory mean")?;
                let basis = read_matrix(&mut r, "memory basis")?;
                if basis.rows() != mm.in_dim || basis.cols() != mm.out_dim || mean.len() != mm.in_dim {
                    return Err(corrupt("memory payload does not match its manifest dims"));
                }
                let kind = ProjectionKind::from_name(&mm.kind)
                    .ok_or_else(|| corrupt(&format!("unknown projection kind '{}'", mm.kind)))?;
                Some(MemoryProjection {
                    kind,
                    mean,
                    basis,
                    eigenvalues: mm.eigenvalues.clone(),
                    ridge: mm.ridge,
                    energy_threshold: mm.energy_threshold,
                })
            }
        };
        blocks.push(HiddenBlock {
            gop: GopLayerParams {
                weights,
                bias,
                opset: bm.opset.to_set()?,
            },
            memory,
        });
    }

    let out_weights = read_matrix(&mut r, "output weights")?;
    let out_bias = read_vector(&mut r, "output bias")?;
    if out_weights.rows() != manifest.output_layer.fan_in
        || out_weights.cols() != manifest.output_layer.fan_out
    {
        return Err(corrupt("output payload does not match its manifest dims"));
    }
    let output = match manifest.output_layer.kind.as_str() {
        "linear" => {
            let name = manifest.output_layer.activation.as_deref().unwrap_or("softmax");
            let activation = OutputActivation::from_name(name)
                .ok_or_else(|| corrupt(&format!("unknown activation '{}'", name)))?;
            OutputLayer::Linear(LinearLayerParams {
                weights: out_weights,
                bias: out_bias,
                activation,
            })
        }
        "gop" => {
            let names = manifest
                .output_layer
                .opset
                .as_ref()
                .ok_or_else(|| corrupt("gop output layer without operator set"))?;
            OutputLayer::Gop(GopLayerParams {
                weights: out_weights,
                bias: out_bias,
                opset: names.to_set()?,
            })
        }
        other => return Err(corrupt(&format!("unknown output layer kind '{}'", other))),
    };

    let standardizer = if manifest.standardized {
        let mean = read_vector(&mut r, "standardizer mean")?;
        let std = read_vector(&mut r, "standardizer std")?;
        Some(Standardizer { mean, std })
    } else {
        None
    };

    let mut tail = [0u8; 1];
    if r.read(&mut tail).map_err(|_| corrupt("unreadable tail"))? != 0 {
        return Err(corrupt("trailing bytes after payload"));
    }

    let model = NetworkModel {
        kind,
        blocks,
        output,
        standardizer,
    };
    Ok((model, manifest))
}
