//! Binary checkpoint container.
//!
//! Layout: 4-byte magic `KGRL`, u32 LE format version, u64 LE metadata
//! length, UTF-8 JSON metadata, then for each tensor a name record (u32 LE
//! byte length + UTF-8 bytes), a shape record (u32 LE rank + rank u64 LE
//! dims) and the payload (f64 LE, row-major). Tensors appear in a fixed
//! order and only when the model kind uses them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::TripleStore;
use crate::error::{KgError, Result};
use crate::models::{Dims, Matrix, ModelKind, ModelParams, Tensor3};
use crate::train::{TrainConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

pub const MAGIC: &[u8; 4] = b"KGRL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdamConstants {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConstants {
    fn default() -> Self {
        AdamConstants {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub dims: Dims,
    pub seed: u64,
    pub train_config: Option<TrainConfig>,
    /// Initialization scheme description, e.g.
    /// "embeddings normal(0,0.01); core uniform(-1,1); biases zero".
    pub init_scheme: String,
    pub adam: AdamConstants,
    pub dataset_fingerprint: String,
}

impl CheckpointMeta {
    pub fn new(kind: ModelKind, dims: Dims, seed: u64) -> Self {
        CheckpointMeta {
            kind,
            dims,
            seed,
            train_config: None,
            init_scheme: "embeddings normal(0,0.01); core uniform(-1,1); biases zero".into(),
            adam: AdamConstants::default(),
            dataset_fingerprint: String::new(),
        }
    }
}

/// Stable, human-readable summary of a dataset's shape, stored in the
/// checkpoint so a mismatched dataset is detectable.
pub fn dataset_fingerprint(store: &TripleStore, n_e: usize, n_r: usize) -> String {
    format!(
        "n_e={} n_r={} train={} valid={} test={}",
        n_e,
        n_r,
        store.train.len(),
        store.valid.len(),
        store.test.len()
    )
}

struct TensorRef<'a> {
    name: &'static str,
    shape: Vec<usize>,
    data: &'a [f64],
}

fn tensor_list(params: &ModelParams) -> Vec<TensorRef<'_>> {
    let mut out = Vec::new();
    fn matrix<'a>(name: &'static str, m: &'a Matrix) -> TensorRef<'a> {
        TensorRef {
            name,
            shape: vec![m.rows, m.cols],
            data: &m.data,
        }
    }
    if !params.entity_emb.is_empty() {
        out.push(matrix("entity_emb", &params.entity_emb));
    }
    if !params.relation_vec.is_empty() {
        out.push(matrix("relation_vec", &params.relation_vec));
    }
    if !params.relation_diag.is_empty() {
        out.push(matrix("relation_diag", &params.relation_diag));
    }
    if !params.core_tensor.is_empty() {
        let t = &params.core_tensor;
        out.push(TensorRef {
            name: "core_tensor",
            shape: vec![t.d1, t.d2, t.d3],
            data: &t.data,
        });
    }
    if !params.relation_emb.is_empty() {
        out.push(matrix("relation_emb", &params.relation_emb));
    }
    if !params.bias_s.is_empty() {
        out.push(TensorRef {
            name: "bias_s",
            shape: vec![params.bias_s.len()],
            data: &params.bias_s,
        });
    }
    if !params.bias_o.is_empty() {
        out.push(TensorRef {
            name: "bias_o",
            shape: vec![params.bias_o.len()],
            data: &params.bias_o,
        });
    }
    out
}

pub fn save_checkpoint(params: &ModelParams, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let err = |e: std::io::Error| KgError::io(path.display().to_string(), e);
    let file = File::create(path).map_err(err)?;
    let mut w = BufWriter::new(file);
    let meta_bytes = serde_json::to_vec_pretty(meta).expect("metadata serializes");
    w.write_all(MAGIC).map_err(err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(err)?;
    w.write_all(&(meta_bytes.len() as u64).to_le_bytes())
        .map_err(err)?;
    w.write_all(&meta_bytes).map_err(err)?;
    for tensor in tensor_list(params) {
        let name = tensor.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(err)?;
        w.write_all(name).map_err(err)?;
        w.write_all(&(tensor.shape.len() as u32).to_le_bytes())
            .map_err(err)?;
        for &d in &tensor.shape {
            w.write_all(&(d as u64).to_le_bytes()).map_err(err)?;
        }
        for &v in tensor.data {
            w.write_all(&v.to_le_bytes()).map_err(err)?;
        }
    }
    w.flush().map_err(err)
}

struct Loaded {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn read_exact(
    r: &mut impl Read,
    buf: &mut [u8],
    path: &str,
    what: &str,
) -> Result<()> {
    r.read_exact(buf).map_err(|_| KgError::TruncatedCheckpoint {
        path: path.to_string(),
        what: what.to_string(),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta)> {
    let path_str = path.display().to_string();
    let file = File::open(path).map_err(|e| KgError::io(path_str.clone(), e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, &path_str, "magic")?;
    if &magic != MAGIC {
        return Err(KgError::BadMagic { path: path_str });
    }
    let mut buf4 = [0u8; 4];
    read_exact(&mut r, &mut buf4, &path_str, "version")?;
    let version = u32::from_le_bytes(buf4);
    if version != FORMAT_VERSION {
        return Err(KgError::UnsupportedVersion {
            path: path_str,
            version,
        });
    }
    let mut buf8 = [0u8; 8];
    read_exact(&mut r, &mut buf8, &path_str, "metadata length")?;
    let meta_len = u64::from_le_bytes(buf8) as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    read_exact(&mut r, &mut meta_bytes, &path_str, "metadata")?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes).map_err(|_| {
        KgError::TruncatedCheckpoint {
            path: path_str.clone(),
            what: "metadata json".into(),
        }
    })?;

    let mut tensors = Vec::new();
    loop {
        let mut len4 = [0u8; 4];
        match r.read_exact(&mut len4) {
            Ok(()) => {}
            Err(_) => break, // clean end of tensor stream
        }
        let name_len = u32::from_le_bytes(len4) as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, &path_str, "tensor name")?;
        let name = String::from_utf8(name_bytes).map_err(|_| KgError::TruncatedCheckpoint {
            path: path_str.clone(),
            what: "tensor name utf-8".into(),
        })?;
        read_exact(&mut r, &mut buf4, &path_str, &format!("{name} rank"))?;
        let rank = u32::from_le_bytes(buf4) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            read_exact(&mut r, &mut buf8, &path_str, &format!("{name} shape"))?;
            shape.push(u64::from_le_bytes(buf8) as usize);
        }
        let count: usize = shape.iter().product();
        let mut data = vec![0.0f64; count];
        for v in data.iter_mut() {
            read_exact(&mut r, &mut buf8, &path_str, &format!("tensor `{name}` payload"))?;
            *v = f64::from_le_bytes(buf8);
        }
        tensors.push(Loaded { name, shape, data });
    }

    assemble_params(&meta, tensors, &path_str)
        .map(|params| (params, meta.clone()))
}

fn assemble_params(
    meta: &CheckpointMeta,
    tensors: Vec<Loaded>,
    path: &str,
) -> Result<ModelParams> {
    let dims = meta.dims;
    let kind = meta.kind;
    let mut entity_emb = None;
    let mut relation_vec = Matrix::empty();
    let mut relation_diag = Matrix::empty();
    let mut core_tensor = Tensor3::empty();
    let mut relation_emb = Matrix::empty();
    let mut bias_s = Vec::new();
    let mut bias_o = Vec::new();

    let shape_err = |t: &Loaded| KgError::ShapeInconsistency {
        path: path.to_string(),
        name: t.name.clone(),
        shape: t.shape.clone(),
    };
    let as_matrix = |t: Loaded, rows: usize, cols: usize| -> Result<Matrix> {
        if t.shape != [rows, cols] {
            return Err(shape_err(&t));
        }
        Ok(Matrix {
            rows,
            cols,
            data: t.data,
        })
    };

    for t in tensors {
        match t.name.as_str() {
            "entity_emb" => entity_emb = Some(as_matrix(t, dims.n_e, dims.d_e)?),
            "relation_vec" => relation_vec = as_matrix(t, dims.n_r, dims.d_e)?,
            "relation_diag" => relation_diag = as_matrix(t, dims.n_r, dims.d_e)?,
            "relation_emb" => relation_emb = as_matrix(t, dims.n_r, dims.d_r)?,
            "core_tensor" => {
                if t.shape != [dims.d_e, dims.d_r, dims.d_e] {
                    return Err(shape_err(&t));
                }
                core_tensor = Tensor3 {
                    d1: dims.d_e,
                    d2: dims.d_r,
                    d3: dims.d_e,
                    data: t.data,
                };
            }
            "bias_s" | "bias_o" => {
                if t.shape != [dims.n_e] {
                    return Err(shape_err(&t));
                }
                if t.name == "bias_s" {
                    bias_s = t.data;
                } else {
                    bias_o = t.data;
                }
            }
            _ => {
                return Err(KgError::ShapeInconsistency {
                    path: path.to_string(),
                    name: t.name,
                    shape: t.shape,
                });
            }
        }
    }

    let missing = |name: &str| KgError::TruncatedCheckpoint {
        path: path.to_string(),
        what: format!("tensor `{name}`"),
    };
    let entity_emb = entity_emb.ok_or_else(|| missing("entity_emb"))?;
    if kind.has_translation() && relation_vec.is_empty() {
        return Err(missing("relation_vec"));
    }
    if kind.has_diagonal() && relation_diag.is_empty() {
        return Err(missing("relation_diag"));
    }
    if kind.is_tucker() && (core_tensor.is_empty() || relation_emb.is_empty()) {
        return Err(missing("core_tensor"));
    }
    if kind.has_biases() && (bias_s.is_empty() || bias_o.is_empty()) {
        return Err(missing("bias_s"));
    }

    Ok(ModelParams {
        kind,
        dims,
        entity_emb,
        relation_vec,
        relation_diag,
        core_tensor,
        relation_emb,
        bias_s,
        bias_o,
    })
}

/// Exact on-disk size of a checkpoint for the given params and serialized
/// metadata length. Used to verify the writer emits no padding or slack.
pub fn expected_file_size(params: &ModelParams, meta: &CheckpointMeta) -> usize {
    let meta_len = serde_json::to_vec_pretty(meta).expect("metadata serializes").len();
    let mut size = 4 + 4 + 8 + meta_len;
    for t in tensor_list(params) {
        size += 4 + t.name.len(); // name record
        size += 4 + 8 * t.shape.len(); // shape record
        size += 8 * t.data.len(); // payload
    }
    size
}
