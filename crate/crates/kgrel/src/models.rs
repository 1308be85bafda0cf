//! Parameter storage and score functions for the five linear link
//! prediction models: TransE, MuRE_I, DistMult, TuckER and MuRE.
//!
//! Score conventions:
//!   TransE    phi = -||e_s + r - e_o||^2
//!   MuRE_I    phi = -||e_s + r - e_o||^2 + b_s + b_o
//!   DistMult  phi = sum_i e_s[i] * diag[i] * e_o[i]
//!   TuckER    phi = sum_{i,k,j} W[i,k,j] * e_s[i] * r[k] * e_o[j]
//!   MuRE      phi = -||diag .* e_s + r - e_o||^2 + b_s + b_o
//!
//! The triple probability is sigma(phi).

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{EntityId, RelationId};
use crate::error::{KgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    TransE,
    MuReI,
    DistMult,
    TuckEr,
    MuRe,
}

pub const ALL_MODEL_KINDS: [ModelKind; 5] = [
    ModelKind::TransE,
    ModelKind::MuReI,
    ModelKind::DistMult,
    ModelKind::TuckEr,
    ModelKind::MuRe,
];

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::MuReI => "mure_i",
            ModelKind::DistMult => "distmult",
            ModelKind::TuckEr => "tucker",
            ModelKind::MuRe => "mure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Some(ModelKind::TransE),
            "mure_i" | "murei" => Some(ModelKind::MuReI),
            "distmult" => Some(ModelKind::DistMult),
            "tucker" => Some(ModelKind::TuckEr),
            "mure" => Some(ModelKind::MuRe),
            _ => None,
        }
    }

    /// Has a relation translation vector r.
    pub fn has_translation(self) -> bool {
        matches!(self, ModelKind::TransE | ModelKind::MuReI | ModelKind::MuRe)
    }

    /// Has a diagonal relation matrix.
    pub fn has_diagonal(self) -> bool {
        matches!(self, ModelKind::DistMult | ModelKind::MuRe)
    }

    /// Has per-entity biases b_s, b_o.
    pub fn has_biases(self) -> bool {
        matches!(self, ModelKind::MuReI | ModelKind::MuRe)
    }

    pub fn is_tucker(self) -> bool {
        matches!(self, ModelKind::TuckEr)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Embedding dimensions and vocabulary sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_e: usize,
    pub d_r: usize,
    pub n_e: usize,
    pub n_r: usize,
}

/// Dense row-major matrix of f64. Empty (0x0) when a parameter block is
/// unused by the model kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn empty() -> Self {
        Matrix::default()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Rank-3 tensor with layout `[i][k][j]` (subject mode, relation mode,
/// object mode), row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tensor3 {
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d1: usize, d2: usize, d3: usize) -> Self {
        Tensor3 {
            d1,
            d2,
            d3,
            data: vec![0.0; d1 * d2 * d3],
        }
    }

    pub fn empty() -> Self {
        Tensor3::default()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, i: usize, k: usize, j: usize) -> usize {
        (i * self.d2 + k) * self.d3 + j
    }

    #[inline]
    pub fn at(&self, i: usize, k: usize, j: usize) -> f64 {
        self.data[self.idx(i, k, j)]
    }
}

/// All trainable parameters. Blocks unused by the model kind stay empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub dims: Dims,
    /// n_e x d_e entity embeddings.
    pub entity_emb: Matrix,
    /// n_r x d_e translation vectors (TransE, MuRE_I, MuRE).
    pub relation_vec: Matrix,
    /// n_r x d_e diagonals of the relation matrix (DistMult, MuRE).
    pub relation_diag: Matrix,
    /// d_e x d_r x d_e core tensor (TuckER).
    pub core_tensor: Tensor3,
    /// n_r x d_r relation embeddings (TuckER).
    pub relation_emb: Matrix,
    /// n_e subject biases (MuRE, MuRE_I).
    pub bias_s: Vec<f64>,
    /// n_e object biases (MuRE, MuRE_I).
    pub bias_o: Vec<f64>,
}

pub const INIT_EMB_STD: f64 = 0.01;

/// Draws fresh parameters: embeddings i.i.d. Normal(0, 0.01), the TuckER
/// core Uniform(-1, 1), biases zero. Deterministic in the seed.
pub fn init_params(kind: ModelKind, dims: Dims, seed: u64) -> ModelParams {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_EMB_STD).unwrap();
    let uniform = Uniform::new(-1.0, 1.0).unwrap();

    let fill_normal = |rows: usize, cols: usize, rng: &mut ChaCha12Rng| {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data.iter_mut() {
            *v = normal.sample(rng);
        }
        m
    };

    let entity_emb = fill_normal(dims.n_e, dims.d_e, &mut rng);
    let relation_vec = if kind.has_translation() {
        fill_normal(dims.n_r, dims.d_e, &mut rng)
    } else {
        Matrix::empty()
    };
    let relation_diag = if kind.has_diagonal() {
        fill_normal(dims.n_r, dims.d_e, &mut rng)
    } else {
        Matrix::empty()
    };
    let relation_emb = if kind.is_tucker() {
        fill_normal(dims.n_r, dims.d_r, &mut rng)
    } else {
        Matrix::empty()
    };
    let core_tensor = if kind.is_tucker() {
        let mut t = Tensor3::zeros(dims.d_e, dims.d_r, dims.d_e);
        for v in t.data.iter_mut() {
            *v = uniform.sample(&mut rng);
        }
        t
    } else {
        Tensor3::empty()
    };
    let (bias_s, bias_o) = if kind.has_biases() {
        (vec![0.0; dims.n_e], vec![0.0; dims.n_e])
    } else {
        (Vec::new(), Vec::new())
    };

    ModelParams {
        kind,
        dims,
        entity_emb,
        relation_vec,
        relation_diag,
        core_tensor,
        relation_emb,
        bias_s,
        bias_o,
    }
}

#[inline]
pub fn sigmoid(phi: f64) -> f64 {
    if phi >= 0.0 {
        1.0 / (1.0 + (-phi).exp())
    } else {
        let e = phi.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64], shift: &[f64]) -> f64 {
    // ||a + shift - b||^2
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] + shift[i] - b[i];
        acc += d * d;
    }
    acc
}

fn check_ids(params: &ModelParams, s: EntityId, r: RelationId, o: EntityId) -> Result<()> {
    let dims = params.dims;
    for (id, size) in [(s as usize, dims.n_e), (o as usize, dims.n_e), (r as usize, dims.n_r)] {
        if id >= size {
            return Err(KgError::IndexOutOfRange { id, size });
        }
    }
    Ok(())
}

/// Pre-sigmoid score of a single triple.
pub fn score(params: &ModelParams, s: EntityId, r: RelationId, o: EntityId) -> Result<f64> {
    check_ids(params, s, r, o)?;
    let es = params.entity_emb.row(s as usize);
    let eo = params.entity_emb.row(o as usize);
    let phi = match params.kind {
        ModelKind::TransE => {
            let rv = params.relation_vec.row(r as usize);
            -sq_dist(es, eo, rv)
        }
        ModelKind::MuReI => {
            let rv = params.relation_vec.row(r as usize);
            -sq_dist(es, eo, rv) + params.bias_s[s as usize] + params.bias_o[o as usize]
        }
        ModelKind::DistMult => {
            let diag = params.relation_diag.row(r as usize);
            // grouped as d*(a*b) so swapping subject and object is bitwise
            // exact: multiplication commutes even though it never associates
            es.iter()
                .zip(diag)
                .zip(eo)
                .map(|((a, d), b)| d * (a * b))
                .sum()
        }
        ModelKind::TuckEr => {
            let re = params.relation_emb.row(r as usize);
            tucker_score(&params.core_tensor, es, re, eo)
        }
        ModelKind::MuRe => {
            let rv = params.relation_vec.row(r as usize);
            let diag = params.relation_diag.row(r as usize);
            let mut acc = 0.0;
            for i in 0..es.len() {
                let d = diag[i] * es[i] + rv[i] - eo[i];
                acc += d * d;
            }
            -acc + params.bias_s[s as usize] + params.bias_o[o as usize]
        }
    };
    Ok(phi)
}

fn tucker_score(core: &Tensor3, es: &[f64], re: &[f64], eo: &[f64]) -> f64 {
    // Contract subject and relation modes first, then dot with e_o.
    let v = tucker_object_factor(core, es, re);
    v.iter().zip(eo).map(|(a, b)| a * b).sum()
}

/// v[j] = sum_{i,k} W[i,k,j] * e_s[i] * r[k]; the TuckER score is <v, e_o>.
fn tucker_object_factor(core: &Tensor3, es: &[f64], re: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; core.d3];
    for i in 0..core.d1 {
        let esi = es[i];
        if esi == 0.0 {
            continue;
        }
        for k in 0..core.d2 {
            let w = esi * re[k];
            let base = (i * core.d2 + k) * core.d3;
            let slice = &core.data[base..base + core.d3];
            for (vj, wj) in v.iter_mut().zip(slice) {
                *vj += w * wj;
            }
        }
    }
    v
}

/// u[i] = sum_{k,j} W[i,k,j] * r[k] * e_o[j]; the TuckER score is <e_s, u>.
fn tucker_subject_factor(core: &Tensor3, re: &[f64], eo: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; core.d1];
    for i in 0..core.d1 {
        let mut acc = 0.0;
        for k in 0..core.d2 {
            let base = (i * core.d2 + k) * core.d3;
            let slice = &core.data[base..base + core.d3];
            let dot: f64 = slice.iter().zip(eo).map(|(a, b)| a * b).sum();
            acc += re[k] * dot;
        }
        u[i] = acc;
    }
    u
}

/// Scores (s, r, *) against every entity. Entry i equals
/// `score(params, s, r, i)`.
pub fn score_all_objects(params: &ModelParams, s: EntityId, r: RelationId) -> Result<Vec<f64>> {
    check_ids(params, s, r, 0)?;
    let n_e = params.dims.n_e;
    let es = params.entity_emb.row(s as usize);
    let mut out = vec![0.0; n_e];
    match params.kind {
        ModelKind::TransE | ModelKind::MuReI => {
            let rv = params.relation_vec.row(r as usize);
            let shifted: Vec<f64> = es.iter().zip(rv).map(|(a, b)| a + b).collect();
            for (i, out_i) in out.iter_mut().enumerate() {
                let eo = params.entity_emb.row(i);
                let mut acc = 0.0;
                for (a, b) in shifted.iter().zip(eo) {
                    let d = a - b;
                    acc += d * d;
                }
                *out_i = -acc;
            }
            if params.kind == ModelKind::MuReI {
                let bs = params.bias_s[s as usize];
                for (i, out_i) in out.iter_mut().enumerate() {
                    *out_i += bs + params.bias_o[i];
                }
            }
        }
        ModelKind::DistMult => {
            let diag = params.relation_diag.row(r as usize);
            let weighted: Vec<f64> = es.iter().zip(diag).map(|(a, d)| a * d).collect();
            for (i, out_i) in out.iter_mut().enumerate() {
                let eo = params.entity_emb.row(i);
                *out_i = weighted.iter().zip(eo).map(|(a, b)| a * b).sum();
            }
        }
        ModelKind::TuckEr => {
            let re = params.relation_emb.row(r as usize);
            let v = tucker_object_factor(&params.core_tensor, es, re);
            for (i, out_i) in out.iter_mut().enumerate() {
                let eo = params.entity_emb.row(i);
                *out_i = v.iter().zip(eo).map(|(a, b)| a * b).sum();
            }
        }
        ModelKind::MuRe => {
            let rv = params.relation_vec.row(r as usize);
            let diag = params.relation_diag.row(r as usize);
            let shifted: Vec<f64> = es
                .iter()
                .zip(diag)
                .zip(rv)
                .map(|((a, d), b)| d * a + b)
                .collect();
            let bs = params.bias_s[s as usize];
            for (i, out_i) in out.iter_mut().enumerate() {
                let eo = params.entity_emb.row(i);
                let mut acc = 0.0;
                for (a, b) in shifted.iter().zip(eo) {
                    let d = a - b;
                    acc += d * d;
                }
                *out_i = -acc + bs + params.bias_o[i];
            }
        }
    }
    Ok(out)
}

/// Scores (*, r, o) against every entity. Entry i equals
/// `score(params, i, r, o)`.
pub fn score_all_subjects(params: &ModelParams, r: RelationId, o: EntityId) -> Result<Vec<f64>> {
    check_ids(params, 0, r, o)?;
    let n_e = params.dims.n_e;
    let eo = params.entity_emb.row(o as usize);
    let mut out = vec![0.0; n_e];
    match params.kind {
        ModelKind::TransE | ModelKind::MuReI => {
            let rv = params.relation_vec.row(r as usize);
            let target: Vec<f64> = eo.iter().zip(rv).map(|(b, v)| b - v).collect();
            for (i, out_i) in out.iter_mut().enumerate() {
                let es = params.entity_emb.row(i);
                let mut acc = 0.0;
                for (a, b) in es.iter().zip(&target) {
                    let d = a - b;
                    acc += d * d;
                }
                *out_i = -acc;
            }
            if params.kind == ModelKind::MuReI {
                let bo = params.bias_o[o as usize];
                for (i, out_i) in out.iter_mut().enumerate() {
                    *out_i += params.bias_s[i] + bo;
                }
            }
        }
        ModelKind::DistMult => {
            let diag = params.relation_diag.row(r as usize);
            let weighted: Vec<f64> = eo.iter().zip(diag).map(|(b, d)| b * d).collect();
            for (i, out_i) in out.iter_mut().enumerate() {
                let es = params.entity_emb.row(i);
                *out_i = weighted.iter().zip(es).map(|(a, b)| a * b).sum();
            }
        }
        ModelKind::TuckEr => {
            let re = params.relation_emb.row(r as usize);
            let u = tucker_subject_factor(&params.core_tensor, re, eo);
            for (i, out_i) in out.iter_mut().enumerate() {
                let es = params.entity_emb.row(i);
                *out_i = u.iter().zip(es).map(|(a, b)| a * b).sum();
            }
        }
        ModelKind::MuRe => {
            let rv = params.relation_vec.row(r as usize);
            let diag = params.relation_diag.row(r as usize);
            let bo = params.bias_o[o as usize];
            for (i, out_i) in out.iter_mut().enumerate() {
                let es = params.entity_emb.row(i);
                let mut acc = 0.0;
                for j in 0..es.len() {
                    let d = diag[j] * es[j] + rv[j] - eo[j];
                    acc += d * d;
                }
                *out_i = -acc + params.bias_s[i] + bo;
            }
        }
    }
    Ok(out)
}

/// The relation-specific matrix R of TuckER: the core tensor contracted with
/// the relation embedding over the relation mode, so that
/// `e_s^T R e_o` equals the TuckER score.
pub fn tucker_relation_matrix(params: &ModelParams, r: RelationId) -> Result<Matrix> {
    if !params.kind.is_tucker() {
        return Err(KgError::WrongModelKind {
            expected: ModelKind::TuckEr,
            got: params.kind,
        });
    }
    if r as usize >= params.dims.n_r {
        return Err(KgError::IndexOutOfRange {
            id: r as usize,
            size: params.dims.n_r,
        });
    }
    let core = &params.core_tensor;
    let re = params.relation_emb.row(r as usize);
    let mut m = Matrix::zeros(core.d1, core.d3);
    for i in 0..core.d1 {
        let row = m.row_mut(i);
        for k in 0..core.d2 {
            let w = re[k];
            if w == 0.0 {
                continue;
            }
            let base = (i * core.d2 + k) * core.d3;
            let slice = &core.data[base..base + core.d3];
            for (out, c) in row.iter_mut().zip(slice) {
                *out += w * c;
            }
        }
    }
    Ok(m)
}
