//! Negative sampling, binary cross-entropy, analytic gradients for all five
//! score functions, Adam, and the epoch loop.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EntityId, Split, Triple, TripleStore};
use crate::error::{KgError, Result};
use crate::eval::overall_hits_at_10;
use crate::models::{init_params, sigmoid, Dims, Matrix, ModelKind, ModelParams, Tensor3};
use crate::parallel;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Samples per parallel gradient chunk. Fixed so that the chunk boundaries,
/// and therefore the reduction order, do not depend on the thread count.
const GRAD_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub dims: Dims,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub n_negatives: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Compute validation hits@10 every this many epochs (0 = never).
    pub valid_every: usize,
}

impl TrainConfig {
    /// Hyperparameters shared by all models in the reference setup:
    /// lr 0.001, batch 128, 50 negatives.
    pub fn defaults(kind: ModelKind, dims: Dims, seed: u64) -> Self {
        TrainConfig {
            kind,
            dims,
            learning_rate: 0.001,
            batch_size: 128,
            n_negatives: 50,
            epochs: 500,
            seed,
            valid_every: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(KgError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size < 1 {
            return Err(KgError::Config("batch_size must be at least 1".into()));
        }
        if self.n_negatives < 1 {
            return Err(KgError::Config("n_negatives must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sparse per-row gradients for the parameter blocks touched by a batch.
#[derive(Debug, Default, Clone)]
pub struct GradientSet {
    pub entity_emb: HashMap<usize, Vec<f64>>,
    pub relation_vec: HashMap<usize, Vec<f64>>,
    pub relation_diag: HashMap<usize, Vec<f64>>,
    pub relation_emb: HashMap<usize, Vec<f64>>,
    /// Dense; the core tensor is touched by every TuckER batch.
    pub core_tensor: Option<Vec<f64>>,
    pub bias_s: HashMap<usize, f64>,
    pub bias_o: HashMap<usize, f64>,
}

impl GradientSet {
    fn add_row(map: &mut HashMap<usize, Vec<f64>>, idx: usize, dim: usize) -> &mut [f64] {
        map.entry(idx).or_insert_with(|| vec![0.0; dim])
    }

    /// Accumulates another gradient set. Used to reduce per-chunk partials
    /// in fixed chunk order.
    pub fn merge(&mut self, other: GradientSet) {
        fn merge_rows(into: &mut HashMap<usize, Vec<f64>>, from: HashMap<usize, Vec<f64>>) {
            for (idx, row) in from {
                match into.get_mut(&idx) {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&row) {
                            *a += b;
                        }
                    }
                    None => {
                        into.insert(idx, row);
                    }
                }
            }
        }
        merge_rows(&mut self.entity_emb, other.entity_emb);
        merge_rows(&mut self.relation_vec, other.relation_vec);
        merge_rows(&mut self.relation_diag, other.relation_diag);
        merge_rows(&mut self.relation_emb, other.relation_emb);
        if let Some(from) = other.core_tensor {
            match &mut self.core_tensor {
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&from) {
                        *a += b;
                    }
                }
                None => self.core_tensor = Some(from),
            }
        }
        for (idx, g) in other.bias_s {
            *self.bias_s.entry(idx).or_insert(0.0) += g;
        }
        for (idx, g) in other.bias_o {
            *self.bias_o.entry(idx).or_insert(0.0) += g;
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        let check = |map: &HashMap<usize, Vec<f64>>, block: &'static str| -> Result<()> {
            for (&row, vals) in map {
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(KgError::NonFiniteGradient { block, row });
                }
            }
            Ok(())
        };
        check(&self.entity_emb, "entity_emb")?;
        check(&self.relation_vec, "relation_vec")?;
        check(&self.relation_diag, "relation_diag")?;
        check(&self.relation_emb, "relation_emb")?;
        if let Some(core) = &self.core_tensor {
            if core.iter().any(|v| !v.is_finite()) {
                return Err(KgError::NonFiniteGradient {
                    block: "core_tensor",
                    row: 0,
                });
            }
        }
        for (&row, g) in self.bias_s.iter().chain(&self.bias_o) {
            if !g.is_finite() {
                return Err(KgError::NonFiniteGradient { block: "bias", row });
            }
        }
        Ok(())
    }
}

/// Adam moment accumulators, shaped like the parameters they track.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub t: u64,
    m_entity: Matrix,
    v_entity: Matrix,
    m_rvec: Matrix,
    v_rvec: Matrix,
    m_rdiag: Matrix,
    v_rdiag: Matrix,
    m_remb: Matrix,
    v_remb: Matrix,
    m_core: Tensor3,
    v_core: Tensor3,
    m_bias_s: Vec<f64>,
    v_bias_s: Vec<f64>,
    m_bias_o: Vec<f64>,
    v_bias_o: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let like_m = |m: &Matrix| Matrix::zeros(m.rows, m.cols);
        let like_t = |t: &Tensor3| Tensor3::zeros(t.d1, t.d2, t.d3);
        AdamState {
            t: 0,
            m_entity: like_m(&params.entity_emb),
            v_entity: like_m(&params.entity_emb),
            m_rvec: like_m(&params.relation_vec),
            v_rvec: like_m(&params.relation_vec),
            m_rdiag: like_m(&params.relation_diag),
            v_rdiag: like_m(&params.relation_diag),
            m_remb: like_m(&params.relation_emb),
            v_remb: like_m(&params.relation_emb),
            m_core: like_t(&params.core_tensor),
            v_core: like_t(&params.core_tensor),
            m_bias_s: vec![0.0; params.bias_s.len()],
            v_bias_s: vec![0.0; params.bias_s.len()],
            m_bias_o: vec![0.0; params.bias_o.len()],
            v_bias_o: vec![0.0; params.bias_o.len()],
        }
    }
}

/// One epoch's record in the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
    pub valid_hits_at_10: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

/// Draws `n` corrupted triples for one positive: object slot for even draw
/// indices, subject slot for odd ones, uniform over entities. A draw that
/// reproduces the positive itself is retried.
pub fn sample_negatives(
    triple: Triple,
    n: usize,
    n_e: usize,
    rng: &mut impl Rng,
) -> Vec<Triple> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let corrupt_object = i % 2 == 0;
        loop {
            let e = rng.random_range(0..n_e) as EntityId;
            let cand = if corrupt_object {
                Triple { o: e, ..triple }
            } else {
                Triple { s: e, ..triple }
            };
            if cand != triple {
                out.push(cand);
                break;
            }
            // only possible when the drawn entity recreated the positive
            if n_e == 1 {
                out.push(cand);
                break;
            }
        }
    }
    out
}

/// Numerically stable mean binary cross-entropy of pre-sigmoid scores.
pub fn bce_loss(phis: &[f64], labels: &[f64]) -> Result<f64> {
    if phis.len() != labels.len() {
        return Err(KgError::ShapeMismatch {
            left: phis.len(),
            right: labels.len(),
        });
    }
    let mut acc = 0.0;
    for (&phi, &y) in phis.iter().zip(labels) {
        // -[y log s + (1-y) log(1-s)] = max(phi,0) - phi*y + log(1+exp(-|phi|))
        acc += phi.max(0.0) - phi * y + (-phi.abs()).exp().ln_1p();
    }
    Ok(acc / phis.len().max(1) as f64)
}

fn sample_gradient(
    params: &ModelParams,
    triple: Triple,
    coeff: f64,
    grads: &mut GradientSet,
) {
    let d_e = params.dims.d_e;
    let s = triple.s as usize;
    let r = triple.r as usize;
    let o = triple.o as usize;
    let es: Vec<f64> = params.entity_emb.row(s).to_vec();
    let eo: Vec<f64> = params.entity_emb.row(o).to_vec();
    match params.kind {
        ModelKind::TransE | ModelKind::MuReI => {
            let rv = params.relation_vec.row(r);
            let gs = GradientSet::add_row(&mut grads.entity_emb, s, d_e);
            let mut diff = vec![0.0; d_e];
            for i in 0..d_e {
                diff[i] = es[i] + rv[i] - eo[i];
                gs[i] += -2.0 * coeff * diff[i];
            }
            let gr = GradientSet::add_row(&mut grads.relation_vec, r, d_e);
            for i in 0..d_e {
                gr[i] += -2.0 * coeff * diff[i];
            }
            let go = GradientSet::add_row(&mut grads.entity_emb, o, d_e);
            for i in 0..d_e {
                go[i] += 2.0 * coeff * diff[i];
            }
            if params.kind == ModelKind::MuReI {
                *grads.bias_s.entry(s).or_insert(0.0) += coeff;
                *grads.bias_o.entry(o).or_insert(0.0) += coeff;
            }
        }
        ModelKind::DistMult => {
            let diag = params.relation_diag.row(r);
            let gs = GradientSet::add_row(&mut grads.entity_emb, s, d_e);
            for i in 0..d_e {
                gs[i] += coeff * diag[i] * eo[i];
            }
            let gd = GradientSet::add_row(&mut grads.relation_diag, r, d_e);
            for i in 0..d_e {
                gd[i] += coeff * es[i] * eo[i];
            }
            let go = GradientSet::add_row(&mut grads.entity_emb, o, d_e);
            for i in 0..d_e {
                go[i] += coeff * diag[i] * es[i];
            }
        }
        ModelKind::TuckEr => {
            let core = &params.core_tensor;
            let re: Vec<f64> = params.relation_emb.row(r).to_vec();
            let d_r = params.dims.d_r;
            let gcore = grads
                .core_tensor
                .get_or_insert_with(|| vec![0.0; core.data.len()]);
            let mut g_es = vec![0.0; d_e];
            let mut g_re = vec![0.0; d_r];
            let mut g_eo = vec![0.0; d_e];
            for i in 0..d_e {
                for k in 0..d_r {
                    let base = (i * d_r + k) * d_e;
                    let w_slice = &core.data[base..base + d_e];
                    let g_slice = &mut gcore[base..base + d_e];
                    let esi_rk = es[i] * re[k];
                    let mut dot_w_eo = 0.0;
                    for j in 0..d_e {
                        dot_w_eo += w_slice[j] * eo[j];
                        g_slice[j] += coeff * esi_rk * eo[j];
                        g_eo[j] += coeff * w_slice[j] * esi_rk;
                    }
                    g_es[i] += re[k] * dot_w_eo;
                    g_re[k] += es[i] * dot_w_eo;
                }
            }
            let gs = GradientSet::add_row(&mut grads.entity_emb, s, d_e);
            for i in 0..d_e {
                gs[i] += coeff * g_es[i];
            }
            let gr = GradientSet::add_row(&mut grads.relation_emb, r, d_r);
            for k in 0..d_r {
                gr[k] += coeff * g_re[k];
            }
            let go = GradientSet::add_row(&mut grads.entity_emb, o, d_e);
            for j in 0..d_e {
                go[j] += g_eo[j];
            }
        }
        ModelKind::MuRe => {
            let rv = params.relation_vec.row(r);
            let diag = params.relation_diag.row(r);
            let mut diff = vec![0.0; d_e];
            for i in 0..d_e {
                diff[i] = diag[i] * es[i] + rv[i] - eo[i];
            }
            let gs = GradientSet::add_row(&mut grads.entity_emb, s, d_e);
            for i in 0..d_e {
                gs[i] += -2.0 * coeff * diff[i] * diag[i];
            }
            let gd = GradientSet::add_row(&mut grads.relation_diag, r, d_e);
            for i in 0..d_e {
                gd[i] += -2.0 * coeff * diff[i] * es[i];
            }
            let gr = GradientSet::add_row(&mut grads.relation_vec, r, d_e);
            for i in 0..d_e {
                gr[i] += -2.0 * coeff * diff[i];
            }
            let go = GradientSet::add_row(&mut grads.entity_emb, o, d_e);
            for i in 0..d_e {
                go[i] += 2.0 * coeff * diff[i];
            }
            *grads.bias_s.entry(s).or_insert(0.0) += coeff;
            *grads.bias_o.entry(o).or_insert(0.0) += coeff;
        }
    }
}

/// Analytic gradient of the mean BCE over a labeled batch with respect to
/// every touched parameter row.
pub fn gradients(params: &ModelParams, batch: &[(Triple, f64)]) -> Result<GradientSet> {
    let inv_n = 1.0 / batch.len() as f64;
    let chunks: Vec<&[(Triple, f64)]> = batch.chunks(GRAD_CHUNK).collect();
    let partials: Vec<Result<GradientSet>> = parallel::map_ordered(&chunks, |chunk| {
        let mut grads = GradientSet::default();
        for &(triple, label) in chunk.iter() {
            let phi = crate::models::score(params, triple.s, triple.r, triple.o)?;
            // d(mean BCE)/d phi
            let coeff = (sigmoid(phi) - label) * inv_n;
            sample_gradient(params, triple, coeff, &mut grads);
        }
        Ok(grads)
    });
    let mut total = GradientSet::default();
    for partial in partials {
        total.merge(partial?);
    }
    Ok(total)
}

/// Sequential twin of [`gradients`]; same chunking and reduction order, so
/// the result is bitwise identical.
pub fn gradients_seq(params: &ModelParams, batch: &[(Triple, f64)]) -> Result<GradientSet> {
    let inv_n = 1.0 / batch.len() as f64;
    let chunks: Vec<&[(Triple, f64)]> = batch.chunks(GRAD_CHUNK).collect();
    let partials: Vec<Result<GradientSet>> = parallel::map_ordered_seq(&chunks, |chunk| {
        let mut grads = GradientSet::default();
        for &(triple, label) in chunk.iter() {
            let phi = crate::models::score(params, triple.s, triple.r, triple.o)?;
            let coeff = (sigmoid(phi) - label) * inv_n;
            sample_gradient(params, triple, coeff, &mut grads);
        }
        Ok(grads)
    });
    let mut total = GradientSet::default();
    for partial in partials {
        total.merge(partial?);
    }
    Ok(total)
}

/// Mean BCE of a labeled batch under the current parameters.
pub fn batch_loss(params: &ModelParams, batch: &[(Triple, f64)]) -> Result<f64> {
    let mut phis = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    for &(t, y) in batch {
        phis.push(crate::models::score(params, t.s, t.r, t.o)?);
        labels.push(y);
    }
    bce_loss(&phis, &labels)
}

#[inline]
fn adam_update(
    theta: &mut f64,
    m: &mut f64,
    v: &mut f64,
    g: f64,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *theta -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
}

/// Standard Adam step with bias correction, applied only to the rows
/// present in the gradient set.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    grads.check_finite()?;
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);

    let step_rows = |theta: &mut Matrix,
                         m: &mut Matrix,
                         v: &mut Matrix,
                         rows: &HashMap<usize, Vec<f64>>| {
        let mut idxs: Vec<&usize> = rows.keys().collect();
        idxs.sort_unstable();
        for &row in idxs {
            let g_row = &rows[&row];
            let t_row = theta.row_mut(row);
            let m_row = m.row_mut(row);
            let v_row = v.row_mut(row);
            for i in 0..g_row.len() {
                adam_update(
                    &mut t_row[i],
                    &mut m_row[i],
                    &mut v_row[i],
                    g_row[i],
                    lr,
                    bc1,
                    bc2,
                );
            }
        }
    };
    step_rows(
        &mut params.entity_emb,
        &mut state.m_entity,
        &mut state.v_entity,
        &grads.entity_emb,
    );
    step_rows(
        &mut params.relation_vec,
        &mut state.m_rvec,
        &mut state.v_rvec,
        &grads.relation_vec,
    );
    step_rows(
        &mut params.relation_diag,
        &mut state.m_rdiag,
        &mut state.v_rdiag,
        &grads.relation_diag,
    );
    step_rows(
        &mut params.relation_emb,
        &mut state.m_remb,
        &mut state.v_remb,
        &grads.relation_emb,
    );
    if let Some(gcore) = &grads.core_tensor {
        for i in 0..gcore.len() {
            adam_update(
                &mut params.core_tensor.data[i],
                &mut state.m_core.data[i],
                &mut state.v_core.data[i],
                gcore[i],
                lr,
                bc1,
                bc2,
            );
        }
    }
    let step_scalar =
        |theta: &mut [f64], m: &mut [f64], v: &mut [f64], rows: &HashMap<usize, f64>| {
            let mut idxs: Vec<usize> = rows.keys().copied().collect();
            idxs.sort_unstable();
            for i in idxs {
                adam_update(&mut theta[i], &mut m[i], &mut v[i], rows[&i], lr, bc1, bc2);
            }
        };
    step_scalar(
        &mut params.bias_s,
        &mut state.m_bias_s,
        &mut state.v_bias_s,
        &grads.bias_s,
    );
    step_scalar(
        &mut params.bias_o,
        &mut state.m_bias_o,
        &mut state.v_bias_o,
        &grads.bias_o,
    );
    Ok(())
}

/// Runs the full training loop: seeded initialization, shuffled mini-batches
/// of positives each expanded with negatives, BCE gradients, Adam.
pub fn train(store: &TripleStore, config: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    train_with_progress(store, config, |_| {})
}

pub fn train_with_progress(
    store: &TripleStore,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ModelParams, TrainLog)> {
    config.validate()?;
    if store.train.is_empty() {
        return Err(KgError::Config("training split is empty".into()));
    }
    let mut params = init_params(config.kind, config.dims, config.seed);
    let mut state = AdamState::new(&params);
    let mut log = TrainLog::default();
    // Separate deterministic streams for shuffling and negative sampling.
    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut neg_rng = ChaCha12Rng::seed_from_u64(config.seed);
    neg_rng.set_stream(2);

    let n_e = config.dims.n_e;
    let mut order: Vec<Triple> = store.train.clone();
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for (batch_idx, positives) in order.chunks(config.batch_size).enumerate() {
            let mut batch: Vec<(Triple, f64)> =
                Vec::with_capacity(positives.len() * (1 + config.n_negatives));
            for &pos in positives {
                batch.push((pos, 1.0));
                for neg in sample_negatives(pos, config.n_negatives, n_e, &mut neg_rng) {
                    batch.push((neg, 0.0));
                }
            }
            let loss = batch_loss(&params, &batch).map_err(|e| KgError::TrainingAborted {
                epoch,
                batch: batch_idx,
                reason: e.to_string(),
            })?;
            if !loss.is_finite() {
                return Err(KgError::TrainingAborted {
                    epoch,
                    batch: batch_idx,
                    reason: "non-finite loss".into(),
                });
            }
            let grads = gradients(&params, &batch)?;
            adam_step(&mut params, &grads, &mut state, config.learning_rate).map_err(|e| {
                KgError::TrainingAborted {
                    epoch,
                    batch: batch_idx,
                    reason: e.to_string(),
                }
            })?;
            loss_sum += loss;
            n_batches += 1;
        }
        let valid_hits = if config.valid_every > 0
            && epoch % config.valid_every == 0
            && !store.valid.is_empty()
        {
            Some(overall_hits_at_10(&params, store, Split::Valid)?)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / n_batches.max(1) as f64,
            seconds: start.elapsed().as_secs_f64(),
            valid_hits_at_10: valid_hits,
        };
        on_epoch(&record);
        log.epochs.push(record);
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocab, encode_store, RawTriple};
    use crate::models::{score, ALL_MODEL_KINDS};

    #[test]
    fn negatives_alternate_slots() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let pos = Triple { s: 0, r: 0, o: 1 };
        let negs = sample_negatives(pos, 2, 5, &mut rng);
        assert_eq!(negs.len(), 2);
        assert_eq!(negs[0].s, pos.s); // object corrupted
        assert_eq!(negs[1].o, pos.o); // subject corrupted
        assert!(negs.iter().all(|&n| n != pos));
    }

    #[test]
    fn negatives_deterministic() {
        let pos = Triple { s: 2, r: 1, o: 3 };
        let mut a = ChaCha12Rng::seed_from_u64(99);
        let mut b = ChaCha12Rng::seed_from_u64(99);
        assert_eq!(
            sample_negatives(pos, 20, 10, &mut a),
            sample_negatives(pos, 20, 10, &mut b)
        );
    }

    #[test]
    fn negative_entity_frequencies_uniform() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let pos = Triple { s: 11, r: 0, o: 12 };
        let n_e = 10;
        let draws = 100_000;
        let mut counts = vec![0usize; n_e];
        // subject and object ids sit outside 0..n_e so no draw is rejected
        let negs = sample_negatives(pos, draws, n_e, &mut rng);
        for n in negs {
            let corrupted = if n.o != pos.o { n.o } else { n.s };
            counts[corrupted as usize] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn bce_half_is_ln2() {
        let loss = bce_loss(&[0.0], &[1.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_saturated() {
        let loss = bce_loss(&[50.0], &[1.0]).unwrap();
        assert!(loss < 1e-20);
        // no overflow at |phi| = 700
        assert!(bce_loss(&[700.0], &[0.0]).unwrap().is_finite());
        assert!(bce_loss(&[-700.0], &[1.0]).unwrap().is_finite());
    }

    #[test]
    fn bce_matches_naive_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let phis: Vec<f64> = (0..100).map(|_| rng.random_range(-10.0..10.0)).collect();
        let labels: Vec<f64> = (0..100)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        // naive formulation is accurate for moderate |phi|
        let naive: f64 = phis
            .iter()
            .zip(&labels)
            .map(|(&phi, &y)| {
                let s = 1.0 / (1.0 + (-phi).exp());
                -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
            })
            .sum::<f64>()
            / 100.0;
        assert!((bce_loss(&phis, &labels).unwrap() - naive).abs() < 1e-10);
    }

    #[test]
    fn bce_shape_mismatch() {
        assert!(matches!(
            bce_loss(&[0.0, 1.0], &[1.0]),
            Err(KgError::ShapeMismatch { .. })
        ));
    }

    fn small_dims() -> Dims {
        Dims {
            d_e: 4,
            d_r: 3,
            n_e: 6,
            n_r: 2,
        }
    }

    fn random_batch(rng: &mut ChaCha12Rng, dims: Dims, n: usize) -> Vec<(Triple, f64)> {
        (0..n)
            .map(|_| {
                (
                    Triple {
                        s: rng.random_range(0..dims.n_e) as u32,
                        r: rng.random_range(0..dims.n_r) as u32,
                        o: rng.random_range(0..dims.n_e) as u32,
                    },
                    if rng.random_bool(0.5) { 1.0 } else { 0.0 },
                )
            })
            .collect()
    }

    /// Central finite difference of the batch loss for one parameter slot.
    fn fd_partial(
        params: &ModelParams,
        batch: &[(Triple, f64)],
        poke: impl Fn(&mut ModelParams, f64),
    ) -> f64 {
        let h = 1e-5;
        let mut plus = params.clone();
        poke(&mut plus, h);
        let mut minus = params.clone();
        poke(&mut minus, -h);
        (batch_loss(&plus, batch).unwrap() - batch_loss(&minus, batch).unwrap()) / (2.0 * h)
    }

    fn assert_close(analytic: f64, numeric: f64, what: &str) {
        // the floor absorbs central-difference rounding noise, which is of
        // order eps * |loss| / (2h) ~ 1e-11 in absolute terms
        let scale = analytic.abs().max(numeric.abs()).max(1e-6);
        let rel = (analytic - numeric).abs() / scale;
        assert!(
            rel < 1e-4,
            "{what}: analytic {analytic} vs fd {numeric} (rel {rel})"
        );
    }

    #[test]
    fn gradients_match_finite_differences_all_models() {
        let dims = small_dims();
        for kind in ALL_MODEL_KINDS {
            let mut rng = ChaCha12Rng::seed_from_u64(kind as u64 + 1);
            let params = init_params(kind, dims, 7 + kind as u64);
            let batch = random_batch(&mut rng, dims, 12);
            let grads = gradients(&params, &batch).unwrap();

            for (&row, g_row) in &grads.entity_emb {
                for i in 0..dims.d_e {
                    let fd = fd_partial(&params, &batch, |p, h| p.entity_emb.row_mut(row)[i] += h);
                    assert_close(g_row[i], fd, &format!("{kind:?} entity_emb[{row}][{i}]"));
                }
            }
            for (&row, g_row) in &grads.relation_vec {
                for i in 0..dims.d_e {
                    let fd =
                        fd_partial(&params, &batch, |p, h| p.relation_vec.row_mut(row)[i] += h);
                    assert_close(g_row[i], fd, &format!("{kind:?} relation_vec[{row}][{i}]"));
                }
            }
            for (&row, g_row) in &grads.relation_diag {
                for i in 0..dims.d_e {
                    let fd =
                        fd_partial(&params, &batch, |p, h| p.relation_diag.row_mut(row)[i] += h);
                    assert_close(g_row[i], fd, &format!("{kind:?} relation_diag[{row}][{i}]"));
                }
            }
            for (&row, g_row) in &grads.relation_emb {
                for k in 0..dims.d_r {
                    let fd =
                        fd_partial(&params, &batch, |p, h| p.relation_emb.row_mut(row)[k] += h);
                    assert_close(g_row[k], fd, &format!("{kind:?} relation_emb[{row}][{k}]"));
                }
            }
            if let Some(gcore) = &grads.core_tensor {
                // spot-check a deterministic subset of core entries
                for idx in (0..gcore.len()).step_by(7) {
                    let fd = fd_partial(&params, &batch, |p, h| p.core_tensor.data[idx] += h);
                    assert_close(gcore[idx], fd, &format!("{kind:?} core[{idx}]"));
                }
            }
            for (&i, &g) in &grads.bias_s {
                let fd = fd_partial(&params, &batch, |p, h| p.bias_s[i] += h);
                assert_close(g, fd, &format!("{kind:?} bias_s[{i}]"));
            }
            for (&i, &g) in &grads.bias_o {
                let fd = fd_partial(&params, &batch, |p, h| p.bias_o[i] += h);
                assert_close(g, fd, &format!("{kind:?} bias_o[{i}]"));
            }
        }
    }

    #[test]
    fn saturated_batch_gradients_vanish() {
        let dims = small_dims();
        let mut params = init_params(ModelKind::MuReI, dims, 1);
        // drive sigma(phi) -> 1 on the positives via large biases
        params.bias_s.fill(30.0);
        params.bias_o.fill(30.0);
        let batch = vec![(Triple { s: 0, r: 0, o: 1 }, 1.0)];
        let grads = gradients(&params, &batch).unwrap();
        for g_row in grads.entity_emb.values().chain(grads.relation_vec.values()) {
            assert!(g_row.iter().all(|g| g.abs() < 1e-8));
        }
        for g in grads.bias_s.values().chain(grads.bias_o.values()) {
            assert!(g.abs() < 1e-8);
        }
    }

    #[test]
    fn duplicated_triple_doubles_contribution() {
        let dims = small_dims();
        let params = init_params(ModelKind::DistMult, dims, 2);
        let t = (Triple { s: 1, r: 0, o: 2 }, 1.0);
        let single = gradients(&params, &[t]).unwrap();
        let double = gradients(&params, &[t, t]).unwrap();
        // sum over two identical samples is exactly double the singleton sum,
        // so after dividing by the batch size the means coincide
        for (&row, g1) in &single.entity_emb {
            let g2 = &double.entity_emb[&row];
            for i in 0..dims.d_e {
                assert!((g2[i] - g1[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let dims = Dims {
            d_e: 1,
            d_r: 1,
            n_e: 1,
            n_r: 1,
        };
        let mut params = init_params(ModelKind::TransE, dims, 0);
        let before = params.entity_emb.data[0];
        let mut state = AdamState::new(&params);
        let mut grads = GradientSet::default();
        grads.entity_emb.insert(0, vec![0.37]);
        adam_step(&mut params, &grads, &mut state, 0.01).unwrap();
        let delta = params.entity_emb.data[0] - before;
        // first bias-corrected step: -lr * g / (|g| + eps') ~ -lr * sign(g)
        assert!((delta + 0.01).abs() < 1e-4, "delta {delta}");
    }

    #[test]
    fn adam_untouched_rows_unchanged() {
        let dims = small_dims();
        let mut params = init_params(ModelKind::TransE, dims, 3);
        let before = params.clone();
        let mut state = AdamState::new(&params);
        let mut grads = GradientSet::default();
        grads.entity_emb.insert(2, vec![1.0; dims.d_e]);
        adam_step(&mut params, &grads, &mut state, 0.1).unwrap();
        for row in 0..dims.n_e {
            if row == 2 {
                assert_ne!(params.entity_emb.row(row), before.entity_emb.row(row));
            } else {
                assert_eq!(params.entity_emb.row(row), before.entity_emb.row(row));
            }
        }
        assert_eq!(params.relation_vec, before.relation_vec);
    }

    #[test]
    fn adam_matches_reference_trace_on_quadratic() {
        // minimize f(x) = 0.5 x^2 from x0 = 1; g = x
        let lr = 0.1;
        // independent reference implementation of Adam, scalar case
        let mut x_ref = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut trace = Vec::new();
        for t in 1..=3 {
            let g = x_ref;
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g;
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g;
            let mh = m / (1.0 - ADAM_BETA1.powi(t));
            let vh = v / (1.0 - ADAM_BETA2.powi(t));
            x_ref -= lr * mh / (vh.sqrt() + ADAM_EPS);
            trace.push(x_ref);
        }

        let dims = Dims {
            d_e: 1,
            d_r: 1,
            n_e: 1,
            n_r: 1,
        };
        let mut params = init_params(ModelKind::TransE, dims, 0);
        params.entity_emb.data[0] = 1.0;
        let mut state = AdamState::new(&params);
        for &expected in &trace {
            let mut grads = GradientSet::default();
            grads
                .entity_emb
                .insert(0, vec![params.entity_emb.data[0]]);
            adam_step(&mut params, &grads, &mut state, lr).unwrap();
            assert!((params.entity_emb.data[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let dims = small_dims();
        let mut params = init_params(ModelKind::TransE, dims, 0);
        let mut state = AdamState::new(&params);
        let mut grads = GradientSet::default();
        grads.entity_emb.insert(1, vec![f64::NAN; dims.d_e]);
        assert!(matches!(
            adam_step(&mut params, &grads, &mut state, 0.1),
            Err(KgError::NonFiniteGradient { row: 1, .. })
        ));
    }

    fn tiny_kg() -> (usize, usize, TripleStore) {
        // 8 entities, 2 relations, 12 triples
        let mk = |s: &str, r: &str, o: &str| RawTriple::new(s, r, o);
        let train = vec![
            mk("e0", "p", "e1"),
            mk("e1", "p", "e2"),
            mk("e2", "p", "e3"),
            mk("e3", "p", "e4"),
            mk("e4", "p", "e5"),
            mk("e5", "p", "e6"),
            mk("e6", "p", "e7"),
            mk("e0", "q", "e2"),
            mk("e2", "q", "e4"),
            mk("e4", "q", "e6"),
            mk("e6", "q", "e0"),
            mk("e1", "q", "e3"),
        ];
        let vocab = build_vocab(&train, &[], &[]);
        let store = encode_store(&vocab, &train, &[], &[]).unwrap();
        (vocab.n_entities(), vocab.n_relations(), store)
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (n_e, n_r, store) = tiny_kg();
        let dims = Dims {
            d_e: 4,
            d_r: 2,
            n_e,
            n_r,
        };
        let mut config = TrainConfig::defaults(ModelKind::MuRe, dims, 42);
        config.epochs = 0;
        let (params, log) = train(&store, &config).unwrap();
        assert_eq!(params, init_params(ModelKind::MuRe, dims, 42));
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn training_deterministic() {
        let (n_e, n_r, store) = tiny_kg();
        let dims = Dims {
            d_e: 4,
            d_r: 2,
            n_e,
            n_r,
        };
        let mut config = TrainConfig::defaults(ModelKind::DistMult, dims, 11);
        config.epochs = 3;
        let (a, _) = train(&store, &config).unwrap();
        let (b, _) = train(&store, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_kg_reaches_full_train_accuracy() {
        let (n_e, n_r, store) = tiny_kg();
        let dims = Dims {
            d_e: 8,
            d_r: 4,
            n_e,
            n_r,
        };
        let mut config = TrainConfig::defaults(ModelKind::MuRe, dims, 7);
        config.epochs = 3000;
        config.learning_rate = 0.01;
        // few negatives so the label prior does not swamp 12 positives
        config.n_negatives = 5;
        let (params, log) = train(&store, &config).unwrap();
        // every positive classified true at threshold 0.5
        for &t in &store.train {
            let phi = score(&params, t.s, t.r, t.o).unwrap();
            assert!(sigmoid(phi) > 0.5, "triple {t:?} phi {phi}");
        }
        assert!(log.epochs.iter().all(|e| e.mean_loss.is_finite()));
    }

    #[test]
    fn loss_mostly_decreasing_early() {
        let (n_e, n_r, store) = tiny_kg();
        let dims = Dims {
            d_e: 8,
            d_r: 4,
            n_e,
            n_r,
        };
        let mut config = TrainConfig::defaults(ModelKind::MuRe, dims, 7);
        config.epochs = 10;
        let (_, log) = train(&store, &config).unwrap();
        let losses: Vec<f64> = log.epochs.iter().map(|e| e.mean_loss).collect();
        let violations = losses
            .windows(2)
            .filter(|w| w[1] > w[0] + 1e-12)
            .count();
        assert!(violations <= 1, "losses {losses:?}");
    }
}
