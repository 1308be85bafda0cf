//! Ranking evaluation (hits@k, MRR, per-relation breakdown) and the
//! independent-prediction protocol (per-relation accuracy over known truths
//! plus counts of "other" positive predictions).

use std::collections::HashMap;

use crate::data::{split_flags, EntityId, RelationId, RelationTaxonomy, Split, Triple, TripleStore};
use crate::error::Result;
use crate::models::{score_all_objects, score_all_subjects, sigmoid, ModelParams};
use crate::parallel;

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub filtered: bool,
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: vec![10],
            filtered: true,
            split: Split::Test,
        }
    }
}

/// Subject- and object-side ranks of one evaluation triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankRecord {
    pub triple: Triple,
    pub subject_side_rank: usize,
    pub object_side_rank: usize,
}

/// One row of the per-relation ranking report.
#[derive(Debug, Clone)]
pub struct RelationMetrics {
    pub relation: RelationId,
    pub label: String,
    pub relation_type: Option<String>,
    /// Fraction of training triples with this relation.
    pub train_fraction: f64,
    /// Number of evaluation-split triples with this relation.
    pub test_count: usize,
    /// hits@k aligned with `EvalConfig::ks`.
    pub hits: Vec<f64>,
    pub mrr: f64,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub ks: Vec<usize>,
    pub filtered: bool,
    pub split: Split,
    pub per_relation: Vec<RelationMetrics>,
    /// Triple-weighted aggregate over all relations (including any without
    /// a taxonomy label).
    pub overall_hits: Vec<f64>,
    pub overall_mrr: f64,
    pub total_test_count: usize,
}

/// Ranks one triple against all candidate objects and all candidate
/// subjects.
///
/// Rank = 1 + number of candidates scoring strictly higher than the true
/// entity, plus candidates tying it (pessimistic tie-breaking). With
/// `filtered`, candidates forming known true triples in any split, other
/// than the evaluated triple itself, do not compete.
pub fn rank_triple(
    params: &ModelParams,
    triple: Triple,
    store: &TripleStore,
    filtered: bool,
) -> Result<RankRecord> {
    let obj_scores = score_all_objects(params, triple.s, triple.r)?;
    let subj_scores = score_all_subjects(params, triple.r, triple.o)?;
    let object_side_rank = rank_from_scores(
        &obj_scores,
        triple.o,
        filtered.then(|| store.objects_of(triple.s, triple.r)).flatten(),
    );
    let subject_side_rank = rank_from_scores(
        &subj_scores,
        triple.s,
        filtered.then(|| store.subjects_of(triple.r, triple.o)).flatten(),
    );
    Ok(RankRecord {
        triple,
        subject_side_rank,
        object_side_rank,
    })
}

fn rank_from_scores(
    scores: &[f64],
    true_id: EntityId,
    known_true: Option<&HashMap<EntityId, u8>>,
) -> usize {
    let target = scores[true_id as usize];
    let mut rank = 1usize;
    for (i, &sc) in scores.iter().enumerate() {
        if i == true_id as usize {
            continue;
        }
        if let Some(known) = known_true {
            if known.contains_key(&(i as EntityId)) {
                continue;
            }
        }
        if sc >= target {
            rank += 1;
        }
    }
    rank
}

/// Ranks every triple of the evaluation split. Triples are processed in
/// parallel; output order matches split order.
pub fn rank_split(
    params: &ModelParams,
    store: &TripleStore,
    split: Split,
    filtered: bool,
) -> Result<Vec<RankRecord>> {
    let triples = store.split(split);
    parallel::map_ordered(triples, |&t| rank_triple(params, t, store, filtered))
        .into_iter()
        .collect()
}

/// Sequential variant of [`rank_split`], for benchmarking against the
/// parallel path.
pub fn rank_split_seq(
    params: &ModelParams,
    store: &TripleStore,
    split: Split,
    filtered: bool,
) -> Result<Vec<RankRecord>> {
    let triples = store.split(split);
    parallel::map_ordered_seq(triples, |&t| rank_triple(params, t, store, filtered))
        .into_iter()
        .collect()
}

/// Aggregates rank records into the per-relation ranking report.
///
/// hits@k for a relation is the mean over its triples of
/// `([object rank <= k] + [subject rank <= k]) / 2`; the overall row is the
/// mean over all `2 * |split|` individual ranks.
pub fn aggregate_ranks(
    records: &[RankRecord],
    train: &[Triple],
    taxonomy: Option<&RelationTaxonomy>,
    relation_labels: &[String],
    config: &EvalConfig,
) -> MetricsReport {
    let mut train_counts: HashMap<RelationId, usize> = HashMap::new();
    for t in train {
        *train_counts.entry(t.r).or_insert(0) += 1;
    }
    let train_total = train.len().max(1) as f64;

    let mut by_relation: HashMap<RelationId, Vec<&RankRecord>> = HashMap::new();
    for rec in records {
        by_relation.entry(rec.triple.r).or_default().push(rec);
    }
    let mut relations: Vec<RelationId> = by_relation.keys().copied().collect();
    relations.sort_unstable();

    let mut per_relation = Vec::new();
    let mut overall_hits = vec![0.0; config.ks.len()];
    let mut overall_mrr = 0.0;
    for r in relations {
        let recs = &by_relation[&r];
        let n = recs.len() as f64;
        let mut hits = vec![0.0; config.ks.len()];
        let mut mrr = 0.0;
        for rec in recs {
            for (hi, &k) in hits.iter_mut().zip(&config.ks) {
                *hi += ((rec.object_side_rank <= k) as u32 + (rec.subject_side_rank <= k) as u32)
                    as f64
                    / 2.0;
            }
            mrr += (1.0 / rec.object_side_rank as f64 + 1.0 / rec.subject_side_rank as f64) / 2.0;
        }
        for (oh, h) in overall_hits.iter_mut().zip(&hits) {
            *oh += h;
        }
        overall_mrr += mrr;
        per_relation.push(RelationMetrics {
            relation: r,
            label: relation_labels[r as usize].clone(),
            relation_type: taxonomy
                .and_then(|t| t.get(r))
                .map(|ty| ty.to_string()),
            train_fraction: *train_counts.get(&r).unwrap_or(&0) as f64 / train_total,
            test_count: recs.len(),
            hits: hits.iter().map(|h| h / n).collect(),
            mrr: mrr / n,
        });
    }
    let total = records.len().max(1) as f64;
    MetricsReport {
        ks: config.ks.clone(),
        filtered: config.filtered,
        split: config.split,
        per_relation,
        overall_hits: overall_hits.iter().map(|h| h / total).collect(),
        overall_mrr: overall_mrr / total,
        total_test_count: records.len(),
    }
}

/// Full ranking evaluation of a split.
pub fn ranking_report(
    params: &ModelParams,
    store: &TripleStore,
    taxonomy: Option<&RelationTaxonomy>,
    relation_labels: &[String],
    config: &EvalConfig,
) -> Result<MetricsReport> {
    let records = rank_split(params, store, config.split, config.filtered)?;
    Ok(aggregate_ranks(
        &records,
        &store.train,
        taxonomy,
        relation_labels,
        config,
    ))
}

/// Convenience: overall filtered hits@10 on a split (used for validation
/// snapshots during training).
pub fn overall_hits_at_10(params: &ModelParams, store: &TripleStore, split: Split) -> Result<f64> {
    let records = rank_split(params, store, split, true)?;
    let total = records.len().max(1) as f64;
    let hits: f64 = records
        .iter()
        .map(|r| {
            ((r.object_side_rank <= 10) as u32 + (r.subject_side_rank <= 10) as u32) as f64 / 2.0
        })
        .sum();
    Ok(hits / total)
}

/// Candidate classes of the independent-prediction protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TruthClass {
    /// In the training split.
    TrainTrue,
    /// In the validation or test split (and not in training).
    TestValidTrue,
    /// Not present in any split.
    Other,
}

impl TruthClass {
    pub fn name(self) -> &'static str {
        match self {
            TruthClass::TrainTrue => "train",
            TruthClass::TestValidTrue => "test_valid",
            TruthClass::Other => "other",
        }
    }
}

pub const HISTOGRAM_BINS: usize = 50;

/// Per-relation results of the independent-prediction protocol.
#[derive(Debug, Clone)]
pub struct RelationPredictionStats {
    pub relation: RelationId,
    pub label: String,
    pub n_pairs: usize,
    pub train_total: usize,
    pub train_positive: usize,
    pub test_total: usize,
    pub test_positive: usize,
    pub other_positive: usize,
    /// Probability histograms over fixed-width bins of [0, 1], one per
    /// truth class: (train, test/valid, other).
    pub histograms: [Vec<usize>; 3],
}

impl RelationPredictionStats {
    pub fn train_accuracy(&self) -> f64 {
        self.train_positive as f64 / self.train_total.max(1) as f64
    }

    pub fn test_accuracy(&self) -> f64 {
        self.test_positive as f64 / self.test_total.max(1) as f64
    }

    pub fn avg_other_truths(&self) -> f64 {
        self.other_positive as f64 / self.n_pairs.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct PredictionStats {
    pub threshold: f64,
    pub bins: usize,
    pub per_relation: Vec<RelationPredictionStats>,
}

impl PredictionStats {
    fn totals(&self) -> (usize, usize, usize, usize, usize, usize) {
        let mut t = (0, 0, 0, 0, 0, 0);
        for r in &self.per_relation {
            t.0 += r.train_total;
            t.1 += r.train_positive;
            t.2 += r.test_total;
            t.3 += r.test_positive;
            t.4 += r.other_positive;
            t.5 += r.n_pairs;
        }
        t
    }

    pub fn overall_train_accuracy(&self) -> f64 {
        let t = self.totals();
        t.1 as f64 / t.0.max(1) as f64
    }

    pub fn overall_test_accuracy(&self) -> f64 {
        let t = self.totals();
        t.3 as f64 / t.2.max(1) as f64
    }

    pub fn overall_avg_other_truths(&self) -> f64 {
        let t = self.totals();
        t.4 as f64 / t.5.max(1) as f64
    }
}

fn bin_of(p: f64, bins: usize) -> usize {
    // p in [0,1]; p == 1.0 lands in the last bin.
    ((p * bins as f64) as usize).min(bins - 1)
}

/// Runs the independent-prediction protocol: for every distinct `(s, r)`
/// pair in the test split, scores all candidate objects, classifies each as
/// train-true / test-or-valid-true / other, and accumulates positive
/// prediction counts and probability histograms per relation.
pub fn prediction_stats(
    params: &ModelParams,
    store: &TripleStore,
    relation_labels: &[String],
    threshold: f64,
    bins: usize,
) -> Result<PredictionStats> {
    let mut pairs: Vec<(EntityId, RelationId)> =
        store.test.iter().map(|t| (t.s, t.r)).collect();
    pairs.sort_unstable();
    pairs.dedup();

    struct PairStats {
        r: RelationId,
        train_total: usize,
        train_positive: usize,
        test_total: usize,
        test_positive: usize,
        other_positive: usize,
        histograms: [Vec<usize>; 3],
    }

    let results: Vec<Result<PairStats>> = parallel::map_ordered(&pairs, |&(s, r)| {
        let scores = score_all_objects(params, s, r)?;
        let known = store.objects_of(s, r);
        let mut ps = PairStats {
            r,
            train_total: 0,
            train_positive: 0,
            test_total: 0,
            test_positive: 0,
            other_positive: 0,
            histograms: [vec![0; bins], vec![0; bins], vec![0; bins]],
        };
        for (o, &phi) in scores.iter().enumerate() {
            let flags = known
                .and_then(|m| m.get(&(o as EntityId)))
                .copied()
                .unwrap_or(0);
            let class = if flags & split_flags::TRAIN != 0 {
                TruthClass::TrainTrue
            } else if flags != 0 {
                TruthClass::TestValidTrue
            } else {
                TruthClass::Other
            };
            let p = sigmoid(phi);
            let positive = p > threshold;
            match class {
                TruthClass::TrainTrue => {
                    ps.train_total += 1;
                    ps.train_positive += positive as usize;
                    ps.histograms[0][bin_of(p, bins)] += 1;
                }
                TruthClass::TestValidTrue => {
                    ps.test_total += 1;
                    ps.test_positive += positive as usize;
                    ps.histograms[1][bin_of(p, bins)] += 1;
                }
                TruthClass::Other => {
                    ps.other_positive += positive as usize;
                    ps.histograms[2][bin_of(p, bins)] += 1;
                }
            }
        }
        Ok(ps)
    });

    let mut by_relation: HashMap<RelationId, RelationPredictionStats> = HashMap::new();
    for res in results {
        let ps = res?;
        let entry = by_relation
            .entry(ps.r)
            .or_insert_with(|| RelationPredictionStats {
                relation: ps.r,
                label: relation_labels[ps.r as usize].clone(),
                n_pairs: 0,
                train_total: 0,
                train_positive: 0,
                test_total: 0,
                test_positive: 0,
                other_positive: 0,
                histograms: [vec![0; bins], vec![0; bins], vec![0; bins]],
            });
        entry.n_pairs += 1;
        entry.train_total += ps.train_total;
        entry.train_positive += ps.train_positive;
        entry.test_total += ps.test_total;
        entry.test_positive += ps.test_positive;
        entry.other_positive += ps.other_positive;
        for c in 0..3 {
            for (acc, v) in entry.histograms[c].iter_mut().zip(&ps.histograms[c]) {
                *acc += v;
            }
        }
    }
    let mut per_relation: Vec<RelationPredictionStats> = by_relation.into_values().collect();
    per_relation.sort_by_key(|r| r.relation);
    Ok(PredictionStats {
        threshold,
        bins,
        per_relation,
    })
}

/// One histogram row: `(relation label, class, bin_lo, bin_hi, count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRow {
    pub relation: String,
    pub class: &'static str,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

/// Flattens prediction histograms into tabular rows, optionally re-binning
/// to a coarser bin count (which must divide the stored one).
pub fn histogram_export(stats: &PredictionStats, bins: usize) -> Vec<HistogramRow> {
    assert!(bins >= 2 && stats.bins % bins == 0, "bin count must divide {}", stats.bins);
    let factor = stats.bins / bins;
    let classes = [
        TruthClass::TrainTrue,
        TruthClass::TestValidTrue,
        TruthClass::Other,
    ];
    let mut rows = Vec::new();
    for rel in &stats.per_relation {
        for (ci, class) in classes.iter().enumerate() {
            for b in 0..bins {
                let count: usize = rel.histograms[ci][b * factor..(b + 1) * factor]
                    .iter()
                    .sum();
                rows.push(HistogramRow {
                    relation: rel.label.clone(),
                    class: class.name(),
                    bin_lo: b as f64 / bins as f64,
                    bin_hi: (b + 1) as f64 / bins as f64,
                    count,
                });
            }
        }
    }
    rows
}
