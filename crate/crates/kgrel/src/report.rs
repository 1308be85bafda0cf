//! CSV and JSON emission for evaluation and analysis reports.
//!
//! Every file embeds the configuration that produced it: CSV files carry a
//! leading `#`-comment line, JSON files a `config` object.

use serde_json::json;

use crate::analyze::StructureReport;
use crate::eval::{histogram_export, MetricsReport, PredictionStats};

/// Defensive CSV quoting; labels in the target datasets never need it.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt6(v: Option<f64>) -> String {
    v.map(fmt6).unwrap_or_default()
}

pub fn ranking_csv(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# split={} filtered={} ks={} tie_breaking=pessimistic\n",
        report.split,
        report.filtered,
        report
            .ks
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(";")
    ));
    out.push_str("relation,type,train_pct,test_count");
    for k in &report.ks {
        out.push_str(&format!(",hits@{k}"));
    }
    out.push_str(",mrr\n");
    for row in &report.per_relation {
        out.push_str(&format!(
            "{},{},{},{}",
            csv_field(&row.label),
            row.relation_type.as_deref().unwrap_or(""),
            fmt6(row.train_fraction * 100.0),
            row.test_count
        ));
        for h in &row.hits {
            out.push_str(&format!(",{}", fmt6(*h)));
        }
        out.push_str(&format!(",{}\n", fmt6(row.mrr)));
    }
    out.push_str(&format!("all,,100.000000,{}", report.total_test_count));
    for h in &report.overall_hits {
        out.push_str(&format!(",{}", fmt6(*h)));
    }
    out.push_str(&format!(",{}\n", fmt6(report.overall_mrr)));
    out
}

pub fn ranking_json(report: &MetricsReport) -> serde_json::Value {
    json!({
        "config": {
            "split": report.split.to_string(),
            "filtered": report.filtered,
            "ks": report.ks,
            "tie_breaking": "pessimistic",
        },
        "per_relation": report.per_relation.iter().map(|row| json!({
            "relation": row.label,
            "type": row.relation_type,
            "train_pct": row.train_fraction * 100.0,
            "test_count": row.test_count,
            "hits": row.hits,
            "mrr": row.mrr,
        })).collect::<Vec<_>>(),
        "overall": {
            "test_count": report.total_test_count,
            "hits": report.overall_hits,
            "mrr": report.overall_mrr,
        },
    })
}

pub fn prediction_csv(stats: &PredictionStats) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# threshold={} bins={} candidates=object_side\n",
        stats.threshold, stats.bins
    ));
    out.push_str(
        "relation,n_pairs,train_total,test_total,train_accuracy,test_accuracy,avg_other_truths\n",
    );
    let mut tot = (0usize, 0usize, 0usize);
    for row in &stats.per_relation {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_field(&row.label),
            row.n_pairs,
            row.train_total,
            row.test_total,
            fmt6(row.train_accuracy()),
            fmt6(row.test_accuracy()),
            fmt6(row.avg_other_truths()),
        ));
        tot.0 += row.n_pairs;
        tot.1 += row.train_total;
        tot.2 += row.test_total;
    }
    out.push_str(&format!(
        "all,{},{},{},{},{},{}\n",
        tot.0,
        tot.1,
        tot.2,
        fmt6(stats.overall_train_accuracy()),
        fmt6(stats.overall_test_accuracy()),
        fmt6(stats.overall_avg_other_truths()),
    ));
    out
}

pub fn prediction_json(stats: &PredictionStats) -> serde_json::Value {
    json!({
        "config": {
            "threshold": stats.threshold,
            "bins": stats.bins,
            "candidates": "object_side",
        },
        "per_relation": stats.per_relation.iter().map(|row| json!({
            "relation": row.label,
            "n_pairs": row.n_pairs,
            "train_total": row.train_total,
            "test_total": row.test_total,
            "train_accuracy": row.train_accuracy(),
            "test_accuracy": row.test_accuracy(),
            "avg_other_truths": row.avg_other_truths(),
        })).collect::<Vec<_>>(),
        "overall": {
            "train_accuracy": stats.overall_train_accuracy(),
            "test_accuracy": stats.overall_test_accuracy(),
            "avg_other_truths": stats.overall_avg_other_truths(),
        },
    })
}

pub fn histogram_csv(stats: &PredictionStats, bins: usize) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# threshold={} bins={} candidates=object_side\n",
        stats.threshold, bins
    ));
    out.push_str("relation,class,bin_lo,bin_hi,count\n");
    for row in histogram_export(stats, bins) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_field(&row.relation),
            row.class,
            fmt6(row.bin_lo),
            fmt6(row.bin_hi),
            row.count
        ));
    }
    out
}

pub fn structure_csv(report: &StructureReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# graphs={} khs_convention=paths_ge_1_diagonal_excluded paths=ordered_pairs_directed_bfs\n",
        if report.train_only_graphs { "train_only" } else { "all_splits" }
    ));
    out.push_str("relation,type,train_pct,test_count,khs,max_path,avg_path,symmetry,vector_norm\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            csv_field(&row.label),
            row.relation_type.as_deref().unwrap_or(""),
            fmt6(row.train_fraction * 100.0),
            row.test_count,
            fmt6(row.khs),
            row.max_path.map(|m| m.to_string()).unwrap_or_default(),
            opt6(row.avg_path),
            opt6(row.symmetry),
            opt6(row.vector_norm),
        ));
    }
    out
}

pub fn structure_json(report: &StructureReport) -> serde_json::Value {
    json!({
        "config": {
            "graphs": if report.train_only_graphs { "train_only" } else { "all_splits" },
            "khs_convention": "paths_ge_1_diagonal_excluded",
            "paths": "ordered_pairs_directed_bfs",
        },
        "rows": report.rows.iter().map(|row| json!({
            "relation": row.label,
            "type": row.relation_type,
            "train_pct": row.train_fraction * 100.0,
            "test_count": row.test_count,
            "khs": row.khs,
            "max_path": row.max_path,
            "avg_path": row.avg_path,
            "symmetry": row.symmetry,
            "vector_norm": row.vector_norm,
            "eigen_profile": row.eigen_profile,
        })).collect::<Vec<_>>(),
    })
}

/// Eigen profiles as plot-ready CSV: `relation,rank_index,scaled_magnitude`.
pub fn eigen_csv(report: &StructureReport) -> String {
    let mut out = String::new();
    out.push_str("relation,rank_index,scaled_magnitude\n");
    for row in &report.rows {
        if let Some(profile) = &row.eigen_profile {
            for (i, mag) in profile.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", csv_field(&row.label), i, fmt6(*mag)));
            }
        }
    }
    out
}
