//! ROC analysis and bias metrics over verification scores.
//!
//! The decision rule is score >= threshold means match. A [`RocCurve`]
//! enumerates every distinct score as a threshold, descending, behind a
//! sentinel at +inf so the curve starts at (fpr 0, tpr 0) and ends at
//! (1, 1). TPR at a fixed FPR uses the conservative step rule: the
//! operating point with the largest achieved FPR at or below the target.
//! That keeps every reported rate an exact multiple of 1/n and surfaces
//! quantization honestly; a linear-interpolation mode exists for
//! comparison against tools that smooth the staircase.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::PairProtocol;

/// Genuine and impostor score lists for one protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Result<Self> {
        check_scores(&genuine, &impostor)?;
        Ok(ScoreSet { genuine, impostor })
    }

    /// Scores every pair and partitions by the genuine flag.
    pub fn from_protocol(protocol: &PairProtocol) -> Result<Self> {
        Self::from_scored(protocol, &protocol.score())
    }

    /// Partitions precomputed scores, one per protocol pair in pair order,
    /// so a caller that fanned scoring out over threads can reuse them.
    pub fn from_scored(protocol: &PairProtocol, scores: &[f64]) -> Result<Self> {
        if scores.len() != protocol.pairs.len() {
            return Err(Error::Shape {
                context: "pair scores",
                expected: protocol.pairs.len(),
                actual: scores.len(),
            });
        }
        let mut genuine = Vec::new();
        let mut impostor = Vec::new();
        for (pair, &score) in protocol.pairs.iter().zip(scores) {
            if pair.genuine {
                genuine.push(score);
            } else {
                impostor.push(score);
            }
        }
        ScoreSet::new(genuine, impostor)
    }

    pub fn roc(&self) -> Result<RocCurve> {
        build_roc(&self.genuine, &self.impostor)
    }
}

fn check_scores(genuine: &[f64], impostor: &[f64]) -> Result<()> {
    if genuine.is_empty() {
        return Err(Error::EmptyScores { which: "genuine" });
    }
    if impostor.is_empty() {
        return Err(Error::EmptyScores { which: "impostor" });
    }
    if genuine.iter().chain(impostor).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "verification score",
        });
    }
    Ok(())
}

/// One operating point of a ROC curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Operating points in descending threshold order. `fpr` and `tpr` are
/// nondecreasing along the list; the first point is the +inf sentinel at
/// (0, 0) and the last sits at (1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

/// Builds the full ROC curve over all distinct score thresholds.
pub fn build_roc(genuine: &[f64], impostor: &[f64]) -> Result<RocCurve> {
    check_scores(genuine, impostor)?;
    let mut thresholds: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut gen_sorted = genuine.to_vec();
    gen_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut imp_sorted = impostor.to_vec();
    imp_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let (n_genuine, n_impostor) = (genuine.len(), impostor.len());
    let mut points = Vec::with_capacity(thresholds.len() + 1);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    });
    let mut gi = 0;
    let mut ii = 0;
    for &t in &thresholds {
        while gi < n_genuine && gen_sorted[gi] >= t {
            gi += 1;
        }
        while ii < n_impostor && imp_sorted[ii] >= t {
            ii += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: ii as f64 / n_impostor as f64,
            tpr: gi as f64 / n_genuine as f64,
        });
    }
    Ok(RocCurve {
        points,
        n_genuine,
        n_impostor,
    })
}

/// How to pick an operating point for a target FPR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Largest achieved FPR at or below the target. Rejects targets below
    /// the quantization floor 1/n_impostor.
    Conservative,
    /// Linear interpolation on the upper staircase (max TPR per distinct
    /// FPR). Accepts any target in (0, 1]; the reported threshold is the
    /// one of the lower bracketing point.
    Interpolated,
}

/// The operating point chosen for a target FPR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub achieved_fpr: f64,
    pub tpr: f64,
}

/// TPR at the target FPR under the given rule.
pub fn tpr_at_fpr(roc: &RocCurve, target_fpr: f64, rule: ThresholdRule) -> Result<OperatingPoint> {
    if !target_fpr.is_finite() || target_fpr <= 0.0 || target_fpr > 1.0 {
        return Err(Error::Invalid {
            what: "target FPR",
            reason: format!("{target_fpr} is outside (0, 1]"),
        });
    }
    match rule {
        ThresholdRule::Conservative => {
            if target_fpr < 1.0 / roc.n_impostor as f64 {
                return Err(Error::Quantization {
                    requested: target_fpr,
                    n_impostor: roc.n_impostor,
                    group: None,
                });
            }
            let mut chosen = roc.points[0];
            for p in &roc.points {
                if p.fpr <= target_fpr {
                    chosen = *p;
                } else {
                    break;
                }
            }
            Ok(OperatingPoint {
                threshold: chosen.threshold,
                achieved_fpr: chosen.fpr,
                tpr: chosen.tpr,
            })
        }
        ThresholdRule::Interpolated => {
            // Upper staircase: for each distinct fpr keep the best tpr,
            // which is the last point at that fpr in descending-threshold
            // order.
            let mut stairs: Vec<RocPoint> = Vec::new();
            for p in &roc.points {
                match stairs.last_mut() {
                    Some(last) if last.fpr == p.fpr => *last = *p,
                    _ => stairs.push(*p),
                }
            }
            let hi = stairs.partition_point(|p| p.fpr < target_fpr);
            if stairs[hi].fpr == target_fpr {
                return Ok(OperatingPoint {
                    threshold: stairs[hi].threshold,
                    achieved_fpr: target_fpr,
                    tpr: stairs[hi].tpr,
                });
            }
            let (lo, hi) = (&stairs[hi - 1], &stairs[hi]);
            let frac = (target_fpr - lo.fpr) / (hi.fpr - lo.fpr);
            Ok(OperatingPoint {
                threshold: lo.threshold,
                achieved_fpr: target_fpr,
                tpr: lo.tpr + frac * (hi.tpr - lo.tpr),
            })
        }
    }
}

/// Absolute TPR difference between two attribute groups at a common FPR.
pub fn attribute_bias(tpr_a0: f64, tpr_a1: f64) -> f64 {
    (tpr_a0 - tpr_a1).abs()
}

/// Bias performance coefficient of a de-biased system against its
/// reference: (bias - bias_deb)/bias - (tpr - tpr_deb)/tpr.
///
/// `tpr` and `bias` belong to the reference system and must be nonzero.
pub fn bpc(tpr: f64, bias: f64, tpr_deb: f64, bias_deb: f64) -> Result<f64> {
    for (v, what) in [
        (tpr, "TPR"),
        (bias, "bias"),
        (tpr_deb, "de-biased TPR"),
        (bias_deb, "de-biased bias"),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite { what });
        }
    }
    if tpr <= 0.0 {
        return Err(Error::UndefinedBpc { what: "TPR" });
    }
    if bias <= 0.0 {
        return Err(Error::UndefinedBpc { what: "bias" });
    }
    Ok((bias - bias_deb) / bias - (tpr - tpr_deb) / tpr)
}

/// Population standard deviation (divide by N) of per-group TPRs.
pub fn group_std(tprs: &[f64]) -> Result<f64> {
    if tprs.len() < 2 {
        return Err(Error::Arity {
            needed: 2,
            got: tprs.len(),
        });
    }
    if tprs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "group TPR" });
    }
    let n = tprs.len() as f64;
    let mean = tprs.iter().sum::<f64>() / n;
    let var = tprs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// Per-group conservative thresholds matching one target FPR, so the TPR
/// gap between the two groups at equal FPR can be read off directly.
///
/// With distinct impostor scores each achieved FPR lands within
/// 1/n_impostor of the target; heavy score ties coarsen that grid.
pub fn equalized_odds_thresholds(
    group_scores: &BTreeMap<String, ScoreSet>,
    target_fpr: f64,
) -> Result<BTreeMap<String, OperatingPoint>> {
    if group_scores.len() != 2 {
        return Err(Error::GroupArity {
            got: group_scores.len(),
        });
    }
    let mut out = BTreeMap::new();
    for (label, scores) in group_scores {
        let roc = scores.roc()?;
        let op = tpr_at_fpr(&roc, target_fpr, ThresholdRule::Conservative).map_err(|e| {
            match e {
                Error::Quantization {
                    requested,
                    n_impostor,
                    ..
                } => Error::Quantization {
                    requested,
                    n_impostor,
                    group: Some(label.clone()),
                },
                other => other,
            }
        })?;
        out.insert(label.clone(), op);
    }
    Ok(out)
}

/// Overall scores next to per-group scores for the same protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScores {
    pub overall: ScoreSet,
    pub per_group: BTreeMap<String, ScoreSet>,
}

/// Scores a protocol and partitions it into overall plus per-group score
/// sets. Every named group must contribute both genuine and impostor
/// pairs; mixed-group pairs count only toward the overall set.
pub fn collect_scores(protocol: &PairProtocol, labels: &[String]) -> Result<GroupScores> {
    collect_scores_with(protocol, labels, &protocol.score())
}

/// [`collect_scores`] over precomputed scores, one per protocol pair in
/// pair order. Partitioning never rescores, so the caller may compute the
/// scores in parallel as long as it preserves pair order.
pub fn collect_scores_with(
    protocol: &PairProtocol,
    labels: &[String],
    scores: &[f64],
) -> Result<GroupScores> {
    let overall = ScoreSet::from_scored(protocol, scores)?;
    let mut per_group = BTreeMap::new();
    for label in labels {
        let mut genuine = Vec::new();
        let mut impostor = Vec::new();
        for (pair, &score) in protocol.pairs.iter().zip(scores) {
            if pair.group.as_deref() != Some(label.as_str()) {
                continue;
            }
            if pair.genuine {
                genuine.push(score);
            } else {
                impostor.push(score);
            }
        }
        if genuine.is_empty() && impostor.is_empty() {
            return Err(Error::MissingCategory {
                category: label.clone(),
            });
        }
        let set = ScoreSet::new(genuine, impostor).map_err(|e| match e {
            Error::EmptyScores { which } => Error::Invalid {
                what: "group scores",
                reason: format!("group {label:?} has no {which} pairs"),
            },
            other => other,
        })?;
        per_group.insert(label.clone(), set);
    }
    Ok(GroupScores { overall, per_group })
}

/// One evaluated FPR target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub fpr: f64,
    pub tpr_overall: f64,
    pub tpr_per_group: BTreeMap<String, f64>,
    /// |TPR difference| of the report's designated group pair.
    pub bias: f64,
    /// Present when a reference report was supplied.
    pub bpc: Option<f64>,
    /// Present when three or more groups were evaluated.
    pub std: Option<f64>,
}

/// Per-FPR bias summary for one evaluated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub method: String,
    /// Group pair the bias column refers to, high-TPR side first.
    pub bias_pair: (String, String),
    pub rule: ThresholdRule,
    /// Method tag of the baseline used for the BPC column.
    pub reference: Option<String>,
    pub rows: Vec<ReportRow>,
}

impl BiasReport {
    pub fn row_at(&self, fpr: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.fpr == fpr)
    }
}

/// BPC of one row against the matching reference row.
pub fn row_bpc(reference: &ReportRow, tpr_overall: f64, bias: f64) -> Result<f64> {
    bpc(reference.tpr_overall, reference.bias, tpr_overall, bias)
}

/// Evaluates one score collection at each requested FPR.
///
/// Quantization failures name the offending group. The reference report,
/// when given, must contain a row for every requested FPR.
pub fn bias_report(
    method: &str,
    scores: &GroupScores,
    bias_pair: (&str, &str),
    fpr_list: &[f64],
    rule: ThresholdRule,
    reference: Option<&BiasReport>,
) -> Result<BiasReport> {
    for label in [bias_pair.0, bias_pair.1] {
        if !scores.per_group.contains_key(label) {
            return Err(Error::MissingCategory {
                category: label.to_string(),
            });
        }
    }
    let overall_roc = scores.overall.roc()?;
    let mut group_rocs = BTreeMap::new();
    for (label, set) in &scores.per_group {
        group_rocs.insert(label.clone(), set.roc()?);
    }
    let mut rows = Vec::with_capacity(fpr_list.len());
    for &fpr in fpr_list {
        let overall = tpr_at_fpr(&overall_roc, fpr, rule)?;
        let mut tpr_per_group = BTreeMap::new();
        for (label, roc) in &group_rocs {
            let op = tpr_at_fpr(roc, fpr, rule).map_err(|e| match e {
                Error::Quantization {
                    requested,
                    n_impostor,
                    ..
                } => Error::Quantization {
                    requested,
                    n_impostor,
                    group: Some(label.clone()),
                },
                other => other,
            })?;
            tpr_per_group.insert(label.clone(), op.tpr);
        }
        let bias = attribute_bias(tpr_per_group[bias_pair.0], tpr_per_group[bias_pair.1]);
        let std = if tpr_per_group.len() >= 3 {
            let values: Vec<f64> = tpr_per_group.values().copied().collect();
            Some(group_std(&values)?)
        } else {
            None
        };
        let bpc = match reference {
            Some(reference_report) => {
                let reference_row =
                    reference_report.row_at(fpr).ok_or_else(|| Error::Invalid {
                        what: "reference report",
                        reason: format!("no row at FPR {fpr:e}"),
                    })?;
                Some(row_bpc(reference_row, overall.tpr, bias)?)
            }
            None => None,
        };
        rows.push(ReportRow {
            fpr,
            tpr_overall: overall.tpr,
            tpr_per_group,
            bias,
            bpc,
            std,
        });
    }
    Ok(BiasReport {
        method: method.to_string(),
        bias_pair: (bias_pair.0.to_string(), bias_pair.1.to_string()),
        rule,
        reference: reference.map(|r| r.method.clone()),
        rows,
    })
}

/// Renders reports as one aligned text table, one row per method and FPR.
/// Group TPR columns come in bias-pair order, then any further groups.
pub fn render_table(reports: &[BiasReport]) -> String {
    let mut group_order: Vec<String> = Vec::new();
    if let Some(first) = reports.first() {
        group_order.push(first.bias_pair.0.clone());
        group_order.push(first.bias_pair.1.clone());
    }
    for report in reports {
        for row in &report.rows {
            for label in row.tpr_per_group.keys() {
                if !group_order.contains(label) {
                    group_order.push(label.clone());
                }
            }
        }
    }
    let any_std = reports
        .iter()
        .any(|r| r.rows.iter().any(|row| row.std.is_some()));
    let any_bpc = reports
        .iter()
        .any(|r| r.rows.iter().any(|row| row.bpc.is_some()));

    let mut header = vec!["method".to_string(), "fpr".to_string(), "tpr".to_string()];
    for label in &group_order {
        header.push(format!("tpr_{label}"));
    }
    header.push("bias".to_string());
    if any_std {
        header.push("std".to_string());
    }
    if any_bpc {
        header.push("bpc".to_string());
    }

    let fmt = |v: f64| format!("{v:.3}");
    let mut lines: Vec<Vec<String>> = vec![header];
    for report in reports {
        for row in &report.rows {
            let mut cells = vec![
                report.method.clone(),
                format!("{:e}", row.fpr),
                fmt(row.tpr_overall),
            ];
            for label in &group_order {
                cells.push(
                    row.tpr_per_group
                        .get(label)
                        .map(|v| fmt(*v))
                        .unwrap_or_else(|| "-".to_string()),
                );
            }
            cells.push(fmt(row.bias));
            if any_std {
                cells.push(row.std.map(fmt).unwrap_or_else(|| "-".to_string()));
            }
            if any_bpc {
                cells.push(row.bpc.map(fmt).unwrap_or_else(|| "-".to_string()));
            }
            lines.push(cells);
        }
    }

    let columns = lines[0].len();
    let mut widths = vec![0usize; columns];
    for line in &lines {
        for (w, cell) in widths.iter_mut().zip(line) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for line in &lines {
        let rendered: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{cell:>width$}", width = widths[i]))
            .collect();
        out.push_str(rendered.join("  ").trim_end());
        out.push('\n');
    }
    out
}
