//! Gradient saliency over network inputs.
//!
//! The saliency of an input is the elementwise absolute gradient of the
//! winning logit with respect to that input: which coordinates the
//! classification decision actually leans on. Averaging the maps per
//! attribute group and comparing the means by cosine similarity gives a
//! scalar measure of whether the network attends to the same input
//! structure for both groups.
//!
//! Absolute values rather than rectified gradients keep the maps sign-free
//! for averaging.

use std::collections::BTreeMap;
use std::path::Path;

use crate::datagen::Dataset;
use crate::distill::{BinaryAttribute, Side};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::EmbeddingNet;

/// Per-input-coordinate attention weights, all finite and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub values: Vec<f64>,
}

/// Saliency of one input: |d logit_y / d x| where y is the argmax class.
/// Logit ties resolve to the lowest class index.
pub fn input_saliency(net: &EmbeddingNet, x: &[f64]) -> Result<SaliencyMap> {
    let (_, logits) = net.forward(x)?;
    let mut winner = 0;
    for (i, &l) in logits.iter().enumerate() {
        if !l.is_finite() {
            return Err(Error::NonFinite { what: "logit" });
        }
        if l > logits[winner] {
            winner = i;
        }
    }
    let grad = net.input_gradient(x, winner)?;
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "saliency gradient",
        });
    }
    Ok(SaliencyMap {
        values: grad.into_iter().map(f64::abs).collect(),
    })
}

/// Mean saliency maps of the high and low sides of a binary attribute,
/// keyed by the side's category label. Both sides must be populated.
pub fn mean_group_maps(
    net: &EmbeddingNet,
    data: &Dataset,
    attr: &BinaryAttribute,
) -> Result<BTreeMap<String, SaliencyMap>> {
    if data.is_empty() {
        return Err(Error::EmptyScores { which: "saliency input" });
    }
    let dim = data.input_dim();
    let mut sums: BTreeMap<Side, (Vec<f64>, usize)> = BTreeMap::new();
    for sample in &data.samples {
        let side = attr.side_of(data.attr_label(sample))?;
        let map = input_saliency(net, &sample.features)?;
        let entry = sums.entry(side).or_insert_with(|| (vec![0.0; dim], 0));
        for (acc, v) in entry.0.iter_mut().zip(&map.values) {
            *acc += v;
        }
        entry.1 += 1;
    }
    let mut out = BTreeMap::new();
    for side in [Side::High, Side::Low] {
        let label = attr.label_for(side).to_string();
        let (sum, count) = sums.remove(&side).ok_or_else(|| Error::MissingCategory {
            category: label.clone(),
        })?;
        let values = sum.into_iter().map(|v| v / count as f64).collect();
        out.insert(label, SaliencyMap { values });
    }
    Ok(out)
}

/// Cosine similarity of the two per-group mean saliency maps.
pub fn group_attention_similarity(
    net: &EmbeddingNet,
    data: &Dataset,
    attr: &BinaryAttribute,
) -> Result<f64> {
    let maps = mean_group_maps(net, data, attr)?;
    for (label, map) in &maps {
        if linalg::norm(&map.values) <= linalg::NORM_FLOOR {
            return Err(Error::DegenerateSaliency {
                group: label.clone(),
            });
        }
    }
    let high = &maps[attr.label_for(Side::High)];
    let low = &maps[attr.label_for(Side::Low)];
    Ok(linalg::cosine_similarity(&high.values, &low.values).expect("norms checked above"))
}

/// Writes mean maps as CSV: one row per input coordinate, one column per
/// group label, labels in map order.
pub fn write_maps_csv(path: &Path, maps: &BTreeMap<String, SaliencyMap>) -> Result<()> {
    let mut labels: Vec<&String> = maps.keys().collect();
    labels.sort();
    let dim = maps
        .values()
        .next()
        .map(|m| m.values.len())
        .ok_or_else(|| Error::Invalid {
            what: "saliency maps",
            reason: "no maps to write".into(),
        })?;
    for map in maps.values() {
        if map.values.len() != dim {
            return Err(Error::Shape {
                context: "saliency map",
                expected: dim,
                actual: map.values.len(),
            });
        }
    }
    let mut writer = csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.display().to_string(),
        source,
    })?;
    let mut header = vec!["input_index".to_string()];
    header.extend(labels.iter().map(|l| (*l).clone()));
    let write_err = |source| Error::Csv {
        path: path.display().to_string(),
        source,
    };
    writer.write_record(&header).map_err(write_err)?;
    for i in 0..dim {
        let mut record = vec![i.to_string()];
        for label in &labels {
            record.push(format!("{:?}", maps[*label].values[i]));
        }
        writer.write_record(&record).map_err(write_err)?;
    }
    writer.flush()?;
    Ok(())
}
