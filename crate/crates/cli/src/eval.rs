//! `eval`: embed a feature file, build or load a verification protocol,
//! and write a bias report.

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use dnd_core::datagen::read_features;
use dnd_core::distill::BinaryAttribute;
use dnd_core::metrics::{bias_report, collect_scores_with, render_table, BiasReport, ThresholdRule};
use dnd_core::model::EmbeddingNet;
use dnd_core::protocol::{
    build_templates, cosine_score, embed_dataset, read_membership_csv, read_pairs_csv,
    PairProtocol,
};
use dnd_core::saliency::{group_attention_similarity, mean_group_maps, write_maps_csv};

use crate::util::{
    load_config, need, note, parse_fprs, read_text, thread_cap, write_text, Failure,
};

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate
    #[arg(long)]
    net: Option<PathBuf>,
    /// Feature file with identities and group labels
    #[arg(long)]
    data: Option<PathBuf>,
    /// Skip the first N samples of each identity (the training slice)
    #[arg(long)]
    skip_head: Option<u32>,
    /// Feature vectors aggregated per template
    #[arg(long)]
    samples_per_template: Option<usize>,
    /// Template membership CSV (sample_id,template_id); default chunks
    /// each identity's samples in order
    #[arg(long)]
    membership: Option<PathBuf>,
    /// Pair list CSV (template_a_id,template_b_id,genuine); default
    /// compares all template pairs
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Comma separated FPR targets, e.g. 1e-2,1e-3
    #[arg(long)]
    fpr: Option<String>,
    /// Group label reported as the advantaged side of the bias pair
    #[arg(long)]
    bias_high: Option<String>,
    /// Group label reported as the disadvantaged side
    #[arg(long)]
    bias_low: Option<String>,
    /// Interpolate between ROC points instead of the conservative rule
    #[arg(long)]
    interpolate: bool,
    /// Method name printed in the report; defaults to the net file stem
    #[arg(long)]
    method: Option<String>,
    /// Earlier report JSON used as the BPC reference
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Report output path; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit a text table instead of JSON
    #[arg(long)]
    table: bool,
    /// Write per-group mean saliency maps to this CSV
    #[arg(long)]
    attention_out: Option<PathBuf>,
    /// Flat TOML config; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct EvalFile {
    net: Option<PathBuf>,
    data: Option<PathBuf>,
    skip_head: Option<u32>,
    samples_per_template: Option<usize>,
    membership: Option<PathBuf>,
    pairs: Option<PathBuf>,
    fpr: Option<String>,
    bias_high: Option<String>,
    bias_low: Option<String>,
    interpolate: Option<bool>,
    method: Option<String>,
    reference: Option<PathBuf>,
    out: Option<PathBuf>,
    table: Option<bool>,
    attention_out: Option<PathBuf>,
}

/// Scores all pairs, fanning contiguous chunks across up to `threads`
/// scoped threads. Chunks write disjoint slices of the result, so the
/// score vector is identical for every thread count.
fn score_pairs(protocol: &PairProtocol, threads: usize) -> Vec<f64> {
    let n = protocol.pairs.len();
    if threads <= 1 || n < 2 {
        return protocol.score();
    }
    let chunk = n.div_ceil(threads.min(n));
    let mut scores = vec![0.0; n];
    std::thread::scope(|scope| {
        for (slots, pairs) in scores.chunks_mut(chunk).zip(protocol.pairs.chunks(chunk)) {
            scope.spawn(move || {
                for (slot, pair) in slots.iter_mut().zip(pairs) {
                    *slot = cosine_score(&protocol.templates[pair.a], &protocol.templates[pair.b]);
                }
            });
        }
    });
    scores
}

pub fn run(args: EvalArgs) -> Result<(), Failure> {
    let file: EvalFile = load_config(args.config.as_deref())?;
    let net_path = need(args.net.or(file.net), "net")?;
    let data_path = need(args.data.or(file.data), "data")?;
    let skip_head = args.skip_head.or(file.skip_head).unwrap_or(0);
    let samples_per_template = args
        .samples_per_template
        .or(file.samples_per_template)
        .unwrap_or(1);
    let membership = args.membership.or(file.membership);
    let pairs_path = args.pairs.or(file.pairs);
    let fprs = parse_fprs(args.fpr.or(file.fpr).as_deref().unwrap_or("1e-2"))?;
    let rule = if args.interpolate || file.interpolate.unwrap_or(false) {
        ThresholdRule::Interpolated
    } else {
        ThresholdRule::Conservative
    };
    let method = args
        .method
        .or(file.method)
        .or_else(|| {
            net_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "net".to_string());
    let reference_path = args.reference.or(file.reference);
    let out = args.out.or(file.out);
    let table = args.table || file.table.unwrap_or(false);
    let attention_out = args.attention_out.or(file.attention_out);
    let threads = thread_cap()?;

    let net = EmbeddingNet::load(&net_path)?;
    let ds = read_features(&data_path)?;
    let eval_ds = if skip_head > 0 {
        ds.split_head_tail(skip_head as usize).1
    } else {
        ds
    };
    let embeddings = embed_dataset(&net, &eval_ds)?;
    let templates = match &membership {
        Some(path) => read_membership_csv(path, &embeddings)?,
        None => build_templates(&embeddings, samples_per_template)?,
    };
    let protocol = match &pairs_path {
        Some(path) => read_pairs_csv(path, templates)?,
        None => PairProtocol::all_pairs(templates)?,
    };

    let labels: Vec<String> = protocol
        .templates
        .iter()
        .filter_map(|t| t.group.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let (bias_high, bias_low) = match (
        args.bias_high.or(file.bias_high),
        args.bias_low.or(file.bias_low),
    ) {
        (Some(h), Some(l)) => (h, l),
        (None, None) if labels.len() == 2 => (labels[0].clone(), labels[1].clone()),
        _ => {
            return Err(Failure::usage(
                "need --bias-high and --bias-low (defaulted only for exactly two groups)",
            ));
        }
    };

    let scores = score_pairs(&protocol, threads);
    let group_scores = collect_scores_with(&protocol, &labels, &scores)?;
    let reference: Option<BiasReport> = match &reference_path {
        Some(path) => Some(
            serde_json::from_str(&read_text(path)?)
                .map_err(|e| Failure::run(format!("reference {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let report = bias_report(
        &method,
        &group_scores,
        (&bias_high, &bias_low),
        &fprs,
        rule,
        reference.as_ref(),
    )?;

    if let Some(path) = &attention_out {
        let attr = BinaryAttribute::identity("group", &bias_high, &bias_low)?;
        let maps = mean_group_maps(&net, &eval_ds, &attr)?;
        write_maps_csv(path, &maps)?;
        let similarity = group_attention_similarity(&net, &eval_ds, &attr)?;
        note(format!(
            "attention maps for {} inputs written to {}; group similarity {similarity:.4}",
            eval_ds.input_dim(),
            path.display()
        ));
    }

    let text = if table {
        render_table(&[report])
    } else {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Failure::run(format!("report: {e}")))?;
        format!("{json}\n")
    };
    match &out {
        Some(path) => {
            write_text(path, &text)?;
            note(format!(
                "scored {} pairs over {} templates, report {}",
                protocol.pairs.len(),
                protocol.templates.len(),
                path.display()
            ));
        }
        None => print!("{text}"),
    }
    Ok(())
}
