//! `gen-data`: seeded synthetic attribute-biased feature files.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use dnd_core::datagen::{generate_synthetic, write_features, SynthSpec};

use crate::util::{load_config, need, note, Failure};

#[derive(Args)]
pub struct GenArgs {
    /// Generation seed
    #[arg(long)]
    seed: Option<u64>,
    /// Group spec as label:identities:sigma, repeatable
    #[arg(long = "group", value_name = "LABEL:IDS:SIGMA")]
    groups: Vec<String>,
    /// Samples drawn per identity
    #[arg(long)]
    samples_per_id: Option<u32>,
    /// Feature vector dimension
    #[arg(long)]
    input_dim: Option<usize>,
    /// Scale of identity centers and of the group shift
    #[arg(long)]
    center_scale: Option<f64>,
    /// Output feature file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat TOML config; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct GenFile {
    seed: Option<u64>,
    /// Comma separated label:identities:sigma entries.
    groups: Option<String>,
    samples_per_id: Option<u32>,
    input_dim: Option<usize>,
    center_scale: Option<f64>,
    out: Option<PathBuf>,
}

/// Parses group specs into the two per-group maps.
fn parse_groups(entries: &[String]) -> Result<(BTreeMap<String, u32>, BTreeMap<String, f64>), Failure> {
    let mut ids = BTreeMap::new();
    let mut sigma = BTreeMap::new();
    for entry in entries {
        let parts: Vec<&str> = entry.split(':').collect();
        let [label, count, noise] = parts[..] else {
            return Err(Failure::usage(format!(
                "bad group spec {entry:?}, expected label:identities:sigma"
            )));
        };
        let count: u32 = count
            .parse()
            .map_err(|_| Failure::usage(format!("bad identity count in group spec {entry:?}")))?;
        let noise: f64 = noise
            .parse()
            .map_err(|_| Failure::usage(format!("bad sigma in group spec {entry:?}")))?;
        if ids.insert(label.to_string(), count).is_some() {
            return Err(Failure::usage(format!("duplicate group label {label:?}")));
        }
        sigma.insert(label.to_string(), noise);
    }
    Ok((ids, sigma))
}

pub fn run(args: GenArgs) -> Result<(), Failure> {
    let file: GenFile = load_config(args.config.as_deref())?;
    let group_entries: Vec<String> = if !args.groups.is_empty() {
        args.groups.clone()
    } else {
        file.groups
            .as_deref()
            .unwrap_or("a:8:0.5,b:8:1.5")
            .split(',')
            .map(str::to_string)
            .collect()
    };
    let (ids_per_group, noise_sigma_per_group) = parse_groups(&group_entries)?;
    let spec = SynthSpec {
        ids_per_group,
        samples_per_id: args.samples_per_id.or(file.samples_per_id).unwrap_or(40),
        input_dim: args.input_dim.or(file.input_dim).unwrap_or(32),
        center_scale: args.center_scale.or(file.center_scale).unwrap_or(1.0),
        noise_sigma_per_group,
        seed: args.seed.or(file.seed).unwrap_or(7),
    };
    spec.validate()?;
    let out = need(args.out.or(file.out), "out")?;

    let ds = generate_synthetic(&spec)?;
    write_features(&out, &ds)?;
    note(format!(
        "wrote {} samples over {} identities in {} groups to {}",
        ds.len(),
        ds.num_identities,
        ds.attribute_labels.len(),
        out.display()
    ));
    Ok(())
}
