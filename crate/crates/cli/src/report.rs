//! `report`: render stored bias reports as one aligned text table.

use std::path::PathBuf;

use clap::Args;

use dnd_core::metrics::{render_table, BiasReport};

use crate::util::{read_text, write_text, Failure};

#[derive(Args)]
pub struct ReportArgs {
    /// Report JSON files, rendered in order
    #[arg(required = true, value_name = "REPORT.json")]
    reports: Vec<PathBuf>,
    /// Table output path; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: ReportArgs) -> Result<(), Failure> {
    let mut reports = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        let report: BiasReport = serde_json::from_str(&read_text(path)?)
            .map_err(|e| Failure::run(format!("{}: {e}", path.display())))?;
        reports.push(report);
    }
    let text = render_table(&reports);
    match &args.out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
