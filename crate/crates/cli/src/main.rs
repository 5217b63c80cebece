//! Command line front end: dataset generation, the three distillation
//! pipelines as composable stages, protocol evaluation, and report
//! rendering. Every command reads flags plus an optional flat TOML config
//! (flags win), validates the merged configuration up front, and writes
//! only path-addressed artifacts so identical configs rerun to identical
//! bytes.

mod eval;
mod gen;
mod report;
mod train;
mod util;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Distillation training pipelines and group bias reports for small
/// embedding networks.
#[derive(Parser)]
#[command(name = "dnd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic attribute-biased feature file
    GenData(gen::GenArgs),
    /// Train the reference network on the advantaged category only
    TrainTeacher(train::TeacherArgs),
    /// Distill a student from a teacher on the disadvantaged category
    TrainDnd(train::DndArgs),
    /// Refine a distilled student on the full data, distilling from itself
    TrainDndpp(train::DndppArgs),
    /// One-step distillation from a teacher on the full data
    TrainOsd(train::OsdArgs),
    /// Score a verification protocol and emit a bias report
    Eval(eval::EvalArgs),
    /// Render stored bias reports as one text table
    Report(report::ReportArgs),
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(args) => gen::run(args),
        Command::TrainTeacher(args) => train::run_teacher(args),
        Command::TrainDnd(args) => train::run_dnd(args),
        Command::TrainDndpp(args) => train::run_dndpp(args),
        Command::TrainOsd(args) => train::run_osd(args),
        Command::Eval(args) => eval::run(args),
        Command::Report(args) => report::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => failure.exit(),
    }
}
