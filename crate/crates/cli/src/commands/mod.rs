mod distill;
mod evaluate;
mod ingest;
mod tile;

use featdistill::embedstore::{read_embedding_set, EmbeddingSet};
use featdistill::Error;
use serde::Serialize;

use crate::args::{Cli, Command, Common};
use crate::output::Run;
use crate::{CliError, CliResult};

pub fn run(cli: Cli) -> CliResult<()> {
    let threads = match &cli.command {
        Command::Ingest(a) => a.common.threads,
        Command::Tile(a) => a.common.threads,
        Command::Distill(a) => a.common.threads,
        Command::EvalKnn(a) => a.common.threads,
        Command::Cka(a) => a.common.threads,
        Command::Robustness(a) => a.common.threads,
    };
    let go = move || match cli.command {
        Command::Ingest(a) => ingest::run(a),
        Command::Tile(a) => tile::run(a),
        Command::Distill(a) => distill::run(a),
        Command::EvalKnn(a) => evaluate::eval_knn(a),
        Command::Cka(a) => evaluate::cka(a),
        Command::Robustness(a) => evaluate::robustness(a),
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build()
            .map_err(|e| CliError::Usage(format!("--threads {n}: {e}")))?
            .install(go),
        None => go(),
    }
}

#[derive(Serialize)]
struct Report<'a, C, R> {
    subcommand: &'a str,
    config: &'a C,
    result: &'a R,
}

fn write_report<C: Serialize, R: Serialize>(run: &mut Run, subcommand: &str, config: &C, result: &R) -> CliResult<()> {
    run.output_json(
        "report",
        crate::output::REPORT_FILE,
        &Report {
            subcommand,
            config,
            result,
        },
    )
}

fn load_set(run: &mut Run, role: &str, path: &std::path::Path) -> CliResult<EmbeddingSet> {
    if !path.is_dir() {
        return Err(Error::Invalid(format!("{}: no embedding set at this path", path.display())).into());
    }
    let set = read_embedding_set(path)?;
    run.input_set(role, path, &set);
    Ok(set)
}

fn start(common: &Common, subcommand: &'static str) -> Run {
    Run::start(&common.out, subcommand)
}
