//! `rrk` drives the whole workflow: generate a toy corpus, distill a
//! reranker from the synthetic teacher, compress documents into an embedding
//! index, rerank, evaluate, and bench. Exit codes: 0 success, 1 usage,
//! 2 data or format problem, 3 numeric failure.

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

#[derive(Parser)]
#[command(name = "rrk", version, about = "Listwise reranking over compressed documents")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Subcommand)]
enum Cmd {
    /// Generate the synthetic topic corpus, queries, and qrels
    GenCorpus(commands::GenCorpusArgs),
    /// Distill a reranker (and optionally its compressor) from the teacher
    Train(commands::TrainArgs),
    /// Compress a corpus into an embedding index
    Compress(commands::CompressArgs),
    /// Retrieve, fetch embeddings, and rerank into a TREC run file
    Rerank(commands::RerankArgs),
    /// Score a run file against qrels
    Eval(commands::EvalArgs),
    /// Measure per-query scoring latency
    Bench(commands::BenchArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print on stdout and succeed; real usage
            // errors exit 1.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::GenCorpus(a) => commands::gen_corpus(a),
        Cmd::Train(a) => commands::train(a),
        Cmd::Compress(a) => commands::compress(a),
        Cmd::Rerank(a) => commands::rerank(a),
        Cmd::Eval(a) => commands::eval(a),
        Cmd::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use rrk_core::Error;
    match e.downcast_ref::<Error>() {
        Some(Error::NonFiniteLoss { .. }) => 3,
        Some(Error::Config(_)) | Some(Error::MissingCheckpoint) => 1,
        Some(_) => 2,
        None if e.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 1,
    }
}
