//! Scripted detector adapter speaking the bridge protocol on stdio or TCP.

use std::fs::File;
use std::io::{self, BufReader};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use annoloop::bridge::mock::{MockAdapter, ServeEnd};
use annoloop::bridge::protocol::read_fixture;
use annoloop::dataset::read_canonical;

#[derive(Debug, Parser)]
#[command(name = "annoloop-mock-adapter", about = "Answer predictions from a fixture")]
struct Args {
    /// Prediction fixture (one `{image_id, detections}` record per line).
    #[arg(long, conflicts_with = "dataset")]
    fixture: Option<PathBuf>,
    /// Canonical dataset whose ground truth is echoed back as predictions.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    protocol_version: Option<u32>,
    /// Stop answering after this many requests.
    #[arg(long)]
    die_after: Option<usize>,
    /// Accepted for launch compatibility; the mock never reads images.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Serve one TCP connection on this address instead of stdio.
    #[arg(long)]
    listen: Option<String>,
}

fn adapter(args: &Args) -> Result<MockAdapter> {
    let mut a = match (&args.fixture, &args.dataset) {
        (Some(p), None) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            MockAdapter::new(read_fixture(BufReader::new(f))?)
        }
        (None, Some(p)) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            MockAdapter::echo(&read_canonical(BufReader::new(f))?)
        }
        _ => bail!("exactly one of --fixture or --dataset is required"),
    };
    if let Some(v) = args.protocol_version {
        a.protocol_version = v;
    }
    a.die_after = args.die_after;
    Ok(a)
}

fn main() -> Result<ExitCode> {
    let args = Args::parse();
    let a = adapter(&args)?;
    let end = match &args.listen {
        Some(addr) => {
            let listener = TcpListener::bind(addr)?;
            eprintln!("listening on {}", listener.local_addr()?);
            let (stream, _) = listener.accept()?;
            a.serve(BufReader::new(stream.try_clone()?), stream)?
        }
        None => a.serve(io::stdin().lock(), io::stdout().lock())?,
    };
    Ok(if end == ServeEnd::Died { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}
