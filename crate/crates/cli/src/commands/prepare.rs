use std::path::PathBuf;

use clap::Args;
use figdetect::corpus::{prepare, BinarizationPolicy, PrepareOptions, DATA_ROOT_ENV};
use figdetect::par::Exec;
use log::{error, info};

use crate::error::{CliError, Result};
use crate::run::DirLock;

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Root of the source datasets, laid out as `<figure>/<lang>/<split>[.<dataset>].<ext>`.
    #[arg(long, env = DATA_ROOT_ENV)]
    pub data_root: PathBuf,
    /// Output directory for the prepared corpus.
    #[arg(long, default_value = "prepared")]
    pub out: PathBuf,
    /// Seed of the hyperbole upsampling.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Metaphor rows scoring at least this are figurative; 0 is literal and
    /// anything in between is dropped.
    #[arg(long, default_value_t = 2)]
    pub metaphor_threshold: u8,
    /// Size hyperbole training sets are upsampled to.
    #[arg(long, default_value_t = 10_000, conflicts_with = "no_upsample")]
    pub upsample_target: usize,
    #[arg(long)]
    pub no_upsample: bool,
    /// Single-threaded ingestion.
    #[arg(long)]
    pub sequential: bool,
}

pub fn run(args: PrepareArgs) -> Result<()> {
    let policy = BinarizationPolicy::new(args.metaphor_threshold).map_err(|e| CliError::Config(e.to_string()))?;
    if !args.data_root.is_dir() {
        return Err(CliError::Data(format!(
            "data root {} is not a directory",
            args.data_root.display()
        )));
    }
    let options = PrepareOptions {
        policy,
        seed: args.seed,
        upsample_target: (!args.no_upsample).then_some(args.upsample_target),
        exec: if args.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        },
    };
    let _lock = DirLock::acquire(&args.out)?;
    let report = prepare(&args.data_root, &args.out, &options)?;
    print!("{}", report.stats.render_table());
    info!(
        "{} files written to {}, {} records rejected, {} dropped by the metaphor policy",
        report.outputs.len(),
        args.out.display(),
        report.rejected,
        report.dropped_by_policy
    );
    for f in &report.failures {
        let split = f.split.map(|s| format!(" {s}")).unwrap_or_default();
        error!("{}-{}{split}: {}", f.figure, f.language, f.message);
    }
    if report.is_complete() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "{} source(s) failed; the other datasets were prepared",
            report.failures.len()
        )))
    }
}
