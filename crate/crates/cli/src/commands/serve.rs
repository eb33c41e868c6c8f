use std::io::{stdin, stdout, BufWriter};

use clap::Args;
use figdetect::modeling::backends::serve;
use figdetect::modeling::{BackendSpec, GoldTable};

use crate::error::{CliError, Result};

/// Serves a built-in backend over the adapter protocol on stdin/stdout.
/// Used to test the external-backend path without Python.
#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Backend spec as JSON, e.g. `{"kind":"toy"}`.
    #[arg(long, default_value = r#"{"kind":"toy"}"#)]
    pub backend: String,
}

pub fn run(args: ServeArgs) -> Result<()> {
    let spec: BackendSpec =
        serde_json::from_str(&args.backend).map_err(|e| CliError::Config(format!("backend: {e}")))?;
    spec.validate().map_err(|e| CliError::Config(format!("backend: {e}")))?;
    if spec.needs_gold() || matches!(spec, BackendSpec::External(_)) {
        return Err(CliError::Config(format!("backend: `{}` cannot be served", spec.name())));
    }
    let mut backend = spec.instantiate(&GoldTable::new())?;
    serve(backend.as_mut(), stdin().lock(), BufWriter::new(stdout().lock()))
        .map_err(|e| CliError::Backend(format!("adapter-serve: {e}")))
}
