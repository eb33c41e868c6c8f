//! Process boundary for models that live outside this crate.
//!
//! The adapter is a child process that reads one JSON request per line on
//! stdin and answers with one JSON response per line on stdout. The wire
//! format is documented in `docs/adapter-protocol.md`; [`serve`] is the
//! reference server and is what the CLI's `adapter-serve` command runs.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::modeling::backend::{check_batch, Backend, BackendError, BackendSpec, GenOutput};
use crate::modeling::TaskSpec;
use crate::prompt::{Origin, PromptInstance};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSpec {
    /// Program and arguments.
    pub command: Vec<String>,
    /// Where the adapter writes its checkpoints. Defaults to
    /// `adapter-checkpoints` under the working directory.
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub env: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireExample {
    pub input: String,
    pub target: String,
    pub label: Label,
    pub task: TaskSpec,
    pub example_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Hello { version: u32 },
    FitStep { batch: Vec<WireExample>, lr: f64 },
    Generate { inputs: Vec<String> },
    Save { path: PathBuf },
    Load { path: PathBuf },
    Shutdown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<Option<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<Option<String>>>,
}

impl Response {
    fn ok() -> Self {
        Response {
            ok: true,
            ..Default::default()
        }
    }

    fn fail(msg: impl Into<String>) -> Self {
        Response {
            ok: false,
            error: Some(msg.into()),
            ..Default::default()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ExternalPayload {
    path: PathBuf,
}

struct Pipe {
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl Pipe {
    fn call(&mut self, req: &Request) -> Result<Response, BackendError> {
        let line = serde_json::to_string(req).map_err(|e| BackendError::Adapter(e.to_string()))?;
        writeln!(self.stdin, "{line}").map_err(|e| BackendError::Adapter(format!("write: {e}")))?;
        self.stdin
            .flush()
            .map_err(|e| BackendError::Adapter(format!("flush: {e}")))?;
        let mut buf = String::new();
        let n = self
            .stdout
            .read_line(&mut buf)
            .map_err(|e| BackendError::Adapter(format!("read: {e}")))?;
        if n == 0 {
            return Err(BackendError::Adapter("adapter closed its output".into()));
        }
        let resp: Response = serde_json::from_str(buf.trim_end())
            .map_err(|e| BackendError::Adapter(format!("malformed response `{}`: {e}", buf.trim_end())))?;
        if resp.ok {
            Ok(resp)
        } else {
            Err(BackendError::Adapter(
                resp.error.unwrap_or_else(|| "unspecified error".into()),
            ))
        }
    }
}

/// A model served by a child process.
pub struct ExternalBackend {
    spec: ExternalSpec,
    child: Child,
    pipe: Mutex<Pipe>,
    saves: AtomicU64,
    remote_name: String,
}

impl std::fmt::Debug for ExternalBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalBackend")
            .field("spec", &self.spec)
            .field("remote", &self.remote_name)
            .finish()
    }
}

impl ExternalBackend {
    /// Starts the adapter and performs the version handshake.
    pub fn spawn(spec: ExternalSpec) -> Result<Self, BackendError> {
        let (program, args) = spec
            .command
            .split_first()
            .ok_or_else(|| BackendError::Adapter("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .envs(&spec.env)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Adapter(format!("cannot start `{program}`: {e}")))?;
        let pipe = Pipe {
            stdin: BufWriter::new(child.stdin.take().expect("piped stdin")),
            stdout: BufReader::new(child.stdout.take().expect("piped stdout")),
        };
        let mut backend = ExternalBackend {
            spec,
            child,
            pipe: Mutex::new(pipe),
            saves: AtomicU64::new(0),
            remote_name: String::new(),
        };
        let resp = backend.call(&Request::Hello {
            version: PROTOCOL_VERSION,
        })?;
        if resp.version != Some(PROTOCOL_VERSION) {
            return Err(BackendError::Adapter(format!(
                "protocol version mismatch: expected {PROTOCOL_VERSION}, adapter speaks {:?}",
                resp.version
            )));
        }
        backend.remote_name = resp.backend.unwrap_or_default();
        Ok(backend)
    }

    /// Name the adapter reported in its handshake.
    pub fn remote_name(&self) -> &str {
        &self.remote_name
    }

    fn call(&self, req: &Request) -> Result<Response, BackendError> {
        self.pipe
            .lock()
            .map_err(|_| BackendError::Adapter("adapter pipe poisoned".into()))?
            .call(req)
    }

    fn checkpoint_dir(&self) -> PathBuf {
        self.spec
            .checkpoint_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("adapter-checkpoints"))
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        let _ = self.call(&Request::Shutdown);
        let _ = self.child.wait();
    }
}

impl Backend for ExternalBackend {
    fn spec(&self) -> BackendSpec {
        BackendSpec::External(self.spec.clone())
    }

    fn fit_step(&mut self, batch: &[PromptInstance], lr: f64) -> Result<f64, BackendError> {
        check_batch(batch)?;
        let batch = batch
            .iter()
            .map(|i| WireExample {
                input: i.input_text.clone(),
                target: i.target_text.clone(),
                label: i.label,
                task: i.origin.task.clone(),
                example_id: i.origin.example_id.clone(),
            })
            .collect();
        let resp = self.call(&Request::FitStep { batch, lr })?;
        resp.loss
            .ok_or_else(|| BackendError::Adapter("fit_step response without loss".into()))
    }

    fn generate(&self, inputs: &[String]) -> Vec<GenOutput> {
        let fail_all = |msg: String| inputs.iter().map(|_| Err(msg.clone())).collect();
        let resp = match self.call(&Request::Generate {
            inputs: inputs.to_vec(),
        }) {
            Ok(r) => r,
            Err(e) => return fail_all(e.to_string()),
        };
        let outputs = resp.outputs.unwrap_or_default();
        if outputs.len() != inputs.len() {
            return fail_all(format!(
                "adapter returned {} outputs for {} inputs",
                outputs.len(),
                inputs.len()
            ));
        }
        let errors = resp.errors.unwrap_or_default();
        outputs
            .into_iter()
            .enumerate()
            .map(|(i, o)| match o {
                Some(s) => Ok(s),
                None => Err(errors
                    .get(i)
                    .cloned()
                    .flatten()
                    .unwrap_or_else(|| "generation failed".into())),
            })
            .collect()
    }

    fn snapshot(&self) -> Result<Vec<u8>, BackendError> {
        let n = self.saves.fetch_add(1, Ordering::SeqCst);
        let path = self.checkpoint_dir().join(format!("snapshot-{n:05}"));
        self.call(&Request::Save { path: path.clone() })?;
        serde_json::to_vec(&ExternalPayload { path }).map_err(|e| BackendError::Internal(e.to_string()))
    }

    fn restore(&mut self, payload: &[u8]) -> Result<(), BackendError> {
        let p: ExternalPayload =
            serde_json::from_slice(payload).map_err(|e| BackendError::BadPayload(e.to_string()))?;
        self.call(&Request::Load { path: p.path }).map(|_| ())
    }
}

fn handle(backend: &mut dyn Backend, req: Request) -> Response {
    match req {
        Request::Hello { version } => {
            if version != PROTOCOL_VERSION {
                return Response::fail(format!("unsupported protocol version {version}"));
            }
            Response {
                version: Some(PROTOCOL_VERSION),
                backend: Some(backend.spec().name().to_string()),
                ..Response::ok()
            }
        }
        Request::FitStep { batch, lr } => {
            let batch: Vec<PromptInstance> = batch
                .into_iter()
                .map(|w| PromptInstance {
                    input_text: w.input,
                    target_text: w.target,
                    label: w.label,
                    origin: Origin {
                        example_id: w.example_id,
                        task: w.task,
                    },
                })
                .collect();
            match backend.fit_step(&batch, lr) {
                Ok(loss) => Response {
                    loss: Some(loss),
                    ..Response::ok()
                },
                Err(e) => Response::fail(e.to_string()),
            }
        }
        Request::Generate { inputs } => {
            let (outputs, errors) = backend
                .generate(&inputs)
                .into_iter()
                .map(|r| match r {
                    Ok(s) => (Some(s), None),
                    Err(e) => (None, Some(e)),
                })
                .unzip();
            Response {
                outputs: Some(outputs),
                errors: Some(errors),
                ..Response::ok()
            }
        }
        Request::Save { path } => {
            let result = backend.snapshot().map_err(|e| e.to_string()).and_then(|bytes| {
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
                }
                std::fs::write(&path, bytes).map_err(|e| format!("{}: {e}", path.display()))
            });
            match result {
                Ok(()) => Response::ok(),
                Err(e) => Response::fail(e),
            }
        }
        Request::Load { path } => {
            let result = std::fs::read(&path)
                .map_err(|e| format!("{}: {e}", path.display()))
                .and_then(|bytes| backend.restore(&bytes).map_err(|e| e.to_string()));
            match result {
                Ok(()) => Response::ok(),
                Err(e) => Response::fail(e),
            }
        }
        Request::Shutdown => Response::ok(),
    }
}

/// Serves `backend` over the line protocol until `shutdown` or end of input.
pub fn serve<R: BufRead, W: Write>(backend: &mut dyn Backend, input: R, mut output: W) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (resp, stop) = match serde_json::from_str::<Request>(&line) {
            Ok(req) => {
                let stop = matches!(req, Request::Shutdown);
                (handle(backend, req), stop)
            }
            Err(e) => (Response::fail(format!("bad request: {e}")), false),
        };
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
        if stop {
            break;
        }
    }
    Ok(())
}
