//! Line-delimited JSON protocol exposing environments to other processes.
//!
//! Each request is one JSON object on one line; each gets exactly one
//! response line, in order. A connection owns its environments: ids are
//! allocated per session and never visible to other connections.
//!
//! ```text
//! -> {"cmd":"make","config":{"circuit":{"generate":{"family":"cuccaro","bits":1}},"num_cores":2}}
//! <- {"env_id":0,"obs":[...],"mask":[...],"info":{"num_actions":11,...}}
//! -> {"cmd":"step","env_id":0,"action":10}
//! <- {"env_id":0,"obs":[...],"mask":[...],"reward":1.0,"terminated":false,"truncated":false,"info":{...}}
//! ```
//!
//! Floats are written in shortest round-trip form, so a client parsing them
//! back gets the exact values the environment produced.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::environment::{EnvConfig, StepInfo};
use crate::Env;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Make,
    Reset,
    Step,
    Mask,
    Close,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub cmd: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<EnvConfig>,
    /// `make`/`reset`: overrides the config seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Request {
    pub fn new(cmd: Command) -> Self {
        Request {
            cmd,
            env_id: None,
            action: None,
            config: None,
            seed: None,
        }
    }

    pub fn make(config: EnvConfig) -> Self {
        Request {
            config: Some(config),
            ..Request::new(Command::Make)
        }
    }

    pub fn reset(env_id: u64, seed: Option<u64>) -> Self {
        Request {
            env_id: Some(env_id),
            seed,
            ..Request::new(Command::Reset)
        }
    }

    pub fn step(env_id: u64, action: usize) -> Self {
        Request {
            env_id: Some(env_id),
            action: Some(action),
            ..Request::new(Command::Step)
        }
    }

    pub fn for_env(cmd: Command, env_id: u64) -> Self {
        Request {
            env_id: Some(env_id),
            ..Request::new(cmd)
        }
    }
}

/// Fields not relevant to a command are omitted from the wire.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    #[serde(default)]
    pub env_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminated: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<bool>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub info: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    fn error(env_id: Option<u64>, message: impl Into<String>) -> Self {
        Response {
            env_id,
            error: Some(message.into()),
            ..Response::default()
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

fn step_info(info: &StepInfo) -> BTreeMap<String, Value> {
    match serde_json::to_value(info) {
        Ok(Value::Object(map)) => map.into_iter().collect(),
        _ => unreachable!("StepInfo serializes to an object"),
    }
}

fn env_info(env: &Env) -> BTreeMap<String, Value> {
    let mut info = BTreeMap::new();
    info.insert("num_qubits".into(), json!(env.num_qubits()));
    info.insert("num_cores".into(), json!(env.cores().num_cores));
    info.insert("num_slices".into(), json!(env.slices().len()));
    info.insert("num_actions".into(), json!(env.num_actions()));
    info.insert("observation_len".into(), json!(env.observation_len()));
    info.insert("budget".into(), json!(env.budget()));
    info
}

/// Environments of one connection.
#[derive(Default)]
pub struct Session {
    envs: BTreeMap<u64, Env>,
    next_id: u64,
}

impl Session {
    pub fn new() -> Self {
        Session::default()
    }

    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn handle(&mut self, req: Request) -> Response {
        let id = req.env_id;
        if req.cmd == Command::Make {
            return self.make(req);
        }
        if req.cmd == Command::Shutdown {
            return Response {
                env_id: id,
                ..Response::default()
            };
        }
        let Some(env_id) = id else {
            return Response::error(None, "missing env_id");
        };
        let Some(env) = self.envs.get_mut(&env_id) else {
            return Response::error(id, format!("unknown env_id {env_id}"));
        };
        match req.cmd {
            Command::Reset => {
                let (obs, mask) = match req.seed {
                    Some(seed) => env.reset_with_seed(seed),
                    None => env.reset(),
                };
                Response {
                    env_id: id,
                    obs: Some(obs),
                    mask: Some(mask.as_slice().to_vec()),
                    info: env_info(env),
                    ..Response::default()
                }
            }
            Command::Step => {
                let Some(action) = req.action else {
                    return Response::error(id, "step needs an action");
                };
                match env.step(action) {
                    Ok(r) => Response {
                        env_id: id,
                        obs: Some(r.observation),
                        mask: Some(r.mask.as_slice().to_vec()),
                        reward: Some(r.reward),
                        terminated: Some(r.terminated),
                        truncated: Some(r.truncated),
                        info: step_info(&r.info),
                        error: None,
                    },
                    Err(e) => Response::error(id, e.to_string()),
                }
            }
            Command::Mask => Response {
                env_id: id,
                mask: Some(env.mask().as_slice().to_vec()),
                ..Response::default()
            },
            Command::Close => {
                self.envs.remove(&env_id);
                Response {
                    env_id: id,
                    ..Response::default()
                }
            }
            Command::Make | Command::Shutdown => unreachable!("handled above"),
        }
    }

    fn make(&mut self, req: Request) -> Response {
        let Some(mut config) = req.config else {
            return Response::error(None, "make needs a config");
        };
        if let Some(seed) = req.seed {
            config.seed = seed;
        }
        let mut env = match Env::new(config) {
            Ok(env) => env,
            Err(e) => return Response::error(None, e.to_string()),
        };
        let id = self.next_id;
        self.next_id += 1;
        let (obs, mask) = env.reset();
        let response = Response {
            env_id: Some(id),
            obs: Some(obs),
            mask: Some(mask.as_slice().to_vec()),
            info: env_info(&env),
            ..Response::default()
        };
        self.envs.insert(id, env);
        response
    }

    /// Handles one raw line. Returns the response line (without newline) and
    /// whether the client asked to shut down.
    pub fn handle_line(&mut self, line: &str) -> (String, bool) {
        let (response, shutdown) = match serde_json::from_str::<Request>(line) {
            Ok(req) => {
                let shutdown = req.cmd == Command::Shutdown;
                (self.handle(req), shutdown)
            }
            Err(e) => (Response::error(None, format!("parse error: {e}")), false),
        };
        let text = serde_json::to_string(&response).expect("responses always serialize");
        (text, shutdown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    /// A client sent `shutdown`.
    Shutdown,
    /// The input ended or the peer went away.
    Disconnected,
}

/// Serves one session over a line stream until shutdown or end of input.
/// Blank lines are ignored.
pub fn serve_io(input: impl BufRead, mut output: impl Write) -> io::Result<Exit> {
    let mut session = Session::new();
    for line in input.lines() {
        let line = match line {
            Ok(line) => line,
            Err(e) if is_disconnect(&e) => return Ok(Exit::Disconnected),
            Err(e) => return Err(e),
        };
        if line.trim().is_empty() {
            continue;
        }
        let (text, shutdown) = session.handle_line(&line);
        let written = writeln!(output, "{text}").and_then(|_| output.flush());
        match written {
            Ok(()) => {}
            Err(e) if is_disconnect(&e) => return Ok(Exit::Disconnected),
            Err(e) => return Err(e),
        }
        if shutdown {
            return Ok(Exit::Shutdown);
        }
    }
    Ok(Exit::Disconnected)
}

fn is_disconnect(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::BrokenPipe
            | io::ErrorKind::ConnectionReset
            | io::ErrorKind::ConnectionAborted
    )
}

pub fn serve_stdio() -> io::Result<Exit> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve_io(stdin.lock(), BufWriter::new(stdout.lock()))
}

/// TCP transport: one thread and one [`Session`] per connection. Any
/// client's `shutdown` stops the listener.
pub struct TcpServer {
    listener: TcpListener,
}

impl TcpServer {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        Ok(TcpServer {
            listener: TcpListener::bind(addr)?,
        })
    }

    /// Binds `127.0.0.1:port`; port 0 picks a free one.
    pub fn localhost(port: u16) -> io::Result<Self> {
        Self::bind(("127.0.0.1", port))
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until a client sends `shutdown`.
    pub fn run(self) -> io::Result<()> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let mut workers = Vec::new();
        for stream in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) if is_disconnect(&e) => continue,
                Err(e) => return Err(e),
            };
            let stop = Arc::clone(&stop);
            workers.push(thread::spawn(move || {
                let exit = serve_connection(stream);
                if matches!(exit, Ok(Exit::Shutdown)) {
                    stop.store(true, Ordering::SeqCst);
                    // wake the accept loop so it sees the flag
                    let _ = TcpStream::connect(addr);
                }
            }));
            workers.retain(|w| !w.is_finished());
        }
        // other clients are cut off when the process exits
        Ok(())
    }
}

fn serve_connection(stream: TcpStream) -> io::Result<Exit> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_io(reader, BufWriter::new(stream))
}
