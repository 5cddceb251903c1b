use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::protocol::{Reply, Request, Role, Variable, PROTOCOL_VERSION};
use crate::control::{Controller, LogRow, LoopSettings, TrajectoryLog};
use crate::error::{Error, Result};

/// Per-request reply deadline.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

/// Synchronous protocol client holding a greeted connection.
pub struct BridgeClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    plant: String,
    registry: Vec<Variable>,
}

fn io_error(context: &str, e: std::io::Error) -> Error {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => Error::Timeout(format!("reply to {context}")),
        _ => Error::Transport {
            context: context.to_owned(),
            source: e,
        },
    }
}

impl BridgeClient {
    /// Connects and performs the hello handshake.
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self> {
        let addr = endpoint
            .to_socket_addrs()
            .map_err(|e| io_error("resolve endpoint", e))?
            .next()
            .ok_or_else(|| Error::InvalidConfig(format!("endpoint {endpoint:?} resolves to nothing")))?;
        let stream = TcpStream::connect_timeout(&addr, timeout).map_err(|e| io_error("connect", e))?;
        stream.set_read_timeout(Some(timeout)).map_err(|e| io_error("configure", e))?;
        stream.set_write_timeout(Some(timeout)).map_err(|e| io_error("configure", e))?;
        stream.set_nodelay(true).map_err(|e| io_error("configure", e))?;
        let writer = stream.try_clone().map_err(|e| io_error("configure", e))?;
        let mut client = Self {
            reader: BufReader::new(stream),
            writer,
            plant: String::new(),
            registry: Vec::new(),
        };
        let reply = client.request(&Request::Hello {
            version: PROTOCOL_VERSION,
        })?;
        if reply.version != Some(PROTOCOL_VERSION) {
            return Err(Error::Protocol(format!(
                "server answered hello with version {:?}",
                reply.version
            )));
        }
        client.plant = reply.plant.unwrap_or_default();
        client.registry = reply
            .variables
            .ok_or_else(|| Error::Protocol("hello reply lacks the variable registry".into()))?;
        Ok(client)
    }

    pub fn plant(&self) -> &str {
        &self.plant
    }

    pub fn registry(&self) -> &[Variable] {
        &self.registry
    }

    pub fn names(&self, role: Role) -> Vec<String> {
        self.registry
            .iter()
            .filter(|v| v.role == role)
            .map(|v| v.name.clone())
            .collect()
    }

    /// Sends one request and returns its reply; `ok = false` becomes a
    /// protocol error carrying the server's message.
    pub fn request(&mut self, req: &Request) -> Result<Reply> {
        let op = match req {
            Request::Hello { .. } => "hello",
            Request::Get { .. } => "get",
            Request::Set { .. } => "set",
            Request::Step { .. } => "step",
            Request::Bye => "bye",
        };
        let mut line = req.to_line();
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(|e| io_error(op, e))?;
        let mut reply = String::new();
        let n = self.reader.read_line(&mut reply).map_err(|e| io_error(op, e))?;
        if n == 0 {
            return Err(Error::Protocol(format!("server closed the connection during {op}")));
        }
        let reply: Reply = serde_json::from_str(reply.trim_end())
            .map_err(|e| Error::Protocol(format!("unreadable reply to {op}: {e}")))?;
        if !reply.ok {
            return Err(Error::Protocol(format!(
                "{op} refused: {}",
                reply.err.as_deref().unwrap_or("no reason given")
            )));
        }
        Ok(reply)
    }

    pub fn get(&mut self, names: &[String]) -> Result<Vec<f64>> {
        let values = self
            .request(&Request::Get { names: names.to_vec() })?
            .values
            .ok_or_else(|| Error::Protocol("get reply lacks values".into()))?;
        if values.len() != names.len() {
            return Err(Error::Protocol(format!(
                "asked for {} values, got {}",
                names.len(),
                values.len()
            )));
        }
        Ok(values)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        self.request(&Request::Set {
            name: name.to_owned(),
            value,
        })
        .map(drop)
    }

    /// Advances the plant by `dt`; returns the new time and state.
    pub fn step(&mut self, dt: f64) -> Result<(f64, Vec<f64>)> {
        let r = self.request(&Request::Step { dt })?;
        match (r.t, r.state) {
            (Some(t), Some(x)) => Ok((t, x)),
            _ => Err(Error::Protocol("step reply lacks t or state".into())),
        }
    }

    pub fn bye(mut self) -> Result<()> {
        self.request(&Request::Bye).map(drop)
    }
}

/// Log of a bridged run and the error that ended it early, if any.
#[derive(Debug)]
pub struct BridgeRun {
    pub log: TrajectoryLog,
    pub error: Option<Error>,
}

/// Closed loop through the bridge: get the state, decide, set the inputs,
/// step. The log has the same rows as the in-process loop. When `x0` is
/// given, the plant state is set to it first.
pub fn run_bridge_loop(
    client: &mut BridgeClient,
    controller: &mut dyn Controller,
    x0: Option<&[f64]>,
    settings: &LoopSettings,
) -> BridgeRun {
    let states = client.names(Role::State);
    let inputs = client.names(Role::Input);
    let mut log = TrajectoryLog::new(controller.name(), states.len(), inputs.len());
    controller.reset();
    let error = drive(client, controller, x0, settings, &states, &inputs, &mut log).err();
    if error.is_some() {
        log.halted = true;
    }
    BridgeRun { log, error }
}

fn drive(
    client: &mut BridgeClient,
    controller: &mut dyn Controller,
    x0: Option<&[f64]>,
    settings: &LoopSettings,
    states: &[String],
    inputs: &[String],
    log: &mut TrajectoryLog,
) -> Result<()> {
    if let Some(x0) = x0 {
        if x0.len() != states.len() {
            return Err(Error::dims("initial state", states.len(), x0.len()));
        }
        for (name, v) in states.iter().zip(x0) {
            client.set(name, *v)?;
        }
    }
    let mut x = client.get(states)?;
    if let Some(b) = &settings.halt_box {
        if !b.contains(&x) {
            return Err(Error::OutsideDomain(format!("initial state {x:?} is outside the halt box")));
        }
    }
    let mut last_t = f64::NEG_INFINITY;
    for step in 0..settings.steps {
        let started = Instant::now();
        let decision = controller.decide(&x)?;
        let solve_time = started.elapsed().as_secs_f64();
        if decision.input.len() != inputs.len() {
            return Err(Error::dims("controller input", inputs.len(), decision.input.len()));
        }
        for (name, v) in inputs.iter().zip(&decision.input) {
            client.set(name, *v)?;
        }
        let (t, next) = client.step(settings.dt)?;
        if t <= last_t {
            return Err(Error::Protocol(format!("step time went from {last_t} to {t}")));
        }
        if next.len() != states.len() {
            return Err(Error::Protocol(format!("step returned {} states", next.len())));
        }
        last_t = t;
        log.rows.push(LogRow {
            step,
            t: step as f64 * settings.dt,
            x: std::mem::replace(&mut x, next),
            u: Some(decision.input),
            objective: decision.objective,
            region: decision.region,
            candidates: decision.candidates,
            evaluations: decision.evaluations,
            solve_time,
            budget_exceeded: decision.budget_exceeded,
        });
        if settings.halt_box.as_ref().is_some_and(|b| !b.contains(&x)) {
            log::warn!("state {x:?} left the halt box after step {step}");
            log.halted = true;
            break;
        }
    }
    let steps = log.rows.len();
    log.rows.push(LogRow {
        step: steps,
        t: steps as f64 * settings.dt,
        x,
        u: None,
        objective: None,
        region: None,
        candidates: 0,
        evaluations: 0,
        solve_time: 0.0,
        budget_exceeded: false,
    });
    Ok(())
}
