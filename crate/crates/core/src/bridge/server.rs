use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpListener, TcpStream};

use super::protocol::{Reply, Request, Role, Variable, PROTOCOL_VERSION};
use crate::error::{Error, Result};
use crate::plant::Plant;

/// Longer request lines are answered with an error and otherwise discarded.
pub const MAX_LINE_BYTES: usize = 1 << 16;

/// Server-side state of one connection: the plant state, the held inputs and
/// the simulated clock.
pub struct Session<'a> {
    plant: &'a dyn Plant,
    x: Vec<f64>,
    u: Vec<f64>,
    t: f64,
    greeted: bool,
    finished: bool,
    steps: usize,
}

impl<'a> Session<'a> {
    pub fn new(plant: &'a dyn Plant, x0: &[f64]) -> Result<Self> {
        if x0.len() != plant.state_dim() {
            return Err(Error::dims("initial state", plant.state_dim(), x0.len()));
        }
        Ok(Self {
            plant,
            x: x0.to_vec(),
            u: vec![0.0; plant.input_dim()],
            t: 0.0,
            greeted: false,
            finished: false,
            steps: 0,
        })
    }

    pub fn registry(&self) -> Vec<Variable> {
        let var = |name: String, role| Variable { name, role };
        let mut v: Vec<Variable> = (1..=self.plant.state_dim())
            .map(|i| var(format!("x{i}"), Role::State))
            .collect();
        v.extend((1..=self.plant.input_dim()).map(|i| var(format!("u{i}"), Role::Input)));
        v.extend(self.plant.output_names().into_iter().map(|n| var(n, Role::Output)));
        v
    }

    pub fn finished(&self) -> bool {
        self.finished
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    /// Answers one request line. Never panics on any input.
    pub fn handle_line(&mut self, line: &str) -> Reply {
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            return Reply::error("empty request");
        }
        match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(req),
            Err(e) => Reply::error(format!("malformed request: {e}")),
        }
    }

    pub fn handle(&mut self, req: Request) -> Reply {
        if self.finished {
            return Reply::error("session closed");
        }
        match req {
            Request::Hello { version } => {
                if version != PROTOCOL_VERSION {
                    return Reply::error(format!(
                        "unsupported protocol version {version}; server speaks {PROTOCOL_VERSION}"
                    ));
                }
                self.greeted = true;
                Reply {
                    version: Some(PROTOCOL_VERSION),
                    plant: Some(self.plant.name().to_owned()),
                    variables: Some(self.registry()),
                    t: Some(self.t),
                    ..Reply::ok()
                }
            }
            _ if !self.greeted => Reply::error("hello required before other requests"),
            Request::Get { names } => {
                let outputs = self.plant.outputs(&self.x);
                let out_names = self.plant.output_names();
                let mut values = Vec::with_capacity(names.len());
                for name in &names {
                    let v = match self.slot(name) {
                        Some((Role::State, i)) => self.x[i],
                        Some((Role::Input, i)) => self.u[i],
                        _ => match out_names.iter().position(|n| n == name) {
                            Some(i) => outputs[i],
                            None => return Reply::error(format!("unknown variable {name:?}")),
                        },
                    };
                    values.push(v);
                }
                Reply {
                    values: Some(values),
                    ..Reply::ok()
                }
            }
            Request::Set { name, value } => {
                if !value.is_finite() {
                    return Reply::error("value must be finite");
                }
                match self.slot(&name) {
                    Some((Role::State, i)) => self.x[i] = value,
                    Some((Role::Input, i)) => self.u[i] = value,
                    _ if self.plant.output_names().contains(&name) => {
                        return Reply::error(format!("{name:?} is an output and cannot be set"))
                    }
                    _ => return Reply::error(format!("unknown variable {name:?}")),
                }
                Reply::ok()
            }
            Request::Step { dt } => {
                if !(dt.is_finite() && dt > 0.0) {
                    return Reply::error("dt must be positive and finite");
                }
                match self.plant.advance(&self.x, &self.u, dt) {
                    Ok(next) => {
                        self.x = next;
                        self.t += dt;
                        self.steps += 1;
                        Reply {
                            t: Some(self.t),
                            state: Some(self.x.clone()),
                            ..Reply::ok()
                        }
                    }
                    Err(e) => Reply::error(format!("step failed: {e}")),
                }
            }
            Request::Bye => {
                self.finished = true;
                Reply::ok()
            }
        }
    }

    /// `x<i>` and `u<i>` with 1-based `i`.
    fn slot(&self, name: &str) -> Option<(Role, usize)> {
        let (role, dim) = match name.as_bytes().first()? {
            b'x' => (Role::State, self.x.len()),
            b'u' => (Role::Input, self.u.len()),
            _ => return None,
        };
        let digits = &name[1..];
        if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let i: usize = digits.parse().ok()?;
        (1..=dim).contains(&i).then_some((role, i - 1))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ServeSummary {
    /// Connections accepted, including the one that said bye.
    pub sessions: usize,
    pub requests: usize,
    /// Steps taken in the final session.
    pub steps: usize,
}

/// Serves one client at a time until a client says bye. A session that ends
/// without bye (disconnect or transport error) is discarded together with its
/// plant state, and the next connection starts from `x0` again.
pub fn serve_plant(plant: &dyn Plant, listener: &TcpListener, x0: &[f64]) -> Result<ServeSummary> {
    let mut summary = ServeSummary::default();
    loop {
        let (stream, peer) = listener.accept().map_err(|e| Error::Transport {
            context: "accept".into(),
            source: e,
        })?;
        log::info!("session from {peer}");
        summary.sessions += 1;
        let mut session = Session::new(plant, x0)?;
        match serve_session(&mut session, stream, &mut summary.requests) {
            Ok(()) if session.finished() => {
                summary.steps = session.steps;
                return Ok(summary);
            }
            Ok(()) => log::warn!("client {peer} disconnected without bye; session discarded"),
            Err(e) => log::warn!("session with {peer} torn down: {e}"),
        }
    }
}

fn serve_session(session: &mut Session, stream: TcpStream, requests: &mut usize) -> Result<()> {
    let transport = |context: &str| {
        let context = context.to_owned();
        move |source| Error::Transport { context, source }
    };
    let mut writer = stream.try_clone().map_err(transport("clone stream"))?;
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    while !session.finished() {
        buf.clear();
        let Some(overflow) = read_line_limited(&mut reader, &mut buf, MAX_LINE_BYTES).map_err(transport("read"))?
        else {
            return Ok(());
        };
        *requests += 1;
        let reply = if overflow {
            Reply::error(format!("request longer than {MAX_LINE_BYTES} bytes"))
        } else {
            match std::str::from_utf8(&buf) {
                Ok(line) => session.handle_line(line),
                Err(_) => Reply::error("request is not valid UTF-8"),
            }
        };
        let mut out = reply.to_line();
        out.push('\n');
        writer.write_all(out.as_bytes()).map_err(transport("write"))?;
    }
    Ok(())
}

/// Reads through the next LF, keeping at most `limit` bytes. Returns `None`
/// at end of stream with nothing read, otherwise whether the line overflowed.
fn read_line_limited<R: BufRead>(r: &mut R, buf: &mut Vec<u8>, limit: usize) -> std::io::Result<Option<bool>> {
    let mut overflow = false;
    let mut any = false;
    loop {
        let chunk = match r.fill_buf() {
            Ok(c) => c,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        if chunk.is_empty() {
            return Ok(any.then_some(overflow));
        }
        any = true;
        let (take, done) = match chunk.iter().position(|&b| b == b'\n') {
            Some(i) => (i + 1, true),
            None => (chunk.len(), false),
        };
        let room = limit.saturating_sub(buf.len());
        if take > room {
            overflow = true;
        }
        buf.extend_from_slice(&chunk[..take.min(room)]);
        r.consume(take);
        if done {
            return Ok(Some(overflow));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{CstrPlant, ToyPlant};

    fn greeted(plant: &dyn Plant) -> Session<'_> {
        let mut s = Session::new(plant, &vec![0.0; plant.state_dim()]).unwrap();
        assert!(s.handle_line(r#"{"op":"hello","version":1}"#).ok);
        s
    }

    #[test]
    fn hello_lists_registry() {
        let plant = CstrPlant::default();
        let mut s = Session::new(&plant, &[0.0, 0.0]).unwrap();
        let r = s.handle_line(r#"{"op":"hello","version":1}"#);
        assert_eq!(r.version, Some(1));
        let names: Vec<_> = r.variables.unwrap().into_iter().map(|v| v.name).collect();
        assert_eq!(names, ["x1", "x2", "u1", "u2", "CA", "T"]);
    }

    #[test]
    fn version_mismatch_refused() {
        let plant = ToyPlant;
        let mut s = Session::new(&plant, &[0.0, 0.0]).unwrap();
        assert!(!s.handle_line(r#"{"op":"hello","version":2}"#).ok);
        assert!(!s.handle_line(r#"{"op":"step","dt":0.01}"#).ok);
    }

    #[test]
    fn set_get_round_trip() {
        let plant = CstrPlant::default();
        let mut s = greeted(&plant);
        assert!(s.handle_line(r#"{"op":"set","name":"u2","value":-123456.789012345}"#).ok);
        let r = s.handle_line(r#"{"op":"get","names":["u2","x1"]}"#);
        assert_eq!(r.values.unwrap(), vec![-123456.789012345, 0.0]);
    }

    #[test]
    fn outputs_are_read_only() {
        let plant = CstrPlant::default();
        let mut s = greeted(&plant);
        assert!(!s.handle_line(r#"{"op":"set","name":"T","value":400}"#).ok);
        assert!(!s.handle_line(r#"{"op":"set","name":"x3","value":1}"#).ok);
        assert!(!s.handle_line(r#"{"op":"set","name":"x01","value":1}"#).ok);
        assert!(s.handle_line(r#"{"op":"get","names":["CA","T"]}"#).ok);
    }

    #[test]
    fn step_advances_time_and_state() {
        let plant = ToyPlant;
        let mut s = greeted(&plant);
        let a = s.handle_line(r#"{"op":"step","dt":0.01}"#);
        let b = s.handle_line(r#"{"op":"step","dt":0.01}"#);
        assert_eq!(a.state.unwrap(), vec![-1.0, -1.0]);
        assert!(b.t.unwrap() > a.t.unwrap());
        assert!(!s.handle_line(r#"{"op":"step","dt":0}"#).ok);
        assert!(!s.handle_line(r#"{"op":"step","dt":-1}"#).ok);
    }

    #[test]
    fn malformed_lines_get_error_replies() {
        let plant = ToyPlant;
        let mut s = greeted(&plant);
        for line in ["", "{", "null", r#"{"op":"jump"}"#, r#"{"op":"set","name":"u1"}"#, r#"{"op":"set","name":"u1","value":1e999}"#] {
            let r = s.handle_line(line);
            assert!(!r.ok, "{line}");
            assert!(r.err.is_some());
        }
    }

    #[test]
    fn bye_closes_session() {
        let plant = ToyPlant;
        let mut s = greeted(&plant);
        assert!(s.handle_line(r#"{"op":"bye"}"#).ok);
        assert!(s.finished());
        assert!(!s.handle_line(r#"{"op":"get","names":["x1"]}"#).ok);
    }

    #[test]
    fn long_lines_are_truncated() {
        let mut data = vec![b'a'; 100];
        data.push(b'\n');
        data.extend_from_slice(b"ok\n");
        let mut r = std::io::Cursor::new(data);
        let mut buf = Vec::new();
        assert_eq!(read_line_limited(&mut r, &mut buf, 10).unwrap(), Some(true));
        assert_eq!(buf.len(), 10);
        buf.clear();
        assert_eq!(read_line_limited(&mut r, &mut buf, 10).unwrap(), Some(false));
        assert_eq!(buf, b"ok\n");
        buf.clear();
        assert_eq!(read_line_limited(&mut r, &mut buf, 10).unwrap(), None);
    }
}
