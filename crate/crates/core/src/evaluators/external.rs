use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::protocol::{
    read_frame, write_frame, write_json_line, Handshake, HandshakeReply, OutputMode,
    PROTOCOL_VERSION,
};
use super::{EvaluationResult, ExternalSpec, OutputShape};
use crate::error::{Error, Result};
use crate::slicing::Slice2;

enum Incoming {
    Handshake(String),
    Frame(u32, Vec<f32>),
    Eof,
    Failed(String),
}

/// A running external evaluator process.
///
/// Requests are strictly ordered. At most one request may be outstanding,
/// which lets the caller prepare the next batch while the evaluator works.
pub struct ExternalEvaluator {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    incoming: Receiver<Incoming>,
    reader: Option<JoinHandle<()>>,
    handshake: Handshake,
    timeout: Duration,
    pending: Option<u32>,
    /// Set after any failed exchange; the process is then killed, not asked to stop.
    broken: bool,
}

impl std::fmt::Debug for ExternalEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalEvaluator")
            .field("pid", &self.child.id())
            .field("handshake", &self.handshake)
            .field("timeout", &self.timeout)
            .field("pending", &self.pending)
            .finish()
    }
}

impl ExternalEvaluator {
    pub fn spawn(spec: &ExternalSpec, h: usize, w: usize, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameter("need at least one channel".into()));
        }
        let (out, gh, gw) = match spec.output() {
            OutputShape::Scalar => (OutputMode::Scalar, 1, 1),
            OutputShape::Grid { gh, gw } => (OutputMode::Grid, gh, gw),
        };
        let handshake = Handshake {
            proto: PROTOCOL_VERSION,
            h,
            w,
            c: channels,
            out,
            gh,
            gw,
        };

        let mut child = Command::new(&spec.program)
            .args(&spec.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::EvaluatorExited(format!("failed to start {:?}: {e}", spec.program)))?;
        let stdin = BufWriter::new(child.stdin.take().expect("stdin is piped"));
        let stdout = child.stdout.take().expect("stdout is piped");

        let per_response = handshake.response_floats_per_slice();
        let (tx, incoming) = mpsc::channel();
        let reader = thread::spawn(move || {
            let mut stdout = BufReader::new(stdout);
            let mut line = String::new();
            match stdout.read_line(&mut line) {
                Ok(0) => {
                    let _ = tx.send(Incoming::Eof);
                    return;
                }
                Ok(_) => {
                    if tx.send(Incoming::Handshake(line)).is_err() {
                        return;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Incoming::Failed(e.to_string()));
                    return;
                }
            }
            loop {
                let msg = match read_frame(&mut stdout, per_response) {
                    Ok(Some((count, values))) => Incoming::Frame(count, values),
                    Ok(None) => Incoming::Eof,
                    Err(e) => Incoming::Failed(e.to_string()),
                };
                let done = !matches!(msg, Incoming::Frame(..));
                if tx.send(msg).is_err() || done {
                    return;
                }
            }
        });

        let mut session = Self {
            child,
            stdin: Some(stdin),
            incoming,
            reader: Some(reader),
            handshake,
            timeout: spec.timeout(),
            pending: None,
            broken: false,
        };
        if let Err(e) = session.negotiate() {
            session.broken = true;
            return Err(e);
        }
        Ok(session)
    }

    fn negotiate(&mut self) -> Result<()> {
        let hs = self.handshake.clone();
        self.write(|w| write_json_line(w, &hs))?;
        match self.receive()? {
            Incoming::Handshake(line) => {
                let reply: HandshakeReply = serde_json::from_str(line.trim())
                    .map_err(|e| Error::Protocol(format!("bad handshake reply {line:?}: {e}")))?;
                if reply.ok {
                    Ok(())
                } else {
                    Err(Error::HandshakeRejected(reply.err.unwrap_or_default()))
                }
            }
            _ => Err(Error::Protocol("expected handshake reply".into())),
        }
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    pub fn output(&self) -> OutputShape {
        match self.handshake.out {
            OutputMode::Scalar => OutputShape::Scalar,
            OutputMode::Grid => OutputShape::Grid {
                gh: self.handshake.gh,
                gw: self.handshake.gw,
            },
        }
    }

    fn exit_description(&mut self) -> String {
        // Give a dying process a moment to be reaped so the status is useful.
        for _ in 0..50 {
            if let Ok(Some(status)) = self.child.try_wait() {
                return format!("process exited with {status}");
            }
            thread::sleep(Duration::from_millis(10));
        }
        "output stream closed".to_owned()
    }

    fn write(&mut self, f: impl FnOnce(&mut BufWriter<ChildStdin>) -> std::io::Result<()>) -> Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Protocol("session already shut down".into()))?;
        if let Err(e) = f(stdin) {
            self.broken = true;
            let status = self.exit_description();
            return Err(Error::EvaluatorExited(format!("write failed ({e}); {status}")));
        }
        Ok(())
    }

    fn receive(&mut self) -> Result<Incoming> {
        let out = self.receive_message();
        self.broken |= out.is_err();
        out
    }

    fn receive_message(&mut self) -> Result<Incoming> {
        match self.incoming.recv_timeout(self.timeout) {
            Ok(Incoming::Eof) | Err(RecvTimeoutError::Disconnected) => {
                Err(Error::EvaluatorExited(self.exit_description()))
            }
            Ok(Incoming::Failed(reason)) => Err(Error::Protocol(reason)),
            Ok(msg) => Ok(msg),
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                Err(Error::Timeout(self.timeout))
            }
        }
    }

    /// Sends one batch without waiting for its response.
    pub fn submit(&mut self, channels: &[&[Slice2]]) -> Result<()> {
        if self.pending.is_some() {
            return Err(Error::Protocol("a request is already outstanding".into()));
        }
        let hs = &self.handshake;
        if channels.len() != hs.c {
            return Err(Error::ShapeMismatch(format!(
                "negotiated {} channels, got {}",
                hs.c,
                channels.len()
            )));
        }
        let count = channels[0].len();
        let mut payload = Vec::with_capacity(count * hs.request_floats_per_slice());
        for k in 0..count {
            for channel in channels {
                let slice = channel.get(k).ok_or_else(|| {
                    Error::ShapeMismatch("channels carry different slice counts".into())
                })?;
                if slice.shape() != [hs.h, hs.w] {
                    return Err(Error::ShapeMismatch(format!(
                        "negotiated {}x{} slices, got {:?}",
                        hs.h,
                        hs.w,
                        slice.shape()
                    )));
                }
                payload.extend_from_slice(slice.data());
            }
        }
        if channels.iter().any(|c| c.len() != count) {
            return Err(Error::ShapeMismatch("channels carry different slice counts".into()));
        }
        if count == 0 {
            // A zero count means shutdown on the wire; answer locally.
            self.pending = Some(0);
            return Ok(());
        }
        let count = u32::try_from(count)
            .map_err(|_| Error::InvalidParameter(format!("batch of {count} slices is too large")))?;
        self.write(|w| write_frame(w, count, &payload))?;
        self.pending = Some(count);
        Ok(())
    }

    /// Waits for the outstanding batch.
    pub fn collect(&mut self) -> Result<EvaluationResult> {
        let out = self.collect_frame();
        self.broken |= out.is_err();
        out
    }

    fn collect_frame(&mut self) -> Result<EvaluationResult> {
        let cells = self.output().cells();
        let expected = self
            .pending
            .take()
            .ok_or_else(|| Error::Protocol("no request outstanding".into()))?;
        if expected == 0 {
            return Ok(EvaluationResult::empty(cells));
        }
        match self.receive()? {
            Incoming::Frame(count, values) => {
                if count != expected {
                    return Err(Error::Protocol(format!(
                        "response count {count} does not echo request count {expected}"
                    )));
                }
                if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteResponse(pos));
                }
                Ok(EvaluationResult {
                    cells,
                    values: values.into_iter().map(f64::from).collect(),
                })
            }
            _ => Err(Error::Protocol("unexpected message in place of a response frame".into())),
        }
    }

    pub fn evaluate(&mut self, channels: &[&[Slice2]]) -> Result<EvaluationResult> {
        self.submit(channels)?;
        self.collect()
    }

    /// Sends the zero-count shutdown, checks the echo and reaps the process.
    pub fn shutdown(mut self) -> Result<()> {
        if self.pending.is_some() {
            self.collect()?;
        }
        self.write(|w| write_frame(w, 0, &[]))?;
        let result = match self.receive()? {
            Incoming::Frame(0, _) => Ok(()),
            Incoming::Frame(n, _) => Err(Error::Protocol(format!(
                "shutdown echoed count {n} instead of 0"
            ))),
            _ => Err(Error::Protocol("expected shutdown echo".into())),
        };
        self.stdin = None;
        let status = self
            .child
            .wait()
            .map_err(|e| Error::EvaluatorExited(e.to_string()))?;
        if let Some(reader) = self.reader.take() {
            let _ = reader.join();
        }
        result?;
        if !status.success() {
            return Err(Error::EvaluatorExited(format!("process exited with {status}")));
        }
        Ok(())
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        if let Some(mut stdin) = self.stdin.take() {
            if !self.broken && self.pending.is_none() {
                let _ = write_frame(&mut stdin, 0, &[]);
                let _ = stdin.flush();
                drop(stdin);
                let _ = self.incoming.recv_timeout(Duration::from_secs(2));
            }
        }
        let exited = matches!(self.child.try_wait(), Ok(Some(_)));
        if !exited {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
        // Grandchildren may still hold stdout; only join a reader that is
        // known to reach end of stream.
        if exited && !self.broken {
            if let Some(reader) = self.reader.take() {
                let _ = reader.join();
            }
        }
    }
}
