//! Wire protocol (version 1) between the engine and an external evaluator.
//!
//! ```text
//! engine -> evaluator  {"proto":1,"h":..,"w":..,"c":..,"out":"scalar"|"grid","gh":..,"gw":..}\n
//! evaluator -> engine  {"ok":true}\n   or   {"ok":false,"err":"..."}\n
//! request              u32le k, then k*c*h*w f32le (channel-major per slice)
//! response             u32le k (echo), then k f32le (scalar) or k*gh*gw f32le (grid)
//! shutdown             k = 0, echoed back before the evaluator exits
//! ```
//!
//! The server half is exposed so evaluators can be written in Rust too.

use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    Scalar,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub proto: u32,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub out: OutputMode,
    pub gh: usize,
    pub gw: usize,
}

impl Handshake {
    /// Floats per slice in a request.
    pub fn request_floats_per_slice(&self) -> usize {
        self.c * self.h * self.w
    }

    /// Floats per slice in a response.
    pub fn response_floats_per_slice(&self) -> usize {
        match self.out {
            OutputMode::Scalar => 1,
            OutputMode::Grid => self.gh * self.gw,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandshakeReply {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub err: Option<String>,
}

impl HandshakeReply {
    pub fn accept() -> Self {
        Self { ok: true, err: None }
    }

    pub fn reject(reason: impl Into<String>) -> Self {
        Self {
            ok: false,
            err: Some(reason.into()),
        }
    }
}

pub fn write_json_line<T: Serialize>(writer: &mut impl Write, value: &T) -> io::Result<()> {
    let mut line = serde_json::to_vec(value).map_err(io::Error::other)?;
    line.push(b'\n');
    writer.write_all(&line)?;
    writer.flush()
}

/// Writes one frame: count then payload. `values.len()` must be a multiple
/// of `count` (or empty when `count == 0`).
pub fn write_frame(writer: &mut impl Write, count: u32, values: &[f32]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(4 + values.len() * 4);
    buf.extend_from_slice(&count.to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&buf)?;
    writer.flush()
}

/// Reads one frame of `count * per_item` floats. Returns `Ok(None)` on a
/// clean EOF before the count.
pub fn read_frame(reader: &mut impl Read, per_item: usize) -> io::Result<Option<(u32, Vec<f32>)>> {
    let mut head = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match reader.read(&mut head[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated frame header")),
            n => got += n,
        }
    }
    let count = u32::from_le_bytes(head);
    let mut bytes = vec![0u8; count as usize * per_item * 4];
    reader.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Some((count, values)))
}

/// Runs the evaluator side of a session until a zero-count shutdown.
///
/// `handler` receives the negotiated handshake, the slice count and the
/// request payload, and returns the response payload.
pub fn serve<R, W, F>(reader: &mut R, writer: &mut W, mut handler: F) -> Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&Handshake, usize, &[f32]) -> Vec<f32>,
{
    let proto_err = |e: io::Error| Error::Protocol(e.to_string());
    let mut line = String::new();
    reader.read_line(&mut line).map_err(proto_err)?;
    let handshake = match serde_json::from_str::<Handshake>(&line) {
        Ok(h) if h.proto == PROTOCOL_VERSION => h,
        Ok(h) => {
            let reason = format!("unsupported protocol version {}", h.proto);
            write_json_line(writer, &HandshakeReply::reject(&reason)).map_err(proto_err)?;
            return Err(Error::HandshakeRejected(reason));
        }
        Err(e) => {
            let reason = format!("malformed handshake: {e}");
            write_json_line(writer, &HandshakeReply::reject(&reason)).map_err(proto_err)?;
            return Err(Error::HandshakeRejected(reason));
        }
    };
    write_json_line(writer, &HandshakeReply::accept()).map_err(proto_err)?;

    let per_request = handshake.request_floats_per_slice();
    let per_response = handshake.response_floats_per_slice();
    loop {
        let Some((count, payload)) = read_frame(reader, per_request).map_err(proto_err)? else {
            return Err(Error::Protocol("input closed without shutdown frame".into()));
        };
        if count == 0 {
            write_frame(writer, 0, &[]).map_err(proto_err)?;
            return Ok(());
        }
        let out = handler(&handshake, count as usize, &payload);
        if out.len() != count as usize * per_response {
            return Err(Error::Protocol(format!(
                "handler produced {} values for {count} slices",
                out.len()
            )));
        }
        write_frame(writer, count, &out).map_err(proto_err)?;
    }
}

/// Reference handler: the mean over all channels and pixels of each slice
/// (scalar mode), or the channel-averaged mean pool (grid mode).
pub fn mean_handler(hs: &Handshake, count: usize, payload: &[f32]) -> Vec<f32> {
    let per = hs.request_floats_per_slice();
    let plane = hs.h * hs.w;
    let mut out = Vec::with_capacity(count * hs.response_floats_per_slice());
    for item in payload.chunks_exact(per).take(count) {
        match hs.out {
            OutputMode::Scalar => {
                let total: f64 = item.iter().map(|&v| v as f64).sum();
                out.push((total / per as f64) as f32);
            }
            OutputMode::Grid => {
                let (kh, kw) = (hs.h / hs.gh, hs.w / hs.gw);
                let mut cells = vec![0f64; hs.gh * hs.gw];
                for channel in item.chunks_exact(plane) {
                    for i in 0..hs.h {
                        for j in 0..hs.w {
                            cells[(i / kh) * hs.gw + j / kw] += channel[i * hs.w + j] as f64;
                        }
                    }
                }
                let area = (kh * kw * hs.c) as f64;
                out.extend(cells.into_iter().map(|v| (v / area) as f32));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn handshake(out: OutputMode) -> Handshake {
        Handshake {
            proto: 1,
            h: 2,
            w: 2,
            c: 1,
            out,
            gh: if out == OutputMode::Grid { 2 } else { 1 },
            gw: if out == OutputMode::Grid { 2 } else { 1 },
        }
    }

    #[test]
    fn handshake_json_shape() {
        let text = serde_json::to_string(&handshake(OutputMode::Scalar)).unwrap();
        assert_eq!(
            text,
            r#"{"proto":1,"h":2,"w":2,"c":1,"out":"scalar","gh":1,"gw":1}"#
        );
        assert_eq!(serde_json::to_string(&HandshakeReply::accept()).unwrap(), r#"{"ok":true}"#);
    }

    #[test]
    fn serve_session_transcript() {
        let mut input = Vec::new();
        write_json_line(&mut input, &handshake(OutputMode::Scalar)).unwrap();
        write_frame(&mut input, 2, &[1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 8.0]).unwrap();
        write_frame(&mut input, 0, &[]).unwrap();

        let mut output = Vec::new();
        serve(&mut Cursor::new(input), &mut output, mean_handler).unwrap();

        let mut expected = b"{\"ok\":true}\n".to_vec();
        write_frame(&mut expected, 2, &[2.5, 2.0]).unwrap();
        write_frame(&mut expected, 0, &[]).unwrap();
        assert_eq!(output, expected);
    }

    #[test]
    fn serve_rejects_unknown_version() {
        let mut hs = handshake(OutputMode::Scalar);
        hs.proto = 2;
        let mut input = Vec::new();
        write_json_line(&mut input, &hs).unwrap();
        let mut output = Vec::new();
        let err = serve(&mut Cursor::new(input), &mut output, mean_handler).unwrap_err();
        assert!(matches!(err, Error::HandshakeRejected(_)));
        let reply: HandshakeReply = serde_json::from_slice(&output[..output.len() - 1]).unwrap();
        assert!(!reply.ok);
        assert!(reply.err.unwrap().contains("version"));
    }

    #[test]
    fn grid_mean_handler_pools() {
        let hs = Handshake {
            proto: 1,
            h: 4,
            w: 4,
            c: 2,
            out: OutputMode::Grid,
            gh: 2,
            gw: 2,
        };
        let mut payload = vec![1.0f32; 16];
        payload.extend(vec![3.0f32; 16]);
        assert_eq!(mean_handler(&hs, 1, &payload), vec![2.0; 4]);
    }

    #[test]
    fn truncated_frame_is_an_error() {
        let mut bytes = Vec::new();
        write_frame(&mut bytes, 2, &[1.0, 2.0, 3.0]).unwrap();
        assert!(read_frame(&mut Cursor::new(bytes), 2).is_err());
        assert!(read_frame(&mut Cursor::new(Vec::new()), 2).unwrap().is_none());
        assert!(read_frame(&mut Cursor::new(vec![1u8, 0]), 2).is_err());
    }
}
