//! Frame layout: `"BNSI"`, version `u8 = 1`, message type `u8`, payload
//! length `u32 LE`, payload. All integers little endian.

use std::io::{self, Read, Write};

use bonsai_core::alphabet::{pack_symbols, packed_len, unpack_symbols, FileId, Symbol};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"BNSI";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Payloads above this are refused before allocation.
pub const MAX_PAYLOAD: u32 = 64 << 20;

pub const UPLOAD: u8 = 0x01;
pub const UPLOAD_ACK: u8 = 0x02;
pub const GET: u8 = 0x03;
pub const GET_RESP: u8 = 0x04;
pub const GET_POLICY: u8 = 0x05;
pub const POLICY: u8 = 0x06;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("stream ended inside a frame")]
    ShortRead,
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("payload of {0} bytes exceeds the limit")]
    TooLarge(u32),
    #[error("malformed {kind} payload: {reason}")]
    Malformed { kind: &'static str, reason: String },
    #[error("unexpected {0} message")]
    Unexpected(&'static str),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.msg_type);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes one frame from the front of `bytes`, returning it and the
    /// number of bytes used.
    pub fn decode(bytes: &[u8]) -> Result<(Frame, usize)> {
        let header: &[u8; HEADER_LEN] = bytes.get(..HEADER_LEN).ok_or(ProtocolError::ShortRead)?.try_into().unwrap();
        let len = check_header(header)?;
        let end = HEADER_LEN + len as usize;
        let payload = bytes.get(HEADER_LEN..end).ok_or(ProtocolError::ShortRead)?.to_vec();
        Ok((Frame { msg_type: header[5], payload }, end))
    }
}

fn check_header(h: &[u8; HEADER_LEN]) -> Result<u32> {
    let magic: [u8; 4] = h[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    if h[4] != VERSION {
        return Err(ProtocolError::BadVersion(h[4]));
    }
    if !(UPLOAD..=POLICY).contains(&h[5]) {
        return Err(ProtocolError::UnknownType(h[5]));
    }
    let len = u32::from_le_bytes(h[6..10].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(ProtocolError::TooLarge(len));
    }
    Ok(len)
}

/// Reads one frame; `Ok(None)` on a clean end of stream before any header
/// byte.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(ProtocolError::ShortRead),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = check_header(&header)?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::ShortRead,
        _ => ProtocolError::Io(e),
    })?;
    Ok(Some(Frame { msg_type: header[5], payload }))
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UploadStatus {
    Ok = 0,
    DuplicateId = 1,
    BadLength = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GetStatus {
    Ok = 0,
    NotFound = 1,
}

/// Typed view of a frame. Symbol strings travel packed; the receiver
/// unpacks them with the `k` it knows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Upload { file_id: FileId, n_b: u32, k: u8, packed: Vec<u8> },
    UploadAck { file_id: FileId, status: UploadStatus },
    Get { file_id: FileId },
    /// `body` is `(n_b, packed symbols)` when found.
    GetResp { file_id: FileId, body: Option<(u32, Vec<u8>)> },
    GetPolicy,
    Policy { n_b: u32, k: u8, counts: Vec<u64> },
}

impl Message {
    pub fn upload(file_id: FileId, k: u8, symbols: &[Symbol]) -> bonsai_core::Result<Message> {
        Ok(Message::Upload { file_id, n_b: symbols.len() as u32, k, packed: pack_symbols(symbols, k)? })
    }

    pub fn to_frame(&self) -> Frame {
        let mut p = Vec::new();
        let msg_type = match self {
            Message::Upload { file_id, n_b, k, packed } => {
                p.extend_from_slice(&file_id.0.to_le_bytes());
                p.extend_from_slice(&n_b.to_le_bytes());
                p.push(*k);
                p.extend_from_slice(packed);
                UPLOAD
            }
            Message::UploadAck { file_id, status } => {
                p.extend_from_slice(&file_id.0.to_le_bytes());
                p.push(*status as u8);
                UPLOAD_ACK
            }
            Message::Get { file_id } => {
                p.extend_from_slice(&file_id.0.to_le_bytes());
                GET
            }
            Message::GetResp { file_id, body } => {
                p.extend_from_slice(&file_id.0.to_le_bytes());
                match body {
                    Some((n_b, packed)) => {
                        p.push(GetStatus::Ok as u8);
                        p.extend_from_slice(&n_b.to_le_bytes());
                        p.extend_from_slice(packed);
                    }
                    None => p.push(GetStatus::NotFound as u8),
                }
                GET_RESP
            }
            Message::GetPolicy => GET_POLICY,
            Message::Policy { n_b, k, counts } => {
                p.extend_from_slice(&n_b.to_le_bytes());
                p.push(*k);
                for c in counts {
                    p.extend_from_slice(&c.to_le_bytes());
                }
                POLICY
            }
        };
        Frame { msg_type, payload: p }
    }

    pub fn from_frame(frame: &Frame) -> Result<Message> {
        let p = &frame.payload;
        let bad = |kind: &'static str, reason: &str| ProtocolError::Malformed { kind, reason: reason.to_string() };
        let u64_at = |kind, at: usize| -> Result<u64> {
            p.get(at..at + 8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| bad(kind, "truncated"))
        };
        let u32_at = |kind, at: usize| -> Result<u32> {
            p.get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| bad(kind, "truncated"))
        };
        match frame.msg_type {
            UPLOAD => {
                let file_id = FileId(u64_at("upload", 0)?);
                let n_b = u32_at("upload", 8)?;
                let k = *p.get(12).ok_or_else(|| bad("upload", "truncated"))?;
                if !matches!(k, 1..=8) {
                    return Err(bad("upload", "k outside 1..=8"));
                }
                let packed = p[13..].to_vec();
                if packed.len() != packed_len(n_b as usize, k) {
                    return Err(bad("upload", "packed length does not match n_b"));
                }
                Ok(Message::Upload { file_id, n_b, k, packed })
            }
            UPLOAD_ACK => {
                if p.len() != 9 {
                    return Err(bad("upload ack", "expected 9 bytes"));
                }
                let status = match p[8] {
                    0 => UploadStatus::Ok,
                    1 => UploadStatus::DuplicateId,
                    2 => UploadStatus::BadLength,
                    _ => return Err(bad("upload ack", "unknown status")),
                };
                Ok(Message::UploadAck { file_id: FileId(u64_at("upload ack", 0)?), status })
            }
            GET => {
                if p.len() != 8 {
                    return Err(bad("get", "expected 8 bytes"));
                }
                Ok(Message::Get { file_id: FileId(u64_at("get", 0)?) })
            }
            GET_RESP => {
                let file_id = FileId(u64_at("get response", 0)?);
                match p.get(8) {
                    Some(0) => {
                        let n_b = u32_at("get response", 9)?;
                        Ok(Message::GetResp { file_id, body: Some((n_b, p[13..].to_vec())) })
                    }
                    Some(1) if p.len() == 9 => Ok(Message::GetResp { file_id, body: None }),
                    _ => Err(bad("get response", "bad status or length")),
                }
            }
            GET_POLICY => {
                if !p.is_empty() {
                    return Err(bad("get policy", "expected empty payload"));
                }
                Ok(Message::GetPolicy)
            }
            POLICY => {
                let n_b = u32_at("policy", 0)?;
                let k = *p.get(4).ok_or_else(|| bad("policy", "truncated"))?;
                if !matches!(k, 1..=8) {
                    return Err(bad("policy", "k outside 1..=8"));
                }
                let body = &p[5..];
                if body.len() != 8 << k {
                    return Err(bad("policy", "histogram length does not match k"));
                }
                let counts = body.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
                Ok(Message::Policy { n_b, k, counts })
            }
            other => Err(ProtocolError::UnknownType(other)),
        }
    }
}

/// Unpacks the symbols of a found `GET_RESP` body with the caller's `k`.
pub fn unpack_body(n_b: u32, packed: &[u8], k: u8) -> Result<Vec<Symbol>> {
    if packed.len() != packed_len(n_b as usize, k) {
        return Err(ProtocolError::Malformed { kind: "get response", reason: "packed length does not match n_b".into() });
    }
    unpack_symbols(packed, n_b as usize, k)
        .map_err(|e| ProtocolError::Malformed { kind: "get response", reason: e.to_string() })
}
