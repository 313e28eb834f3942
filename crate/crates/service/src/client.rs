use std::io::{BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};

use bonsai_core::alphabet::{FileId, Policy, Symbol, SymbolDistribution};

use crate::frame::{read_frame, unpack_body, write_frame, Message, ProtocolError, Result, UploadStatus};

/// Blocking client holding one connection; requests are answered in order.
pub struct RemoteClient {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

/// Histogram snapshot published by the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemotePolicy {
    pub n_b: usize,
    pub k: u8,
    pub counts: Vec<u64>,
}

impl RemotePolicy {
    /// The Laplace-smoothed policy the server derives from this snapshot.
    pub fn policy(&self) -> Policy {
        Policy::new(SymbolDistribution::laplace(&self.counts), self.n_b)
    }
}

impl RemoteClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<RemoteClient> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(RemoteClient { reader: BufReader::new(stream.try_clone()?), writer: BufWriter::new(stream) })
    }

    fn call(&mut self, msg: &Message) -> Result<Message> {
        write_frame(&mut self.writer, &msg.to_frame())?;
        let frame = read_frame(&mut self.reader)?.ok_or(ProtocolError::ShortRead)?;
        Message::from_frame(&frame)
    }

    pub fn upload(&mut self, file_id: FileId, k: u8, outsource: &[Symbol]) -> Result<UploadStatus> {
        let msg = Message::upload(file_id, k, outsource)
            .map_err(|e| ProtocolError::Malformed { kind: "upload", reason: e.to_string() })?;
        match self.call(&msg)? {
            Message::UploadAck { file_id: id, status } if id == file_id => Ok(status),
            _ => Err(ProtocolError::Unexpected("reply to upload")),
        }
    }

    /// Fetches an outsource; `None` when the server has no such id.
    pub fn get(&mut self, file_id: FileId, k: u8) -> Result<Option<Vec<Symbol>>> {
        match self.call(&Message::Get { file_id })? {
            Message::GetResp { file_id: id, body } if id == file_id => {
                body.map(|(n_b, packed)| unpack_body(n_b, &packed, k)).transpose()
            }
            _ => Err(ProtocolError::Unexpected("reply to get")),
        }
    }

    pub fn policy(&mut self) -> Result<RemotePolicy> {
        match self.call(&Message::GetPolicy)? {
            Message::Policy { n_b, k, counts } => Ok(RemotePolicy { n_b: n_b as usize, k, counts }),
            _ => Err(ProtocolError::Unexpected("reply to get policy")),
        }
    }
}
