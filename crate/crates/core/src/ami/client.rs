use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Arc;

use super::{AmiError, AmiMessage, Ledger};
use crate::transcript::{Channel, Endpoint, Transcript};

/// Moves one request line to the AMI and brings back one reply line.
pub trait AmiTransport {
    fn exchange(&mut self, line: &str) -> Result<String, AmiError>;
}

/// Calls the ledger directly, still through the wire encoding.
pub struct InProcess(pub Arc<Ledger>);

impl AmiTransport for InProcess {
    fn exchange(&mut self, line: &str) -> Result<String, AmiError> {
        Ok(self.0.handle_line(line))
    }
}

/// Always unreachable.
pub struct Offline;

impl AmiTransport for Offline {
    fn exchange(&mut self, _line: &str) -> Result<String, AmiError> {
        Err(AmiError::Unreachable)
    }
}

/// Line-delimited JSON over TCP.
pub struct Remote {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Remote {
    pub fn connect(addr: &str) -> Result<Self, AmiError> {
        let addr = addr.strip_prefix("tcp://").unwrap_or(addr);
        let stream = TcpStream::connect(addr).map_err(|_| AmiError::Unreachable)?;
        let writer = stream.try_clone().map_err(|e| AmiError::Io(e.to_string()))?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
        })
    }
}

impl AmiTransport for Remote {
    fn exchange(&mut self, line: &str) -> Result<String, AmiError> {
        let io = |e: std::io::Error| AmiError::Io(e.to_string());
        self.writer.write_all(line.as_bytes()).map_err(io)?;
        self.writer.write_all(b"\n").map_err(io)?;
        self.writer.flush().map_err(io)?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply).map_err(io)? == 0 {
            return Err(AmiError::Unreachable);
        }
        Ok(reply.trim_end_matches(['\r', '\n']).to_owned())
    }
}

/// AMI client that logs each request and reply on the AMI network channel.
pub struct AmiClient {
    transport: Box<dyn AmiTransport + Send>,
}

impl AmiClient {
    pub fn new(transport: impl AmiTransport + Send + 'static) -> Self {
        Self {
            transport: Box::new(transport),
        }
    }

    pub fn in_process(ledger: Arc<Ledger>) -> Self {
        Self::new(InProcess(ledger))
    }

    pub fn offline() -> Self {
        Self::new(Offline)
    }

    pub fn call(&mut self, t: &mut Transcript, from: Endpoint, msg: &AmiMessage) -> Result<AmiMessage, AmiError> {
        self.call_raw(t, from, &msg.to_line()).map(|(reply, _)| reply)
    }

    /// Sends an already-encoded line (e.g. a replayed capture). Returns the
    /// decoded reply and its transcript index.
    pub fn call_raw(&mut self, t: &mut Transcript, from: Endpoint, line: &str) -> Result<(AmiMessage, usize), AmiError> {
        let label = AmiMessage::from_line(line).map(|m| m.type_name()).unwrap_or("raw");
        t.record(Channel::AmiNet, from.clone(), Endpoint::Ami, label, line.as_bytes().to_vec(), false);
        let reply_line = self.transport.exchange(line)?;
        let reply = AmiMessage::from_line(&reply_line)?;
        let idx = t.record(
            Channel::AmiNet,
            Endpoint::Ami,
            from,
            reply.type_name(),
            reply_line.into_bytes(),
            false,
        );
        Ok((reply, idx))
    }
}
