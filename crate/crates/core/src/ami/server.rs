//! TCP front end for the ledger: one thread per connection, one JSON object
//! per line each way. A malformed line gets an `error` reply and the
//! connection stays open.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use super::Ledger;

pub fn serve_connection(ledger: &Ledger, stream: TcpStream) -> io::Result<()> {
    let peer = stream.peer_addr().ok();
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = ledger.handle_line(&line);
        log::debug!("{peer:?} <- {line}");
        writer.write_all(reply.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

/// Accepts connections until the listener fails.
pub fn serve(listener: TcpListener, ledger: Arc<Ledger>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let ledger = Arc::clone(&ledger);
        thread::spawn(move || {
            if let Err(e) = serve_connection(&ledger, stream) {
                log::warn!("AMI connection ended: {e}");
            }
        });
    }
    Ok(())
}

/// Binds `addr` and serves on a background thread. Returns the bound
/// address (useful with port 0).
pub fn spawn(addr: &str, ledger: Arc<Ledger>) -> io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    thread::spawn(move || serve(listener, ledger));
    Ok(local)
}
