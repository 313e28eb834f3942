use std::io::{self, BufReader, BufWriter};
use std::net::{Ipv4Addr, Ipv6Addr, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};

use bonsai_core::alphabet::{pack_symbols, unpack_symbols};
use bonsai_core::{CloudEngine, Error as CoreError};

use crate::frame::{read_frame, write_frame, Message, ProtocolError, UploadStatus};

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    /// Directory the engine was persisted to or opened from. When set, the
    /// server checkpoints into it every `checkpoint_every` uploads and on
    /// shutdown.
    pub store: Option<PathBuf>,
    pub checkpoint_every: u64,
}

pub struct Server {
    listener: TcpListener,
    engine: Arc<RwLock<CloudEngine>>,
    options: ServerOptions,
}

struct Shared {
    engine: Arc<RwLock<CloudEngine>>,
    options: ServerOptions,
    uploads: AtomicU64,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, engine: CloudEngine, options: ServerOptions) -> io::Result<Server> {
        Ok(Server { listener: TcpListener::bind(addr)?, engine: Arc::new(RwLock::new(engine)), options })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn engine(&self) -> Arc<RwLock<CloudEngine>> {
        Arc::clone(&self.engine)
    }

    /// Starts the accept loop on a background thread.
    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let engine = Arc::clone(&self.engine);
        let flag = Arc::clone(&stop);
        let join = thread::spawn(move || self.accept_loop(&flag));
        Ok(ServerHandle { addr, stop, engine, join: Some(join) })
    }

    /// Serves until the process exits.
    pub fn run(self) -> io::Result<()> {
        self.accept_loop(&AtomicBool::new(false))
    }

    fn accept_loop(self, stop: &AtomicBool) -> io::Result<()> {
        let shared = Arc::new(Shared { engine: self.engine, options: self.options, uploads: AtomicU64::new(0) });
        for stream in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    continue;
                }
            };
            let shared = Arc::clone(&shared);
            thread::spawn(move || {
                if let Err(e) = serve_connection(stream, &shared) {
                    eprintln!("connection closed: {e}");
                }
            });
        }
        shared.checkpoint()
    }
}

impl Shared {
    fn checkpoint(&self) -> io::Result<()> {
        if let Some(dir) = &self.options.store {
            let mut engine = self.engine.write().expect("engine lock poisoned");
            engine.checkpoint(dir).map_err(io::Error::other)?;
        }
        Ok(())
    }

    fn handle(&self, msg: Message) -> Result<Message, ProtocolError> {
        Ok(match msg {
            Message::Upload { file_id, n_b, k, packed } => {
                let status = self.upload(file_id, n_b, k, &packed);
                Message::UploadAck { file_id, status }
            }
            Message::Get { file_id } => {
                let engine = self.engine.read().expect("engine lock poisoned");
                let k = engine.config().k;
                let body = match engine.decompress(file_id) {
                    Ok(symbols) => Some((symbols.len() as u32, pack_symbols(&symbols, k).map_err(internal)?)),
                    Err(CoreError::NotFound(_)) => None,
                    Err(e) => return Err(internal(e)),
                };
                Message::GetResp { file_id, body }
            }
            Message::GetPolicy => {
                let engine = self.engine.read().expect("engine lock poisoned");
                let config = engine.config();
                Message::Policy { n_b: config.n_b as u32, k: config.k, counts: engine.policy_histogram().to_vec() }
            }
            Message::UploadAck { .. } => return Err(ProtocolError::Unexpected("upload ack")),
            Message::GetResp { .. } => return Err(ProtocolError::Unexpected("get response")),
            Message::Policy { .. } => return Err(ProtocolError::Unexpected("policy")),
        })
    }

    fn upload(&self, file_id: bonsai_core::FileId, n_b: u32, k: u8, packed: &[u8]) -> UploadStatus {
        let due = {
            let mut engine = self.engine.write().expect("engine lock poisoned");
            let config = engine.config();
            if k != config.k || n_b as usize != config.n_b {
                return UploadStatus::BadLength;
            }
            let Ok(symbols) = unpack_symbols(packed, n_b as usize, k) else {
                return UploadStatus::BadLength;
            };
            match engine.dedup(file_id, &symbols) {
                Ok(_) => {}
                Err(CoreError::Conflict(_)) => return UploadStatus::DuplicateId,
                Err(_) => return UploadStatus::BadLength,
            }
            let n = self.uploads.fetch_add(1, Ordering::SeqCst) + 1;
            self.options.checkpoint_every > 0 && n.is_multiple_of(self.options.checkpoint_every)
        };
        if due {
            if let Err(e) = self.checkpoint() {
                eprintln!("checkpoint failed: {e}");
            }
        }
        UploadStatus::Ok
    }
}

fn internal(e: CoreError) -> ProtocolError {
    ProtocolError::Io(io::Error::other(e))
}

fn serve_connection(stream: TcpStream, shared: &Shared) -> Result<(), ProtocolError> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(frame) = read_frame(&mut reader)? {
        let reply = shared.handle(Message::from_frame(&frame)?)?;
        write_frame(&mut writer, &reply.to_frame())?;
    }
    Ok(())
}

/// Handle to a server running on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    engine: Arc<RwLock<CloudEngine>>,
    join: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn engine(&self) -> Arc<RwLock<CloudEngine>> {
        Arc::clone(&self.engine)
    }

    /// Stops accepting, writes a final checkpoint and waits for the accept
    /// loop. Open connections finish on their own threads.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> io::Result<()> {
        let Some(join) = self.join.take() else { return Ok(()) };
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let mut wake = self.addr;
        if wake.ip().is_unspecified() {
            wake.set_ip(match wake {
                SocketAddr::V4(_) => Ipv4Addr::LOCALHOST.into(),
                SocketAddr::V6(_) => Ipv6Addr::LOCALHOST.into(),
            });
        }
        let _ = TcpStream::connect(wake);
        join.join().map_err(|_| io::Error::other("server thread panicked"))?
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}
