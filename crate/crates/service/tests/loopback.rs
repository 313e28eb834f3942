use std::io::{Read, Write};
use std::net::TcpStream;
use std::thread;

use bonsai_core::{CloudEngine, FileId, SystemConfig};
use bonsai_service::frame::UploadStatus;
use bonsai_service::{RemoteClient, Server, ServerHandle, ServerOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn start(config: SystemConfig, options: ServerOptions) -> ServerHandle {
    let engine = CloudEngine::new(config).unwrap();
    Server::bind("127.0.0.1:0", engine, options).unwrap().spawn().unwrap()
}

fn random_outsource(rng: &mut ChaCha8Rng, k: u8, n_b: usize) -> Vec<u8> {
    (0..n_b).map(|_| rng.gen_range(0..1u16 << k) as u8).collect()
}

#[test]
fn upload_then_get_round_trips() {
    for k in [2u8, 4, 6, 8] {
        let config = SystemConfig::new(k, 40, 33).unwrap();
        let server = start(config.clone(), ServerOptions::default());
        let mut client = RemoteClient::connect(server.addr()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(k));
        let uploads: Vec<Vec<u8>> = (0..50).map(|_| random_outsource(&mut rng, k, 33)).collect();
        for (i, o) in uploads.iter().enumerate() {
            assert_eq!(client.upload(FileId(i as u64), k, o).unwrap(), UploadStatus::Ok);
        }
        for (i, o) in uploads.iter().enumerate() {
            assert_eq!(client.get(FileId(i as u64), k).unwrap().as_ref(), Some(o));
        }
        assert_eq!(client.get(FileId(999), k).unwrap(), None);
        server.shutdown().unwrap();
    }
}

#[test]
fn upload_statuses() {
    let config = SystemConfig::new(4, 20, 16).unwrap();
    let server = start(config, ServerOptions::default());
    let mut client = RemoteClient::connect(server.addr()).unwrap();
    let o = vec![3u8; 16];
    assert_eq!(client.upload(FileId(1), 4, &o).unwrap(), UploadStatus::Ok);
    assert_eq!(client.upload(FileId(1), 4, &o).unwrap(), UploadStatus::DuplicateId);
    assert_eq!(client.upload(FileId(2), 4, &o[..15]).unwrap(), UploadStatus::BadLength);
    assert_eq!(client.upload(FileId(3), 8, &o).unwrap(), UploadStatus::BadLength);
    assert_eq!(server.engine().read().unwrap().record_count(), 1);
}

#[test]
fn fresh_server_publishes_zero_histogram() {
    let config = SystemConfig::new(8, 300, 256).unwrap();
    let server = start(config, ServerOptions::default());
    let policy = RemoteClient::connect(server.addr()).unwrap().policy().unwrap();
    assert_eq!((policy.n_b, policy.k), (256, 8));
    assert_eq!(policy.counts, vec![0; 256]);
    assert_eq!(policy.policy(), server.engine().read().unwrap().policy());
}

#[test]
fn concurrent_identical_uploads_share_one_base() {
    let config = SystemConfig::new(4, 40, 32).unwrap();
    let server = start(config, ServerOptions::default());
    let addr = server.addr();
    let outsource: Vec<u8> = (0..32).map(|i| (i * 7 % 16) as u8).collect();
    let workers: Vec<_> = (0..8u64)
        .map(|w| {
            let o = outsource.clone();
            thread::spawn(move || {
                let mut c = RemoteClient::connect(addr).unwrap();
                for i in 0..25 {
                    assert_eq!(c.upload(FileId(w * 100 + i), 4, &o).unwrap(), UploadStatus::Ok);
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    let engine = server.engine();
    let engine = engine.read().unwrap();
    assert_eq!(engine.record_count(), 200);
    assert_eq!(engine.forest().leaf_count(), 1);
}

#[test]
fn garbage_closes_only_that_connection() {
    let config = SystemConfig::new(4, 20, 16).unwrap();
    let server = start(config, ServerOptions::default());
    let mut raw = TcpStream::connect(server.addr()).unwrap();
    raw.write_all(b"GARBAGE!!!!!!!!").unwrap();
    let mut buf = [0u8; 16];
    assert_eq!(raw.read(&mut buf).unwrap_or(0), 0);
    let mut client = RemoteClient::connect(server.addr()).unwrap();
    assert_eq!(client.upload(FileId(5), 4, &[1u8; 16]).unwrap(), UploadStatus::Ok);
}

#[test]
fn checkpoints_survive_restart() {
    let dir = std::env::temp_dir().join(format!("bonsai-service-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let config = SystemConfig::new(4, 24, 20).unwrap();
    let mut engine = CloudEngine::new(config).unwrap();
    engine.persist_to(&dir).unwrap();
    let options = ServerOptions { store: Some(dir.clone()), checkpoint_every: 7 };
    let server = Server::bind("127.0.0.1:0", engine, options).unwrap().spawn().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let uploads: Vec<Vec<u8>> = (0..30).map(|_| random_outsource(&mut rng, 4, 20)).collect();
    {
        let mut client = RemoteClient::connect(server.addr()).unwrap();
        for (i, o) in uploads.iter().enumerate() {
            assert_eq!(client.upload(FileId(i as u64), 4, o).unwrap(), UploadStatus::Ok);
        }
    }
    server.shutdown().unwrap();
    let reopened = CloudEngine::open(&dir).unwrap();
    for (i, o) in uploads.iter().enumerate() {
        assert_eq!(&reopened.decompress(FileId(i as u64)).unwrap(), o);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}
