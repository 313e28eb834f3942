use std::fs;
use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_bonsai");

struct ServerProcess {
    child: Child,
    addr: String,
}

impl ServerProcess {
    fn start(args: &[&str]) -> ServerProcess {
        let mut child = Command::new(BIN)
            .args(["serve", "--addr", "127.0.0.1:0"])
            .args(args)
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").expect("address line").to_string();
        ServerProcess { child, addr }
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn bonsai(addr: &str, args: &[&str]) -> Output {
    Command::new(BIN).env("BONSAI_ADDR", addr).args(args).output().unwrap()
}

fn random_file(dir: &Path, name: &str, len: usize, seed: u64) -> Vec<u8> {
    let mut bytes = vec![0u8; len];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut bytes);
    fs::write(dir.join(name), &bytes).unwrap();
    bytes
}

fn upload(addr: &str, dir: &Path, name: &str, extra: &[&str]) -> String {
    let file = dir.join(name);
    let store = dir.join("store");
    let mut args = vec!["upload", file.to_str().unwrap(), "--store", store.to_str().unwrap()];
    args.extend(extra);
    let out = bonsai(addr, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().trim().to_string()
}

#[test]
fn one_mebibyte_round_trip_for_k4_and_k8() {
    for (k, n_o, n_b) in [("4", "512", "482"), ("8", "256", "241")] {
        let dir = tempfile::tempdir().unwrap();
        let server = ServerProcess::start(&["--k", k, "--n-o", n_o, "--n-b", n_b]);
        let bytes = random_file(dir.path(), "data.bin", 1 << 20, 5);
        let manifest = upload(&server.addr, dir.path(), "data.bin", &["--n-o", n_o]);
        let restored = dir.path().join("restored.bin");
        let out = bonsai(&server.addr, &["get", &manifest, "--out", restored.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(fs::read(&restored).unwrap() == bytes, "k={k}");
    }
}

#[test]
fn small_and_empty_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let server = ServerProcess::start(&[]);
    for (name, len) in [("one.bin", 1usize), ("empty.bin", 0), ("odd.bin", 1000)] {
        let bytes = random_file(dir.path(), name, len, len as u64);
        let manifest = upload(&server.addr, dir.path(), name, &[]);
        let out = bonsai(&server.addr, &["get", &manifest]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(out.stdout, bytes, "{name}");
    }
}

#[test]
fn server_state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let engine_dir = dir.path().join("engine");
    let bytes = random_file(dir.path(), "data.bin", 20_000, 9);
    let manifest = {
        let server = ServerProcess::start(&["--store", engine_dir.to_str().unwrap(), "--checkpoint-every", "1"]);
        upload(&server.addr, dir.path(), "data.bin", &[])
    };
    let server = ServerProcess::start(&["--store", engine_dir.to_str().unwrap()]);
    let out = bonsai(&server.addr, &["get", &manifest]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(out.stdout, bytes);
}

#[test]
fn distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let server = ServerProcess::start(&[]);
    random_file(dir.path(), "data.bin", 3000, 1);
    let manifest = upload(&server.addr, dir.path(), "data.bin", &[]);

    let closed = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string();
    assert_eq!(bonsai(&closed, &["get", &manifest]).status.code(), Some(2));
    let file = dir.path().join("data.bin");
    assert_eq!(bonsai(&closed, &["upload", file.to_str().unwrap()]).status.code(), Some(2));

    let text = fs::read_to_string(&manifest).unwrap();
    let corrupt = dir.path().join("store/corrupt.manifest.json");
    fs::write(&corrupt, text.replace("\"byte_len\": 3000", "\"byte_len\": 3001")).unwrap();
    assert_eq!(bonsai(&server.addr, &["get", corrupt.to_str().unwrap()]).status.code(), Some(4));
    fs::write(&corrupt, &text[..text.len() / 2]).unwrap();
    assert_eq!(bonsai(&server.addr, &["get", corrupt.to_str().unwrap()]).status.code(), Some(4));

    let missing = dir.path().join("elsewhere");
    assert_eq!(bonsai(&server.addr, &["get", &manifest, "--store", missing.to_str().unwrap()]).status.code(), Some(3));
    fs::remove_file(dir.path().join("store/data.bin.dev")).unwrap();
    assert_eq!(bonsai(&server.addr, &["get", &manifest]).status.code(), Some(3));
}

#[test]
fn experiment_csvs_carry_every_component() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ndel.csv");
    let out = Command::new(BIN)
        .args(["experiment", "ndel", "--bytes", "65536", "--from", "1", "--to", "3", "--csv", csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let header = text.lines().next().unwrap();
    for col in [
        "ucr_measured", "ucr_model", "ccr_measured", "ccr_model", "tcr_measured", "tcr_model", "deleted_value_bits",
        "seed_bits", "client_header_bits", "addendum_bits", "change_bits", "changed_value_bits", "forest_bits",
        "id_bits", "pointer_bits",
    ] {
        assert!(header.split(',').any(|h| h == col), "missing {col}");
    }
    assert_eq!(text.lines().count(), 4);

    let out = Command::new(BIN).args(["experiment", "weak", "--from", "15", "--to", "15"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("weak,true,256,241,8,,") && l.contains(",120.0,0.94140625,")), "{text}");
}
