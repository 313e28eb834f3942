//! Client-side deviation store: one file per uploaded file, holding the
//! encoded deviation records in chunk order.

use std::fs;
use std::io;
use std::path::Path;

use bonsai_core::client::ClientDeviation;

use crate::manifest::Manifest;
use crate::CliError;

pub fn write_deviations(path: &Path, deviations: &[ClientDeviation], k: u8) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    for d in deviations {
        bytes.extend(d.encode(k)?);
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads the deviations of `manifest` from `path`; they must list the
/// manifest's file ids in order.
pub fn read_deviations(path: &Path, manifest: &Manifest) -> Result<Vec<ClientDeviation>, CliError> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CliError::MissingStore(path.display().to_string()),
        _ => CliError::Io(e),
    })?;
    let mut rest = &bytes[..];
    let mut out = Vec::with_capacity(manifest.chunks.len());
    while !rest.is_empty() {
        let (d, used) = ClientDeviation::decode(rest, manifest.k)
            .map_err(|e| CliError::ManifestMismatch(format!("{}: {e}", path.display())))?;
        rest = &rest[used..];
        out.push(d);
    }
    let expected_del = manifest.n_o - manifest.n_b;
    if out.len() != manifest.chunks.len()
        || out.iter().zip(manifest.file_ids()).any(|(d, id)| d.file_id != id || d.deleted_values.len() != expected_del)
    {
        return Err(CliError::ManifestMismatch(format!("{} does not match the manifest", path.display())));
    }
    Ok(out)
}
