//! On-disk cache of spectral data keyed by a hash of the assembly inputs.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::spectrum::Spectrum;
use super::{Boundary, HeatOperator, HeatOptions, Prepared};
use crate::error::Result;
use crate::measure::MeasureWeights;
use crate::tree::CableSystem;

const MAGIC: &[u8; 8] = b"TCHEAT01";

/// Hex SHA-256 of everything that determines the spectrum.
pub fn cache_key(space: &CableSystem, m: &MeasureWeights, h: f64, boundary: Boundary, opts: &HeatOptions) -> String {
    let input = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "space": space.to_json(),
        "measure": m.to_file(),
        "h": h.to_bits(),
        "boundary": boundary,
        "options": opts,
    });
    let digest = Sha256::digest(input.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn path_for(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.spectrum"))
}

fn write(path: &Path, key: &str, s: &Spectrum) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + 8 * (s.values.len() + s.vectors.len()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(key.as_bytes());
    buf.extend_from_slice(&(s.n as u64).to_le_bytes());
    buf.extend_from_slice(&(s.modes() as u64).to_le_bytes());
    buf.push(u8::from(s.truncated));
    for x in s.values.iter().chain(&s.vectors) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::File::create(&tmp)?.write_all(&buf)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `None` for a missing, foreign or damaged file.
fn read(path: &Path, key: &str, n: usize) -> Option<Spectrum> {
    let mut buf = Vec::new();
    fs::File::open(path).ok()?.read_to_end(&mut buf).ok()?;
    let head = MAGIC.len() + key.len();
    if buf.len() < head + 17 || &buf[..MAGIC.len()] != MAGIC || &buf[MAGIC.len()..head] != key.as_bytes() {
        return None;
    }
    let word = |at: usize| u64::from_le_bytes(buf[at..at + 8].try_into().expect("eight bytes")) as usize;
    let (stored_n, modes) = (word(head), word(head + 8));
    let truncated = buf[head + 16] == 1;
    let body = &buf[head + 17..];
    if stored_n != n || body.len() != 8 * modes * (n + 1) {
        return None;
    }
    let floats: Vec<f64> =
        body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect();
    let (values, vectors) = floats.split_at(modes);
    Some(Spectrum { n, values: values.to_vec(), vectors: vectors.to_vec(), truncated })
}

/// [`super::assemble_with`] that reuses spectral data stored in `dir`.
/// Returns the operator and whether the cache was hit.
pub fn assemble_cached(
    dir: &Path,
    space: &CableSystem,
    m: &MeasureWeights,
    h: f64,
    boundary: Boundary,
    opts: &HeatOptions,
) -> Result<(HeatOperator, bool)> {
    let prepared = Prepared::new(space, m, h, boundary, opts)?;
    let key = cache_key(space, m, h, boundary, opts);
    let path = path_for(dir, &key);
    if let Some(s) = read(&path, &key, prepared.op.dof.len()) {
        return Ok((prepared.finish(s), true));
    }
    let s = prepared.solve(opts)?;
    fs::create_dir_all(dir)?;
    write(&path, &key, &s)?;
    Ok((prepared.finish(s), false))
}
