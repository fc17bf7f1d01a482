//! Session directories.
//!
//! ```text
//! <dir>/log.jsonl          one SessionEvent per line
//! <dir>/digest.json        final flatten digest and log length
//! <dir>/layers/            layer manifest + PNGs
//! <dir>/cache/<id>.png     candidate image
//! <dir>/cache/<id>.json    candidate request/provenance record
//! ```
//!
//! Loading replays `log.jsonl` alone; the stored digest is then checked
//! against the replayed canvas.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::Digest64;
use crate::layers::LayerError;
use crate::raster::{decode_png, encode_png, pixel_digest, RasterError};
use crate::session::{CandidateMeta, ReplayError, Session, SessionEvent};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("log line {line}: {message}")]
    LogLine { line: usize, message: String },
    #[error("replay failed: {0}")]
    Replay(#[from] ReplayError),
    #[error("stored digest {stored} does not match replayed canvas {replayed}")]
    DigestMismatch { stored: Digest64, replayed: Digest64 },
    #[error("cached candidate {id} differs from its replayed image")]
    CacheMismatch { id: u64 },
    #[error("bad digest file: {0}")]
    DigestFile(String),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct DigestRecord {
    final_digest: Digest64,
    log_len: usize,
}

/// Parses JSONL events; line numbers in errors are 1-based. Blank lines
/// are skipped.
pub fn read_log(reader: impl BufRead) -> Result<Vec<SessionEvent>, PersistError> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| PersistError::LogLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

pub fn write_log(mut writer: impl Write, events: &[SessionEvent]) -> io::Result<()> {
    for e in events {
        writeln!(writer, "{}", e.to_json_line())?;
    }
    writer.flush()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

pub fn persist_session(session: &Session, dir: &Path) -> Result<(), PersistError> {
    fs::create_dir_all(dir.join("cache"))?;

    let mut log = Vec::new();
    write_log(&mut log, session.log())?;
    write_atomic(&dir.join("log.jsonl"), &log)?;

    session.canvas().save_dir(&dir.join("layers"))?;

    for candidate in session.cache() {
        let png = dir.join("cache").join(format!("{}.png", candidate.id));
        // candidates are immutable once cached
        if png.exists() {
            continue;
        }
        let meta = CandidateMeta::from(candidate);
        let json = serde_json::to_vec_pretty(&meta).expect("candidate metadata serializes");
        fs::write(dir.join("cache").join(format!("{}.json", candidate.id)), json)?;
        write_atomic(&png, &encode_png(&candidate.image)?)?;
    }

    let record = DigestRecord {
        final_digest: pixel_digest(&session.flatten()),
        log_len: session.log().len(),
    };
    let json = serde_json::to_vec_pretty(&record).expect("digest record serializes");
    write_atomic(&dir.join("digest.json"), &json)?;
    Ok(())
}

pub fn load_session(dir: &Path) -> Result<Session, PersistError> {
    let file = fs::File::open(dir.join("log.jsonl"))?;
    let events = read_log(io::BufReader::new(file))?;
    let session = Session::replay(events)?;

    let raw = fs::read(dir.join("digest.json"))?;
    let record: DigestRecord = serde_json::from_slice(&raw).map_err(|e| PersistError::DigestFile(e.to_string()))?;
    let replayed = pixel_digest(&session.flatten());
    if replayed != record.final_digest {
        return Err(PersistError::DigestMismatch {
            stored: record.final_digest,
            replayed,
        });
    }
    Ok(session)
}

/// Compares every stored candidate PNG with the session's cache.
pub fn verify_cache(session: &Session, dir: &Path) -> Result<(), PersistError> {
    for candidate in session.cache() {
        let bytes = fs::read(dir.join("cache").join(format!("{}.png", candidate.id)))?;
        if decode_png(&bytes)? != *candidate.image {
            return Err(PersistError::CacheMismatch { id: candidate.id });
        }
    }
    Ok(())
}
