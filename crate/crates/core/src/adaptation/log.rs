//! Append-only event log: a header, then one `u32` length-prefixed JSON
//! record per event.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::de::DeserializeOwned;
use serde::Serialize;

const MAGIC: &[u8; 4] = b"CSEL";
const VERSION: u32 = 1;
const MAX_RECORD: u32 = 16 << 20;

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("event log i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("event log format error at record {index}: {message}")]
    Format { index: usize, message: String },
}

#[derive(Debug)]
pub struct EventLog<T> {
    path: PathBuf,
    writer: BufWriter<File>,
    records: usize,
    sync: bool,
    _marker: PhantomData<fn(T)>,
}

impl<T: Serialize + DeserializeOwned> EventLog<T> {
    /// Opens (or creates) the log and returns the records already in it.
    /// A torn final record, as left by a crash mid-append, is truncated.
    pub fn open(path: &Path) -> Result<(Self, Vec<T>), LogError> {
        let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
        let (records, valid_len) = if exists {
            read_records(path)?
        } else {
            let mut f = File::create(path)?;
            f.write_all(MAGIC)?;
            f.write_u32::<LittleEndian>(VERSION)?;
            f.sync_all()?;
            (Vec::new(), 8)
        };
        let file = OpenOptions::new().append(true).open(path)?;
        if file.metadata()?.len() > valid_len {
            tracing::warn!(path = %path.display(), "truncating torn event log tail");
            file.set_len(valid_len)?;
        }
        let log = Self {
            path: path.to_path_buf(),
            writer: BufWriter::new(file),
            records: records.len(),
            sync: false,
            _marker: PhantomData,
        };
        Ok((log, records))
    }

    /// fsync after every append.
    pub fn with_sync(mut self, sync: bool) -> Self {
        self.sync = sync;
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }

    pub fn append(&mut self, record: &T) -> Result<(), LogError> {
        let bytes = serde_json::to_vec(record).map_err(std::io::Error::other)?;
        let len = u32::try_from(bytes.len())
            .ok()
            .filter(|l| *l <= MAX_RECORD)
            .ok_or_else(|| LogError::Format {
                index: self.records,
                message: format!("record of {} bytes too large", bytes.len()),
            })?;
        self.writer.write_u32::<LittleEndian>(len)?;
        self.writer.write_all(&bytes)?;
        self.writer.flush()?;
        if self.sync {
            self.writer.get_ref().sync_data()?;
        }
        self.records += 1;
        Ok(())
    }

    pub fn read_all(path: &Path) -> Result<Vec<T>, LogError> {
        Ok(read_records(path)?.0)
    }
}

/// Records plus the byte length of the valid prefix.
fn read_records<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, u64), LogError> {
    let file_len = std::fs::metadata(path)?.len();
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LogError::Format {
            index: 0,
            message: "bad magic".into(),
        });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(LogError::Format {
            index: 0,
            message: format!("unsupported version {version}"),
        });
    }
    let mut out = Vec::new();
    let mut pos = 8u64;
    loop {
        let len = match r.read_u32::<LittleEndian>() {
            Ok(l) => l,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        if len > MAX_RECORD {
            return Err(LogError::Format {
                index: out.len(),
                message: format!("record length {len} exceeds limit"),
            });
        }
        if pos + 4 + len as u64 > file_len {
            break;
        }
        let mut buf = vec![0u8; len as usize];
        r.read_exact(&mut buf)?;
        let rec = serde_json::from_slice(&buf).map_err(|e| LogError::Format {
            index: out.len(),
            message: e.to_string(),
        })?;
        out.push(rec);
        pos += 4 + len as u64;
    }
    Ok((out, pos))
}
