use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::site::{DecodeError, Site};

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("record {index}: {source}")]
    Decode { index: usize, source: DecodeError },
    #[error("record {0} truncated")]
    Truncated(usize),
}

/// Write one length-prefixed (u32 big-endian) site record.
pub fn write_log_record<W: Write>(w: &mut W, site: &Site) -> io::Result<()> {
    let bytes = site.to_bytes();
    w.write_all(&(bytes.len() as u32).to_be_bytes())?;
    w.write_all(&bytes)
}

/// Read every record from a log stream. Ids are recomputed from content.
pub fn read_log<R: Read>(r: R) -> Result<Vec<Site>, LogError> {
    let mut r = BufReader::new(r);
    let mut out = Vec::new();
    loop {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let mut buf = vec![0u8; u32::from_be_bytes(len) as usize];
        r.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => LogError::Truncated(out.len()),
            _ => LogError::Io(e),
        })?;
        let site = Site::from_bytes(&buf).map_err(|source| LogError::Decode {
            index: out.len(),
            source,
        })?;
        out.push(site);
    }
    Ok(out)
}

/// Append-only log file handle.
pub struct LedgerLog {
    out: BufWriter<File>,
}

impl LedgerLog {
    pub fn create(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(LedgerLog { out: BufWriter::new(file) })
    }

    pub fn append(&mut self, site: &Site) -> io::Result<()> {
        write_log_record(&mut self.out, site)
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn read(path: &Path) -> Result<Vec<Site>, LogError> {
        read_log(File::open(path)?)
    }
}
