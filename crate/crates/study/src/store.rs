//! Append-only newline-delimited JSON logs.
//!
//! A line is acknowledged only after it has been written and synced. On
//! open, a torn final line (no trailing newline) is cut off so later
//! appends start on a clean line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::model::StudyError;

#[derive(Debug)]
pub struct Log {
    path: PathBuf,
    file: File,
}

impl Log {
    /// Opens (creating if needed) the log and returns it with every complete
    /// record already in it.
    pub fn open<T: DeserializeOwned>(path: &Path) -> Result<(Self, Vec<T>), StudyError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut records = Vec::new();
        let mut complete_len = 0u64;
        {
            let mut reader = BufReader::new(&mut file);
            let mut line = String::new();
            let mut number = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 || !line.ends_with('\n') {
                    break;
                }
                number += 1;
                complete_len += n as u64;
                let record = serde_json::from_str(line.trim_end()).map_err(|e| StudyError::Corrupt {
                    file: path.display().to_string(),
                    line: number,
                    message: e.to_string(),
                })?;
                records.push(record);
            }
        }
        if file.seek(SeekFrom::End(0))? != complete_len {
            file.set_len(complete_len)?;
            file.sync_data()?;
        }
        Ok((Self { path: path.to_path_buf(), file }, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one record as a line and syncs it to disk.
    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<(), StudyError> {
        let mut line = serde_json::to_vec(record).map_err(|e| StudyError::InvalidRecord(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        Ok(())
    }
}
