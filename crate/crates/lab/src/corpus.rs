use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use elstm_core::textdata::CharDataset;

use crate::{LabError, Result};

/// Read a UTF-8 text file into a dataset.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<CharDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => LabError::MissingFile(path.to_path_buf()),
        _ => LabError::io(path, e),
    })?;
    if bytes.is_empty() {
        return Err(LabError::EmptyFile(path.to_path_buf()));
    }
    let text = String::from_utf8(bytes).map_err(|_| LabError::InvalidUtf8(path.to_path_buf()))?;
    Ok(CharDataset::from_text(&text)?)
}

/// Write a dataset's text verbatim.
pub fn write_corpus(path: impl AsRef<Path>, ds: &CharDataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ds.text()).map_err(|e| LabError::io(path, e))
}
