use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Output directory whose files are written to a temporary sibling and renamed into place.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|source| CliError::Output { path: root.display().to_string(), source })?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_with(
        &self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> wentzell_core::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        body(&mut buf).map_err(|e| CliError::module(&format!("writing {name}"), e))?;
        self.write_bytes(name, &buf)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut buf = serde_json::to_vec_pretty(value).expect("reports serialize");
        buf.push(b'\n');
        self.write_bytes(name, &buf)
    }

    pub fn write_csv<R: Serialize>(&self, name: &str, rows: &[R]) -> Result<PathBuf, CliError> {
        let mut out = csv::Writer::from_writer(Vec::new());
        for r in rows {
            out.serialize(r).map_err(|e| self.io_error(name, std::io::Error::other(e)))?;
        }
        let buf = out.into_inner().map_err(|e| self.io_error(name, std::io::Error::other(e.to_string())))?;
        self.write_bytes(name, &buf)
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let target = self.path(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(|e| self.io_error(name, e))?;
        tmp.write_all(bytes).map_err(|e| self.io_error(name, e))?;
        tmp.persist(&target).map_err(|e| self.io_error(name, e.error))?;
        Ok(target)
    }

    fn io_error(&self, name: &str, source: std::io::Error) -> CliError {
        CliError::Output { path: self.path(name).display().to_string(), source }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: f64,
        b: &'static str,
    }

    #[test]
    fn writes_replace_and_leave_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::create(&dir.path().join("nested")).unwrap();
        out.write_csv("x.csv", &[Row { a: 0.5, b: "u" }]).unwrap();
        out.write_csv("x.csv", &[Row { a: 1.5, b: "v" }]).unwrap();
        assert_eq!(std::fs::read_to_string(out.path("x.csv")).unwrap(), "a,b\n1.5,v\n");
        assert_eq!(std::fs::read_dir(dir.path().join("nested")).unwrap().count(), 1);
    }
}
