//! Atomic writers for result files.

use std::io::Write;
use std::path::Path;

use kolmolab::Row;

/// Writes through a sibling temporary file and renames it into place, so a
/// reader never sees a half-written result.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

pub fn csv(rows: &[Row]) -> String {
    let mut out = Row::HEADER.join(",");
    out.push('\n');
    for r in rows {
        out += &r.fields().join(",");
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, rows: &[Row]) -> std::io::Result<()> {
    write_atomic(path, csv(rows).as_bytes())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let mut body = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    body.push('\n');
    write_atomic(path, body.as_bytes())
}
