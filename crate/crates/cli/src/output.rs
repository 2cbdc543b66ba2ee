use std::path::Path;

use thermocast::{Error, Result};

use crate::store::create_dir;

/// Writes a CSV file from a header and rows of already formatted fields.
pub fn write_csv<R, F>(path: &Path, header: &[&str], rows: R) -> Result<()>
where
    R: IntoIterator<Item = Vec<F>>,
    F: AsRef<str>,
{
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(AsRef::as_ref))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest representation that reads back to the same value.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Path of `path` relative to `base` with forward slashes, for records that
/// must not depend on where a run was written.
pub fn relative(base: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_then_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/t.csv");
        write_csv(
            &p,
            &["a", "b"],
            vec![vec![num(0.1), opt_num(None)], vec![num(1e-4), num(2.0)]],
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "a,b\n0.1,\n0.0001,2\n"
        );
    }

    #[test]
    fn relative_paths_drop_the_base() {
        let base = Path::new("/tmp/run");
        assert_eq!(
            relative(base, &base.join("runs").join("all").join("x.ckpt")),
            "runs/all/x.ckpt"
        );
    }
}
