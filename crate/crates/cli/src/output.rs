//! Atomic file output and run manifests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use magecho::table::Table;
use serde_json::{json, Value};

use crate::error::CliError;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io(path))?;
    tmp.write_all(bytes).map_err(io(path))?;
    tmp.as_file().sync_all().map_err(io(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub struct Manifest<'a> {
    pub command: &'a str,
    pub config: &'a BTreeMap<String, String>,
    pub cluster_hash: Option<String>,
    pub wall_time_s: f64,
    pub rows: usize,
}

pub fn tolerances() -> Value {
    json!({
        "hermiticity_relative": magecho::operators::HERMITIAN_TOL,
        "thermo_step_halving": magecho::thermo::REFINE_TOLERANCE,
        "thermo_max_refinements": magecho::thermo::MAX_REFINEMENTS,
        "a3_slice_doubling": magecho::engine::A3_TOLERANCE,
        "echo_half_width_over_omega_l": magecho::experiments::ECHO_HALF_WIDTH,
        "acquisition_step_over_omega_l": magecho::experiments::ACQUISITION_STEP,
    })
}

/// CSV at `out` plus `<out>.manifest.json`.
pub fn emit(out: &Path, table: &Table, m: Manifest<'_>) -> Result<(), CliError> {
    write_atomic(out, table.to_csv().as_bytes())?;
    let manifest = json!({
        "artifact": "magecho",
        "version": env!("CARGO_PKG_VERSION"),
        "command": m.command,
        "config": m.config,
        "cluster_hash": m.cluster_hash,
        "wall_time_s": m.wall_time_s,
        "tolerances": tolerances(),
        "rows": m.rows,
        "output": out.display().to_string(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_atomic(&manifest_path(out), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"one\n").unwrap();
        write_atomic(&p, b"two\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn manifest_next_to_output() {
        assert_eq!(
            manifest_path(Path::new("out/b.csv")),
            PathBuf::from("out/b.csv.manifest.json")
        );
    }

    #[test]
    fn missing_directory_is_io_error() {
        let err = write_atomic(Path::new("/nonexistent-dir/x.csv"), b"").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
