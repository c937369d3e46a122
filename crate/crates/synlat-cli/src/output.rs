//! Deterministic file output: CSV/JSON writers with atomic replace, and the
//! float formatting rule that makes repeated runs byte-identical.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use synlat::hamiltonian::Basis;

/// Shortest-roundtrip decimal form; `nan`/`inf` normalized to lowercase so
/// CSV consumers see a stable token.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x}")
    }
}

/// Write through a sibling temp file and rename, so a crashed or concurrent
/// run never leaves a half-written file at the final path.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let ext = path
        .extension()
        .map(|e| format!("{}.tmp", e.to_string_lossy()))
        .unwrap_or_else(|| "tmp".to_string());
    let tmp = path.with_extension(ext);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// LF-terminated CSV; every cell already formatted.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut out = String::with_capacity(rows.len() * 32 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)?;
    Ok(())
}

/// Column names for a basis-state population table: `P_<j>` per site label,
/// or `P_<i>_<j>` per pair state.
pub fn basis_columns(basis: &Basis) -> Vec<String> {
    if basis.is_pair() {
        (0..basis.dim())
            .map(|k| {
                let (i, j) = basis.pair_labels(k).expect("pair basis index");
                format!("P_{i}_{j}")
            })
            .collect()
    } else {
        basis.sites().iter().map(|j| format!("P_{j}")).collect()
    }
}
