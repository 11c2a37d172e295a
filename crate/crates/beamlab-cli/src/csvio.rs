//! CSV and manifest writers with deterministic formatting.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::RunError;

/// Formats a float at six significant digits; infinities become the
/// `inf` sentinel used for unlocalizable configurations.
pub fn format_sig(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x.is_nan() {
        return "nan".into();
    }
    format!("{x:.5e}")
}

/// Writes a two-column CSV.
pub fn write_pairs(
    path: &Path,
    header: (&str, &str),
    rows: &[(f64, f64)],
) -> Result<(), RunError> {
    let mut out = String::with_capacity(rows.len() * 24 + 32);
    out.push_str(header.0);
    out.push(',');
    out.push_str(header.1);
    out.push('\n');
    for (a, b) in rows {
        out.push_str(&format_sig(*a));
        out.push(',');
        out.push_str(&format_sig(*b));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes a dense gain map: first row is the theta header, first column the
/// phi header, interior cells the values.
pub fn write_matrix(
    path: &Path,
    theta: &[f64],
    phi: &[f64],
    values: &[Vec<f64>],
) -> Result<(), RunError> {
    let mut out = String::new();
    out.push_str("phi_rad\\theta_rad");
    for t in theta {
        out.push(',');
        out.push_str(&format_sig(*t));
    }
    out.push('\n');
    for (p, row) in phi.iter().zip(values) {
        out.push_str(&format_sig(*p));
        for v in row {
            out.push(',');
            out.push_str(&format_sig(*v));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes the run manifest: the full configuration, the resolved seed and the
/// produced files, serialized with stable field order.
pub fn write_manifest<C: serde::Serialize>(
    dir: &Path,
    config: &C,
    seed: u64,
    outputs: &[String],
) -> Result<(), RunError> {
    #[derive(serde::Serialize)]
    struct Manifest<'a, C> {
        tool: &'static str,
        version: &'static str,
        seed: u64,
        config: &'a C,
        outputs: &'a [String],
    }
    let manifest = Manifest {
        tool: "beamlab",
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| RunError::Config(format!("manifest serialization: {e}")))?;
    let mut f = fs::File::create(dir.join("manifest.json"))?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}
