//! Deterministic file output: CSV profiles and JSON reports.
//!
//! Floats are written with the shortest round-trip representation, so
//! identical runs produce byte-identical files.

use anyhow::Context;
use rotstar_core::energy::PotentialFunction;
use rotstar_core::fields::{DensityProfile, FieldSet};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

pub const PROFILE_HEADER: &str = "r,rho,n,m_eta,Kgrav,Krot,Q,Eprime";

pub fn write_profile_csv(
    path: &Path,
    profile: &DensityProfile,
    fields: &FieldSet,
    potential: &PotentialFunction,
) -> anyhow::Result<()> {
    let mut buf = String::new();
    buf.push_str(PROFILE_HEADER);
    buf.push('\n');
    let g = &profile.grid;
    for (i, &r) in g.midpoints.iter().enumerate() {
        let m_eta = fields.cyl_mass.eval(r)?;
        buf.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r,
            profile.values[i],
            fields.n_mid[i],
            m_eta,
            fields.k_grav[i],
            fields.k_rot[i],
            fields.q[i],
            potential.g[i],
        ));
    }
    write_atomic(path, buf.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("cannot create {}", dir.display()))?;
        }
    }
    let mut f = std::fs::File::create(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    f.write_all(bytes)?;
    Ok(())
}

/// Parses a profile CSV produced by `write_profile_csv`; returns the
/// radii and densities.
pub fn read_profile_csv(path: &Path) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty profile file")?;
    if header != PROFILE_HEADER {
        anyhow::bail!("unexpected header {header:?}, want {PROFILE_HEADER:?}");
    }
    let mut r = Vec::new();
    let mut rho = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            anyhow::bail!("row {} has {} columns, want 8", k + 2, cols.len());
        }
        r.push(cols[0].parse::<f64>().with_context(|| format!("row {} column r", k + 2))?);
        rho.push(cols[1].parse::<f64>().with_context(|| format!("row {} column rho", k + 2))?);
    }
    Ok((r, rho))
}
