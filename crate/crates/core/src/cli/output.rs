use std::io::Write;
use std::path::Path;

use crate::error::{Result, VortexError};
use crate::geometry::LatticeTorus;

/// Write to a temporary file in the same directory, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| VortexError::Io(std::io::Error::other("path has no file name")))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Grid CSV of a scalar field. Comment lines carry the axis metadata; each
/// data row runs along the last axis, rows in row-major order of the others.
pub fn grid_csv(torus: &LatticeTorus, name: &str, values: &[f64]) -> Result<String> {
    if values.len() != torus.sites() {
        return Err(VortexError::SizeMismatch(format!("{} values for {} sites", values.len(), torus.sites())));
    }
    let grid = torus.grid();
    let join = |v: Vec<String>| v.join(",");
    let mut s = format!("# field={name}\n");
    s.push_str(&format!("# complex_dim={}\n", torus.complex_dim()));
    s.push_str(&format!("# grid={}\n", join(grid.iter().map(|n| n.to_string()).collect())));
    s.push_str(&format!("# lengths={}\n", join(torus.lengths().iter().map(|l| l.to_string()).collect())));
    s.push_str("# axes=x1,y1[,x2,y2]; rows row-major over all but the last axis\n");
    let last = grid[grid.len() - 1];
    for row in values.chunks(last) {
        s.push_str(&join(row.iter().map(|v| format!("{v:.17e}")).collect()));
        s.push('\n');
    }
    Ok(s)
}

/// Read back the values of [`grid_csv`].
pub fn parse_grid_csv(text: &str) -> Vec<f64> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .flat_map(|l| l.split(',').map(|v| v.trim().parse::<f64>().unwrap_or(f64::NAN)).collect::<Vec<_>>())
        .collect()
}

pub fn emit_grid(torus: &LatticeTorus, name: &str, values: &[f64], path: &Path) -> Result<()> {
    write_atomic(path, grid_csv(torus, name, values)?.as_bytes())
}
