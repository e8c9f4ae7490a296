//! Run artefacts: legacy VTK fields, key-value reports, comparison CSVs.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::CellFlag;

/// Writes cell data on a uniform grid as an ASCII legacy VTK
/// `STRUCTURED_POINTS` file. Points sit at cell centres with unit spacing.
pub fn write_vtk<W: Write>(
    mut out: W,
    title: &str,
    dims: [usize; 3],
    scalars: &[(&str, &[f64])],
    vectors: &[(&str, &[[f64; 3]])],
) -> Result<()> {
    let n = dims[0] * dims[1] * dims[2];
    for (name, data) in scalars {
        if data.len() != n {
            return Err(Error::Format(format!("scalar field `{name}` has {} values for {n} cells", data.len())));
        }
    }
    for (name, data) in vectors {
        if data.len() != n {
            return Err(Error::Format(format!("vector field `{name}` has {} values for {n} cells", data.len())));
        }
    }
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET STRUCTURED_POINTS")?;
    writeln!(out, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2])?;
    writeln!(out, "ORIGIN 0.5 0.5 0.5")?;
    writeln!(out, "SPACING 1 1 1")?;
    writeln!(out, "POINT_DATA {n}")?;
    for (name, data) in scalars {
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in *data {
            writeln!(out, "{v:e}")?;
        }
    }
    for (name, data) in vectors {
        writeln!(out, "VECTORS {name} double")?;
        for v in *data {
            writeln!(out, "{:e} {:e} {:e}", v[0], v[1], v[2])?;
        }
    }
    Ok(())
}

/// Velocity and flag field of a run.
pub fn save_velocity_vtk(path: &Path, dims: [usize; 3], flags: &[CellFlag], velocity: &[[f64; 3]]) -> Result<()> {
    let flag_values: Vec<f64> = flags.iter().map(|&f| f as u8 as f64).collect();
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_vtk(file, "porous-lbm velocity", dims, &[("flag", &flag_values)], &[("velocity", velocity)])
}

/// `key = value` lines.
pub fn format_report(entries: &[(&str, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

pub fn save_report(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    std::fs::write(path, format_report(entries))?;
    Ok(())
}

/// CSV with a shared `z` column and one column per named series.
pub fn write_comparison<W: Write>(out: W, z: &[f64], series: &[(&str, &[f64])]) -> Result<()> {
    for (name, s) in series {
        if s.len() != z.len() {
            return Err(Error::Format(format!("series `{name}` has {} values for {} planes", s.len(), z.len())));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["z[lu]".to_string()];
    header.extend(series.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header)?;
    for i in 0..z.len() {
        let mut row = vec![format!("{:?}", z[i])];
        row.extend(series.iter().map(|(_, s)| format!("{:?}", s[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_comparison(path: &Path, z: &[f64], series: &[(&str, &[f64])]) -> Result<()> {
    write_comparison(std::fs::File::create(path)?, z, series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vtk_header() {
        let mut buf = Vec::new();
        write_vtk(&mut buf, "t", [2, 1, 1], &[("p", &[1.0, 2.0])], &[("u", &[[0.0; 3], [1.0, 0.0, 0.0]])]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("DATASET STRUCTURED_POINTS\nDIMENSIONS 2 1 1\n"));
        assert!(text.contains("VECTORS u double\n0e0 0e0 0e0\n1e0 0e0 0e0\n"));
        assert!(write_vtk(Vec::new(), "t", [2, 2, 1], &[("p", &[1.0])], &[]).is_err());
    }

    #[test]
    fn comparison_columns() {
        let mut buf = Vec::new();
        write_comparison(&mut buf, &[0.5, 1.5], &[("dns", &[1.0, 2.0]), ("glbm", &[1.5, 2.5])]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "z[lu],dns,glbm\n0.5,1.0,1.5\n1.5,2.0,2.5\n");
    }
}
