//! Planar-averaged velocity and porosity profiles and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::CellFlag;

/// Profiles along z of the stream-wise (x) velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileData {
    /// Plane coordinates (cell centres), lattice units.
    pub z: Vec<f64>,
    /// Average over all cells of a plane, solids counted as zero.
    pub u_superficial: Vec<f64>,
    /// Average over the fluid cells of a plane (zero for blocked planes).
    pub u_intrinsic: Vec<f64>,
    pub porosity: Vec<f64>,
    /// Normalisation velocity, the maximum of `u_superficial`.
    pub u_max: f64,
    /// Channel height used to normalise z.
    pub height: f64,
}

pub const CSV_HEADER: [&str; 5] = ["z[lu]", "U_superficial[lu/step]", "U_intrinsic[lu/step]", "epsilon[-]", "U_normalized[-]"];

impl ProfileData {
    /// Builds a profile from superficial velocities and porosity; the
    /// intrinsic profile is `U/ε` on planes with fluid.
    pub fn from_superficial(z: Vec<f64>, u_superficial: Vec<f64>, porosity: Vec<f64>, height: f64) -> Self {
        let u_intrinsic = u_superficial
            .iter()
            .zip(&porosity)
            .map(|(&u, &e)| if e > 0.0 { u / e } else { 0.0 })
            .collect();
        let u_max = u_superficial.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
        Self {
            z,
            u_superficial,
            u_intrinsic,
            porosity,
            u_max,
            height,
        }
    }

    /// Planar averages of the x velocity of a full field (x fastest).
    pub fn from_velocity_field(dims: [usize; 3], flags: &[CellFlag], velocity: &[[f64; 3]]) -> Self {
        let plane = dims[0] * dims[1];
        let nz = dims[2];
        let mut sup = Vec::with_capacity(nz);
        let mut intr = Vec::with_capacity(nz);
        let mut eps = Vec::with_capacity(nz);
        for z in 0..nz {
            let mut sum = 0.0;
            let mut fluid = 0usize;
            for c in z * plane..(z + 1) * plane {
                if flags[c] == CellFlag::Fluid {
                    sum += velocity[c][0];
                    fluid += 1;
                }
            }
            sup.push(sum / plane as f64);
            intr.push(if fluid > 0 { sum / fluid as f64 } else { 0.0 });
            eps.push(fluid as f64 / plane as f64);
        }
        let u_max = sup.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
        Self {
            z: (0..nz).map(|k| k as f64 + 0.5).collect(),
            u_superficial: sup,
            u_intrinsic: intr,
            porosity: eps,
            u_max,
            height: nz as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// `U/U_max`; all zeros when `U_max` is zero.
    pub fn normalized(&self) -> Vec<f64> {
        if self.u_max > 0.0 {
            self.u_superficial.iter().map(|u| u / self.u_max).collect()
        } else {
            vec![0.0; self.len()]
        }
    }

    /// `z/H`.
    pub fn normalized_z(&self) -> Vec<f64> {
        self.z.iter().map(|z| z / self.height).collect()
    }

    /// Index of the largest superficial velocity.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &u) in self.u_superficial.iter().enumerate() {
            if u > self.u_superficial[best] {
                best = i;
            }
        }
        best
    }

    /// Location of the maximum refined by a parabola through the three
    /// planes around the discrete maximum.
    pub fn argmax_refined(&self) -> f64 {
        let i = self.argmax();
        if i == 0 || i + 1 >= self.len() {
            return self.z[i];
        }
        let (a, b, c) = (self.u_superficial[i - 1], self.u_superficial[i], self.u_superficial[i + 1]);
        let denom = a - 2.0 * b + c;
        if denom >= 0.0 {
            return self.z[i];
        }
        let h = self.z[i + 1] - self.z[i];
        self.z[i] + 0.5 * h * (a - c) / denom
    }

    /// Linear interpolation of the normalised profile at normalised height
    /// `s`, clamped at the ends.
    pub fn normalized_at(&self, s: f64) -> f64 {
        let zs = self.normalized_z();
        let us = self.normalized();
        interpolate(&zs, &us, s)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        let norm = self.normalized();
        for i in 0..self.len() {
            w.write_record([
                format!("{:?}", self.z[i]),
                format!("{:?}", self.u_superficial[i]),
                format!("{:?}", self.u_intrinsic[i]),
                format!("{:?}", self.porosity[i]),
                format!("{:?}", norm[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a profile CSV. Columns are matched by name with units in
    /// brackets ignored; `z` and `epsilon` are required, velocity columns are
    /// optional (a porosity-only file gives zero velocities). `U_intrinsic`
    /// is recomputed when absent.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
        let headers: Vec<String> = r
            .headers()?
            .iter()
            .map(|h| h.split('[').next().unwrap_or("").trim().to_ascii_lowercase())
            .collect();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let z_col = col("z").ok_or_else(|| Error::Format("profile CSV lacks a `z` column".into()))?;
        let eps_col = col("epsilon").ok_or_else(|| Error::Format("profile CSV lacks an `epsilon` column".into()))?;
        let sup_col = col("u_superficial");
        let int_col = col("u_intrinsic");
        let mut z = Vec::new();
        let mut sup = Vec::new();
        let mut intr = Vec::new();
        let mut eps = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let get = |c: usize| -> Result<f64> {
                rec.get(c)
                    .ok_or_else(|| Error::Format(format!("row {} is short", line + 2)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: {e}", line + 2)))
            };
            z.push(get(z_col)?);
            let e = get(eps_col)?;
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Format(format!("row {}: porosity {e} outside [0, 1]", line + 2)));
            }
            eps.push(e);
            let u = match sup_col {
                Some(c) => get(c)?,
                None => 0.0,
            };
            sup.push(u);
            intr.push(match int_col {
                Some(c) => get(c)?,
                None if e > 0.0 => u / e,
                None => 0.0,
            });
        }
        if z.len() < 2 {
            return Err(Error::Format("profile needs at least two planes".into()));
        }
        if z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Format("profile z must be strictly increasing".into()));
        }
        let spacing = z[1] - z[0];
        let height = z[z.len() - 1] - z[0] + spacing;
        let u_max = sup.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
        Ok(Self {
            z,
            u_superficial: sup,
            u_intrinsic: intr,
            porosity: eps,
            u_max,
            height,
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Piecewise-linear interpolation on increasing `xs`, clamped at the ends.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x).min(n - 1);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (x - x0) / (x1 - x0);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

/// Root-mean-square distance between two normalised profiles evaluated on
/// the normalised coordinates of `reference`.
pub fn normalized_l2_distance(reference: &ProfileData, other: &ProfileData) -> f64 {
    let zs = reference.normalized_z();
    let ur = reference.normalized();
    let sum: f64 = zs
        .iter()
        .zip(&ur)
        .map(|(&s, &u)| {
            let d = u - other.normalized_at(s);
            d * d
        })
        .sum();
    (sum / zs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn superficial_and_intrinsic_agree_with_porosity() {
        let dims = [2, 1, 3];
        let flags = vec![
            CellFlag::Solid,
            CellFlag::Fluid,
            CellFlag::Fluid,
            CellFlag::Fluid,
            CellFlag::Solid,
            CellFlag::Solid,
        ];
        let vel = vec![[0.0; 3], [0.2, 0.0, 0.0], [0.1, 0.0, 0.0], [0.3, 0.0, 0.0], [0.0; 3], [0.0; 3]];
        let p = ProfileData::from_velocity_field(dims, &flags, &vel);
        assert_eq!(p.porosity, vec![0.5, 1.0, 0.0]);
        for i in 0..3 {
            assert!((p.u_superficial[i] - p.porosity[i] * p.u_intrinsic[i]).abs() < 1e-16);
        }
        assert_eq!(p.argmax(), 1);
        assert_eq!(p.normalized()[1], 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let p = ProfileData::from_superficial(vec![0.5, 1.5, 2.5], vec![0.0, 1e-3, 2.5e-4], vec![0.4, 0.9, 1.0], 3.0);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("z[lu],U_superficial[lu/step]"));
        let back = ProfileData::read_csv(&buf[..]).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn porosity_only_csv() {
        let text = "z,epsilon\n0.5,0.4\n1.5,1.0\n";
        let p = ProfileData::read_csv(text.as_bytes()).unwrap();
        assert_eq!(p.porosity, vec![0.4, 1.0]);
        assert_eq!(p.u_max, 0.0);
        assert!(ProfileData::read_csv("z,epsilon\n0.5,1.4\n1.5,1\n".as_bytes()).is_err());
    }

    #[test]
    fn refined_argmax_of_parabola() {
        let z: Vec<f64> = (0..10).map(|i| i as f64 + 0.5).collect();
        let u: Vec<f64> = z.iter().map(|z| -(z - 6.2) * (z - 6.2) + 40.0).collect();
        let p = ProfileData::from_superficial(z, u, vec![1.0; 10], 10.0);
        assert!((p.argmax_refined() - 6.2).abs() < 1e-12);
    }

    #[test]
    fn interpolation() {
        let xs = [0.0, 1.0, 3.0];
        let ys = [0.0, 2.0, 6.0];
        assert_eq!(interpolate(&xs, &ys, 2.0), 4.0);
        assert_eq!(interpolate(&xs, &ys, -1.0), 0.0);
        assert_eq!(interpolate(&xs, &ys, 5.0), 6.0);
    }
}
