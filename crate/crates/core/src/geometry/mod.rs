//! Porous geometries on the lattice: sphere packings, their voxelisation
//! into cell flags and boundary links, and planar porosity profiles.
//!
//! Cell `(i, j, k)` has its centre at `(i + ½, j + ½, k + ½)` in the
//! continuous coordinates of the pack, so a box of length `L` holds exactly
//! `L` cells and domain faces lie midway between cell centres.

mod packing;

pub use packing::{generate_packing, support_report, PackingSpec, Sphere, SpherePack};

use std::io::{BufRead, Read, Write};

use crate::boundary::{BoundaryLink, Q_MIN};
use crate::error::{Error, Result};
use crate::lattice::{Q, VELOCITIES, VELOCITIES_F};
use crate::profile::ProfileData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CellFlag {
    Fluid = 0,
    Solid = 1,
    Wall = 2,
}

impl CellFlag {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(CellFlag::Fluid),
            1 => Some(CellFlag::Solid),
            2 => Some(CellFlag::Wall),
            _ => None,
        }
    }
}

/// Linear cell index, x fastest.
#[inline]
pub fn cell_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

#[inline]
pub fn cell_coords(dims: [usize; 3], cell: usize) -> [usize; 3] {
    let x = cell % dims[0];
    let yz = cell / dims[0];
    [x, yz % dims[1], yz / dims[1]]
}

/// Cell reached from `cell` along `offset`, wrapping periodic axes. `None`
/// when the step leaves the domain through a non-periodic face.
#[inline]
pub fn neighbour(dims: [usize; 3], periodic: [bool; 3], cell: usize, offset: [i32; 3]) -> Option<usize> {
    let c = cell_coords(dims, cell);
    let mut out = [0usize; 3];
    for a in 0..3 {
        let v = c[a] as i64 + offset[a] as i64;
        let n = dims[a] as i64;
        out[a] = if (0..n).contains(&v) {
            v as usize
        } else if periodic[a] {
            v.rem_euclid(n) as usize
        } else {
            return None;
        };
    }
    Some(cell_index(dims, out[0], out[1], out[2]))
}

/// Cell flags, boundary links and porosity profile of a voxelised domain.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGeometry {
    pub dims: [usize; 3],
    pub periodic: [bool; 3],
    pub flags: Vec<CellFlag>,
    /// Links ordered by fluid cell, then direction.
    pub links: Vec<BoundaryLink>,
    /// Fluid fraction of every z plane.
    pub porosity: Vec<f64>,
    /// Planes without any fluid cell.
    pub blocked_planes: Vec<usize>,
}

impl VoxelGeometry {
    /// Builds a geometry from flags, computing links with `wall_distance`
    /// (`q` for a link from `cell` along direction `k`; the neighbour is
    /// `None` when the link crosses a non-periodic domain face).
    pub fn from_flags<F>(dims: [usize; 3], periodic: [bool; 3], flags: Vec<CellFlag>, wall_distance: F) -> Result<Self>
    where
        F: Fn(usize, usize, Option<usize>) -> f64,
    {
        let n = dims[0] * dims[1] * dims[2];
        if n == 0 {
            return Err(Error::Geometry("domain has zero cells".into()));
        }
        if flags.len() != n {
            return Err(Error::Geometry(format!("{} flags for {n} cells", flags.len())));
        }
        let fluid_total = flags.iter().filter(|&&f| f == CellFlag::Fluid).count();
        if fluid_total == 0 {
            return Err(Error::Geometry("geometry contains no fluid cells".into()));
        }
        let mut links = Vec::new();
        for cell in 0..n {
            if flags[cell] != CellFlag::Fluid {
                continue;
            }
            for k in 1..Q {
                let target = neighbour(dims, periodic, cell, VELOCITIES[k]);
                let blocked = match target {
                    None => true,
                    Some(t) => flags[t] != CellFlag::Fluid,
                };
                if !blocked {
                    continue;
                }
                let back = [-VELOCITIES[k][0], -VELOCITIES[k][1], -VELOCITIES[k][2]];
                let second_fluid =
                    neighbour(dims, periodic, cell, back).filter(|&c| flags[c] == CellFlag::Fluid);
                let q = wall_distance(cell, k, target).clamp(Q_MIN, 1.0);
                links.push(BoundaryLink {
                    fluid_cell: cell,
                    direction: k,
                    q,
                    second_fluid,
                    wall_velocity: [0.0; 3],
                });
            }
        }
        let plane = dims[0] * dims[1];
        let porosity: Vec<f64> = (0..dims[2])
            .map(|z| {
                let fluid = flags[z * plane..(z + 1) * plane]
                    .iter()
                    .filter(|&&f| f == CellFlag::Fluid)
                    .count();
                fluid as f64 / plane as f64
            })
            .collect();
        let blocked_planes: Vec<usize> = porosity
            .iter()
            .enumerate()
            .filter(|(_, &e)| e == 0.0)
            .map(|(z, _)| z)
            .collect();
        if !blocked_planes.is_empty() {
            log::warn!("{} plane(s) fully blocked by solid: {:?}", blocked_planes.len(), blocked_planes);
        }
        Ok(Self {
            dims,
            periodic,
            flags,
            links,
            porosity,
            blocked_planes,
        })
    }

    /// Plane channel: periodic in x and y, walls midway below the first and
    /// above the last z layer.
    pub fn channel(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        let pack = SpherePack::empty([nx as f64, ny as f64, nz as f64]);
        voxelize(&pack, [nx, ny, nz], [true, true, false])
    }

    pub fn cell_count(&self) -> usize {
        self.flags.len()
    }

    pub fn fluid_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f == CellFlag::Fluid).count()
    }

    /// Sets the velocity of the wall above the last z layer on every link
    /// that crosses it.
    pub fn set_top_wall_velocity(&mut self, u: [f64; 3]) {
        let dims = self.dims;
        for link in &mut self.links {
            let [_, _, z] = cell_coords(dims, link.fluid_cell);
            if z + 1 == dims[2] && VELOCITIES[link.direction][2] > 0 && !self.periodic[2] {
                link.wall_velocity = u;
            }
        }
    }

    /// Planar porosity as a profile with coordinates at cell centres.
    pub fn porosity_profile(&self) -> ProfileData {
        porosity_profile(self)
    }

    /// Writes the flag field: a short text header followed by one byte per
    /// cell (0 fluid, 1 solid, 2 wall), x fastest.
    pub fn write_voxels<W: Write>(&self, mut out: W) -> Result<()> {
        let [nx, ny, nz] = self.dims;
        let p = self.periodic.map(|b| b as u8);
        write!(out, "porous-lbm-voxels 1\ndims {nx} {ny} {nz}\nperiodic {} {} {}\ndata\n", p[0], p[1], p[2])?;
        let bytes: Vec<u8> = self.flags.iter().map(|&f| f as u8).collect();
        out.write_all(&bytes)?;
        Ok(())
    }

    /// Reads a flag file written by [`VoxelGeometry::write_voxels`]. Sub-cell
    /// wall positions are not stored, so every link gets `q = ½`.
    pub fn read_voxels<R: Read>(input: R) -> Result<Self> {
        let mut reader = std::io::BufReader::new(input);
        let mut line = String::new();
        let mut next_line = |reader: &mut std::io::BufReader<R>| -> Result<String> {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(Error::Format("voxel file ended inside the header".into()));
            }
            Ok(line.trim_end().to_string())
        };
        if next_line(&mut reader)? != "porous-lbm-voxels 1" {
            return Err(Error::Format("not a porous-lbm voxel file".into()));
        }
        let parse_triple = |text: &str, key: &str| -> Result<[usize; 3]> {
            let rest = text
                .strip_prefix(key)
                .ok_or_else(|| Error::Format(format!("expected `{key}` line, got `{text}`")))?;
            let v: Vec<usize> = rest
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Format(format!("bad `{key}` value `{t}`"))))
                .collect::<Result<_>>()?;
            v.try_into()
                .map_err(|_| Error::Format(format!("`{key}` needs three values")))
        };
        let dims = parse_triple(&next_line(&mut reader)?, "dims")?;
        let periodic = parse_triple(&next_line(&mut reader)?, "periodic")?.map(|v| v != 0);
        if next_line(&mut reader)? != "data" {
            return Err(Error::Format("missing `data` marker".into()));
        }
        let n = dims[0] * dims[1] * dims[2];
        let mut bytes = Vec::with_capacity(n);
        reader.read_to_end(&mut bytes)?;
        if bytes.len() != n {
            return Err(Error::Format(format!("expected {n} flag bytes, found {}", bytes.len())));
        }
        let flags = bytes
            .into_iter()
            .map(|b| CellFlag::from_byte(b).ok_or_else(|| Error::Format(format!("bad flag byte {b}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_flags(dims, periodic, flags, |_, _, _| 0.5)
    }
}

/// Buckets spheres by centre for neighbourhood queries.
struct SphereIndex<'a> {
    pack: &'a SpherePack,
    bucket: f64,
    counts: [usize; 3],
    z0: f64,
    buckets: Vec<Vec<usize>>,
}

impl<'a> SphereIndex<'a> {
    fn new(pack: &'a SpherePack, reach: f64) -> Self {
        let bucket = reach.max(1.0);
        let z0 = pack
            .spheres
            .iter()
            .map(|s| s.center[2])
            .fold(f64::INFINITY, f64::min)
            .min(0.0);
        let z1 = pack
            .spheres
            .iter()
            .map(|s| s.center[2])
            .fold(f64::NEG_INFINITY, f64::max)
            .max(pack.box_size[2]);
        let counts = [
            ((pack.box_size[0] / bucket).floor() as usize).max(1),
            ((pack.box_size[1] / bucket).floor() as usize).max(1),
            (((z1 - z0) / bucket).floor() as usize + 1).max(1),
        ];
        let mut buckets = vec![Vec::new(); counts[0] * counts[1] * counts[2]];
        let mut index = Self {
            pack,
            bucket,
            counts,
            z0,
            buckets: Vec::new(),
        };
        for (i, s) in pack.spheres.iter().enumerate() {
            let b = index.bucket_of(s.center);
            buckets[b[0] + counts[0] * (b[1] + counts[1] * b[2])].push(i);
        }
        index.buckets = buckets;
        index
    }

    fn bucket_of(&self, p: [f64; 3]) -> [usize; 3] {
        let bx = self.pack.box_size[0] / self.counts[0] as f64;
        let by = self.pack.box_size[1] / self.counts[1] as f64;
        let x = (p[0].rem_euclid(self.pack.box_size[0]) / bx) as usize;
        let y = (p[1].rem_euclid(self.pack.box_size[1]) / by) as usize;
        let z = ((p[2] - self.z0) / self.bucket).floor().max(0.0) as usize;
        [x.min(self.counts[0] - 1), y.min(self.counts[1] - 1), z.min(self.counts[2] - 1)]
    }

    /// Spheres whose centres lie in the 3×3×3 bucket block around `p`.
    fn near(&self, p: [f64; 3], out: &mut Vec<usize>) {
        out.clear();
        let b = self.bucket_of(p);
        let mut xs: Vec<usize> = (-1i64..=1)
            .map(|d| (b[0] as i64 + d).rem_euclid(self.counts[0] as i64) as usize)
            .collect();
        let mut ys: Vec<usize> = (-1i64..=1)
            .map(|d| (b[1] as i64 + d).rem_euclid(self.counts[1] as i64) as usize)
            .collect();
        xs.sort_unstable();
        xs.dedup();
        ys.sort_unstable();
        ys.dedup();
        for dz in -1i64..=1 {
            let z = b[2] as i64 + dz;
            if z < 0 || z >= self.counts[2] as i64 {
                continue;
            }
            for &y in &ys {
                for &x in &xs {
                    out.extend_from_slice(&self.buckets[x + self.counts[0] * (y + self.counts[1] * z as usize)]);
                }
            }
        }
    }
}

/// Entry parameter `t ∈ (0, 1]` of the segment `p + t e` into the sphere, if any.
fn segment_sphere_entry(p: [f64; 3], e: [f64; 3], center: [f64; 3], radius: f64) -> Option<f64> {
    let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
    let a = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
    let b = 2.0 * (e[0] * d[0] + e[1] * d[1] + e[2] * d[2]);
    let c = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    (t > 0.0 && t <= 1.0).then_some(t)
}

/// Flags cells whose centres lie inside a sphere (horizontal images
/// included) or at/below the bottom plate, then computes boundary links with
/// exact ray–sphere and ray–plane wall distances.
pub fn voxelize(pack: &SpherePack, dims: [usize; 3], periodic: [bool; 3]) -> Result<VoxelGeometry> {
    for axis in 0..3 {
        if dims[axis] == 0 {
            return Err(Error::Geometry(format!("dimension {axis} is zero")));
        }
    }
    for axis in 0..2 {
        if (pack.box_size[axis] - dims[axis] as f64).abs() > 1e-9 {
            return Err(Error::Geometry(format!(
                "box length {} along axis {axis} does not match {} cells",
                pack.box_size[axis], dims[axis]
            )));
        }
    }
    let n = dims[0] * dims[1] * dims[2];
    let mut flags = vec![CellFlag::Fluid; n];
    let plane = dims[0] * dims[1];
    for z in 0..dims[2] {
        if z as f64 + 0.5 <= pack.bottom_plate_z {
            flags[z * plane..(z + 1) * plane].fill(CellFlag::Solid);
        }
    }
    for s in &pack.spheres {
        let r = s.radius;
        let lo = |a: usize| (s.center[a] - r - 0.5).floor() as i64;
        let hi = |a: usize| (s.center[a] + r - 0.5).ceil() as i64;
        for k in lo(2).max(0)..=hi(2).min(dims[2] as i64 - 1) {
            let dz = k as f64 + 0.5 - s.center[2];
            for j in lo(1)..=hi(1) {
                let Some(y) = wrap_index(j, dims[1], periodic[1]) else { continue };
                let dy = j as f64 + 0.5 - s.center[1];
                for i in lo(0)..=hi(0) {
                    let Some(x) = wrap_index(i, dims[0], periodic[0]) else { continue };
                    let dx = i as f64 + 0.5 - s.center[0];
                    if dx * dx + dy * dy + dz * dz <= r * r {
                        flags[cell_index(dims, x, y, k as usize)] = CellFlag::Solid;
                    }
                }
            }
        }
    }
    let index = SphereIndex::new(pack, pack.max_radius() + 2.0);
    let images: Vec<[f64; 2]> = {
        let xs: &[f64] = if periodic[0] { &[-1.0, 0.0, 1.0] } else { &[0.0] };
        let ys: &[f64] = if periodic[1] { &[-1.0, 0.0, 1.0] } else { &[0.0] };
        xs.iter()
            .flat_map(|&a| ys.iter().map(move |&b| [a * pack.box_size[0], b * pack.box_size[1]]))
            .collect()
    };
    let candidates = std::cell::RefCell::new(Vec::new());
    VoxelGeometry::from_flags(dims, periodic, flags, |cell, k, target| {
        let c = cell_coords(dims, cell);
        let p = [c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5];
        let e = VELOCITIES_F[k];
        let mut best = f64::INFINITY;
        // Domain faces on non-periodic axes.
        for a in 0..3 {
            if periodic[a] || e[a] == 0.0 {
                continue;
            }
            let face = if e[a] > 0.0 { dims[a] as f64 } else { 0.0 };
            let t = (face - p[a]) / e[a];
            if t > 0.0 && t <= 1.0 {
                best = best.min(t);
            }
        }
        if e[2] < 0.0 && pack.bottom_plate_z.is_finite() {
            let t = (pack.bottom_plate_z - p[2]) / e[2];
            if t > 0.0 && t <= 1.0 {
                best = best.min(t);
            }
        }
        let mut near = candidates.borrow_mut();
        index.near(p, &mut near);
        for &i in near.iter() {
            let s = &pack.spheres[i];
            for shift in &images {
                let center = [s.center[0] + shift[0], s.center[1] + shift[1], s.center[2]];
                if let Some(t) = segment_sphere_entry(p, e, center, s.radius) {
                    best = best.min(t);
                }
            }
        }
        if best.is_finite() {
            best
        } else {
            // Target is solid but no surface was found along the link
            // (round-off at a grazing intersection): wall at the solid node.
            debug_assert!(target.is_some());
            1.0
        }
    })
}

fn wrap_index(i: i64, n: usize, periodic: bool) -> Option<usize> {
    if (0..n as i64).contains(&i) {
        Some(i as usize)
    } else if periodic {
        Some(i.rem_euclid(n as i64) as usize)
    } else {
        None
    }
}

/// Planar porosity with plane coordinates at cell centres.
pub fn porosity_profile(geom: &VoxelGeometry) -> ProfileData {
    let nz = geom.dims[2];
    let z: Vec<f64> = (0..nz).map(|k| k as f64 + 0.5).collect();
    ProfileData {
        z,
        u_superficial: vec![0.0; nz],
        u_intrinsic: vec![0.0; nz],
        porosity: geom.porosity.clone(),
        u_max: 0.0,
        height: nz as f64,
    }
}
