//! Sequential drop-and-roll deposition of spheres onto a plate.
//!
//! Each sphere is dropped at a random horizontal position, lowered until it
//! touches the plate or the packing, and then rolled downhill along its
//! contacts until no further descent is possible. The horizontal axes are
//! periodic with the box lengths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpherePack {
    pub spheres: Vec<Sphere>,
    /// Domain box `(Lx, Ly, Lz)` in lattice units.
    pub box_size: [f64; 3],
    /// Elevation of the plate the spheres were deposited on; solid below.
    pub bottom_plate_z: f64,
    pub seed: u64,
}

impl SpherePack {
    /// A pack without spheres and without a plate inside the domain.
    pub fn empty(box_size: [f64; 3]) -> Self {
        Self {
            spheres: Vec::new(),
            box_size,
            bottom_plate_z: f64::NEG_INFINITY,
            seed: 0,
        }
    }

    pub fn max_radius(&self) -> f64 {
        self.spheres.iter().map(|s| s.radius).fold(0.0, f64::max)
    }

    /// Same layout with every length multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            spheres: self
                .spheres
                .iter()
                .map(|s| Sphere {
                    center: [s.center[0] * factor, s.center[1] * factor, s.center[2] * factor],
                    radius: s.radius * factor,
                })
                .collect(),
            box_size: [
                self.box_size[0] * factor,
                self.box_size[1] * factor,
                self.box_size[2] * factor,
            ],
            bottom_plate_z: self.bottom_plate_z * factor,
            seed: self.seed,
        }
    }

    /// Largest overlap between two spheres, relative to the smaller radius.
    pub fn max_relative_overlap(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.spheres.iter().enumerate() {
            for b in &self.spheres[i + 1..] {
                let d = min_image_distance(a.center, b.center, self.box_size);
                let overlap = (a.radius + b.radius - d) / a.radius.min(b.radius);
                worst = worst.max(overlap);
            }
        }
        worst
    }

    /// Writes the spheres as CSV with columns `x,y,z,r`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "z", "r"])?;
        for s in &self.spheres {
            w.write_record(&[
                format!("{:?}", s.center[0]),
                format!("{:?}", s.center[1]),
                format!("{:?}", s.center[2]),
                format!("{:?}", s.radius),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads spheres written by [`SpherePack::write_csv`].
    pub fn read_csv<R: std::io::Read>(
        input: R,
        box_size: [f64; 3],
        bottom_plate_z: f64,
    ) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut spheres = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 4 {
                return Err(Error::Format(format!("sphere row {} has {} columns", row + 1, record.len())));
            }
            let mut v = [0.0; 4];
            for (i, field) in record.iter().enumerate() {
                v[i] = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("sphere row {}: bad number `{field}`", row + 1)))?;
            }
            spheres.push(Sphere {
                center: [v[0], v[1], v[2]],
                radius: v[3],
            });
        }
        Ok(Self {
            spheres,
            box_size,
            bottom_plate_z,
            seed: 0,
        })
    }
}

/// Horizontal minimum-image displacement `a − b`.
#[inline]
pub(crate) fn min_image(a: [f64; 3], b: [f64; 3], box_size: [f64; 3]) -> [f64; 3] {
    let mut d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    for axis in 0..2 {
        let l = box_size[axis];
        d[axis] -= l * (d[axis] / l).round();
    }
    d
}

fn min_image_distance(a: [f64; 3], b: [f64; 3], box_size: [f64; 3]) -> f64 {
    let d = min_image(a, b, box_size);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackingSpec {
    pub box_size: [f64; 3],
    pub r_mean: f64,
    /// Relative radius spread `δ`: radii uniform in `r_mean·[1−δ, 1+δ]`.
    pub r_spread: f64,
    /// Deposition stops once a sphere settles with its centre at or above
    /// this height.
    pub target_fill_height: f64,
    pub bottom_plate_z: f64,
    pub seed: u64,
    pub max_attempts: usize,
}

impl PackingSpec {
    pub fn new(box_size: [f64; 3], r_mean: f64, target_fill_height: f64, seed: u64) -> Self {
        Self {
            box_size,
            r_mean,
            r_spread: 0.0,
            target_fill_height,
            bottom_plate_z: 0.0,
            seed,
            max_attempts: 100_000,
        }
    }
}

const CONTACT_TOL: f64 = 1e-6;
const MAX_SETTLE_ITERS: usize = 200_000;

struct Deposit<'a> {
    spheres: &'a [Sphere],
    box_size: [f64; 3],
    plate: f64,
}

impl Deposit<'_> {
    fn drop_height(&self, x: f64, y: f64, r: f64) -> f64 {
        let mut z = self.plate + r;
        let p = [x, y, 0.0];
        for s in self.spheres {
            let d = min_image(p, s.center, self.box_size);
            let reach = r + s.radius;
            let h2 = d[0] * d[0] + d[1] * d[1];
            if h2 < reach * reach {
                z = z.max(s.center[2] + (reach * reach - h2).sqrt());
            }
        }
        z
    }

    fn neighbours(&self, p: [f64; 3], r: f64, margin: f64) -> Vec<usize> {
        self.spheres
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                let d = min_image(p, s.center, self.box_size);
                let reach = r + s.radius + margin;
                d[0] * d[0] + d[1] * d[1] < reach * reach
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Gauss–Seidel projection out of all overlaps. Returns the largest
    /// remaining overlap.
    fn project(&self, p: &mut [f64; 3], r: f64, candidates: &[usize]) -> f64 {
        let mut worst = 0.0;
        for _ in 0..200 {
            worst = 0.0;
            for &i in candidates {
                let s = &self.spheres[i];
                let d = min_image(*p, s.center, self.box_size);
                let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let reach = r + s.radius;
                if dist < reach {
                    let push = reach - dist;
                    worst = f64::max(worst, push);
                    if dist > 0.0 {
                        for a in 0..3 {
                            p[a] += d[a] / dist * push;
                        }
                    } else {
                        p[2] += push;
                    }
                }
            }
            if p[2] < self.plate + r {
                worst = f64::max(worst, self.plate + r - p[2]);
                p[2] = self.plate + r;
            }
            if worst < 1e-12 * r {
                break;
            }
        }
        worst
    }

    fn contacts(&self, p: [f64; 3], r: f64, candidates: &[usize]) -> (usize, bool) {
        let tol = 1e-5 * r;
        let n = candidates
            .iter()
            .filter(|&&i| {
                let s = &self.spheres[i];
                let reach = r + s.radius;
                let d = min_image(p, s.center, self.box_size);
                let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                (dist - reach).abs() < tol
            })
            .count();
        (n, (p[2] - self.plate - r).abs() < tol)
    }

    /// Drops a sphere at `(x, y)` and rolls it into a stable resting place.
    fn settle(&self, x: f64, y: f64, r: f64, rng: &mut ChaCha8Rng) -> Option<[f64; 3]> {
        let margin = 2.0 * r;
        let mut p = [x, y, self.drop_height(x, y, r)];
        let mut anchor = p;
        let mut candidates = self.neighbours(p, r, margin);
        let mut step = 0.25 * r;
        let mut nudges = 0;
        let mut iters = 0;
        loop {
            while step > 1e-11 * r {
                iters += 1;
                if iters > MAX_SETTLE_ITERS {
                    return None;
                }
                let mut trial = p;
                trial[2] -= step;
                self.project(&mut trial, r, &candidates);
                if trial[2] < p[2] - 1e-13 * r {
                    p = trial;
                    let moved = ((p[0] - anchor[0]).powi(2) + (p[1] - anchor[1]).powi(2)).sqrt();
                    if moved > 0.5 * margin {
                        anchor = p;
                        candidates = self.neighbours(p, r, margin);
                    }
                } else {
                    step *= 0.5;
                }
            }
            let (touching, on_plate) = self.contacts(p, r, &candidates);
            if on_plate || touching >= 3 || nudges >= 8 {
                break;
            }
            // Balanced on a crest: push sideways and keep rolling.
            nudges += 1;
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            p[0] += 1e-3 * r * phi.cos();
            p[1] += 1e-3 * r * phi.sin();
            self.project(&mut p, r, &candidates);
            step = 0.25 * r;
        }
        let overlap = self.project(&mut p, r, &candidates);
        for axis in 0..2 {
            p[axis] = p[axis].rem_euclid(self.box_size[axis]);
        }
        (overlap <= CONTACT_TOL * r).then_some(p)
    }
}

/// Generates a deterministic random packing for `spec`.
pub fn generate_packing(spec: &PackingSpec) -> Result<SpherePack> {
    if !(spec.r_mean >= 2.0) {
        return Err(Error::param("r_mean", format!("must be at least 2 lattice units, got {}", spec.r_mean)));
    }
    if !(0.0..=0.5).contains(&spec.r_spread) {
        return Err(Error::param("r_spread", format!("must lie in [0, 0.5], got {}", spec.r_spread)));
    }
    let r_max = spec.r_mean * (1.0 + spec.r_spread);
    if spec.box_size[0] < 2.0 * r_max || spec.box_size[1] < 2.0 * r_max {
        return Err(Error::param("box_size", "box cannot hold a single sphere"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut spheres: Vec<Sphere> = Vec::new();
    let mut rejected = 0;
    let mut top = f64::NEG_INFINITY;
    loop {
        let radius = if spec.r_spread > 0.0 {
            spec.r_mean * rng.gen_range(1.0 - spec.r_spread..=1.0 + spec.r_spread)
        } else {
            spec.r_mean
        };
        let x = rng.gen_range(0.0..spec.box_size[0]);
        let y = rng.gen_range(0.0..spec.box_size[1]);
        let deposit = Deposit {
            spheres: &spheres,
            box_size: spec.box_size,
            plate: spec.bottom_plate_z,
        };
        match deposit.settle(x, y, radius, &mut rng) {
            Some(center) => {
                top = top.max(center[2]);
                spheres.push(Sphere { center, radius });
                if center[2] >= spec.target_fill_height {
                    break;
                }
            }
            None => {
                rejected += 1;
                if rejected >= spec.max_attempts {
                    return Err(Error::Geometry(format!(
                        "packing gave up after {rejected} rejected insertions; reached height {top:.3} \
                         of target {}",
                        spec.target_fill_height
                    )));
                }
            }
        }
        if spheres.len() + rejected >= spec.max_attempts {
            return Err(Error::Geometry(format!(
                "packing exceeded {} insertions; reached height {top:.3} of target {}",
                spec.max_attempts, spec.target_fill_height
            )));
        }
    }
    Ok(SpherePack {
        spheres,
        box_size: spec.box_size,
        bottom_plate_z: spec.bottom_plate_z,
        seed: spec.seed,
    })
}

/// Number of contacts each sphere had with the spheres deposited before it,
/// plus whether it rests on the plate. Used to check mechanical support.
pub fn support_report(pack: &SpherePack) -> Vec<(usize, bool)> {
    (0..pack.spheres.len())
        .map(|i| {
            let s = pack.spheres[i];
            let tol = 1e-4 * s.radius;
            let below = &pack.spheres[..i];
            let touching = below
                .iter()
                .filter(|o| {
                    let d = min_image_distance(s.center, o.center, pack.box_size);
                    (d - s.radius - o.radius).abs() < tol
                })
                .count();
            (touching, (s.center[2] - s.radius - pack.bottom_plate_z).abs() < tol)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sphere_rests_on_plate() {
        let mut spec = PackingSpec::new([40.0, 40.0, 40.0], 8.0, 0.0, 3);
        spec.bottom_plate_z = 1.5;
        let pack = generate_packing(&spec).unwrap();
        assert_eq!(pack.spheres.len(), 1);
        assert_eq!(pack.spheres[0].center[2], 1.5 + 8.0);
    }

    #[test]
    fn deterministic_under_seed() {
        let mut spec = PackingSpec::new([32.0, 32.0, 40.0], 4.0, 14.0, 11);
        spec.r_spread = 0.3;
        let a = generate_packing(&spec).unwrap();
        let b = generate_packing(&spec).unwrap();
        assert_eq!(a, b);
        spec.seed = 12;
        let c = generate_packing(&spec).unwrap();
        assert_ne!(a.spheres, c.spheres);
    }

    #[test]
    fn spheres_are_supported_and_disjoint() {
        let mut spec = PackingSpec::new([30.0, 30.0, 40.0], 3.0, 12.0, 5);
        spec.r_spread = 0.5;
        let pack = generate_packing(&spec).unwrap();
        assert!(pack.spheres.len() > 20);
        assert!(pack.max_relative_overlap() <= CONTACT_TOL);
        for (i, (touching, on_plate)) in support_report(&pack).into_iter().enumerate() {
            assert!(on_plate || touching >= 3, "sphere {i}: {touching} contacts");
        }
        for s in &pack.spheres {
            assert!((0.0..30.0).contains(&s.center[0]) && (0.0..30.0).contains(&s.center[1]));
            assert!(s.radius >= 1.5 - 1e-12 && s.radius <= 4.5 + 1e-12);
        }
        let last = pack.spheres.last().unwrap();
        assert!(last.center[2] >= 12.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_packing(&PackingSpec::new([40.0; 3], 1.0, 5.0, 0)).is_err());
        assert!(generate_packing(&PackingSpec::new([10.0; 3], 8.0, 5.0, 0)).is_err());
        let mut spec = PackingSpec::new([40.0; 3], 4.0, 5.0, 0);
        spec.r_spread = 0.7;
        assert!(generate_packing(&spec).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let spec = PackingSpec::new([20.0, 20.0, 20.0], 3.0, 6.0, 2);
        let pack = generate_packing(&spec).unwrap();
        let mut buf = Vec::new();
        pack.write_csv(&mut buf).unwrap();
        let back = SpherePack::read_csv(&buf[..], pack.box_size, pack.bottom_plate_z).unwrap();
        assert_eq!(back.spheres, pack.spheres);
    }
}
