//! Throughput benchmark of the stream–collide kernel with simple and
//! interpolated bounce-back on a sphere in a periodic box.

use std::time::Instant;

use crate::boundary::BoundaryScheme;
use crate::error::{Error, Result};
use crate::field::{LatticeField, TrtCollision};
use crate::geometry::{voxelize, Sphere, SpherePack, VoxelGeometry};
use crate::lattice::set_relaxation_from_magic;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    /// Cells per box edge.
    pub size: usize,
    /// Sphere diameter; zero for an empty box.
    pub diameter: f64,
    pub steps: u64,
    pub warmup: u64,
    pub nu: f64,
    pub lambda_magic: f64,
    pub force: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            size: 128,
            diameter: 76.0,
            steps: 200,
            warmup: 10,
            nu: 1.0 / 6.0,
            lambda_magic: 3.0 / 16.0,
            force: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub scheme: BoundaryScheme,
    pub cells: usize,
    pub fluid_fraction: f64,
    pub steps: u64,
    pub wall_seconds: f64,
    /// `cells · steps / time / 1e6`.
    pub mlups: f64,
    pub threads: usize,
    pub boundary_links: usize,
}

impl BenchReport {
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("scheme", self.scheme.to_string()),
            ("cells", self.cells.to_string()),
            ("fluid_fraction", format!("{:.6}", self.fluid_fraction)),
            ("boundary_links", self.boundary_links.to_string()),
            ("steps", self.steps.to_string()),
            ("wall_seconds", format!("{:.6}", self.wall_seconds)),
            ("mlups", format!("{:.4}", self.mlups)),
            ("threads", self.threads.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub sbb: BenchReport,
    pub cli: BenchReport,
}

impl BenchResult {
    /// `1 − MLUPS_CLI / MLUPS_SBB`.
    pub fn slowdown(&self) -> f64 {
        1.0 - self.cli.mlups / self.sbb.mlups
    }
}

/// Periodic cube with one centred sphere.
pub fn bench_geometry(config: &BenchConfig) -> Result<VoxelGeometry> {
    let n = config.size;
    let l = n as f64;
    let mut pack = SpherePack::empty([l; 3]);
    if config.diameter > 0.0 {
        if config.diameter >= l {
            return Err(Error::param("diameter", format!("{} does not fit in a box of {n}", config.diameter)));
        }
        pack.spheres.push(Sphere {
            center: [0.5 * l; 3],
            radius: 0.5 * config.diameter,
        });
    }
    voxelize(&pack, [n; 3], [true; 3])
}

/// Times `steps` steps after `warmup` untimed ones, on a prebuilt geometry.
pub fn time_scheme(geom: &VoxelGeometry, scheme: BoundaryScheme, config: &BenchConfig) -> Result<BenchReport> {
    if config.steps == 0 {
        return Err(Error::param("steps", "must be at least 1"));
    }
    let params = set_relaxation_from_magic(config.nu, config.lambda_magic)?.with_body_force([config.force, 0.0, 0.0]);
    let collision = TrtCollision::new(params);
    let mut field = LatticeField::new(geom, scheme)?;
    for _ in 0..config.warmup {
        field.step(&collision)?;
    }
    let start = Instant::now();
    for _ in 0..config.steps {
        field.step(&collision)?;
    }
    let wall = start.elapsed().as_secs_f64();
    if wall < 1e-3 {
        return Err(Error::param(
            "steps",
            format!("timed section took {wall:.2e} s, below clock resolution; raise the step count"),
        ));
    }
    let cells = geom.cell_count();
    Ok(BenchReport {
        scheme,
        cells,
        fluid_fraction: geom.fluid_count() as f64 / cells as f64,
        steps: config.steps,
        wall_seconds: wall,
        mlups: cells as f64 * config.steps as f64 / wall / 1e6,
        threads: rayon::current_num_threads(),
        boundary_links: field.link_count(),
    })
}

/// Both schemes on one geometry. Geometry setup is not timed.
pub fn run_bench(config: &BenchConfig) -> Result<BenchResult> {
    let geom = bench_geometry(config)?;
    let sbb = time_scheme(&geom, BoundaryScheme::Sbb, config)?;
    let cli = time_scheme(&geom, BoundaryScheme::Cli, config)?;
    Ok(BenchResult { sbb, cli })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bench_runs() {
        let config = BenchConfig {
            size: 16,
            diameter: 9.5,
            steps: 20,
            warmup: 2,
            ..Default::default()
        };
        let r = run_bench(&config).unwrap();
        assert!(r.sbb.mlups > 0.0 && r.cli.mlups > 0.0);
        assert_eq!(r.sbb.cells, 4096);
        assert!(r.sbb.fluid_fraction < 1.0);
        assert_eq!(r.sbb.boundary_links, r.cli.boundary_links);
    }

    #[test]
    fn oversized_sphere_is_rejected() {
        let config = BenchConfig {
            size: 8,
            diameter: 8.0,
            ..Default::default()
        };
        assert!(run_bench(&config).is_err());
    }
}
