//! Pore-scale runs: iterate to steady state, average profiles, estimate
//! permeability, and the resolution and Reynolds-number sweeps.

use std::time::Instant;

use crate::boundary::{resolve_drive, BoundaryScheme, DriveSpec};
use crate::error::{Error, Result};
use crate::field::{Collision, LatticeField, TrtCollision};
use crate::geometry::{voxelize, SpherePack, VoxelGeometry};
use crate::lattice::{set_relaxation_from_magic, FluidParams};
use crate::profile::{normalized_l2_distance, ProfileData};

/// Stopping rule for steady-state iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyControl {
    /// Relative L∞ change of the profile between checks.
    pub tolerance: f64,
    pub check_interval: u64,
    pub max_steps: u64,
}

impl Default for SteadyControl {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            check_interval: 1000,
            max_steps: 1_000_000,
        }
    }
}

impl SteadyControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::param("tolerance", format!("must be positive, got {}", self.tolerance)));
        }
        if self.check_interval == 0 {
            return Err(Error::param("check_interval", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub steps: u64,
    pub converged: bool,
    /// Relative profile change at the last check.
    pub final_change: f64,
    pub wall_seconds: f64,
    /// Million cell updates per second over the whole block.
    pub mlups: f64,
    pub fallback_links: usize,
}

/// Steps until the superficial profile stops changing, checking every
/// `check_interval` steps.
pub fn run_to_steady<C: Collision>(
    field: &mut LatticeField,
    collision: &C,
    control: &SteadyControl,
) -> Result<(ProfileData, RunStats)> {
    control.validate()?;
    let start = Instant::now();
    let mut steps = 0u64;
    let mut previous = profile_of(field, collision);
    let mut change = f64::INFINITY;
    let mut converged = false;
    while steps < control.max_steps {
        let batch = control.check_interval.min(control.max_steps - steps);
        for _ in 0..batch {
            field.step(collision)?;
        }
        steps += batch;
        let current = profile_of(field, collision);
        change = relative_change(&previous.u_superficial, &current.u_superficial);
        previous = current;
        log::debug!("step {steps}: relative change {change:.3e}");
        if change < control.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("not converged after {steps} steps (change {change:.3e})");
    }
    let wall = start.elapsed().as_secs_f64();
    let stats = RunStats {
        steps,
        converged,
        final_change: change,
        wall_seconds: wall,
        mlups: if wall > 0.0 {
            field.cell_count() as f64 * steps as f64 / wall / 1e6
        } else {
            0.0
        },
        fallback_links: field.fallback_links(),
    };
    Ok((previous, stats))
}

/// Planar-averaged profile of the current state.
pub fn profile_of<C: Collision>(field: &LatticeField, collision: &C) -> ProfileData {
    let velocity = field.velocity_field(collision);
    ProfileData::from_velocity_field(field.dims(), field.flags(), &velocity)
}

/// `max |new − old| / max |new|`; infinite while the profile is zero.
pub fn relative_change(old: &[f64], new: &[f64]) -> f64 {
    let scale = new.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = old.iter().zip(new).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale > 0.0 {
        diff / scale
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Permeability `k = μ Ū / G` from the superficial average over the planes
/// `window` (indices, end exclusive).
pub fn measure_permeability(profile: &ProfileData, window: std::ops::Range<usize>, mu: f64, g: f64) -> Result<f64> {
    if window.is_empty() || window.end > profile.len() {
        return Err(Error::param("window", format!("{window:?} outside 0..{}", profile.len())));
    }
    if g == 0.0 || !g.is_finite() {
        return Err(Error::param("drive", "permeability needs a nonzero finite force"));
    }
    let eps = &profile.porosity[window.clone()];
    let (lo, hi) = eps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    let mean_eps = eps.iter().sum::<f64>() / eps.len() as f64;
    if mean_eps > 0.0 && (hi - lo) / mean_eps > 0.02 {
        log::warn!(
            "porosity varies by {:.1}% over the permeability window; not a plateau",
            100.0 * (hi - lo) / mean_eps
        );
    }
    let u = &profile.u_superficial[window];
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    Ok(mu * mean / g)
}

/// Everything a single pore-scale run needs besides its geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nu: f64,
    pub lambda_magic: f64,
    pub drive: DriveSpec,
    pub scheme: BoundaryScheme,
    pub control: SteadyControl,
}

impl RunConfig {
    pub fn fluid_params(&self, geom: &VoxelGeometry) -> Result<FluidParams> {
        let g = resolve_drive(&self.drive, geom.dims)?;
        Ok(set_relaxation_from_magic(self.nu, self.lambda_magic)?.with_body_force(g))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub field: LatticeField,
    pub params: FluidParams,
    pub profile: ProfileData,
    pub stats: RunStats,
}

impl RunOutput {
    pub fn velocity(&self) -> Vec<[f64; 3]> {
        self.field.velocity_field(&TrtCollision::new(self.params))
    }
}

/// Runs the TRT solver on `geom` to steady state.
pub fn run_pore_scale(geom: &VoxelGeometry, config: &RunConfig) -> Result<RunOutput> {
    let params = config.fluid_params(geom)?;
    let mut field = LatticeField::new(geom, config.scheme)?;
    let collision = TrtCollision::new(params);
    let (profile, stats) = run_to_steady(&mut field, &collision, &config.control)?;
    Ok(RunOutput {
        field,
        params,
        profile,
        stats,
    })
}

/// Reynolds number `U_max D / ν` of a profile.
pub fn reynolds(profile: &ProfileData, diameter: f64, nu: f64) -> f64 {
    profile.u_max * diameter / nu
}

/// Planes `[0.25, 0.6]·z_top` below the top of the porous layer, excluding
/// blocked planes. `z_top` is the lowest plane above which ε stays ≥ 0.999.
pub fn plateau_window(porosity: &[f64]) -> Option<std::ops::Range<usize>> {
    let top = porosity.iter().rposition(|&e| e < 0.999)? + 1;
    let mut lo = (0.25 * top as f64).round() as usize;
    let hi = ((0.6 * top as f64).round() as usize).max(lo + 1).min(top);
    while lo < hi && porosity[lo] == 0.0 {
        lo += 1;
    }
    (lo < hi).then_some(lo..hi)
}

/// Sphere-pack channel used by the sweeps: a pack with a bottom plate,
/// periodic horizontally, a no-slip lid at the top face.
pub fn channel_geometry(pack: &SpherePack) -> Result<VoxelGeometry> {
    let dims = pack.box_size.map(|v| v.round() as usize);
    voxelize(pack, dims, [true, true, false])
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridStudyConfig {
    /// Pack at the coarsest diameter; finer levels scale it by `D/D₀`.
    pub base: SpherePack,
    pub base_diameter: usize,
    pub diameters: Vec<usize>,
    pub re_target: f64,
    /// Viscosity at the finest level; coarser levels use `ν·D/D_max` so all
    /// levels share one velocity scale.
    pub nu_finest: f64,
    pub lambda_magic: f64,
    pub scheme: BoundaryScheme,
    pub control: SteadyControl,
    /// Force of the calibration run on the coarsest level.
    pub calibration_force: f64,
}

#[derive(Debug, Clone)]
pub struct GridLevel {
    pub diameter: usize,
    pub nu: f64,
    pub force: f64,
    pub reynolds: f64,
    pub profile: ProfileData,
    pub stats: RunStats,
}

#[derive(Debug, Clone)]
pub struct GridStudy {
    pub levels: Vec<GridLevel>,
    /// Normalised-profile L2 distance between successive levels, evaluated
    /// on the coarser level's planes.
    pub distances: Vec<f64>,
}

/// Same sphere layout at several resolutions and one Reynolds number.
///
/// A Stokes-regime calibration on the coarsest level sets the force; with
/// `ν ∝ D` the force for `Re_D` scales as `1/D`.
pub fn grid_study(config: &GridStudyConfig) -> Result<GridStudy> {
    if config.diameters.is_empty() {
        return Err(Error::param("diameters", "need at least one resolution"));
    }
    if config.diameters.iter().any(|&d| d % config.base_diameter != 0) {
        return Err(Error::param("diameters", "every diameter must be a multiple of the base diameter"));
    }
    let d_max = *config.diameters.iter().max().unwrap() as f64;
    let nu_at = |d: usize| config.nu_finest * d as f64 / d_max;
    let run = |d: usize, force: f64| -> Result<(ProfileData, RunStats)> {
        let pack = config.base.scaled(d as f64 / config.base_diameter as f64);
        let geom = channel_geometry(&pack)?;
        let run = RunConfig {
            nu: nu_at(d),
            lambda_magic: config.lambda_magic,
            drive: DriveSpec::body_force([force, 0.0, 0.0], [true, true, false]),
            scheme: config.scheme,
            control: config.control,
        };
        let out = run_pore_scale(&geom, &run)?;
        Ok((out.profile, out.stats))
    };
    let d0 = config.base_diameter;
    let (cal, _) = run(d0, config.calibration_force)?;
    let re_cal = reynolds(&cal, d0 as f64, nu_at(d0));
    if !(re_cal > 0.0) {
        return Err(Error::param("calibration_force", "calibration produced no flow"));
    }
    let force_base = config.calibration_force * config.re_target / re_cal;
    let mut levels = Vec::new();
    for &d in &config.diameters {
        let force = force_base * d0 as f64 / d as f64;
        let (profile, stats) = run(d, force)?;
        let re = reynolds(&profile, d as f64, nu_at(d));
        log::info!("grid level D={d}: Re_D={re:.3}, {} steps", stats.steps);
        levels.push(GridLevel {
            diameter: d,
            nu: nu_at(d),
            force,
            reynolds: re,
            profile,
            stats,
        });
    }
    let distances = levels
        .windows(2)
        .map(|w| normalized_l2_distance(&w[0].profile, &w[1].profile))
        .collect();
    Ok(GridStudy { levels, distances })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReSweepConfig {
    pub pack: SpherePack,
    pub diameter: f64,
    pub re_targets: Vec<f64>,
    pub nu: f64,
    pub lambda_magic: f64,
    pub scheme: BoundaryScheme,
    pub control: SteadyControl,
    pub calibration_force: f64,
}

#[derive(Debug, Clone)]
pub struct ReSweepPoint {
    pub re_target: f64,
    pub reynolds: f64,
    pub force: f64,
    pub profile: ProfileData,
    /// Sub-cell location of the velocity maximum.
    pub argmax_z: f64,
    /// Plateau-window mean of the normalised profile.
    pub porous_normalized: f64,
    pub stats: RunStats,
}

/// One geometry at several Reynolds numbers. The force for each target is
/// taken from a Stokes calibration run, so `Re_D` is approximate at finite
/// Reynolds numbers; the achieved value is reported.
pub fn re_sweep(config: &ReSweepConfig) -> Result<Vec<ReSweepPoint>> {
    let geom = channel_geometry(&config.pack)?;
    let window = plateau_window(&geom.porosity)
        .ok_or_else(|| Error::Geometry("no porous plateau in the sweep geometry".into()))?;
    let run = |force: f64| -> Result<RunOutput> {
        run_pore_scale(
            &geom,
            &RunConfig {
                nu: config.nu,
                lambda_magic: config.lambda_magic,
                drive: DriveSpec::body_force([force, 0.0, 0.0], [true, true, false]),
                scheme: config.scheme,
                control: config.control,
            },
        )
    };
    let cal = run(config.calibration_force)?;
    let re_cal = reynolds(&cal.profile, config.diameter, config.nu);
    if !(re_cal > 0.0) {
        return Err(Error::param("calibration_force", "calibration produced no flow"));
    }
    config
        .re_targets
        .iter()
        .map(|&target| {
            let force = config.calibration_force * target / re_cal;
            let out = run(force)?;
            let norm = out.profile.normalized();
            let porous = norm[window.clone()].iter().sum::<f64>() / window.len() as f64;
            Ok(ReSweepPoint {
                re_target: target,
                reynolds: reynolds(&out.profile, config.diameter, config.nu),
                force,
                argmax_z: out.profile.argmax_refined(),
                porous_normalized: porous,
                profile: out.profile,
                stats: out.stats,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poiseuille(nz: usize, nu: f64, g: f64) -> ProfileData {
        let geom = VoxelGeometry::channel(1, 1, nz).unwrap();
        let config = RunConfig {
            nu,
            lambda_magic: 3.0 / 16.0,
            drive: DriveSpec::body_force([g, 0.0, 0.0], [true, true, false]),
            scheme: BoundaryScheme::Sbb,
            control: SteadyControl {
                tolerance: 1e-14,
                check_interval: 1000,
                max_steps: 2_000_000,
            },
        };
        run_pore_scale(&geom, &config).unwrap().profile
    }

    #[test]
    fn poiseuille_channel_is_exact() {
        let (h, nu, g) = (16.0, 1.0 / 6.0, 1e-6);
        let p = poiseuille(16, nu, g);
        for (z, u) in p.z.iter().zip(&p.u_superficial) {
            let exact = g / (2.0 * nu) * z * (h - z);
            assert!((u - exact).abs() / exact < 1e-10, "z={z}: {u} vs {exact}");
        }
        assert!((p.u_max - g * 7.5 * 8.5 / (2.0 * nu)).abs() / p.u_max < 1e-10);
    }

    #[test]
    fn permeability_of_analytic_gap() {
        let n = 64;
        let h = n as f64;
        let (mu, g) = (0.1, 1e-5);
        let z: Vec<f64> = (0..n).map(|i| i as f64 + 0.5).collect();
        let u: Vec<f64> = z.iter().map(|z| g / (2.0 * mu) * z * (h - z)).collect();
        let p = ProfileData::from_superficial(z, u, vec![1.0; n], h);
        let k = measure_permeability(&p, 0..n, mu, g).unwrap();
        // Cell-centre sampling of z(H − z) averages to H²/6 + 1/12.
        let exact = h * h / 12.0 + 1.0 / 24.0;
        assert!((k - exact).abs() / exact < 1e-12, "{k} vs {exact}");
    }

    #[test]
    fn plateau_window_from_porosity() {
        let mut eps = vec![0.0, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.7, 0.9];
        eps.extend([1.0; 10]);
        let w = plateau_window(&eps).unwrap();
        assert_eq!(w, 3..6);
        assert!(plateau_window(&[1.0; 5]).is_none());
    }

    #[test]
    fn relative_change_cases() {
        assert_eq!(relative_change(&[0.0, 1.0], &[0.0, 2.0]), 0.5);
        assert_eq!(relative_change(&[0.0], &[0.0]), 0.0);
        assert!(relative_change(&[1.0], &[0.0]).is_infinite());
    }
}
