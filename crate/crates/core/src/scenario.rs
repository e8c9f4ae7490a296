//! Scenario files: one `[scenario] kind = ...` per file, parameters in
//! flat sections, every resolved value echoed next to the results.
//!
//! Common sections and defaults:
//!
//! ```text
//! [scenario]  kind (required), name = <kind>, seed = 1, output_dir = out/<name>
//! [fluid]     nu = 1/6, lambda_magic = 3/16
//! [solver]    tolerance = 1e-8, check_interval = 1000, max_steps = 1000000, scheme = sbb
//! [output]    vtk = false
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bench::{run_bench, BenchConfig};
use crate::boundary::{BoundaryScheme, DriveSpec};
use crate::config::Table;
use crate::error::{Error, Result};
use crate::geometry::{generate_packing, PackingSpec, SpherePack, VoxelGeometry};
use crate::glbm::{compare_with_dns, run_couette, CouetteSpec, HomogenizedSetup, ViscosityModel};
use crate::interface::{
    extract_interface_params, interface_position_candidates, solve_two_domain, ExtractOptions, InterfaceCondition,
    TwoDomainConfig,
};
use crate::output::{save_comparison, save_report, save_velocity_vtk};
use crate::pore_scale::{
    channel_geometry, grid_study, measure_permeability, plateau_window, re_sweep, reynolds, run_pore_scale,
    GridStudyConfig, ReSweepConfig, RunConfig, RunOutput, SteadyControl,
};
use crate::profile::ProfileData;

pub const ECHO_FILE: &str = "config.echo.cfg";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Poiseuille,
    CouettePorous,
    SpherePackDns,
    GridStudy,
    ReSweep,
    GlbmRev,
    TwoDomainAnalytic,
    ExtractParams,
    Bench,
}

impl ScenarioKind {
    pub const ALL: [Self; 9] = [
        Self::Poiseuille,
        Self::CouettePorous,
        Self::SpherePackDns,
        Self::GridStudy,
        Self::ReSweep,
        Self::GlbmRev,
        Self::TwoDomainAnalytic,
        Self::ExtractParams,
        Self::Bench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Poiseuille => "poiseuille",
            Self::CouettePorous => "couette_porous",
            Self::SpherePackDns => "sphere_pack_dns",
            Self::GridStudy => "grid_study",
            Self::ReSweep => "re_sweep",
            Self::GlbmRev => "glbm_rev",
            Self::TwoDomainAnalytic => "two_domain_analytic",
            Self::ExtractParams => "extract_params",
            Self::Bench => "bench",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                format!("unknown kind `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Command-line values that replace entries of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub max_steps: Option<u64>,
    pub vtk: bool,
}

/// Where the spheres come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PackSource {
    File {
        path: PathBuf,
        box_size: [f64; 3],
        bottom_plate_z: f64,
    },
    Generate(PackingSpec),
}

impl PackSource {
    pub fn build(&self) -> Result<SpherePack> {
        match self {
            PackSource::File {
                path,
                box_size,
                bottom_plate_z,
            } => SpherePack::read_csv(std::fs::File::open(path)?, *box_size, *bottom_plate_z),
            PackSource::Generate(spec) => generate_packing(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Poiseuille {
        height: usize,
        width: usize,
        force: f64,
    },
    Couette(CouetteSpec),
    SpherePackDns {
        packing: PackSource,
        force: f64,
    },
    GridStudy {
        packing: PackSource,
        diameters: Vec<usize>,
        re_target: f64,
        nu_finest: f64,
        calibration_force: f64,
    },
    ReSweep {
        packing: PackSource,
        re_targets: Vec<f64>,
        calibration_force: f64,
    },
    GlbmRev {
        packing: PackSource,
        force: f64,
    },
    TwoDomain {
        model: TwoDomainConfig,
        spacing: f64,
    },
    Extract {
        profile: PathBuf,
        interface_z: Option<f64>,
        mu: f64,
        force: f64,
        mu_eff: Option<f64>,
    },
    Bench(BenchConfig),
}

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub nu: f64,
    pub lambda_magic: f64,
    pub scheme: BoundaryScheme,
    pub control: SteadyControl,
    pub vtk: bool,
    pub plan: Plan,
    /// Resolved configuration text.
    pub echo: String,
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// False if any steady-state run hit its step limit.
    pub converged: bool,
    pub files: Vec<PathBuf>,
    /// The run report, also written to `report.txt`.
    pub report: String,
}

fn positive(t: &Table, section: &str, key: &str, v: f64) -> Result<f64> {
    t.check(section, key, v, v > 0.0 && v.is_finite(), "must be positive")
}

fn read_packing(t: &mut Table, seed: u64, defaults: PackingSpec) -> Result<PackSource> {
    let s = "packing";
    let mut box_size = [0.0; 3];
    for (axis, key) in ["box_x", "box_y", "box_z"].into_iter().enumerate() {
        let v = t.f64_or(s, key, defaults.box_size[axis])?;
        box_size[axis] = positive(t, s, key, v)?;
    }
    let bottom_plate_z = t.f64_or(s, "bottom_plate_z", defaults.bottom_plate_z)?;
    let bottom_plate_z = t.check(
        s,
        "bottom_plate_z",
        bottom_plate_z,
        (0.0..box_size[2]).contains(&bottom_plate_z),
        "must lie inside the box",
    )?;
    if let Some(path) = t.path_opt(s, "file")? {
        return Ok(PackSource::File {
            path,
            box_size,
            bottom_plate_z,
        });
    }
    let r_mean = t.f64_or(s, "r_mean", defaults.r_mean)?;
    let r_mean = t.check(s, "r_mean", r_mean, r_mean >= 2.0, "must be at least 2 lattice units")?;
    let r_spread = t.f64_or(s, "r_spread", defaults.r_spread)?;
    let r_spread = t.check(s, "r_spread", r_spread, (0.0..=0.5).contains(&r_spread), "must lie in [0, 0.5]")?;
    let fill = t.f64_or(s, "fill_height", defaults.target_fill_height)?;
    let fill = t.check(s, "fill_height", fill, fill > bottom_plate_z && fill < box_size[2], "must lie between the plate and the lid")?;
    let max_attempts = t.get_or(s, "max_attempts", defaults.max_attempts)?;
    Ok(PackSource::Generate(PackingSpec {
        box_size,
        r_mean,
        r_spread,
        target_fill_height: fill,
        bottom_plate_z,
        seed,
        max_attempts,
    }))
}

fn viscosity_model(t: &mut Table, section: &str) -> Result<ViscosityModel> {
    let name: String = t.get_or(section, "viscosity", "ratio".to_string())?;
    match name.as_str() {
        "plain" => Ok(ViscosityModel::Plain),
        "rescaled" => Ok(ViscosityModel::Rescaled),
        "ratio" => {
            let j = t.f64_or(section, "viscosity_ratio", 1.0)?;
            Ok(ViscosityModel::Ratio(positive(t, section, "viscosity_ratio", j)?))
        }
        other => Err(t
            .check(section, "viscosity", (), false, &format!("`{other}` is not plain, rescaled or ratio"))
            .unwrap_err()),
    }
}

impl Scenario {
    /// Reads and validates a scenario file.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        Self::from_table(Table::load(path)?, overrides)
    }

    pub fn parse(text: &str, file: &Path, overrides: &Overrides) -> Result<Self> {
        Self::from_table(Table::parse(text, file)?, overrides)
    }

    pub fn from_table(mut t: Table, overrides: &Overrides) -> Result<Self> {
        if let Some(seed) = overrides.seed {
            t.set("scenario", "seed", seed.to_string());
        }
        if let Some(dir) = &overrides.output_dir {
            t.set("scenario", "output_dir", dir.display().to_string());
        }
        if let Some(n) = overrides.max_steps {
            t.set("solver", "max_steps", n.to_string());
        }
        if overrides.vtk {
            t.set("output", "vtk", "true");
        }

        let kind: ScenarioKind = t.get("scenario", "kind")?;
        let name: String = t.get_or("scenario", "name", kind.name().to_string())?;
        let name = t.check(
            "scenario",
            "name",
            name.clone(),
            !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)),
            "must be a plain file-name token",
        )?;
        let seed: u64 = t.get_or("scenario", "seed", 1)?;
        let output_dir = PathBuf::from(t.get_or("scenario", "output_dir", format!("out/{name}"))?);

        let nu = t.f64_or("fluid", "nu", 1.0 / 6.0)?;
        let nu = positive(&t, "fluid", "nu", nu)?;
        let lambda_magic = t.f64_or("fluid", "lambda_magic", 3.0 / 16.0)?;
        let lambda_magic = positive(&t, "fluid", "lambda_magic", lambda_magic)?;

        let tolerance = t.f64_or("solver", "tolerance", 1e-8)?;
        let tolerance = positive(&t, "solver", "tolerance", tolerance)?;
        let check_interval: u64 = t.get_or("solver", "check_interval", 1000)?;
        let check_interval = t.check("solver", "check_interval", check_interval, check_interval > 0, "must be positive")?;
        let max_steps: u64 = t.get_or("solver", "max_steps", 1_000_000)?;
        let max_steps = t.check("solver", "max_steps", max_steps, max_steps > 0, "must be positive")?;
        let scheme: BoundaryScheme = t.get_or("solver", "scheme", BoundaryScheme::Sbb)?;
        let control = SteadyControl {
            tolerance,
            check_interval,
            max_steps,
        };
        let vtk: bool = t.get_or("output", "vtk", false)?;

        let plan = match kind {
            ScenarioKind::Poiseuille => {
                let height: usize = t.get_or("domain", "height", 32)?;
                let height = t.check("domain", "height", height, height >= 2, "must be at least 2")?;
                let width: usize = t.get_or("domain", "width", 1)?;
                let width = t.check("domain", "width", width, width >= 1, "must be at least 1")?;
                let force = t.f64_or("drive", "force", 1e-6)?;
                Plan::Poiseuille {
                    height,
                    width,
                    force: positive(&t, "drive", "force", force)?,
                }
            }
            ScenarioKind::CouettePorous => {
                let height: usize = t.get_or("domain", "height", 64)?;
                let height = t.check("domain", "height", height, height >= 4 && height % 2 == 0, "must be even and at least 4")?;
                let porosity = t.f64_or("porous", "porosity", 0.4)?;
                let porosity = t.check("porous", "porosity", porosity, porosity > 0.0 && porosity <= 1.0, "must lie in (0, 1]")?;
                let darcy = t.f64_or("porous", "darcy", 1.2e-4)?;
                let reynolds = t.f64_or("porous", "reynolds", 0.1)?;
                let viscosity = viscosity_model(&mut t, "porous")?;
                Plan::Couette(CouetteSpec {
                    height,
                    nu,
                    reynolds: positive(&t, "porous", "reynolds", reynolds)?,
                    darcy: positive(&t, "porous", "darcy", darcy)?,
                    porosity,
                    viscosity,
                    lambda_magic,
                })
            }
            ScenarioKind::SpherePackDns | ScenarioKind::GlbmRev => {
                let packing = read_packing(&mut t, seed, PackingSpec {
                    bottom_plate_z: 0.0,
                    ..PackingSpec::new([32.0, 32.0, 64.0], 4.0, 32.0, seed)
                })?;
                let force = t.f64_or("drive", "force", 1e-6)?;
                let force = positive(&t, "drive", "force", force)?;
                if kind == ScenarioKind::GlbmRev {
                    Plan::GlbmRev { packing, force }
                } else {
                    Plan::SpherePackDns { packing, force }
                }
            }
            ScenarioKind::GridStudy => {
                let diameters = t.list_or::<usize>("grid", "diameters", &[8, 16, 32])?;
                let d0 = diameters.iter().copied().min().unwrap_or(0);
                let diameters = t.check(
                    "grid",
                    "diameters",
                    diameters.clone(),
                    d0 >= 4 && diameters.iter().all(|d| d % d0 == 0),
                    "must be multiples of the smallest, which must be at least 4",
                )?;
                let b = d0 as f64;
                let packing = read_packing(&mut t, seed, PackingSpec::new([2.0 * b, 2.0 * b, 3.0 * b], 0.5 * b, 1.5 * b, seed))?;
                let re_target = t.f64_or("grid", "re_target", 1.0)?;
                let nu_finest = t.f64_or("grid", "nu_finest", 0.5)?;
                let calibration_force = t.f64_or("grid", "calibration_force", 1e-6)?;
                Plan::GridStudy {
                    packing,
                    diameters,
                    re_target: positive(&t, "grid", "re_target", re_target)?,
                    nu_finest: positive(&t, "grid", "nu_finest", nu_finest)?,
                    calibration_force: positive(&t, "grid", "calibration_force", calibration_force)?,
                }
            }
            ScenarioKind::ReSweep => {
                let packing = read_packing(&mut t, seed, PackingSpec::new([24.0, 24.0, 36.0], 6.0, 18.0, seed))?;
                let re_targets = t.f64_list_or("sweep", "re_targets", &[0.2, 2.0, 20.0])?;
                let re_targets = t.check(
                    "sweep",
                    "re_targets",
                    re_targets.clone(),
                    !re_targets.is_empty() && re_targets.iter().all(|&r| r > 0.0),
                    "must be a non-empty list of positive numbers",
                )?;
                let calibration_force = t.f64_or("sweep", "calibration_force", 1e-6)?;
                Plan::ReSweep {
                    packing,
                    re_targets,
                    calibration_force: positive(&t, "sweep", "calibration_force", calibration_force)?,
                }
            }
            ScenarioKind::TwoDomainAnalytic => {
                let s = "model";
                let condition: String = t.get_or(s, "condition", "otw".to_string())?;
                let condition = match condition.as_str() {
                    "br" => InterfaceCondition::Brinkman,
                    "otw" => InterfaceCondition::StressJump {
                        beta: t.f64_or(s, "beta", 0.0)?,
                    },
                    "bj" => InterfaceCondition::BeaversJoseph {
                        alpha: t.f64_or(s, "alpha", 1.0)?,
                    },
                    "bjs" => InterfaceCondition::Saffman {
                        alpha: t.f64_or(s, "alpha", 1.0)?,
                    },
                    other => {
                        return Err(t
                            .check(s, "condition", (), false, &format!("`{other}` is not br, otw, bj or bjs"))
                            .unwrap_err())
                    }
                };
                let mu = t.f64_or(s, "mu", nu)?;
                let porosity = t.f64_or(s, "porosity", 0.4)?;
                let porosity = t.check(s, "porosity", porosity, porosity > 0.0 && porosity <= 1.0, "must lie in (0, 1]")?;
                let mu_eff = t.f64_or(s, "mu_eff", mu / porosity)?;
                let model = TwoDomainConfig {
                    h_free: t.f64_or(s, "h_free", 40.0)?,
                    h_porous: t.f64_or(s, "h_porous", 40.0)?,
                    mu,
                    mu_eff,
                    permeability: t.f64_or(s, "permeability", 0.1)?,
                    force: t.f64_or(s, "force", 1e-6)?,
                    condition,
                    porosity,
                };
                model.validate()?;
                let spacing = t.f64_or(s, "spacing", 0.5)?;
                Plan::TwoDomain {
                    model,
                    spacing: positive(&t, s, "spacing", spacing)?,
                }
            }
            ScenarioKind::ExtractParams => {
                let s = "input";
                let profile = t
                    .path_opt(s, "profile")?
                    .ok_or_else(|| t.check(s, "profile", (), false, "is required").unwrap_err())?;
                let interface_z = t.f64_opt(s, "interface_z")?;
                let mu = t.f64_or(s, "mu", nu)?;
                let force = t.f64_or(s, "force", 1e-6)?;
                let mu_eff = t.f64_opt(s, "mu_eff")?;
                Plan::Extract {
                    profile,
                    interface_z,
                    mu: positive(&t, s, "mu", mu)?,
                    force: positive(&t, s, "force", force)?,
                    mu_eff,
                }
            }
            ScenarioKind::Bench => {
                let s = "bench";
                let d = BenchConfig::default();
                let size: usize = t.get_or(s, "size", d.size)?;
                let size = t.check(s, "size", size, size >= 4, "must be at least 4")?;
                let diameter = t.f64_or(s, "diameter", d.diameter)?;
                let diameter = t.check(s, "diameter", diameter, diameter >= 0.0 && diameter < size as f64, "must lie in [0, size)")?;
                let steps: u64 = t.get_or(s, "steps", d.steps)?;
                let steps = t.check(s, "steps", steps, steps > 0, "must be positive")?;
                let warmup: u64 = t.get_or(s, "warmup", d.warmup)?;
                let force = t.f64_or(s, "force", d.force)?;
                Plan::Bench(BenchConfig {
                    size,
                    diameter,
                    steps,
                    warmup,
                    nu,
                    lambda_magic,
                    force,
                })
            }
        };
        t.finish()?;
        Ok(Scenario {
            name,
            kind,
            output_dir,
            seed,
            nu,
            lambda_magic,
            scheme,
            control,
            vtk,
            plan,
            echo: t.echo(),
        })
    }

    fn run_config(&self, force: f64) -> RunConfig {
        RunConfig {
            nu: self.nu,
            lambda_magic: self.lambda_magic,
            drive: DriveSpec::body_force([force, 0.0, 0.0], [true, true, false]),
            scheme: self.scheme,
            control: self.control,
        }
    }

    /// Runs the scenario and writes its artefacts into `output_dir`.
    pub fn run(&self) -> Result<Outcome> {
        let dir = &self.output_dir;
        std::fs::create_dir_all(dir)?;
        let mut out = Writer {
            dir,
            files: Vec::new(),
        };
        std::fs::write(dir.join(ECHO_FILE), &self.echo)?;
        out.files.push(dir.join(ECHO_FILE));
        let mut report: Vec<(&str, String)> = vec![("scenario", self.name.clone()), ("kind", self.kind.to_string())];
        let mut converged = true;

        match &self.plan {
            Plan::Poiseuille { height, width, force } => {
                let geom = VoxelGeometry::channel(*width, *width, *height)?;
                let run = run_pore_scale(&geom, &self.run_config(*force))?;
                converged &= run.stats.converged;
                let p = &run.profile;
                let h = *height as f64;
                let exact: Vec<f64> = p.z.iter().map(|z| force / (2.0 * self.nu) * z * (h - z)).collect();
                let max_rel = p
                    .u_superficial
                    .iter()
                    .zip(&exact)
                    .map(|(u, e)| ((u - e) / e).abs())
                    .fold(0.0, f64::max);
                out.profile("profile.csv", p)?;
                out.comparison("comparison.csv", &p.z, &[("lbm", &p.u_superficial), ("analytic", &exact)])?;
                self.maybe_vtk(&mut out, &geom, &run)?;
                report.extend(stats_entries(&run.stats));
                report.push(("u_max", format!("{:e}", p.u_max)));
                report.push(("max_relative_error", format!("{max_rel:e}")));
            }
            Plan::Couette(spec) => {
                let run = run_couette(spec, &self.control)?;
                converged &= run.stats.converged;
                out.profile("profile.csv", &run.profile)?;
                out.comparison(
                    "comparison.csv",
                    &run.profile.z,
                    &[("glbm", &run.profile.u_superficial), ("analytic", &run.analytic.u_superficial)],
                )?;
                report.extend(stats_entries(&run.stats));
                report.push(("lid_velocity", format!("{:e}", spec.lid_velocity())));
                report.push(("permeability", format!("{:e}", spec.permeability())));
                report.push(("relative_l2", format!("{:e}", run.relative_l2)));
            }
            Plan::SpherePackDns { packing, force } => {
                let (pack, geom, run) = self.dns(&mut out, packing, *force)?;
                converged &= run.stats.converged;
                self.maybe_vtk(&mut out, &geom, &run)?;
                report.extend(stats_entries(&run.stats));
                report.extend(dns_entries(&pack, &run.profile, self.nu, *force));
            }
            Plan::GlbmRev { packing, force } => {
                let (pack, geom, run) = self.dns(&mut out, packing, *force)?;
                converged &= run.stats.converged;
                self.maybe_vtk(&mut out, &geom, &run)?;
                let setup = HomogenizedSetup {
                    diameter: 2.0 * mean_radius(&pack),
                    nu: self.nu,
                    lambda_magic: self.lambda_magic,
                    force: *force,
                    control: self.control,
                };
                let cmp = compare_with_dns(&run.profile, &setup)?;
                let first = run.profile.len() - cmp.runs[0].profile.len();
                let mut series: Vec<(&str, &[f64])> = vec![("dns", &run.profile.u_superficial[first..])];
                for r in &cmp.runs {
                    converged &= r.stats.converged;
                    series.push((r.variant.name(), &r.profile.u_superficial));
                }
                out.comparison("comparison.csv", &run.profile.z[first..], &series)?;
                report.extend(stats_entries(&run.stats));
                report.extend(dns_entries(&pack, &run.profile, self.nu, *force));
                report.push(("k_scale", format!("{:e}", cmp.k_scale)));
                for r in &cmp.runs {
                    report.push((r.variant.name(), format!("rmse {:e} steps {}", r.rmse, r.stats.steps)));
                }
            }
            Plan::GridStudy {
                packing,
                diameters,
                re_target,
                nu_finest,
                calibration_force,
            } => {
                let base = packing.build()?;
                out.pack("packing.csv", &base)?;
                let study = grid_study(&GridStudyConfig {
                    base,
                    base_diameter: *diameters.iter().min().expect("validated non-empty"),
                    diameters: diameters.clone(),
                    re_target: *re_target,
                    nu_finest: *nu_finest,
                    lambda_magic: self.lambda_magic,
                    scheme: self.scheme,
                    control: self.control,
                    calibration_force: *calibration_force,
                })?;
                for level in &study.levels {
                    converged &= level.stats.converged;
                    out.profile(&format!("profile_d{}.csv", level.diameter), &level.profile)?;
                    report.push((
                        "level",
                        format!(
                            "D {} nu {:?} force {:e} Re_D {:.4} steps {} converged {}",
                            level.diameter, level.nu, level.force, level.reynolds, level.stats.steps, level.stats.converged
                        ),
                    ));
                }
                for (w, d) in study.levels.windows(2).zip(&study.distances) {
                    report.push(("distance", format!("{}->{} {:e}", w[0].diameter, w[1].diameter, d)));
                }
            }
            Plan::ReSweep {
                packing,
                re_targets,
                calibration_force,
            } => {
                let pack = packing.build()?;
                out.pack("packing.csv", &pack)?;
                let points = re_sweep(&ReSweepConfig {
                    diameter: 2.0 * mean_radius(&pack),
                    pack,
                    re_targets: re_targets.clone(),
                    nu: self.nu,
                    lambda_magic: self.lambda_magic,
                    scheme: self.scheme,
                    control: self.control,
                    calibration_force: *calibration_force,
                })?;
                for (i, p) in points.iter().enumerate() {
                    converged &= p.stats.converged;
                    out.profile(&format!("profile_re{i}.csv"), &p.profile)?;
                    report.push((
                        "point",
                        format!(
                            "target {:?} Re_D {:.4} force {:e} argmax_z {:.4} porous_normalized {:e} steps {}",
                            p.re_target, p.reynolds, p.force, p.argmax_z, p.porous_normalized, p.stats.steps
                        ),
                    ));
                }
            }
            Plan::TwoDomain { model, spacing } => {
                let total = model.h_free + model.h_porous;
                let n = (total / spacing).round().max(1.0) as usize;
                let dz = total / n as f64;
                let z: Vec<f64> = (0..n).map(|i| -model.h_porous + (i as f64 + 0.5) * dz).collect();
                let p = solve_two_domain(model, &z)?;
                out.profile("profile.csv", &p)?;
                report.push(("condition", model.condition.name().to_string()));
                report.push(("u_max", format!("{:e}", p.u_max)));
                report.push(("seepage_velocity", format!("{:e}", model.seepage_velocity())));
            }
            Plan::Extract {
                profile,
                interface_z,
                mu,
                force,
                mu_eff,
            } => {
                let p = ProfileData::load_csv(profile)?;
                let text = fit_report(&p, *interface_z, *mu, *force, *mu_eff)?;
                let path = dir.join("report.txt");
                let head = crate::output::format_report(&report);
                std::fs::write(&path, format!("{head}{text}"))?;
                out.files.push(path);
                return Ok(Outcome {
                    converged,
                    files: out.files,
                    report: format!("{head}{text}"),
                });
            }
            Plan::Bench(config) => {
                let r = run_bench(config)?;
                for (label, b) in [("sbb", &r.sbb), ("cli", &r.cli)] {
                    let fields: Vec<String> = b.entries().into_iter().skip(1).map(|(k, v)| format!("{k} {v}")).collect();
                    report.push((label, fields.join(" ")));
                }
                report.push(("slowdown", format!("{:.4}", r.slowdown())));
            }
        }
        report.push(("converged", converged.to_string()));
        let path = dir.join("report.txt");
        save_report(&path, &report)?;
        out.files.push(path);
        Ok(Outcome {
            converged,
            files: out.files,
            report: crate::output::format_report(&report),
        })
    }

    fn dns(&self, out: &mut Writer, packing: &PackSource, force: f64) -> Result<(SpherePack, VoxelGeometry, RunOutput)> {
        let pack = packing.build()?;
        out.pack("packing.csv", &pack)?;
        let geom = channel_geometry(&pack)?;
        let run = run_pore_scale(&geom, &self.run_config(force))?;
        out.profile("profile.csv", &run.profile)?;
        Ok((pack, geom, run))
    }

    fn maybe_vtk(&self, out: &mut Writer, geom: &VoxelGeometry, run: &RunOutput) -> Result<()> {
        if self.vtk {
            let path = out.dir.join("velocity.vtk");
            save_velocity_vtk(&path, geom.dims, &geom.flags, &run.velocity())?;
            out.files.push(path);
        }
        Ok(())
    }
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn profile(&mut self, name: &str, p: &ProfileData) -> Result<()> {
        let path = self.dir.join(name);
        p.save_csv(&path)?;
        self.files.push(path);
        Ok(())
    }

    fn comparison(&mut self, name: &str, z: &[f64], series: &[(&str, &[f64])]) -> Result<()> {
        let path = self.dir.join(name);
        save_comparison(&path, z, series)?;
        self.files.push(path);
        Ok(())
    }

    fn pack(&mut self, name: &str, pack: &SpherePack) -> Result<()> {
        let path = self.dir.join(name);
        pack.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
        self.files.push(path);
        Ok(())
    }
}

fn mean_radius(pack: &SpherePack) -> f64 {
    if pack.spheres.is_empty() {
        return 0.0;
    }
    pack.spheres.iter().map(|s| s.radius).sum::<f64>() / pack.spheres.len() as f64
}

fn stats_entries(s: &crate::pore_scale::RunStats) -> Vec<(&'static str, String)> {
    vec![
        ("steps", s.steps.to_string()),
        ("steady", s.converged.to_string()),
        ("final_change", format!("{:e}", s.final_change)),
        ("wall_seconds", format!("{:.3}", s.wall_seconds)),
        ("mlups", format!("{:.3}", s.mlups)),
        ("fallback_links", s.fallback_links.to_string()),
    ]
}

fn dns_entries(pack: &SpherePack, p: &ProfileData, nu: f64, force: f64) -> Vec<(&'static str, String)> {
    let d = 2.0 * mean_radius(pack);
    let mut v = vec![
        ("spheres", pack.spheres.len().to_string()),
        ("mean_diameter", format!("{d:?}")),
        ("u_max", format!("{:e}", p.u_max)),
        ("reynolds_d", format!("{:.6}", reynolds(p, d, nu))),
    ];
    if let Some(w) = plateau_window(&p.porosity) {
        let eps = p.porosity[w.clone()].iter().sum::<f64>() / w.len() as f64;
        v.push(("plateau_window", format!("{}..{}", w.start, w.end)));
        v.push(("plateau_porosity", format!("{eps:.6}")));
        if let Ok(k) = measure_permeability(p, w, nu, force) {
            v.push(("permeability", format!("{k:e}")));
        }
    }
    v
}

/// Interface report of a profile; the interface defaults to the top of the
/// porous layer.
pub fn fit_report(p: &ProfileData, interface_z: Option<f64>, mu: f64, force: f64, mu_eff: Option<f64>) -> Result<String> {
    let candidates = interface_position_candidates(p);
    let z = match (interface_z, &candidates) {
        (Some(z), _) => z,
        (None, Ok((exact, _))) => *exact,
        (None, Err(e)) => return Err(Error::Fit(format!("no interface position given and none found: {e}"))),
    };
    let fit = extract_interface_params(
        p,
        z,
        mu,
        force,
        &ExtractOptions {
            mu_eff,
            ..Default::default()
        },
    )?;
    let mut text = String::new();
    if let Ok((exact, apparent)) = candidates {
        text.push_str(&format!("z_exact = {exact:?}\nz_apparent = {apparent:?}\n"));
    }
    text.push_str(&fit.report());
    Ok(text)
}
