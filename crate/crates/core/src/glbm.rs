//! Homogenised (REV-scale) generalised lattice Boltzmann model: porosity in
//! the equilibrium, Darcy–Forchheimer drag as a body force, and a
//! plane-wise effective viscosity.

use crate::boundary::BoundaryScheme;
use crate::error::{Error, Result};
use crate::field::{Collision, LatticeField};
use crate::geometry::VoxelGeometry;
use crate::lattice::{equilibrium_scaled, moments, omega_minus_for, omega_plus_for, relax_trt, Q};
use crate::pore_scale::{run_to_steady, RunStats, SteadyControl};
use crate::profile::ProfileData;

/// Equilibrium with quadratic terms divided by the porosity.
pub fn glbm_equilibrium(delta_rho: f64, u: [f64; 3], porosity: f64) -> Result<[f64; Q]> {
    if !(porosity > 0.0 && porosity <= 1.0) {
        return Err(Error::param("porosity", format!("must lie in (0, 1], got {porosity}")));
    }
    Ok(equilibrium_scaled(delta_rho, u, 1.0 / porosity))
}

/// Coefficients of the implicit velocity relation of one plane.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Drag {
    porosity: f64,
    /// `εν/K`, zero without drag.
    linear: f64,
    /// `εc_F/√K`.
    quadratic: f64,
    c0: f64,
    c1: f64,
}

impl Drag {
    fn new(porosity: f64, permeability: f64, c_f: f64, nu: f64) -> Self {
        let linear = porosity * nu / permeability;
        let quadratic = porosity * c_f / permeability.sqrt();
        Self {
            porosity,
            linear,
            quadratic,
            c0: 0.5 * (1.0 + 0.5 * linear),
            c1: 0.5 * quadratic,
        }
    }

    /// Velocity from the momentum moment and the total force evaluated at it.
    #[inline(always)]
    fn solve(&self, m: [f64; 3], g: [f64; 3]) -> ([f64; 3], [f64; 3]) {
        let e = self.porosity;
        let v = [m[0] + 0.5 * e * g[0], m[1] + 0.5 * e * g[1], m[2] + 0.5 * e * g[2]];
        let vn = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let denom = self.c0 + (self.c0 * self.c0 + self.c1 * vn).sqrt();
        let u = [v[0] / denom, v[1] / denom, v[2] / denom];
        let un = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        let drag = self.linear + self.quadratic * un;
        let f = [e * g[0] - drag * u[0], e * g[1] - drag * u[1], e * g[2] - drag * u[2]];
        (u, f)
    }
}

/// Velocity and total force `F = εG − (εν/K)u − (εc_F/√K)|u|u` from the
/// momentum moment `v`, with half the drag folded into the moment:
/// `u = v̂/(c₀ + √(c₀² + c₁|v̂|))`, `v̂ = v + ½εG`.
/// `permeability = ∞` switches the drag off.
pub fn glbm_force_and_velocity(
    v: [f64; 3],
    porosity: f64,
    permeability: f64,
    c_f: f64,
    g: [f64; 3],
    nu: f64,
) -> Result<([f64; 3], [f64; 3])> {
    if !(porosity > 0.0 && porosity <= 1.0) {
        return Err(Error::param("porosity", format!("must lie in (0, 1], got {porosity}")));
    }
    if !(permeability > 0.0) {
        return Err(Error::param("permeability", format!("must be positive, got {permeability}")));
    }
    if !(c_f >= 0.0 && nu > 0.0) {
        return Err(Error::param("c_f", "Forchheimer coefficient and viscosity must be non-negative"));
    }
    let drag = Drag::new(porosity, permeability, c_f, nu);
    let vhat = [v[0] + 0.5 * porosity * g[0], v[1] + 0.5 * porosity * g[1], v[2] + 0.5 * porosity * g[2]];
    let vn = (vhat[0] * vhat[0] + vhat[1] * vhat[1] + vhat[2] * vhat[2]).sqrt();
    if drag.c0 * drag.c0 + drag.c1 * vn < 0.0 {
        return Err(Error::Singular {
            condition: "velocity discriminant",
            detail: "negative discriminant".into(),
        });
    }
    Ok(drag.solve(v, g))
}

/// How the effective viscosity of porous planes is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViscosityModel {
    /// `ν_eff = ν` everywhere.
    Plain,
    /// `ν_eff = ν/ε`.
    Rescaled,
    /// `ν_eff = Jν` on planes with `ε < 1`.
    Ratio(f64),
}

/// Kozeny–Carman permeability `ε³d²/(180(1−ε)²)`; infinite for `ε = 1`.
pub fn kozeny_carman(porosity: f64, diameter: f64) -> f64 {
    if porosity >= 1.0 {
        f64::INFINITY
    } else {
        porosity.powi(3) * diameter * diameter / (180.0 * (1.0 - porosity).powi(2))
    }
}

/// Ergun estimate of the Forchheimer coefficient, `1.75/√(150ε³)`.
pub fn ergun_forchheimer(porosity: f64) -> f64 {
    1.75 / (150.0 * porosity.powi(3)).sqrt()
}

/// Per-plane porous-medium description.
#[derive(Debug, Clone, PartialEq)]
pub struct PorousParams {
    pub porosity: Vec<f64>,
    /// `f64::INFINITY` where there is no drag.
    pub permeability: Vec<f64>,
    pub forchheimer: Vec<f64>,
    pub body_force: [f64; 3],
    pub nu: f64,
    pub viscosity: ViscosityModel,
    pub lambda_magic: f64,
}

impl PorousParams {
    /// Drag-free fluid with uniform porosity one.
    pub fn free(nz: usize, nu: f64, lambda_magic: f64, body_force: [f64; 3]) -> Self {
        Self {
            porosity: vec![1.0; nz],
            permeability: vec![f64::INFINITY; nz],
            forchheimer: vec![0.0; nz],
            body_force,
            nu,
            viscosity: ViscosityModel::Plain,
            lambda_magic,
        }
    }

    /// Planes from a porosity profile with Kozeny–Carman permeability scaled
    /// by `k_scale` (1 for the plain closure) and a Forchheimer coefficient
    /// per plane from `c_f` (e.g. [`ergun_forchheimer`] or zero).
    pub fn from_porosity(
        porosity: &[f64],
        diameter: f64,
        k_scale: f64,
        c_f: impl Fn(f64) -> f64,
        nu: f64,
        viscosity: ViscosityModel,
        lambda_magic: f64,
        body_force: [f64; 3],
    ) -> Self {
        Self {
            porosity: porosity.to_vec(),
            permeability: porosity.iter().map(|&e| k_scale * kozeny_carman(e, diameter)).collect(),
            forchheimer: porosity.iter().map(|&e| if e < 1.0 { c_f(e) } else { 0.0 }).collect(),
            body_force,
            nu,
            viscosity,
            lambda_magic,
        }
    }

    pub fn nu_eff(&self, plane: usize) -> f64 {
        let e = self.porosity[plane];
        match self.viscosity {
            ViscosityModel::Plain => self.nu,
            ViscosityModel::Rescaled => self.nu / e,
            ViscosityModel::Ratio(j) if e < 1.0 => j * self.nu,
            ViscosityModel::Ratio(_) => self.nu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nz = self.porosity.len();
        if self.permeability.len() != nz || self.forchheimer.len() != nz {
            return Err(Error::param("permeability", "porosity, permeability and Forchheimer lengths differ"));
        }
        if !(self.nu > 0.0 && self.lambda_magic > 0.0) {
            return Err(Error::param("nu", "viscosity and magic parameter must be positive"));
        }
        if let ViscosityModel::Ratio(j) = self.viscosity {
            if !(j > 0.0) {
                return Err(Error::param("viscosity_ratio", format!("must be positive, got {j}")));
            }
        }
        for z in 0..nz {
            let (e, k, c) = (self.porosity[z], self.permeability[z], self.forchheimer[z]);
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::param("porosity", format!("plane {z}: {e} outside (0, 1]")));
            }
            if !(k > 0.0) {
                return Err(Error::param("permeability", format!("plane {z}: {k} not positive")));
            }
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::param("forchheimer", format!("plane {z}: {c} invalid")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Plane {
    drag: Drag,
    inv_eps: f64,
    omega_plus: f64,
    omega_minus: f64,
}

/// Generalised collision with per-plane porosity, drag and viscosity.
#[derive(Debug, Clone)]
pub struct GlbmCollision {
    planes: Vec<Plane>,
    body_force: [f64; 3],
}

impl GlbmCollision {
    pub fn new(params: &PorousParams) -> Result<Self> {
        params.validate()?;
        let planes = (0..params.porosity.len())
            .map(|z| {
                let nu_eff = params.nu_eff(z);
                let omega_plus = omega_plus_for(nu_eff);
                let omega_minus = omega_minus_for(omega_plus, params.lambda_magic);
                for (name, w) in [("omega_plus", omega_plus), ("omega_minus", omega_minus)] {
                    if !(w > 0.0 && w < 2.0) {
                        return Err(Error::param(name, format!("plane {z}: {w} outside (0, 2)")));
                    }
                }
                let e = params.porosity[z];
                Ok(Plane {
                    drag: Drag::new(e, params.permeability[z], params.forchheimer[z], params.nu),
                    inv_eps: 1.0 / e,
                    omega_plus,
                    omega_minus,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            planes,
            body_force: params.body_force,
        })
    }

    pub fn plane_count(&self) -> usize {
        self.planes.len()
    }
}

impl Collision for GlbmCollision {
    #[inline]
    fn collide(&self, z: usize, f: &mut [f64; Q]) -> f64 {
        let p = &self.planes[z];
        let (delta_rho, m) = moments(f);
        let (u, force) = p.drag.solve(m, self.body_force);
        relax_trt(f, delta_rho, m, p.inv_eps, p.omega_plus, p.omega_minus, force);
        u[0] * u[0] + u[1] * u[1] + u[2] * u[2]
    }

    fn velocity(&self, z: usize, f: &[f64; Q]) -> [f64; 3] {
        let (_, m) = moments(f);
        self.planes[z].drag.solve(m, self.body_force).0
    }
}

/// Steady GLBM profile on a geometry whose z extent matches the planes of
/// `params`. Velocities are superficial.
pub fn run_glbm(
    geom: &VoxelGeometry,
    params: &PorousParams,
    control: &SteadyControl,
) -> Result<(ProfileData, RunStats, LatticeField)> {
    if params.porosity.len() != geom.dims[2] {
        return Err(Error::param(
            "porosity",
            format!("{} planes given for {} z layers", params.porosity.len(), geom.dims[2]),
        ));
    }
    let collision = GlbmCollision::new(params)?;
    let mut field = LatticeField::new(geom, BoundaryScheme::Sbb)?;
    let (raw, stats) = run_to_steady(&mut field, &collision, control)?;
    let profile = ProfileData::from_superficial(raw.z, raw.u_superficial, params.porosity.clone(), raw.height);
    Ok((profile, stats, field))
}

/// Half-porous Couette flow: porous for `y < H/2`, free above, lid at
/// `y = H` moving with `u0`, evaluated at `z`:
/// free `rKa + εa(y − H/2)`, porous `rKa·e^{r(y − H/2)}` with
/// `a = 2u0/(2rK + εH)` and `r = √(νε)/√(ν_eff K)`.
pub fn couette_semi_analytic(u0: f64, h: f64, porosity: f64, k: f64, nu: f64, nu_eff: f64, z: &[f64]) -> Result<ProfileData> {
    for (name, v) in [("u0", u0), ("height", h), ("porosity", porosity), ("permeability", k), ("nu", nu), ("nu_eff", nu_eff)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(name, format!("must be positive and finite, got {v}")));
        }
    }
    let r = (nu * porosity).sqrt() / (nu_eff * k).sqrt();
    let a = 2.0 * u0 / (2.0 * r * k + porosity * h);
    let u: Vec<f64> = z
        .iter()
        .map(|&y| {
            if y >= 0.5 * h {
                r * k * a + porosity * a * (y - 0.5 * h)
            } else {
                r * k * a * (r * (y - 0.5 * h)).exp()
            }
        })
        .collect();
    let eps = z.iter().map(|&y| if y >= 0.5 * h { 1.0 } else { porosity }).collect();
    Ok(ProfileData::from_superficial(z.to_vec(), u, eps, h))
}

/// Half-porous Couette cell: porous planes below `H/2`, free fluid above,
/// a lid at `z = H` moving with `Re·ν/H`, no body force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouetteSpec {
    pub height: usize,
    pub nu: f64,
    pub reynolds: f64,
    /// `K/H²`.
    pub darcy: f64,
    pub porosity: f64,
    pub viscosity: ViscosityModel,
    pub lambda_magic: f64,
}

impl CouetteSpec {
    pub fn lid_velocity(&self) -> f64 {
        self.reynolds * self.nu / self.height as f64
    }

    pub fn permeability(&self) -> f64 {
        let h = self.height as f64;
        self.darcy * h * h
    }

    pub fn params(&self) -> PorousParams {
        let n = self.height;
        let porous = |z: usize| 2 * z < n;
        PorousParams {
            porosity: (0..n).map(|z| if porous(z) { self.porosity } else { 1.0 }).collect(),
            permeability: (0..n).map(|z| if porous(z) { self.permeability() } else { f64::INFINITY }).collect(),
            forchheimer: vec![0.0; n],
            body_force: [0.0; 3],
            nu: self.nu,
            viscosity: self.viscosity,
            lambda_magic: self.lambda_magic,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CouetteRun {
    pub profile: ProfileData,
    pub analytic: ProfileData,
    /// `‖u − u_exact‖₂ / ‖u_exact‖₂` over all planes.
    pub relative_l2: f64,
    pub stats: RunStats,
}

pub fn run_couette(spec: &CouetteSpec, control: &SteadyControl) -> Result<CouetteRun> {
    if spec.height < 4 || spec.height % 2 != 0 {
        return Err(Error::param("height", format!("need an even height of at least 4, got {}", spec.height)));
    }
    let params = spec.params();
    let mut geom = VoxelGeometry::channel(1, 1, spec.height)?;
    let u0 = spec.lid_velocity();
    geom.set_top_wall_velocity([u0, 0.0, 0.0]);
    let (profile, stats, _) = run_glbm(&geom, &params, control)?;
    let nu_eff = params.nu_eff(0);
    let analytic = couette_semi_analytic(
        u0,
        spec.height as f64,
        spec.porosity,
        spec.permeability(),
        spec.nu,
        nu_eff,
        &profile.z,
    )?;
    let (num, den) = profile
        .u_superficial
        .iter()
        .zip(&analytic.u_superficial)
        .fold((0.0, 0.0), |(n, d), (u, a)| (n + (u - a) * (u - a), d + a * a));
    Ok(CouetteRun {
        profile,
        analytic,
        relative_l2: (num / den).sqrt(),
        stats,
    })
}

/// Closure choices for homogenised models of a resolved profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomogenizedVariant {
    /// `μ_eff = μ/ε` with Ergun Forchheimer drag.
    Rescaled,
    /// `μ_eff = μ` with Ergun Forchheimer drag.
    Plain,
    /// `μ_eff = μ`, linear Darcy drag only.
    DarcyOnly,
}

impl HomogenizedVariant {
    pub const ALL: [Self; 3] = [Self::Rescaled, Self::Plain, Self::DarcyOnly];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rescaled => "glbm_rescaled",
            Self::Plain => "glbm_plain",
            Self::DarcyOnly => "glbm_darcy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogenizedSetup {
    /// Mean grain diameter for the Kozeny–Carman closure.
    pub diameter: f64,
    pub nu: f64,
    pub lambda_magic: f64,
    /// Body force of the resolved run.
    pub force: f64,
    pub control: SteadyControl,
}

#[derive(Debug, Clone)]
pub struct VariantRun {
    pub variant: HomogenizedVariant,
    /// On the planes of the resolved profile.
    pub profile: ProfileData,
    /// RMSE of the superficial velocity against the resolved profile.
    pub rmse: f64,
    pub stats: RunStats,
}

#[derive(Debug, Clone)]
pub struct DnsComparison {
    /// Plateau permeability of the resolved profile.
    pub permeability: f64,
    /// Factor applied to Kozeny–Carman so it matches `permeability` at the
    /// plateau porosity.
    pub k_scale: f64,
    pub runs: Vec<VariantRun>,
}

/// Runs each homogenised variant on the porosity profile of a resolved
/// channel run and compares the superficial velocities plane by plane.
///
/// Leading planes with zero porosity (below a bottom plate) are dropped and
/// replaced by a wall at the same height.
pub fn compare_with_dns(dns: &ProfileData, setup: &HomogenizedSetup) -> Result<DnsComparison> {
    let first = dns
        .porosity
        .iter()
        .position(|&e| e > 0.0)
        .ok_or_else(|| Error::Geometry("resolved profile has no fluid planes".into()))?;
    if let Some(z) = dns.porosity[first..].iter().position(|&e| e <= 0.0) {
        return Err(Error::Geometry(format!("blocked plane {} above the bottom", first + z)));
    }
    let plateau = crate::pore_scale::plateau_window(&dns.porosity)
        .ok_or_else(|| Error::Fit("no porous plateau in the resolved profile".into()))?;
    let k = crate::pore_scale::measure_permeability(dns, plateau.clone(), setup.nu, setup.force)?;
    let eps_plateau = dns.porosity[plateau.clone()].iter().sum::<f64>() / plateau.len() as f64;
    let k_scale = k / kozeny_carman(eps_plateau, setup.diameter);
    if !(k_scale > 0.0 && k_scale.is_finite()) {
        return Err(Error::Fit(format!("cannot scale Kozeny–Carman to permeability {k:e}")));
    }
    let porosity = &dns.porosity[first..];
    let geom = VoxelGeometry::channel(1, 1, porosity.len())?;
    let g = [setup.force, 0.0, 0.0];
    let runs = HomogenizedVariant::ALL
        .iter()
        .map(|&variant| {
            let (viscosity, c_f): (ViscosityModel, fn(f64) -> f64) = match variant {
                HomogenizedVariant::Rescaled => (ViscosityModel::Rescaled, ergun_forchheimer),
                HomogenizedVariant::Plain => (ViscosityModel::Plain, ergun_forchheimer),
                HomogenizedVariant::DarcyOnly => (ViscosityModel::Plain, |_| 0.0),
            };
            let params = PorousParams::from_porosity(
                porosity,
                setup.diameter,
                k_scale,
                c_f,
                setup.nu,
                viscosity,
                setup.lambda_magic,
                g,
            );
            let (raw, stats, _) = run_glbm(&geom, &params, &setup.control)?;
            let profile = ProfileData::from_superficial(
                dns.z[first..].to_vec(),
                raw.u_superficial,
                porosity.to_vec(),
                dns.height,
            );
            let sq: f64 = profile
                .u_superficial
                .iter()
                .zip(&dns.u_superficial[first..])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            Ok(VariantRun {
                variant,
                rmse: (sq / profile.len() as f64).sqrt(),
                profile,
                stats,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DnsComparison { permeability: k, k_scale, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::TrtCollision;
    use crate::lattice::{equilibrium, set_relaxation_from_magic, WEIGHTS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equilibrium_reductions() {
        let u = [0.01, -0.02, 0.005];
        assert_eq!(glbm_equilibrium(0.3, u, 1.0).unwrap(), equilibrium(0.3, u));
        let at_rest = glbm_equilibrium(0.2, [0.0; 3], 0.37).unwrap();
        for k in 0..Q {
            assert_eq!(at_rest[k], WEIGHTS[k] * 0.2);
        }
        assert!(glbm_equilibrium(0.0, u, 0.0).is_err());
    }

    #[test]
    fn equilibrium_term_by_term() {
        let (eps, u) = (0.4, [0.01, 0.0, 0.0]);
        let feq = glbm_equilibrium(0.0, u, eps).unwrap();
        for k in 0..Q {
            let e = crate::lattice::VELOCITIES_F[k];
            let eu = e[0] * u[0];
            let expected = WEIGHTS[k] * (3.0 * eu + 4.5 * eu * eu / eps - 1.5 * u[0] * u[0] / eps);
            assert!((feq[k] - expected).abs() < 1e-18);
        }
    }

    #[test]
    fn velocity_solver_cases() {
        let v = [0.01, 0.002, 0.0];
        let (u, f) = glbm_force_and_velocity(v, 1.0, f64::INFINITY, 0.0, [0.0; 3], 0.1).unwrap();
        assert_eq!(u, v);
        assert_eq!(f, [0.0; 3]);
        // Linear Darcy closed form.
        let (eps, k, nu, g) = (0.5, 1e-3, 0.1, [1e-6, 0.0, 0.0]);
        let (u, _) = glbm_force_and_velocity(v, eps, k, 0.0, g, nu).unwrap();
        let vh = [v[0] + 0.5 * eps * g[0], v[1], v[2]];
        for a in 0..3 {
            assert!((u[a] - vh[a] / (1.0 + eps * nu / (2.0 * k))).abs() < 1e-18);
        }
    }

    #[test]
    fn velocity_solver_matches_fixed_point() {
        let (eps, k, cf, nu) = (0.5, 1e-3, 0.1, 0.1);
        let vh = [0.01, 0.0, 0.0];
        let (u, _) = glbm_force_and_velocity(vh, eps, k, cf, [0.0; 3], nu).unwrap();
        // u = v̂ − ½(ενu/K + εc_F|u|u/√K), iterated with damping.
        let mut x = 0.0f64;
        for _ in 0..10_000 {
            let rhs = vh[0] - 0.5 * (eps * nu * x / k + eps * cf * x.abs() * x / k.sqrt());
            x = 0.99 * x + 0.01 * rhs;
        }
        let residual = u[0] - (vh[0] - 0.5 * (eps * nu * u[0] / k + eps * cf * u[0].abs() * u[0] / k.sqrt()));
        assert!(residual.abs() < 1e-13 * vh[0].abs().max(1e-300) + 1e-18);
        assert!((u[0] - x).abs() < 1e-12 * x.abs());
    }

    #[test]
    fn unit_porosity_collision_is_the_plain_collision() {
        let nu = 0.07;
        let g = [1e-5, -2e-6, 3e-7];
        let trt = TrtCollision::new(set_relaxation_from_magic(nu, 3.0 / 16.0).unwrap().with_body_force(g));
        let glbm = GlbmCollision::new(&PorousParams::free(1, nu, 3.0 / 16.0, g)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let f: [f64; Q] = std::array::from_fn(|k| WEIGHTS[k] * rng.gen_range(-0.1..0.1));
            let (mut a, mut b) = (f, f);
            let ua = trt.collide(0, &mut a);
            let ub = glbm.collide(0, &mut b);
            assert_eq!(a, b);
            assert_eq!(ua, ub);
            assert_eq!(trt.velocity(0, &f), glbm.velocity(0, &f));
        }
    }

    #[test]
    fn uniform_darcy_box() {
        let geom = VoxelGeometry::from_flags([1, 1, 4], [true; 3], vec![crate::geometry::CellFlag::Fluid; 4], |_, _, _| 0.5)
            .unwrap();
        let (eps, k, nu, g) = (0.5, 1e-3, 0.1, 1e-8);
        let mut params = PorousParams::free(4, nu, 0.25, [g, 0.0, 0.0]);
        params.porosity = vec![eps; 4];
        params.permeability = vec![k; 4];
        let control = SteadyControl {
            tolerance: 1e-14,
            check_interval: 100,
            max_steps: 100_000,
        };
        let (p, stats, _) = run_glbm(&geom, &params, &control).unwrap();
        assert!(stats.converged);
        let expected = k * g / nu;
        for u in &p.u_superficial {
            assert!((u - expected).abs() / expected < 1e-10, "{u} vs {expected}");
        }
    }

    #[test]
    fn couette_identities() {
        let (u0, h, eps, k, nu) = (1e-3, 64.0, 0.4, 0.4915, 0.1);
        for nu_eff in [nu, nu / eps] {
            let p = couette_semi_analytic(u0, h, eps, k, nu, nu_eff, &[h, 0.5 * h]).unwrap();
            assert!((p.u_superficial[0] - u0).abs() < 1e-18);
            let r = (nu * eps).sqrt() / (nu_eff * k).sqrt();
            let a = 2.0 * u0 / (2.0 * r * k + eps * h);
            let below = couette_semi_analytic(u0, h, eps, k, nu, nu_eff, &[0.5 * h - 1e-12]).unwrap();
            assert!((p.u_superficial[1] - r * k * a).abs() < 1e-18);
            assert!((below.u_superficial[0] - r * k * a).abs() < 1e-15);
        }
    }

    #[test]
    fn closures() {
        assert!(kozeny_carman(1.0, 10.0).is_infinite());
        assert!((kozeny_carman(0.4, 10.0) - 0.064 * 100.0 / (180.0 * 0.36)).abs() < 1e-15);
        assert!((ergun_forchheimer(1.0) - 1.75 / 150f64.sqrt()).abs() < 1e-15);
    }
}
