//! D3Q19 velocity set and the cell-local parts of the scheme: equilibrium,
//! moments and two-relaxation-time (TRT) collision with a body force.
//!
//! Populations follow the fluctuation convention: `Σ f = δρ` with
//! `ρ = ρ0 + δρ` and `ρ0 = 1`, so a fluid at rest has all populations zero.

use crate::error::{Error, Result};

/// Number of discrete velocities.
pub const Q: usize = 19;

/// Squared lattice speed of sound, `c_s² = 1/3` for `Δx = Δt = 1`.
pub const CS2: f64 = 1.0 / 3.0;

/// Mean density of the incompressible formulation.
pub const RHO0: f64 = 1.0;

/// Largest admissible velocity magnitude as a fraction of `c_s`.
pub const MAX_MACH: f64 = 0.3;

/// `|u|²` above which a run is aborted as unstable.
pub const MAX_VELOCITY_SQ: f64 = MAX_MACH * MAX_MACH * CS2;

/// Discrete velocities: rest, six axis links, twelve planar diagonals.
/// Opposite directions are stored in adjacent slots `(2i-1, 2i)`.
pub const VELOCITIES: [[i32; 3]; Q] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
    [1, 1, 0],
    [-1, -1, 0],
    [1, -1, 0],
    [-1, 1, 0],
    [1, 0, 1],
    [-1, 0, -1],
    [1, 0, -1],
    [-1, 0, 1],
    [0, 1, 1],
    [0, -1, -1],
    [0, 1, -1],
    [0, -1, 1],
];

const W0: f64 = 1.0 / 3.0;
const W1: f64 = 1.0 / 18.0;
const W2: f64 = 1.0 / 36.0;

pub const WEIGHTS: [f64; Q] = [
    W0, W1, W1, W1, W1, W1, W1, W2, W2, W2, W2, W2, W2, W2, W2, W2, W2, W2, W2,
];

/// `OPPOSITE[k]` is the index of `-e_k`.
pub const OPPOSITE: [usize; Q] = opposite_table();

const fn opposite_table() -> [usize; Q] {
    let mut table = [usize::MAX; Q];
    let mut k = 0;
    while k < Q {
        let mut j = 0;
        while j < Q {
            if VELOCITIES[j][0] == -VELOCITIES[k][0]
                && VELOCITIES[j][1] == -VELOCITIES[k][1]
                && VELOCITIES[j][2] == -VELOCITIES[k][2]
            {
                table[k] = j;
            }
            j += 1;
        }
        k += 1;
    }
    table
}

/// Velocity set as floating-point vectors.
pub const VELOCITIES_F: [[f64; 3]; Q] = velocities_f();

const fn velocities_f() -> [[f64; 3]; Q] {
    let mut out = [[0.0; 3]; Q];
    let mut k = 0;
    while k < Q {
        out[k] = [
            VELOCITIES[k][0] as f64,
            VELOCITIES[k][1] as f64,
            VELOCITIES[k][2] as f64,
        ];
        k += 1;
    }
    out
}

/// Runtime view of the velocity set, mostly useful for checking its
/// algebraic properties.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeModel {
    pub velocities: [[i32; 3]; Q],
    pub weights: [f64; Q],
    pub opposite: [usize; Q],
    pub cs2: f64,
}

impl LatticeModel {
    pub fn d3q19() -> Self {
        Self {
            velocities: VELOCITIES,
            weights: WEIGHTS,
            opposite: OPPOSITE,
            cs2: CS2,
        }
    }
}

#[inline(always)]
fn dot(e: &[f64; 3], u: &[f64; 3]) -> f64 {
    e[0] * u[0] + e[1] * u[1] + e[2] * u[2]
}

/// Incompressible equilibrium
/// `w_k {δρ + ρ0 [e·u/c_s² + (e·u)²/(2c_s⁴) − u·u/(2c_s²)]}`.
pub fn equilibrium(delta_rho: f64, u: [f64; 3]) -> [f64; Q] {
    equilibrium_scaled(delta_rho, u, 1.0)
}

/// Equilibrium with both quadratic terms multiplied by `inv_eps`; `inv_eps = 1`
/// is bit-for-bit the plain equilibrium.
#[inline]
pub(crate) fn equilibrium_scaled(delta_rho: f64, u: [f64; 3], inv_eps: f64) -> [f64; Q] {
    let usq = dot(&u, &u);
    let mut feq = [0.0; Q];
    for k in 0..Q {
        let eu = dot(&VELOCITIES_F[k], &u);
        feq[k] = WEIGHTS[k] * (delta_rho + RHO0 * (3.0 * eu + (4.5 * eu * eu - 1.5 * usq) * inv_eps));
    }
    feq
}

/// Zeroth and first moments: `(δρ, ρ0⁻¹ Σ e_k f_k)`.
#[inline]
pub fn moments(f: &[f64; Q]) -> (f64, [f64; 3]) {
    let mut rho = 0.0;
    let mut m = [0.0; 3];
    for k in 0..Q {
        rho += f[k];
        m[0] += VELOCITIES_F[k][0] * f[k];
        m[1] += VELOCITIES_F[k][1] * f[k];
        m[2] += VELOCITIES_F[k][2] * f[k];
    }
    (rho, [m[0] / RHO0, m[1] / RHO0, m[2] / RHO0])
}

/// Fluid and relaxation parameters of the TRT scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    pub nu: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub lambda_magic: f64,
    pub rho0: f64,
    pub body_force: [f64; 3],
}

impl FluidParams {
    pub fn with_body_force(mut self, g: [f64; 3]) -> Self {
        self.body_force = g;
        self
    }

    /// Dynamic viscosity `μ = ρ0 ν`.
    pub fn mu(&self) -> f64 {
        self.rho0 * self.nu
    }
}

/// `ω+ = 1/(3ν + ½)` for a kinematic viscosity `ν`.
#[inline]
pub fn omega_plus_for(nu: f64) -> f64 {
    1.0 / (3.0 * nu + 0.5)
}

/// Odd relaxation rate that realises the magic parameter `Λ` for a given `ω+`.
#[inline]
pub fn omega_minus_for(omega_plus: f64, lambda_magic: f64) -> f64 {
    1.0 / (lambda_magic / (1.0 / omega_plus - 0.5) + 0.5)
}

/// `Λ = (1/ω+ − ½)(1/ω− − ½)`.
pub fn magic_parameter(omega_plus: f64, omega_minus: f64) -> f64 {
    (1.0 / omega_plus - 0.5) * (1.0 / omega_minus - 0.5)
}

/// Builds TRT parameters from a viscosity and a magic parameter.
pub fn set_relaxation_from_magic(nu: f64, lambda_magic: f64) -> Result<FluidParams> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::param("nu", format!("must be positive and finite, got {nu}")));
    }
    if !(lambda_magic > 0.0 && lambda_magic.is_finite()) {
        return Err(Error::param(
            "lambda_magic",
            format!("must be positive and finite, got {lambda_magic}"),
        ));
    }
    let omega_plus = omega_plus_for(nu);
    let omega_minus = omega_minus_for(omega_plus, lambda_magic);
    for (name, w) in [("omega_plus", omega_plus), ("omega_minus", omega_minus)] {
        if !(w > 0.0 && w < 2.0) {
            return Err(Error::param(name, format!("{w} outside (0, 2)")));
        }
    }
    Ok(FluidParams {
        nu,
        omega_plus,
        omega_minus,
        lambda_magic,
        rho0: RHO0,
        body_force: [0.0; 3],
    })
}

/// Pairwise TRT relaxation plus first-order forcing
/// `F_k = w_k ρ0 (e_k·F)/c_s²`, in place.
///
/// `u_eq` is the velocity entering the equilibrium and `inv_eps` scales its
/// quadratic terms (1 for plain fluid).
#[inline(always)]
pub(crate) fn relax_trt(
    f: &mut [f64; Q],
    delta_rho: f64,
    u_eq: [f64; 3],
    inv_eps: f64,
    omega_plus: f64,
    omega_minus: f64,
    force: [f64; 3],
) {
    let usq = dot(&u_eq, &u_eq);
    let rest_eq = WEIGHTS[0] * (delta_rho - RHO0 * 1.5 * usq * inv_eps);
    f[0] -= omega_plus * (f[0] - rest_eq);
    let mut k = 1;
    while k < Q {
        let kb = k + 1;
        let eu = dot(&VELOCITIES_F[k], &u_eq);
        let w = WEIGHTS[k];
        let eq_even = w * (delta_rho + RHO0 * (4.5 * eu * eu - 1.5 * usq) * inv_eps);
        let eq_odd = w * RHO0 * 3.0 * eu;
        let source = w * RHO0 * 3.0 * dot(&VELOCITIES_F[k], &force);
        let even = 0.5 * (f[k] + f[kb]);
        let odd = 0.5 * (f[k] - f[kb]);
        let relax_even = omega_plus * (even - eq_even);
        let relax_odd = omega_minus * (odd - eq_odd);
        f[k] = f[k] - relax_even - relax_odd + source;
        f[kb] = f[kb] - relax_even + relax_odd - source;
        k += 2;
    }
}

/// TRT collision of a single cell with the parameters' body force.
///
/// The equilibrium is evaluated at the momentum moment of the incoming
/// populations, so the collision adds exactly `G` to `Σ e_k f_k`.
pub fn trt_collide(f: &[f64; Q], params: &FluidParams) -> Result<[f64; Q]> {
    let (delta_rho, m) = moments(f);
    let mut out = *f;
    relax_trt(
        &mut out,
        delta_rho,
        m,
        1.0,
        params.omega_plus,
        params.omega_minus,
        params.body_force,
    );
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Instability {
            step: 0,
            detail: "non-finite population after collision".into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_set_is_symmetric() {
        let model = LatticeModel::d3q19();
        let wsum: f64 = model.weights.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-15);
        assert!(model.weights.iter().all(|&w| w > 0.0));
        assert_eq!(model.opposite[0], 0);
        for k in 0..Q {
            let kb = model.opposite[k];
            assert_eq!(model.opposite[kb], k);
            for a in 0..3 {
                assert_eq!(model.velocities[kb][a], -model.velocities[k][a]);
            }
        }
        for a in 0..3 {
            let first: f64 = (0..Q).map(|k| WEIGHTS[k] * VELOCITIES_F[k][a]).sum();
            assert!(first.abs() < 1e-16);
            for b in 0..3 {
                let second: f64 = (0..Q)
                    .map(|k| WEIGHTS[k] * VELOCITIES_F[k][a] * VELOCITIES_F[k][b])
                    .sum();
                let expect = if a == b { CS2 } else { 0.0 };
                assert!((second - expect).abs() < 1e-15, "second moment {a}{b}");
            }
        }
    }

    #[test]
    fn equilibrium_at_rest() {
        assert!(equilibrium(0.0, [0.0; 3]).iter().all(|&v| v == 0.0));
        let feq = equilibrium(1.0, [0.0; 3]);
        for k in 0..Q {
            assert_eq!(feq[k], WEIGHTS[k]);
        }
    }

    #[test]
    fn equilibrium_matches_term_by_term_evaluation() {
        let u = [0.01, 0.0, 0.0];
        let feq = equilibrium(0.0, u);
        let cs2 = 1.0 / 3.0;
        for k in 0..Q {
            let e = VELOCITIES[k];
            let eu = e[0] as f64 * u[0] + e[1] as f64 * u[1] + e[2] as f64 * u[2];
            let uu = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
            let oracle = WEIGHTS[k] * (eu / cs2 + 0.5 * eu * eu / (cs2 * cs2) - 0.5 * uu / cs2);
            assert!((feq[k] - oracle).abs() < 1e-17, "k={k}");
        }
        let (rho, m) = moments(&feq);
        assert!(rho.abs() < 1e-17);
        assert!((m[0] - 0.01).abs() < 1e-17 && m[1].abs() < 1e-17 && m[2].abs() < 1e-17);
    }

    #[test]
    fn moments_of_equilibrium() {
        let (rho, m) = moments(&WEIGHTS);
        assert!((rho - 1.0).abs() < 1e-15);
        assert!(m.iter().all(|v| v.abs() < 1e-16));

        let u = [0.02, 0.0, -0.01];
        let (rho, m) = moments(&equilibrium(0.5, u));
        assert!((rho - 0.5).abs() < 1e-14);
        for a in 0..3 {
            assert!((m[a] - u[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn relaxation_from_magic_parameter() {
        let p = set_relaxation_from_magic(1.0 / 6.0, 3.0 / 16.0).unwrap();
        assert!((p.omega_plus - 1.0).abs() < 1e-15);
        assert!((p.omega_minus - 1.0 / 0.875).abs() < 1e-14);

        let p = set_relaxation_from_magic(1.0 / 6.0, 0.25).unwrap();
        assert!((p.omega_plus - 1.0).abs() < 1e-15);
        assert!((p.omega_minus - 1.0).abs() < 1e-15);

        let p = set_relaxation_from_magic(0.05, 3.0 / 16.0).unwrap();
        let lambda = (1.0 / p.omega_plus - 0.5) * (1.0 / p.omega_minus - 0.5);
        assert!((lambda - 3.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn relaxation_rejects_bad_input() {
        assert!(set_relaxation_from_magic(-0.1, 0.25).is_err());
        assert!(set_relaxation_from_magic(0.1, 0.0).is_err());
        assert!(set_relaxation_from_magic(f64::NAN, 0.25).is_err());
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let p = set_relaxation_from_magic(0.1, 3.0 / 16.0).unwrap();
        let feq = equilibrium(0.01, [0.03, -0.02, 0.01]);
        let out = trt_collide(&feq, &p).unwrap();
        for k in 0..Q {
            assert!((out[k] - feq[k]).abs() < 1e-14);
        }
    }

    /// Forms f± and the split equilibria explicitly, independent of the
    /// pair loop used by `relax_trt`.
    fn pairwise_oracle(f: &[f64; Q], wp: f64, wm: f64, g: [f64; 3]) -> [f64; Q] {
        let rho: f64 = f.iter().sum();
        let mut u = [0.0; 3];
        for k in 0..Q {
            for a in 0..3 {
                u[a] += VELOCITIES[k][a] as f64 * f[k];
            }
        }
        let feq: Vec<f64> = (0..Q)
            .map(|k| {
                let e = VELOCITIES[k];
                let eu: f64 = (0..3).map(|a| e[a] as f64 * u[a]).sum();
                let uu: f64 = u.iter().map(|v| v * v).sum();
                WEIGHTS[k] * (rho + 3.0 * eu + 4.5 * eu * eu - 1.5 * uu)
            })
            .collect();
        let mut out = [0.0; Q];
        for k in 0..Q {
            let kb = OPPOSITE[k];
            let fp = 0.5 * (f[k] + f[kb]);
            let fm = 0.5 * (f[k] - f[kb]);
            let ep = 0.5 * (feq[k] + feq[kb]);
            let em = 0.5 * (feq[k] - feq[kb]);
            let e = VELOCITIES[k];
            let eg: f64 = (0..3).map(|a| e[a] as f64 * g[a]).sum();
            out[k] = f[k] - wp * (fp - ep) - wm * (fm - em) + WEIGHTS[k] * 3.0 * eg;
        }
        out
    }

    #[test]
    fn collision_matches_pairwise_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut p = set_relaxation_from_magic(1.0 / 6.0, 0.25).unwrap();
        p.omega_plus = 1.2;
        p.omega_minus = 1.0;
        p.body_force = [1e-6, 0.0, 0.0];
        for _ in 0..100 {
            let mut f = [0.0; Q];
            for v in f.iter_mut() {
                *v = rng.gen_range(-0.05..0.05);
            }
            let got = trt_collide(&f, &p).unwrap();
            let want = pairwise_oracle(&f, 1.2, 1.0, p.body_force);
            for k in 0..Q {
                assert!((got[k] - want[k]).abs() < 1e-15, "k={k}");
            }
        }
    }
}
