//! Link-wise no-slip rules (simple and interpolated bounce-back) and the
//! periodic pressure drive expressed as a body force.

use crate::error::{Error, Result};
use crate::lattice::{CS2, OPPOSITE, RHO0, VELOCITIES_F, WEIGHTS};

/// Smallest wall distance kept for interpolated links.
pub const Q_MIN: f64 = 0.05;

/// A lattice link leaving a fluid cell and ending in a solid or wall cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryLink {
    /// First fluid cell `x_f1`.
    pub fluid_cell: usize,
    /// Direction `k` pointing from the fluid cell into the solid.
    pub direction: usize,
    /// Normalised wall distance `|x_f1 − x_w| / |x_f1 − x_b|`.
    pub q: f64,
    /// Second fluid cell `x_f1 − e_k`, if that cell is fluid.
    pub second_fluid: Option<usize>,
    /// Velocity of the wall the link hits.
    pub wall_velocity: [f64; 3],
}

impl BoundaryLink {
    /// Direction of the population the rule reconstructs, `bar(k)`.
    pub fn incoming(&self) -> usize {
        OPPOSITE[self.direction]
    }

    /// Momentum correction `−2 w_k ρ0 (e_k·u_w)/c_s²` for a moving wall.
    pub fn wall_term(&self) -> f64 {
        let e = VELOCITIES_F[self.direction];
        let eu = e[0] * self.wall_velocity[0] + e[1] * self.wall_velocity[1] + e[2] * self.wall_velocity[2];
        -2.0 * WEIGHTS[self.direction] * RHO0 * eu / CS2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryScheme {
    /// Simple bounce-back; the wall sits midway along every link.
    Sbb,
    /// Central linear interpolation using the wall distance `q`.
    Cli,
}

impl std::str::FromStr for BoundaryScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sbb" => Ok(BoundaryScheme::Sbb),
            "cli" => Ok(BoundaryScheme::Cli),
            other => Err(format!("unknown boundary scheme `{other}` (expected sbb or cli)")),
        }
    }
}

impl std::fmt::Display for BoundaryScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundaryScheme::Sbb => "sbb",
            BoundaryScheme::Cli => "cli",
        })
    }
}

/// Interpolation coefficient `(1 − 2q)/(1 + 2q)`.
#[inline]
pub fn cli_coefficient(q: f64) -> f64 {
    (1.0 - 2.0 * q) / (1.0 + 2.0 * q)
}

/// Simple bounce-back: `f_bar(k)(x_f1, t+1) = f̃_k(x_f1, t)`.
#[inline(always)]
pub fn sbb_rule(post_k_f1: f64) -> f64 {
    post_k_f1
}

/// Central linear interpolation:
/// `c f̃_k(x_f2) − c f̃_bar(k)(x_f1) + f̃_k(x_f1)` with `c = (1−2q)/(1+2q)`.
#[inline(always)]
pub fn cli_rule(coefficient: f64, post_k_f2: f64, post_kbar_f1: f64, post_k_f1: f64) -> f64 {
    coefficient * post_k_f2 - coefficient * post_kbar_f1 + post_k_f1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveMode {
    BodyForce,
    /// A periodic pressure drop re-expressed as a uniform body force.
    PressureGradientAsForce,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSpec {
    pub mode: DriveMode,
    /// Body force for [`DriveMode::BodyForce`], pressure drop over the
    /// periodic length per axis for [`DriveMode::PressureGradientAsForce`].
    pub magnitude: [f64; 3],
    pub periodic_axes: [bool; 3],
}

impl DriveSpec {
    pub fn body_force(g: [f64; 3], periodic_axes: [bool; 3]) -> Self {
        Self {
            mode: DriveMode::BodyForce,
            magnitude: g,
            periodic_axes,
        }
    }

    pub fn pressure_drop(dp: [f64; 3], periodic_axes: [bool; 3]) -> Self {
        Self {
            mode: DriveMode::PressureGradientAsForce,
            magnitude: dp,
            periodic_axes,
        }
    }
}

/// Body force used by the collision for a drive on a domain of `lengths`
/// cells per axis.
pub fn resolve_drive(spec: &DriveSpec, lengths: [usize; 3]) -> Result<[f64; 3]> {
    if spec.magnitude.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("drive", "magnitude must be finite"));
    }
    match spec.mode {
        DriveMode::BodyForce => Ok(spec.magnitude),
        DriveMode::PressureGradientAsForce => {
            let mut g = [0.0; 3];
            for axis in 0..3 {
                if spec.magnitude[axis] == 0.0 {
                    continue;
                }
                if lengths[axis] == 0 {
                    return Err(Error::param("drive", format!("axis {axis} has zero length")));
                }
                if !spec.periodic_axes[axis] {
                    return Err(Error::param(
                        "drive",
                        format!("pressure drop along non-periodic axis {axis}"),
                    ));
                }
                g[axis] = spec.magnitude[axis] / lengths[axis] as f64;
            }
            Ok(g)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_reduces_to_sbb_at_half() {
        assert_eq!(cli_coefficient(0.5), 0.0);
        assert_eq!(cli_rule(cli_coefficient(0.5), 0.7, -0.4, 0.3), sbb_rule(0.3));
    }

    #[test]
    fn cli_quarter_distance() {
        let c = cli_coefficient(0.25);
        assert!((c - 1.0 / 3.0).abs() < 1e-16);
        let v = cli_rule(c, 0.1, 0.2, 0.3);
        assert!((v - (0.1 / 3.0 - 0.2 / 3.0 + 0.3)).abs() < 1e-16);
        assert!((v - 0.266_666_666_666_666_7).abs() < 1e-15);
    }

    #[test]
    fn drive_resolution() {
        let periodic = [true, true, false];
        let g = resolve_drive(&DriveSpec::body_force([1e-6, 0.0, 0.0], periodic), [1, 1, 1]).unwrap();
        assert_eq!(g, [1e-6, 0.0, 0.0]);
        let g = resolve_drive(&DriveSpec::pressure_drop([1e-6, 0.0, 0.0], periodic), [200, 10, 10]).unwrap();
        assert!((g[0] - 5e-9).abs() < 1e-24);
        assert!(resolve_drive(&DriveSpec::pressure_drop([1e-6, 0.0, 0.0], periodic), [0, 1, 1]).is_err());
        assert!(resolve_drive(&DriveSpec::pressure_drop([0.0, 0.0, 1e-6], periodic), [4, 4, 4]).is_err());
    }

    #[test]
    fn static_wall_has_no_momentum_term() {
        let link = BoundaryLink {
            fluid_cell: 0,
            direction: 5,
            q: 0.5,
            second_fluid: None,
            wall_velocity: [0.0; 3],
        };
        assert_eq!(link.wall_term(), 0.0);
        let moving = BoundaryLink {
            direction: 11,
            wall_velocity: [0.1, 0.0, 0.0],
            ..link
        };
        assert!((moving.wall_term() + 2.0 * (1.0 / 36.0) * 3.0 * 0.1).abs() < 1e-16);
    }
}
