//! Closed-form plane channel flow over a porous layer, free region
//! `0 ≤ z ≤ h_f` above a porous region `−h_p ≤ z < 0`.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::profile::ProfileData;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InterfaceCondition {
    /// Brinkman porous region, velocity and effective stress continuous.
    Brinkman,
    /// Brinkman porous region with a stress jump `(μ/√k) β U_s`.
    StressJump { beta: f64 },
    /// Darcy porous region, slip `U'(0⁺) = (α/√k)(U_s − U_m)`.
    BeaversJoseph { alpha: f64 },
    /// Darcy porous region, slip `U'(0⁺) = (α/√k) U_s`.
    Saffman { alpha: f64 },
}

impl InterfaceCondition {
    pub fn name(&self) -> &'static str {
        match self {
            InterfaceCondition::Brinkman => "br",
            InterfaceCondition::StressJump { .. } => "otw",
            InterfaceCondition::BeaversJoseph { .. } => "bj",
            InterfaceCondition::Saffman { .. } => "bjs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoDomainConfig {
    pub h_free: f64,
    pub h_porous: f64,
    pub mu: f64,
    pub mu_eff: f64,
    pub permeability: f64,
    pub force: f64,
    pub condition: InterfaceCondition,
    /// Porosity reported for the porous planes of generated profiles.
    pub porosity: f64,
}

impl TwoDomainConfig {
    pub fn viscosity_ratio(&self) -> f64 {
        self.mu_eff / self.mu
    }

    pub fn seepage_velocity(&self) -> f64 {
        self.force * self.permeability / self.mu
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("h_free", self.h_free),
            ("h_porous", self.h_porous),
            ("mu", self.mu),
            ("mu_eff", self.mu_eff),
            ("permeability", self.permeability),
            ("force", self.force),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.porosity > 0.0 && self.porosity <= 1.0) {
            return Err(Error::param("porosity", format!("must lie in (0, 1], got {}", self.porosity)));
        }
        match self.condition {
            InterfaceCondition::StressJump { beta } if !beta.is_finite() => Err(Error::param("beta", "must be finite")),
            InterfaceCondition::BeaversJoseph { alpha } | InterfaceCondition::Saffman { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(Error::param("alpha", format!("must be positive and finite, got {alpha}")))
            }
            _ => Ok(()),
        }
    }
}

/// Coefficients of the piecewise solution:
/// free `U = −G z²/(2μ) + A z + B`, porous `U = U_m + C e^{λz} + E e^{−λ(z+h_p)}`
/// (Brinkman) or `U = U_m` (Darcy).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoDomainSolution {
    pub config: TwoDomainConfig,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub e: f64,
    pub lambda: f64,
    pub seepage: f64,
}

impl TwoDomainSolution {
    pub fn solve(config: &TwoDomainConfig) -> Result<Self> {
        config.validate()?;
        let TwoDomainConfig {
            h_free: hf,
            h_porous: hp,
            mu,
            mu_eff,
            permeability: k,
            force: g,
            ..
        } = *config;
        let um = g * k / mu;
        let sk = k.sqrt();
        let lambda = (mu / (mu_eff * k)).sqrt();
        let (a, b, c, e) = match config.condition {
            InterfaceCondition::Brinkman | InterfaceCondition::StressJump { .. } => {
                let beta = match config.condition {
                    InterfaceCondition::StressJump { beta } => beta,
                    _ => 0.0,
                };
                let d = (-lambda * hp).exp();
                // Unknowns (A, B, C, E).
                let m = Matrix4::new(
                    hf, 1.0, 0.0, 0.0, //
                    0.0, 0.0, d, 1.0, //
                    0.0, 1.0, -1.0, -d, //
                    -mu, -mu * beta / sk, mu_eff * lambda, -mu_eff * lambda * d,
                );
                let rhs = Vector4::new(g * hf * hf / (2.0 * mu), -um, um, 0.0);
                let x = m.lu().solve(&rhs).ok_or_else(|| Error::Singular {
                    condition: config.condition.name(),
                    detail: "interface system has no unique solution".into(),
                })?;
                (x[0], x[1], x[2], x[3])
            }
            InterfaceCondition::BeaversJoseph { alpha } | InterfaceCondition::Saffman { alpha } => {
                let slip_um = match config.condition {
                    InterfaceCondition::BeaversJoseph { .. } => um,
                    _ => 0.0,
                };
                // A − (α/√k) B = −(α/√k) U_m, A h_f + B = G h_f²/(2μ).
                let s = alpha / sk;
                let m = Matrix2::new(1.0, -s, hf, 1.0);
                let rhs = Vector2::new(-s * slip_um, g * hf * hf / (2.0 * mu));
                let x = m.lu().solve(&rhs).ok_or_else(|| Error::Singular {
                    condition: config.condition.name(),
                    detail: "slip system has no unique solution".into(),
                })?;
                (x[0], x[1], 0.0, 0.0)
            }
        };
        if ![a, b, c, e].iter().all(|v| v.is_finite()) {
            return Err(Error::Singular {
                condition: config.condition.name(),
                detail: "non-finite coefficients".into(),
            });
        }
        Ok(Self {
            config: *config,
            a,
            b,
            c,
            e,
            lambda,
            seepage: um,
        })
    }

    fn darcy(&self) -> bool {
        matches!(
            self.config.condition,
            InterfaceCondition::BeaversJoseph { .. } | InterfaceCondition::Saffman { .. }
        )
    }

    /// Velocity at `z`; the free branch is used for `z ≥ 0`.
    pub fn velocity(&self, z: f64) -> f64 {
        if z >= 0.0 {
            -self.config.force * z * z / (2.0 * self.config.mu) + self.a * z + self.b
        } else if self.darcy() {
            self.seepage
        } else {
            self.seepage + self.c * (self.lambda * z).exp() + self.e * (-self.lambda * (z + self.config.h_porous)).exp()
        }
    }

    /// Slip velocity `U(0⁺)`.
    pub fn slip_velocity(&self) -> f64 {
        self.b
    }

    /// `U'(0⁺)`.
    pub fn free_gradient(&self) -> f64 {
        self.a
    }

    /// `U'(0⁻)`; zero for a Darcy region.
    pub fn porous_gradient(&self) -> f64 {
        if self.darcy() {
            0.0
        } else {
            self.lambda * (self.c - self.e * (-self.lambda * self.config.h_porous).exp())
        }
    }

    /// Maximum of the free-region parabola (clamped to the region).
    pub fn max_velocity(&self) -> f64 {
        let zmax = (self.a * self.config.mu / self.config.force).clamp(0.0, self.config.h_free);
        self.velocity(zmax)
    }
}

/// Profile of the two-domain solution on `z`.
pub fn solve_two_domain(config: &TwoDomainConfig, z: &[f64]) -> Result<ProfileData> {
    let sol = TwoDomainSolution::solve(config)?;
    let u = z.iter().map(|&z| sol.velocity(z)).collect();
    let eps = z.iter().map(|&z| if z >= 0.0 { 1.0 } else { config.porosity }).collect();
    Ok(ProfileData::from_superficial(
        z.to_vec(),
        u,
        eps,
        config.h_free + config.h_porous,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(condition: InterfaceCondition) -> TwoDomainConfig {
        TwoDomainConfig {
            h_free: 40.0,
            h_porous: 60.0,
            mu: 0.1,
            mu_eff: 0.25,
            permeability: 2.0,
            force: 1e-6,
            condition,
            porosity: 0.4,
        }
    }

    #[test]
    fn brinkman_satisfies_its_conditions() {
        let s = TwoDomainSolution::solve(&base(InterfaceCondition::Brinkman)).unwrap();
        let c = s.config;
        assert!(s.velocity(c.h_free).abs() < 1e-18);
        assert!(s.velocity(-c.h_porous).abs() < 1e-18);
        let below = s.seepage + s.c + s.e * (-s.lambda * c.h_porous).exp();
        assert!((below - s.slip_velocity()).abs() < 1e-12 * s.slip_velocity());
        let jump = c.mu_eff * s.porous_gradient() - c.mu * s.free_gradient();
        assert!(jump.abs() < 1e-12 * c.mu * s.free_gradient().abs());
        // Brinkman equation in the porous region by finite differences.
        let (z, h) = (-5.0, 1e-3);
        let d2 = (s.velocity(z + h) - 2.0 * s.velocity(z) + s.velocity(z - h)) / (h * h);
        let residual = c.mu_eff * d2 - c.mu / c.permeability * s.velocity(z) + c.force;
        assert!(residual.abs() < 1e-6 * c.force);
    }

    #[test]
    fn stress_jump_condition_holds() {
        let beta = -2.8;
        let s = TwoDomainSolution::solve(&base(InterfaceCondition::StressJump { beta })).unwrap();
        let c = s.config;
        let lhs = c.mu_eff * s.porous_gradient() - c.mu * s.free_gradient();
        let rhs = c.mu / c.permeability.sqrt() * beta * s.slip_velocity();
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs());
    }

    #[test]
    fn slip_conditions_hold() {
        for (cond, with_um) in [
            (InterfaceCondition::BeaversJoseph { alpha: 0.5 }, true),
            (InterfaceCondition::Saffman { alpha: 0.5 }, false),
        ] {
            let s = TwoDomainSolution::solve(&base(cond)).unwrap();
            let c = s.config;
            let um = if with_um { s.seepage } else { 0.0 };
            let expected = 0.5 / c.permeability.sqrt() * (s.slip_velocity() - um);
            assert!((s.free_gradient() - expected).abs() < 1e-14 * expected.abs());
            assert!(s.velocity(c.h_free).abs() < 1e-18);
            assert_eq!(s.velocity(-10.0), s.seepage);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut c = base(InterfaceCondition::Brinkman);
        c.permeability = 0.0;
        assert!(TwoDomainSolution::solve(&c).is_err());
        let c = base(InterfaceCondition::BeaversJoseph { alpha: -1.0 });
        assert!(TwoDomainSolution::solve(&c).is_err());
    }
}
