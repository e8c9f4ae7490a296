//! Interface quantities from a planar-averaged profile: slip and seepage
//! velocities, one-sided gradients, permeability, α and β.

use std::ops::Range;

use super::fit::{fit_quadratic, fit_two_exponential, ExponentialFit, QuadraticFit};
use crate::error::{Error, Result};
use crate::pore_scale::{measure_permeability, plateau_window};
use crate::profile::ProfileData;

/// Optional overrides for [`extract_interface_params`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractOptions {
    /// Planes (indices) used for the permeability and seepage velocity.
    pub plateau: Option<Range<usize>>,
    /// Planes of the free-region quadratic fit.
    pub free_window: Option<Range<usize>>,
    /// Planes of the porous-side exponential fit.
    pub porous_window: Option<Range<usize>>,
    /// Effective viscosity; defaults to `μ/ε̄` over the porous window.
    pub mu_eff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceFit {
    pub interface_z: f64,
    pub slip_velocity: f64,
    pub seepage_velocity: f64,
    /// `dU/dz` at `0⁺` from the quadratic.
    pub free_gradient: f64,
    /// `dU/dz` at `0⁻` from the exponential fit, if one was possible.
    pub porous_gradient: Option<f64>,
    pub permeability: f64,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub mu_eff: Option<f64>,
    pub free_fit: QuadraticFit,
    pub porous_fit: Option<ExponentialFit>,
    pub free_window: Range<usize>,
    pub porous_window: Option<Range<usize>>,
    pub plateau: Range<usize>,
}

impl InterfaceFit {
    /// Key-value report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("interface_z", format!("{:?}", self.interface_z));
        kv("slip_velocity", format!("{:e}", self.slip_velocity));
        kv("seepage_velocity", format!("{:e}", self.seepage_velocity));
        kv("free_gradient", format!("{:e}", self.free_gradient));
        kv("porous_gradient", opt(self.porous_gradient));
        kv("permeability", format!("{:e}", self.permeability));
        kv("alpha", format!("{:?}", self.alpha));
        kv("beta", self.beta.map_or("none".into(), |b| format!("{b:?}")));
        kv("mu_eff", opt(self.mu_eff));
        let c = self.free_fit.coefficients();
        kv("free_fit", format!("{:e} {:e} {:e}", c[0], c[1], c[2]));
        kv("free_fit_rmse", format!("{:e}", self.free_fit.rmse));
        kv("free_window", format!("{}..{}", self.free_window.start, self.free_window.end));
        match &self.porous_fit {
            Some(f) => {
                let c = f.coefficients();
                kv("porous_fit", format!("{:e} {:e} {:e} {:e}", c[0], c[1], c[2], c[3]));
                kv("porous_fit_rmse", format!("{:e}", f.rmse));
                kv("porous_fit_converged", f.converged.to_string());
            }
            None => kv("porous_fit", "none".into()),
        }
        if let Some(w) = &self.porous_window {
            kv("porous_window", format!("{}..{}", w.start, w.end));
        }
        kv("plateau_window", format!("{}..{}", self.plateau.start, self.plateau.end));
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("none".into(), |v| format!("{v:e}"))
}

/// Fits both sides of the interface at `interface_z` and evaluates the
/// slip coefficients from the fitted values.
///
/// Default windows: the free fit spans from the interface to 0.8 of the
/// way to the velocity maximum, the porous fit from the interface down to
/// where the velocity falls below three times the seepage velocity, the
/// plateau from [`plateau_window`] on the porosity profile.
pub fn extract_interface_params(
    profile: &ProfileData,
    interface_z: f64,
    mu: f64,
    force: f64,
    options: &ExtractOptions,
) -> Result<InterfaceFit> {
    let n = profile.len();
    let z = &profile.z;
    let u = &profile.u_superficial;
    if !(interface_z >= z[0] && interface_z <= z[n - 1]) {
        return Err(Error::param("interface_z", format!("{interface_z} outside the profile")));
    }
    // First plane on the free side.
    let first_free = z.partition_point(|&v| v < interface_z);

    let plateau = match &options.plateau {
        Some(w) => w.clone(),
        None => plateau_window(&profile.porosity[..first_free.max(1)])
            .ok_or_else(|| Error::Fit("no porous plateau below the interface".into()))?,
    };
    let k = measure_permeability(profile, plateau.clone(), mu, force)?;
    if !(k > 0.0) {
        return Err(Error::Fit(format!("non-positive permeability {k}")));
    }
    let um = u[plateau.clone()].iter().sum::<f64>() / plateau.len() as f64;
    let noise = {
        let w = &u[plateau.clone()];
        (w.iter().map(|v| (v - um).powi(2)).sum::<f64>() / w.len() as f64).sqrt()
    };

    let free_window = match &options.free_window {
        Some(w) => w.clone(),
        None => {
            let top = profile.argmax();
            if top <= first_free {
                return Err(Error::Fit("velocity maximum lies at or below the interface".into()));
            }
            let z_end = interface_z + 0.8 * (z[top] - interface_z);
            let end = z.partition_point(|&v| v <= z_end);
            first_free..end.max(first_free + 4).min(n)
        }
    };
    let free_fit = fit_quadratic(&z[free_window.clone()], &u[free_window.clone()])?;
    let slip = free_fit.value(interface_z);
    let free_gradient = free_fit.slope(interface_z);
    if slip.abs() < 10.0 * noise {
        log::warn!("slip velocity {slip:e} is within ten times the plateau noise {noise:e}");
    }

    let porous_window = match &options.porous_window {
        Some(w) => Some(w.clone()),
        None => {
            let mut start = first_free;
            while start > 0 && u[start - 1] >= 3.0 * um {
                start -= 1;
            }
            (first_free - start >= 6).then_some(start..first_free)
        }
    };
    let porous_fit = match &porous_window {
        Some(w) => Some(fit_two_exponential(&z[w.clone()], &u[w.clone()])?),
        None => {
            log::info!("fewer than 6 planes on the porous side; exponential fit skipped");
            None
        }
    };
    let mu_eff = options.mu_eff.or_else(|| {
        porous_window.as_ref().map(|w| {
            let eps = profile.porosity[w.clone()].iter().sum::<f64>() / w.len() as f64;
            mu / eps
        })
    });
    let porous_gradient = porous_fit.as_ref().map(|f| f.slope(interface_z));
    let sk = k.sqrt();
    let alpha = sk * free_gradient / (slip - um);
    let beta = match (porous_gradient, mu_eff) {
        (Some(e), Some(me)) => Some(sk * (me * e - mu * free_gradient) / (mu * slip)),
        _ => None,
    };
    Ok(InterfaceFit {
        interface_z,
        slip_velocity: slip,
        seepage_velocity: um,
        free_gradient,
        porous_gradient,
        permeability: k,
        alpha,
        beta,
        mu_eff,
        free_fit,
        porous_fit,
        free_window,
        porous_window,
        plateau,
    })
}

/// Three-point moving average, shrinking at the ends.
fn smooth3(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 2).min(v.len());
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Two candidate interface planes:
/// `z_exact`, the lowest plane from which the smoothed porosity stays at
/// one (within 1e-3), and `z_apparent`, the top of the longest porous-side
/// window whose velocity is still fitted by two exponentials with an RMSE
/// below twice that of the smallest window (floored at 1e-9·max|U|).
pub fn interface_position_candidates(profile: &ProfileData) -> Result<(f64, f64)> {
    let n = profile.len();
    let eps = smooth3(&profile.porosity);
    if eps[n - 1] < 1.0 - 1e-3 {
        return Err(Error::Fit("porosity never reaches one; no free region".into()));
    }
    let mut exact = n - 1;
    while exact > 0 && eps[exact - 1] >= 1.0 - 1e-3 {
        exact -= 1;
    }
    if exact == 0 {
        return Err(Error::Fit("all planes are fluid; no porous region".into()));
    }
    let z_exact = profile.z[exact];

    let u = &profile.u_superficial;
    let plateau = plateau_window(&profile.porosity)
        .ok_or_else(|| Error::Fit("no porous plateau for the apparent interface".into()))?;
    let um = u[plateau.clone()].iter().sum::<f64>() / plateau.len() as f64;
    // Porous-side start: lowest plane above the plateau that is at least
    // three times the seepage velocity and still rising.
    let mut start = plateau.end;
    while start < exact && u[start] < 3.0 * um {
        start += 1;
    }
    let u_scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-9 * u_scale;
    let min_len = 6;
    if start + min_len > n {
        return Err(Error::Fit("too few planes above the plateau for an exponential fit".into()));
    }
    let base = fit_two_exponential(&profile.z[start..start + min_len], &u[start..start + min_len])?.rmse;
    let threshold = (2.0 * base).max(floor);
    let mut top = start + min_len;
    while top < n {
        let fit = fit_two_exponential(&profile.z[start..top + 1], &u[start..top + 1])?;
        if fit.rmse > threshold {
            break;
        }
        top += 1;
    }
    let z_apparent = profile.z[top - 1];
    Ok((z_exact, z_apparent))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing() {
        assert_eq!(smooth3(&[0.0, 3.0, 0.0, 3.0]), vec![1.5, 1.0, 2.0, 1.5]);
    }

    #[test]
    fn all_fluid_has_no_interface() {
        let p = ProfileData::from_superficial(vec![0.5, 1.5, 2.5], vec![0.0, 1.0, 0.0], vec![1.0; 3], 3.0);
        assert!(interface_position_candidates(&p).is_err());
    }
}
