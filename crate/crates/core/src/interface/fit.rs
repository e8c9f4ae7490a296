//! Least-squares fits of profile segments: a quadratic for the free region
//! and a sum of two exponentials for the porous side of the interface.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `U(z) = c₀ + c₁z + c₂z²`, stored in centred and scaled form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    center: f64,
    scale: f64,
    /// Coefficients in `t = (z − center)/scale`.
    d: [f64; 3],
    pub rmse: f64,
    pub points: usize,
}

impl QuadraticFit {
    pub fn value(&self, z: f64) -> f64 {
        let t = (z - self.center) / self.scale;
        self.d[0] + t * (self.d[1] + t * self.d[2])
    }

    pub fn slope(&self, z: f64) -> f64 {
        let t = (z - self.center) / self.scale;
        (self.d[1] + 2.0 * t * self.d[2]) / self.scale
    }

    /// `(c₀, c₁, c₂)` in the original coordinate.
    pub fn coefficients(&self) -> [f64; 3] {
        let (m, s) = (self.center, self.scale);
        let [d0, d1, d2] = self.d;
        let c2 = d2 / (s * s);
        let c1 = d1 / s - 2.0 * m * c2;
        let c0 = d0 - d1 * m / s + d2 * m * m / (s * s);
        [c0, c1, c2]
    }
}

fn rmse(residuals: impl Iterator<Item = f64>, n: usize) -> f64 {
    (residuals.map(|r| r * r).sum::<f64>() / n as f64).sqrt()
}

/// Ordinary least squares for a quadratic through `(z, u)`.
pub fn fit_quadratic(z: &[f64], u: &[f64]) -> Result<QuadraticFit> {
    let n = z.len();
    if n != u.len() {
        return Err(Error::Fit("z and U lengths differ".into()));
    }
    if n < 4 {
        return Err(Error::Fit(format!("quadratic fit needs at least 4 points, got {n}")));
    }
    let center = z.iter().sum::<f64>() / n as f64;
    let scale = z.iter().map(|v| (v - center).abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::Fit("rank-deficient window: all z coincide".into()));
    }
    let a = DMatrix::from_fn(n, 3, |i, j| ((z[i] - center) / scale).powi(j as i32));
    let b = DVector::from_column_slice(u);
    let qr = a.clone().qr();
    let r = qr.r();
    let diag_max = (0..3).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..3).any(|i| r[(i, i)].abs() <= 1e-12 * diag_max) {
        return Err(Error::Fit("rank-deficient window".into()));
    }
    let qtb = qr.q().transpose() * &b;
    let d = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Fit("rank-deficient window".into()))?;
    let fit = QuadraticFit {
        center,
        scale,
        d: [d[0], d[1], d[2]],
        rmse: 0.0,
        points: n,
    };
    let rmse = rmse(z.iter().zip(u).map(|(&zi, &ui)| ui - fit.value(zi)), n);
    Ok(QuadraticFit { rmse, ..fit })
}

/// `U(z) = A e^{a(z−z_ref)} + B e^{b(z−z_ref)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub amplitude_a: f64,
    pub rate_a: f64,
    pub amplitude_b: f64,
    pub rate_b: f64,
    /// Reference coordinate of the amplitudes.
    pub z_ref: f64,
    pub rmse: f64,
    pub iterations: usize,
    /// False when the polish stopped at the iteration limit; the parameters
    /// are then the best found.
    pub converged: bool,
    pub points: usize,
}

impl ExponentialFit {
    pub fn value(&self, z: f64) -> f64 {
        let t = z - self.z_ref;
        self.amplitude_a * (self.rate_a * t).exp() + self.amplitude_b * (self.rate_b * t).exp()
    }

    pub fn slope(&self, z: f64) -> f64 {
        let t = z - self.z_ref;
        self.amplitude_a * self.rate_a * (self.rate_a * t).exp() + self.amplitude_b * self.rate_b * (self.rate_b * t).exp()
    }

    /// `(A, a, B, b)` with amplitudes referred to `z = 0`.
    pub fn coefficients(&self) -> [f64; 4] {
        [
            self.amplitude_a * (-self.rate_a * self.z_ref).exp(),
            self.rate_a,
            self.amplitude_b * (-self.rate_b * self.z_ref).exp(),
            self.rate_b,
        ]
    }
}

/// Amplitudes minimising the residual for fixed rates, and its sum of squares.
fn project(t: &[f64], u: &[f64], a: f64, b: f64) -> Option<(f64, f64, f64)> {
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&ti, &ui) in t.iter().zip(u) {
        let (p, q) = ((a * ti).exp(), (b * ti).exp());
        s11 += p * p;
        s12 += p * q;
        s22 += q * q;
        r1 += p * ui;
        r2 += q * ui;
    }
    let det = s11 * s22 - s12 * s12;
    let (amp_a, amp_b) = if det > 1e-12 * s11 * s22 {
        ((s22 * r1 - s12 * r2) / det, (s11 * r2 - s12 * r1) / det)
    } else {
        // Nearly collinear basis: single exponential.
        (r1 / s11, 0.0)
    };
    let ss: f64 = t
        .iter()
        .zip(u)
        .map(|(&ti, &ui)| {
            let r = ui - amp_a * (a * ti).exp() - amp_b * (b * ti).exp();
            r * r
        })
        .sum();
    ss.is_finite().then_some((amp_a, amp_b, ss))
}

/// `cosh(√δ t)`, `sinh(√δ t)/√δ` and their δ-derivatives, continued to
/// δ ≤ 0 (cos/sin) and evaluated by series near δ t² = 0.
fn hyperbolic(delta: f64, t: f64) -> (f64, f64, f64, f64) {
    let x = delta * t * t;
    let (c, sh, dsh) = if x.abs() < 1e-3 {
        (
            1.0 + x / 2.0 + x * x / 24.0,
            t * (1.0 + x / 6.0 + x * x / 120.0),
            t * t * t * (1.0 / 6.0 + x / 60.0 + x * x / 1680.0),
        )
    } else if delta > 0.0 {
        let d = delta.sqrt();
        let (c, sh) = ((d * t).cosh(), (d * t).sinh() / d);
        (c, sh, (t * c - sh) / (2.0 * delta))
    } else {
        let d = (-delta).sqrt();
        let (c, sh) = ((d * t).cos(), (d * t).sin() / d);
        (c, sh, (t * c - sh) / (2.0 * delta))
    };
    (c, sh, 0.5 * t * sh, dsh)
}

/// Levenberg–Marquardt with Marquardt scaling on residuals `r(p)` and
/// their Jacobian `−∂r/∂p`. Stops when `|Jᵀr| < 1e-12`, when no damped step
/// reduces the residual, or after 200 iterations (reported unconverged).
fn levenberg_marquardt<F>(mut p: DVector<f64>, model: F) -> (DVector<f64>, usize, bool)
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let m = p.len();
    let (mut r, mut j) = model(&p);
    let mut ss = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < 200 {
        let jt = j.transpose();
        let g = &jt * &r;
        if g.norm() < 1e-12 {
            return (p, iterations, true);
        }
        iterations += 1;
        let jtj = &jt * &j;
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for a in 0..m {
                damped[(a, a)] += lambda * jtj[(a, a)].max(1e-30);
            }
            let Some(step) = damped.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &p + step;
            let (tr, tj) = model(&trial);
            let ts = tr.norm_squared();
            if ts.is_finite() && ts < ss {
                p = trial;
                r = tr;
                j = tj;
                ss = ts;
                lambda = (lambda * 0.3).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            return (p, iterations, true);
        }
    }
    (p, iterations, false)
}

/// Nonlinear least squares for two exponentials: a grid of rate pairs with
/// the amplitudes solved exactly, followed by a Levenberg–Marquardt polish
/// of all four parameters.
pub fn fit_two_exponential(z: &[f64], u: &[f64]) -> Result<ExponentialFit> {
    let n = z.len();
    if n != u.len() {
        return Err(Error::Fit("z and U lengths differ".into()));
    }
    if n < 6 {
        return Err(Error::Fit(format!("exponential fit needs at least 6 points, got {n}")));
    }
    let z_ref = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = z_ref - z.iter().copied().fold(f64::INFINITY, f64::min);
    if !(span > 0.0) {
        return Err(Error::Fit("window has zero extent".into()));
    }
    let t: Vec<f64> = z.iter().map(|&v| v - z_ref).collect();
    let u_scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if u_scale == 0.0 {
        return Ok(ExponentialFit {
            amplitude_a: 0.0,
            rate_a: 0.0,
            amplitude_b: 0.0,
            rate_b: 0.0,
            z_ref,
            rmse: 0.0,
            iterations: 0,
            converged: true,
            points: n,
        });
    }

    let mut rates = vec![0.0];
    for i in 0..40 {
        let r = 0.05 * (400.0f64).powf(i as f64 / 39.0) / span;
        rates.push(r);
        rates.push(-r);
    }
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0, 0.0);
    for (i, &a) in rates.iter().enumerate() {
        for &b in &rates[i..] {
            if let Some((pa, pb, ss)) = project(&t, u, a, b) {
                if ss < best.0 {
                    best = (ss, pa, a, pb, b);
                }
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Fit("no finite starting point".into()));
    }
    let y: Vec<f64> = u.iter().map(|v| v / u_scale).collect();
    let two = |p: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 4);
        for (i, (&ti, &yi)) in t.iter().zip(&y).enumerate() {
            let (ea, eb) = ((p[1] * ti).exp(), (p[3] * ti).exp());
            r[i] = yi - p[0] * ea - p[2] * eb;
            j[(i, 0)] = ea;
            j[(i, 1)] = p[0] * ti * ea;
            j[(i, 2)] = eb;
            j[(i, 3)] = p[2] * ti * eb;
        }
        (r, j)
    };
    let start = DVector::from_vec(vec![best.1 / u_scale, best.2, best.3 / u_scale, best.4]);
    let (mut p, mut iterations, mut converged) = levenberg_marquardt(start, two);
    let mut ss = two(&p).0.norm_squared();

    // Polish again around the mean rate: e^{mt}[S cosh(dt) + P sinh(dt)/d]
    // with δ = d² stays well conditioned when the two rates nearly coincide.
    let mean_form = |p: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 4);
        for (i, (&ti, &yi)) in t.iter().zip(&y).enumerate() {
            let (c, sh, dc, dsh) = hyperbolic(p[3], ti);
            let e = (p[2] * ti).exp();
            let v = e * (p[0] * c + p[1] * sh);
            r[i] = yi - v;
            j[(i, 0)] = e * c;
            j[(i, 1)] = e * sh;
            j[(i, 2)] = ti * v;
            j[(i, 3)] = e * (p[0] * dc + p[1] * dsh);
        }
        (r, j)
    };
    {
        let (m, d) = (0.5 * (p[1] + p[3]), 0.5 * (p[3] - p[1]));
        let start = DVector::from_vec(vec![p[0] + p[2], (p[2] - p[0]) * d, m, d * d]);
        let (q, it, conv) = levenberg_marquardt(start, mean_form);
        let ssq = mean_form(&q).0.norm_squared();
        if q[3] > 0.0 && ssq < ss {
            let d = q[3].sqrt();
            let candidate = DVector::from_vec(vec![
                0.5 * (q[0] - q[1] / d),
                q[2] - d,
                0.5 * (q[0] + q[1] / d),
                q[2] + d,
            ]);
            let ssc = two(&candidate).0.norm_squared();
            if ssc.is_finite() && ssc < ss {
                p = candidate;
                ss = ssc;
                iterations += it;
                converged = conv;
            }
        }
    }

    // Two nearly equal rates may be splitting a single exponential; keep
    // the single-term fit when it is as good.
    let one = |p: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 2);
        for (i, (&ti, &yi)) in t.iter().zip(&y).enumerate() {
            let ea = (p[1] * ti).exp();
            r[i] = yi - p[0] * ea;
            j[(i, 0)] = ea;
            j[(i, 1)] = p[0] * ti * ea;
        }
        (r, j)
    };
    let amp = p[0] + p[2];
    if amp != 0.0 {
        let rate = (p[0] * p[1] + p[2] * p[3]) / amp;
        let (q, it, conv) = levenberg_marquardt(DVector::from_vec(vec![amp, rate]), one);
        let ss1 = one(&q).0.norm_squared();
        let negligible = 1e-24 * n as f64;
        if ss1.is_finite() && (ss1 <= ss.max(negligible) || ss1 <= negligible) {
            p = DVector::from_vec(vec![q[0], q[1], 0.0, 0.0]);
            ss = ss1;
            iterations += it;
            converged = conv;
        }
    }
    debug_assert!(ss.is_finite());
    if !converged {
        log::warn!("two-exponential fit stopped after {iterations} iterations");
    }
    let fit = ExponentialFit {
        amplitude_a: p[0] * u_scale,
        rate_a: p[1],
        amplitude_b: p[2] * u_scale,
        rate_b: p[3],
        z_ref,
        rmse: 0.0,
        iterations,
        converged,
        points: n,
    };
    let rmse = rmse(z.iter().zip(u).map(|(&zi, &ui)| ui - fit.value(zi)), n);
    Ok(ExponentialFit { rmse, ..fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_parabola() {
        let c = [1.9593e-3, 2.78421e-4, -4.48066e-6];
        let z: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let u: Vec<f64> = z.iter().map(|z| c[0] + c[1] * z + c[2] * z * z).collect();
        let f = fit_quadratic(&z, &u).unwrap();
        let got = f.coefficients();
        for i in 0..3 {
            assert!((got[i] - c[i]).abs() <= 1e-12 * c[i].abs().max(1e-3), "{i}: {} vs {}", got[i], c[i]);
        }
        assert!(f.rmse <= 1e-14);
    }

    #[test]
    fn residuals_are_orthogonal_to_the_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z: Vec<f64> = (0..25).map(|i| 3.0 + 0.5 * i as f64).collect();
        let u: Vec<f64> = z.iter().map(|z| 1e-3 * z - 2e-5 * z * z + rng.gen_range(-1e-5..1e-5)).collect();
        let f = fit_quadratic(&z, &u).unwrap();
        for p in 0..3 {
            let dot: f64 = z.iter().zip(&u).map(|(&zi, &ui)| (ui - f.value(zi)) * zi.powi(p)).sum();
            let scale: f64 = z.iter().map(|zi| zi.powi(p).abs()).sum::<f64>() * 1e-5;
            assert!(dot.abs() < 1e-10 * scale.max(1e-10), "basis {p}: {dot}");
        }
    }

    #[test]
    fn noise_sets_the_residual_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z: Vec<f64> = (0..400).map(|i| i as f64 * 0.1).collect();
        let u: Vec<f64> = z.iter().map(|z| 2e-3 + 1e-4 * z - 3e-6 * z * z + rng.gen_range(-1e-6..1e-6)).collect();
        let f = fit_quadratic(&z, &u).unwrap();
        // Uniform noise of half-width 1e-6 has RMS 1e-6/√3.
        let rms = 1e-6 / 3f64.sqrt();
        assert!(f.rmse > 0.5 * rms && f.rmse < 1.5 * rms, "{}", f.rmse);
    }

    #[test]
    fn rank_deficient_windows() {
        assert!(fit_quadratic(&[1.0, 2.0, 3.0], &[0.0; 3]).is_err());
        assert!(fit_quadratic(&[1.0; 5], &[0.0; 5]).is_err());
        assert!(fit_quadratic(&[1.0, 1.0, 2.0, 2.0], &[0.0; 4]).is_err());
    }

    #[test]
    fn single_exponential() {
        let z: Vec<f64> = (0..20).map(|i| -(i as f64)).collect();
        let u: Vec<f64> = z.iter().map(|z| 0.02 * (0.3 * z).exp()).collect();
        let f = fit_two_exponential(&z, &u).unwrap();
        assert!(f.rmse <= 1e-12, "{}", f.rmse);
        let [a_amp, a, b_amp, b] = f.coefficients();
        // Either term may carry the exponential.
        let (amp, rate, other) = if (a - 0.3).abs() < (b - 0.3).abs() { (a_amp, a, b_amp) } else { (b_amp, b, a_amp) };
        assert!((amp - 0.02).abs() < 1e-8 && (rate - 0.3).abs() < 1e-6 && other.abs() < 1e-8, "{:?}", f.coefficients());
    }

    #[test]
    fn constant_plus_exponential() {
        let z: Vec<f64> = (0..30).map(|i| -0.5 * i as f64).collect();
        let u: Vec<f64> = z.iter().map(|z| 1e-4 + 3e-3 * (0.45 * z).exp()).collect();
        let f = fit_two_exponential(&z, &u).unwrap();
        assert!(f.rmse <= 1e-14, "{}", f.rmse);
        assert!((f.slope(0.0) - 0.45 * 3e-3).abs() < 1e-12);
    }
}
