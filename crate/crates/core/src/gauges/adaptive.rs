use std::f64::consts::PI;

use super::{coulomb_potential, GaugeKind, VectorPotential};
use crate::error::{Error, Result};
use crate::field_models::{total_flux, Dim, FieldModel};
use crate::quadrature::{self, Tolerance};
use crate::vec3::Vec3;

/// Half-angle of the sectors around `±ω` where the far field is removed.
pub const SECTOR_HALF_ANGLE_DEG: f64 = 15.0;
/// Width of the C² blend at the sector edges.
pub const SECTOR_BLEND_DEG: f64 = 10.0;
/// Half-width of the compensating lobes, centered 45° and 135° clockwise from ω.
const LOBE_HALF_WIDTH_DEG: f64 = 15.0;

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

fn smoothstep_deriv(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

/// `∫₀^t smoothstep`.
fn smoothstep_integral(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(4) * (2.5 + t * (-3.0 + t))
}

fn wrap(theta: f64, lo: f64) -> f64 {
    lo + (theta - lo).rem_euclid(2.0 * PI)
}

/// The 2π-periodic angular profile `f` with `f′ = (Φ/2π) g`: `g = 1` on the
/// sectors around `arg(±ω)`, blended to zero, and balanced by two negative
/// lobes in the half-plane clockwise from ω so that `∫ g = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorProfile {
    pub theta0: f64,
    pub flux: f64,
    a: f64,
    b: f64,
    w: f64,
    lobe_scale: f64,
}

impl SectorProfile {
    pub fn new(omega: Vec3, flux: f64) -> Self {
        let a = SECTOR_HALF_ANGLE_DEG.to_radians();
        let b = (SECTOR_HALF_ANGLE_DEG + SECTOR_BLEND_DEG).to_radians();
        let w = LOBE_HALF_WIDTH_DEG.to_radians();
        let sector_area = a + b;
        let lobe_area = w * 32.0 / 35.0;
        SectorProfile { theta0: omega.y.atan2(omega.x), flux, a, b, w, lobe_scale: sector_area / lobe_area }
    }

    fn base(&self) -> f64 {
        self.theta0 - 0.5 * PI
    }

    fn sector(&self, d: f64) -> f64 {
        let ad = d.abs();
        if ad <= self.a {
            1.0
        } else if ad < self.b {
            smoothstep((self.b - ad) / (self.b - self.a))
        } else {
            0.0
        }
    }

    fn sector_cumulative(&self, d: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        let left = |d: f64| {
            if d <= -b {
                0.0
            } else if d < -a {
                (b - a) * smoothstep_integral((b + d) / (b - a))
            } else {
                0.5 * (b - a) + (d + a)
            }
        };
        if d <= 0.0 {
            left(d)
        } else {
            (a + b) - left(-d)
        }
    }

    fn lobe(&self, d: f64) -> f64 {
        let u = d / self.w;
        if u.abs() >= 1.0 {
            0.0
        } else {
            let t = 1.0 - u * u;
            t * t * t
        }
    }

    fn lobe_cumulative(&self, d: f64) -> f64 {
        let u = (d / self.w).clamp(-1.0, 1.0);
        let q = u - u.powi(3) + 0.6 * u.powi(5) - u.powi(7) / 7.0;
        self.w * (q + 16.0 / 35.0)
    }

    fn centers(&self) -> [(f64, f64); 4] {
        let t = self.theta0;
        [(t, 1.0), (t + PI, 1.0), (t - 0.25 * PI, -self.lobe_scale), (t - 0.75 * PI, -self.lobe_scale)]
    }

    /// Weight `g(θ)`.
    pub fn g(&self, theta: f64) -> f64 {
        self.centers()
            .iter()
            .enumerate()
            .map(|(k, &(c, s))| {
                let d = wrap(theta - c, -PI);
                s * if k < 2 { self.sector(d) } else { self.lobe(d) }
            })
            .sum()
    }

    /// `f(θ) = (Φ/2π) ∫_{θ₀−π/2}^{θ} g`.
    pub fn f(&self, theta: f64) -> f64 {
        let base = self.base();
        let th = wrap(theta, base);
        let total: f64 = self
            .centers()
            .iter()
            .enumerate()
            .map(|(k, &(c, s))| {
                // every bump's support lies strictly inside [base, base + 2π)
                let d = th - wrap(c, base);
                s * if k < 2 { self.sector_cumulative(d) } else { self.lobe_cumulative(d) }
            })
            .sum();
        self.flux / (2.0 * PI) * total
    }

    pub fn f_prime(&self, theta: f64) -> f64 {
        self.flux / (2.0 * PI) * self.g(theta)
    }
}

/// `χ(r)`: 0 for `r ≤ 1`, 1 for `r ≥ 3`, C² in between.
fn cutoff(r: f64) -> (f64, f64) {
    let t = 0.5 * (r - 1.0);
    (smoothstep(t), 0.5 * smoothstep_deriv(t))
}

/// `A^ω = A_coulomb − ∇λ` with `λ = χ(|x|) f(arg x)`; inside the sectors of
/// half-angle 15° around `±ω` the `1/|x|` Coulomb tail is removed.
/// For vanishing flux the Coulomb gauge is returned unchanged.
pub fn adaptive_gauge(b: &FieldModel, omega: Vec3) -> Result<VectorPotential> {
    if b.dim != Dim::Two {
        return Err(Error::UnsupportedDimension { found: b.dim.n(), context: "sector-adapted gauges are planar" });
    }
    let w = Vec3::planar(omega.x, omega.y);
    if !(w.norm() > 0.0) {
        return Err(Error::Config("adaptive gauge needs a nonzero direction".into()));
    }
    let w = w.normalized();
    let flux = match b.known_flux {
        Some(f) => f,
        None => total_flux(b)?,
    };
    let coulomb = coulomb_potential(b);
    if flux.abs() < 1e-12 {
        return Ok(coulomb);
    }
    let profile = SectorProfile::new(w, flux);
    let coulomb_line = coulomb.clone();
    let tol = coulomb.tol;
    Ok(VectorPotential::new(
        Dim::Two,
        GaugeKind::Adaptive(w),
        format!("adaptive[{}, ({:.4},{:.4})]", b.label, w.x, w.y),
        Some(b.clone()),
        coulomb.tol,
        move |x| {
            let a = coulomb.eval(x)?;
            Ok(a - sector_gradient(&profile, x))
        },
    )
    .with_line_integral(move |omega, x| {
        let base = coulomb_line.line_integral_override(omega, x).expect("planar Coulomb carries a line rule")?;
        let w = Vec3::planar(omega.x, omega.y).normalized();
        let x = Vec3::planar(x.x, x.y);
        let t0 = -x.dot(w);
        let est = quadrature::integrate_real_line(
            |t: f64| Ok(w.dot(sector_gradient(&profile, x + w * t))),
            &[t0],
            Tolerance::new(tol, 1e-12),
        )?;
        Ok(base - est.value)
    }))
}

/// `∇(χ(r) f(θ))`.
fn sector_gradient(p: &SectorProfile, x: Vec3) -> Vec3 {
    let r = (x.x * x.x + x.y * x.y).sqrt();
    let (chi, dchi) = cutoff(r);
    if chi == 0.0 && dchi == 0.0 {
        return Vec3::ZERO;
    }
    let theta = x.y.atan2(x.x);
    let rhat = Vec3::planar(x.x / r, x.y / r);
    rhat * (dchi * p.f(theta)) + rhat.perp() * (chi * p.f_prime(theta) / r)
}

impl SectorProfile {
    /// The gauge function `λ = χ(|x|) f(arg x)` added by the adaptation (with a minus sign).
    pub fn lambda(&self, x: Vec3) -> f64 {
        let r = (x.x * x.x + x.y * x.y).sqrt();
        cutoff(r).0 * self.f(x.y.atan2(x.x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_models::make_test_field;
    use approx::assert_abs_diff_eq;

    #[test]
    fn profile_is_periodic_and_consistent() {
        for theta0 in [0.0, 1.0, -2.5] {
            let p = SectorProfile::new(Vec3::from_angle(theta0), 2.0 * PI);
            // f′ = g: compare f against quadrature of g
            let base = theta0 - 0.5 * PI;
            for k in 0..40 {
                let th = base + 2.0 * PI * k as f64 / 40.0;
                let q = quadrature::integrate(
                    |t: f64| Ok(p.g(t)),
                    base,
                    th,
                    Tolerance::new(1e-12, 0.0),
                )
                .unwrap()
                .value;
                assert_abs_diff_eq!(p.f(th), q, epsilon = 1e-9);
            }
            assert_abs_diff_eq!(p.f(base), p.f(base + 2.0 * PI), epsilon = 1e-12);
            assert_abs_diff_eq!(p.f(base + 2.0 * PI - 1e-9), p.f(base), epsilon = 1e-7);
            assert_abs_diff_eq!(p.g(theta0), 1.0, epsilon = 0.0);
            assert_abs_diff_eq!(p.g(theta0 + PI), 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(p.g(theta0 + 0.5 * PI), 0.0, epsilon = 0.0);
        }
    }

    #[test]
    fn shift_between_opposite_directions() {
        let p = SectorProfile::new(Vec3::E1, PI);
        let area = (SECTOR_HALF_ANGLE_DEG + SECTOR_HALF_ANGLE_DEG + SECTOR_BLEND_DEG).to_radians();
        assert_abs_diff_eq!(p.f(PI) - p.f(0.0), PI / (2.0 * PI) * area, epsilon = 1e-12);
    }

    #[test]
    fn sector_cancels_far_field() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let a = adaptive_gauge(&b, Vec3::E1).unwrap();
        let inside = a.eval(Vec3::planar(50.0, 0.0)).unwrap();
        assert!(inside.norm() <= 1e-3, "{inside:?}");
        let c = coulomb_potential(&b).eval(Vec3::planar(50.0, 0.0)).unwrap();
        assert_abs_diff_eq!(c.norm(), 0.01, epsilon = 1e-6);
        let ortho = a.eval(Vec3::planar(0.0, 50.0)).unwrap();
        assert!((ortho.norm() - 0.01).abs() <= 0.0025);
    }

    #[test]
    fn zero_flux_returns_coulomb() {
        let b = make_test_field("zero", &[]).unwrap();
        assert_eq!(adaptive_gauge(&b, Vec3::E1).unwrap().kind, GaugeKind::Coulomb);
    }
}
