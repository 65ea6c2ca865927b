use std::f64::consts::PI;

use num_complex::Complex64;

use super::{GaugeKind, VectorPotential};
use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::field_models::{sample_field, Dim, FieldModel};
use crate::grid::{GridSpec, SampledField};
use crate::quadrature::{self, Tolerance};
use crate::vec3::Vec3;

/// Interval of `ρ ≥ 0` where the ray `x + ρê` lies inside the ball of radius `r`.
fn ray_ball(x: Vec3, e: Vec3, r: f64) -> Option<(f64, f64)> {
    let b = x.dot(e);
    let disc = b * b - x.norm_sq() + r * r;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (lo, hi) = ((-b - s).max(0.0), -b + s);
    (hi > lo).then_some((lo, hi))
}

/// `∫₀^∞ B(x + ρê) dρ`.
fn ray_integral(b: &FieldModel, x: Vec3, e: Vec3, tol: f64) -> Result<Vec3> {
    let breaks: Vec<f64> = b.line_breaks(x, e).into_iter().filter(|t| *t > 0.0).collect();
    let tol = Tolerance::new(tol, 1e-12);
    if b.effective_radius.is_finite() {
        match ray_ball(x, e, b.effective_radius) {
            None => Ok(Vec3::ZERO),
            Some((lo, hi)) => Ok(quadrature::integrate_with_breaks(|t: f64| Ok(b.eval(x + e * t)), lo, hi, &breaks, tol)?.value),
        }
    } else {
        Ok(quadrature::integrate_upper(|t: f64| Ok(b.eval(x + e * t)), 0.0, &breaks, tol)?.value)
    }
}

/// Angles (about `x`) of rays tangent to the circles of radius `radii`.
fn tangent_angles(x: Vec3, radii: &[f64]) -> Vec<f64> {
    let r = x.norm();
    let toward = (-x.y).atan2(-x.x);
    let mut out = Vec::new();
    for &j in radii {
        if j < r {
            let half = (j / r).asin();
            out.push(toward - half);
            out.push(toward + half);
        }
    }
    out
}

fn coulomb_point_2d(b: &FieldModel, x: Vec3, tol: f64) -> Result<Vec3> {
    let r = x.norm();
    let toward = if r > 0.0 { (-x.y).atan2(-x.x) } else { 0.0 };
    let mut radii = b.jump_radii.clone();
    let (lo, hi) = if b.effective_radius.is_finite() && b.effective_radius < r {
        radii.push(b.effective_radius);
        let half = (b.effective_radius / r).asin();
        (toward - half, toward + half)
    } else {
        (toward - PI, toward + PI)
    };
    let mut breaks: Vec<f64> = tangent_angles(x, &radii).into_iter().filter(|a| *a > lo && *a < hi).collect();
    let n_init = 8;
    breaks.extend((1..n_init).map(|k| lo + (hi - lo) * k as f64 / n_init as f64));
    let inner_tol = tol * 0.05;
    let est = quadrature::integrate_with_breaks(
        |phi: f64| {
            let e = Vec3::from_angle(phi);
            let beta = ray_integral(b, x, e, inner_tol)?.z;
            Ok(Vec3::planar(e.y * beta, -e.x * beta))
        },
        lo,
        hi,
        &breaks,
        Tolerance::new(tol * 2.0 * PI, 1e-12),
    )?;
    Ok(est.value * (0.5 / PI))
}

fn coulomb_point_3d(b: &FieldModel, x: Vec3, tol: f64) -> Result<Vec3> {
    let inner_tol = tol * 0.05;
    let est = quadrature::integrate_with_breaks(
        |ct: f64| {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            let ring = quadrature::integrate_with_breaks(
                |phi: f64| {
                    let e = Vec3::new(st * phi.cos(), st * phi.sin(), ct);
                    Ok(e.cross(ray_integral(b, x, e, inner_tol)?))
                },
                0.0,
                2.0 * PI,
                &[0.5 * PI, PI, 1.5 * PI],
                Tolerance::new(tol * 0.5, 1e-12),
            )?;
            Ok(ring.value)
        },
        -1.0,
        1.0,
        &[-0.5, 0.0, 0.5],
        Tolerance::new(tol * 4.0 * PI, 1e-12),
    )?;
    Ok(est.value * (0.25 / PI))
}

/// Pointwise Coulomb potential `A(x) = −(1/ω_ν) ∫ (x−y)/|x−y|^ν × B(y) dy`,
/// evaluated in polar coordinates around `x` as `(1/ω_ν) ∫ dΩ ê × ∫₀^∞ B(x+ρê) dρ`.
pub fn coulomb_potential(b: &FieldModel) -> VectorPotential {
    let tol = b.default_tol();
    let field = b.clone();
    let dim = b.dim;
    let a = VectorPotential::new(dim, GaugeKind::Coulomb, format!("coulomb[{}]", b.label), Some(b.clone()), tol, move |x| match dim {
        Dim::Two => coulomb_point_2d(&field, Vec3::planar(x.x, x.y), tol),
        Dim::Three => coulomb_point_3d(&field, x, tol),
    });
    match dim {
        Dim::Two => {
            let field = b.clone();
            a.with_line_integral(move |w, x| coulomb_line_integral_2d(&field, w, x, tol))
        }
        Dim::Three => a,
    }
}

/// `∫ B(sω⊥ + tω) dt`.
pub(super) fn field_xray_2d(b: &FieldModel, omega: Vec3, s: f64, tol: f64) -> Result<f64> {
    let x = omega.perp() * s;
    let mut breaks = b.line_breaks(x, omega);
    let tol = Tolerance::new(tol, 1e-12);
    let f = |t: f64| Ok(b.scalar(x + omega * t));
    let est = if b.effective_radius.is_finite() {
        let r = b.effective_radius;
        if s.abs() >= r {
            return Ok(0.0);
        }
        let half = (r * r - s * s).sqrt();
        quadrature::integrate_with_breaks(f, -half, half, &breaks, tol)?
    } else {
        breaks.push(0.0);
        quadrature::integrate_real_line(f, &breaks, tol)?
    };
    Ok(est.value)
}

/// Full-line integral of the planar Coulomb potential.
///
/// Exchanging the line integral with the convolution, a point flux at
/// transverse offset `s` contributes `−½ sign(d − s)` per unit flux, so
/// `a(ω, x) = ½ (∫_d^∞ X(s) ds − ∫_{−∞}^d X(s) ds)` with `d = x·ω⊥` and `X`
/// the X-ray transform of `B` in direction `ω`.
pub fn coulomb_line_integral_2d(b: &FieldModel, omega: Vec3, x: Vec3, tol: f64) -> Result<f64> {
    let w = Vec3::planar(omega.x, omega.y).normalized();
    let d = x.x * -w.y + x.y * w.x;
    let mut breaks: Vec<f64> = b.jump_radii.iter().flat_map(|r| [-r, *r]).collect();
    breaks.push(0.0);
    let inner = tol * 0.01;
    let xr = |s: f64| field_xray_2d(b, w, s, inner);
    let tol = Tolerance::new(tol, 1e-12);
    let (above, below) = if b.effective_radius.is_finite() {
        let r = b.effective_radius;
        let c = d.clamp(-r, r);
        let up = if c < r { quadrature::integrate_with_breaks(xr, c, r, &breaks, tol)?.value } else { 0.0 };
        let lo = if c > -r { quadrature::integrate_with_breaks(xr, -r, c, &breaks, tol)?.value } else { 0.0 };
        (up, lo)
    } else {
        (
            quadrature::integrate_upper(xr, d, &breaks, tol)?.value,
            quadrature::integrate_lower(xr, d, &breaks, tol)?.value,
        )
    };
    Ok(0.5 * (above - below))
}

/// Coulomb potential on a grid.
///
/// Smooth fields use a zero-padded FFT convolution with the kernel
/// `−(1/ω_ν) z/|z|^ν ×`, whose value on the diagonal cell is zero (the kernel
/// is odd, so its integral over the symmetric cell vanishes); the result is
/// second-order accurate in the spacing. Fields with jump sets are sampled
/// with the pointwise evaluator instead.
pub fn coulomb_gauge(b: &FieldModel, grid: &GridSpec) -> Result<SampledField> {
    if grid.ndim() != b.dim.n() {
        return Err(Error::Shape(format!("{}D field on a {}D grid", b.dim.n(), grid.ndim())));
    }
    if !b.is_smooth() {
        return coulomb_potential(b).sample(grid);
    }
    let reach = grid.inscribed_radius();
    if !(b.effective_radius <= reach) {
        return Err(Error::DomainCoverage(format!(
            "field `{}` has effective radius {} but the grid only covers radius {reach}",
            b.label, b.effective_radius
        )));
    }
    let sampled = sample_field(b, grid)?;
    Ok(convolve(&sampled, b.dim))
}

fn convolve(sampled: &SampledField, dim: Dim) -> SampledField {
    let grid = &sampled.grid;
    let nd = dim.n();
    let pdims: Vec<usize> = grid.dims.iter().map(|n| 2 * n).collect();
    let fft = FftNd::new(&pdims);
    let plen = fft.len();
    let omega_nu = if nd == 2 { 2.0 * PI } else { 4.0 * PI };
    let cell = grid.cell_volume();

    // kernel G(z) = −(1/ω_ν) z / |z|^ν per component
    let mut kernel = vec![vec![Complex64::default(); plen]; nd];
    let pstride: Vec<usize> = (0..nd).map(|a| pdims[a + 1..].iter().product()).collect();
    for flat in 0..plen {
        let mut z = [0.0; 3];
        let mut rem = flat;
        let mut skip = false;
        for a in 0..nd {
            let i = rem / pstride[a];
            rem %= pstride[a];
            let n = grid.dims[a];
            let m = if i < n { i as isize } else if i > n { i as isize - 2 * n as isize } else { skip = true; 0 };
            z[a] = m as f64 * grid.spacing[a];
        }
        if skip {
            continue;
        }
        let zv = Vec3::new(z[0], z[1], z[2]);
        let r2 = zv.norm_sq();
        if r2 == 0.0 {
            continue;
        }
        let scale = -cell / (omega_nu * if nd == 2 { r2 } else { r2 * r2.sqrt() });
        for a in 0..nd {
            kernel[a][flat] = Complex64::new(z[a] * scale, 0.0);
        }
    }
    for k in &mut kernel {
        fft.forward(k);
    }

    let embed = |comp: usize| {
        let mut buf = vec![Complex64::default(); plen];
        for node in 0..grid.len() {
            let idx = grid.multi_index(node);
            let pf = (0..nd).fold(0, |acc, a| acc * pdims[a] + idx[a]);
            buf[pf] = Complex64::new(sampled.get(node, comp), 0.0);
        }
        fft.forward(&mut buf);
        buf
    };
    let extract = |buf: &[Complex64], out: &mut SampledField, comp: usize| {
        for node in 0..grid.len() {
            let idx = grid.multi_index(node);
            let pf = (0..nd).fold(0, |acc, a| acc * pdims[a] + idx[a]);
            out.values[node * nd + comp] = buf[pf].re;
        }
    };

    let mut out = SampledField::zeros(grid.clone(), nd);
    if nd == 2 {
        // (G × (0,0,β)) = (G_y β, −G_x β)
        let beta = embed(0);
        let mut ax: Vec<Complex64> = kernel[1].iter().zip(&beta).map(|(g, b)| g * b).collect();
        let mut ay: Vec<Complex64> = kernel[0].iter().zip(&beta).map(|(g, b)| -g * b).collect();
        fft.inverse(&mut ax);
        fft.inverse(&mut ay);
        extract(&ax, &mut out, 0);
        extract(&ay, &mut out, 1);
    } else {
        let bh: Vec<Vec<Complex64>> = (0..3).map(embed).collect();
        for c in 0..3 {
            let (i, j) = ((c + 1) % 3, (c + 2) % 3);
            let mut acc: Vec<Complex64> =
                (0..plen).map(|k| kernel[i][k] * bh[j][k] - kernel[j][k] * bh[i][k]).collect();
            fft.inverse(&mut acc);
            extract(&acc, &mut out, c);
        }
    }
    out
}

/// Fit of the Coulomb far field `A ≈ (c / 2π|x|²)(−x₂, x₁)` on a circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarFieldCheck {
    pub radius: f64,
    pub coefficient: f64,
    pub residual: f64,
    /// Allowed residual `O(|x|^{−min(μ−1, 2)})` scaled by the field's decay constants.
    pub budget: f64,
    pub within_budget: bool,
}

pub fn coulomb_far_field_check(b: &FieldModel, radius: f64) -> Result<FarFieldCheck> {
    if b.dim != Dim::Two {
        return Err(Error::UnsupportedDimension { found: b.dim.n(), context: "far-field check is planar" });
    }
    if b.support_radius.is_none() && b.mu <= 2.0 {
        return Err(Error::FluxNotFinite { mu: b.mu });
    }
    if radius < 10.0 * b.bound.radius {
        return Err(Error::Domain(format!(
            "radius {radius} is below ten times the decay radius {}",
            b.bound.radius
        )));
    }
    let a = coulomb_potential(b);
    let n = 64;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let x = Vec3::from_angle(2.0 * PI * k as f64 / n as f64) * radius;
        let e = x.perp() * (1.0 / (2.0 * PI * radius * radius));
        samples.push((a.eval(x)?, e));
    }
    let num: f64 = samples.iter().map(|(v, e)| v.dot(*e)).sum();
    let den: f64 = samples.iter().map(|(_, e)| e.norm_sq()).sum();
    let coefficient = num / den;
    let residual = samples.iter().map(|(v, e)| (*v - *e * coefficient).norm()).fold(0.0, f64::max);
    let m = (b.mu - 1.0).min(2.0);
    let r0 = b.bound.radius;
    let budget = 10.0 * (1.0 + coefficient.abs() + b.bound.c) * r0.powf(m - 1.0) / radius.powf(m);
    Ok(FarFieldCheck { radius, coefficient, residual, budget, within_budget: residual <= budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_models::make_test_field;
    use crate::gauges::{pc_counterexample_potential, transversal_gauge};
    use approx::assert_abs_diff_eq;

    #[test]
    fn line_rule_matches_direct_quadrature() {
        let b = make_test_field("solenoid2d", &[1.0]).unwrap();
        let a = coulomb_potential(&b);
        for (th, d) in [(0.3f64, 0.4), (2.0, -1.5), (4.0, 0.99)] {
            let w = Vec3::from_angle(th);
            let x = w.perp() * d + w * 0.7;
            let fast = a.line_integral_override(w, x).unwrap().unwrap();
            let direct = quadrature::integrate_real_line(|t: f64| Ok(w.dot(a.eval(x + w * t)?)), &b.line_breaks(x, w), Tolerance::new(1e-6, 1e-10))
                .unwrap()
                .value;
            assert_abs_diff_eq!(fast, direct, epsilon = 1e-5);
        }
        // beyond the support only the flux remains: ∓Φ/2
        let far = a.line_integral_override(Vec3::E1, Vec3::planar(0.0, 2.0)).unwrap().unwrap();
        assert_abs_diff_eq!(far, -PI / 2.0, epsilon = 1e-6);
    }

    #[test]
    fn radial_field_matches_transversal() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let c = coulomb_potential(&b);
        let v = c.eval(Vec3::planar(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(v.y, (1.0 - (-1.0f64).exp()) / 2.0, epsilon = 1e-7);
        let t = transversal_gauge(&b);
        for x in [Vec3::planar(0.3, -2.0), Vec3::planar(7.0, 1.0), Vec3::planar(0.0, 0.0)] {
            assert!((c.eval(x).unwrap() - t.eval(x).unwrap()).norm() < 1e-7);
        }
    }

    #[test]
    fn counterexample_is_recovered() {
        let b = make_test_field("pc_counterexample2d", &[]).unwrap();
        let c = coulomb_potential(&b);
        let exact = pc_counterexample_potential();
        for x in [Vec3::planar(1.0, 0.0), Vec3::planar(-0.5, 2.0), Vec3::planar(10.0, 3.0)] {
            let d = c.eval(x).unwrap() - exact.eval(x).unwrap();
            assert!(d.norm() < 1e-6, "at {x:?}: {d:?}");
        }
    }

    #[test]
    fn solenoid_pointwise() {
        let b = make_test_field("solenoid2d", &[1.0]).unwrap();
        let c = coulomb_potential(&b);
        // radial: A = (r/2) θ̂ inside, (1/2r) θ̂ outside
        let v = c.eval(Vec3::planar(0.5, 0.0)).unwrap();
        assert_abs_diff_eq!(v.y, 0.25, epsilon = 1e-4);
        let v = c.eval(Vec3::planar(0.0, 2.0)).unwrap();
        assert_abs_diff_eq!(v.x, -0.25, epsilon = 1e-4);
    }

    #[test]
    fn grid_convolution_is_second_order() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let t = transversal_gauge(&b);
        let mut errs = Vec::new();
        for n in [32, 64] {
            let g = GridSpec::square(n, 16.0).unwrap();
            let a = coulomb_gauge(&b, &g).unwrap();
            let exact = t.sample(&g).unwrap();
            errs.push(a.max_diff_where(&exact, |x| x.norm() < 4.0).unwrap());
        }
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
        assert!(errs[1] < 1e-2);
    }

    #[test]
    fn grid_must_cover_support() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let g = GridSpec::square(16, 6.0).unwrap();
        assert!(matches!(coulomb_gauge(&b, &g), Err(Error::DomainCoverage(_))));
        let pc = make_test_field("pc_counterexample2d", &[]).unwrap();
        assert!(matches!(coulomb_gauge(&pc, &GridSpec::square(16, 40.0).unwrap()), Err(Error::DomainCoverage(_))));
    }

    #[test]
    fn far_field_coefficients() {
        for name in ["gaussian2d", "solenoid2d"] {
            let b = make_test_field(name, &[]).unwrap();
            let f = coulomb_far_field_check(&b, 50.0).unwrap();
            assert!((f.coefficient - PI).abs() < 0.01 * PI, "{name}: {f:?}");
            assert!(f.within_budget);
        }
        let z = coulomb_far_field_check(&make_test_field("zero", &[]).unwrap(), 50.0).unwrap();
        assert_eq!((z.coefficient, z.residual), (0.0, 0.0));
    }
}
