use std::f64::consts::PI;
use std::sync::Arc;

use super::{GaugeKind, VectorPotential};
use crate::error::{Error, Result};
use crate::field_models::{Dim, FieldModel};
use crate::quadrature::{self, gauss_legendre_on, Tolerance};
use crate::vec3::Vec3;

/// Polynomial bump `c (1 − |z/R|²)⁴` on `|z| ≤ R` with unit integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    pub dim: Dim,
    pub radius: f64,
    norm: f64,
}

impl Mollifier {
    pub fn bump(dim: Dim, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("mollifier radius {radius} must be positive")));
        }
        let norm = match dim {
            Dim::Two => 5.0 / (PI * radius * radius),
            Dim::Three => 3465.0 / (512.0 * PI * radius.powi(3)),
        };
        Ok(Mollifier { dim, radius, norm })
    }

    /// Default support radius 0.5.
    pub fn default_for(dim: Dim) -> Self {
        Mollifier::bump(dim, 0.5).unwrap()
    }

    pub fn eval(&self, z: Vec3) -> f64 {
        let q = z.norm_sq() / (self.radius * self.radius);
        if q >= 1.0 {
            0.0
        } else {
            let t = 1.0 - q;
            self.norm * t * t * t * t
        }
    }

    /// Product rule for `∫ h(z) f(z) dz` with `level` doublings of the base
    /// resolution. Weights are renormalized to sum to exactly one.
    pub fn rule(&self, level: u32) -> Vec<(Vec3, f64)> {
        let k = 1usize << level;
        let mut nodes = Vec::new();
        match self.dim {
            Dim::Two => {
                let n_phi = 16 * k;
                for (rho, wr) in gauss_legendre_on(6 * k, 0.0, self.radius) {
                    for j in 0..n_phi {
                        let phi = 2.0 * PI * (j as f64 + 0.5) / n_phi as f64;
                        let z = Vec3::from_angle(phi) * rho;
                        nodes.push((z, self.eval(z) * rho * wr * 2.0 * PI / n_phi as f64));
                    }
                }
            }
            Dim::Three => {
                let n_phi = 12 * k;
                let polar = gauss_legendre_on(6 * k, -1.0, 1.0);
                for (rho, wr) in gauss_legendre_on(6 * k, 0.0, self.radius) {
                    for &(ct, wt) in &polar {
                        let st = (1.0 - ct * ct).sqrt();
                        for j in 0..n_phi {
                            let phi = 2.0 * PI * (j as f64 + 0.5) / n_phi as f64;
                            let z = Vec3::new(st * phi.cos(), st * phi.sin(), ct) * rho;
                            nodes.push((z, self.eval(z) * rho * rho * wr * wt * 2.0 * PI / n_phi as f64));
                        }
                    }
                }
            }
        }
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        for n in &mut nodes {
            n.1 /= total;
        }
        nodes
    }
}

/// `∫₀¹ s B(sx + (1−s)z) ds`, graded toward `s = 1` for rough fields.
fn mollified_weight(b: &FieldModel, x: Vec3, z: Vec3, tol: f64) -> Result<Vec3> {
    let d = x - z;
    let len = d.norm();
    if len == 0.0 {
        return Ok(b.eval(x) * 0.5);
    }
    let mut breaks: Vec<f64> = b
        .line_breaks(z, d * (1.0 / len))
        .into_iter()
        .map(|t| t / len)
        .filter(|s| *s > 0.0 && *s < 1.0)
        .collect();
    if !b.is_smooth() {
        breaks.extend((1..=6).map(|k| 1.0 - 0.5f64.powi(k)));
    }
    let est = quadrature::integrate_with_breaks(
        |s: f64| Ok(b.eval(x * s + z * (1.0 - s)) * s),
        0.0,
        1.0,
        &breaks,
        Tolerance::new(tol / (1.0 + len), 1e-12),
    )?;
    Ok(est.value)
}

fn griesinger_eval(b: &FieldModel, rule: &[(Vec3, f64)], x: Vec3, tol: f64) -> Result<Vec3> {
    let mut acc = Vec3::ZERO;
    for &(z, w) in rule {
        if w == 0.0 {
            continue;
        }
        let v = mollified_weight(b, x, z, tol)?;
        acc += v.cross(x - z) * w;
    }
    Ok(acc)
}

fn probe_points(dim: Dim, radius: f64) -> Vec<Vec3> {
    let base = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(-0.7, 1.9, 0.0), Vec3::new(0.3, -3.1, 0.0), Vec3::new(4.5, 2.0, 0.0)];
    base.iter()
        .map(|p| {
            let p = *p * radius.max(1.0);
            if dim == Dim::Three {
                Vec3::new(p.x, p.y, 0.4 * p.x - 0.2)
            } else {
                p
            }
        })
        .collect()
}

/// `A(x) = −∫ h(z) (x − z) × ∫₀¹ s B(sx + (1−s)z) ds dz`.
///
/// Each node `z` of the mollifier rule contributes the transversal potential
/// centered at `z`, so any rule with unit total weight reproduces `curl A = B`
/// exactly; the rule is refined until probe values agree to the field's tolerance.
pub fn griesinger_gauge(b: &FieldModel, h: &Mollifier) -> Result<VectorPotential> {
    if h.dim != b.dim {
        return Err(Error::Shape("mollifier and field dimensions differ".into()));
    }
    let tol = b.default_tol();
    let probes = probe_points(b.dim, h.radius);
    let max_level = if b.dim == Dim::Two { 4 } else { 2 };
    let mut rule = h.rule(0);
    let mut prev: Vec<Vec3> = probes.iter().map(|&x| griesinger_eval(b, &rule, x, tol * 0.1)).collect::<Result<_>>()?;
    let mut change = f64::INFINITY;
    for level in 1..=max_level {
        let next_rule = h.rule(level);
        let next: Vec<Vec3> =
            probes.iter().map(|&x| griesinger_eval(b, &next_rule, x, tol * 0.1)).collect::<Result<_>>()?;
        change = prev.iter().zip(&next).map(|(a, c)| (*a - *c).norm()).fold(0.0, f64::max);
        // keep the cheaper rule once it is accurate
        if change <= tol {
            break;
        }
        rule = next_rule;
        prev = next;
    }
    if change > tol {
        return Err(Error::Quadrature { requested: tol, achieved: change });
    }
    let rule = Arc::new(rule);
    let field = b.clone();
    let dim = b.dim;
    Ok(VectorPotential::new(
        dim,
        GaugeKind::Griesinger,
        format!("griesinger[{}, R_h={}]", b.label, h.radius),
        Some(b.clone()),
        tol,
        move |x| {
            let x = if dim == Dim::Two { Vec3::planar(x.x, x.y) } else { x };
            griesinger_eval(&field, &rule, x, tol * 0.1)
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_models::make_test_field;
    use crate::gauges::transversal_gauge;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mollifier_has_unit_mass() {
        for dim in [Dim::Two, Dim::Three] {
            let h = Mollifier::bump(dim, 0.7).unwrap();
            let total: f64 = match dim {
                Dim::Two => {
                    quadrature::integrate(|r: f64| Ok(2.0 * PI * r * h.eval(Vec3::E1 * r)), 0.0, 0.7, Tolerance::new(1e-12, 1e-12))
                        .unwrap()
                        .value
                }
                Dim::Three => {
                    quadrature::integrate(
                        |r: f64| Ok(4.0 * PI * r * r * h.eval(Vec3::E1 * r)),
                        0.0,
                        0.7,
                        Tolerance::new(1e-12, 1e-12),
                    )
                    .unwrap()
                    .value
                }
            };
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
            assert_eq!(h.eval(Vec3::E1 * 0.7), 0.0);
            let rule_sum: f64 = h.rule(0).iter().map(|n| n.1).sum();
            assert_abs_diff_eq!(rule_sum, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_field_gives_zero() {
        let b = make_test_field("zero", &[]).unwrap();
        let a = griesinger_gauge(&b, &Mollifier::default_for(Dim::Two)).unwrap();
        assert_eq!(a.eval(Vec3::planar(1.0, 2.0)).unwrap(), Vec3::ZERO);
    }

    #[test]
    fn solenoid_far_field() {
        let b = make_test_field("solenoid2d", &[1.0]).unwrap();
        let a = griesinger_gauge(&b, &Mollifier::bump(Dim::Two, 0.25).unwrap()).unwrap();
        let v = a.eval(Vec3::planar(3.0, 0.0)).unwrap();
        assert!((v.norm() * 3.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn differs_from_transversal_by_a_gradient() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let ag = griesinger_gauge(&b, &Mollifier::default_for(Dim::Two)).unwrap();
        let at = transversal_gauge(&b);
        let corners = [Vec3::planar(-1.0, -1.0), Vec3::planar(1.0, -1.0), Vec3::planar(1.0, 1.0), Vec3::planar(-1.0, 1.0)];
        let mut loop_sum = 0.0;
        for k in 0..4 {
            let (p, q) = (corners[k], corners[(k + 1) % 4]);
            let est = quadrature::integrate(
                |t: f64| {
                    let x = p + (q - p) * t;
                    Ok((ag.eval(x)? - at.eval(x)?).dot(q - p))
                },
                0.0,
                1.0,
                Tolerance::new(1e-10, 0.0),
            )
            .unwrap();
            loop_sum += est.value;
        }
        assert!(loop_sum.abs() < 1e-5, "loop integral {loop_sum}");
    }
}
