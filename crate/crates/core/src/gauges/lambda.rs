use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use super::VectorPotential;
use crate::error::{Error, Result};
use crate::field_models::Dim;
use crate::quadrature::{self, Tolerance};
use crate::vec3::Vec3;

pub type LambdaFn = Arc<dyn Fn(Vec3) -> Result<f64> + Send + Sync>;

/// Radial limit `Λ(ω)` with its convergence certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaLimit {
    pub value: f64,
    /// Radii actually sampled (the last three).
    pub radii: [f64; 3],
    pub samples: [f64; 3],
    /// `|λ(4R₀ω) − λ(2R₀ω)|`.
    pub certificate: f64,
    pub accelerated: bool,
}

/// A gauge function `λ` with cached radial limits `Λ(ω)`.
#[derive(Clone)]
pub struct GaugeFunction {
    pub dim: Dim,
    pub label: String,
    /// Length scale beyond which the underlying field is in its decay regime.
    pub decay_radius: f64,
    pub tol: f64,
    eval: LambdaFn,
    cache: Arc<Mutex<HashMap<[u64; 3], LambdaLimit>>>,
}

impl fmt::Debug for GaugeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaugeFunction").field("label", &self.label).field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl GaugeFunction {
    pub fn new(
        dim: Dim,
        label: impl Into<String>,
        decay_radius: f64,
        tol: f64,
        eval: impl Fn(Vec3) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        GaugeFunction {
            dim,
            label: label.into(),
            decay_radius,
            tol,
            eval: Arc::new(eval),
            cache: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    /// An explicitly given `λ`.
    pub fn injected(dim: Dim, label: impl Into<String>, decay_radius: f64, f: impl Fn(Vec3) -> f64 + Send + Sync + 'static) -> Self {
        GaugeFunction::new(dim, label, decay_radius, 1e-12, move |x| Ok(f(x)))
    }

    #[inline]
    pub fn eval(&self, x: Vec3) -> Result<f64> {
        (self.eval)(x)
    }

    /// Central-difference gradient with step `h`.
    pub fn gradient(&self, x: Vec3, h: f64) -> Result<Vec3> {
        let axes: &[Vec3] = if self.dim == Dim::Two { &[Vec3::E1, Vec3::E2] } else { &[Vec3::E1, Vec3::E2, Vec3::E3] };
        let mut g = [0.0; 3];
        for (k, e) in axes.iter().enumerate() {
            g[k] = (self.eval(x + *e * h)? - self.eval(x - *e * h)?) / (2.0 * h);
        }
        Ok(Vec3::new(g[0], g[1], g[2]))
    }
}

/// Loop integral of a vector field along a closed polygon.
fn polygon_circulation(f: &dyn Fn(Vec3) -> Result<Vec3>, corners: &[Vec3], tol: f64) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..corners.len() {
        let (p, q) = (corners[k], corners[(k + 1) % corners.len()]);
        let d = q - p;
        total += quadrature::integrate(|t: f64| Ok(f(p + d * t)?.dot(d)), 0.0, 1.0, Tolerance::new(tol, 1e-12))?.value;
    }
    Ok(total)
}

fn test_loops(dim: Dim) -> Vec<Vec<Vec3>> {
    let square = |c: Vec3, h: f64, u: Vec3, v: Vec3| vec![c - u * h - v * h, c + u * h - v * h, c + u * h + v * h, c - u * h + v * h];
    let circle = |c: Vec3, r: f64, u: Vec3, v: Vec3| {
        (0..24)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 24.0;
                c + u * (r * t.cos()) + v * (r * t.sin())
            })
            .collect::<Vec<_>>()
    };
    let (e1, e2, e3) = (Vec3::E1, Vec3::E2, Vec3::E3);
    match dim {
        Dim::Two => vec![
            square(Vec3::ZERO, 1.0, e1, e2),
            square(Vec3::planar(1.0, 1.0), 0.5, e1, e2),
            circle(Vec3::ZERO, 3.0, e1, e2),
            circle(Vec3::planar(-2.0, 1.0), 0.5, e1, e2),
        ],
        Dim::Three => vec![
            square(Vec3::ZERO, 1.0, e1, e2),
            square(Vec3::new(0.5, 0.0, 0.3), 0.7, e2, e3),
            circle(Vec3::new(0.0, 0.4, 0.0), 1.5, e3, e1),
            circle(Vec3::new(-1.0, 1.0, 0.5), 0.6, e1, (e2 + e3).normalized()),
        ],
    }
}

/// Largest loop integral of `A′ − A` over the four test loops.
pub fn loop_residual(a: &VectorPotential, a_prime: &VectorPotential) -> Result<f64> {
    let diff = |x: Vec3| -> Result<Vec3> { Ok(a_prime.eval(x)? - a.eval(x)?) };
    let tol = 0.01 * (a.tol + a_prime.tol).max(1e-10);
    let mut worst: f64 = 0.0;
    for corners in test_loops(a.dim) {
        worst = worst.max(polygon_circulation(&diff, &corners, tol)?.abs());
    }
    Ok(worst)
}

/// `λ(x) = ∫₀¹ x·(A′ − A)(sx) ds` for a gauge pair, so that `A′ = A + ∇λ` and `λ(0) = 0`.
pub fn extract_lambda(a: &VectorPotential, a_prime: &VectorPotential) -> Result<GaugeFunction> {
    if a.dim != a_prime.dim {
        return Err(Error::Shape("potentials have different dimensions".into()));
    }
    let residual = loop_residual(a, a_prime)?;
    let loop_tol = (1e-5f64).max(100.0 * (a.tol + a_prime.tol));
    if residual > loop_tol {
        return Err(Error::NotAGaugePair { residual, tol: loop_tol });
    }
    let decay_radius = [a.source.as_ref(), a_prime.source.as_ref()]
        .into_iter()
        .flatten()
        .map(|b| b.bound.radius)
        .fold(1.0, f64::max);
    let tol = a.tol + a_prime.tol;
    let (a, ap) = (a.clone(), a_prime.clone());
    Ok(GaugeFunction::new(a.dim, format!("lambda[{} -> {}]", a.label, ap.label), decay_radius, tol, move |x| {
        if x.norm() == 0.0 {
            return Ok(0.0);
        }
        let mut breaks = a.line_breaks(Vec3::ZERO, x.normalized());
        breaks.extend(ap.line_breaks(Vec3::ZERO, x.normalized()));
        let r = x.norm();
        let breaks: Vec<f64> = breaks.into_iter().map(|t| t / r).collect();
        let est = quadrature::integrate_with_breaks(
            |s: f64| Ok(x.dot(ap.eval(x * s)? - a.eval(x * s)?)),
            0.0,
            1.0,
            &breaks,
            Tolerance::new(tol, 1e-12),
        )?;
        Ok(est.value)
    }))
}

/// Convergence tolerance for radial limits.
pub const LAMBDA_TOL: f64 = 1e-4;

/// `Λ(ω) = lim λ(Rω)`, sampled on `R₀, 2R₀, 4R₀` with `R₀ = max(10 R_decay, 20)`
/// and Richardson-accelerated when the increments contract geometrically.
/// The sequence is extended by further doublings only while increments shrink.
pub fn asymptotic_lambda(lambda: &GaugeFunction, omega: Vec3) -> Result<LambdaLimit> {
    let w = omega.normalized();
    let key = [w.x.to_bits(), w.y.to_bits(), w.z.to_bits()];
    if let Some(hit) = lambda.cache.lock().unwrap().get(&key) {
        return Ok(*hit);
    }
    let r0 = (10.0 * lambda.decay_radius).max(20.0);
    let mut radii = vec![r0, 2.0 * r0, 4.0 * r0];
    let mut vals = radii.iter().map(|&r| lambda.eval(w * r)).collect::<Result<Vec<_>>>()?;
    let max_extra = 4;
    let mut extra = 0;
    loop {
        let n = vals.len();
        let d1 = vals[n - 2] - vals[n - 3];
        let d2 = vals[n - 1] - vals[n - 2];
        if d2.abs() <= LAMBDA_TOL {
            let q = if d1.abs() > 1e-14 { d2 / d1 } else { 0.0 };
            let accelerated = d1.abs() > 1e-14 && q > -1.0 && q < 0.75;
            let value = if accelerated { vals[n - 1] + d2 * q / (1.0 - q) } else { vals[n - 1] };
            let limit = LambdaLimit {
                value,
                radii: [radii[n - 3], radii[n - 2], radii[n - 1]],
                samples: [vals[n - 3], vals[n - 2], vals[n - 1]],
                certificate: d2.abs(),
                accelerated,
            };
            lambda.cache.lock().unwrap().insert(key, limit);
            return Ok(limit);
        }
        if d2.abs() >= 0.75 * d1.abs() || extra == max_extra {
            return Err(Error::NoLimit {
                direction: w.to_array(),
                detail: format!(
                    "increments {d1:.3e}, {d2:.3e} at radii {:.0}..{:.0} do not contract",
                    radii[n - 3],
                    radii[n - 1]
                ),
            });
        }
        let r = 2.0 * radii[n - 1];
        radii.push(r);
        vals.push(lambda.eval(w * r)?);
        extra += 1;
    }
}
