//! Analytic magnetic fields and scalar potentials with decay metadata, plus
//! the built-in test catalog and the basic norms and checks on them.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, SampledField};
use crate::quadrature::{self, Tolerance};
use crate::vec3::Vec3;

/// Default absolute quadrature tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Tolerance used when an integrand has jump discontinuities.
pub const SINGULAR_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn n(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    pub fn from_n(n: usize) -> Result<Dim> {
        match n {
            2 => Ok(Dim::Two),
            3 => Ok(Dim::Three),
            _ => Err(Error::UnsupportedDimension { found: n, context: "only 2D and 3D are supported".into() }),
        }
    }
}

pub type VectorFn = Arc<dyn Fn(Vec3) -> Vec3 + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(Vec3) -> f64 + Send + Sync>;

/// `|B(x)| <= c |x|^-mu` for `|x| >= radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayBound {
    pub c: f64,
    pub radius: f64,
}

/// A magnetic field. Planar fields are stored as `(0, 0, B)`.
#[derive(Clone)]
pub struct FieldModel {
    pub dim: Dim,
    pub label: String,
    pub mu: f64,
    pub p: f64,
    pub bound: DecayBound,
    pub known_flux: Option<f64>,
    /// Radii of origin-centered circles (spheres) where `B` jumps.
    pub jump_radii: Vec<f64>,
    /// `B` vanishes outside this radius.
    pub support_radius: Option<f64>,
    /// Radius beyond which `|B|` is below double precision relative to its peak.
    pub effective_radius: f64,
    eval: VectorFn,
    curl: Option<VectorFn>,
}

impl fmt::Debug for FieldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldModel")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("mu", &self.mu)
            .field("p", &self.p)
            .field("bound", &self.bound)
            .field("known_flux", &self.known_flux)
            .finish_non_exhaustive()
    }
}

impl FieldModel {
    /// Wraps a raw evaluator. For `Dim::Two` only the third component is used.
    pub fn from_fn(
        dim: Dim,
        label: impl Into<String>,
        mu: f64,
        bound: DecayBound,
        eval: impl Fn(Vec3) -> Vec3 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(mu > 1.5) {
            return Err(Error::DecayClass(format!("decay exponent {mu} must exceed 3/2")));
        }
        Ok(FieldModel {
            dim,
            label: label.into(),
            mu,
            p: f64::INFINITY,
            bound,
            known_flux: None,
            jump_radii: Vec::new(),
            support_radius: None,
            effective_radius: f64::INFINITY,
            eval: Arc::new(eval),
            curl: None,
        })
    }

    pub fn with_curl(mut self, curl: impl Fn(Vec3) -> Vec3 + Send + Sync + 'static) -> Self {
        self.curl = Some(Arc::new(curl));
        self
    }

    pub fn with_flux(mut self, flux: f64) -> Self {
        self.known_flux = Some(flux);
        self
    }

    pub fn with_support(mut self, radius: f64) -> Self {
        self.support_radius = Some(radius);
        self.effective_radius = self.effective_radius.min(radius);
        self
    }

    pub fn with_effective_radius(mut self, radius: f64) -> Self {
        self.effective_radius = radius;
        self
    }

    pub fn with_jumps(mut self, radii: Vec<f64>) -> Self {
        self.jump_radii = radii;
        self
    }

    #[inline]
    pub fn eval(&self, x: Vec3) -> Vec3 {
        (self.eval)(x)
    }

    /// Planar field value (third component).
    #[inline]
    pub fn scalar(&self, x: Vec3) -> f64 {
        (self.eval)(x).z
    }

    /// Analytic `curl B` if known. For planar fields this is `(∂₂B, −∂₁B, 0)`.
    pub fn curl(&self, x: Vec3) -> Option<Vec3> {
        self.curl.as_ref().map(|c| c(x))
    }

    pub fn has_curl(&self) -> bool {
        self.curl.is_some()
    }

    pub fn is_smooth(&self) -> bool {
        self.jump_radii.is_empty()
    }

    /// Absolute quadrature tolerance appropriate for this field.
    pub fn default_tol(&self) -> f64 {
        if self.is_smooth() {
            DEFAULT_TOL
        } else {
            SINGULAR_TOL
        }
    }

    /// Parameters `t` where the line `x + tω` crosses a jump set.
    pub fn line_breaks(&self, x: Vec3, omega: Vec3) -> Vec<f64> {
        let mut out = Vec::new();
        let b = x.dot(omega);
        let c = x.norm_sq();
        for &r in &self.jump_radii {
            let disc = b * b - c + r * r;
            if disc >= 0.0 {
                let s = disc.sqrt();
                out.push(-b - s);
                out.push(-b + s);
            }
        }
        out
    }

    /// Parameters `s ∈ (0, 1)` where the segment `s·x` crosses a jump set.
    pub fn ray_breaks(&self, x: Vec3) -> Vec<f64> {
        let n = x.norm();
        self.jump_radii.iter().map(|r| r / n).filter(|s| *s > 0.0 && *s < 1.0).collect()
    }

    /// `max |x|^μ |B(x)| / C` over `64 radii × 16 directions` beyond the decay radius.
    pub fn decay_bound_ratio(&self) -> f64 {
        let r0 = self.bound.radius.max(1e-3);
        let mut worst: f64 = 0.0;
        for i in 0..64 {
            let r = r0 * 100f64.powf(i as f64 / 63.0);
            for d in sample_directions(self.dim, 16) {
                let v = r.powf(self.mu) * self.eval(d * r).norm();
                let ratio = if self.bound.c > 0.0 { v / self.bound.c } else if v > 0.0 { f64::INFINITY } else { 0.0 };
                worst = worst.max(ratio);
            }
        }
        worst
    }
}

/// A scalar (electrostatic) potential with short-range decay.
#[derive(Clone)]
pub struct ScalarPotentialModel {
    pub label: String,
    pub mu: f64,
    pub bound: DecayBound,
    /// Singular points and their blow-up exponents (each below 1).
    pub singular_points: Vec<(Vec3, f64)>,
    eval: ScalarFn,
}

impl fmt::Debug for ScalarPotentialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarPotentialModel")
            .field("label", &self.label)
            .field("mu", &self.mu)
            .field("bound", &self.bound)
            .finish_non_exhaustive()
    }
}

impl ScalarPotentialModel {
    pub fn from_fn(
        label: impl Into<String>,
        mu: f64,
        bound: DecayBound,
        eval: impl Fn(Vec3) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(mu > 1.0) {
            return Err(Error::DecayClass(format!("scalar potential decay exponent {mu} must exceed 1")));
        }
        Ok(ScalarPotentialModel { label: label.into(), mu, bound, singular_points: Vec::new(), eval: Arc::new(eval) })
    }

    pub fn zero() -> Self {
        ScalarPotentialModel::from_fn("zero", 4.0, DecayBound { c: 0.0, radius: 1.0 }, |_| 0.0).unwrap()
    }

    /// `amplitude · exp(−|x − center|² / width²)`.
    pub fn gaussian(amplitude: f64, width: f64, center: Vec3) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Config("gaussian width must be positive".into()));
        }
        let r0 = 3.0 * width + center.norm();
        let c = amplitude.abs() * r0.powi(4);
        ScalarPotentialModel::from_fn(
            format!("gaussian({amplitude},{width})"),
            4.0,
            DecayBound { c, radius: r0 },
            move |x| amplitude * (-(x - center).norm_sq() / (width * width)).exp(),
        )
    }

    pub fn with_singular_point(mut self, at: Vec3, exponent: f64) -> Result<Self> {
        if !(exponent < 1.0) {
            return Err(Error::Config(format!("singular exponent {exponent} must be below 1")));
        }
        self.singular_points.push((at, exponent));
        Ok(self)
    }

    #[inline]
    pub fn eval(&self, x: Vec3) -> f64 {
        (self.eval)(x)
    }
}

/// Deterministic direction set: equally spaced angles in 2D, a Fibonacci sphere in 3D.
pub fn sample_directions(dim: Dim, n: usize) -> Vec<Vec3> {
    match dim {
        Dim::Two => (0..n).map(|k| Vec3::from_angle(2.0 * PI * (k as f64 + 0.5) / n as f64)).collect(),
        Dim::Three => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    Vec3::new(r * phi.cos(), r * phi.sin(), z)
                })
                .collect()
        }
    }
}

fn param(params: &[f64], i: usize, default: f64) -> f64 {
    params.get(i).copied().unwrap_or(default)
}

/// Names accepted by [`make_test_field`].
pub const TEST_FIELDS: [&str; 6] =
    ["gaussian2d", "gaussian3d_loop", "solenoid2d", "radial2d_powertail", "pc_counterexample2d", "zero"];

/// Builds a catalog field. Parameters by name:
///
/// * `gaussian2d`: amplitude (1), width (1)
/// * `gaussian3d_loop`: none; `B = curl(e^{-|x|²}(−x₂, x₁, 0))`
/// * `solenoid2d`: radius (1), amplitude (1)
/// * `radial2d_powertail`: μ (required), `B = (1 + |x|²)^{−μ/2}`
/// * `pc_counterexample2d`: none; curl of a divergence-free potential with a
///   non-integrable longitudinal part, μ = 2
/// * `zero`: optional dimension (2)
pub fn make_test_field(name: &str, params: &[f64]) -> Result<FieldModel> {
    match name {
        "zero" => {
            let dim = Dim::from_n(param(params, 0, 2.0) as usize)?;
            Ok(FieldModel::from_fn(dim, "zero", 4.0, DecayBound { c: 0.0, radius: 1.0 }, |_| Vec3::ZERO)?
                .with_curl(|_| Vec3::ZERO)
                .with_flux(0.0)
                .with_support(0.0))
        }
        "gaussian2d" => {
            let a = param(params, 0, 1.0);
            let w = param(params, 1, 1.0);
            if !(w > 0.0) {
                return Err(Error::Config("gaussian2d width must be positive".into()));
            }
            let w2 = w * w;
            Ok(FieldModel::from_fn(
                Dim::Two,
                format!("gaussian2d({a},{w})"),
                4.0,
                DecayBound { c: a.abs() * w2 * w2, radius: 3.0 * w },
                move |x| Vec3::new(0.0, 0.0, a * (-(x.x * x.x + x.y * x.y) / w2).exp()),
            )?
            .with_curl(move |x| {
                let g = a * (-(x.x * x.x + x.y * x.y) / w2).exp() * 2.0 / w2;
                Vec3::new(-x.y * g, x.x * g, 0.0)
            })
            .with_flux(a * PI * w2)
            .with_effective_radius(6.5 * w))
        }
        "gaussian3d_loop" => Ok(FieldModel::from_fn(
            Dim::Three,
            "gaussian3d_loop",
            4.0,
            DecayBound { c: 1.0, radius: 3.0 },
            |x| {
                let e = (-x.norm_sq()).exp();
                Vec3::new(2.0 * x.x * x.z, 2.0 * x.y * x.z, 2.0 - 2.0 * x.x * x.x - 2.0 * x.y * x.y) * e
            },
        )?
        .with_curl(|x| {
            let r2 = x.norm_sq();
            let g = (10.0 - 4.0 * r2) * (-r2).exp();
            Vec3::new(-x.y * g, x.x * g, 0.0)
        })
        .with_effective_radius(6.5)),
        "solenoid2d" => {
            let r = param(params, 0, 1.0);
            let a = param(params, 1, 1.0);
            if !(r > 0.0) {
                return Err(Error::Config("solenoid2d radius must be positive".into()));
            }
            Ok(FieldModel::from_fn(
                Dim::Two,
                format!("solenoid2d({r})"),
                4.0,
                DecayBound { c: a.abs() * r.powi(4), radius: r },
                move |x| Vec3::new(0.0, 0.0, if x.x * x.x + x.y * x.y <= r * r { a } else { 0.0 }),
            )?
            .with_flux(a * PI * r * r)
            .with_jumps(vec![r])
            .with_support(r))
        }
        "radial2d_powertail" => {
            let mu = *params
                .first()
                .ok_or_else(|| Error::Config("radial2d_powertail needs the decay exponent μ".into()))?;
            let mut m = FieldModel::from_fn(
                Dim::Two,
                format!("radial2d_powertail({mu})"),
                mu,
                DecayBound { c: 1.0, radius: 1.0 },
                move |x| Vec3::new(0.0, 0.0, (1.0 + x.x * x.x + x.y * x.y).powf(-0.5 * mu)),
            )?
            .with_curl(move |x| {
                let g = -mu * (1.0 + x.x * x.x + x.y * x.y).powf(-0.5 * mu - 1.0);
                Vec3::new(x.y * g, -x.x * g, 0.0)
            });
            if mu > 2.0 {
                m = m.with_flux(2.0 * PI / (mu - 2.0));
            }
            Ok(m)
        }
        "pc_counterexample2d" => Ok(FieldModel::from_fn(
            Dim::Two,
            "pc_counterexample2d",
            2.0,
            DecayBound { c: 2.0, radius: 1.0 },
            |x| {
                let q = x.x * x.x + x.y * x.y + 1.0;
                Vec3::new(0.0, 0.0, 4.0 * x.x * x.y * (q + 2.0) / (q * q * q))
            },
        )?
        .with_curl(|x| {
            let (a, b) = (x.x, x.y);
            let (a2, b2) = (a * a, b * b);
            let q = a2 + b2 + 1.0;
            let q4 = q * q * q * q;
            Vec3::new(
                4.0 * a * (a2 * a2 - 2.0 * a2 * b2 + 4.0 * a2 - 3.0 * b2 * b2 - 12.0 * b2 + 3.0) / q4,
                4.0 * b * (3.0 * a2 * a2 + 2.0 * a2 * b2 + 12.0 * a2 - b2 * b2 - 4.0 * b2 - 3.0) / q4,
                0.0,
            )
        })
        .with_flux(0.0)),
        other => Err(Error::Config(format!(
            "unknown test field `{other}` (expected one of {})",
            TEST_FIELDS.join(", ")
        ))),
    }
}

/// Either kind of model can be sampled.
pub trait Sampleable: Sync {
    fn dim(&self) -> Option<Dim>;
    fn components(&self, grid: &GridSpec) -> usize;
    fn write(&self, x: Vec3, out: &mut [f64]);
    fn singular_points(&self) -> Vec<Vec3>;
}

impl Sampleable for FieldModel {
    fn dim(&self) -> Option<Dim> {
        Some(self.dim)
    }
    fn components(&self, _grid: &GridSpec) -> usize {
        match self.dim {
            Dim::Two => 1,
            Dim::Three => 3,
        }
    }
    fn write(&self, x: Vec3, out: &mut [f64]) {
        let b = self.eval(x);
        match self.dim {
            Dim::Two => out[0] = b.z,
            Dim::Three => out.copy_from_slice(&b.to_array()),
        }
    }
    fn singular_points(&self) -> Vec<Vec3> {
        Vec::new()
    }
}

impl Sampleable for ScalarPotentialModel {
    fn dim(&self) -> Option<Dim> {
        None
    }
    fn components(&self, _grid: &GridSpec) -> usize {
        1
    }
    fn write(&self, x: Vec3, out: &mut [f64]) {
        out[0] = self.eval(x);
    }
    fn singular_points(&self) -> Vec<Vec3> {
        self.singular_points.iter().map(|(p, _)| *p).collect()
    }
}

/// Samples a model at every grid node. A node that coincides with a declared
/// singular point is moved by half a spacing along every axis.
pub fn sample_field<M: Sampleable + ?Sized>(model: &M, grid: &GridSpec) -> Result<SampledField> {
    if let Some(d) = model.dim() {
        if d.n() != grid.ndim() {
            return Err(Error::Shape(format!("{}D model on a {}D grid", d.n(), grid.ndim())));
        }
    }
    let singular = model.singular_points();
    let half = Vec3::new(
        0.5 * grid.spacing[0],
        grid.spacing.get(1).map_or(0.0, |h| 0.5 * h),
        grid.spacing.get(2).map_or(0.0, |h| 0.5 * h),
    );
    let nc = model.components(grid);
    SampledField::from_fn(grid.clone(), nc, |x, out| {
        let x = if singular.iter().any(|s| (*s - x).norm() < 1e-12) { x + half } else { x };
        model.write(x, out);
        Ok(())
    })
}

/// The norm `(∫_{|x|≤R} |B|^p)^{1/p} + sup_{|x|≥R} |x|^μ |B(x)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayProfile {
    pub r: f64,
    pub p: f64,
    pub mu: f64,
    pub lp_part: f64,
    pub sup_part: f64,
    pub norm_value: f64,
}

/// Integral of `f(r, direction)·r^{ν−1}` over the ball of radius `r_max` in polar coordinates.
fn ball_integral(
    dim: Dim,
    r_max: f64,
    radial_breaks: &[f64],
    tol: f64,
    f: &(dyn Fn(Vec3) -> f64 + Sync),
) -> Result<f64> {
    let tol_outer = Tolerance::new(tol, 1e-12);
    let tol_inner = Tolerance::new(tol * 0.1, 1e-12);
    match dim {
        Dim::Two => {
            let est = quadrature::integrate_with_breaks(
                |r: f64| {
                    let inner = quadrature::integrate(
                        |phi: f64| Ok(f(Vec3::from_angle(phi) * r)),
                        0.0,
                        2.0 * PI,
                        tol_inner.inner(1.0 / (1.0 + r)),
                    )?;
                    Ok(inner.value * r)
                },
                0.0,
                r_max,
                radial_breaks,
                tol_outer,
            )?;
            Ok(est.value)
        }
        Dim::Three => {
            let est = quadrature::integrate_with_breaks(
                |r: f64| {
                    let inner = quadrature::integrate(
                        |ct: f64| {
                            let st = (1.0 - ct * ct).max(0.0).sqrt();
                            let ring = quadrature::integrate(
                                |phi: f64| {
                                    let (s, c) = phi.sin_cos();
                                    Ok(f(Vec3::new(st * c, st * s, ct) * r))
                                },
                                0.0,
                                2.0 * PI,
                                tol_inner.inner(0.1 / (1.0 + r * r)),
                            )?;
                            Ok(ring.value)
                        },
                        -1.0,
                        1.0,
                        tol_inner.inner(1.0 / (1.0 + r * r)),
                    )?;
                    Ok(inner.value * r * r)
                },
                0.0,
                r_max,
                radial_breaks,
                tol_outer,
            )?;
            Ok(est.value)
        }
    }
}

pub fn decay_norm(model: &FieldModel, r: f64, p: f64, mu: f64) -> Result<DecayProfile> {
    let nu = model.dim.n() as f64;
    if !(p > nu) {
        return Err(Error::Config(format!("integrability exponent p = {p} must exceed the dimension {nu}")));
    }
    if !(mu > 1.5) {
        return Err(Error::Config(format!("decay exponent μ = {mu} must exceed 3/2")));
    }
    if !(r > 0.0) {
        return Err(Error::Config(format!("radius R = {r} must be positive")));
    }
    let breaks: Vec<f64> = model.jump_radii.iter().copied().filter(|&j| j < r).collect();
    let integral = ball_integral(model.dim, r, &breaks, model.default_tol() * 0.1, &|x| model.eval(x).norm().powf(p))?;
    if !integral.is_finite() {
        return Err(Error::DecayClass(format!("local L^{p} integral is not finite")));
    }
    let lp_part = integral.max(0.0).powf(1.0 / p);
    let sup_part = weighted_sup(model, r, mu)?;
    Ok(DecayProfile { r, p, mu, lp_part, sup_part, norm_value: lp_part + sup_part })
}

/// `sup_{|x| ≥ r} |x|^μ |B(x)|` by radial sampling out to a radius where the
/// declared decay bound certifies the remaining tail.
fn weighted_sup(model: &FieldModel, r: f64, mu: f64) -> Result<f64> {
    let dirs = sample_directions(model.dim, if model.dim == Dim::Two { 64 } else { 256 });
    let probe = |rad: f64| dirs.iter().map(|d| model.eval(*d * rad).norm()).fold(0.0, f64::max) * rad.powf(mu);
    let r_end = match model.support_radius {
        Some(s) => s.max(r),
        None => {
            if mu > model.mu + 1e-12 {
                return Err(Error::DecayClass(format!(
                    "requested weight exponent {mu} exceeds the field's declared decay {}",
                    model.mu
                )));
            }
            model.bound.radius.max(r) * 64.0
        }
    };
    if model.support_radius.is_some() && r >= r_end {
        return Ok(0.0);
    }
    let n = 2048;
    let ratio = (r_end / r).ln();
    let radius_at = |k: usize| r * (ratio * k as f64 / (n - 1) as f64).exp();
    let mut best = (0.0, r);
    for k in 0..n {
        let rad = radius_at(k);
        let v = probe(rad);
        if v > best.0 {
            best = (v, rad);
        }
    }
    // golden-section refinement around the best sample
    let k = ((best.1 / r).ln() / ratio * (n - 1) as f64).round() as usize;
    let (mut a, mut b) = (radius_at(k.saturating_sub(1)), radius_at((k + 1).min(n - 1)));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if probe(c) >= probe(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mut sup = best.0.max(probe(0.5 * (a + b)));
    if model.support_radius.is_none() && (mu - model.mu).abs() <= 1e-12 {
        // with equal exponents the declared bound is itself the tail certificate
        let tail = probe(r_end);
        sup = sup.max(tail);
    }
    Ok(sup)
}

/// Max over interior nodes of the central-difference divergence of a 3D field.
pub fn divergence_residual(model: &FieldModel, grid: &GridSpec) -> Result<f64> {
    if model.dim != Dim::Three || grid.ndim() != 3 {
        return Err(Error::UnsupportedDimension {
            found: model.dim.n(),
            context: "divergence residual needs a 3D field and grid".into(),
        });
    }
    let sampled = sample_field(model, grid)?;
    let div = sampled.divergence()?;
    Ok((0..grid.len())
        .filter(|&i| grid.is_interior(i, 1))
        .map(|i| div.get(i, 0).abs())
        .fold(0.0, f64::max))
}

/// `Φ = ∫_{ℝ²} B dx` by polar quadrature.
pub fn total_flux(model: &FieldModel) -> Result<f64> {
    total_flux_with_tol(model, model.default_tol() * 0.01)
}

pub fn total_flux_with_tol(model: &FieldModel, tol: f64) -> Result<f64> {
    if model.dim != Dim::Two {
        return Err(Error::UnsupportedDimension { found: model.dim.n(), context: "flux is defined for planar fields".into() });
    }
    if model.support_radius.is_none() && model.mu <= 2.0 {
        return Err(Error::FluxNotFinite { mu: model.mu });
    }
    let ring = |r: f64| -> Result<f64> {
        let inner = quadrature::integrate(
            |phi: f64| Ok(model.scalar(Vec3::from_angle(phi) * r)),
            0.0,
            2.0 * PI,
            Tolerance::new(tol * 0.1 / (1.0 + r * r), 1e-13),
        )?;
        Ok(inner.value * r)
    };
    let tol = Tolerance::new(tol, 1e-12);
    let est = match model.support_radius {
        Some(s) if s == 0.0 => return Ok(0.0),
        Some(s) => quadrature::integrate_with_breaks(ring, 0.0, s, &model.jump_radii, tol)?,
        None => {
            // the tail beyond T is bounded by 2πC T^{2−μ}/(μ−2); finite iff μ > 2
            quadrature::integrate_upper(ring, 0.0, &model.jump_radii, tol)?
        }
    };
    Ok(est.value)
}

/// Least-squares slope of `log|value|` against `log r`, negated.
pub fn fit_decay_exponent(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 8 {
        return Err(Error::Domain(format!("need at least 8 samples, got {}", samples.len())));
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) || samples[0].0 <= 0.0 {
        return Err(Error::Domain("radii must be positive and strictly increasing".into()));
    }
    if let Some((r, v)) = samples.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::Domain(format!("nonpositive magnitude {v} at radius {r}")));
    }
    let n = samples.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = samples.iter().map(|(r, v)| (r.ln(), v.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn catalog_metadata() {
        for name in TEST_FIELDS {
            let params: &[f64] = if name == "radial2d_powertail" { &[2.5] } else { &[] };
            let m = make_test_field(name, params).unwrap();
            assert!(m.mu > 1.5, "{name}");
            assert!(m.decay_bound_ratio() <= 1.0, "{name} violates its declared decay bound");
        }
        assert!(matches!(make_test_field("dipole", &[]), Err(Error::Config(_))));
        assert!(make_test_field("radial2d_powertail", &[]).is_err());
    }

    #[test]
    fn sampled_gaussian_values() {
        let g = GridSpec::square(3, 3.0).unwrap();
        let s = sample_field(&make_test_field("gaussian2d", &[1.0, 1.0]).unwrap(), &g).unwrap();
        assert_eq!(s.get(4, 0), 1.0);
        assert_abs_diff_eq!(s.get(0, 0), (-2.0f64).exp(), epsilon = 1e-15);
        let sol = make_test_field("solenoid2d", &[1.0]).unwrap();
        assert_eq!(sol.scalar(Vec3::planar(0.5, 0.0)), 1.0);
        assert_eq!(sol.scalar(Vec3::planar(1.5, 0.0)), 0.0);
    }

    #[test]
    fn singular_nodes_are_offset() {
        let g = GridSpec::square(3, 3.0).unwrap();
        let v = ScalarPotentialModel::from_fn("coulombish", 1.5, DecayBound { c: 1.0, radius: 1.0 }, |x| {
            x.norm().powf(-0.5)
        })
        .unwrap()
        .with_singular_point(Vec3::ZERO, 0.5)
        .unwrap();
        let s = sample_field(&v, &g).unwrap();
        assert!(s.values.iter().all(|x| x.is_finite()));
        assert_abs_diff_eq!(s.get(4, 0), 0.5f64.sqrt().powf(-0.5), epsilon = 1e-12);
    }

    #[test]
    fn fluxes() {
        let g = make_test_field("gaussian2d", &[]).unwrap();
        assert_abs_diff_eq!(total_flux(&g).unwrap(), PI, epsilon = 1e-6);
        let s = make_test_field("solenoid2d", &[1.0]).unwrap();
        assert_abs_diff_eq!(total_flux(&s).unwrap(), PI, epsilon = 1e-4);
        assert_eq!(total_flux(&make_test_field("zero", &[]).unwrap()).unwrap(), 0.0);
        let p = make_test_field("radial2d_powertail", &[3.0]).unwrap();
        assert_abs_diff_eq!(total_flux(&p).unwrap(), 2.0 * PI, epsilon = 1e-5);
        let pc = make_test_field("pc_counterexample2d", &[]).unwrap();
        assert!(matches!(total_flux(&pc), Err(Error::FluxNotFinite { .. })));
    }

    #[test]
    fn gaussian_decay_norm() {
        let g = make_test_field("gaussian2d", &[]).unwrap();
        let d = decay_norm(&g, 1.0, 3.0, 2.0).unwrap();
        let lp = (PI / 3.0 * (1.0 - (-3.0f64).exp())).powf(1.0 / 3.0);
        assert_abs_diff_eq!(d.lp_part, lp, epsilon = 1e-7);
        assert_abs_diff_eq!(d.sup_part, (-1.0f64).exp(), epsilon = 1e-9);
        assert_abs_diff_eq!(d.norm_value, d.lp_part + d.sup_part, epsilon = 0.0);
        let s = make_test_field("solenoid2d", &[1.0]).unwrap();
        assert_eq!(decay_norm(&s, 2.0, 3.0, 2.0).unwrap().sup_part, 0.0);
        let z = make_test_field("zero", &[]).unwrap();
        assert_eq!(decay_norm(&z, 1.0, 3.0, 2.0).unwrap().norm_value, 0.0);
        assert!(matches!(decay_norm(&g, 1.0, 2.0, 2.0), Err(Error::Config(_))));
    }

    #[test]
    fn sup_part_is_monotone_in_mu() {
        let g = make_test_field("gaussian2d", &[]).unwrap();
        let mut last = 0.0;
        for mu in [1.6, 2.0, 2.5, 3.0, 3.5, 4.0] {
            let s = decay_norm(&g, 1.5, 3.0, mu).unwrap().sup_part;
            assert!(s >= last);
            last = s;
        }
    }

    #[test]
    fn divergence_of_loop_field_converges() {
        let m = make_test_field("gaussian3d_loop", &[]).unwrap();
        let coarse = divergence_residual(&m, &GridSpec::cube(32, 8.0).unwrap()).unwrap();
        let fine = divergence_residual(&m, &GridSpec::cube(64, 8.0).unwrap()).unwrap();
        assert!(coarse < 0.1);
        assert!(coarse / fine >= 3.5, "ratio {}", coarse / fine);
        let bad = FieldModel::from_fn(Dim::Three, "bad", 2.0, DecayBound { c: 1.0, radius: 1.0 }, |x| {
            Vec3::new(x.x, 0.0, 0.0)
        })
        .unwrap();
        let r = divergence_residual(&bad, &GridSpec::cube(8, 2.0).unwrap()).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
        let g2 = make_test_field("gaussian2d", &[]).unwrap();
        assert!(matches!(
            divergence_residual(&g2, &GridSpec::square(8, 2.0).unwrap()),
            Err(Error::UnsupportedDimension { .. })
        ));
    }

    #[test]
    fn analytic_curls_match_differences() {
        let h = 1e-5;
        for (name, params) in [
            ("gaussian2d", vec![1.3, 0.8]),
            ("radial2d_powertail", vec![2.5]),
            ("pc_counterexample2d", vec![]),
        ] {
            let m = make_test_field(name, &params).unwrap();
            for x in [Vec3::planar(0.3, -0.7), Vec3::planar(1.2, 0.4)] {
                let d1 = (m.scalar(x + Vec3::E1 * h) - m.scalar(x - Vec3::E1 * h)) / (2.0 * h);
                let d2 = (m.scalar(x + Vec3::E2 * h) - m.scalar(x - Vec3::E2 * h)) / (2.0 * h);
                let c = m.curl(x).unwrap();
                assert_abs_diff_eq!(c.x, d2, epsilon = 1e-8);
                assert_abs_diff_eq!(c.y, -d1, epsilon = 1e-8);
            }
        }
        let m = make_test_field("gaussian3d_loop", &[]).unwrap();
        let x = Vec3::new(0.3, -0.5, 0.7);
        let d = |i: Vec3, j: Vec3| {
            let f = |y: Vec3| m.eval(y);
            (f(x + j * h) - f(x - j * h)).dot(i) / (2.0 * h)
        };
        let (e1, e2, e3) = (Vec3::E1, Vec3::E2, Vec3::E3);
        let curl = Vec3::new(d(e3, e2) - d(e2, e3), d(e1, e3) - d(e3, e1), d(e2, e1) - d(e1, e2));
        assert!((curl - m.curl(x).unwrap()).norm() < 1e-8);
    }

    #[test]
    fn decay_exponent_fit() {
        let s: Vec<_> = (1..=10).map(|k| (10.0 * k as f64, 1.0 / (10.0 * k as f64))).collect();
        assert_abs_diff_eq!(fit_decay_exponent(&s).unwrap(), 1.0, epsilon = 1e-12);
        let s: Vec<_> = (1..=10)
            .map(|k| {
                let r = 10.0 * k as f64;
                (r, r.powf(-0.75) * (1.0 + 0.01 * r.sin()))
            })
            .collect();
        assert_abs_diff_eq!(fit_decay_exponent(&s).unwrap(), 0.75, epsilon = 0.02);
        let s: Vec<_> = (1..=10).map(|k| (k as f64, 3.0)).collect();
        assert_abs_diff_eq!(fit_decay_exponent(&s).unwrap(), 0.0, epsilon = 1e-12);
        let mut bad = s.clone();
        bad[3].1 = 0.0;
        assert!(matches!(fit_decay_exponent(&bad), Err(Error::Domain(_))));
    }
}
