//! Vector potentials for a given magnetic field: transversal, Griesinger,
//! Coulomb and sector-adapted gauges, plus gauge functions between them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field_models::{fit_decay_exponent, Dim, FieldModel};
use crate::grid::{GridSpec, SampledField};
use crate::quadrature::{self, Tolerance};
use crate::vec3::Vec3;

mod adaptive;
mod coulomb;
mod griesinger;
mod lambda;

pub use adaptive::{adaptive_gauge, SectorProfile, SECTOR_BLEND_DEG, SECTOR_HALF_ANGLE_DEG};
pub use coulomb::{coulomb_far_field_check, coulomb_gauge, coulomb_line_integral_2d, coulomb_potential, FarFieldCheck};
pub use griesinger::{griesinger_gauge, Mollifier};
pub use lambda::{asymptotic_lambda, extract_lambda, loop_residual, GaugeFunction, LambdaLimit};

pub type PotentialFn = Arc<dyn Fn(Vec3) -> Result<Vec3> + Send + Sync>;
/// Full-line integral evaluator `(ω, x) ↦ ∫ ω·A(x + tω) dt`.
pub type LineFn = Arc<dyn Fn(Vec3, Vec3) -> Result<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GaugeKind {
    Transversal,
    Griesinger,
    Coulomb,
    /// Sector-adapted Coulomb gauge around `±ω`.
    Adaptive(Vec3),
    External,
}

impl fmt::Display for GaugeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GaugeKind::Transversal => write!(f, "transversal"),
            GaugeKind::Griesinger => write!(f, "griesinger"),
            GaugeKind::Coulomb => write!(f, "coulomb"),
            GaugeKind::Adaptive(w) => write!(f, "adaptive:{},{}", w.x, w.y),
            GaugeKind::External => write!(f, "external"),
        }
    }
}

impl FromStr for GaugeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transversal" => Ok(GaugeKind::Transversal),
            "griesinger" => Ok(GaugeKind::Griesinger),
            "coulomb" => Ok(GaugeKind::Coulomb),
            "external" => Ok(GaugeKind::External),
            _ => {
                let dir = s
                    .strip_prefix("adaptive:")
                    .ok_or_else(|| Error::Config(format!("unknown gauge `{s}`")))?;
                let parts: Vec<f64> = dir
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("bad adaptive direction `{dir}`")))?;
                let [x, y] = parts[..] else {
                    return Err(Error::Config(format!("adaptive direction needs two components, got `{dir}`")));
                };
                let w = Vec3::planar(x, y);
                if !(w.norm() > 0.0) {
                    return Err(Error::Config("adaptive direction must be nonzero".into()));
                }
                Ok(GaugeKind::Adaptive(w.normalized()))
            }
        }
    }
}

/// An evaluable vector potential. Planar potentials have zero third component.
#[derive(Clone)]
pub struct VectorPotential {
    pub dim: Dim,
    pub kind: GaugeKind,
    pub label: String,
    pub source: Option<FieldModel>,
    /// Absolute accuracy targeted by the evaluator.
    pub tol: f64,
    eval: PotentialFn,
    line: Option<LineFn>,
}

impl fmt::Debug for VectorPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorPotential")
            .field("label", &self.label)
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("tol", &self.tol)
            .finish_non_exhaustive()
    }
}

impl VectorPotential {
    pub fn new(
        dim: Dim,
        kind: GaugeKind,
        label: impl Into<String>,
        source: Option<FieldModel>,
        tol: f64,
        eval: impl Fn(Vec3) -> Result<Vec3> + Send + Sync + 'static,
    ) -> Self {
        VectorPotential { dim, kind, label: label.into(), source, tol, eval: Arc::new(eval), line: None }
    }

    /// Attaches an exact evaluator for full-line integrals `∫ ω·A(x + tω) dt`,
    /// used in place of direct quadrature.
    pub fn with_line_integral(mut self, f: impl Fn(Vec3, Vec3) -> Result<f64> + Send + Sync + 'static) -> Self {
        self.line = Some(Arc::new(f));
        self
    }

    /// The attached line-integral evaluator at `(ω, x)`, if any.
    pub fn line_integral_override(&self, omega: Vec3, x: Vec3) -> Option<Result<f64>> {
        self.line.as_ref().map(|f| f(omega, x))
    }

    /// A user-supplied potential without a source field.
    pub fn external(dim: Dim, label: impl Into<String>, eval: impl Fn(Vec3) -> Vec3 + Send + Sync + 'static) -> Self {
        VectorPotential::new(dim, GaugeKind::External, label, None, 1e-14, move |x| Ok(eval(x)))
    }

    pub fn zero(dim: Dim) -> Self {
        VectorPotential::external(dim, "zero", |_| Vec3::ZERO)
    }

    #[inline]
    pub fn eval(&self, x: Vec3) -> Result<Vec3> {
        (self.eval)(x)
    }

    /// `A + ∇χ` for a known gradient field, as an external potential.
    pub fn plus_gradient(
        &self,
        label: impl Into<String>,
        grad: impl Fn(Vec3) -> Vec3 + Send + Sync + 'static,
    ) -> VectorPotential {
        let inner = self.eval.clone();
        VectorPotential {
            dim: self.dim,
            kind: GaugeKind::External,
            label: label.into(),
            source: self.source.clone(),
            tol: self.tol,
            eval: Arc::new(move |x| Ok(inner(x)? + grad(x))),
            line: None,
        }
    }

    /// Parameters `t` where `x + tω` crosses a jump set of the source field.
    pub fn line_breaks(&self, x: Vec3, omega: Vec3) -> Vec<f64> {
        self.source.as_ref().map(|b| b.line_breaks(x, omega)).unwrap_or_default()
    }

    /// Samples `A` at every node: 2 components on a 2D grid, 3 on a 3D grid.
    pub fn sample(&self, grid: &GridSpec) -> Result<SampledField> {
        if grid.ndim() != self.dim.n() {
            return Err(Error::Shape(format!("{}D potential on a {}D grid", self.dim.n(), grid.ndim())));
        }
        let nc = self.dim.n();
        SampledField::from_fn(grid.clone(), nc, |x, out| {
            let a = self.eval(x)?.to_array();
            out.copy_from_slice(&a[..nc]);
            Ok(())
        })
    }
}

/// The divergence-free potential whose curl is the `pc_counterexample2d` field:
/// `A = (x₁(x₁² − x₂² + 1), x₂(x₁² − x₂² − 1)) / (|x|² + 1)²`.
pub fn pc_counterexample_potential() -> VectorPotential {
    VectorPotential::external(Dim::Two, "pc_counterexample2d potential", |x| {
        let q = x.x * x.x + x.y * x.y + 1.0;
        let d = x.x * x.x - x.y * x.y;
        Vec3::planar(x.x * (d + 1.0), x.y * (d - 1.0)) * (1.0 / (q * q))
    })
}

/// `V(x) = ∫₀¹ s B(sx) ds`; the transversal potential is `V × x`.
fn transversal_weight(b: &FieldModel, x: Vec3, tol: f64) -> Result<Vec3> {
    let r = x.norm();
    if r == 0.0 {
        return Ok(Vec3::ZERO);
    }
    let mut breaks = b.ray_breaks(x);
    if b.effective_radius.is_finite() && b.effective_radius < r {
        breaks.push(b.effective_radius / r);
    }
    let est = quadrature::integrate_with_breaks(
        |s: f64| Ok(b.eval(x * s) * s),
        0.0,
        1.0,
        &breaks,
        Tolerance::new(tol / r, 1e-12),
    )?;
    Ok(est.value)
}

/// `A(x) = −x × ∫₀¹ s B(sx) ds`; satisfies `x·A(x) = 0` by construction.
pub fn transversal_gauge(b: &FieldModel) -> VectorPotential {
    transversal_gauge_with_tol(b, b.default_tol())
}

pub fn transversal_gauge_with_tol(b: &FieldModel, tol: f64) -> VectorPotential {
    let field = b.clone();
    let dim = b.dim;
    let a = VectorPotential::new(dim, GaugeKind::Transversal, format!("transversal[{}]", b.label), Some(b.clone()), tol, move |x| {
        let x = if dim == Dim::Two { Vec3::planar(x.x, x.y) } else { x };
        let v = transversal_weight(&field, x, tol)?;
        Ok(v.cross(x))
    });
    match dim {
        Dim::Two => {
            let field = b.clone();
            a.with_line_integral(move |w, x| transversal_line_integral_2d(&field, w, x, tol))
        }
        Dim::Three => a,
    }
}

/// Full-line integral of the planar transversal potential: the lines through
/// the origin sweep the strip between `0` and `d = x·ω⊥`, giving
/// `a(ω, x) = −∫₀^d X(s) ds` with `X` the X-ray transform of `B`.
pub fn transversal_line_integral_2d(b: &FieldModel, omega: Vec3, x: Vec3, tol: f64) -> Result<f64> {
    let w = Vec3::planar(omega.x, omega.y).normalized();
    let d = x.x * -w.y + x.y * w.x;
    if d == 0.0 {
        return Ok(0.0);
    }
    let mut breaks: Vec<f64> = b.jump_radii.iter().flat_map(|r| [-r, *r]).collect();
    let mut hi = d;
    if b.effective_radius.is_finite() {
        let r = b.effective_radius;
        hi = d.clamp(-r, r);
        breaks.retain(|p| p.abs() < r);
    }
    let est = quadrature::integrate_with_breaks(
        |s: f64| coulomb::field_xray_2d(b, w, s, tol * 0.01),
        0.0,
        hi,
        &breaks,
        Tolerance::new(tol, 1e-12),
    )?;
    Ok(-est.value)
}

/// Longitudinal decay table of a potential along a set of rays.
#[derive(Debug, Clone)]
pub struct LongitudinalProfile {
    pub directions: Vec<Vec3>,
    pub radii: Vec<f64>,
    /// `|A(rω)·ω|`, indexed `[direction][radius]`.
    pub longitudinal: Vec<Vec<f64>>,
    /// `|A(rω)|`, indexed `[direction][radius]`.
    pub magnitude: Vec<Vec<f64>>,
    /// Smallest fitted decay exponent of the longitudinal part (∞ if it vanishes).
    pub longitudinal_exponent: f64,
    /// Smallest fitted decay exponent of `|A|`.
    pub overall_exponent: f64,
    pub medium_range: bool,
}

/// Entries below this are treated as a vanishing longitudinal part.
const LONGITUDINAL_FLOOR: f64 = 1e-6;
/// Integrable decay requires an exponent above 1; the margin absorbs fit bias.
const INTEGRABLE_MARGIN: f64 = 0.05;

pub fn longitudinal_profile(a: &VectorPotential, directions: &[Vec3], radii: &[f64]) -> Result<LongitudinalProfile> {
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("radii must be strictly increasing".into()));
    }
    let mut longitudinal = Vec::with_capacity(directions.len());
    let mut magnitude = Vec::with_capacity(directions.len());
    let mut long_exp = f64::INFINITY;
    let mut overall = f64::INFINITY;
    for &w in directions {
        let w = w.normalized();
        let mut lrow = Vec::with_capacity(radii.len());
        let mut mrow = Vec::with_capacity(radii.len());
        for &r in radii {
            let v = a.eval(w * r)?;
            lrow.push(v.dot(w).abs());
            mrow.push(v.norm());
        }
        if radii.len() >= 8 {
            if lrow.iter().any(|&v| v > LONGITUDINAL_FLOOR) {
                let samples: Vec<_> = radii.iter().copied().zip(lrow.iter().map(|v| v.max(1e-300))).collect();
                long_exp = long_exp.min(fit_decay_exponent(&samples)?);
            }
            if mrow.iter().all(|&v| v > 0.0) {
                let samples: Vec<_> = radii.iter().copied().zip(mrow.iter().copied()).collect();
                overall = overall.min(fit_decay_exponent(&samples)?);
            }
        }
        longitudinal.push(lrow);
        magnitude.push(mrow);
    }
    let medium_range = long_exp > 1.0 + INTEGRABLE_MARGIN && overall > 0.5;
    Ok(LongitudinalProfile {
        directions: directions.to_vec(),
        radii: radii.to_vec(),
        longitudinal,
        magnitude,
        longitudinal_exponent: long_exp,
        overall_exponent: overall,
        medium_range,
    })
}
