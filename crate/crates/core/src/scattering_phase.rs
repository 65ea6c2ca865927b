//! High-energy phase of the scattering operator, its behaviour under gauge
//! changes, and the forward/inverse machinery for the electric potential.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field_models::{Dim, FieldModel, ScalarPotentialModel};
use crate::gauges::{asymptotic_lambda, coulomb_potential, loop_residual, transversal_gauge, GaugeFunction, GaugeKind, VectorPotential};
use crate::grid::{GridSpec, SampledField};
use crate::propagator::{Mode, Spectral, WavePacket};
use crate::quadrature::{self, gauss_legendre, QuadValue, Tolerance};
use crate::vec3::Vec3;
use crate::xray::{self, LineOptions, Reconstruction, SinoLayout, Sinogram};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Packet amplitudes below this fraction of the peak are masked on extraction.
pub const MASK_THRESHOLD: f64 = 1e-3;

fn planar_direction(omega: Vec3) -> Result<Vec3> {
    let w = Vec3::planar(omega.x, omega.y);
    if !(w.norm() > 0.0) || !w.is_finite() {
        return Err(Error::Config(format!("direction {omega:?} has no planar part")));
    }
    Ok(w.normalized())
}

fn require_planar(dim: Dim, context: &'static str) -> Result<()> {
    if dim != Dim::Two {
        return Err(Error::UnsupportedDimension { found: dim.n(), context });
    }
    Ok(())
}

/// `e^{ia(ω,·)}` on a transverse lattice `{d ω⊥}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighEnergyPhase {
    pub omega: Vec3,
    pub offsets: Vec<f64>,
    pub points: Vec<Vec3>,
    pub phase: Vec<f64>,
    pub exp: Vec<Complex64>,
}

impl HighEnergyPhase {
    /// The phase factor on a one-dimensional grid (interleaved re, im).
    /// Offsets must be uniformly spaced.
    pub fn to_field(&self) -> Result<SampledField> {
        let n = self.offsets.len();
        let step = if n > 1 { (self.offsets[n - 1] - self.offsets[0]) / (n - 1) as f64 } else { 1.0 };
        if self.offsets.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs().max(1.0)) {
            return Err(Error::Shape("phase offsets are not uniformly spaced".into()));
        }
        let grid = GridSpec::new(vec![n], vec![step], vec![self.offsets[0]])?;
        SampledField::from_complex(grid, &self.exp)
    }
}

/// `a(ω, dω⊥)` and `e^{ia}` for every offset `d`.
pub fn high_energy_phase(a: &VectorPotential, omega: Vec3, offsets: &[f64]) -> Result<HighEnergyPhase> {
    require_planar(a.dim, "transverse phase lattices are planar")?;
    let w = planar_direction(omega)?;
    let points: Vec<Vec3> = offsets.iter().map(|&d| w.perp() * d).collect();
    let phase = points.par_iter().map(|&x| xray::line_integral_a(a, w, x)).collect::<Result<Vec<_>>>()?;
    let exp = phase.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
    Ok(HighEnergyPhase { omega: w, offsets: offsets.to_vec(), points, phase, exp })
}

/// Phase difference between two gauges of one field along a direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeShift {
    /// Mean of `a′ − a` over the lattice.
    pub shift: f64,
    pub max_deviation: f64,
    /// `Λ(ω) − Λ(−ω)` when a gauge function was supplied.
    pub lambda_shift: Option<f64>,
}

/// Compares `a′(ω,·) − a(ω,·)` on a transverse lattice.
///
/// The pair must pass the loop check of [`crate::gauges::extract_lambda`]. The
/// difference must be constant to `tol`; with `lambda` given it must also equal
/// `Λ(ω) − Λ(−ω)` to `tol`.
pub fn phase_gauge_shift(
    a: &VectorPotential,
    a_prime: &VectorPotential,
    omega: Vec3,
    offsets: &[f64],
    tol: f64,
    lambda: Option<&GaugeFunction>,
) -> Result<GaugeShift> {
    if a.dim != a_prime.dim {
        return Err(Error::Shape("potentials have different dimensions".into()));
    }
    if offsets.is_empty() {
        return Err(Error::Shape("empty transverse lattice".into()));
    }
    let residual = loop_residual(a, a_prime)?;
    let loop_tol = (1e-5f64).max(100.0 * (a.tol + a_prime.tol));
    if residual > loop_tol {
        return Err(Error::NotAGaugePair { residual, tol: loop_tol });
    }
    let p = high_energy_phase(a, omega, offsets)?;
    let q = high_energy_phase(a_prime, omega, offsets)?;
    let diff: Vec<f64> = q.phase.iter().zip(&p.phase).map(|(x, y)| x - y).collect();
    let shift = diff.iter().sum::<f64>() / diff.len() as f64;
    let max_deviation = diff.iter().map(|d| (d - shift).abs()).fold(0.0, f64::max);
    if max_deviation > tol {
        return Err(Error::GaugeModel { deviation: max_deviation });
    }
    let lambda_shift = match lambda {
        Some(l) => {
            let w = p.omega;
            let v = asymptotic_lambda(l, w)?.value - asymptotic_lambda(l, w * -1.0)?.value;
            if (v - shift).abs() > tol {
                return Err(Error::GaugeModel { deviation: (v - shift).abs() });
            }
            Some(v)
        }
        None => None,
    };
    Ok(GaugeShift { shift, max_deviation, lambda_shift })
}

/// `∫₀^∞ ω·A(tω) dt`.
///
/// The modifier `∫₀^∞ p·A(sp) ds` depends on `p` only through its direction:
/// substituting `t = s|p|` gives the integral above with `ω = p/|p|`.
pub fn modified_phase(a: &VectorPotential, omega: Vec3) -> Result<f64> {
    let w = match a.dim {
        Dim::Two => planar_direction(omega)?,
        Dim::Three => omega.normalized(),
    };
    if a.kind == GaugeKind::Transversal {
        // x·A(x) = 0 makes the integrand vanish identically
        return Ok(0.0);
    }
    let est = quadrature::integrate_upper(
        |t: f64| Ok(w.dot(a.eval(w * t)?)),
        0.0,
        &a.line_breaks(Vec3::ZERO, w),
        Tolerance::new(a.tol.max(1e-10), 1e-12),
    )?;
    Ok(est.value)
}

/// `a(ω,x) − ∫₀^∞ ω·A(tω) dt − ∫_{−∞}^0 ω·A(tω) dt`, unchanged by gauge transformations.
pub fn invariant_phase(a: &VectorPotential, omega: Vec3, x: Vec3) -> Result<f64> {
    let w = match a.dim {
        Dim::Two => planar_direction(omega)?,
        Dim::Three => omega.normalized(),
    };
    Ok(xray::line_integral_a(a, w, x)? - modified_phase(a, w)? + modified_phase(a, w * -1.0)?)
}

/// Half-line selector: `+` integrates over `[0, ∞)`, `−` over `(−∞, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn sigma(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

impl FromStr for Sign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(Sign::Plus),
            "-" | "minus" => Ok(Sign::Minus),
            _ => Err(Error::Config(format!("unknown sign '{s}'"))),
        }
    }
}

/// Part of `H_σ` on the line `x + tω` where `B` can be nonzero; `None` if empty.
fn half_range(b: &FieldModel, x: Vec3, w: Vec3, sign: Sign) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = match sign {
        Sign::Plus => (0.0, f64::INFINITY),
        Sign::Minus => (f64::NEG_INFINITY, 0.0),
    };
    if b.effective_radius.is_finite() {
        let r = b.effective_radius;
        let p = x.dot(w);
        let disc = p * p - x.norm_sq() + r * r;
        if disc <= 0.0 {
            return None;
        }
        lo = lo.max(-p - disc.sqrt());
        hi = hi.min(-p + disc.sqrt());
    }
    (lo < hi).then_some((lo, hi))
}

fn integrate_range<T, F>(f: F, lo: f64, hi: f64, breaks: &[f64], tol: Tolerance) -> Result<T>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T>,
{
    let est = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => quadrature::integrate_with_breaks(f, lo, hi, breaks, tol)?,
        (true, false) => quadrature::integrate_upper(f, lo, breaks, tol)?,
        (false, true) => quadrature::integrate_lower(f, hi, breaks, tol)?,
        (false, false) => quadrature::integrate_real_line(f, breaks, tol)?,
    };
    Ok(est.value)
}

/// `A_±^ω(x) = ±∫_{H_±} ω×B(x+ωs) ds`, the gauge with `ω·A = 0` that vanishes
/// on the far side of the field in direction `±ω`.
#[derive(Clone)]
pub struct AdaptedPotential {
    pub omega: Vec3,
    pub sign: Sign,
    pub field: FieldModel,
    /// Gauge from which `λ_±^ω` is measured.
    pub reference: VectorPotential,
    pub tol: f64,
}

impl fmt::Debug for AdaptedPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdaptedPotential")
            .field("omega", &self.omega)
            .field("sign", &self.sign)
            .field("field", &self.field.label)
            .field("reference", &self.reference.label)
            .finish()
    }
}

/// Adapted potential for `B` along `±ω`. The reference gauge defaults to the
/// transversal gauge for fields without jumps and to the Coulomb gauge otherwise.
pub fn adapted_potential(b: &FieldModel, omega: Vec3, sign: Sign, reference: Option<VectorPotential>) -> Result<AdaptedPotential> {
    if !(b.mu > 2.0) {
        return Err(Error::DecayClass(format!("adapted potentials need mu > 2, field has {}", b.mu)));
    }
    let w = match b.dim {
        Dim::Two => planar_direction(omega)?,
        Dim::Three => {
            if !(omega.norm() > 0.0) {
                return Err(Error::Config("direction must be nonzero".into()));
            }
            omega.normalized()
        }
    };
    let reference = match reference {
        Some(r) => {
            if r.dim != b.dim {
                return Err(Error::Shape("reference gauge dimension differs from the field".into()));
            }
            r
        }
        None if b.is_smooth() => transversal_gauge(b),
        None => coulomb_potential(b),
    };
    Ok(AdaptedPotential { omega: w, sign, field: b.clone(), reference, tol: b.default_tol() * 0.01 })
}

impl AdaptedPotential {
    fn base(&self, x: Vec3) -> Vec3 {
        if self.field.dim == Dim::Two {
            Vec3::planar(x.x, x.y)
        } else {
            x
        }
    }

    fn half_line<T: QuadValue>(&self, x: Vec3, f: impl Fn(Vec3) -> T) -> Result<T> {
        let w = self.omega;
        let Some((lo, hi)) = half_range(&self.field, x, w, self.sign) else {
            return Ok(T::zero());
        };
        let breaks = self.field.line_breaks(x, w);
        integrate_range(|t: f64| Ok(f(x + w * t)), lo, hi, &breaks, Tolerance::new(self.tol, 1e-12))
    }

    pub fn eval(&self, x: Vec3) -> Result<Vec3> {
        let x = self.base(x);
        let v = self.half_line(x, |y| self.field.eval(y))?;
        Ok(self.omega.cross(v) * self.sign.sigma())
    }

    /// `λ_±^ω(x) = ±∫_{H_±} ω·A(x+ωs) ds` for the reference gauge, so that `A_±^ω = A + ∇λ_±^ω`.
    pub fn lambda(&self, x: Vec3) -> Result<f64> {
        let x = self.base(x);
        let w = self.omega;
        let a = &self.reference;
        let mut breaks = a.line_breaks(x, w);
        breaks.push(0.0);
        let (lo, hi) = match self.sign {
            Sign::Plus => (0.0, f64::INFINITY),
            Sign::Minus => (f64::NEG_INFINITY, 0.0),
        };
        let v: f64 = integrate_range(|t: f64| Ok(w.dot(a.eval(x + w * t)?)), lo, hi, &breaks, Tolerance::new(a.tol.max(1e-10), 1e-12))
            .map_err(|e| match e {
                Error::Quadrature { requested, achieved } => Error::Integrability(format!(
                    "half-line integral of the reference gauge did not converge ({achieved:e} above {requested:e})"
                )),
                other => other,
            })?;
        Ok(v * self.sign.sigma())
    }

    /// `div A_±^ω(x) = ∓∫_{H_±} ω·curl B(x+ωs) ds` when `curl B` is known, else
    /// second-order central differences of [`AdaptedPotential::eval`].
    pub fn div(&self, x: Vec3) -> Result<f64> {
        let x = self.base(x);
        if self.field.has_curl() {
            let w = self.omega;
            let v = self.half_line(x, |y| w.dot(self.field.curl(y).unwrap_or(Vec3::ZERO)))?;
            return Ok(-self.sign.sigma() * v);
        }
        let h = 1e-3;
        let axes: &[Vec3] = if self.field.dim == Dim::Two { &[Vec3::E1, Vec3::E2] } else { &[Vec3::E1, Vec3::E2, Vec3::E3] };
        let mut total = 0.0;
        for (k, e) in axes.iter().enumerate() {
            let up = self.eval(x + *e * h)?.to_array()[k];
            let down = self.eval(x - *e * h)?.to_array()[k];
            total += (up - down) / (2.0 * h);
        }
        Ok(total)
    }
}

/// Sampled coefficients of `K_±^ω = (1/2m)(−2A·p + i div A + A² − σ₃B)` with
/// `A = A_±^ω`; the spin term is present in Pauli mode only.
pub struct KOperatorSpec {
    pub grid: GridSpec,
    pub omega: Vec3,
    pub sign: Sign,
    pub mass: f64,
    pub mode: Mode,
    /// `−A/m`, two components per node.
    pub vector_coef: SampledField,
    /// `(i div A + A²)/2m`.
    pub scalar_coef: Vec<Complex64>,
    /// `−B/2m`.
    pub spin_coef: Option<Vec<f64>>,
    ops: Spectral,
}

impl fmt::Debug for KOperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KOperatorSpec")
            .field("grid", &self.grid)
            .field("omega", &self.omega)
            .field("sign", &self.sign)
            .field("mass", &self.mass)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

impl KOperatorSpec {
    pub fn new(adapted: &AdaptedPotential, grid: &GridSpec, mass: f64, mode: Mode) -> Result<Self> {
        KOperatorSpec::shifted(adapted, grid, mass, mode, 0.0)
    }

    /// Coefficients sampled at `x + tω`, i.e. `e^{itω·p} K e^{−itω·p}`.
    pub fn shifted(adapted: &AdaptedPotential, grid: &GridSpec, mass: f64, mode: Mode, t: f64) -> Result<Self> {
        require_planar(adapted.field.dim, "K operators act on planar packets")?;
        if grid.ndim() != 2 {
            return Err(Error::Shape("K operators need a planar grid".into()));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Config(format!("mass {mass} must be positive")));
        }
        let inv2m = 0.5 / mass;
        let w = adapted.omega;
        let nodes: Vec<(Vec3, f64, f64)> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let y = grid.position(i) + w * t;
                Ok((adapted.eval(y)?, adapted.div(y)?, adapted.field.scalar(y)))
            })
            .collect::<Result<_>>()?;
        let mut vec_values = Vec::with_capacity(2 * nodes.len());
        let mut scalar_coef = Vec::with_capacity(nodes.len());
        for (a, div, _) in &nodes {
            if !(a.is_finite() && div.is_finite()) {
                return Err(Error::Domain("adapted potential is not finite on the grid".into()));
            }
            vec_values.push(-a.x / mass);
            vec_values.push(-a.y / mass);
            scalar_coef.push(Complex64::new(a.norm_sq(), *div) * inv2m);
        }
        let spin_coef = (mode == Mode::Pauli).then(|| nodes.iter().map(|n| -n.2 * inv2m).collect());
        Ok(KOperatorSpec {
            grid: grid.clone(),
            omega: w,
            sign: adapted.sign,
            mass,
            mode,
            vector_coef: SampledField::new(grid.clone(), 2, vec_values)?,
            scalar_coef,
            spin_coef,
            ops: Spectral::new(grid),
        })
    }
}

/// `Kψ` with `p` applied spectrally.
pub fn apply_k(k: &KOperatorSpec, psi: &WavePacket) -> Result<WavePacket> {
    if psi.grid != k.grid {
        return Err(Error::Shape("packet grid differs from the K-operator grid".into()));
    }
    if psi.spin != k.mode.spin_components() {
        return Err(Error::Shape(format!("{} mode needs {} spin components, packet has {}", k.mode, k.mode.spin_components(), psi.spin)));
    }
    let mut out = psi.clone();
    for s in 0..psi.spin {
        let comp = psi.spin_component(s);
        let (px, py) = k.ops.momentum(&comp);
        let res: Vec<Complex64> = (0..comp.len())
            .map(|i| {
                let mut r = px[i] * k.vector_coef.get(i, 0) + py[i] * k.vector_coef.get(i, 1) + comp[i] * k.scalar_coef[i];
                if let Some(b) = &k.spin_coef {
                    // −σ₃B/2m: upper component −B, lower +B
                    r += comp[i] * if s == 0 { b[i] } else { -b[i] };
                }
                r
            })
            .collect();
        out.set_spin_component(s, &res);
    }
    Ok(out)
}

/// Integrals over `t ∈ H_σ` of the `K_σ` coefficients at `x + tω` (planar):
/// with `b(u) = B(x+uω)`, `β_σ` the half-line integral of `b` and `n = (ω₂, −ω₁)`,
/// `∫A = n·∫_{H_σ} u b`, `∫div A = ∫_{H_σ} u ∂_n b`, `∫A² = ∫_{H_σ} β_σ²`, `∫B = ∫_{H_σ} b`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct HalfLineTerms {
    s: f64,
    i: f64,
    j: f64,
    q: f64,
}

impl HalfLineTerms {
    fn max_diff(&self, o: &HalfLineTerms) -> f64 {
        (self.s - o.s).abs().max((self.i - o.i).abs()).max((self.j - o.j).abs()).max((self.q - o.q).abs())
    }

    fn scale(&self) -> f64 {
        1.0 + self.s.abs().max(self.i.abs()).max(self.j.abs()).max(self.q.abs())
    }
}

const PANEL_NODES: usize = 8;
const DIFF_STEP: f64 = 1e-3;

struct LineRule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl LineRule {
    fn new() -> Self {
        let (x, w) = gauss_legendre(PANEL_NODES);
        LineRule { x, w }
    }

    fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.x.iter().zip(&self.w).map(move |(x, w)| (c + h * x, h * w))
    }
}

fn panels(lo: f64, hi: f64, breaks: &[f64], h: f64) -> Vec<(f64, f64)> {
    let mut pts = vec![lo];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&p| p > lo && p < hi).collect();
    inner.sort_by(f64::total_cmp);
    pts.extend(inner);
    pts.push(hi);
    let mut out = Vec::new();
    for seg in pts.windows(2) {
        let len = seg[1] - seg[0];
        if len <= 0.0 {
            continue;
        }
        let n = (len / h).ceil().max(1.0) as usize;
        for k in 0..n {
            out.push((seg[0] + len * k as f64 / n as f64, seg[0] + len * (k + 1) as f64 / n as f64));
        }
    }
    out
}

fn normal_derivative(b: &FieldModel, y: Vec3, n: Vec3) -> f64 {
    // curl B = (∂₂B, −∂₁B) in the plane
    let c = b.curl(y).unwrap_or(Vec3::ZERO);
    n.x * -c.y + n.y * c.x
}

/// `∫_{H_σ} u B(x+uω) du` on fixed panels.
fn first_moment_panels(b: &FieldModel, x: Vec3, w: Vec3, sign: Sign, h: f64, rule: &LineRule) -> f64 {
    let Some((lo, hi)) = half_range(b, x, w, sign) else {
        return 0.0;
    };
    panels(lo, hi, &b.line_breaks(x, w), h)
        .iter()
        .map(|&(a, c)| rule.on(a, c).map(|(u, wt)| wt * u * b.scalar(x + w * u)).sum::<f64>())
        .sum()
}

fn terms_on_panels(b: &FieldModel, x: Vec3, w: Vec3, sign: Sign, lo: f64, hi: f64, h: f64, rule: &LineRule) -> HalfLineTerms {
    let n = Vec3::planar(w.y, -w.x);
    let ps = panels(lo, hi, &b.line_breaks(x, w), h);
    let curl = b.has_curl();
    let f = |u: f64| b.scalar(x + w * u);
    let mut t = HalfLineTerms::default();
    let mut totals = Vec::with_capacity(ps.len());
    for &(a, c) in &ps {
        let mut pk = 0.0;
        for (u, wt) in rule.on(a, c) {
            let bv = f(u);
            pk += wt * bv;
            t.i += wt * u * bv;
            if curl {
                t.j += wt * u * normal_derivative(b, x + w * u, n);
            }
        }
        totals.push(pk);
        t.s += pk;
    }
    // β_σ at each node: whole panels plus a partial panel
    let mut outside = vec![0.0; ps.len()];
    match sign {
        Sign::Plus => {
            for k in (0..ps.len().saturating_sub(1)).rev() {
                outside[k] = outside[k + 1] + totals[k + 1];
            }
        }
        Sign::Minus => {
            for k in 1..ps.len() {
                outside[k] = outside[k - 1] + totals[k - 1];
            }
        }
    }
    for (k, &(a, c)) in ps.iter().enumerate() {
        for (u, wt) in rule.on(a, c) {
            let partial: f64 = match sign {
                Sign::Plus => rule.on(u, c).map(|(v, wv)| wv * f(v)).sum(),
                Sign::Minus => rule.on(a, u).map(|(v, wv)| wv * f(v)).sum(),
            };
            let beta = outside[k] + partial;
            t.q += wt * beta * beta;
        }
    }
    if !curl {
        let e = DIFF_STEP;
        t.j = (first_moment_panels(b, x + n * e, w, sign, h, rule) - first_moment_panels(b, x - n * e, w, sign, h, rule)) / (2.0 * e);
    }
    t
}

fn terms_adaptive(b: &FieldModel, x: Vec3, w: Vec3, sign: Sign, lo: f64, hi: f64, tol: f64) -> Result<HalfLineTerms> {
    let n = Vec3::planar(w.y, -w.x);
    let breaks = b.line_breaks(x, w);
    let qt = Tolerance::new(tol, 1e-12);
    let f = |u: f64| b.scalar(x + w * u);
    let s = integrate_range(|u: f64| Ok(f(u)), lo, hi, &breaks, qt)?;
    let i = integrate_range(|u: f64| Ok(u * f(u)), lo, hi, &breaks, qt)?;
    let j = if b.has_curl() {
        integrate_range(|u: f64| Ok(u * normal_derivative(b, x + w * u, n)), lo, hi, &breaks, qt)?
    } else {
        let e = DIFF_STEP;
        let moment = |y: Vec3| -> Result<f64> {
            match half_range(b, y, w, sign) {
                Some((l, h)) => integrate_range(|u: f64| Ok(u * b.scalar(y + w * u)), l, h, &b.line_breaks(y, w), qt.inner(0.01)),
                None => Ok(0.0),
            }
        };
        (moment(x + n * e)? - moment(x - n * e)?) / (2.0 * e)
    };
    let inner = qt.inner(0.01);
    let beta = |t: f64| -> Result<f64> {
        match sign {
            Sign::Plus => integrate_range(|u: f64| Ok(f(u)), t, f64::INFINITY, &breaks, inner),
            Sign::Minus => integrate_range(|u: f64| Ok(f(u)), f64::NEG_INFINITY, t, &breaks, inner),
        }
    };
    let q = integrate_range(
        |t: f64| {
            let v = beta(t)?;
            Ok(v * v)
        },
        lo,
        hi,
        &breaks,
        qt,
    )?;
    Ok(HalfLineTerms { s, i, j, q })
}

fn half_line_terms(b: &FieldModel, x: Vec3, w: Vec3, sign: Sign, tol: f64, rule: &LineRule) -> Result<HalfLineTerms> {
    let Some((lo, hi)) = half_range(b, x, w, sign) else {
        return Ok(HalfLineTerms::default());
    };
    if !(lo.is_finite() && hi.is_finite()) {
        return terms_adaptive(b, x, w, sign, lo, hi, tol);
    }
    let mut h = (hi - lo).min(1.0);
    let mut coarse = terms_on_panels(b, x, w, sign, lo, hi, h, rule);
    let mut change = f64::INFINITY;
    for _ in 0..8 {
        h *= 0.5;
        let fine = terms_on_panels(b, x, w, sign, lo, hi, h, rule);
        change = fine.max_diff(&coarse);
        if change <= tol * fine.scale() {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(Error::Quadrature { requested: tol, achieved: change })
}

/// Per-node data shared by the forward map and the extraction.
struct LimitTerms {
    phase: Vec<f64>,
    /// `(T₋ + e^{−ia}K̄₊e^{ia})ψ`, interleaved like the packet.
    k_terms: Vec<Complex64>,
    /// `∫A₀(x+tω)dt`, when requested.
    a0_xray: Option<Vec<f64>>,
}

fn default_reference(b: &FieldModel) -> VectorPotential {
    if b.is_smooth() {
        transversal_gauge(b)
    } else {
        coulomb_potential(b)
    }
}

fn check_limit_inputs(b: &FieldModel, psi: &WavePacket, reference: Option<&VectorPotential>, mode: Mode) -> Result<()> {
    require_planar(b.dim, "the electric-potential pipeline is planar")?;
    if psi.spin != mode.spin_components() {
        return Err(Error::Shape(format!("{mode} mode needs {} spin components, packet has {}", mode.spin_components(), psi.spin)));
    }
    let adaptive_reference = matches!(reference.map(|r| r.kind), Some(GaugeKind::Adaptive(_)));
    if !(b.mu > 2.0) && !adaptive_reference {
        return Err(Error::DecayClass(format!("mu = {} needs an adaptive reference gauge", b.mu)));
    }
    if let Some(r) = reference {
        require_planar(r.dim, "the electric-potential pipeline is planar")?;
    }
    Ok(())
}

fn limit_terms(
    a0: Option<&ScalarPotentialModel>,
    b: &FieldModel,
    w: Vec3,
    psi: &WavePacket,
    reference: Option<&VectorPotential>,
    mode: Mode,
) -> Result<LimitTerms> {
    let owned;
    let reference = match reference {
        Some(r) => r,
        None => {
            owned = default_reference(b);
            &owned
        }
    };
    let grid = &psi.grid;
    let tol = b.default_tol() * 1e-2;
    let rule = LineRule::new();
    let a0_opts = LineOptions::default();
    type Node = (f64, f64, HalfLineTerms, HalfLineTerms, f64);
    let nodes: Vec<Node> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let x = grid.position(idx);
            let plus = half_line_terms(b, x, w, Sign::Plus, tol, &rule)?;
            let minus = half_line_terms(b, x, w, Sign::Minus, tol, &rule)?;
            let a = xray::line_integral_a(reference, w, x)?;
            let xa0 = match a0 {
                Some(m) => xray::scalar_line_integral(&|y| m.eval(y), x, w, &a0_opts)?,
                None => 0.0,
            };
            Ok((a, plus.s + minus.s, plus, minus, xa0))
        })
        .collect::<Result<_>>()?;
    let ops = Spectral::new(grid);
    let inv2m = 0.5 / psi.mass;
    let n = Vec3::planar(w.y, -w.x);
    let perp = w.perp();
    let mut k_terms = vec![Complex64::default(); psi.data.len()];
    for s in 0..psi.spin {
        let comp = psi.spin_component(s);
        let (px, py) = ops.momentum(&comp);
        // −σ₃: upper component −1, lower +1
        let spin_sign = if mode == Mode::Pauli { if s == 0 { -1.0 } else { 1.0 } } else { 0.0 };
        for (i, (_, xb, plus, minus, _)) in nodes.iter().enumerate() {
            let v = comp[i];
            let p = (px[i], py[i]);
            // ∇a = −X[B](d) ω⊥, gauge independent
            let grad_a = perp * -xb;
            let dot = |c: f64, q: (Complex64, Complex64)| (q.0 * n.x + q.1 * n.y) * c;
            let minus_part = dot(minus.i, p) * -2.0 + v * Complex64::new(minus.q + spin_sign * minus.s, minus.j);
            let shifted = (p.0 + v * grad_a.x, p.1 + v * grad_a.y);
            let plus_part = dot(plus.i, shifted) * -2.0 + v * Complex64::new(plus.q + spin_sign * plus.s, plus.j);
            k_terms[i * psi.spin + s] = (minus_part + plus_part) * inv2m;
        }
    }
    Ok(LimitTerms {
        phase: nodes.iter().map(|n| n.0).collect(),
        k_terms,
        a0_xray: a0.map(|_| nodes.iter().map(|n| n.4).collect()),
    })
}

/// Leading high-energy correction to the scattering operator applied to `ψ`:
///
/// `−i e^{ia}∫A₀(x+tω)dt ψ − i e^{ia}∫_{−∞}^0 K₋(t)ψ dt − i ∫_0^∞ K₊(t) e^{ia}ψ dt`,
///
/// where `K_±(t)` has its coefficients shifted by `tω` and `a = a(ω,x)` comes
/// from the reference gauge. The time integrals act only on the coefficients,
/// so they are folded into integrated coefficients per node; `p(e^{ia}ψ)` uses
/// `∇a = −X[B](x·ω⊥) ω⊥`.
pub fn a0_forward_rhs(
    a0: &ScalarPotentialModel,
    b: &FieldModel,
    omega: Vec3,
    psi: &WavePacket,
    reference: Option<&VectorPotential>,
    mode: Mode,
) -> Result<WavePacket> {
    check_limit_inputs(b, psi, reference, mode)?;
    let w = planar_direction(omega)?;
    let terms = limit_terms(Some(a0), b, w, psi, reference, mode)?;
    let xa0 = terms.a0_xray.as_ref().expect("requested");
    let mut out = psi.clone();
    for (i, chunk) in out.data.chunks_mut(psi.spin).enumerate() {
        let factor = Complex64::from_polar(1.0, terms.phase[i]) * -I;
        for (s, v) in chunk.iter_mut().enumerate() {
            *v = factor * (*v * xa0[i] + terms.k_terms[i * psi.spin + s]);
        }
    }
    Ok(out)
}

/// Recovered `∫A₀(x+tω)dt` for one direction, binned by transverse offset.
#[derive(Debug, Clone, PartialEq)]
pub struct XraySlice {
    pub theta: f64,
    pub offsets: Vec<f64>,
    pub values: Vec<f64>,
    /// Offsets without any usable node.
    pub masked: Vec<bool>,
}

/// Local quadratic least-squares value at `u = 0`, falling back to lower degree
/// when the sample offsets do not spread.
fn local_fit(samples: &[(f64, f64)], scale: f64) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let mut m = [0.0f64; 5];
    let mut r = [0.0f64; 3];
    for &(u, v) in samples {
        let u = u / scale;
        let mut p = 1.0;
        for (k, mk) in m.iter_mut().enumerate() {
            *mk += p;
            if k < 3 {
                r[k] += p * v;
            }
            p *= u;
        }
    }
    let det3 = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let g = [[m[0], m[1], m[2]], [m[1], m[2], m[3]], [m[2], m[3], m[4]]];
    let det = det3(g);
    if samples.len() >= 3 && det.abs() > 1e-10 * n.powi(3) {
        let g0 = [[r[0], m[1], m[2]], [r[1], m[2], m[3]], [r[2], m[3], m[4]]];
        return det3(g0) / det;
    }
    let var = m[2] * m[0] - m[1] * m[1];
    if samples.len() >= 2 && var.abs() > 1e-12 * n * n {
        return (r[0] * m[2] - r[1] * m[1]) / var;
    }
    mean
}

/// Removes the `A₀`-independent K terms from limit data and divides by
/// `−i e^{ia}ψ`. Nodes where `|ψ|` is below [`MASK_THRESHOLD`] of its peak are
/// discarded; the rest are fitted per offset within one grid (or offset) spacing.
#[allow(clippy::too_many_arguments)]
pub fn extract_a0_xray(
    limit: &WavePacket,
    b: &FieldModel,
    omega: Vec3,
    psi: &WavePacket,
    reference: Option<&VectorPotential>,
    mode: Mode,
    offsets: &[f64],
) -> Result<XraySlice> {
    check_limit_inputs(b, psi, reference, mode)?;
    psi.check_compatible(limit)?;
    if offsets.is_empty() {
        return Err(Error::Shape("no offsets requested".into()));
    }
    let w = planar_direction(omega)?;
    let terms = limit_terms(None, b, w, psi, reference, mode)?;
    let spin = psi.spin;
    let amp: Vec<f64> = psi.density().iter().map(|v| v.sqrt()).collect();
    let peak = amp.iter().fold(0.0f64, |m, v| m.max(*v));
    let perp = w.perp();
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    for i in 0..psi.grid.len() {
        if !(amp[i] >= MASK_THRESHOLD * peak) || peak == 0.0 {
            continue;
        }
        let factor = Complex64::from_polar(1.0, -terms.phase[i]) * I;
        let mut num = Complex64::default();
        let mut den = 0.0;
        for s in 0..spin {
            let k = i * spin + s;
            let r = limit.data[k] * factor - terms.k_terms[k];
            num += psi.data[k].conj() * r;
            den += psi.data[k].norm_sqr();
        }
        nodes.push((psi.grid.position(i).dot(perp), num.re / den));
    }
    let h = psi.grid.spacing.iter().fold(0.0f64, |m, h| m.max(*h));
    let step = if offsets.len() > 1 { (offsets[offsets.len() - 1] - offsets[0]).abs() / (offsets.len() - 1) as f64 } else { h };
    let window = step.min(h) * (1.0 + 1e-9);
    let mut values = Vec::with_capacity(offsets.len());
    let mut masked = Vec::with_capacity(offsets.len());
    for &o in offsets {
        let local: Vec<(f64, f64)> = nodes.iter().filter(|(d, _)| (d - o).abs() <= window).map(|(d, v)| (d - o, *v)).collect();
        if local.is_empty() {
            values.push(0.0);
            masked.push(true);
        } else {
            values.push(local_fit(&local, window));
            masked.push(false);
        }
    }
    Ok(XraySlice { theta: w.y.atan2(w.x), offsets: offsets.to_vec(), values, masked })
}

/// Filtered backprojection of recovered slices. Slices must share their
/// offsets and be ordered by uniformly spaced angles; masked samples enter as zero.
pub fn reconstruct_a0(slices: &[XraySlice], grid: &GridSpec) -> Result<Reconstruction> {
    let Some(first) = slices.first() else {
        return Err(Error::Shape("no slices".into()));
    };
    let n_off = first.offsets.len();
    if n_off < 2 {
        return Err(Error::Shape("slices need at least two offsets".into()));
    }
    let off_step = (first.offsets[n_off - 1] - first.offsets[0]) / (n_off - 1) as f64;
    if first.offsets.windows(2).any(|p| ((p[1] - p[0]) - off_step).abs() > 1e-9 * off_step.abs()) {
        return Err(Error::Shape("slice offsets are not uniformly spaced".into()));
    }
    let angle_step = if slices.len() > 1 { (slices[slices.len() - 1].theta - first.theta) / (slices.len() - 1) as f64 } else { std::f64::consts::PI };
    for (k, s) in slices.iter().enumerate() {
        if s.offsets != first.offsets || s.values.len() != n_off {
            return Err(Error::Shape(format!("slice {k} has different offsets")));
        }
        if (s.theta - (first.theta + angle_step * k as f64)).abs() > 1e-9 {
            return Err(Error::Shape(format!("slice {k} breaks the uniform angle spacing")));
        }
    }
    let layout = SinoLayout {
        angle_start: first.theta,
        angle_step,
        n_angles: slices.len(),
        offset_start: first.offsets[0],
        offset_step: off_step,
        n_offsets: n_off,
    };
    let mut sino = Sinogram::zeros(layout);
    let mut n_masked = 0;
    for (k, s) in slices.iter().enumerate() {
        for (j, (v, m)) in s.values.iter().zip(&s.masked).enumerate() {
            if *m {
                n_masked += 1;
            } else {
                sino.row_mut(k)[j] = *v;
            }
        }
    }
    let mut rec = xray::fbp_invert(&sino, grid)?;
    if n_masked > 0 {
        rec.warnings.push(format!("{n_masked} masked samples entered the sinogram as zero"));
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_models::make_test_field;
    use crate::gauges::{adaptive_gauge, extract_lambda, SectorProfile};
    use crate::quadrature::gauss_legendre_on;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn erf(x: f64) -> f64 {
        // Simpson on [0, x] with 2000 panels
        let n = 2000;
        let h = x / n as f64;
        let f = |t: f64| (-t * t).exp();
        let mut s = f(0.0) + f(x);
        for k in 1..n {
            s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0 * 2.0 / PI.sqrt()
    }

    #[test]
    fn phase_of_zero_potential_is_one() {
        let p = high_energy_phase(&VectorPotential::zero(Dim::Two), Vec3::E1, &[-1.0, 0.0, 2.5]).unwrap();
        assert!(p.exp.iter().all(|c| *c == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn transversal_phase_matches_erf() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let a = transversal_gauge(&b);
        let offsets = [-2.0, -0.5, 0.0, 0.7, 8.0];
        let p = high_energy_phase(&a, Vec3::E1, &offsets).unwrap();
        for (k, &d) in offsets.iter().enumerate() {
            assert_abs_diff_eq!(p.phase[k], -0.5 * PI * erf(d), epsilon = 1e-6);
            assert!((p.exp[k].norm() - 1.0).abs() <= 4.0 * f64::EPSILON);
        }
        assert_abs_diff_eq!(p.exp[4].re, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.exp[4].im, -1.0, epsilon = 1e-6);
        let field = p.to_field();
        assert!(field.is_err());
        let uniform = high_energy_phase(&a, Vec3::E1, &[0.0, 0.5, 1.0]).unwrap().to_field().unwrap();
        assert_eq!(uniform.components, 2);
    }

    #[test]
    fn gauge_shift_of_identical_and_gradient_pairs() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let a = transversal_gauge(&b);
        let offsets: Vec<f64> = (-4..=4).map(|k| k as f64 * 0.5).collect();
        let same = phase_gauge_shift(&a, &a, Vec3::E1, &offsets, 1e-10, None).unwrap();
        assert_eq!(same.shift, 0.0);
        assert_eq!(same.max_deviation, 0.0);
        // λ = e^{−x²−2y²}(1 + x)
        let shifted = a.plus_gradient("bump", |x| {
            let e = (-(x.x * x.x + 2.0 * x.y * x.y)).exp();
            Vec3::planar(e * (1.0 - 2.0 * x.x * (1.0 + x.x)), -4.0 * x.y * e * (1.0 + x.x))
        });
        let g = phase_gauge_shift(&a, &shifted, Vec3::from_angle(0.4), &offsets, 1e-4, None).unwrap();
        assert_abs_diff_eq!(g.shift, 0.0, epsilon = 1e-5);
    }

    #[test]
    fn adaptive_pair_shift_follows_profile() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let c = coulomb_potential(&b);
        let ad = adaptive_gauge(&b, Vec3::E1).unwrap();
        let offsets = [-1.5, -0.25, 0.5, 2.0];
        let lam = extract_lambda(&c, &ad).unwrap();
        let g = phase_gauge_shift(&c, &ad, Vec3::E1, &offsets, 1e-4, Some(&lam)).unwrap();
        // A′ = A − ∇(χ f), so the shift is −(f(0) − f(π))
        let p = SectorProfile::new(Vec3::E1, PI);
        assert_abs_diff_eq!(g.shift, -(p.f(0.0) - p.f(PI)), epsilon = 1e-4);
        assert_abs_diff_eq!(g.lambda_shift.unwrap(), g.shift, epsilon = 1e-4);
    }

    #[test]
    fn modified_phase_values() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        assert_eq!(modified_phase(&transversal_gauge(&b), Vec3::from_angle(0.3)).unwrap(), 0.0);
        assert_abs_diff_eq!(modified_phase(&coulomb_potential(&b), Vec3::from_angle(0.3)).unwrap(), 0.0, epsilon = 1e-6);
        // along a ray the adaptive correction contributes −∫χ′ f = −f(θ)
        let ad = adaptive_gauge(&b, Vec3::E1).unwrap();
        let p = SectorProfile::new(Vec3::E1, PI);
        for theta in [0.9, 2.0, -1.2] {
            assert_abs_diff_eq!(modified_phase(&ad, Vec3::from_angle(theta)).unwrap(), -p.f(theta), epsilon = 1e-6);
        }
    }

    #[test]
    fn invariant_phase_agrees_across_gauges() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let gauges = [transversal_gauge(&b), coulomb_potential(&b), adaptive_gauge(&b, Vec3::E1).unwrap()];
        let w = Vec3::from_angle(1.1);
        for x in [Vec3::planar(0.3, -0.4), Vec3::planar(-2.0, 1.0)] {
            let v: Vec<f64> = gauges.iter().map(|a| invariant_phase(a, w, x).unwrap()).collect();
            assert_abs_diff_eq!(v[0], v[1], epsilon = 1e-4);
            assert_abs_diff_eq!(v[0], v[2], epsilon = 1e-4);
        }
    }

    #[test]
    fn adapted_potential_values() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let ap = adapted_potential(&b, Vec3::E1, Sign::Plus, None).unwrap();
        let v = ap.eval(Vec3::ZERO).unwrap();
        assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.y, -0.5 * PI.sqrt(), epsilon = 1e-10);
        let am = adapted_potential(&b, Vec3::E1, Sign::Minus, None).unwrap();
        // the two half-lines differ by the full X-ray transform
        let x = Vec3::planar(0.4, 0.9);
        let diff = ap.eval(x).unwrap() - am.eval(x).unwrap();
        assert_abs_diff_eq!(diff.y, -PI.sqrt() * (-0.81f64).exp(), epsilon = 1e-9);
        let z = adapted_potential(&make_test_field("zero", &[]).unwrap(), Vec3::E1, Sign::Plus, None).unwrap();
        assert_eq!(z.eval(x).unwrap(), Vec3::ZERO);
        let slow = make_test_field("radial2d_powertail", &[1.75]).unwrap();
        assert!(matches!(adapted_potential(&slow, Vec3::E1, Sign::Plus, None), Err(Error::DecayClass(_))));
    }

    #[test]
    fn adapted_potential_is_a_gauge_of_the_reference() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        for sign in [Sign::Plus, Sign::Minus] {
            let ap = adapted_potential(&b, Vec3::from_angle(0.6), sign, None).unwrap();
            let x = Vec3::planar(0.5, -0.3);
            let h = 1e-3;
            let grad = Vec3::planar(
                (ap.lambda(x + Vec3::E1 * h).unwrap() - ap.lambda(x - Vec3::E1 * h).unwrap()) / (2.0 * h),
                (ap.lambda(x + Vec3::E2 * h).unwrap() - ap.lambda(x - Vec3::E2 * h).unwrap()) / (2.0 * h),
            );
            let expect = ap.reference.eval(x).unwrap() + grad;
            assert!((ap.eval(x).unwrap() - expect).norm() < 1e-5, "{sign}");
            // analytic divergence against differencing
            let fd = {
                let e = 1e-4;
                (ap.eval(x + Vec3::E1 * e).unwrap().x - ap.eval(x - Vec3::E1 * e).unwrap().x
                    + ap.eval(x + Vec3::E2 * e).unwrap().y
                    - ap.eval(x - Vec3::E2 * e).unwrap().y)
                    / (2.0 * e)
            };
            assert_abs_diff_eq!(ap.div(x).unwrap(), fd, epsilon = 1e-6);
        }
    }

    fn probe_grid() -> GridSpec {
        GridSpec::square(48, 14.0).unwrap()
    }

    #[test]
    fn k_operator_plane_wave_probe() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let ap = adapted_potential(&b, Vec3::E1, Sign::Plus, None).unwrap();
        let grid = GridSpec::square(81, 20.25).unwrap();
        let k = KOperatorSpec::new(&ap, &grid, 1.0, Mode::Schrodinger).unwrap();
        let q = Vec3::planar(0.0, 2.0);
        let psi = WavePacket::from_fn(grid.clone(), 1.0, |x| Complex64::from_polar((-(x.norm_sq()) / 4.0).exp(), q.dot(x))).unwrap();
        let origin = (0..grid.len()).find(|&i| grid.position(i).norm() < 1e-12).unwrap();
        let vector = k.vector_coef.get(origin, 0) * q.x + k.vector_coef.get(origin, 1) * q.y;
        assert_abs_diff_eq!(vector, 1.772454, epsilon = 1e-6);
        let kp = apply_k(&k, &psi).unwrap();
        // plus A²/2m = π/8 at the origin, where div A and the envelope gradient vanish
        let expect = (PI.sqrt() + PI / 8.0) * psi.data[origin];
        assert!((kp.data[origin] - expect).norm() < 1e-8, "{:?} vs {expect:?}", kp.data[origin]);
        let zero = adapted_potential(&make_test_field("zero", &[]).unwrap(), Vec3::E1, Sign::Plus, None).unwrap();
        let kz = KOperatorSpec::new(&zero, &grid, 1.0, Mode::Schrodinger).unwrap();
        assert!(apply_k(&kz, &psi).unwrap().data.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn k_operator_is_symmetric() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let grid = probe_grid();
        for (sign, mode) in [(Sign::Plus, Mode::Schrodinger), (Sign::Minus, Mode::Pauli)] {
            let ap = adapted_potential(&b, Vec3::from_angle(0.8), sign, None).unwrap();
            let k = KOperatorSpec::new(&ap, &grid, 1.3, mode).unwrap();
            let g = |c: Vec3, q: Vec3| WavePacket::gaussian(grid.clone(), c, 0.9, q, 1.3).unwrap();
            let mut phi = g(Vec3::planar(0.5, -1.0), Vec3::planar(0.7, 0.2));
            let mut psi = g(Vec3::planar(-0.8, 0.4), Vec3::planar(-0.3, 1.1));
            if mode == Mode::Pauli {
                phi = phi.with_spinor([Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]).unwrap();
                psi = psi.with_spinor([Complex64::new(0.8, 0.1), Complex64::new(-0.5, 0.0)]).unwrap();
            }
            let lhs = phi.inner(&apply_k(&k, &psi).unwrap());
            let rhs = apply_k(&k, &phi).unwrap().inner(&psi);
            assert!((lhs - rhs).norm() < 1e-8, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn enss_weder_limit_without_field() {
        let zero = make_test_field("zero", &[]).unwrap();
        let a0 = ScalarPotentialModel::gaussian(1.0, 1.0, Vec3::ZERO).unwrap();
        let grid = GridSpec::square(33, 8.25).unwrap();
        let one = WavePacket::from_fn(grid.clone(), 1.0, |_| Complex64::new(1.0, 0.0)).unwrap();
        let rhs = a0_forward_rhs(&a0, &zero, Vec3::E1, &one, None, Mode::Schrodinger).unwrap();
        for i in 0..grid.len() {
            let x = grid.position(i);
            let expect = -I * PI.sqrt() * (-x.y * x.y).exp();
            assert!((rhs.data[i] - expect).norm() < 1e-9);
        }
        let centre = (0..grid.len()).find(|&i| grid.position(i).norm() < 1e-12).unwrap();
        assert_abs_diff_eq!(rhs.data[centre].im, -1.772454, epsilon = 1e-6);
        let nothing = a0_forward_rhs(&ScalarPotentialModel::zero(), &zero, Vec3::E1, &one, None, Mode::Schrodinger).unwrap();
        assert!(nothing.data.iter().all(|v| v.norm() == 0.0));
    }

    /// `−i e^{ia} Σ w K₋(t)ψ − i Σ w K₊(t)(e^{ia}ψ)` with composite Gauss–Legendre in `t`.
    fn compositional_oracle(b: &FieldModel, w: Vec3, psi: &WavePacket, mode: Mode) -> WavePacket {
        let a = transversal_gauge(b);
        let phase: Vec<f64> = (0..psi.grid.len()).map(|i| xray::line_integral_a(&a, w, psi.grid.position(i)).unwrap()).collect();
        let rotated = psi.multiply_phase(&phase);
        let reach = 16.0;
        let mut minus = WavePacket::zeros(psi.grid.clone(), psi.spin, psi.mass).unwrap();
        let mut plus = minus.clone();
        for sign in [Sign::Plus, Sign::Minus] {
            let ap = adapted_potential(b, w, sign, None).unwrap();
            for panel in 0..16 {
                let (lo, hi) = (reach * panel as f64 / 16.0, reach * (panel + 1) as f64 / 16.0);
                for (t, wt) in gauss_legendre_on(10, lo, hi) {
                    let t = t * sign.sigma();
                    let k = KOperatorSpec::shifted(&ap, &psi.grid, psi.mass, mode, t).unwrap();
                    let (target, src) = match sign {
                        Sign::Plus => (&mut plus, &rotated),
                        Sign::Minus => (&mut minus, psi),
                    };
                    for (dst, v) in target.data.iter_mut().zip(apply_k(&k, src).unwrap().data) {
                        *dst += v * wt;
                    }
                }
            }
        }
        let mut out = minus.multiply_phase(&phase);
        for (o, p) in out.data.iter_mut().zip(&plus.data) {
            *o = (*o + p) * -I;
        }
        out
    }

    #[test]
    fn k_terms_match_compositional_oracle() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        // p(e^{ia}ψ) is taken spectrally here, which needs h ≈ 0.2 to reach 1e-9
        let grid = GridSpec::square(64, 14.0).unwrap();
        let w = Vec3::from_angle(0.5);
        let psi = WavePacket::gaussian(grid.clone(), Vec3::planar(0.3, -0.2), 1.0, Vec3::planar(0.4, 0.1), 1.0).unwrap();
        let rhs = a0_forward_rhs(&ScalarPotentialModel::zero(), &b, w, &psi, None, Mode::Schrodinger).unwrap();
        let oracle = compositional_oracle(&b, w, &psi, Mode::Schrodinger);
        let peak = oracle.data.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let err = rhs.data.iter().zip(&oracle.data).fold(0.0f64, |m, (a, c)| m.max((a - c).norm()));
        assert!(err < 1e-6 * peak.max(1.0), "max deviation {err:e} (peak {peak})");
    }

    #[test]
    fn extraction_inverts_the_forward_map() {
        let zero = make_test_field("zero", &[]).unwrap();
        let a0 = ScalarPotentialModel::gaussian(1.0, 1.0, Vec3::ZERO).unwrap();
        let grid = GridSpec::square(33, 8.25).unwrap();
        let one = WavePacket::from_fn(grid.clone(), 1.0, |_| Complex64::new(1.0, 0.0)).unwrap();
        let rhs = a0_forward_rhs(&a0, &zero, Vec3::E1, &one, None, Mode::Schrodinger).unwrap();
        let offsets: Vec<f64> = (-8..=8).map(|k| k as f64 * 0.25).collect();
        let slice = extract_a0_xray(&rhs, &zero, Vec3::E1, &one, None, Mode::Schrodinger, &offsets).unwrap();
        for (d, v) in offsets.iter().zip(&slice.values) {
            assert_abs_diff_eq!(*v, PI.sqrt() * (-d * d).exp(), epsilon = 1e-6);
        }
        assert!(slice.masked.iter().all(|m| !m));
    }

    #[test]
    fn extraction_with_field_removes_k_terms() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let grid = GridSpec::square(40, 14.0).unwrap();
        let w = Vec3::from_angle(0.7);
        let psi = WavePacket::gaussian(grid.clone(), Vec3::ZERO, 2.0, Vec3::ZERO, 1.0).unwrap();
        let offsets: Vec<f64> = (-6..=6).map(|k| k as f64 * 0.5).collect();
        let rhs = a0_forward_rhs(&ScalarPotentialModel::zero(), &b, w, &psi, None, Mode::Schrodinger).unwrap();
        let slice = extract_a0_xray(&rhs, &b, w, &psi, None, Mode::Schrodinger, &offsets).unwrap();
        assert!(slice.values.iter().all(|v| v.abs() < 1e-4), "{:?}", slice.values);
        let a0 = ScalarPotentialModel::gaussian(0.8, 1.2, Vec3::planar(0.3, -0.4)).unwrap();
        let pauli = psi.with_spinor([Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]).unwrap();
        let rhs = a0_forward_rhs(&a0, &b, w, &pauli, None, Mode::Pauli).unwrap();
        let slice = extract_a0_xray(&rhs, &b, w, &pauli, None, Mode::Pauli, &offsets).unwrap();
        for (j, &d) in offsets.iter().enumerate() {
            if slice.masked[j] {
                continue;
            }
            let expect = xray::scalar_line_integral(&|y| a0.eval(y), w.perp() * d, w, &LineOptions::default()).unwrap();
            assert_abs_diff_eq!(slice.values[j], expect, epsilon = 1e-3);
        }
    }

    fn analytic_slices(n_angles: usize, center: Vec3) -> Vec<XraySlice> {
        let offsets: Vec<f64> = (0..129).map(|k| -4.0 + k as f64 * 0.0625).collect();
        (0..n_angles)
            .map(|k| {
                let theta = PI * k as f64 / n_angles as f64;
                let perp = Vec3::from_angle(theta).perp();
                let values = offsets.iter().map(|d| PI.sqrt() * (-(d - center.dot(perp)).powi(2)).exp()).collect();
                XraySlice { theta, offsets: offsets.clone(), values, masked: vec![false; offsets.len()] }
            })
            .collect()
    }

    #[test]
    fn reconstruct_from_slices() {
        let grid = GridSpec::square(41, 6.0).unwrap();
        let mut zero = analytic_slices(90, Vec3::ZERO);
        for s in &mut zero {
            s.values.iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(reconstruct_a0(&zero, &grid).unwrap().field.max_abs(), 0.0);
        let rec = reconstruct_a0(&analytic_slices(90, Vec3::ZERO), &grid).unwrap();
        let peak = rec.field.max_abs();
        assert!((peak - 1.0).abs() <= 0.03, "peak {peak}");
        let c = Vec3::planar(0.9, -0.6);
        let rec = reconstruct_a0(&analytic_slices(90, c), &grid).unwrap();
        let best = (0..grid.len()).max_by(|&i, &j| rec.field.values[i].total_cmp(&rec.field.values[j])).unwrap();
        let h = grid.spacing[0];
        let p = grid.position(best);
        assert!((p.x - c.x).abs() <= h && (p.y - c.y).abs() <= h, "{p:?}");
    }
}
