//! X-ray (line-integral) transforms of scalar fields and vector potentials,
//! the transverse-derivative identity turning potential line data into field
//! line data, and filtered backprojection.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::gauges::VectorPotential;
use crate::grid::{GridSpec, SampledField};
use crate::quadrature::{self, Tolerance};
use crate::vec3::Vec3;

/// An oriented plane `origin + u e1 + v e2`; planar problems use the xy plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub origin: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl Plane {
    pub const XY: Plane = Plane { origin: Vec3::ZERO, e1: Vec3::E1, e2: Vec3::E2 };

    /// Plane through `origin` with orthonormalized in-plane axes.
    pub fn new(origin: Vec3, e1: Vec3, e2: Vec3) -> Result<Self> {
        let e1 = e1.normalized();
        let e2 = e2 - e1 * e2.dot(e1);
        if !(e2.norm() > 1e-12) || !e1.is_finite() {
            return Err(Error::Config("plane axes must be independent".into()));
        }
        Ok(Plane { origin, e1, e2: e2.normalized() })
    }

    pub fn normal(&self) -> Vec3 {
        self.e1.cross(self.e2)
    }

    pub fn at(&self, u: f64, v: f64) -> Vec3 {
        self.origin + self.e1 * u + self.e2 * v
    }

    /// In-plane direction at angle `θ` from `e1`.
    pub fn direction(&self, theta: f64) -> Vec3 {
        let (s, c) = theta.sin_cos();
        self.e1 * c + self.e2 * s
    }

    /// In-plane direction rotated by +90° from [`Plane::direction`].
    pub fn normal_direction(&self, theta: f64) -> Vec3 {
        let (s, c) = theta.sin_cos();
        self.e1 * (-s) + self.e2 * c
    }

    /// Base point of the line at angle `θ` and signed offset `d`.
    pub fn line_base(&self, theta: f64, d: f64) -> Vec3 {
        self.origin + self.normal_direction(theta) * d
    }
}

/// Format version written after the `SINO` keyword.
pub const SINO_VERSION: &str = "v1";

/// Uniform (angle, offset) lattice. The line at `(θ, d)` is `d ω⊥ + t ω`
/// with `ω = (cos θ, sin θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinoLayout {
    pub angle_start: f64,
    pub angle_step: f64,
    pub n_angles: usize,
    pub offset_start: f64,
    pub offset_step: f64,
    pub n_offsets: usize,
}

impl SinoLayout {
    /// `n_angles` angles over `[0, π)` and `n_offsets` offsets over `[−half, half]`.
    pub fn parallel(n_angles: usize, n_offsets: usize, half_width: f64) -> Self {
        let step = if n_offsets > 1 { 2.0 * half_width / (n_offsets - 1) as f64 } else { 1.0 };
        SinoLayout {
            angle_start: 0.0,
            angle_step: PI / n_angles as f64,
            n_angles,
            offset_start: -half_width,
            offset_step: step,
            n_offsets,
        }
    }

    pub fn angle(&self, i: usize) -> f64 {
        self.angle_start + self.angle_step * i as f64
    }

    pub fn offset(&self, j: usize) -> f64 {
        self.offset_start + self.offset_step * j as f64
    }

    pub fn offsets(&self) -> Vec<f64> {
        (0..self.n_offsets).map(|j| self.offset(j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub layout: SinoLayout,
    /// Angle-major values.
    pub values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(layout: SinoLayout) -> Self {
        Sinogram { layout, values: vec![0.0; layout.n_angles * layout.n_offsets] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.layout.n_offsets + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.layout.n_offsets;
        &self.values[i * n..(i + 1) * n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.layout.n_offsets;
        &mut self.values[i * n..(i + 1) * n]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let l = &self.layout;
        let mut s = String::with_capacity(self.values.len() * 25 + 128);
        writeln!(s, "SINO {SINO_VERSION} {} {}", l.n_angles, l.n_offsets).unwrap();
        writeln!(s, "{:.17e} {:.17e}", l.angle_start, l.angle_step).unwrap();
        writeln!(s, "{:.17e} {:.17e}", l.offset_start, l.offset_step).unwrap();
        for v in &self.values {
            writeln!(s, "{v:.17e}").unwrap();
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(Error::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") }),
            }
        };
        let (ln, head) = next("header")?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        let (na, no) = match parts[..] {
            ["SINO", SINO_VERSION, a, o] => (
                a.parse::<usize>().map_err(|_| Error::Parse { line: ln, msg: format!("bad angle count `{a}`") })?,
                o.parse::<usize>().map_err(|_| Error::Parse { line: ln, msg: format!("bad offset count `{o}`") })?,
            ),
            _ => return Err(Error::Parse { line: ln, msg: "header must be `SINO v1 <nangles> <noffsets>`".into() }),
        };
        let pair = |ln: usize, s: &str| -> Result<(f64, f64)> {
            let v: Vec<f64> = s
                .split_whitespace()
                .map(|p| p.parse().map_err(|_| Error::Parse { line: ln, msg: format!("bad number `{p}`") }))
                .collect::<Result<_>>()?;
            match v[..] {
                [a, b] => Ok((a, b)),
                _ => Err(Error::Parse { line: ln, msg: "expected `start step`".into() }),
            }
        };
        let (l2, s2) = next("angle start/step")?;
        let (a0, da) = pair(l2, &s2)?;
        let (l3, s3) = next("offset start/step")?;
        let (o0, d_o) = pair(l3, &s3)?;
        let mut values = Vec::with_capacity(na * no);
        for (i, line) in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            values.push(t.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad value `{t}`") })?);
        }
        if values.len() != na * no {
            return Err(Error::Parse { line: 0, msg: format!("expected {} values, found {}", na * no, values.len()) });
        }
        let layout = SinoLayout {
            angle_start: a0,
            angle_step: da,
            n_angles: na,
            offset_start: o0,
            offset_step: d_o,
            n_offsets: no,
        };
        Ok(Sinogram { layout, values })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Sinogram::read_from(std::fs::File::open(path)?)
    }
}

/// Integration hints for scalar line integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct LineOptions {
    pub tol: f64,
    /// Radii of origin-centered circles where the integrand jumps.
    pub jump_radii: Vec<f64>,
    /// The integrand vanishes (to double precision) outside this radius.
    pub effective_radius: f64,
}

impl Default for LineOptions {
    fn default() -> Self {
        LineOptions { tol: 1e-10, jump_radii: Vec::new(), effective_radius: f64::INFINITY }
    }
}

impl LineOptions {
    pub fn for_field(b: &crate::field_models::FieldModel) -> Self {
        LineOptions { tol: b.default_tol() * 0.01, jump_radii: b.jump_radii.clone(), effective_radius: b.effective_radius }
    }
}

/// `∫ f(x + tω) dt`.
pub fn scalar_line_integral(f: &(dyn Fn(Vec3) -> f64 + Sync), x: Vec3, omega: Vec3, opts: &LineOptions) -> Result<f64> {
    let b = x.dot(omega);
    let c = x.norm_sq();
    let mut breaks = Vec::new();
    for &r in &opts.jump_radii {
        let disc = b * b - c + r * r;
        if disc >= 0.0 {
            breaks.push(-b - disc.sqrt());
            breaks.push(-b + disc.sqrt());
        }
    }
    let tol = Tolerance::new(opts.tol, 1e-12);
    let integrand = |t: f64| Ok(f(x + omega * t));
    let est = if opts.effective_radius.is_finite() {
        let r = opts.effective_radius;
        let disc = b * b - c + r * r;
        if disc <= 0.0 {
            return Ok(0.0);
        }
        quadrature::integrate_with_breaks(integrand, -b - disc.sqrt(), -b + disc.sqrt(), &breaks, tol)
    } else {
        // center the split point on the closest approach to the origin
        breaks.push(-b);
        quadrature::integrate_real_line(integrand, &breaks, tol)
    };
    est.map(|e| e.value).map_err(divergence_as_integrability)
}

fn divergence_as_integrability(e: Error) -> Error {
    match e {
        Error::Quadrature { requested, achieved } => Error::Integrability(format!(
            "line integral did not converge (error {achieved:e} above {requested:e}); the tail is not integrable"
        )),
        other => other,
    }
}

/// Sinogram of a scalar function on the plane.
pub fn xray_scalar_forward(f: &(dyn Fn(Vec3) -> f64 + Sync), layout: SinoLayout, opts: &LineOptions) -> Result<Sinogram> {
    xray_scalar_forward_in_plane(f, &Plane::XY, layout, opts)
}

pub fn xray_scalar_forward_in_plane(
    f: &(dyn Fn(Vec3) -> f64 + Sync),
    plane: &Plane,
    layout: SinoLayout,
    opts: &LineOptions,
) -> Result<Sinogram> {
    let mut sino = Sinogram::zeros(layout);
    let n = layout.n_offsets;
    sino.values.par_chunks_mut(n).enumerate().try_for_each(|(i, row)| -> Result<()> {
        let theta = layout.angle(i);
        let w = plane.direction(theta);
        for (j, v) in row.iter_mut().enumerate() {
            *v = scalar_line_integral(f, plane.line_base(theta, layout.offset(j)), w, opts)?;
        }
        Ok(())
    })?;
    Ok(sino)
}

/// `a(ω, x) = ∫ ω·A(x + tω) dt`.
pub fn line_integral_a(a: &VectorPotential, omega: Vec3, x: Vec3) -> Result<f64> {
    line_integral_a_tol(a, omega, x, 1e-9)
}

pub fn line_integral_a_tol(a: &VectorPotential, omega: Vec3, x: Vec3, tol: f64) -> Result<f64> {
    let w = omega.normalized();
    if let Some(v) = a.line_integral_override(w, x) {
        return v.map_err(divergence_as_integrability);
    }
    line_integral_a_direct(a, w, x, tol)
}

/// Direct quadrature of `ω·A` along the line, ignoring any attached line rule.
pub fn line_integral_a_direct(a: &VectorPotential, omega: Vec3, x: Vec3, tol: f64) -> Result<f64> {
    let w = omega.normalized();
    let mut breaks = a.line_breaks(x, w);
    breaks.push(-x.dot(w));
    let est = quadrature::integrate_real_line(
        |t: f64| Ok(w.dot(a.eval(x + w * t)?)),
        &breaks,
        Tolerance::new(tol.max(a.tol), 1e-12),
    )
    .map_err(divergence_as_integrability)?;
    Ok(est.value)
}

/// Line integrals `a(ω, ·)` of a potential on a transverse lattice for one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialLineData {
    pub plane: Plane,
    pub theta: f64,
    /// Signed offsets `d`; the base point is `plane.line_base(θ, d)`.
    pub offsets: Vec<f64>,
    pub values: Vec<f64>,
}

impl PotentialLineData {
    pub fn omega(&self) -> Vec3 {
        self.plane.direction(self.theta)
    }

    pub fn base_point(&self, j: usize) -> Vec3 {
        self.plane.line_base(self.theta, self.offsets[j])
    }
}

/// `a(ω, d ω⊥)` for every offset, computed from an evaluable potential.
pub fn potential_line_data(a: &VectorPotential, plane: &Plane, theta: f64, offsets: &[f64]) -> Result<PotentialLineData> {
    let w = plane.direction(theta);
    let values = offsets
        .par_iter()
        .map(|&d| line_integral_a(a, w, plane.line_base(theta, d)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PotentialLineData { plane: *plane, theta, offsets: offsets.to_vec(), values })
}

/// Bilinear interpolation of a sampled planar vector field; zero outside.
fn interp2(field: &SampledField, p: Vec3) -> Vec3 {
    Vec3::planar(interp_component(field, p, 0), interp_component(field, p, 1))
}

/// Bilinear interpolation of one component; zero outside the grid.
fn interp_component(field: &SampledField, p: Vec3, comp: usize) -> f64 {
    let g = &field.grid;
    let fx = (p.x - g.origin[0]) / g.spacing[0] + (g.dims[0] as f64 - 1.0) / 2.0;
    let fy = (p.y - g.origin[1]) / g.spacing[1] + (g.dims[1] as f64 - 1.0) / 2.0;
    if !(fx >= 0.0 && fy >= 0.0 && fx <= (g.dims[0] - 1) as f64 && fy <= (g.dims[1] - 1) as f64) {
        return 0.0;
    }
    let i = (fx.floor() as usize).min(g.dims[0].saturating_sub(2));
    let j = (fy.floor() as usize).min(g.dims[1].saturating_sub(2));
    let (tx, ty) = (fx - i as f64, fy - j as f64);
    let ny = g.dims[1];
    let at = |a: usize, b: usize| field.get(a * ny + b, comp);
    at(i, j) * ((1.0 - tx) * (1.0 - ty)) + at(i + 1, j) * (tx * (1.0 - ty)) + at(i, j + 1) * ((1.0 - tx) * ty) + at(i + 1, j + 1) * (tx * ty)
}

/// Sinogram of a sampled planar scalar, integrating its bilinear interpolant
/// along each chord of the disc circumscribing the grid.
pub fn grid_scalar_forward(f: &SampledField, layout: SinoLayout) -> Result<Sinogram> {
    if f.grid.ndim() != 2 || f.components != 1 {
        return Err(Error::Shape("grid forward projection needs a planar one-component field".into()));
    }
    let g = &f.grid;
    let center = Vec3::planar(g.origin[0], g.origin[1]);
    let half = |a: usize| 0.5 * (g.dims[a] - 1) as f64 * g.spacing[a];
    let radius = half(0).hypot(half(1));
    let h = g.spacing[0].min(g.spacing[1]);
    let mut sino = Sinogram::zeros(layout);
    let n = layout.n_offsets;
    sino.values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let theta = layout.angle(i);
        let w = Vec3::from_angle(theta);
        for (j, v) in row.iter_mut().enumerate() {
            let d = layout.offset(j);
            if d.abs() >= radius {
                *v = 0.0;
                continue;
            }
            let chord = (radius * radius - d * d).sqrt();
            let base = center + w.perp() * d;
            let pieces = ((2.0 * chord / h).ceil() as usize).max(1);
            *v = panel_integral(|t| interp_component(f, base + w * t, 0), -chord, chord, pieces);
        }
    });
    Ok(sino)
}

/// Composite Gauss–Legendre integral of `f` over `[a, b]` split into `pieces` panels.
fn panel_integral(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let rule = quadrature::gauss_legendre(4);
    let h = (b - a) / pieces as f64;
    let mut s = 0.0;
    for k in 0..pieces {
        let c = a + h * (k as f64 + 0.5);
        for (x, w) in rule.0.iter().zip(&rule.1) {
            s += w * 0.5 * h * f(c + 0.5 * h * x);
        }
    }
    s
}

/// Line data from a sampled planar potential.
///
/// Each value is the circulation of `A` around the part of the inscribed disc
/// lying on the `+ω⊥` side of the line (chord plus closing arc). By Stokes this
/// differs from the full-line integral by a constant in `d` whenever `B`
/// vanishes outside the disc, so transverse derivatives are unaffected.
pub fn grid_line_data(a: &SampledField, theta: f64, offsets: &[f64]) -> Result<PotentialLineData> {
    if a.grid.ndim() != 2 || a.components < 2 {
        return Err(Error::Shape("grid line data needs a planar two-component potential".into()));
    }
    let radius = a.grid.inscribed_radius();
    if !(radius > 0.0) {
        return Err(Error::DomainCoverage("grid has no interior".into()));
    }
    let center = Vec3::planar(a.grid.origin[0], a.grid.origin[1]);
    let w = Vec3::from_angle(theta);
    let wp = w.perp();
    let h = a.grid.spacing[0].min(a.grid.spacing[1]);
    let circle = |p0: f64, p1: f64| {
        let pieces = (((p1 - p0) * radius / h).ceil() as usize).max(1);
        panel_integral(
            |phi| {
                let (s, c) = phi.sin_cos();
                let pos = center + (w * c + wp * s) * radius;
                let tangent = (w * (-s) + wp * c) * radius;
                interp2(a, pos).dot(tangent)
            },
            p0,
            p1,
            pieces,
        )
    };
    // beyond −R the region is the whole disc
    let full = circle(0.0, 2.0 * PI);
    let values = offsets
        .par_iter()
        .map(|&d| {
            if d >= radius {
                return 0.0;
            }
            if d <= -radius {
                return full;
            }
            let half = (radius * radius - d * d).sqrt();
            let base = center + wp * d;
            let chord_pieces = ((2.0 * half / h).ceil() as usize).max(1);
            let chord = panel_integral(|t| w.dot(interp2(a, base + w * t)), -half, half, chord_pieces);
            // arc from the chord's +ω end counterclockwise to its −ω end
            let phi_end = d.atan2(half);
            let phi_start = d.atan2(-half) - 2.0 * PI;
            let (p0, p1) = (phi_end, phi_start + 2.0 * PI);
            let p1 = if p1 <= p0 { p1 + 2.0 * PI } else { p1 };
            chord + circle(p0, p1)
        })
        .collect();
    Ok(PotentialLineData { plane: Plane::XY, theta, offsets: offsets.to_vec(), values })
}

/// `(ω̃·∇) a(ω, ·)` on the lattice by central differences (one-sided,
/// second order at the ends). This equals the X-ray transform of
/// `(ω̃ × ω)·B` along each line.
pub fn derivative_to_xray(data: &PotentialLineData, omega_tilde: Vec3) -> Result<Vec<f64>> {
    let w = data.omega();
    let wp = data.plane.normal_direction(data.theta);
    if omega_tilde.dot(w).abs() > 1e-9 {
        return Err(Error::Domain("differentiation direction must be transverse to ω".into()));
    }
    let sign = omega_tilde.dot(wp);
    let n = data.offsets.len();
    if n < 3 {
        return Err(Error::Resolution("need at least three transverse samples".into()));
    }
    let h = data.offsets[1] - data.offsets[0];
    if data.offsets.windows(2).any(|p| ((p[1] - p[0]) - h).abs() > 1e-9 * h.abs()) {
        return Err(Error::Domain("transverse lattice must be uniform".into()));
    }
    let v = &data.values;
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    for j in 1..n - 1 {
        out[j] = (v[j + 1] - v[j - 1]) / (2.0 * h);
    }
    // resolution check: second-order Richardson estimate against the 2h stencil
    if n >= 5 {
        let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let worst = (2..n - 2)
            .map(|j| {
                let coarse = (v[j + 2] - v[j - 2]) / (4.0 * h);
                (coarse - out[j]).abs() / 3.0
            })
            .fold(0.0f64, f64::max);
        if peak > 0.0 && worst > 0.1 * peak {
            return Err(Error::Resolution(format!(
                "difference error estimate {worst:.3e} exceeds 10% of the signal {peak:.3e}"
            )));
        }
    }
    Ok(out.into_iter().map(|x| x * sign).collect())
}

/// Result of a tomographic inversion with coverage annotations.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub field: SampledField,
    pub warnings: Vec<String>,
}

/// Ram-Lak ramp filter apodized by a Hann window at the Nyquist frequency,
/// applied to each row of the sinogram.
fn filter_rows(s: &Sinogram) -> Vec<Vec<f64>> {
    let l = &s.layout;
    let n = l.n_offsets;
    let tau = l.offset_step;
    let m = (2 * n).next_power_of_two();
    let fft = FftNd::new(&[m]);
    let mut kernel = vec![Complex64::default(); m];
    for k in 0..m {
        let j = if k <= m / 2 { k as isize } else { k as isize - m as isize };
        let v = if j == 0 {
            1.0 / (4.0 * tau * tau)
        } else if j % 2 != 0 {
            -1.0 / (PI * PI * (j * j) as f64 * tau * tau)
        } else {
            0.0
        };
        kernel[k] = Complex64::new(v * tau, 0.0);
    }
    fft.forward(&mut kernel);
    for (k, c) in kernel.iter_mut().enumerate() {
        let j = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
        let frac = j.abs() / (m as f64 / 2.0);
        *c *= 0.5 * (1.0 + (PI * frac).cos());
    }
    (0..l.n_angles)
        .into_par_iter()
        .map(|i| {
            let mut buf = vec![Complex64::default(); m];
            for (b, v) in buf.iter_mut().zip(s.row(i)) {
                *b = Complex64::new(*v, 0.0);
            }
            fft.forward(&mut buf);
            for (b, k) in buf.iter_mut().zip(&kernel) {
                *b *= k;
            }
            fft.inverse(&mut buf);
            buf[..n].iter().map(|c| c.re).collect()
        })
        .collect()
}

fn coverage_warnings(l: &SinoLayout) -> Vec<String> {
    let mut w = Vec::new();
    if l.n_angles < 90 {
        w.push(format!("only {} projection angles (at least 90 recommended)", l.n_angles));
    }
    let span = l.angle_step * l.n_angles as f64;
    if span < PI - 1e-9 {
        w.push(format!("angular coverage {:.1}° is below 180°", span.to_degrees()));
    }
    w
}

/// Filtered backprojection onto `grid` (planar, in the coordinates of the sinogram's plane).
pub fn fbp_invert(s: &Sinogram, grid: &GridSpec) -> Result<Reconstruction> {
    if grid.ndim() != 2 {
        return Err(Error::Shape("backprojection grid must be planar".into()));
    }
    let l = s.layout;
    if l.n_offsets < 2 || l.n_angles == 0 {
        return Err(Error::Shape("sinogram needs at least one angle and two offsets".into()));
    }
    let filtered = filter_rows(s);
    let span = l.angle_step * l.n_angles as f64;
    // an angle range of π counts each line once; 2π counts it twice
    let weight = l.angle_step * PI / span.max(PI);
    let trig: Vec<(f64, f64)> = (0..l.n_angles).map(|i| l.angle(i).sin_cos()).collect();
    let mut field = SampledField::zeros(grid.clone(), 1);
    field.values.par_iter_mut().enumerate().for_each(|(node, out)| {
        let p = grid.position(node);
        let mut acc = 0.0;
        for (i, &(sn, cs)) in trig.iter().enumerate() {
            // offset of p relative to the line family at angle θ: p·ω⊥
            let d = -p.x * sn + p.y * cs;
            let f = (d - l.offset_start) / l.offset_step;
            if f < 0.0 || f > (l.n_offsets - 1) as f64 {
                continue;
            }
            let k = (f.floor() as usize).min(l.n_offsets - 2);
            let t = f - k as f64;
            let row = &filtered[i];
            acc += row[k] * (1.0 - t) + row[k + 1] * t;
        }
        *out = acc * weight;
    });
    let _ = span;
    Ok(Reconstruction { field, warnings: coverage_warnings(&l) })
}

/// Assembles the sinogram of `N·B` from potential line data (one entry per
/// direction, uniform angles) and inverts it. The unknown per-direction
/// constant in the data is annihilated by the transverse derivative.
pub fn reconstruct_b(dataset: &[PotentialLineData], grid: &GridSpec) -> Result<Reconstruction> {
    let sino = field_sinogram(dataset)?;
    fbp_invert(&sino, grid)
}

/// X-ray sinogram of `N·B` obtained as `−∂_d a` per direction.
pub fn field_sinogram(dataset: &[PotentialLineData]) -> Result<Sinogram> {
    let first = dataset.first().ok_or_else(|| Error::Shape("empty dataset".into()))?;
    let n_off = first.offsets.len();
    if n_off < 2 {
        return Err(Error::Shape("need at least two offsets".into()));
    }
    let step = if dataset.len() > 1 { dataset[1].theta - dataset[0].theta } else { PI };
    for (k, d) in dataset.iter().enumerate() {
        if d.offsets != first.offsets {
            return Err(Error::Shape("all directions must share one transverse lattice".into()));
        }
        if (d.theta - (first.theta + step * k as f64)).abs() > 1e-9 {
            return Err(Error::Shape("directions must be uniformly spaced in angle".into()));
        }
    }
    let layout = SinoLayout {
        angle_start: first.theta,
        angle_step: step,
        n_angles: dataset.len(),
        offset_start: first.offsets[0],
        offset_step: first.offsets[1] - first.offsets[0],
        n_offsets: n_off,
    };
    let mut sino = Sinogram::zeros(layout);
    for (i, d) in dataset.iter().enumerate() {
        let wp = d.plane.normal_direction(d.theta);
        let deriv = derivative_to_xray(d, wp)?;
        for (o, v) in sino.row_mut(i).iter_mut().zip(deriv) {
            *o = -v;
        }
    }
    Ok(sino)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_models::make_test_field;
    use crate::gauges::transversal_gauge;
    use approx::assert_abs_diff_eq;

    fn erf_oracle(d: f64) -> f64 {
        // a(d) = −√π ∫_0^d e^{−s²} ds, integrated independently by Simpson's rule
        let n = 2000;
        let h = d / n as f64;
        let mut s = 0.0;
        for k in 0..=n {
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * (-(k as f64 * h).powi(2)).exp();
        }
        -PI.sqrt() * s * h / 3.0
    }

    #[test]
    fn gaussian_scalar_transform() {
        let f = |x: Vec3| (-x.norm_sq()).exp();
        let layout = SinoLayout::parallel(4, 5, 2.0);
        let s = xray_scalar_forward(&f, layout, &LineOptions::default()).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let d = layout.offset(j);
                assert_abs_diff_eq!(s.get(i, j), PI.sqrt() * (-d * d).exp(), epsilon = 1e-9);
            }
        }
        let disc = |x: Vec3| if x.norm_sq() <= 1.0 { 1.0 } else { 0.0 };
        let opts = LineOptions { jump_radii: vec![1.0], ..LineOptions::default() };
        assert_abs_diff_eq!(scalar_line_integral(&disc, Vec3::ZERO, Vec3::E1, &opts).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn transversal_line_integrals() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let a = transversal_gauge(&b);
        for d in [0.0, 0.5, -1.3, 8.0] {
            let v = line_integral_a(&a, Vec3::E1, Vec3::planar(0.0, d)).unwrap();
            assert_abs_diff_eq!(v, erf_oracle(d), epsilon = 1e-6);
        }
        assert_abs_diff_eq!(line_integral_a(&a, Vec3::E1, Vec3::planar(0.0, 8.0)).unwrap(), -PI / 2.0, epsilon = 1e-6);
    }

    #[test]
    fn derivative_gives_field_transform() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let a = transversal_gauge(&b);
        let offsets: Vec<f64> = (0..41).map(|k| -2.0 + 0.1 * k as f64).collect();
        let data = potential_line_data(&a, &Plane::XY, 0.0, &offsets).unwrap();
        let der = derivative_to_xray(&data, Vec3::E2).unwrap();
        // central-difference error h²|a‴|/6 ≈ 5.9e-3 at d = 0
        assert_abs_diff_eq!(der[20], -PI.sqrt(), epsilon = 6.5e-3);
        for (j, d) in offsets.iter().enumerate().skip(1).take(39) {
            assert_abs_diff_eq!(der[j], -PI.sqrt() * (-d * d).exp(), epsilon = 6.5e-3);
        }
        let flipped = derivative_to_xray(&data, -Vec3::E2).unwrap();
        assert_eq!(flipped[20], -der[20]);
        assert!(derivative_to_xray(&data, Vec3::E1).is_err());
    }

    #[test]
    fn sinogram_file_roundtrip() {
        let layout = SinoLayout::parallel(3, 4, 1.0);
        let mut s = Sinogram::zeros(layout);
        for (k, v) in s.values.iter_mut().enumerate() {
            *v = (k as f64).sqrt() / 7.0;
        }
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(Sinogram::read_from(&buf[..]).unwrap(), s);
        assert!(Sinogram::read_from("GRID v1 2 1\n".as_bytes()).is_err());
        assert!(Sinogram::read_from("SINO v0 1 2\n0 1\n0 1\n0\n0\n".as_bytes()).is_err());
    }

    #[test]
    fn fbp_of_zero_is_zero() {
        let s = Sinogram::zeros(SinoLayout::parallel(90, 64, 4.0));
        let r = fbp_invert(&s, &GridSpec::square(16, 4.0).unwrap()).unwrap();
        assert!(r.field.values.iter().all(|v| *v == 0.0));
        assert!(r.warnings.is_empty());
        let few = Sinogram::zeros(SinoLayout::parallel(10, 64, 4.0));
        assert!(!fbp_invert(&few, &GridSpec::square(8, 4.0).unwrap()).unwrap().warnings.is_empty());
    }

    #[test]
    fn fbp_roundtrip_gaussian() {
        let f = |x: Vec3| (-x.norm_sq()).exp();
        let layout = SinoLayout::parallel(180, 256, 6.0);
        let s = xray_scalar_forward(&f, layout, &LineOptions::default()).unwrap();
        let grid = GridSpec::square(65, 6.0).unwrap();
        let r = fbp_invert(&s, &grid).unwrap();
        let exact = SampledField::from_fn(grid, 1, |x, o| {
            o[0] = f(x);
            Ok(())
        })
        .unwrap();
        let err = r.field.relative_l2_error(&exact, |_| true).unwrap();
        assert!(err < 0.02, "relative error {err}");
        assert_abs_diff_eq!(r.field.get(32 * 65 + 32, 0), 1.0, epsilon = 0.02);
    }

    #[test]
    fn sampled_scalar_forward_matches_analytic() {
        let grid = GridSpec::square(129, 12.0).unwrap();
        let f = SampledField::from_fn(grid, 1, |x, o| {
            o[0] = (-x.norm_sq()).exp();
            Ok(())
        })
        .unwrap();
        let layout = SinoLayout::parallel(6, 9, 3.0);
        let s = grid_scalar_forward(&f, layout).unwrap();
        for i in 0..6 {
            for j in 0..9 {
                let d = layout.offset(j);
                // bilinear interpolation error ~ h²/8 |f″| with h = 3/32
                assert_abs_diff_eq!(s.get(i, j), PI.sqrt() * (-d * d).exp(), epsilon = 3e-3);
            }
        }
        let two = SampledField::zeros(GridSpec::square(9, 2.0).unwrap(), 2);
        assert!(grid_scalar_forward(&two, layout).is_err());
    }

    #[test]
    fn grid_line_data_differs_from_line_integrals_by_a_constant() {
        let b = make_test_field("gaussian2d", &[]).unwrap();
        let a = transversal_gauge(&b);
        let g = GridSpec::square(97, 12.0).unwrap();
        let s = a.sample(&g).unwrap();
        let r = g.inscribed_radius();
        // the outer offsets lie beyond the inscribed disc on both sides
        let offsets: Vec<f64> = (0..31).map(|k| -1.1 * r + 2.2 * r * k as f64 / 30.0).collect();
        for theta in [0.0, 0.7, 2.0] {
            let grid = grid_line_data(&s, theta, &offsets).unwrap();
            let exact = potential_line_data(&a, &Plane::XY, theta, &offsets).unwrap();
            let c = grid.values[15] - exact.values[15];
            for (u, v) in grid.values.iter().zip(&exact.values) {
                assert_abs_diff_eq!(u - v, c, epsilon = 5e-3);
            }
        }
    }
}

