//! Planar Schrödinger/Pauli propagation on a periodic grid with spectral
//! momentum operators and Chebyshev time stepping.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{wavenumbers, FftNd};
use crate::field_models::ScalarPotentialModel;
use crate::gauges::VectorPotential;
use crate::grid::{GridSpec, SampledField};
use crate::quadrature::{self, Tolerance};
use crate::report::ExperimentReport;
use crate::vec3::Vec3;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Spin structure of the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Schrodinger,
    /// Two-component spinors with the planar spin term `−σ₃B`.
    Pauli,
}

impl Mode {
    pub fn spin_components(self) -> usize {
        match self {
            Mode::Schrodinger => 1,
            Mode::Pauli => 2,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Schrodinger => "schrodinger",
            Mode::Pauli => "pauli",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "schrodinger" | "schroedinger" => Ok(Mode::Schrodinger),
            "pauli" => Ok(Mode::Pauli),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected schrodinger or pauli)"))),
        }
    }
}

/// Wave function on a planar periodic grid; spin components are stored
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct WavePacket {
    pub grid: GridSpec,
    pub spin: usize,
    pub mass: f64,
    pub data: Vec<Complex64>,
}

impl WavePacket {
    pub fn new(grid: GridSpec, spin: usize, mass: f64, data: Vec<Complex64>) -> Result<Self> {
        if grid.ndim() != 2 {
            return Err(Error::UnsupportedDimension { found: grid.ndim(), context: "wave packets are planar" });
        }
        if !(1..=2).contains(&spin) {
            return Err(Error::Shape(format!("spin component count {spin} must be 1 or 2")));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Config(format!("mass {mass} must be positive")));
        }
        if data.len() != grid.len() * spin {
            return Err(Error::Shape(format!("{} amplitudes for {} nodes × {spin}", data.len(), grid.len())));
        }
        Ok(WavePacket { grid, spin, mass, data })
    }

    pub fn zeros(grid: GridSpec, spin: usize, mass: f64) -> Result<Self> {
        let n = grid.len() * spin;
        WavePacket::new(grid, spin, mass, vec![Complex64::default(); n])
    }

    /// Single-component packet from a function of position.
    pub fn from_fn(grid: GridSpec, mass: f64, f: impl Fn(Vec3) -> Complex64 + Sync) -> Result<Self> {
        let data = (0..grid.len()).into_par_iter().map(|i| f(grid.position(i))).collect();
        WavePacket::new(grid, 1, mass, data)
    }

    /// Normalized `exp(−|x−c|²/(2σ²) + i q·x)`.
    pub fn gaussian(grid: GridSpec, center: Vec3, width: f64, momentum: Vec3, mass: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Config(format!("packet width {width} must be positive")));
        }
        let mut p = WavePacket::from_fn(grid, mass, |x| {
            let d = x - center;
            Complex64::from_polar((-(d.x * d.x + d.y * d.y) / (2.0 * width * width)).exp(), momentum.dot(x))
        })?;
        p.normalize();
        Ok(p)
    }

    /// The same spatial profile in both spin components, weighted by `spinor`.
    pub fn with_spinor(&self, spinor: [Complex64; 2]) -> Result<Self> {
        if self.spin != 1 {
            return Err(Error::Shape("packet already carries spin".into()));
        }
        let data = self.data.iter().flat_map(|v| [v * spinor[0], v * spinor[1]]).collect();
        WavePacket::new(self.grid.clone(), 2, self.mass, data)
    }

    pub fn cell(&self) -> f64 {
        self.grid.cell_volume()
    }

    pub fn inner(&self, other: &WavePacket) -> Complex64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.cell()
    }

    pub fn norm(&self) -> f64 {
        (self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell()).sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for v in &mut self.data {
                *v /= n;
            }
        }
    }

    /// `‖self − other‖`.
    pub fn distance(&self, other: &WavePacket) -> f64 {
        (self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * self.cell()).sqrt()
    }

    pub fn check_compatible(&self, other: &WavePacket) -> Result<()> {
        if self.grid != other.grid || self.spin != other.spin {
            return Err(Error::Shape("packets live on different grids or spin spaces".into()));
        }
        Ok(())
    }

    /// Multiplies every node by `f(x)` (all spin components alike).
    pub fn multiply(&self, f: impl Fn(Vec3) -> Complex64 + Sync) -> WavePacket {
        let s = self.spin;
        let mut out = self.clone();
        out.data.par_chunks_mut(s).enumerate().for_each(|(i, chunk)| {
            let c = f(self.grid.position(i));
            for v in chunk {
                *v *= c;
            }
        });
        out
    }

    /// Multiplies by `exp(i φ)` with `φ` given per node.
    pub fn multiply_phase(&self, phase: &[f64]) -> WavePacket {
        let s = self.spin;
        let mut out = self.clone();
        for (chunk, p) in out.data.chunks_mut(s).zip(phase) {
            let c = Complex64::from_polar(1.0, *p);
            for v in chunk {
                *v *= c;
            }
        }
        out
    }

    /// `e^{iu ω·x} ψ`.
    pub fn boosted(&self, u: f64, omega: Vec3) -> WavePacket {
        self.multiply(|x| Complex64::from_polar(1.0, u * omega.dot(x)))
    }

    /// Density `Σ_s |ψ_s|²` per node.
    pub fn density(&self) -> Vec<f64> {
        self.data.chunks(self.spin).map(|c| c.iter().map(|v| v.norm_sqr()).sum()).collect()
    }

    pub fn mean_position(&self) -> Vec3 {
        let rho = self.density();
        let total: f64 = rho.iter().sum();
        let mut m = Vec3::ZERO;
        for (i, r) in rho.iter().enumerate() {
            m += self.grid.position(i) * *r;
        }
        m * (1.0 / total)
    }

    /// `√(2 Var(x_axis))`; equals `σ` for the packet `exp(−x²/(2σ²))`.
    pub fn width(&self, axis: usize) -> f64 {
        let rho = self.density();
        let total: f64 = rho.iter().sum();
        let c = self.mean_position().to_array()[axis];
        let var: f64 = rho
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let d = self.grid.position(i).to_array()[axis] - c;
                r * d * d
            })
            .sum::<f64>()
            / total;
        (2.0 * var).sqrt()
    }

    /// Fraction of `‖ψ‖²` within `margin` cells of the periodic boundary.
    pub fn boundary_fraction(&self, margin: usize) -> f64 {
        let rho = self.density();
        let total: f64 = rho.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        let edge: f64 = rho.iter().enumerate().filter(|(i, _)| !self.grid.is_interior(*i, margin)).map(|(_, r)| r).sum();
        edge / total
    }

    /// Mean momentum `⟨p⟩`.
    pub fn mean_momentum(&self) -> Vec3 {
        let ops = Spectral::new(&self.grid);
        let mut num = [0.0; 2];
        let mut total = 0.0;
        for s in 0..self.spin {
            let mut f = self.spin_component(s);
            ops.fft.forward(&mut f);
            for (idx, v) in f.iter().enumerate() {
                let (kx, ky) = ops.k(idx);
                let w = v.norm_sqr();
                num[0] += kx * w;
                num[1] += ky * w;
                total += w;
            }
        }
        Vec3::planar(num[0] / total, num[1] / total)
    }

    /// Largest `|k|` per axis carrying spectral amplitude above `rel · max`.
    pub fn spectral_extent(&self, rel: f64) -> [f64; 2] {
        let ops = Spectral::new(&self.grid);
        let mut ext = [0.0f64; 2];
        for s in 0..self.spin {
            let mut f = self.spin_component(s);
            ops.fft.forward(&mut f);
            let peak = f.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            for (idx, v) in f.iter().enumerate() {
                if v.norm() > rel * peak {
                    let (kx, ky) = ops.k(idx);
                    ext[0] = ext[0].max(kx.abs());
                    ext[1] = ext[1].max(ky.abs());
                }
            }
        }
        ext
    }

    pub fn spin_component(&self, s: usize) -> Vec<Complex64> {
        self.data.iter().skip(s).step_by(self.spin).copied().collect()
    }

    pub(crate) fn set_spin_component(&mut self, s: usize, v: &[Complex64]) {
        for (dst, src) in self.data.iter_mut().skip(s).step_by(self.spin).zip(v) {
            *dst = *src;
        }
    }

    /// Complex grid field with interleaved `(re, im)` per spin component.
    pub fn to_field(&self) -> Result<SampledField> {
        SampledField::from_complex(self.grid.clone(), &self.data)
    }

    pub fn from_field(field: &SampledField, mass: f64) -> Result<Self> {
        let data = field.to_complex()?;
        WavePacket::new(field.grid.clone(), field.components / 2, mass, data)
    }
}

/// Spectral derivative machinery for one grid.
pub(crate) struct Spectral {
    pub fft: FftNd,
    kx: Vec<f64>,
    ky: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: &GridSpec) -> Self {
        Spectral {
            fft: FftNd::new(&grid.dims),
            kx: wavenumbers(grid.dims[0], grid.spacing[0]),
            ky: wavenumbers(grid.dims[1], grid.spacing[1]),
        }
    }

    #[inline]
    pub fn k(&self, idx: usize) -> (f64, f64) {
        let ny = self.ky.len();
        (self.kx[idx / ny], self.ky[idx % ny])
    }

    pub fn nyquist(&self) -> [f64; 2] {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        [m(&self.kx), m(&self.ky)]
    }

    /// `(p_x ψ, p_y ψ)` with `p = −i∇`.
    pub fn momentum(&self, psi: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut f = psi.to_vec();
        self.fft.forward(&mut f);
        let mut px = f.clone();
        let mut py = f;
        for (idx, (a, b)) in px.iter_mut().zip(py.iter_mut()).enumerate() {
            let (kx, ky) = self.k(idx);
            *a *= kx;
            *b *= ky;
        }
        self.fft.inverse(&mut px);
        self.fft.inverse(&mut py);
        (px, py)
    }

    /// `p·(qx, qy)`.
    pub fn divergence_p(&self, qx: &[Complex64], qy: &[Complex64]) -> Vec<Complex64> {
        let mut fx = qx.to_vec();
        let mut fy = qy.to_vec();
        self.fft.forward(&mut fx);
        self.fft.forward(&mut fy);
        for (idx, (a, b)) in fx.iter_mut().zip(&fy).enumerate() {
            let (kx, ky) = self.k(idx);
            *a = *a * kx + b * ky;
        }
        self.fft.inverse(&mut fx);
        fx
    }

    /// Multiplies in momentum space by `m(kx, ky)`.
    pub fn multiplier(&self, psi: &[Complex64], m: impl Fn(f64, f64) -> Complex64) -> Vec<Complex64> {
        let mut f = psi.to_vec();
        self.fft.forward(&mut f);
        for (idx, v) in f.iter_mut().enumerate() {
            let (kx, ky) = self.k(idx);
            *v *= m(kx, ky);
        }
        self.fft.inverse(&mut f);
        f
    }
}

/// Sampled fields of `H = (p − A)²/2m − σ₃B/2m + A₀` (spin term in Pauli mode only).
pub struct HamiltonianSpec {
    pub grid: GridSpec,
    pub a: Option<SampledField>,
    pub a0: Option<SampledField>,
    pub b: Option<SampledField>,
    pub mass: f64,
    pub mode: Mode,
    ops: Spectral,
}

impl fmt::Debug for HamiltonianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianSpec")
            .field("grid", &self.grid)
            .field("mass", &self.mass)
            .field("mode", &self.mode)
            .field("has_a", &self.a.is_some())
            .field("has_a0", &self.a0.is_some())
            .field("has_b", &self.b.is_some())
            .finish()
    }
}

impl HamiltonianSpec {
    pub fn new(
        grid: GridSpec,
        a: Option<SampledField>,
        a0: Option<SampledField>,
        b: Option<SampledField>,
        mass: f64,
        mode: Mode,
    ) -> Result<Self> {
        if grid.ndim() != 2 {
            return Err(Error::UnsupportedDimension { found: grid.ndim(), context: "the propagator is planar" });
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Config(format!("mass {mass} must be positive")));
        }
        for (name, f, nc) in [("A", &a, 2), ("A0", &a0, 1), ("B", &b, 1)] {
            if let Some(f) = f {
                if f.grid != grid || f.components != nc {
                    return Err(Error::Shape(format!("{name} must have {nc} component(s) on the Hamiltonian grid")));
                }
                if f.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Domain(format!("{name} has non-finite samples")));
                }
            }
        }
        // identically vanishing fields drop out, so a zero field evolves freely
        let nonzero = |f: Option<SampledField>| f.filter(|f| f.max_abs() > 0.0);
        let (a, a0) = (nonzero(a), nonzero(a0));
        let b = if mode == Mode::Pauli { nonzero(b) } else { None };
        let ops = Spectral::new(&grid);
        Ok(HamiltonianSpec { grid, a, a0, b, mass, mode, ops })
    }

    pub fn free(grid: GridSpec, mass: f64) -> Result<Self> {
        HamiltonianSpec::new(grid, None, None, None, mass, Mode::Schrodinger)
    }

    /// Samples a potential, an optional electrostatic potential and (Pauli
    /// mode) the source field of `a`.
    pub fn from_models(
        grid: &GridSpec,
        a: Option<&VectorPotential>,
        a0: Option<&ScalarPotentialModel>,
        mass: f64,
        mode: Mode,
    ) -> Result<Self> {
        let sa = a.map(|a| a.sample(grid)).transpose()?;
        let s0 = a0
            .map(|m| {
                SampledField::from_fn(grid.clone(), 1, |x, o| {
                    o[0] = m.eval(x);
                    Ok(())
                })
            })
            .transpose()?;
        let sb = match (mode, a.and_then(|a| a.source.as_ref())) {
            (Mode::Pauli, Some(b)) => Some(SampledField::from_fn(grid.clone(), 1, |x, o| {
                o[0] = b.scalar(x);
                Ok(())
            })?),
            _ => None,
        };
        HamiltonianSpec::new(grid.clone(), sa, s0, sb, mass, mode)
    }

    /// The free Hamiltonian on the same grid and mass.
    pub fn free_part(&self) -> HamiltonianSpec {
        HamiltonianSpec::free(self.grid.clone(), self.mass).expect("validated grid")
    }

    pub fn is_free(&self) -> bool {
        self.a.is_none() && self.a0.is_none() && self.b.is_none()
    }

    /// Guaranteed enclosure of the discrete spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let ny = self.ops.nyquist();
        let (ax, ay) = match &self.a {
            Some(a) => {
                let mut m = [0.0f64; 2];
                for i in 0..a.grid.len() {
                    m[0] = m[0].max(a.get(i, 0).abs());
                    m[1] = m[1].max(a.get(i, 1).abs());
                }
                (m[0], m[1])
            }
            None => (0.0, 0.0),
        };
        let kin = ((ny[0] + ax).powi(2) + (ny[1] + ay).powi(2)) / (2.0 * self.mass);
        let spin = self.b.as_ref().map(|b| b.max_abs() / (2.0 * self.mass)).unwrap_or(0.0);
        let (lo0, hi0) = match &self.a0 {
            Some(a0) => a0.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v))),
            None => (0.0, 0.0),
        };
        (lo0 - spin, hi0 + kin + spin)
    }

    fn check(&self, psi: &WavePacket) -> Result<()> {
        if psi.grid != self.grid {
            return Err(Error::Shape("packet and Hamiltonian grids differ".into()));
        }
        if psi.spin != self.mode.spin_components() && !(self.mode == Mode::Schrodinger && psi.spin == 2) {
            return Err(Error::Shape(format!("{} mode needs {} spin component(s)", self.mode, self.mode.spin_components())));
        }
        Ok(())
    }
}

/// `Hψ`.
pub fn apply_h(h: &HamiltonianSpec, psi: &WavePacket) -> Result<WavePacket> {
    h.check(psi)?;
    let inv2m = 0.5 / h.mass;
    let mut out = psi.clone();
    for s in 0..psi.spin {
        let comp = psi.spin_component(s);
        // (p − A)·(p − A)ψ, symmetric by construction
        let mut res: Vec<Complex64> = match &h.a {
            None => h.ops.multiplier(&comp, |kx, ky| Complex64::new((kx * kx + ky * ky) * inv2m, 0.0)),
            Some(a) => {
                let (mut qx, mut qy) = h.ops.momentum(&comp);
                for (i, v) in comp.iter().enumerate() {
                    qx[i] -= v * a.get(i, 0);
                    qy[i] -= v * a.get(i, 1);
                }
                let mut r = h.ops.divergence_p(&qx, &qy);
                for (i, r) in r.iter_mut().enumerate() {
                    *r = (*r - qx[i] * a.get(i, 0) - qy[i] * a.get(i, 1)) * inv2m;
                }
                r
            }
        };
        if let Some(a0) = &h.a0 {
            for (i, r) in res.iter_mut().enumerate() {
                *r += comp[i] * a0.values[i];
            }
        }
        if let Some(b) = &h.b {
            // −σ₃B: upper component −B, lower +B
            let sign = if s == 0 { -1.0 } else { 1.0 };
            for (i, r) in res.iter_mut().enumerate() {
                *r += comp[i] * (sign * b.values[i] * inv2m);
            }
        }
        out.set_spin_component(s, &res);
    }
    Ok(out)
}

/// `⟨ψ, Hψ⟩ / ⟨ψ, ψ⟩`.
pub fn energy(h: &HamiltonianSpec, psi: &WavePacket) -> Result<f64> {
    let hp = apply_h(h, psi)?;
    Ok(psi.inner(&hp).re / psi.inner(psi).re)
}

/// `e^{−iH₀t} ψ`, exact in momentum space.
pub fn evolve_free(psi: &WavePacket, t: f64) -> WavePacket {
    if t == 0.0 {
        return psi.clone();
    }
    let ops = Spectral::new(&psi.grid);
    let c = t / (2.0 * psi.mass);
    let mut out = psi.clone();
    for s in 0..psi.spin {
        let comp = psi.spin_component(s);
        let r = ops.multiplier(&comp, |kx, ky| Complex64::from_polar(1.0, -(kx * kx + ky * ky) * c));
        out.set_spin_component(s, &r);
    }
    out
}

/// Largest eigenvalue magnitude estimate by power iteration.
pub fn power_iteration(h: &HamiltonianSpec, spin: usize, iterations: usize) -> Result<f64> {
    // deterministic start vector with broad spectral content
    let mut v = WavePacket::from_fn(h.grid.clone(), h.mass, |x| {
        Complex64::new((x.x * 12.9898 + x.y * 78.233).sin(), (x.x * 39.3468 - x.y * 11.135).cos())
    })?;
    if spin == 2 {
        v = v.with_spinor([Complex64::new(1.0, 0.0), Complex64::new(0.6, 0.0)])?;
    }
    v.normalize();
    let mut est = 0.0;
    for _ in 0..iterations {
        let w = apply_h(h, &v)?;
        est = v.inner(&w).re;
        v = w;
        v.normalize();
    }
    Ok(est)
}

/// `J_0(x) … J_n(x)` by downward recurrence normalized with
/// `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_sequence(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = n.max(ax as usize);
    let start = 2 * ((top + 16 + (40.0 * top as f64).sqrt() as usize) / 2);
    let (mut jp, mut j) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let jm = 2.0 * k as f64 / ax * j - jp;
        jp = j;
        j = jm;
        if k - 1 <= n {
            out[k - 1] = j;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * j;
        }
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += j;
    let mut res: Vec<f64> = out.iter().map(|v| v / norm).collect();
    if x < 0.0 {
        for (k, v) in res.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    res
}

/// Parameters of a fixed-step evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionParams {
    pub dt: f64,
    pub steps: usize,
    /// Largest admissible Chebyshev degree per step.
    pub order: usize,
    /// Cells next to the periodic boundary that must stay empty.
    pub guard_cells: usize,
}

impl EvolutionParams {
    pub fn new(dt: f64, steps: usize) -> Self {
        EvolutionParams { dt, steps, order: 128, guard_cells: 16 }
    }

    /// Step count and size covering `t` with degree at most `order` per step.
    pub fn covering(h: &HamiltonianSpec, t: f64, order: usize) -> Self {
        let (lo, hi) = h.spectral_bounds();
        let half = 0.5 * (hi - lo);
        let per_step = 0.6 * order as f64;
        let steps = ((half * t.abs()) / per_step).ceil().max(1.0) as usize;
        EvolutionParams { dt: t / steps as f64, steps, order, guard_cells: 16 }
    }
}

/// Relative mass allowed in the guard band.
const GUARD_TOL: f64 = 1e-3;

struct ChebyshevStep {
    center: f64,
    half: f64,
    coeffs: Vec<Complex64>,
    dt: f64,
}

impl ChebyshevStep {
    fn new(h: &HamiltonianSpec, dt: f64, order: usize) -> Result<Self> {
        let (lo, hi) = h.spectral_bounds();
        let center = 0.5 * (hi + lo);
        let half = (0.5 * (hi - lo)).max(1e-12);
        let x = half * dt;
        let mut j = bessel_j_sequence(order + 1, x);
        // truncate where the expansion has converged
        let mut degree = None;
        for k in (x.abs().ceil() as usize)..=order {
            if j[k].abs() < 1e-16 && j[k + 1].abs() < 1e-16 {
                degree = Some(k);
                break;
            }
        }
        let degree = degree.ok_or_else(|| {
            Error::StepSize(format!(
                "spectral half-width {half:.3e} × dt {dt:.3e} needs a Chebyshev degree above {order}"
            ))
        })?;
        j.truncate(degree + 1);
        let mut coeffs: Vec<Complex64> = j.iter().enumerate().map(|(k, v)| (-I).powu(k as u32) * *v).collect();
        for c in coeffs.iter_mut().skip(1) {
            *c *= 2.0;
        }
        Ok(ChebyshevStep { center, half, coeffs, dt })
    }

    fn apply(&self, h: &HamiltonianSpec, psi: &WavePacket) -> Result<WavePacket> {
        let scaled = |v: &WavePacket| -> Result<WavePacket> {
            let mut w = apply_h(h, v)?;
            for (a, b) in w.data.iter_mut().zip(&v.data) {
                *a = (*a - b * self.center) / self.half;
            }
            Ok(w)
        };
        let mut t0 = psi.clone();
        let mut out = psi.clone();
        for v in &mut out.data {
            *v *= self.coeffs[0];
        }
        if self.coeffs.len() > 1 {
            let mut t1 = scaled(psi)?;
            for (o, v) in out.data.iter_mut().zip(&t1.data) {
                *o += v * self.coeffs[1];
            }
            for c in &self.coeffs[2..] {
                let mut t2 = scaled(&t1)?;
                for (a, b) in t2.data.iter_mut().zip(&t0.data) {
                    *a = *a * 2.0 - b;
                }
                for (o, v) in out.data.iter_mut().zip(&t2.data) {
                    *o += v * c;
                }
                t0 = t1;
                t1 = t2;
            }
        }
        let phase = Complex64::from_polar(1.0, -self.center * self.dt);
        for v in &mut out.data {
            *v *= phase;
        }
        Ok(out)
    }
}

/// `e^{−iH·dt·steps} ψ` by a Chebyshev expansion of each step.
pub fn evolve(h: &HamiltonianSpec, psi: &WavePacket, params: &EvolutionParams) -> Result<WavePacket> {
    h.check(psi)?;
    if !(params.dt.is_finite()) {
        return Err(Error::StepSize("time step must be finite".into()));
    }
    if h.is_free() {
        return Ok(evolve_free(psi, params.dt * params.steps as f64));
    }
    let step = ChebyshevStep::new(h, params.dt, params.order)?;
    let mut cur = psi.clone();
    for _ in 0..params.steps {
        cur = step.apply(h, &cur)?;
    }
    guard_check(&cur, params.guard_cells)?;
    Ok(cur)
}

/// `e^{−iHt} ψ` with automatically chosen steps.
pub fn evolve_for(h: &HamiltonianSpec, psi: &WavePacket, t: f64) -> Result<WavePacket> {
    evolve(h, psi, &EvolutionParams::covering(h, t, 128))
}

fn guard_check(psi: &WavePacket, margin: usize) -> Result<()> {
    if margin == 0 {
        return Ok(());
    }
    let f = psi.boundary_fraction(margin);
    if f > GUARD_TOL {
        return Err(Error::Domain(format!(
            "{f:.2e} of the packet lies within {margin} cells of the periodic boundary; enlarge the grid or shorten the window"
        )));
    }
    Ok(())
}

/// Windowed scattering approximation with its Cook diagnostics.
#[derive(Debug, Clone)]
pub struct ScatteringApprox {
    pub packet: WavePacket,
    /// `‖(H − H₀) e^{−iH₀t} ψ‖` at `t = −T` and `t = +T`.
    pub cook_residual: [f64; 2],
}

/// `Sψ ≈ e^{iH₀T} e^{−2iHT} e^{iH₀T} ψ`. With `cook_tol` set, a Cook residual
/// above it is reported as a window that is too small.
pub fn approx_scattering(h: &HamiltonianSpec, psi: &WavePacket, t: f64, cook_tol: Option<f64>) -> Result<ScatteringApprox> {
    h.check(psi)?;
    let cook = cook_residuals(h, psi, t)?;
    if let Some(tol) = cook_tol {
        let worst = cook[0].max(cook[1]);
        if worst > tol {
            return Err(Error::WindowTooSmall { residual: worst, tol });
        }
    }
    let incoming = evolve_free(psi, -t);
    guard_check(&incoming, 16)?;
    let inside = evolve_for(h, &incoming, 2.0 * t)?;
    let packet = evolve_free(&inside, -t);
    Ok(ScatteringApprox { packet, cook_residual: cook })
}

fn cook_residuals(h: &HamiltonianSpec, psi: &WavePacket, t: f64) -> Result<[f64; 2]> {
    let free = h.free_part();
    let mut out = [0.0; 2];
    for (slot, time) in out.iter_mut().zip([-t, t]) {
        let phi = evolve_free(psi, time);
        let full = apply_h(h, &phi)?;
        let bare = apply_h(&free, &phi)?;
        *slot = full.distance(&bare);
    }
    Ok(out)
}

/// Options of the boosted scattering experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostOptions {
    /// Half-length of the interaction window in distance units.
    pub window: f64,
    /// Eikonal phases for the parts of the straight-line path outside the window.
    pub tail_correction: bool,
}

impl Default for BoostOptions {
    fn default() -> Self {
        BoostOptions { window: 8.0, tail_correction: true }
    }
}

#[derive(Debug, Clone)]
pub struct BoostedScattering {
    pub u: f64,
    pub packet: WavePacket,
    /// `‖output − e^{ia}ψ‖ / ‖ψ‖`.
    pub error: f64,
    pub cook_residual: [f64; 2],
}

/// `∫_{lo}^{hi} ω·A(x + tω) dt` with either bound possibly infinite.
fn half_line(a: &VectorPotential, x: Vec3, w: Vec3, lo: f64, hi: f64) -> Result<f64> {
    let f = |t: f64| Ok(w.dot(a.eval(x + w * t)?));
    let breaks = a.line_breaks(x, w);
    let tol = Tolerance::new(1e-9, 1e-10);
    let est = if lo.is_infinite() {
        quadrature::integrate_lower(f, hi, &breaks, tol)?
    } else if hi.is_infinite() {
        quadrature::integrate_upper(f, lo, &breaks, tol)?
    } else {
        quadrature::integrate_with_breaks(f, lo, hi, &breaks, tol)?
    };
    Ok(est.value)
}

/// Per-node evaluation of `f` where the packet density exceeds `1e-20` of its peak; zero elsewhere.
fn on_support(psi: &WavePacket, f: impl Fn(Vec3) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    let rho = psi.density();
    let peak = rho.iter().fold(0.0f64, |m, v| m.max(*v));
    (0..psi.grid.len())
        .into_par_iter()
        .map(|i| if rho[i] > 1e-20 * peak { f(psi.grid.position(i)) } else { Ok(0.0) })
        .collect()
}

/// `e^{−iuω·x} S e^{iuω·x} ψ` and its distance to `e^{ia(ω,x)} ψ`.
///
/// The boost is a momentum shift of the packet; the scattering window
/// `T = m L / u` keeps the traversed length `2L` fixed. Time is not rescaled
/// inside the propagator, so the step count grows with `u`.
pub fn boosted_scattering_phase(
    h: &HamiltonianSpec,
    a: Option<&VectorPotential>,
    psi: &WavePacket,
    u: f64,
    omega: Vec3,
    opts: &BoostOptions,
) -> Result<BoostedScattering> {
    h.check(psi)?;
    let w = Vec3::planar(omega.x, omega.y).normalized();
    if !(u > 0.0) {
        return Err(Error::Config(format!("boost {u} must be positive")));
    }
    let ext = psi.spectral_extent(1e-10);
    let ny = Spectral::new(&psi.grid).nyquist();
    if u * w.x.abs() + ext[0] >= ny[0] || u * w.y.abs() + ext[1] >= ny[1] {
        return Err(Error::Resolution(format!(
            "boost {u} plus packet momentum exceeds the grid Nyquist wavenumber {:.3}",
            ny[0].min(ny[1])
        )));
    }
    // the speed bound only needs the bulk of the momentum distribution
    let bulk = psi.spectral_extent(1e-3);
    if bulk[0].max(bulk[1]) >= u {
        return Err(Error::Config(format!("packet momentum spread {:.3} is not below the boost {u}", bulk[0].max(bulk[1]))));
    }
    let phase = match a {
        Some(a) => on_support(psi, |x| crate::xray::line_integral_a(a, w, x))?,
        None => vec![0.0; psi.grid.len()],
    };
    let (tail_in, tail_out) = match (a, opts.tail_correction) {
        (Some(a), true) => (
            on_support(psi, |x| half_line(a, x, w, f64::NEG_INFINITY, -opts.window))?,
            on_support(psi, |x| half_line(a, x, w, opts.window, f64::INFINITY))?,
        ),
        _ => (vec![0.0; psi.grid.len()], vec![0.0; psi.grid.len()]),
    };
    let t = psi.mass * opts.window / u;
    let start = psi.multiply_phase(&tail_in).boosted(u, w);
    let sc = approx_scattering(h, &start, t, None)?;
    let out = sc.packet.boosted(-u, w).multiply_phase(&tail_out);
    let target = psi.multiply_phase(&phase);
    let error = out.distance(&target) / psi.norm();
    Ok(BoostedScattering { u, packet: out, error, cook_residual: sc.cook_residual })
}

/// Least-squares slope of `−ln(error)` against `ln(u)`; `None` when any error vanishes.
pub fn fit_rate(u: &[f64], err: &[f64]) -> Option<f64> {
    if u.len() < 2 || err.iter().any(|e| !(*e > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = u.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| -v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

/// Errors of the boosted experiment over increasing boosts, with the fitted
/// rate exponent (pass if ≥ 0.8). Errors at or below `1e-7` everywhere mark
/// the study as trivial.
pub fn convergence_study(
    h: &HamiltonianSpec,
    a: Option<&VectorPotential>,
    psi: &WavePacket,
    omega: Vec3,
    u_list: &[f64],
    opts: &BoostOptions,
) -> Result<ExperimentReport> {
    if u_list.is_empty() || u_list.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Config("boost list must be non-empty and increasing".into()));
    }
    let runs = u_list
        .iter()
        .map(|&u| boosted_scattering_phase(h, a, psi, u, omega, opts))
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = runs.iter().map(|r| r.error).collect();
    let trivial = errors.iter().all(|e| *e <= 1e-7);
    let rate = if trivial { None } else { fit_rate(u_list, &errors) };
    let mut report = ExperimentReport::new("scatter study");
    report.param("mode", h.mode);
    report.param("mass", h.mass);
    report.param("grid", format!("{:?}x{:?}", h.grid.dims, h.grid.spacing));
    report.param("omega", format!("{:.17e},{:.17e}", omega.x, omega.y));
    report.param("window", opts.window);
    report.param("tail_correction", opts.tail_correction);
    report.param("potential", a.map(|a| a.label.clone()).unwrap_or_else(|| "none".into()));
    report.set_series("u", "error", u_list.to_vec(), errors);
    report.exponent = rate;
    report.trivial = trivial;
    if trivial {
        report.verdict("all_errors_below_1e-7", true);
    } else {
        report.verdict("rate_at_least_0.8", rate.is_some_and(|r| r >= 0.8));
    }
    Ok(report)
}

/// Relative spread of the free Gaussian: `σ(t) = σ₀ √(1 + (t/(mσ₀²))²)`.
pub fn free_gaussian_width(sigma0: f64, mass: f64, t: f64) -> f64 {
    sigma0 * (1.0 + (t / (mass * sigma0 * sigma0)).powi(2)).sqrt()
}
