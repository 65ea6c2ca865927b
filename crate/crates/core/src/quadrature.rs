//! Adaptive Gauss–Kronrod quadrature on finite, semi-infinite and infinite
//! intervals, plus fixed Gauss–Legendre rules.
//!
//! Infinite ranges are mapped onto `[0, 1)` with `t = a + s / (1 - s)`; the
//! 21-point Kronrod rule never evaluates the endpoint `s = 1`. Breakpoints
//! (jump discontinuities of the integrand) seed the initial partition.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Values that can be integrated: a real vector space with a magnitude.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Vec3 {
    fn zero() -> Self {
        Vec3::ZERO
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel, max_intervals: 2000 }
    }

    pub const fn abs(abs: f64) -> Self {
        Tolerance::new(abs, 0.0)
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }

    /// Tolerance for an integral nested inside another one.
    pub fn inner(self, factor: f64) -> Self {
        Tolerance { abs: self.abs * factor, ..self }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value)
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-8, 1e-12)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

// Gauss–Kronrod 10/21 abscissae and weights (QUADPACK qk21).
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// How an interval of the working variable `s` maps onto the integration variable.
#[derive(Debug, Clone, Copy)]
enum Map {
    Identity,
    /// `t = origin + s / (1 - s)`, `s ∈ [0, 1)`.
    Upper(f64),
    /// `t = origin - s / (1 - s)`, `s ∈ [0, 1)`.
    Lower(f64),
}

impl Map {
    #[inline]
    fn apply(self, s: f64) -> (f64, f64) {
        match self {
            Map::Identity => (s, 1.0),
            Map::Upper(a) => {
                let q = 1.0 - s;
                (a + s / q, 1.0 / (q * q))
            }
            Map::Lower(b) => {
                let q = 1.0 - s;
                (b - s / q, 1.0 / (q * q))
            }
        }
    }
}

struct Piece<T> {
    a: f64,
    b: f64,
    map: Map,
    value: T,
    error: f64,
}

impl<T> PartialEq for Piece<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Piece<T> {}
impl<T> PartialOrd for Piece<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Piece<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<T, F>(f: &mut F, a: f64, b: f64, map: Map) -> Result<(T, f64)>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut eval = |s: f64| -> Result<T> {
        let (t, jac) = map.apply(s);
        if !(t.is_finite() && jac.is_finite()) {
            return Err(Error::Integrability("integrand not resolved toward infinity".into()));
        }
        let v = f(t)?;
        Ok(if jac == 1.0 { v } else { v * jac })
    };
    let fc = eval(center)?;
    let mut res_k = fc * WGK[10];
    let mut res_g = T::zero();
    let mut fv1 = [T::zero(); 10];
    let mut fv2 = [T::zero(); 10];
    let mut res_abs = fc.magnitude() * WGK[10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k = res_k + (f1 + f2) * WGK[j];
        res_abs += WGK[j] * (f1.magnitude() + f2.magnitude());
        if j % 2 == 1 {
            res_g = res_g + (f1 + f2) * WG[j / 2];
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).magnitude();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).magnitude() + (fv2[j] - mean).magnitude());
    }
    let hl = half.abs();
    res_abs *= hl;
    res_asc *= hl;
    let mut err = ((res_k - res_g) * half).magnitude();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    if !(err.is_finite() && res_k.magnitude().is_finite()) {
        return Err(Error::Integrability(format!("non-finite integrand on [{a}, {b}]")));
    }
    Ok((res_k * half, err))
}

fn adapt<T, F>(mut f: F, seeds: Vec<(f64, f64, Map)>, tol: Tolerance) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T>,
{
    let mut heap = BinaryHeap::new();
    let mut total = T::zero();
    let mut total_err = 0.0;
    let mut evaluations = 0;
    for (a, b, map) in seeds {
        if a == b {
            continue;
        }
        let (value, error) = kronrod21(&mut f, a, b, map)?;
        evaluations += 21;
        total = total + value;
        total_err += error;
        heap.push(Piece { a, b, map, value, error });
    }
    while total_err > tol.target(total.magnitude()) {
        if heap.len() >= tol.max_intervals {
            return Err(Error::Quadrature { requested: tol.target(total.magnitude()), achieved: total_err });
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval cannot be split further in floating point
            heap.push(worst);
            return Err(Error::Quadrature { requested: tol.target(total.magnitude()), achieved: total_err });
        }
        let (v1, e1) = kronrod21(&mut f, worst.a, mid, worst.map)?;
        let (v2, e2) = kronrod21(&mut f, mid, worst.b, worst.map)?;
        evaluations += 42;
        total = total - worst.value + v1 + v2;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, map: worst.map, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, map: worst.map, value: v2, error: e2 });
    }
    // re-sum to limit drift from the running updates
    let value = heap.iter().fold(T::zero(), |acc, p| acc + p.value);
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Estimate { value, error, evaluations })
}

fn finite_seeds(a: f64, b: f64, breaks: &[f64]) -> Vec<(f64, f64, Map)> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let mut pts = vec![lo];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&p| p > lo && p < hi).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    pts.extend(inner);
    pts.push(hi);
    pts.windows(2).map(|w| (w[0], w[1], Map::Identity)).collect()
}

/// `∫_a^b f(t) dt`.
pub fn integrate<T, F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T>,
{
    integrate_with_breaks(f, a, b, &[], tol)
}

/// `∫_a^b f(t) dt` with the initial partition split at `breaks`.
pub fn integrate_with_breaks<T, F>(f: F, a: f64, b: f64, breaks: &[f64], tol: Tolerance) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T>,
{
    let est = adapt(f, finite_seeds(a, b, breaks), tol)?;
    if a > b {
        Ok(Estimate { value: est.value * -1.0, ..est })
    } else {
        Ok(est)
    }
}

/// `∫_a^∞ f(t) dt`, split at `breaks` lying above `a`.
pub fn integrate_upper<T, F>(f: F, a: f64, breaks: &[f64], tol: Tolerance) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T>,
{
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&p| p > a && p.is_finite()).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    let last = inner.last().copied().unwrap_or(a);
    let mut seeds = if inner.is_empty() { Vec::new() } else { finite_seeds(a, last, &inner) };
    seeds.push((0.0, 1.0, Map::Upper(last)));
    adapt(f, seeds, tol)
}

/// `∫_{-∞}^b f(t) dt`, split at `breaks` lying below `b`.
pub fn integrate_lower<T, F>(f: F, b: f64, breaks: &[f64], tol: Tolerance) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T>,
{
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&p| p < b && p.is_finite()).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    let first = inner.first().copied().unwrap_or(b);
    let mut seeds = vec![(0.0, 1.0, Map::Lower(first))];
    if !inner.is_empty() {
        seeds.extend(finite_seeds(first, b, &inner));
    }
    adapt(f, seeds, tol)
}

/// `∫_{-∞}^{∞} f(t) dt`; the real line is split at 0 and at `breaks`.
pub fn integrate_real_line<T, F>(f: F, breaks: &[f64], tol: Tolerance) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> Result<T>,
{
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|p| p.is_finite()).collect();
    pts.push(0.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let first = pts[0];
    let last = *pts.last().unwrap();
    let mut seeds = vec![(0.0, 1.0, Map::Lower(first))];
    seeds.extend(pts.windows(2).map(|w| (w[0], w[1], Map::Identity)));
    seeds.push((0.0, 1.0, Map::Upper(last)));
    adapt(f, seeds, tol)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // three-term recurrence for P_n(z) and P_{n-1}(z)
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pnm1) = if n == 1 { (z, 1.0) } else { (p1, p0) };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    x.into_iter().zip(w).map(|(xi, wi)| (c + h * xi, h * wi)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ok<T>(f: impl Fn(f64) -> T) -> impl FnMut(f64) -> Result<T> {
        move |t| Ok(f(t))
    }

    #[test]
    fn polynomial_is_exact() {
        let est = integrate(ok(|t: f64| t.powi(5) - 2.0 * t), 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((est.value - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
        assert_eq!(est.evaluations, 21);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let est = integrate(ok(|t: f64| t), 1.0, 0.0, Tolerance::default()).unwrap();
        assert!((est.value + 0.5).abs() < 1e-14);
    }

    #[test]
    fn gaussian_tails() {
        let tol = Tolerance::new(1e-12, 1e-12);
        let full = integrate_real_line(ok(|t: f64| (-t * t).exp()), &[], tol).unwrap();
        assert!((full.value - PI.sqrt()).abs() < 1e-11);
        let upper = integrate_upper(ok(|t: f64| (-t * t).exp()), 0.0, &[], tol).unwrap();
        assert!((upper.value - 0.5 * PI.sqrt()).abs() < 1e-11);
        let lower = integrate_lower(ok(|t: f64| (-t * t).exp()), 0.0, &[], tol).unwrap();
        assert!((lower.value - 0.5 * PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn algebraic_tail() {
        // ∫_1^∞ t^-2 dt = 1
        let est = integrate_upper(ok(|t: f64| 1.0 / (t * t)), 1.0, &[], Tolerance::new(1e-12, 0.0)).unwrap();
        assert!((est.value - 1.0).abs() < 1e-11);
        // Lorentzian over the real line
        let d = 1e-3;
        let est = integrate_real_line(ok(|t: f64| d / (t * t + d * d)), &[], Tolerance::new(1e-10, 0.0)).unwrap();
        assert!((est.value - PI).abs() < 1e-9);
    }

    #[test]
    fn breakpoints_resolve_jumps() {
        let ind = |t: f64| if t.abs() <= 1.0 { 1.0 } else { 0.0 };
        let est = integrate_real_line(ok(ind), &[-1.0, 1.0], Tolerance::new(1e-12, 0.0)).unwrap();
        assert!((est.value - 2.0).abs() < 1e-12);
        assert!(est.evaluations < 200);
    }

    #[test]
    fn divergent_integral_fails() {
        let err = integrate_upper(ok(|t: f64| 1.0 / (1.0 + t)), 0.0, &[], Tolerance::new(1e-10, 0.0).with_max_intervals(200));
        assert!(matches!(err, Err(Error::Quadrature { .. }) | Err(Error::Integrability(_))));
    }

    #[test]
    fn gauss_legendre_integrates_degree_2n_minus_1() {
        for n in 1..12 {
            let rule = gauss_legendre_on(n, 0.0, 1.0);
            let deg = 2 * n - 1;
            let s: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((s - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n = {n}");
        }
    }
}
