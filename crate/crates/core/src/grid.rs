//! Uniform origin-centered grids, sampled fields and the text grid format.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Format version written after the `GRID` keyword.
pub const GRID_VERSION: &str = "v1";

/// A uniform grid. Node `i` along an axis sits at `origin + (i - (n-1)/2) * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>) -> Result<Self> {
        let nd = dims.len();
        if !(1..=3).contains(&nd) || spacing.len() != nd || origin.len() != nd {
            return Err(Error::Shape(format!(
                "grid needs matching dims/spacing/origin of length 1..=3, got {}/{}/{}",
                dims.len(),
                spacing.len(),
                origin.len()
            )));
        }
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::Config("grid dimensions must be positive".into()));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Config("grid spacing must be positive and finite".into()));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        Ok(GridSpec { dims, spacing, origin })
    }

    /// `n^dim` nodes covering `[-extent/2, extent/2]^dim` with spacing `extent / n`.
    pub fn centered(dim: usize, n: usize, extent: f64) -> Result<Self> {
        if n == 0 || !(extent > 0.0) {
            return Err(Error::Config(format!("invalid grid {n}:{extent}")));
        }
        GridSpec::new(vec![n; dim], vec![extent / n as f64; dim], vec![0.0; dim])
    }

    pub fn square(n: usize, extent: f64) -> Result<Self> {
        GridSpec::centered(2, n, extent)
    }

    pub fn cube(n: usize, extent: f64) -> Result<Self> {
        GridSpec::centered(3, n, extent)
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + (i as f64 - (self.dims[axis] as f64 - 1.0) / 2.0) * self.spacing[axis]
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.dims[axis]).map(|i| self.coord(axis, i)).collect()
    }

    /// Row-major stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.dims[axis + 1..].iter().product()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for axis in (0..self.ndim()).rev() {
            out[axis] = flat % self.dims[axis];
            flat /= self.dims[axis];
        }
        out
    }

    /// Position of a node, embedded in 3D (missing axes are zero).
    pub fn position(&self, flat: usize) -> Vec3 {
        let idx = self.multi_index(flat);
        let mut p = [0.0; 3];
        for (axis, slot) in p.iter_mut().enumerate().take(self.ndim()) {
            *slot = self.coord(axis, idx[axis]);
        }
        Vec3::new(p[0], p[1], p[2])
    }

    /// Node lies at least `margin` cells away from every face.
    pub fn is_interior(&self, flat: usize, margin: usize) -> bool {
        let idx = self.multi_index(flat);
        (0..self.ndim()).all(|a| idx[a] >= margin && idx[a] + margin < self.dims[a])
    }

    /// Radius of the largest origin-centered ball inside the grid's bounding box.
    pub fn inscribed_radius(&self) -> f64 {
        (0..self.ndim())
            .map(|a| {
                let half = 0.5 * (self.dims[a] as f64 - 1.0) * self.spacing[a];
                half - self.origin[a].abs()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Parses the CLI grid shorthand `N:L` (N nodes per axis over extent L).
    pub fn parse_shorthand(text: &str, dim: usize) -> Result<Self> {
        let (n, l) = text
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("grid spec `{text}` is not of the form N:L")))?;
        let n: usize = n.trim().parse().map_err(|_| Error::Config(format!("bad node count in `{text}`")))?;
        let l: f64 = l.trim().parse().map_err(|_| Error::Config(format!("bad extent in `{text}`")))?;
        GridSpec::centered(dim, n, l)
    }
}

/// Real samples on a grid; `components` values per node, components fastest.
/// Complex data is stored as interleaved (re, im) pairs and counts two components each.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub grid: GridSpec,
    pub components: usize,
    pub values: Vec<f64>,
}

impl SampledField {
    pub fn new(grid: GridSpec, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 || values.len() != grid.len() * components {
            return Err(Error::Shape(format!(
                "expected {} values ({} nodes x {} components), got {}",
                grid.len() * components,
                grid.len(),
                components,
                values.len()
            )));
        }
        Ok(SampledField { grid, components, values })
    }

    pub fn zeros(grid: GridSpec, components: usize) -> Self {
        let n = grid.len() * components;
        SampledField { grid, components, values: vec![0.0; n] }
    }

    /// Samples `f` at every node; `f` writes `components` values.
    pub fn from_fn<F>(grid: GridSpec, components: usize, f: F) -> Result<Self>
    where
        F: Fn(Vec3, &mut [f64]) -> Result<()> + Sync,
    {
        use rayon::prelude::*;
        let mut values = vec![0.0; grid.len() * components];
        values
            .par_chunks_mut(components)
            .enumerate()
            .try_for_each(|(i, out)| f(grid.position(i), out))?;
        Ok(SampledField { grid, components, values })
    }

    pub fn from_complex(grid: GridSpec, data: &[Complex64]) -> Result<Self> {
        if grid.len() == 0 || data.len() % grid.len() != 0 {
            return Err(Error::Shape("complex data does not tile the grid".into()));
        }
        let values = data.iter().flat_map(|c| [c.re, c.im]).collect();
        SampledField::new(grid.clone(), 2 * data.len() / grid.len(), values)
    }

    pub fn to_complex(&self) -> Result<Vec<Complex64>> {
        if self.components % 2 != 0 {
            return Err(Error::Shape("odd component count cannot hold complex pairs".into()));
        }
        Ok(self.values.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect())
    }

    pub fn get(&self, node: usize, comp: usize) -> f64 {
        self.values[node * self.components + comp]
    }

    pub fn node(&self, node: usize) -> &[f64] {
        &self.values[node * self.components..(node + 1) * self.components]
    }

    pub fn vector(&self, node: usize) -> Vec3 {
        Vec3::from_slice(self.node(node))
    }

    /// One component as a scalar field.
    pub fn component(&self, comp: usize) -> SampledField {
        let values = (0..self.grid.len()).map(|i| self.get(i, comp)).collect();
        SampledField { grid: self.grid.clone(), components: 1, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Second-order central difference of one component along `axis`; `None` at faces.
    pub fn central_diff(&self, node: usize, comp: usize, axis: usize) -> Option<f64> {
        if axis >= self.grid.ndim() {
            return Some(0.0);
        }
        let idx = self.grid.multi_index(node);
        if idx[axis] == 0 || idx[axis] + 1 >= self.grid.dims[axis] {
            return None;
        }
        let s = self.grid.stride(axis);
        let h = self.grid.spacing[axis];
        Some((self.get(node + s, comp) - self.get(node - s, comp)) / (2.0 * h))
    }

    /// Central-difference curl of a vector field (2 or 3 components). In 2D the
    /// result is the scalar `∂₁A₂ − ∂₂A₁`. Face nodes are NaN.
    pub fn curl(&self) -> Result<SampledField> {
        let nd = self.grid.ndim();
        let out_comp = match (nd, self.components) {
            (2, 2) | (2, 3) => 1,
            (3, 3) => 3,
            _ => return Err(Error::Shape(format!("curl of {}-component field on {nd}D grid", self.components))),
        };
        SampledField::from_index_fn(self.grid.clone(), out_comp, |i, out| {
            let d = |c, a| self.central_diff(i, c, a);
            if nd == 2 {
                out[0] = match (d(1, 0), d(0, 1)) {
                    (Some(a), Some(b)) => a - b,
                    _ => f64::NAN,
                };
            } else {
                let parts = [(2, 1, 1, 2), (0, 2, 2, 0), (1, 0, 0, 1)];
                for (k, &(c1, a1, c2, a2)) in parts.iter().enumerate() {
                    out[k] = match (d(c1, a1), d(c2, a2)) {
                        (Some(a), Some(b)) => a - b,
                        _ => f64::NAN,
                    };
                }
            }
        })
    }

    /// Central-difference divergence; face nodes are NaN.
    pub fn divergence(&self) -> Result<SampledField> {
        let nd = self.grid.ndim();
        if self.components < nd {
            return Err(Error::Shape(format!("divergence of {}-component field on {nd}D grid", self.components)));
        }
        SampledField::from_index_fn(self.grid.clone(), 1, |i, out| {
            out[0] = (0..nd)
                .map(|a| self.central_diff(i, a, a).unwrap_or(f64::NAN))
                .sum();
        })
    }

    fn from_index_fn<F>(grid: GridSpec, components: usize, f: F) -> Result<SampledField>
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        use rayon::prelude::*;
        let mut values = vec![0.0; grid.len() * components];
        values.par_chunks_mut(components).enumerate().for_each(|(i, out)| f(i, out));
        Ok(SampledField { grid, components, values })
    }

    /// Max |self − other| over nodes where both are finite and `keep(position)` holds.
    pub fn max_diff_where(&self, other: &SampledField, keep: impl Fn(Vec3) -> bool) -> Result<f64> {
        self.check_same_shape(other)?;
        let mut m: f64 = 0.0;
        for i in 0..self.grid.len() {
            if !keep(self.grid.position(i)) {
                continue;
            }
            for c in 0..self.components {
                let (a, b) = (self.get(i, c), other.get(i, c));
                if a.is_finite() && b.is_finite() {
                    m = m.max((a - b).abs());
                }
            }
        }
        Ok(m)
    }

    /// ‖self − reference‖₂ / ‖reference‖₂ over nodes with `keep(position)`.
    pub fn relative_l2_error(&self, reference: &SampledField, keep: impl Fn(Vec3) -> bool) -> Result<f64> {
        self.check_same_shape(reference)?;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..self.grid.len() {
            if !keep(self.grid.position(i)) {
                continue;
            }
            for c in 0..self.components {
                let (a, b) = (self.get(i, c), reference.get(i, c));
                num += (a - b) * (a - b);
                den += b * b;
            }
        }
        if den == 0.0 {
            return Ok(num.sqrt());
        }
        Ok((num / den).sqrt())
    }

    fn check_same_shape(&self, other: &SampledField) -> Result<()> {
        if self.grid != other.grid || self.components != other.components {
            return Err(Error::Shape("fields live on different grids or component counts".into()));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut head = String::new();
        let join = |v: &[String]| v.join(" ");
        writeln!(head, "GRID {GRID_VERSION} {} {}", self.grid.ndim(), self.components).unwrap();
        writeln!(head, "{}", join(&self.grid.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>())).unwrap();
        writeln!(head, "{}", join(&self.grid.spacing.iter().map(|h| format!("{h:.17e}")).collect::<Vec<_>>())).unwrap();
        writeln!(head, "{}", join(&self.grid.origin.iter().map(|o| format!("{o:.17e}")).collect::<Vec<_>>())).unwrap();
        w.write_all(head.as_bytes())?;
        let mut buf = String::with_capacity(self.values.len() * 25);
        for v in &self.values {
            writeln!(buf, "{v:.17e}").unwrap();
        }
        w.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, line)) => Ok((i + 1, line?)),
                None => Err(Error::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") }),
            }
        };
        let (ln, header) = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("GRID") {
            return Err(Error::Parse { line: ln, msg: "missing `GRID` header".into() });
        }
        match parts.next() {
            Some(GRID_VERSION) => {}
            other => {
                return Err(Error::Parse { line: ln, msg: format!("unsupported grid format version {other:?}") });
            }
        }
        let nums: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| Error::Parse { line: ln, msg: format!("bad integer `{p}`") }))
            .collect::<Result<_>>()?;
        let [dim, ncomp] = nums[..] else {
            return Err(Error::Parse { line: ln, msg: "header must be `GRID v1 <dim> <ncomp>`".into() });
        };
        let row = |ln: usize, s: &str| -> Result<Vec<f64>> {
            let v: Vec<f64> = s
                .split_whitespace()
                .map(|p| p.parse().map_err(|_| Error::Parse { line: ln, msg: format!("bad number `{p}`") }))
                .collect::<Result<_>>()?;
            if v.len() != dim {
                return Err(Error::Parse { line: ln, msg: format!("expected {dim} entries, got {}", v.len()) });
            }
            Ok(v)
        };
        let (l2, s) = next("dims")?;
        let dims = row(l2, &s)?
            .into_iter()
            .map(|d| {
                if d >= 1.0 && d.fract() == 0.0 {
                    Ok(d as usize)
                } else {
                    Err(Error::Parse { line: l2, msg: format!("bad dimension {d}") })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let (l3, s) = next("spacing")?;
        let spacing = row(l3, &s)?;
        let (l4, s) = next("origin")?;
        let origin = row(l4, &s)?;
        let grid = GridSpec::new(dims, spacing, origin)?;
        let expected = grid.len() * ncomp;
        let mut values = Vec::with_capacity(expected);
        for (i, line) in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            values.push(t.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad value `{t}`") })?);
        }
        if values.len() != expected {
            return Err(Error::Parse { line: 0, msg: format!("expected {expected} values, found {}", values.len()) });
        }
        SampledField::new(grid, ncomp, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        SampledField::read_from(std::fs::File::open(path)?)
    }
}
