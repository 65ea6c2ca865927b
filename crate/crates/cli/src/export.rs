//! Graymap and CSV views of planar grid data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gaugekit::{Error, Result, SampledField};

pub const PGM_TAG: &str = "# gaugekit-pgm v1";
pub const CSV_HEADER: &str = "# gaugekit-csv v1";

fn require_planar(f: &SampledField) -> Result<()> {
    if f.grid.ndim() != 2 {
        return Err(Error::UnsupportedDimension { found: f.grid.ndim(), context: "image export is planar" });
    }
    Ok(())
}

/// Per-node value shown in the image: the sample itself for one component,
/// the Euclidean norm otherwise.
fn pixel_value(f: &SampledField, node: usize) -> f64 {
    let v = f.node(node);
    if v.len() == 1 {
        v[0]
    } else {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Plain (P2) graymap, first axis to the right, second axis up, linearly
/// scaled from the minimum (black) to the maximum (white).
pub fn pgm(f: &SampledField) -> Result<String> {
    require_planar(f)?;
    let (nx, ny) = (f.grid.dims[0], f.grid.dims[1]);
    let vals: Vec<f64> = (0..f.grid.len()).map(|n| pixel_value(f, n)).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::with_capacity(nx * ny * 4 + 64);
    writeln!(s, "P2\n{PGM_TAG}\n# range {lo:e} {hi:e}\n{nx} {ny}\n255").unwrap();
    for j in (0..ny).rev() {
        let row: Vec<String> =
            (0..nx).map(|i| (((vals[i * ny + j] - lo) / span) * 255.0).round().clamp(0.0, 255.0).to_string()).collect();
        writeln!(s, "{}", row.join(" ")).unwrap();
    }
    Ok(s)
}

/// Node coordinates and raw components, one node per row.
pub fn csv(f: &SampledField) -> Result<String> {
    require_planar(f)?;
    let mut s = String::with_capacity(f.values.len() * 26 + 64);
    writeln!(s, "{CSV_HEADER}").unwrap();
    let cols: Vec<String> = (0..f.components).map(|c| format!("v{c}")).collect();
    writeln!(s, "x,y,{}", cols.join(",")).unwrap();
    for n in 0..f.grid.len() {
        let p = f.grid.position(n);
        let v: Vec<String> = f.node(n).iter().map(|x| format!("{x:.17e}")).collect();
        writeln!(s, "{:.17e},{:.17e},{}", p.x, p.y, v.join(",")).unwrap();
    }
    Ok(s)
}

/// Writes `<path>.pgm` and `<path>.csv`.
pub fn write_views(f: &SampledField, path: &Path) -> Result<Vec<PathBuf>> {
    let img = with_suffix(path, "pgm");
    let table = with_suffix(path, "csv");
    std::fs::write(&img, pgm(f)?)?;
    std::fs::write(&table, csv(f)?)?;
    Ok(vec![img, table])
}

pub fn with_suffix(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gaugekit::GridSpec;

    #[test]
    fn graymap_layout() {
        let g = GridSpec::square(3, 2.0).unwrap();
        let f = SampledField::from_fn(g, 1, |x, o| {
            o[0] = x.x + 10.0 * x.y;
            Ok(())
        })
        .unwrap();
        let text = pgm(&f).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "P2");
        assert_eq!(lines[1], PGM_TAG);
        assert_eq!(lines[3], "3 3");
        // top row is the largest y
        assert_eq!(lines[5], "232 243 255");
        assert_eq!(lines[7], "0 12 23");
        let c = csv(&f).unwrap();
        assert!(c.starts_with(CSV_HEADER));
        assert_eq!(c.lines().count(), 11);
    }
}
