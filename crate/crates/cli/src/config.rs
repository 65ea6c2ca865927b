//! `key = value` run configurations.
//!
//! One entry per line, `#` starts a comment line, keys are written in a fixed
//! order and floats in their shortest round-trip form, so serializing a parsed
//! canonical file reproduces it byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gaugekit::{Error, Result};

pub const CONFIG_HEADER: &str = "# gaugekit-config v1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    /// Subcommand, e.g. `field gen`.
    pub command: String,
    pub field: Option<String>,
    pub params: Option<Vec<f64>>,
    pub gauge: Option<String>,
    pub gauge2: Option<String>,
    /// Grid shorthand `N:L`.
    pub grid: Option<String>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
    /// Direction angle in radians.
    pub theta: Option<f64>,
    pub angles: Option<usize>,
    pub offsets: Option<usize>,
    pub half_width: Option<f64>,
    pub directions: Option<usize>,
    pub u: Option<Vec<f64>>,
    pub mass: Option<f64>,
    pub width: Option<f64>,
    pub window: Option<f64>,
    pub a0: Option<Vec<f64>>,
    pub noise: Option<f64>,
    pub export: Option<bool>,
}

pub const KEYS: [&str; 23] = [
    "command",
    "field",
    "params",
    "gauge",
    "gauge2",
    "grid",
    "input",
    "out",
    "tol",
    "mode",
    "seed",
    "theta",
    "angles",
    "offsets",
    "half_width",
    "directions",
    "u",
    "mass",
    "width",
    "window",
    "a0",
    "noise",
    "export",
];

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn float(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| bad(line, format!("`{key}` expects a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(bad(line, format!("`{key}` must be finite")));
    }
    Ok(x)
}

fn floats(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| float(line, key, p.trim())).collect()
}

fn integer<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(line, format!("`{key}` expects a non-negative integer, got `{v}`")))
}

fn text(line: usize, key: &str, v: &str) -> Result<String> {
    if v.is_empty() || v.contains('\n') {
        return Err(bad(line, format!("`{key}` must be a non-empty single-line value")));
    }
    Ok(v.to_string())
}

impl RunConfig {
    pub fn new(command: impl Into<String>) -> Self {
        RunConfig { command: command.into(), ..Default::default() }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CONFIG_HEADER}").unwrap();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                writeln!(s, "{k} = {v}").unwrap();
            }
        };
        put("command", Some(self.command.clone()));
        put("field", self.field.clone());
        put("params", self.params.as_deref().map(list));
        put("gauge", self.gauge.clone());
        put("gauge2", self.gauge2.clone());
        put("grid", self.grid.clone());
        put("input", self.input.as_ref().map(|p| p.display().to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("tol", self.tol.map(|x| x.to_string()));
        put("mode", self.mode.clone());
        put("seed", self.seed.map(|x| x.to_string()));
        put("theta", self.theta.map(|x| x.to_string()));
        put("angles", self.angles.map(|x| x.to_string()));
        put("offsets", self.offsets.map(|x| x.to_string()));
        put("half_width", self.half_width.map(|x| x.to_string()));
        put("directions", self.directions.map(|x| x.to_string()));
        put("u", self.u.as_deref().map(list));
        put("mass", self.mass.map(|x| x.to_string()));
        put("width", self.width.map(|x| x.to_string()));
        put("window", self.window.map(|x| x.to_string()));
        put("a0", self.a0.as_deref().map(list));
        put("noise", self.noise.map(|x| x.to_string()));
        put("export", self.export.map(|x| x.to_string()));
        s
    }

    pub fn parse(input: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in input.lines().enumerate() {
            let ln = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(version) = rest.trim().strip_prefix("gaugekit-config ") {
                    if version.trim() != "v1" {
                        return Err(bad(ln, format!("unsupported config version `{}`", version.trim())));
                    }
                }
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(ln, format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let Some(key) = KEYS.iter().find(|key| **key == k) else {
                return Err(bad(ln, format!("unknown key `{k}`")));
            };
            if seen.contains(key) {
                return Err(bad(ln, format!("duplicate key `{k}`")));
            }
            seen.push(key);
            match k {
                "command" => cfg.command = text(ln, k, v)?,
                "field" => cfg.field = Some(text(ln, k, v)?),
                "params" => cfg.params = Some(floats(ln, k, v)?),
                "gauge" => cfg.gauge = Some(text(ln, k, v)?),
                "gauge2" => cfg.gauge2 = Some(text(ln, k, v)?),
                "grid" => cfg.grid = Some(text(ln, k, v)?),
                "input" => cfg.input = Some(PathBuf::from(text(ln, k, v)?)),
                "out" => cfg.out = Some(PathBuf::from(text(ln, k, v)?)),
                "tol" => cfg.tol = Some(float(ln, k, v)?),
                "mode" => cfg.mode = Some(text(ln, k, v)?),
                "seed" => cfg.seed = Some(integer(ln, k, v)?),
                "theta" => cfg.theta = Some(float(ln, k, v)?),
                "angles" => cfg.angles = Some(integer(ln, k, v)?),
                "offsets" => cfg.offsets = Some(integer(ln, k, v)?),
                "half_width" => cfg.half_width = Some(float(ln, k, v)?),
                "directions" => cfg.directions = Some(integer(ln, k, v)?),
                "u" => cfg.u = Some(floats(ln, k, v)?),
                "mass" => cfg.mass = Some(float(ln, k, v)?),
                "width" => cfg.width = Some(float(ln, k, v)?),
                "window" => cfg.window = Some(float(ln, k, v)?),
                "a0" => cfg.a0 = Some(floats(ln, k, v)?),
                "noise" => cfg.noise = Some(float(ln, k, v)?),
                "export" => {
                    cfg.export = Some(v.parse().map_err(|_| bad(ln, format!("`export` expects true or false, got `{v}`")))?)
                }
                _ => unreachable!("key table and match arms agree"),
            }
        }
        if cfg.command.is_empty() {
            return Err(bad(0, "missing `command`"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))?;
        RunConfig::parse(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Replaces every entry that `other` sets.
    pub fn overlay(&mut self, other: &RunConfig) {
        fn take<T: Clone>(dst: &mut Option<T>, src: &Option<T>) {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        take(&mut self.field, &other.field);
        take(&mut self.params, &other.params);
        take(&mut self.gauge, &other.gauge);
        take(&mut self.gauge2, &other.gauge2);
        take(&mut self.grid, &other.grid);
        take(&mut self.input, &other.input);
        take(&mut self.out, &other.out);
        take(&mut self.tol, &other.tol);
        take(&mut self.mode, &other.mode);
        take(&mut self.seed, &other.seed);
        take(&mut self.theta, &other.theta);
        take(&mut self.angles, &other.angles);
        take(&mut self.offsets, &other.offsets);
        take(&mut self.half_width, &other.half_width);
        take(&mut self.directions, &other.directions);
        take(&mut self.u, &other.u);
        take(&mut self.mass, &other.mass);
        take(&mut self.width, &other.width);
        take(&mut self.window, &other.window);
        take(&mut self.a0, &other.a0);
        take(&mut self.noise, &other.noise);
        take(&mut self.export, &other.export);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_roundtrips() {
        let mut c = RunConfig::new("scatter study");
        c.field = Some("gaussian2d".into());
        c.u = Some(vec![4.0, 8.0, 16.0]);
        c.tol = Some(1e-7);
        c.theta = Some(0.1 + 0.2);
        c.seed = Some(7);
        c.export = Some(true);
        let t = c.to_text();
        let back = RunConfig::parse(&t).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), t);
        assert_eq!(back.theta.unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(RunConfig::parse("command = x\ncolour = red\n"), Err(Error::Parse { line: 2, .. })));
        assert!(RunConfig::parse("command = x\ntol = fast\n").is_err());
        assert!(RunConfig::parse("command = x\ntol = inf\n").is_err());
        assert!(RunConfig::parse("command = x\ntol = 1\ntol = 2\n").is_err());
        assert!(RunConfig::parse("field = zero\n").is_err());
        assert!(RunConfig::parse("# gaugekit-config v2\ncommand = x\n").is_err());
        let c = RunConfig::parse("  # note\n\ncommand = field gen\nparams =\n").unwrap();
        assert_eq!(c.params, Some(vec![]));
    }
}
