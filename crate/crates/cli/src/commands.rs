use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use gaugekit::field_models::{make_test_field, sample_directions, sample_field, total_flux_with_tol};
use gaugekit::gauges::{
    adaptive_gauge, asymptotic_lambda, coulomb_gauge, coulomb_potential, extract_lambda, griesinger_gauge, loop_residual,
    transversal_gauge,
};
use gaugekit::propagator::{boosted_scattering_phase, convergence_study, BoostOptions, HamiltonianSpec, Mode, WavePacket};
use gaugekit::report::ExperimentReport;
use gaugekit::scattering_phase::{a0_forward_rhs, extract_a0_xray, high_energy_phase, modified_phase, phase_gauge_shift, reconstruct_a0};
use gaugekit::xray::{fbp_invert, grid_line_data, grid_scalar_forward, reconstruct_b, PotentialLineData, Plane, SinoLayout, Sinogram};
use gaugekit::{Dim, Error, FieldModel, GaugeKind, GridSpec, Mollifier, Result, SampledField, ScalarPotentialModel, Vec3, VectorPotential};

use crate::config::RunConfig;
use crate::export::{with_suffix, write_views};

pub const COMMANDS: [&str; 11] = [
    "field gen",
    "field flux",
    "gauge compute",
    "gauge lambda",
    "xray forward",
    "xray invert",
    "recon b",
    "recon a0",
    "scatter phase",
    "scatter simulate",
    "scatter study",
];

/// Keys every command accepts.
const SHARED: [&str; 5] = ["command", "tol", "mode", "out", "seed"];

fn command_keys(command: &str) -> &'static [&'static str] {
    match command {
        "field gen" => &["field", "params", "grid", "export"],
        "field flux" => &["field", "params", "input"],
        "gauge compute" => &["field", "params", "gauge", "grid", "export"],
        "gauge lambda" => &["field", "params", "gauge", "gauge2", "directions", "grid"],
        "xray forward" => &["input", "angles", "offsets", "half_width", "noise"],
        "xray invert" | "recon b" => &["input", "grid", "field", "params", "export"],
        "recon a0" => &["field", "params", "gauge", "a0", "grid", "angles", "offsets", "half_width", "width", "mass", "export"],
        "scatter phase" => &["field", "params", "gauge", "gauge2", "theta", "offsets", "half_width"],
        "scatter simulate" | "scatter study" => &["field", "params", "gauge", "u", "theta", "grid", "mass", "width", "window"],
        _ => &[],
    }
}

/// Report and files written by one command.
#[derive(Debug)]
pub struct Outcome {
    pub report: ExperimentReport,
    pub artifacts: Vec<PathBuf>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Rejects keys that the command does not read.
pub fn validate(cfg: &RunConfig) -> Result<()> {
    if !COMMANDS.contains(&cfg.command.as_str()) {
        return Err(cfg_err(format!("unknown command `{}`", cfg.command)));
    }
    let allowed = command_keys(&cfg.command);
    for line in cfg.to_text().lines().skip(1) {
        let key = line.split('=').next().unwrap_or("").trim();
        if !SHARED.contains(&key) && !allowed.contains(&key) {
            return Err(cfg_err(format!("`{key}` is not an option of `{}`", cfg.command)));
        }
    }
    Ok(())
}

fn require<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| cfg_err(format!("`--{flag}` is required")))
}

fn positive(v: f64, what: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(cfg_err(format!("{what} must be positive, got {v}")))
    }
}

fn field_model(cfg: &RunConfig) -> Result<FieldModel> {
    let name = require(&cfg.field, "field")?;
    make_test_field(name, cfg.params.as_deref().unwrap_or(&[]))
}

fn grid_of(cfg: &mut RunConfig, default: &str, dim: usize) -> Result<GridSpec> {
    let text = cfg.grid.get_or_insert_with(|| default.to_string());
    GridSpec::parse_shorthand(text, dim)
}

fn potential(b: &FieldModel, gauge: &str) -> Result<VectorPotential> {
    match gauge.parse::<GaugeKind>()? {
        GaugeKind::Transversal => Ok(transversal_gauge(b)),
        GaugeKind::Griesinger => griesinger_gauge(b, &Mollifier::default_for(b.dim)),
        GaugeKind::Coulomb => Ok(coulomb_potential(b)),
        GaugeKind::Adaptive(w) => adaptive_gauge(b, w),
        GaugeKind::External => Err(cfg_err("the external gauge has no construction rule")),
    }
}

fn mode_of(cfg: &mut RunConfig) -> Result<Mode> {
    cfg.mode.get_or_insert_with(|| Mode::Schrodinger.to_string()).parse()
}

fn out_of(cfg: &mut RunConfig, default: &str) -> PathBuf {
    cfg.out.get_or_insert_with(|| PathBuf::from(default)).clone()
}

fn direction(theta: f64) -> Vec3 {
    Vec3::from_angle(theta)
}

fn probe(grid: GridSpec, width: f64, mass: f64, mode: Mode) -> Result<WavePacket> {
    let psi = WavePacket::gaussian(grid, Vec3::ZERO, positive(width, "packet width")?, Vec3::ZERO, positive(mass, "mass")?)?;
    match mode {
        Mode::Schrodinger => Ok(psi),
        Mode::Pauli => {
            let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            psi.with_spinor([c, c])
        }
    }
}

/// Runs the command described by `cfg`, writing its artifacts, the report
/// (`<out>.report.txt`, plus `.csv` for series) and the resolved
/// configuration (`<out>.cfg`).
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    validate(cfg)?;
    let mut r = cfg.clone();
    r.seed.get_or_insert(0);
    let (mut report, mut artifacts) = match r.command.as_str() {
        "field gen" => field_gen(&mut r)?,
        "field flux" => field_flux(&mut r)?,
        "gauge compute" => gauge_compute(&mut r)?,
        "gauge lambda" => gauge_lambda(&mut r)?,
        "xray forward" => xray_forward(&mut r)?,
        "xray invert" => invert(&mut r, false)?,
        "recon b" => invert(&mut r, true)?,
        "recon a0" => recon_a0(&mut r)?,
        "scatter phase" => scatter_phase(&mut r)?,
        "scatter simulate" => scatter_simulate(&mut r)?,
        "scatter study" => scatter_study(&mut r)?,
        other => unreachable!("validated command `{other}`"),
    };
    let out = r.out.clone().expect("every command sets its output");
    for line in r.to_text().lines().skip(1) {
        if let Some((k, v)) = line.split_once(" = ") {
            report.param(&format!("run.{k}"), v);
        }
    }
    report.seed = r.seed;
    artifacts.extend(report.write(&with_suffix(&out, "report"))?);
    let cfg_path = with_suffix(&out, "cfg");
    r.save(&cfg_path)?;
    artifacts.push(cfg_path);
    Ok(Outcome { report, artifacts })
}

type Produced = (ExperimentReport, Vec<PathBuf>);

fn save_grid(f: &SampledField, out: &Path, export: bool) -> Result<Vec<PathBuf>> {
    f.save(out)?;
    let mut files = vec![out.to_path_buf()];
    if export {
        files.extend(write_views(f, out)?);
    }
    Ok(files)
}

fn planar_flux(f: &SampledField) -> Result<f64> {
    if f.grid.ndim() != 2 || f.components != 1 {
        return Err(Error::Shape(format!(
            "flux needs a planar one-component field, got {} component(s) on a {}D grid",
            f.components,
            f.grid.ndim()
        )));
    }
    Ok(f.values.iter().sum::<f64>() * f.grid.cell_volume())
}

fn field_gen(r: &mut RunConfig) -> Result<Produced> {
    let b = field_model(r)?;
    let default = if b.dim == Dim::Two { "128:12" } else { "48:8" };
    let grid = grid_of(r, default, b.dim.n())?;
    let out = out_of(r, "field.grid");
    let s = sample_field(&b, &grid)?;
    let mut rep = ExperimentReport::new("field gen");
    rep.param("field", &b.label);
    rep.metric("max_abs", s.max_abs());
    if b.dim == Dim::Two {
        rep.metric("grid_flux", planar_flux(&s)?);
    }
    let files = save_grid(&s, &out, r.export.unwrap_or(false))?;
    Ok((rep, files))
}

fn field_flux(r: &mut RunConfig) -> Result<Produced> {
    let mut rep = ExperimentReport::new("field flux");
    let flux = match (&r.input, &r.field) {
        (Some(_), Some(_)) => return Err(cfg_err("give either `--input` or `--field`, not both")),
        (None, None) => return Err(cfg_err("`--input` or `--field` is required")),
        (Some(path), None) => {
            let f = SampledField::load(path)?;
            rep.param("source", path.display());
            planar_flux(&f)?
        }
        (None, Some(_)) => {
            let b = field_model(r)?;
            let tol = *r.tol.get_or_insert(b.default_tol());
            rep.param("source", &b.label);
            total_flux_with_tol(&b, tol)?
        }
    };
    out_of(r, "flux");
    rep.metric("flux", flux);
    Ok((rep, Vec::new()))
}

/// Nodes at least two spacings away from every jump circle of `b`.
fn away_from_jumps(b: &FieldModel, h: f64) -> impl Fn(Vec3) -> bool + '_ {
    move |x| b.jump_radii.iter().all(|&rj| (x.norm() - rj).abs() > 2.0 * h)
}

fn gauge_compute(r: &mut RunConfig) -> Result<Produced> {
    let b = field_model(r)?;
    let gauge = require(&r.gauge, "gauge")?.clone();
    let default = if b.dim == Dim::Two { "128:12" } else { "48:8" };
    let grid = grid_of(r, default, b.dim.n())?;
    let out = out_of(r, "a.grid");
    let kind: GaugeKind = gauge.parse()?;
    let a = match kind {
        GaugeKind::Coulomb => coulomb_gauge(&b, &grid)?,
        _ => potential(&b, &gauge)?.sample(&grid)?,
    };
    let bs = sample_field(&b, &grid)?;
    let h = grid.spacing.iter().fold(0.0f64, |m, v| m.max(*v));
    let curl_err = a.curl()?.max_diff_where(&bs, away_from_jumps(&b, h))?;
    let mut rep = ExperimentReport::new("gauge compute");
    rep.param("field", &b.label);
    rep.param("gauge", kind);
    rep.metric("max_abs", a.max_abs());
    rep.metric("curl_max_error", curl_err);
    if let Some(tol) = r.tol {
        rep.verdict("curl_error_within_tol", curl_err <= tol);
    }
    let files = save_grid(&a, &out, r.export.unwrap_or(false))?;
    Ok((rep, files))
}

fn gauge_lambda(r: &mut RunConfig) -> Result<Produced> {
    let b = field_model(r)?;
    let a = potential(&b, require(&r.gauge, "gauge")?)?;
    let a2 = potential(&b, require(&r.gauge2, "gauge2")?)?;
    let n = *r.directions.get_or_insert(16);
    if n == 0 {
        return Err(cfg_err("`--directions` must be positive"));
    }
    let lambda = extract_lambda(&a, &a2)?;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut worst_cert: f64 = 0.0;
    for (k, w) in sample_directions(b.dim, n).into_iter().enumerate() {
        let lim = asymptotic_lambda(&lambda, w)?;
        xs.push(if b.dim == Dim::Two { w.y.atan2(w.x) } else { k as f64 });
        ys.push(lim.value);
        worst_cert = worst_cert.max(lim.certificate);
    }
    let mut rep = ExperimentReport::new("gauge lambda");
    rep.param("from", &a.label);
    rep.param("to", &a2.label);
    rep.metric("loop_residual", loop_residual(&a, &a2)?);
    rep.metric("max_certificate", worst_cert);
    rep.set_series(if b.dim == Dim::Two { "theta" } else { "direction" }, "Lambda", xs, ys);
    let mut files = Vec::new();
    if r.grid.is_some() {
        let grid = grid_of(r, "", b.dim.n())?;
        let out = out_of(r, "lambda.grid");
        let f = SampledField::from_fn(grid, 1, |x, o| {
            o[0] = lambda.eval(x)?;
            Ok(())
        })?;
        f.save(&out)?;
        files.push(out);
    } else {
        out_of(r, "lambda");
    }
    Ok((rep, files))
}

fn circumradius(g: &GridSpec) -> f64 {
    (0..g.ndim()).map(|a| (0.5 * (g.dims[a] - 1) as f64 * g.spacing[a]).powi(2)).sum::<f64>().sqrt()
}

fn xray_forward(r: &mut RunConfig) -> Result<Produced> {
    let path = require(&r.input, "input")?.clone();
    let f = SampledField::load(&path)?;
    if f.grid.ndim() != 2 {
        return Err(Error::UnsupportedDimension { found: f.grid.ndim(), context: "sinograms are planar" });
    }
    let n_angles = *r.angles.get_or_insert(180);
    let n_offsets = *r.offsets.get_or_insert(257);
    if n_angles == 0 || n_offsets < 2 {
        return Err(cfg_err("need at least one angle and two offsets"));
    }
    let kind = match f.components {
        1 => "scalar",
        2 => "potential",
        c => return Err(Error::Shape(format!("expected one or two components, found {c}"))),
    };
    let half = *r.half_width.get_or_insert(if kind == "scalar" { circumradius(&f.grid) } else { f.grid.inscribed_radius() });
    positive(half, "half width")?;
    let out = out_of(r, "data.sino");
    let layout = SinoLayout::parallel(n_angles, n_offsets, half);
    let mut sino = if kind == "scalar" {
        grid_scalar_forward(&f, layout)?
    } else {
        let offsets = layout.offsets();
        let mut s = Sinogram::zeros(layout);
        for i in 0..n_angles {
            let data = grid_line_data(&f, layout.angle(i), &offsets)?;
            s.row_mut(i).copy_from_slice(&data.values);
        }
        s
    };
    let noise = *r.noise.get_or_insert(0.0);
    if noise < 0.0 {
        return Err(cfg_err("noise level must be non-negative"));
    }
    if noise > 0.0 {
        let scale = sino.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dist = Normal::new(0.0, noise * scale).map_err(|e| cfg_err(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(r.seed.unwrap_or(0));
        for v in &mut sino.values {
            *v += dist.sample(&mut rng);
        }
    }
    sino.save(&out)?;
    let mut rep = ExperimentReport::new("xray forward");
    rep.param("kind", kind);
    rep.param("source", path.display());
    rep.metric("max_abs", sino.values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    Ok((rep, vec![out]))
}

fn invert(r: &mut RunConfig, potential_data: bool) -> Result<Produced> {
    let path = require(&r.input, "input")?.clone();
    let sino = Sinogram::load(&path)?;
    let grid = grid_of(r, "128:12", 2)?;
    let out = out_of(r, "recon.grid");
    let rec = if potential_data {
        let l = sino.layout;
        let offsets = l.offsets();
        let dataset: Vec<PotentialLineData> = (0..l.n_angles)
            .map(|i| PotentialLineData { plane: Plane::XY, theta: l.angle(i), offsets: offsets.clone(), values: sino.row(i).to_vec() })
            .collect();
        reconstruct_b(&dataset, &grid)?
    } else {
        fbp_invert(&sino, &grid)?
    };
    let name = if potential_data { "recon b" } else { "xray invert" };
    let mut rep = ExperimentReport::new(name);
    rep.param("source", path.display());
    for (k, w) in rec.warnings.iter().enumerate() {
        eprintln!("warning: {w}");
        rep.param(&format!("warning{k}"), w);
    }
    if r.field.is_some() {
        let b = field_model(r)?;
        let exact = sample_field(&b, &grid)?;
        let radius = 0.5 * grid.inscribed_radius();
        let err = rec.field.relative_l2_error(&exact, |x| x.norm() <= radius)?;
        let tol = *r.tol.get_or_insert(0.05);
        rep.param("reference", &b.label);
        rep.metric("compare_radius", radius);
        rep.metric("relative_l2_error", err);
        rep.verdict("error_within_tol", err <= tol);
    }
    let files = save_grid(&rec.field, &out, r.export.unwrap_or(false))?;
    Ok((rep, files))
}

fn recon_a0(r: &mut RunConfig) -> Result<Produced> {
    r.field.get_or_insert_with(|| "zero".into());
    let b = field_model(r)?;
    let reference = r.gauge.as_deref().map(|g| potential(&b, g)).transpose()?;
    let spec = r.a0.get_or_insert_with(|| vec![1.0, 1.0]).clone();
    let [amp, w0] = spec[..] else {
        return Err(cfg_err("`--a0` expects `amplitude,width`"));
    };
    let a0 = ScalarPotentialModel::gaussian(amp, w0, Vec3::ZERO)?;
    let grid = grid_of(r, "41:8", 2)?;
    let n_angles = *r.angles.get_or_insert(90);
    let n_offsets = *r.offsets.get_or_insert(81);
    let half = positive(*r.half_width.get_or_insert(4.0), "half width")?;
    if n_angles == 0 || n_offsets < 2 {
        return Err(cfg_err("need at least one angle and two offsets"));
    }
    let width = *r.width.get_or_insert(5.0);
    let mass = *r.mass.get_or_insert(1.0);
    let mode = mode_of(r)?;
    let out = out_of(r, "a0.grid");
    let psi = probe(grid.clone(), width, mass, mode)?;
    let layout = SinoLayout::parallel(n_angles, n_offsets, half);
    let offsets = layout.offsets();
    let mut slices = Vec::with_capacity(n_angles);
    for i in 0..n_angles {
        let w = direction(layout.angle(i));
        let limit = a0_forward_rhs(&a0, &b, w, &psi, reference.as_ref(), mode)?;
        slices.push(extract_a0_xray(&limit, &b, w, &psi, reference.as_ref(), mode, &offsets)?);
    }
    let masked = slices.iter().map(|s| s.masked.iter().filter(|m| **m).count()).sum::<usize>();
    let rec = reconstruct_a0(&slices, &grid)?;
    let exact = sample_field(&a0, &grid)?;
    let err = rec.field.relative_l2_error(&exact, |_| true)?;
    let tol = *r.tol.get_or_insert(0.05);
    let mut rep = ExperimentReport::new("recon a0");
    rep.param("field", &b.label);
    rep.param("a0", &a0.label);
    for (k, w) in rec.warnings.iter().enumerate() {
        eprintln!("warning: {w}");
        rep.param(&format!("warning{k}"), w);
    }
    rep.metric("masked_samples", masked as f64);
    rep.metric("relative_l2_error", err);
    rep.verdict("error_within_tol", err <= tol);
    let files = save_grid(&rec.field, &out, r.export.unwrap_or(false))?;
    Ok((rep, files))
}

fn scatter_phase(r: &mut RunConfig) -> Result<Produced> {
    let b = field_model(r)?;
    let gauge = r.gauge.get_or_insert_with(|| "transversal".into()).clone();
    let a = potential(&b, &gauge)?;
    let theta = *r.theta.get_or_insert(0.0);
    let n = *r.offsets.get_or_insert(81);
    let half = positive(*r.half_width.get_or_insert(4.0), "half width")?;
    if n < 2 {
        return Err(cfg_err("need at least two offsets"));
    }
    let out = out_of(r, "phase.grid");
    let w = direction(theta);
    let offsets = SinoLayout::parallel(1, n, half).offsets();
    let p = high_energy_phase(&a, w, &offsets)?;
    let mut rep = ExperimentReport::new("scatter phase");
    rep.param("potential", &a.label);
    rep.metric("modified_phase_plus", modified_phase(&a, w)?);
    rep.metric("modified_phase_minus", modified_phase(&a, w * -1.0)?);
    if let Some(g2) = r.gauge2.clone() {
        let a2 = potential(&b, &g2)?;
        let tol = *r.tol.get_or_insert(1e-4);
        let s = phase_gauge_shift(&a, &a2, w, &offsets, tol, None)?;
        rep.param("second_potential", &a2.label);
        rep.metric("shift", s.shift);
        rep.metric("max_deviation", s.max_deviation);
    }
    rep.set_series("offset", "phase", offsets, p.phase.clone());
    p.to_field()?.save(&out)?;
    Ok((rep, vec![out]))
}

struct ScatterSetup {
    h: HamiltonianSpec,
    a: VectorPotential,
    psi: WavePacket,
    omega: Vec3,
    u: Vec<f64>,
    opts: BoostOptions,
}

fn scatter_setup(r: &mut RunConfig, default_u: &[f64]) -> Result<ScatterSetup> {
    let b = field_model(r)?;
    let gauge = r.gauge.get_or_insert_with(|| "transversal".into()).clone();
    let a = potential(&b, &gauge)?;
    let u = r.u.get_or_insert_with(|| default_u.to_vec()).clone();
    let theta = *r.theta.get_or_insert(0.0);
    let grid = grid_of(r, "256:32", 2)?;
    let mass = *r.mass.get_or_insert(1.0);
    let width = *r.width.get_or_insert(1.0);
    let window = positive(*r.window.get_or_insert(8.0), "window")?;
    let mode = mode_of(r)?;
    let h = HamiltonianSpec::from_models(&grid, Some(&a), None, positive(mass, "mass")?, mode)?;
    let psi = probe(grid, width, mass, mode)?;
    Ok(ScatterSetup { h, a, psi, omega: direction(theta), u, opts: BoostOptions { window, tail_correction: true } })
}

fn scatter_simulate(r: &mut RunConfig) -> Result<Produced> {
    let s = scatter_setup(r, &[8.0])?;
    let [u] = s.u[..] else {
        return Err(cfg_err("`scatter simulate` takes exactly one boost"));
    };
    let out = out_of(r, "packet.grid");
    let run = boosted_scattering_phase(&s.h, Some(&s.a), &s.psi, u, s.omega, &s.opts)?;
    let mut rep = ExperimentReport::new("scatter simulate");
    rep.param("potential", &s.a.label);
    rep.metric("error", run.error);
    rep.metric("cook_residual_in", run.cook_residual[0]);
    rep.metric("cook_residual_out", run.cook_residual[1]);
    if let Some(tol) = r.tol {
        rep.verdict("error_within_tol", run.error <= tol);
    }
    run.packet.to_field()?.save(&out)?;
    Ok((rep, vec![out]))
}

fn scatter_study(r: &mut RunConfig) -> Result<Produced> {
    let s = scatter_setup(r, &[4.0, 8.0, 16.0])?;
    out_of(r, "study");
    let mut rep = convergence_study(&s.h, Some(&s.a), &s.psi, s.omega, &s.u, &s.opts)?;
    if let Some(tol) = r.tol {
        let worst = rep.ys.iter().fold(0.0f64, |m, v| m.max(*v));
        rep.verdict("errors_within_tol", worst <= tol);
    }
    if rep.ys.len() >= 2 && !rep.trivial {
        let n = rep.ys.len();
        rep.metric("last_ratio", rep.ys[n - 1] / rep.ys[n - 2]);
    }
    Ok((rep, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_checked_per_command() {
        let mut c = RunConfig::new("field gen");
        c.noise = Some(0.1);
        assert!(matches!(validate(&c), Err(Error::Config(m)) if m.contains("noise")));
        c.noise = None;
        c.tol = Some(1.0);
        assert!(validate(&c).is_ok());
        assert!(validate(&RunConfig::new("field melt")).is_err());
        for cmd in COMMANDS {
            assert!(!command_keys(cmd).is_empty(), "{cmd}");
        }
    }

    #[test]
    fn circumradius_of_square() {
        // spacing 2/3, corner node at (2/3, 2/3)
        assert!((circumradius(&GridSpec::square(3, 2.0).unwrap()) - 2f64.sqrt() * 2.0 / 3.0).abs() < 1e-15);
    }
}
