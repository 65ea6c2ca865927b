use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use gaugekit::field_models::{make_test_field, sample_field};
use gaugekit::gauges::{coulomb_potential, griesinger_gauge, transversal_gauge};
use gaugekit::propagator::{approx_scattering, evolve_for, HamiltonianSpec, Mode, WavePacket};
use gaugekit::scattering_phase::a0_forward_rhs;
use gaugekit::xray::{
    derivative_to_xray, fbp_invert, line_integral_a, potential_line_data, reconstruct_b, scalar_line_integral,
    xray_scalar_forward, LineOptions, Plane, SinoLayout,
};
use gaugekit::{GridSpec, Mollifier, SampledField, ScalarPotentialModel, Vec3};
use num_complex::Complex64;

// Nested 1D quadrature of the mollified radial integral for gaussian2d at
// (2, 0) with a bump of radius 1/2; closed form (1 − e⁻⁴)/4.
const GRIESINGER_AT_2_0: f64 = 0.245_421_090_277_816_44;

#[test]
fn griesinger_gauge_matches_frozen_value() {
    let b = make_test_field("gaussian2d", &[]).unwrap();
    let a = griesinger_gauge(&b, &Mollifier::default_for(b.dim)).unwrap();
    let v = a.eval(Vec3::planar(2.0, 0.0)).unwrap();
    assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-8);
    assert_abs_diff_eq!(v.y, GRIESINGER_AT_2_0, epsilon = 1e-8);
    assert_abs_diff_eq!(GRIESINGER_AT_2_0, (1.0 - (-4.0f64).exp()) / 4.0, epsilon = 1e-15);
}

#[test]
fn transverse_derivative_is_the_field_transform() {
    let b = make_test_field("gaussian2d", &[]).unwrap();
    let offsets: Vec<f64> = (0..=800).map(|k| -4.0 + 0.01 * k as f64).collect();
    for a in [transversal_gauge(&b), coulomb_potential(&b)] {
        let data = potential_line_data(&a, &Plane::XY, 0.0, &offsets).unwrap();
        let got = derivative_to_xray(&data, Vec3::E2).unwrap();
        let field = |x: Vec3| b.scalar(x);
        for (d, g) in offsets.iter().zip(&got) {
            let expect = -scalar_line_integral(&field, Vec3::planar(0.0, *d), Vec3::E1, &LineOptions::default()).unwrap();
            assert!((g - expect).abs() <= 1e-4, "{} at d = {d}: {g} vs {expect}", a.label);
        }
    }
}

#[test]
fn line_integrals_across_the_support_differ_by_the_flux() {
    for name in ["gaussian2d", "solenoid2d"] {
        let b = make_test_field(name, &[]).unwrap();
        for a in [transversal_gauge(&b), coulomb_potential(&b)] {
            let near = line_integral_a(&a, Vec3::E1, Vec3::planar(0.0, 30.0)).unwrap();
            let far = line_integral_a(&a, Vec3::E1, Vec3::planar(0.0, -30.0)).unwrap();
            assert!((near - far + PI).abs() <= 1e-4, "{name} {}: {}", a.label, near - far);
        }
    }
}

#[test]
fn fbp_keeps_an_offset_bump_in_place() {
    let c = Vec3::planar(1.5, -0.75);
    let f = move |x: Vec3| {
        let q = (x - c).norm_sq();
        if q < 1.0 {
            (1.0 - q).powi(4)
        } else {
            0.0
        }
    };
    let opts = LineOptions { effective_radius: c.norm() + 1.0, ..LineOptions::default() };
    let s = xray_scalar_forward(&f, SinoLayout::parallel(180, 257, 5.0), &opts).unwrap();
    let g = GridSpec::square(101, 8.0).unwrap();
    let rec = fbp_invert(&s, &g).unwrap();
    let peak = (0..g.len()).max_by(|&i, &j| rec.field.get(i, 0).total_cmp(&rec.field.get(j, 0))).unwrap();
    let at = g.position(peak);
    assert!((at - c).norm() <= g.spacing[0] * 2f64.sqrt(), "peak at {at:?}");
}

#[test]
fn field_in_an_offset_plane_is_recovered_in_3d() {
    let b = make_test_field("gaussian3d_loop", &[]).unwrap();
    let a = transversal_gauge(&b);
    let z0 = 0.4;
    let plane = Plane::new(Vec3::new(0.0, 0.0, z0), Vec3::E1, Vec3::E2).unwrap();
    let layout = SinoLayout::parallel(90, 129, 4.0);
    let offsets = layout.offsets();
    let data: Vec<_> = (0..layout.n_angles).map(|i| potential_line_data(&a, &plane, layout.angle(i), &offsets).unwrap()).collect();
    let g = GridSpec::square(64, 6.0).unwrap();
    let rec = reconstruct_b(&data, &g).unwrap();
    let exact = SampledField::from_fn(g.clone(), 1, |x, o| {
        let rho2 = x.x * x.x + x.y * x.y;
        o[0] = (2.0 - 2.0 * rho2) * (-rho2 - z0 * z0).exp();
        Ok(())
    })
    .unwrap();
    let err = rec.field.relative_l2_error(&exact, |x| x.norm() <= 2.5).unwrap();
    assert!(err <= 0.02, "{err}");
}

#[test]
fn spin_up_sees_minus_half_b_as_a_scalar_potential() {
    let g = GridSpec::square(64, 16.0).unwrap();
    let b = make_test_field("gaussian2d", &[]).unwrap();
    let a = transversal_gauge(&b);
    let psi = WavePacket::gaussian(g.clone(), Vec3::planar(-1.0, 0.0), 1.0, Vec3::planar(1.0, 0.5), 1.0).unwrap();
    let pauli = HamiltonianSpec::from_models(&g, Some(&a), None, 1.0, Mode::Pauli).unwrap();
    // spin term −σ₃B/2m with m = 1
    let minus_half_b = SampledField::from_fn(g.clone(), 1, |x, o| {
        o[0] = -0.5 * b.scalar(x);
        Ok(())
    })
    .unwrap();
    let plain = HamiltonianSpec::new(g.clone(), Some(a.sample(&g).unwrap()), Some(minus_half_b), None, 1.0, Mode::Schrodinger).unwrap();
    let up = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let lhs = evolve_for(&pauli, &psi.with_spinor(up).unwrap(), 1.0).unwrap();
    let rhs = evolve_for(&plain, &psi, 1.0).unwrap().with_spinor(up).unwrap();
    assert!(lhs.distance(&rhs) <= 1e-9, "{}", lhs.distance(&rhs));

    let zero = make_test_field("zero", &[]).unwrap();
    let za = transversal_gauge(&zero);
    let free_pauli = HamiltonianSpec::from_models(&g, Some(&za), None, 1.0, Mode::Pauli).unwrap();
    let free = HamiltonianSpec::from_models(&g, Some(&za), None, 1.0, Mode::Schrodinger).unwrap();
    let mixed = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
    let lhs = evolve_for(&free_pauli, &psi.with_spinor(mixed).unwrap(), 1.0).unwrap();
    let rhs = evolve_for(&free, &psi, 1.0).unwrap().with_spinor(mixed).unwrap();
    assert!(lhs.distance(&rhs) <= 1e-10);
}

/// `‖u(e^{−iuω·x} S e^{iuω·x} − 1)ψ − r‖ / ‖r‖` with `r` the limit term.
fn weak_potential_residual(h: &HamiltonianSpec, psi: &WavePacket, limit: &WavePacket, u: f64) -> f64 {
    let out = approx_scattering(h, &psi.boosted(u, Vec3::E1), 8.0 / u, None).unwrap().packet.boosted(-u, Vec3::E1);
    let scaled = WavePacket::new(
        psi.grid.clone(),
        psi.spin,
        psi.mass,
        out.data.iter().zip(&psi.data).map(|(o, p)| (o - p) * u).collect(),
    )
    .unwrap();
    scaled.distance(limit) / limit.norm()
}

#[test]
fn weak_scalar_potential_approaches_its_limit_at_rate_one() {
    let g = GridSpec::square(256, 32.0).unwrap();
    let zero = make_test_field("zero", &[]).unwrap();
    let a0 = ScalarPotentialModel::gaussian(1e-3, 1.0, Vec3::planar(0.3, 0.2)).unwrap();
    let h = HamiltonianSpec::from_models(&g, None, Some(&a0), 1.0, Mode::Schrodinger).unwrap();
    let psi = WavePacket::gaussian(g.clone(), Vec3::ZERO, 1.0, Vec3::ZERO, 1.0).unwrap();
    let limit = a0_forward_rhs(&a0, &zero, Vec3::E1, &psi, None, Mode::Schrodinger).unwrap();
    let r8 = weak_potential_residual(&h, &psi, &limit, 8.0);
    let r16 = weak_potential_residual(&h, &psi, &limit, 16.0);
    assert!(r16 < 0.2, "{r8} {r16}");
    assert!((0.3..=0.7).contains(&(r16 / r8)), "{r8} {r16}");
}

#[test]
fn sampled_gaussian_matches_its_model() {
    let b = make_test_field("gaussian2d", &[2.0, 1.5]).unwrap();
    let g = GridSpec::square(17, 8.0).unwrap();
    let s = sample_field(&b, &g).unwrap();
    for i in 0..g.len() {
        let x = g.position(i);
        assert_abs_diff_eq!(s.get(i, 0), 2.0 * (-x.norm_sq() / 2.25).exp(), epsilon = 1e-14);
    }
}
