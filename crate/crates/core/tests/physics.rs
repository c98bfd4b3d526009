//! Independent oracles for the field model, transforms and interpolants.

use std::f64::consts::PI;

use num_complex::Complex64;
use sarsim::em::{complex_wavenumber, kz_component, skin_depth, MediumProperties, Wavenumber};
use sarsim::grid::GridSpec;
use sarsim::interp::{Interpolant, Method};
use sarsim::pwe::{self, PlanarSamples, Reconstruction, Spectrum, TruncationPolicy};
use sarsim::source::{field_from_dipoles, field_at_points, Dipole, Geometry, Scenario};

const C: fn(f64, f64) -> Complex64 = Complex64::new;

fn medium(f: f64, eps: f64, sigma: f64) -> MediumProperties {
    MediumProperties::new(f, eps, sigma, 1000.0).unwrap()
}

// Frozen from a 40-digit evaluation of (2 pi f / c0) * sqrt(eps + i sigma / (omega eps0)).
const FROZEN_K: [(f64, f64, f64, f64, f64, f64, f64); 4] = [
    // f, eps, sigma, Re k, Im k, |k|, skin depth
    (850e6, 42.23, 0.89, 118.48050763046802609, 25.207034921814955891, 121.1322636539208363, 0.039671464855018260956),
    (2450e6, 39.37, 1.87, 326.90315243714006218, 55.328426478729752508, 331.55226714645194261, 0.018073891914935194374),
    (5500e6, 33.30, 5.18, 685.14452840724289673, 164.16100129634829497, 704.53662726149513885, 0.0060915807780361330931),
    (750e6, 42.47, 0.85, 105.19484329419728459, 23.924643498059955668, 107.88115508373084677, 0.04179790599935542574),
];

#[test]
fn wavenumbers_match_high_precision_values() {
    for &(f, eps, sigma, re, im, norm, skin) in &FROZEN_K {
        let k = complex_wavenumber(&medium(f, eps, sigma));
        assert!((k.value().re - re).abs() <= 1e-12 * norm, "Re k at {f}");
        assert!((k.value().im - im).abs() <= 1e-12 * norm, "Im k at {f}");
        assert!((k.norm() - norm).abs() <= 1e-12 * norm);
        assert!((skin_depth(k).unwrap() - skin).abs() <= 1e-12 * skin);
    }
    let k5 = complex_wavenumber(&medium(5500e6, 33.30, 5.18));
    assert!(skin_depth(k5).unwrap() < 0.015);
}

/// Both roots of `k^2 - kx^2 - ky^2`, built from the polar form.
fn roots(kx: f64, ky: f64, k: Complex64) -> [Complex64; 2] {
    let w = k * k - C(kx * kx + ky * ky, 0.0);
    let r = Complex64::from_polar(w.norm().sqrt(), w.arg() / 2.0);
    [r, -r]
}

#[test]
fn kz_branch_matches_brute_force_selection() {
    let k = complex_wavenumber(&medium(2450e6, 39.37, 1.87));
    for &(kx, ky) in &[(0.0, 0.0), (100.0, 50.0), (3000.0, 0.0), (2000.0, -4000.0), (-700.0, 700.0)] {
        let [a, b] = roots(kx, ky, k.value());
        let pick = if a.im > b.im { a } else { b };
        let kz = kz_component(kx, ky, k);
        assert!((kz - pick).norm() <= 1e-12 * pick.norm().max(1.0), "({kx}, {ky})");
        assert!(kz.im >= 0.0);
    }
    let kz = kz_component(5000.0, 5000.0, k);
    assert!((kz.im - 5000f64.hypot(5000.0)).abs() / kz.im < 0.01);
}

/// `exp(i k a) - 1` without cancellation for small `a`.
fn expm1_i(k: Complex64, a: f64) -> Complex64 {
    let x = -k.im * a;
    let y = k.re * a;
    let s = (y / 2.0).sin();
    C(x.exp_m1() * y.cos() - 2.0 * s * s, x.exp() * y.sin())
}

/// `G(r + a) - G(r)` for the scalar Green's function, formed without cancellation.
fn green_step(k: Complex64, r: f64, a: f64) -> Complex64 {
    let ra = r + a;
    let g0 = (Complex64::i() * k * r).exp() / (4.0 * PI);
    g0 * (expm1_i(k, a) * r - a) / (r * ra)
}

fn green(k: Complex64, r: f64) -> Complex64 {
    (Complex64::i() * k * r).exp() / (4.0 * PI * r)
}

#[test]
fn axial_field_matches_finite_differences_of_green_function() {
    for &(f, eps, sigma) in &[(850e6, 42.23, 0.89), (2450e6, 39.37, 1.87), (5500e6, 33.30, 5.18)] {
        let k = complex_wavenumber(&medium(f, eps, sigma));
        for &r in &[0.004, 0.0157, 0.035] {
            let dip = Dipole {
                position: [0.0, 0.0, 0.0],
                moment: [C(0.0, 0.0), C(0.0, 0.0), C(1.0, 0.0)],
            };
            let e = field_from_dipoles([0.0, 0.0, r], &[dip], k).unwrap();
            let h = 1e-5 * r;
            // d2G/dz2 on the axis by central differences
            let d2 = (green_step(k.value(), r, h) + green_step(k.value(), r, -h)) / (h * h);
            let expect = k.value() * k.value() * green(k.value(), r) + d2;
            assert!((e.z - expect).norm() / expect.norm() < 1e-6, "f={f} r={r}");
            assert!(e.x.norm() < 1e-12 * e.z.norm() && e.y.norm() < 1e-12 * e.z.norm());

            // broadside: (k^2 + d2/dx2) G at x = 0 for a moment along x
            let dip = Dipole {
                position: [0.0, 0.0, 0.0],
                moment: [C(1.0, 0.0), C(0.0, 0.0), C(0.0, 0.0)],
            };
            let e = field_from_dipoles([0.0, 0.0, r], &[dip], k).unwrap();
            let rho = (r * r + h * h).sqrt();
            let d2 = green_step(k.value(), r, h * h / (rho + r)) * 2.0 / (h * h);
            let expect = k.value() * k.value() * green(k.value(), r) + d2;
            assert!((e.x - expect).norm() / expect.norm() < 1e-6, "broadside f={f} r={r}");
        }
    }
}

#[test]
fn superposition_of_two_dipoles() {
    let k = complex_wavenumber(&medium(1800e6, 40.45, 1.39));
    let a = Dipole {
        position: [0.003, -0.002, 0.035],
        moment: [C(0.4, -1.0), C(0.2, 0.3), C(-0.1, 0.05)],
    };
    let b = Dipole {
        position: [-0.01, 0.006, 0.035],
        moment: [C(-0.7, 0.1), C(1.1, 0.0), C(0.0, 0.6)],
    };
    for r in [[0.0, 0.0, 0.02], [0.05, -0.03, 0.0], [0.002, 0.001, 0.0299]] {
        let ab = field_from_dipoles(r, &[a, b], k).unwrap();
        let sum = field_from_dipoles(r, &[a], k).unwrap() + field_from_dipoles(r, &[b], k).unwrap();
        assert!((ab - sum).norm() <= 1e-12 * ab.norm());
    }
}

#[test]
fn single_on_grid_exponential_fills_one_bin() {
    let n = [5, 5];
    let pitch = [0.004, 0.004];
    let kmax = pwe::max_freqs(pitch);
    for &(m0x, m0y) in &[(0i64, 0i64), (1, -2), (2, 2), (-1, 0)] {
        let kx = m0x as f64 * kmax[0] / 5.0;
        let ky = m0y as f64 * kmax[1] / 5.0;
        let mut v = Vec::new();
        for j in -2..=2 {
            for i in -2..=2 {
                let (x, y) = (i as f64 * pitch[0], j as f64 * pitch[1]);
                v.push(Complex64::from_polar(1.0, kx * x + ky * y));
            }
        }
        let s = pwe::forward_component_direct(&v, n, pitch, n).unwrap();
        for my in -2..=2 {
            for mx in -2..=2 {
                let c = s.get(mx, my);
                if (mx, my) == (m0x, m0y) {
                    assert!((c - C(25.0, 0.0)).norm() < 1e-12);
                } else {
                    assert!(c.norm() < 1e-12, "leak at ({mx}, {my})");
                }
            }
        }
        let fast = pwe::forward_component(&v, n, pitch, n).unwrap();
        for (a, b) in fast.coefficients.iter().zip(&s.coefficients) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}

#[test]
fn parseval_at_equal_sizes() {
    let n = [7, 9];
    let v: Vec<Complex64> = (0..63).map(|i| C((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos() - 0.2)).collect();
    let s = pwe::forward_component_direct(&v, n, [0.007, 0.007], n).unwrap();
    let e_samples: f64 = v.iter().map(Complex64::norm_sqr).sum();
    assert!((s.energy() / 63.0 - e_samples).abs() <= 1e-10 * e_samples);
}

#[test]
fn evanescent_bin_growth_matches_scalar_evaluation() {
    let k = complex_wavenumber(&medium(2450e6, 39.37, 1.87));
    let counts = [3, 3];
    // bin (1, 0) sits at kx = 2 |k|
    let mut s = Spectrum::zeros(counts, [2.0 * k.norm() * 3.0, 1.0]).unwrap();
    s.coefficients[2 + 3] = C(1.0, 0.0);
    let out = pwe::propagate_spectrum(&s, k, 1e-3);
    let [a, b] = roots(2.0 * k.norm(), 0.0, k.value());
    let kz = if a.im > b.im { a } else { b };
    let expect = (kz.im * 1e-3).exp();
    assert!((out.coefficients[5].norm() - expect).abs() < 1e-12 * expect);
    assert!(out.coefficients[5].norm() > 1.0);
}

#[test]
fn on_grid_plane_wave_is_reconstructed_exactly() {
    // lossless liquid so the wave keeps a single real kz
    let med = medium(2450e6, 40.0, 0.0);
    let k = complex_wavenumber(&med);
    let n = [29, 29];
    let pitch = [0.007, 0.007];
    let kmax = pwe::max_freqs(pitch);
    let (kx, ky) = (2.0 * kmax[0] / 29.0, -1.0 * kmax[1] / 29.0);
    let kz = kz_component(kx, ky, k);
    let (ax, ay) = (C(0.8, 0.3), C(-0.2, 0.5));
    let wave = |x: f64, y: f64, z: f64| (Complex64::i() * (C(kx * x + ky * y, 0.0) - kz * z)).exp();
    let z_mea = 0.01925;
    let mut ex = Vec::new();
    let mut ey = Vec::new();
    for j in -14..=14 {
        for i in -14..=14 {
            let w = wave(i as f64 * pitch[0], j as f64 * pitch[1], z_mea);
            ex.push(ax * w);
            ey.push(ay * w);
        }
    }
    let samples = PlanarSamples::new(z_mea, pitch, n, ex, ey).unwrap();
    let rec = Reconstruction::new(&samples, k, 0.0, n).unwrap();
    let z_rec = 0.005;
    let spec = GridSpec::new([-0.098, -0.098, z_rec], [0.007, 0.007, 1.0], [29, 29, 1]).unwrap();
    let grid = rec.volume(spec).unwrap();
    let az = (ax * kx + ay * ky) / kz;
    let sarsim::grid::FieldValues::Vector(vals) = &grid.values else { panic!() };
    for (idx, v) in vals.iter().enumerate() {
        let [x, y, z] = spec.position(idx % 29, idx / 29, 0);
        let w = wave(x, y, z);
        assert!((v.x - ax * w).norm() < 1e-10);
        assert!((v.y - ay * w).norm() < 1e-10);
        assert!((v.z - az * w).norm() < 1e-10);
    }
    // Through the default zero-padded lattice the hard aperture edge leaks
    // into neighbouring bins; in the lossy liquid, with the full band and a
    // 1 mm step, the central half still agrees to 1e-3.
    let lossy = complex_wavenumber(&medium(2450e6, 39.37, 1.87));
    let kz = kz_component(kx, ky, lossy);
    let wave = |x: f64, y: f64, z: f64| (Complex64::i() * (C(kx * x + ky * y, 0.0) - kz * z)).exp();
    let mut ex = Vec::new();
    for j in -14..=14 {
        for i in -14..=14 {
            ex.push(wave(i as f64 * pitch[0], j as f64 * pitch[1], z_mea));
        }
    }
    let samples = PlanarSamples::new(z_mea, pitch, n, ex.clone(), ex).unwrap();
    let rec = Reconstruction::new(&samples, lossy, 1.0, pwe::default_counts(n)).unwrap();
    let near = GridSpec::new([-0.098, -0.098, z_mea - 1e-3], [0.007, 0.007, 1.0], [29, 29, 1]).unwrap();
    let grid = rec.volume(near).unwrap();
    let sarsim::grid::FieldValues::Vector(vals) = &grid.values else { panic!() };
    let mut worst: f64 = 0.0;
    for (idx, v) in vals.iter().enumerate() {
        let (i, j) = (idx % 29, idx / 29);
        if (7..22).contains(&i) && (7..22).contains(&j) {
            let [x, y, z] = near.position(i, j, 0);
            let w = wave(x, y, z);
            worst = worst.max((v.x - w).norm() / w.norm());
        }
    }
    assert!(worst < 1e-3, "padded-lattice error {worst}");
}

#[test]
fn single_dipole_z_component_is_recovered() {
    let med = medium(2450e6, 39.37, 1.87);
    let geometry = Geometry::default();
    let dip = Dipole {
        position: [0.0, 0.0, geometry.dipole_plane_z()],
        moment: [C(1.0, 0.0), C(0.3, -0.2), C(0.0, 0.0)],
    };
    let sc = Scenario::custom(med, vec![dip], geometry).unwrap();
    let pos = geometry.probe_positions();
    let fields = field_at_points(&sc, &pos).unwrap();
    let samples = PlanarSamples::from_fields(&geometry, &fields).unwrap();
    // full band: at the measurement plane nothing is propagated, only divided by kz
    let rec = Reconstruction::new(&samples, sc.wavenumber(), 1.0, pwe::default_counts(samples.counts)).unwrap();
    let half = 0.25 * (geometry.probes_per_side - 1) as f64 * geometry.probe_pitch;
    let spec = GridSpec::new([-0.098, -0.098, geometry.measurement_plane_z], [0.007, 0.007, 1.0], [29, 29, 1]).unwrap();
    let grid = rec.volume(spec).unwrap();
    let sarsim::grid::FieldValues::Vector(vals) = &grid.values else { panic!() };
    let (mut num, mut den) = (0.0, 0.0);
    for (idx, v) in vals.iter().enumerate() {
        let p = pos[idx];
        if p[0].abs() <= half + 1e-9 && p[1].abs() <= half + 1e-9 {
            num += (v.z - fields[idx].z).norm_sqr();
            den += fields[idx].z.norm_sqr();
        }
    }
    let rms = (num / den).sqrt();
    assert!(rms < 0.05, "E_z relative RMS {rms}");
}

#[test]
fn truncation_policy_limits() {
    let k = Wavenumber::new(C(300.0, 40.0)).unwrap();
    let kmax = pwe::max_freqs([0.007, 0.007]);
    let p0 = TruncationPolicy::new(0.0, k, kmax).unwrap();
    assert!((p0.threshold - k.norm()).abs() < 1e-12);
    let p1 = TruncationPolicy::new(1.0, k, kmax).unwrap();
    assert!((p1.threshold - kmax[0].hypot(kmax[1])).abs() < 1e-9);
}

#[test]
fn spline_beats_linear_on_cubic_profile() {
    let f = |x: f64| 0.5 * x * x * x - 2.0 * x * x + x + 3.0;
    let f2_max = |a: f64, b: f64| (3.0 * a - 4.0).abs().max((3.0 * b - 4.0).abs());
    let h = 0.25;
    let x: Vec<f64> = (0..=16).map(|i| i as f64 * h).collect();
    let y: Vec<f64> = x.iter().map(|&t| f(t)).collect();
    let lin = Interpolant::new(Method::Linear, &x, &y).unwrap();
    let spl = Interpolant::new(Method::CubicSpline, &x, &y).unwrap();
    let (mut el, mut es) = (0.0f64, 0.0f64);
    // interior, three intervals away from either end
    let mut t = 3.0 * h;
    while t <= 13.0 * h {
        el = el.max((lin.eval(t) - f(t)).abs());
        es = es.max((spl.eval(t) - f(t)).abs());
        t += h / 7.0;
    }
    let linear_bound = h * h / 8.0 * f2_max(0.0, 4.0);
    assert!(el <= linear_bound);
    assert!(es < el, "spline {es} vs linear {el}");
    // natural end conditions disturb a cubic only near the ends
    assert!(es < 0.1 * el);
}
