use super::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn i() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

#[test]
fn volumes_are_two_pi() {
    let t = make_torus_grid(64, 64, i()).unwrap();
    assert_eq!(t.len(), 4096);
    assert!((t.integrate(&ScalarField::constant(&t, 1.0)).unwrap() - VOLUME).abs() < 1e-12 * VOLUME);
    let t8 = make_torus_grid(8, 8, i()).unwrap();
    assert!((t8.integrate(&ScalarField::constant(&t8, 3.0)).unwrap() - 3.0 * VOLUME).abs() < 1e-12);
    for (a, b) in [(64, 128), (8, 8), (33, 17)] {
        let s = make_sphere_grid(a, b).unwrap();
        let v = s.integrate(&ScalarField::constant(&s, 1.0)).unwrap();
        assert!((v - VOLUME).abs() < 1e-10 * VOLUME, "{a}x{b}: {v}");
        assert!(s.weights().iter().all(|&w| w > 0.0));
    }
}

#[test]
fn construction_errors() {
    assert_eq!(make_torus_grid(64, 64, -i()).unwrap_err(), Error::DegenerateLattice(-1.0));
    assert!(matches!(make_torus_grid(7, 64, i()), Err(Error::ResolutionTooSmall(7, 64))));
    assert!(matches!(make_sphere_grid(4, 128), Err(Error::ResolutionTooSmall(4, 128))));
}

#[test]
fn grid_mismatch_is_reported() {
    let a = make_torus_grid(16, 16, i()).unwrap();
    let b = make_torus_grid(16, 32, i()).unwrap();
    let f = ScalarField::constant(&a, 1.0);
    assert_eq!(b.laplacian(&f).unwrap_err(), Error::GridMismatch);
    assert_eq!(b.integrate(&f).unwrap_err(), Error::GridMismatch);
    assert!(ScalarField::new(&a, vec![0.0; 3]).is_err());
    assert!(matches!(ScalarField::new(&a, vec![f64::NAN; 256]), Err(Error::NonFinite(0))));
}

#[test]
fn torus_plane_wave_eigenvalue() {
    for modulus in [i(), Complex64::new(0.3, 1.1), Complex64::new(-0.5, 0.8)] {
        let g = make_torus_grid(32, 48, modulus).unwrap();
        let (a, b) = (modulus.re, modulus.im);
        let s2 = 2.0 * PI / b;
        for (k1, k2) in [(1.0, 0.0), (0.0, 2.0), (3.0, -2.0), (-4.0, 5.0)] {
            let f = ScalarField::from_fn(&g, |p| (2.0 * PI * (k1 * p.c1 + k2 * p.c2) + 0.4).cos()).unwrap();
            let lam = (2.0 * PI).powi(2) * (k1 * k1 + ((k2 - a * k1) / b).powi(2)) / s2;
            let lf = g.laplacian(&f).unwrap();
            for (x, y) in lf.values().iter().zip(f.values()) {
                assert!((x - lam * y).abs() < 1e-10 * lam, "modulus {modulus} k=({k1},{k2})");
            }
        }
    }
}

#[test]
fn sphere_potential_is_eigenfunction() {
    let g = make_sphere_grid(64, 128).unwrap();
    let pot = ScalarField::from_fn(&g, |p| {
        let r2 = p.chart.norm_sqr();
        0.5 * (r2 - 1.0) / (r2 + 1.0)
    })
    .unwrap();
    let lp = g.laplacian(&pot).unwrap();
    for (x, y) in lp.values().iter().zip(pot.values()) {
        assert!((x - 4.0 * y).abs() < 1e-10);
    }
}

#[test]
fn sphere_harmonics_are_eigenfunctions() {
    let g = make_sphere_grid(32, 64).unwrap();
    let cases: [(fn(f64, f64, f64) -> f64, f64); 4] = [
        (|x, _, _| x, 4.0),
        (|x, y, _| x * y, 12.0),
        (|x, _, z| x * z, 12.0),
        (|x, y, z| x * y * z, 24.0),
    ];
    for (h, lam) in cases {
        let f = ScalarField::from_fn(&g, |p| {
            let s = p.c1.sin();
            h(s * p.c2.cos(), s * p.c2.sin(), p.c1.cos())
        })
        .unwrap();
        let lf = g.laplacian(&f).unwrap();
        for (a, b) in lf.values().iter().zip(f.values()) {
            assert!((a - lam * b).abs() < 1e-10, "{a} vs {}", lam * b);
        }
    }
}

fn exp_x_error(n: usize) -> f64 {
    // F(x) = e^x of the ambient coordinate: Lap F = 2 e^x (x^2 + 2x - 1)
    let g = make_sphere_grid(n, 2 * n).unwrap();
    let x: Vec<f64> = g.positions().iter().map(|p| p.c1.sin() * p.c2.cos()).collect();
    let f = ScalarField::new(&g, x.iter().map(|v| v.exp()).collect()).unwrap();
    let lf = g.laplacian(&f).unwrap();
    lf.values().iter().zip(&x).map(|(l, v)| (l - 2.0 * v.exp() * (v * v + 2.0 * v - 1.0)).abs()).fold(0.0, f64::max)
}

#[test]
fn sphere_convergence_beats_second_order() {
    let (e1, e2) = (exp_x_error(8), exp_x_error(16));
    assert!(e2 < e1 / 4.0 && e2 < 1e-8, "errors {e1} {e2}");
}

#[test]
fn sphere_zonal_block_is_spectral() {
    // a degree-5 polynomial in mu is reproduced exactly
    let g = make_sphere_grid(16, 16).unwrap();
    let mu = g.sphere_mu().unwrap();
    let f = ScalarField::new(&g, mu.iter().map(|m| m.powi(5) - 0.3 * m * m).collect()).unwrap();
    let lf = g.laplacian(&f).unwrap();
    for (x, m) in lf.values().iter().zip(&mu) {
        // -2 d/dmu((1-mu^2) f') for f = mu^5 - 0.3 mu^2
        let exact = -2.0 * (20.0 * m.powi(3) - 30.0 * m.powi(5) - 0.6 + 1.8 * m * m);
        assert!((x - exact).abs() < 1e-10, "{x} vs {exact}");
    }
}

#[test]
fn laplacian_kills_constants_and_integrates_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for g in [make_torus_grid(32, 32, Complex64::new(0.2, 0.9)).unwrap(), make_sphere_grid(32, 64).unwrap()] {
        let c = ScalarField::constant(&g, 7.5);
        assert!(g.laplacian(&c).unwrap().sup_norm() < 1e-11);
        for _ in 0..5 {
            let f = smooth_random_field(&g, &mut rng, 1.0);
            let lf = g.laplacian(&f).unwrap();
            assert!(g.integrate(&lf).unwrap().abs() < 1e-10 * lf.sup_norm().max(1.0));
        }
    }
}

#[test]
fn laplacian_is_self_adjoint_and_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for g in [make_torus_grid(24, 40, Complex64::new(0.4, 1.3)).unwrap(), make_sphere_grid(24, 48).unwrap()] {
        for _ in 0..5 {
            let f = smooth_random_field(&g, &mut rng, 1.0);
            let h = smooth_random_field(&g, &mut rng, 1.0);
            let a = g.integral(&f.values().iter().zip(g.lap(h.values())).map(|(x, y)| x * y).collect::<Vec<_>>());
            let b = g.integral(&h.values().iter().zip(g.lap(f.values())).map(|(x, y)| x * y).collect::<Vec<_>>());
            assert!((a - b).abs() < 1e-9 * a.abs().max(b.abs()).max(1.0));
            let q = g.integral(&f.values().iter().zip(g.lap(f.values())).map(|(x, y)| x * y).collect::<Vec<_>>());
            assert!(q > 0.0);
        }
    }
}

#[test]
fn laplacian_is_nonnegative_at_a_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for g in [make_torus_grid(32, 32, i()).unwrap(), make_sphere_grid(32, 64).unwrap()] {
        for _ in 0..10 {
            let f = smooth_random_field(&g, &mut rng, 1.0);
            let k = (0..g.len()).max_by(|&a, &b| f.values()[a].total_cmp(&f.values()[b])).unwrap();
            let lf = g.laplacian(&f).unwrap();
            assert!(lf.values()[k] >= -1e-6, "{}", lf.values()[k]);
        }
    }
}

#[test]
fn torus_spectral_convergence() {
    // a smooth non-band-limited field: error collapses to roundoff when doubling
    let err = |n: usize| {
        let g = make_torus_grid(n, n, i()).unwrap();
        let s2 = 2.0 * PI;
        let f = ScalarField::from_fn(&g, |p| (0.7 * (2.0 * PI * p.c1).sin()).exp()).unwrap();
        let lf = g.laplacian(&f).unwrap();
        lf.values()
            .iter()
            .zip(g.positions())
            .map(|(v, p)| {
                let u = 2.0 * PI * p.c1;
                let e = (0.7 * u.sin()).exp();
                let exact = -(2.0 * PI).powi(2) / s2 * e * (0.49 * u.cos().powi(2) - 0.7 * u.sin());
                (v - exact).abs()
            })
            .fold(0.0, f64::max)
    };
    let (a, b) = (err(16), err(32));
    eprintln!("{a:e} {b:e}");
    assert!(b < 1e-3 * a && b < 1e-9, "{a} {b}");
}

#[test]
fn gradient_squared_of_constant_is_zero() {
    for g in [make_torus_grid(16, 16, i()).unwrap(), make_sphere_grid(16, 32).unwrap()] {
        let c = ScalarField::constant(&g, -2.0);
        assert!(g.gradient_squared(&c).unwrap().sup_norm() < 1e-20);
    }
}

#[test]
fn torus_green_identity() {
    let g = make_torus_grid(32, 32, Complex64::new(0.25, 1.2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let f = smooth_random_field(&g, &mut rng, 1.0);
        let lhs = g.integrate(&g.gradient_squared(&f).unwrap()).unwrap();
        let rhs = g.integral(&f.values().iter().zip(g.lap(f.values())).map(|(x, y)| x * y).collect::<Vec<_>>());
        assert!((lhs - rhs).abs() < 1e-8 * rhs.abs(), "{lhs} {rhs}");
    }
    // a single linear-phase wave has constant gradient
    let f = ScalarField::from_fn(&g, |p| (2.0 * PI * (2.0 * p.c1 - p.c2)).sin()).unwrap();
    let h = ScalarField::from_fn(&g, |p| (2.0 * PI * (2.0 * p.c1 - p.c2)).cos()).unwrap();
    let gf = g.gradient_squared(&f).unwrap();
    let gh = g.gradient_squared(&h).unwrap();
    let total: Vec<f64> = gf.values().iter().zip(gh.values()).map(|(a, b)| a + b).collect();
    let first = total[0];
    assert!(total.iter().all(|t| (t - first).abs() < 1e-9 * first));
}

#[test]
fn sphere_gradient_of_mu() {
    // |grad mu|^2 = 2 (1 - mu^2) on the sphere of area 2 pi
    let g = make_sphere_grid(32, 64).unwrap();
    let mu = g.sphere_mu().unwrap();
    let f = ScalarField::new(&g, mu.clone()).unwrap();
    let gs = g.gradient_squared(&f).unwrap();
    for (v, m) in gs.values().iter().zip(&mu) {
        assert!((v - 2.0 * (1.0 - m * m)).abs() < 1e-11);
    }
}

#[test]
fn shifted_inverse_inverts() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for g in [make_torus_grid(16, 24, Complex64::new(0.1, 0.9)).unwrap(), make_sphere_grid(16, 32).unwrap()] {
        let b = smooth_random_field(&g, &mut rng, 1.0);
        let mut x = vec![0.0; g.len()];
        g.shifted_inverse(0.7, b.values(), &mut x);
        let lx = g.lap(&x);
        for k in 0..g.len() {
            let r = lx[k] + 0.7 * x[k] - b.values()[k];
            assert!(r.abs() < 1e-9, "{r}");
        }
        let mut y = vec![0.0; 2 * g.len()];
        let stacked: Vec<f64> = b.values().iter().chain(b.values()).map(|v| *v).collect();
        g.block_inverse([[1.0, 0.5], [-0.3, 2.0]], &stacked, &mut y);
        let n = g.len();
        let l1 = g.lap(&y[..n]);
        let l2 = g.lap(&y[n..]);
        for k in 0..n {
            let r1 = l1[k] + y[k] + 0.5 * y[n + k] - b.values()[k];
            let r2 = l2[k] - 0.3 * y[k] + 2.0 * y[n + k] - b.values()[k];
            assert!(r1.abs() < 1e-8 && r2.abs() < 1e-8);
        }
    }
}

#[test]
fn export_writes_one_line_per_node() {
    let g = make_sphere_grid(8, 8).unwrap();
    let f = ScalarField::constant(&g, 1.5);
    let mut buf = Vec::new();
    g.export_field(&f, "f", &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 65);
    assert!(text.lines().nth(1).unwrap().starts_with("0 "));
    let meta = serde_json::to_string(&g.metadata()).unwrap();
    assert!(meta.contains("\"sphere\""));
}

proptest! {
    #[test]
    fn gradient_obeys_triangle_bound(seed in 0u64..1000) {
        let g = make_torus_grid(16, 16, Complex64::new(0.2, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = smooth_random_field(&g, &mut rng, 1.0);
        let h = smooth_random_field(&g, &mut rng, 1.0);
        let s = f.zip_with(&h, |a, b| a + b).unwrap();
        let (gf, gh, gs) = (g.gradient_squared(&f).unwrap(), g.gradient_squared(&h).unwrap(), g.gradient_squared(&s).unwrap());
        for k in 0..g.len() {
            prop_assert!(gs.values()[k].sqrt() <= gf.values()[k].sqrt() + gh.values()[k].sqrt() + 1e-9);
            prop_assert!(gs.values()[k] >= 0.0);
        }
    }

    #[test]
    fn sphere_integral_of_laplacian_vanishes(seed in 0u64..1000) {
        let g = make_sphere_grid(12, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = smooth_random_field(&g, &mut rng, 10.0);
        let lf = g.laplacian(&f).unwrap();
        prop_assert!(g.integrate(&lf).unwrap().abs() < 1e-9 * lf.sup_norm().max(1.0));
    }
}
