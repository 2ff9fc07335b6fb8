use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringlock_core::chi3::*;

const CHI: Chi3Params = Chi3Params {
    chi_1111: 2.8e-18,
    chi_1122: 2.8e-18 / 3.0,
    n_core: 3.48,
};

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

fn random_grid(seed: u64) -> ModeFieldGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nr, nz) = (7, 5);
    let r: Vec<f64> = (0..nr).map(|k| 5e-6 + k as f64 * 0.1e-6).collect();
    let z: Vec<f64> = (0..nz).map(|k| k as f64 * 0.05e-6).collect();
    let mut c = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let n = nr * nz;
    let er: Vec<_> = (0..n).map(|_| c()).collect();
    let ep: Vec<_> = (0..n).map(|_| c()).collect();
    let ez: Vec<_> = (0..n).map(|_| c()).collect();
    let mask: Vec<bool> = (0..n).map(|k| k % 3 != 0).collect();
    ModeFieldGrid::new(r, z, er, ep, ez, mask, vec![1e-10; n]).unwrap()
}

#[test]
fn closed_forms_match_phi_average_for_random_fields() {
    for seed in 0..200 {
        let g = random_grid(seed);
        let (a, b) = phi_average_oracle(&g, 16).unwrap();
        assert!(rel(integral_a_cyl(&g), a) < 1e-6, "A, seed {seed}");
        assert!(rel(integral_b_cyl(&g), b) < 1e-6, "B, seed {seed}");
    }
}

#[test]
fn phi_average_is_converged_at_eight_samples() {
    let g = random_grid(7);
    let (a8, b8) = phi_average_oracle(&g, 8).unwrap();
    let (a16, b16) = phi_average_oracle(&g, 16).unwrap();
    assert!(rel(a8, a16) < 1e-9);
    assert!(rel(b8, b16) < 1e-9);
}

#[test]
fn oracle_matches_closed_form_on_gaussian_mode() {
    let g = gaussian_mode(&GaussianModeSpec::default()).unwrap();
    let (a, b) = phi_average_oracle(&g, 8).unwrap();
    assert!(rel(integral_a_cyl(&g), a) < 1e-6);
    assert!(rel(integral_b_cyl(&g), b) < 1e-6);
}

#[test]
fn ez_only_oracle_has_zero_b() {
    let spec = GaussianModeSpec {
        polarization: Polarization::new(0.0, 0.0, 1.0, 0.0),
        ..GaussianModeSpec::default()
    };
    let g = gaussian_mode(&spec).unwrap();
    let (a, b) = phi_average_oracle(&g, 8).unwrap();
    assert!(b.norm() < 1e-12 * a.norm());
    assert!(rel(integral_a_cyl(&g), a) < 1e-12);
}

#[test]
fn integrals_are_phase_invariant() {
    for seed in 0..20 {
        let g = random_grid(seed);
        let rotated = g.scaled(Complex64::from_polar(1.0, 0.7 + seed as f64));
        assert!(rel(integral_a_cyl(&rotated), integral_a_cyl(&g)) < 1e-12);
        assert!(rel(integral_b_cyl(&rotated), integral_b_cyl(&g)) < 1e-12);
    }
}

#[test]
fn a_is_real_for_real_fields() {
    let spec = GaussianModeSpec {
        polarization: Polarization::new(1.0, 0.4, 0.2, 0.0),
        ..GaussianModeSpec::default()
    };
    let a = integral_a_cyl(&gaussian_mode(&spec).unwrap());
    assert!(a.im.abs() / a.norm() < 1e-9);
}

#[test]
fn uniform_ez_field_gives_core_volume() {
    let g = uniform_ez_mode(&GaussianModeSpec::default()).unwrap();
    let nl = beta_and_veff(&g, &CHI).unwrap();
    let v = core_volume(&g);
    assert!((nl.v_eff / v - 1.0).abs() < 1e-12, "{} vs {}", nl.v_eff, v);
}

#[test]
fn normalization_does_not_matter() {
    let g = gaussian_mode(&GaussianModeSpec::default()).unwrap();
    let a = beta_and_veff(&g, &CHI).unwrap();
    let b = beta_and_veff(&g.scaled(Complex64::new(10.0, 0.0)), &CHI).unwrap();
    assert!((a.beta / b.beta - 1.0).abs() < 1e-12);
    assert!((a.v_eff / b.v_eff - 1.0).abs() < 1e-12);
}

#[test]
fn zero_field_is_a_domain_error() {
    let g = gaussian_mode(&GaussianModeSpec::default())
        .unwrap()
        .scaled(Complex64::new(0.0, 0.0));
    assert!(beta_and_veff(&g, &CHI).is_err());
}

/// Width scale that puts V_eff at `target` for a half-rib-sized mode.
fn tuned_mode(target: f64) -> (ModeFieldGrid, f64) {
    let base = GaussianModeSpec {
        center_radius: 19.5e-6,
        core_inner_radius: 17.0e-6,
        core_outer_radius: 21.0e-6,
        r_range: (16.0e-6, 22.0e-6),
        core_bottom: -0.3e-6,
        core_top: 0.3e-6,
        z_range: (-0.8e-6, 0.8e-6),
        ..GaussianModeSpec::default()
    };
    let veff = |s: f64| {
        let spec = GaussianModeSpec {
            width_r: base.width_r * s,
            width_z: base.width_z * s,
            ..base.clone()
        };
        let g = gaussian_mode(&spec).unwrap();
        let v = beta_and_veff(&g, &CHI).unwrap().v_eff;
        (g, v)
    };
    let (mut lo, mut hi) = (0.2, 6.0);
    assert!(veff(lo).1 < target && veff(hi).1 > target);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if veff(mid).1 < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    veff(0.5 * (lo + hi))
}

#[test]
fn smaller_volume_gives_stronger_coupling() {
    let (g14, v14) = tuned_mode(14.0e-18);
    let (g15, v15) = tuned_mode(15.0e-18);
    assert!((v14 / 14.0e-18 - 1.0).abs() < 1e-6);
    assert!((v15 / 15.0e-18 - 1.0).abs() < 1e-6);
    let b14 = beta_and_veff(&g14, &CHI).unwrap().beta;
    let b15 = beta_and_veff(&g15, &CHI).unwrap().beta;
    assert!(b14 > b15);
    assert!((b14 / b15 - 15.0 / 14.0).abs() < 1e-6);
}

#[test]
fn trapezoid_refinement_is_second_order() {
    // The whole grid is core so the mask edge does not limit the order.
    let build = |n: usize| {
        let spec = GaussianModeSpec {
            width_r: 1.0e-6,
            width_z: 0.4e-6,
            r_range: (9.0e-6, 10.0e-6),
            z_range: (-0.2e-6, 0.2e-6),
            core_inner_radius: 8.0e-6,
            core_outer_radius: 11.0e-6,
            core_bottom: -1e-6,
            core_top: 1e-6,
            nr: n + 1,
            nz: n + 1,
            ..GaussianModeSpec::default()
        };
        integral_a_cyl(&gaussian_mode(&spec).unwrap()).re
    };
    let vals: Vec<f64> = [8, 16, 32, 64].iter().map(|&n| build(n)).collect();
    let d1 = vals[0] - vals[1];
    let d2 = vals[1] - vals[2];
    let d3 = vals[2] - vals[3];
    for ratio in [d1 / d2, d2 / d3] {
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }
}

#[test]
fn disk_like_flips_at_the_knee() {
    let outer = 19e-6;
    let threshold = 0.05;
    for knee in 3..12 {
        let series: Vec<(f64, f64)> = (0..16)
            .map(|k| {
                let r = 10e-6 + k as f64 * 0.5e-6;
                let excess = (k as f64 - knee as f64).max(0.0);
                (r, 14e-18 * (1.0 + 0.2 * excess * excess))
            })
            .collect();
        let flags = disk_like_classifier(&series, outer, threshold).unwrap();
        // brute force: smallest threshold multiplier at which each point passes
        let brute: Vec<bool> = (0..series.len())
            .map(|k| {
                let lo = k.saturating_sub(1);
                let hi = (k + 1).min(series.len() - 1);
                let slope = (series[hi].1 - series[lo].1) / (series[hi].0 - series[lo].0);
                let needed = slope.abs() * outer / series[k].1;
                needed < threshold
            })
            .collect();
        assert_eq!(flags, brute);
        let first_false = flags.iter().position(|&d| !d).unwrap();
        assert_eq!(first_false, knee);
    }
}
