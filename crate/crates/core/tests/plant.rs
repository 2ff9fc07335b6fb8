use ringlock_core::plant::*;
use ringlock_core::units::{dbm_to_watts, NM};

const RATE: f64 = 0.05 * NM / 1e-3;

fn grid(ring: &ThermalRing) -> Vec<f64> {
    (0..=1400)
        .map(|k| ring.cold_resonance - 0.1 * NM + k as f64 * 0.00025 * NM)
        .collect()
}

fn sweeps(ring: ThermalRing, pump: f64) -> (SweepTrace, SweepTrace) {
    let g = grid(&ring);
    let mut plant = Plant::single(ring).unwrap();
    plant.set_pump(0, g[0], pump).unwrap();
    let fwd = wavelength_sweep(&mut plant, 0, &g, RATE, SweepDirection::Forward).unwrap();
    let mut plant = Plant::single(ring).unwrap();
    plant.set_pump(0, g[g.len() - 1], pump).unwrap();
    let rev = wavelength_sweep(&mut plant, 0, &g, RATE, SweepDirection::Reverse).unwrap();
    (fwd, rev)
}

#[test]
fn no_absorption_means_no_hysteresis() {
    let ring = ThermalRing {
        absorption_fraction: 0.0,
        ..ThermalRing::default()
    };
    let (fwd, rev) = sweeps(ring, dbm_to_watts(-2.0));
    let n = fwd.transmission.len();
    for k in 0..n {
        assert!((fwd.transmission[k] - rev.transmission[n - 1 - k]).abs() < 1e-9);
    }
}

#[test]
fn hysteresis_grows_with_power() {
    let ring = ThermalRing::default();
    let mut last = -1.0;
    for dbm in [-8.0, -6.5, -5.1, -3.5, -2.0] {
        let (fwd, rev) = sweeps(ring, dbm_to_watts(dbm));
        let w = hysteresis_width(&fwd, &rev, 0.05).unwrap();
        println!("{dbm} dBm: hysteresis {:.2} pm", w / 1e-12);
        assert!(w >= last, "{dbm} dBm: {w} < {last}");
        last = w;
    }
    let (fwd, rev) = sweeps(ring, dbm_to_watts(-5.1));
    assert!(hysteresis_width(&fwd, &rev, 0.05).unwrap() > 0.0);
    let (fwd, rev) = sweeps(ring, dbm_to_watts(-30.0));
    assert_eq!(hysteresis_width(&fwd, &rev, 0.05).unwrap(), 0.0);
}

#[test]
fn forward_sweep_has_wider_dip() {
    let (fwd, rev) = sweeps(ThermalRing::default(), dbm_to_watts(-5.1));
    let width = |t: &SweepTrace| t.transmission.iter().filter(|&&x| x < 0.5).count();
    assert!(width(&fwd) > width(&rev));
}

#[test]
fn sweep_selects_outer_equilibria() {
    let ring = ThermalRing::default();
    let pump = dbm_to_watts(-5.1);
    let (fwd, rev) = sweeps(ring, pump);
    let n = fwd.wavelength.len();
    // first sample where the sweeps disagree defines the middle of the window
    let bistable: Vec<usize> = (0..n)
        .filter(|&k| (fwd.transmission[k] - rev.transmission[n - 1 - k]).abs() > 0.05)
        .collect();
    let k = bistable[bistable.len() / 2];
    let lambda = fwd.wavelength[k];

    let mut plant = Plant::single(ring).unwrap();
    plant.set_pump(0, lambda, pump).unwrap();
    let roots = plant.equilibrium_offsets(0, 20_000);
    assert_eq!(roots.len(), 3, "roots {roots:?}");
    let tol = 0.05 * ring.half_linewidth();
    assert!(
        (fwd.offset[k] - roots[2]).abs() < tol,
        "{} vs {:?}",
        fwd.offset[k],
        roots
    );
    assert!((rev.offset[n - 1 - k] - roots[0]).abs() < tol);
}

#[test]
fn single_equilibrium_outside_window() {
    let ring = ThermalRing::default();
    let mut plant = Plant::single(ring).unwrap();
    plant
        .set_pump(0, ring.cold_resonance - 0.05 * NM, dbm_to_watts(-5.1))
        .unwrap();
    assert_eq!(plant.equilibrium_offsets(0, 20_000).len(), 1);
}

#[test]
fn crosstalk_superposes() {
    let rings = vec![ThermalRing::default(); 3];
    let k = CrosstalkMatrix::new(
        vec![vec![1.0, 0.05, 0.02], vec![0.05, 1.0, 0.05], vec![0.02, 0.05, 1.0]],
        true,
    )
    .unwrap();
    let run = |p1: f64, p2: f64| {
        let mut plant = Plant::new(rings.clone(), k.clone(), 20e-6).unwrap();
        plant.set_heater(1, p1).unwrap();
        plant.set_heater(2, p2).unwrap();
        for _ in 0..300 {
            plant.step(1e-6).unwrap();
        }
        plant.state().offsets[0]
    };
    let a = run(3e-3, 0.0);
    let b = run(0.0, 4e-3);
    let both = run(3e-3, 4e-3);
    assert!(a > 0.0 && b > 0.0);
    assert!((both - (a + b)).abs() < 1e-9 * both);
}

#[test]
fn energy_ordering_during_sweep() {
    let ring = ThermalRing::default();
    let g = grid(&ring);
    let pump = dbm_to_watts(-2.0);
    let mut plant = Plant::single(ring).unwrap();
    plant.set_pump(0, g[0], pump).unwrap();
    for &l in g.iter().step_by(7) {
        plant.set_pump_wavelength(0, l).unwrap();
        for _ in 0..5 {
            plant.step(1e-6).unwrap();
            let r = plant.readout(0);
            assert!(r.absorbed_power <= r.dropped_power);
            assert!(r.dropped_power <= pump * (1.0 + 1e-12));
        }
    }
}

#[test]
fn advance_matches_slow_stepping() {
    let rings = vec![ThermalRing::default(); 2];
    let k = CrosstalkMatrix::uniform(2, 0.05);
    let mut quasi = Plant::new(rings.clone(), k.clone(), 1e-3).unwrap();
    let mut exact = Plant::new(rings, k, 1e-3).unwrap();
    for p in [&mut quasi, &mut exact] {
        p.set_heater(1, 5.1e-3).unwrap();
        p.set_heater(0, 2e-3).unwrap();
    }
    quasi.advance(2e-3).unwrap();
    for _ in 0..2000 {
        exact.step(1e-6).unwrap();
    }
    let (a, b) = (quasi.state().offsets[0], exact.state().offsets[0]);
    assert!((a - b).abs() < 1e-3 * b, "{a} vs {b}");
}
