//! Thermo-optic microring plant: heater tuning, pump self-heating, photocurrent
//! and slow thermal crosstalk between rings.
//!
//! Optics are quasi-static. Each ring's resonance offset obeys a first-order
//! thermal ODE driven by its heater, crosstalk from other heaters and the
//! absorbed fraction of the dropped pump power.

use serde::{Deserialize, Serialize};

use crate::cmt::{all_pass_transmission, decay_rates, dropped_fraction, DecayRates, ResonanceParams};
use crate::error::{Error, Result};
use crate::units::{angular_frequency_of, NM};

/// Static parameters of one heater-tuned ring at its pump resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ThermalRing {
    /// Pump resonance with heater off and no pump (m).
    pub cold_resonance: f64,
    pub q_intrinsic: f64,
    pub q_extrinsic: f64,
    /// Red shift per heater watt (m/W).
    pub tuning_efficiency: f64,
    /// Red shift per watt of absorbed pump power (m/W).
    pub self_heating_efficiency: f64,
    /// Fraction of the dropped pump power that heats the ring.
    pub absorption_fraction: f64,
    /// Shift per dropped watt from free carriers (m/W, negative = blue).
    /// Zero by default.
    #[serde(default)]
    pub carrier_shift: f64,
    /// Thermal time constant (s).
    pub tau_thermal: f64,
    /// Photocurrent per dropped watt (A/W).
    pub responsivity_linear: f64,
    /// Two-photon photocurrent coefficient (A/W²).
    pub responsivity_tpa: f64,
    /// A
    pub dark_current: f64,
}

impl Default for ThermalRing {
    fn default() -> Self {
        Self {
            cold_resonance: 1552.50 * NM,
            q_intrinsic: 113.1e3,
            q_extrinsic: 68.2e3,
            // 0.62 nm over 5.1 mW
            tuning_efficiency: 0.1216 * NM / 1e-3,
            self_heating_efficiency: 0.5 * NM / 1e-3,
            absorption_fraction: 0.5,
            carrier_shift: 0.0,
            tau_thermal: 10e-6,
            responsivity_linear: 1e-3,
            responsivity_tpa: 0.0,
            dark_current: 20e-9,
        }
    }
}

impl ThermalRing {
    pub fn validate(&self) -> Result<()> {
        ResonanceParams::new(self.cold_resonance, self.q_intrinsic, self.q_extrinsic)?;
        if !(self.tuning_efficiency > 0.0) {
            return Err(Error::domain("tuning efficiency must be positive"));
        }
        if !(self.self_heating_efficiency >= 0.0) {
            return Err(Error::domain("self-heating efficiency must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.absorption_fraction) {
            return Err(Error::domain("absorption fraction must lie in [0, 1]"));
        }
        if !(self.tau_thermal > 0.0) {
            return Err(Error::domain("thermal time constant must be positive"));
        }
        if !(self.responsivity_linear >= 0.0 && self.responsivity_tpa >= 0.0 && self.dark_current >= 0.0) {
            return Err(Error::domain("responsivities and dark current must be non-negative"));
        }
        if !self.carrier_shift.is_finite() {
            return Err(Error::domain("carrier shift must be finite"));
        }
        Ok(())
    }

    pub fn rates(&self) -> Result<DecayRates> {
        decay_rates(&ResonanceParams::new(
            self.cold_resonance,
            self.q_intrinsic,
            self.q_extrinsic,
        )?)
    }

    /// Resonance shift per dropped pump watt.
    pub fn self_shift_coefficient(&self) -> f64 {
        self.self_heating_efficiency * self.absorption_fraction + self.carrier_shift
    }

    /// Half width at half maximum of the pump resonance (m).
    pub fn half_linewidth(&self) -> f64 {
        let q = 1.0 / (1.0 / self.q_intrinsic + 1.0 / self.q_extrinsic);
        0.5 * self.cold_resonance / q
    }
}

/// Pump power dropped into a resonance at `detuning` (rad/s).
pub fn steady_dropped_power(rates: &DecayRates, detuning: f64, pump_power: f64) -> Result<f64> {
    if !detuning.is_finite() {
        return Err(Error::domain("detuning must be finite"));
    }
    if !(pump_power >= 0.0) {
        return Err(Error::domain("pump power must be non-negative"));
    }
    Ok(dropped_fraction(rates, detuning) * pump_power)
}

/// Photocurrent `dark + a·P + b·P²` for dropped power `P`.
pub fn photocurrent(ring: &ThermalRing, dropped_power: f64) -> Result<f64> {
    if !(dropped_power >= 0.0) {
        return Err(Error::domain("dropped power must be non-negative"));
    }
    Ok(ring.dark_current
        + ring.responsivity_linear * dropped_power
        + ring.responsivity_tpa * dropped_power * dropped_power)
}

/// Thermal coupling gains: `gains[i][j]` is the heater power seen by ring `i`
/// per watt driven at ring `j`. The diagonal is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct CrosstalkMatrix {
    gains: Vec<Vec<f64>>,
}

impl CrosstalkMatrix {
    pub fn new(gains: Vec<Vec<f64>>, require_symmetric: bool) -> Result<Self> {
        let m = Self { gains };
        m.validate(require_symmetric)?;
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self::uniform(n, 0.0)
    }

    /// Same coupling `k` between every pair of rings.
    pub fn uniform(n: usize, k: f64) -> Self {
        let gains = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { k }).collect())
            .collect();
        Self { gains }
    }

    /// Rings on a line with spacing-independent nearest-neighbour coupling `k`
    /// decaying by `falloff` per extra ring of separation.
    pub fn chain(n: usize, k: f64, falloff: f64) -> Self {
        let gains = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let d = i.abs_diff(j);
                        if d == 0 {
                            1.0
                        } else {
                            k * falloff.powi(d as i32 - 1)
                        }
                    })
                    .collect()
            })
            .collect();
        Self { gains }
    }

    pub fn validate(&self, require_symmetric: bool) -> Result<()> {
        let n = self.gains.len();
        for (i, row) in self.gains.iter().enumerate() {
            if row.len() != n {
                return Err(Error::domain("crosstalk matrix must be square"));
            }
            for (j, &k) in row.iter().enumerate() {
                if i == j {
                    if k != 1.0 {
                        return Err(Error::domain("crosstalk diagonal must be 1"));
                    }
                } else if !(0.0..1.0).contains(&k) {
                    return Err(Error::domain(format!(
                        "crosstalk gain K[{i}][{j}] = {k} outside [0, 1)"
                    )));
                }
                if require_symmetric && (k - self.gains[j][i]).abs() > 1e-12 {
                    return Err(Error::domain("crosstalk matrix is not symmetric"));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn gain(&self, i: usize, j: usize) -> f64 {
        self.gains[i][j]
    }

    /// Multiply every off-diagonal entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let gains = self
            .gains
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, &k)| if i == j { k } else { k * factor })
                    .collect()
            })
            .collect();
        let m = Self { gains };
        m.validate(false)?;
        Ok(m)
    }

    /// Heater power arriving at ring `i` from all other rings.
    fn cross_power(&self, i: usize, heater: &[f64]) -> f64 {
        self.gains[i]
            .iter()
            .zip(heater)
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, (k, p))| k * p)
            .sum()
    }
}

/// Dynamic state of all rings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub time: f64,
    /// Resonance shift from the cold wavelength (m).
    pub offsets: Vec<f64>,
    /// Commanded heater power (W).
    pub heater: Vec<f64>,
    /// Lagged crosstalk heater power seen by each ring (W).
    pub crosstalk_power: Vec<f64>,
    pub pump_wavelength: Vec<f64>,
    /// Bus pump power (W).
    pub pump_power: Vec<f64>,
}

/// Instantaneous optical and electrical readout of one ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingReadout {
    pub resonance: f64,
    /// ω_pump − ω_resonance (rad/s).
    pub detuning: f64,
    pub dropped_power: f64,
    pub absorbed_power: f64,
    pub transmission: f64,
    pub photocurrent: f64,
}

/// A set of rings with thermal crosstalk.
#[derive(Debug, Clone)]
pub struct Plant {
    rings: Vec<ThermalRing>,
    rates: Vec<DecayRates>,
    crosstalk: CrosstalkMatrix,
    /// Time constant of heat arriving from other rings (s); 0 = instantaneous.
    crosstalk_tau: f64,
    state: PlantState,
}

/// Iteration cap when relaxing rings to their quasi-static equilibrium.
const SETTLE_MAX_ITER: usize = 200_000;
const SETTLE_TOL: f64 = 1e-17;

impl Plant {
    pub fn new(rings: Vec<ThermalRing>, crosstalk: CrosstalkMatrix, crosstalk_tau: f64) -> Result<Self> {
        if rings.is_empty() {
            return Err(Error::domain("plant needs at least one ring"));
        }
        if crosstalk.len() != rings.len() {
            return Err(Error::domain(format!(
                "crosstalk matrix is {0}x{0} but there are {1} rings",
                crosstalk.len(),
                rings.len()
            )));
        }
        crosstalk.validate(false)?;
        if !(crosstalk_tau >= 0.0) {
            return Err(Error::domain("crosstalk time constant must be non-negative"));
        }
        let rates = rings
            .iter()
            .map(|r| {
                r.validate()?;
                r.rates()
            })
            .collect::<Result<Vec<_>>>()?;
        let n = rings.len();
        let state = PlantState {
            time: 0.0,
            offsets: vec![0.0; n],
            heater: vec![0.0; n],
            crosstalk_power: vec![0.0; n],
            pump_wavelength: rings.iter().map(|r| r.cold_resonance).collect(),
            pump_power: vec![0.0; n],
        };
        Ok(Self {
            rings,
            rates,
            crosstalk,
            crosstalk_tau,
            state,
        })
    }

    pub fn single(ring: ThermalRing) -> Result<Self> {
        Self::new(vec![ring], CrosstalkMatrix::identity(1), 0.0)
    }

    pub fn len(&self) -> usize {
        self.rings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }

    pub fn ring(&self, i: usize) -> &ThermalRing {
        &self.rings[i]
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn crosstalk(&self) -> &CrosstalkMatrix {
        &self.crosstalk
    }

    pub fn set_heater(&mut self, i: usize, power: f64) -> Result<()> {
        if !(power >= 0.0 && power.is_finite()) {
            return Err(Error::domain(format!("heater power {power} must be non-negative")));
        }
        self.state.heater[i] = power;
        Ok(())
    }

    pub fn set_pump(&mut self, i: usize, wavelength: f64, power: f64) -> Result<()> {
        if !(wavelength > 0.0 && power >= 0.0 && power.is_finite()) {
            return Err(Error::domain("pump wavelength must be positive and power non-negative"));
        }
        self.state.pump_wavelength[i] = wavelength;
        self.state.pump_power[i] = power;
        Ok(())
    }

    pub fn set_pump_wavelength(&mut self, i: usize, wavelength: f64) -> Result<()> {
        let p = self.state.pump_power[i];
        self.set_pump(i, wavelength, p)
    }

    /// Readout of ring `i` at its current thermal offset.
    pub fn readout(&self, i: usize) -> RingReadout {
        self.readout_at(i, self.state.offsets[i])
    }

    fn readout_at(&self, i: usize, offset: f64) -> RingReadout {
        let ring = &self.rings[i];
        let resonance = ring.cold_resonance + offset;
        let detuning = angular_frequency_of(self.state.pump_wavelength[i]) - angular_frequency_of(resonance);
        let fraction = dropped_fraction(&self.rates[i], detuning);
        let dropped = fraction * self.state.pump_power[i];
        RingReadout {
            resonance,
            detuning,
            dropped_power: dropped,
            absorbed_power: ring.absorption_fraction * dropped,
            transmission: all_pass_transmission(&self.rates[i], detuning),
            photocurrent: ring.dark_current
                + ring.responsivity_linear * dropped
                + ring.responsivity_tpa * dropped * dropped,
        }
    }

    /// Offset the ring relaxes toward from `offset`.
    fn thermal_target(&self, i: usize, offset: f64) -> f64 {
        let ring = &self.rings[i];
        let drop = self.readout_at(i, offset).dropped_power;
        ring.tuning_efficiency * (self.state.heater[i] + self.state.crosstalk_power[i])
            + ring.self_shift_coefficient() * drop
    }

    fn crosstalk_drive(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.crosstalk.cross_power(i, &self.state.heater))
            .collect()
    }

    fn update_crosstalk(&mut self, dt: f64) {
        let drive = self.crosstalk_drive();
        let keep = if self.crosstalk_tau > 0.0 {
            (-dt / self.crosstalk_tau).exp()
        } else {
            0.0
        };
        for (x, d) in self.state.crosstalk_power.iter_mut().zip(drive) {
            *x = d + (*x - d) * keep;
        }
    }

    /// One explicit thermal step of all rings (synchronous update).
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::domain("time step must be positive"));
        }
        if let Some(r) = self.rings.iter().find(|r| dt > r.tau_thermal / 10.0) {
            return Err(Error::domain(format!(
                "time step {dt:e} s exceeds τ/10 = {:e} s",
                r.tau_thermal / 10.0
            )));
        }
        let targets: Vec<f64> = (0..self.len())
            .map(|i| self.thermal_target(i, self.state.offsets[i]))
            .collect();
        for (i, target) in targets.into_iter().enumerate() {
            let gain = 1.0 - (-dt / self.rings[i].tau_thermal).exp();
            self.state.offsets[i] += gain * (target - self.state.offsets[i]);
        }
        self.update_crosstalk(dt);
        self.state.time += dt;
        self.check_finite()
    }

    fn check_finite(&self) -> Result<()> {
        if self.state.offsets.iter().all(|o| o.is_finite()) {
            Ok(())
        } else {
            Err(Error::Divergence("thermal offset became non-finite".into()))
        }
    }

    /// Relax every ring to its quasi-static equilibrium with heaters and
    /// crosstalk held fixed, following the branch the ring is currently on.
    pub fn settle(&mut self) -> Result<()> {
        // Rings only couple through the crosstalk state, which is frozen
        // here, so each one is relaxed on its own. Explicit steps of τ/10.
        let gain = 1.0 - (-0.1f64).exp();
        for i in 0..self.len() {
            let mut converged = false;
            for _ in 0..SETTLE_MAX_ITER {
                let delta = gain * (self.thermal_target(i, self.state.offsets[i]) - self.state.offsets[i]);
                self.state.offsets[i] += delta;
                if !self.state.offsets[i].is_finite() {
                    return Err(Error::Divergence("thermal offset became non-finite".into()));
                }
                if delta.abs() < SETTLE_TOL {
                    converged = true;
                    break;
                }
            }
            if !converged {
                log::debug!("plant settle hit the iteration cap on ring {i}");
            }
        }
        Ok(())
    }

    /// Advance by `duration` under the time-scale separation used for the
    /// slow control loop: the crosstalk lag is integrated exactly in short
    /// substeps and the rings are settled after each one.
    pub fn advance(&mut self, duration: f64) -> Result<()> {
        if !(duration >= 0.0) {
            return Err(Error::domain("duration must be non-negative"));
        }
        let substeps = if self.crosstalk_tau > 0.0 {
            (duration / (self.crosstalk_tau / 20.0)).ceil().max(1.0) as usize
        } else {
            1
        };
        let h = duration / substeps as f64;
        for _ in 0..substeps {
            self.update_crosstalk(h);
            self.settle()?;
        }
        self.state.time += duration;
        Ok(())
    }

    /// Bring the crosstalk state to its steady value for the present heaters.
    pub fn equilibrate_crosstalk(&mut self) {
        self.state.crosstalk_power = self.crosstalk_drive();
    }

    /// Fixed-point residual `target(offset) − offset` for ring `i`.
    pub fn equilibrium_residual(&self, i: usize, offset: f64) -> f64 {
        self.thermal_target(i, offset) - offset
    }

    /// All equilibrium offsets of ring `i` under the present drive, found by
    /// bracketing sign changes of the fixed-point residual on a dense grid.
    pub fn equilibrium_offsets(&self, i: usize, samples: usize) -> Vec<f64> {
        let ring = &self.rings[i];
        let base = ring.tuning_efficiency * (self.state.heater[i] + self.state.crosstalk_power[i]);
        let max_self = ring.self_shift_coefficient().abs() * self.state.pump_power[i];
        let lo = base - max_self - 10.0 * ring.half_linewidth();
        let hi = base + max_self + 10.0 * ring.half_linewidth();
        let f = |o: f64| self.equilibrium_residual(i, o);
        let mut roots = Vec::new();
        let step = (hi - lo) / samples as f64;
        let mut x0 = lo;
        let mut f0 = f(x0);
        for k in 1..=samples {
            let x1 = lo + step * k as f64;
            let f1 = f(x1);
            if f0 == 0.0 {
                roots.push(x0);
            } else if f0 * f1 < 0.0 {
                let (mut a, mut b, mut fa) = (x0, x1, f0);
                for _ in 0..100 {
                    let m = 0.5 * (a + b);
                    let fm = f(m);
                    if fa * fm <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                        fa = fm;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            x0 = x1;
            f0 = f1;
        }
        roots
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepDirection {
    /// Short to long wavelength.
    Forward,
    Reverse,
}

/// Samples recorded during a pump-wavelength sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTrace {
    pub wavelength: Vec<f64>,
    pub transmission: Vec<f64>,
    pub photocurrent: Vec<f64>,
    pub offset: Vec<f64>,
}

/// Sweep the pump of ring `i` across `grid` (ascending) in `direction` at
/// `rate` (m/s), integrating the thermal dynamics between samples.
///
/// The trace is reported in sweep order.
pub fn wavelength_sweep(
    plant: &mut Plant,
    i: usize,
    grid: &[f64],
    rate: f64,
    direction: SweepDirection,
) -> Result<SweepTrace> {
    if grid.len() < 2 || !grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::domain("sweep grid must be ascending with at least 2 points"));
    }
    if !(rate > 0.0) {
        return Err(Error::domain("sweep rate must be positive"));
    }
    let tau = plant.rings.iter().map(|r| r.tau_thermal).fold(f64::INFINITY, f64::min);
    let dt = tau / 10.0;
    let ordered: Vec<f64> = match direction {
        SweepDirection::Forward => grid.to_vec(),
        SweepDirection::Reverse => grid.iter().rev().copied().collect(),
    };
    let mut trace = SweepTrace::default();
    plant.set_pump_wavelength(i, ordered[0])?;
    plant.settle()?;
    let mut prev = ordered[0];
    for &lambda in &ordered {
        plant.set_pump_wavelength(i, lambda)?;
        let dwell = (lambda - prev).abs() / rate;
        let steps = (dwell / dt).ceil() as usize;
        for _ in 0..steps {
            plant.step(dwell / steps as f64)?;
        }
        prev = lambda;
        let r = plant.readout(i);
        trace.wavelength.push(lambda);
        trace.transmission.push(r.transmission);
        trace.photocurrent.push(r.photocurrent);
        trace.offset.push(plant.state.offsets[i]);
    }
    Ok(trace)
}

/// Wavelength span over which forward and reverse sweeps on the same grid
/// disagree in transmission by more than `threshold`.
pub fn hysteresis_width(forward: &SweepTrace, reverse: &SweepTrace, threshold: f64) -> Result<f64> {
    let n = forward.wavelength.len();
    if reverse.wavelength.len() != n || n < 2 {
        return Err(Error::domain("sweeps must share a grid"));
    }
    let step = (forward.wavelength[n - 1] - forward.wavelength[0]).abs() / (n - 1) as f64;
    let disagree = (0..n)
        .filter(|&k| (forward.transmission[k] - reverse.transmission[n - 1 - k]).abs() > threshold)
        .count();
    Ok(disagree as f64 * step)
}
