//! Delta-sigma heater DAC: first-order modulator, switched output stage and
//! the ring's thermal lowpass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First-order delta-sigma modulator: an `acc_bits` accumulator whose
/// carry-out is the output pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaSigma {
    acc_bits: u32,
    accumulator: u32,
}

impl DeltaSigma {
    pub fn new(acc_bits: u32) -> Result<Self> {
        if !(1..=24).contains(&acc_bits) {
            return Err(Error::domain(format!("accumulator width {acc_bits} outside 1..=24")));
        }
        Ok(Self {
            acc_bits,
            accumulator: 0,
        })
    }

    pub fn acc_bits(&self) -> u32 {
        self.acc_bits
    }

    pub fn accumulator(&self) -> u32 {
        self.accumulator
    }

    /// Number of accumulator states, `2^acc_bits`.
    pub fn modulus(&self) -> u32 {
        1 << self.acc_bits
    }

    pub fn max_code(&self) -> u32 {
        self.modulus() - 1
    }

    /// Advance one clock with input `code`; returns the output bit.
    pub fn step(&mut self, code: u32) -> Result<bool> {
        if code > self.max_code() {
            return Err(Error::domain(format!(
                "code {code} exceeds {}-bit range",
                self.acc_bits
            )));
        }
        let sum = self.accumulator + code;
        self.accumulator = sum & self.max_code();
        Ok(sum >= self.modulus())
    }
}

/// Functional form of [`DeltaSigma::step`].
pub fn ds_step(state: DeltaSigma, code: u32) -> Result<(DeltaSigma, bool)> {
    let mut s = state;
    let bit = s.step(code)?;
    Ok((s, bit))
}

/// Output bits for a constant code starting from an empty accumulator.
pub fn pulse_pattern(acc_bits: u32, code: u32, cycles: usize) -> Result<Vec<bool>> {
    let mut ds = DeltaSigma::new(acc_bits)?;
    (0..cycles).map(|_| ds.step(code)).collect()
}

/// Length of the repeating output pattern for `code`.
pub fn pattern_period(acc_bits: u32, code: u32) -> usize {
    let m = 1usize << acc_bits;
    if code == 0 {
        return 1;
    }
    m / gcd(m, code as usize)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Low-side switch driving a heater from `v_ddh`, with parasitic
/// capacitance on the switch node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SwitchStage {
    /// Ω
    pub r_heater: f64,
    /// Ω
    pub r_switch: f64,
    /// F
    pub c_parasitic: f64,
    /// V
    pub v_ddh: f64,
    /// Hz
    pub f_clk: f64,
}

impl Default for SwitchStage {
    fn default() -> Self {
        Self {
            r_heater: 331.4,
            r_switch: 10.0,
            c_parasitic: 1.0e-12,
            v_ddh: 1.3,
            f_clk: 500e6,
        }
    }
}

impl SwitchStage {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_heater > 0.0 && self.r_switch > 0.0 && self.v_ddh > 0.0 && self.f_clk > 0.0) {
            return Err(Error::domain(
                "switch stage resistances, supply and clock must be positive",
            ));
        }
        if !(self.c_parasitic >= 0.0) {
            return Err(Error::domain("parasitic capacitance must be non-negative"));
        }
        Ok(())
    }

    /// Switch node charging through the heater when the switch opens.
    pub fn tau_rise(&self) -> f64 {
        self.r_heater * self.c_parasitic
    }

    /// Switch node discharging through switch and heater in parallel.
    pub fn tau_fall(&self) -> f64 {
        self.r_heater * self.r_switch / (self.r_heater + self.r_switch) * self.c_parasitic
    }

    /// Heater power with the switch fully on, `V²/R`.
    pub fn full_scale_power(&self) -> f64 {
        self.v_ddh * self.v_ddh / self.r_heater
    }

    pub fn with_clock(mut self, f_clk: f64) -> Self {
        self.f_clk = f_clk;
        self
    }
}

/// Instantaneous heater power for a pulse sequence, `oversample` samples per
/// clock.
///
/// A 1-bit closes the switch and the switch node decays to ground with
/// `τ_fall`; a 0-bit opens it and the node recharges toward `v_ddh` with
/// `τ_rise`. The heater sees `v_ddh − v_node`. The node starts at `v_ddh`
/// (heater off). The resistive divider with the closed switch is neglected,
/// so the settled on-power is exactly [`SwitchStage::full_scale_power`].
pub fn switched_power_waveform(bits: &[bool], stage: &SwitchStage, oversample: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(bits.len() * oversample);
    let mut node = SwitchNode::new(stage, oversample)?;
    for &b in bits {
        node.clock(b, &mut out);
    }
    Ok(out)
}

/// Switch-node state with precomputed per-sample decay factors.
struct SwitchNode {
    v: f64,
    v_ddh: f64,
    r_heater: f64,
    keep_fall: f64,
    keep_rise: f64,
    oversample: usize,
}

impl SwitchNode {
    fn new(stage: &SwitchStage, oversample: usize) -> Result<Self> {
        stage.validate()?;
        if oversample < 4 {
            return Err(Error::domain("oversample must be at least 4"));
        }
        let dt = 1.0 / (stage.f_clk * oversample as f64);
        let keep = |tau: f64| if tau > 0.0 { (-dt / tau).exp() } else { 0.0 };
        Ok(Self {
            v: stage.v_ddh,
            v_ddh: stage.v_ddh,
            r_heater: stage.r_heater,
            keep_fall: keep(stage.tau_fall()),
            keep_rise: keep(stage.tau_rise()),
            oversample,
        })
    }

    fn clock(&mut self, bit: bool, out: &mut Vec<f64>) {
        for _ in 0..self.oversample {
            if bit {
                self.v *= self.keep_fall;
            } else {
                self.v = self.v_ddh + (self.v - self.v_ddh) * self.keep_rise;
            }
            let across = self.v_ddh - self.v;
            out.push(across * across / self.r_heater);
        }
    }
}

/// First-order lowpass `y ← y + (dt/τ)(x − y)` starting from zero.
pub fn thermal_lowpass(samples: &[f64], tau: f64, dt: f64) -> Result<Vec<f64>> {
    let alpha = lowpass_alpha(tau, dt)?;
    let mut y = 0.0;
    Ok(samples
        .iter()
        .map(|&x| {
            y += alpha * (x - y);
            y
        })
        .collect())
}

fn lowpass_alpha(tau: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::domain("time step must be positive"));
    }
    if !(tau > 0.0) {
        return Err(Error::domain("thermal time constant must be positive"));
    }
    if dt >= tau {
        log::warn!("lowpass step {dt:e} s is not small against τ = {tau:e} s");
    }
    Ok(dt / tau)
}

/// Ripple analysis of the ideal modulator behind the thermal lowpass.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionReport {
    /// `log₂(P_fs / max σ)` in bits, not clamped to the accumulator width.
    pub effective_bits: f64,
    /// RMS ripple (W) indexed by code; zero at both ends of the range.
    pub sigma_ripple: Vec<f64>,
    /// Code with the largest ripple.
    pub worst_code: u32,
}

/// Residual heater-power ripple after the thermal lowpass, ideal switch, one
/// filter update per clock.
///
/// Each code's output is periodic, so the filter's periodic steady state is
/// solved in closed form over one pattern period instead of simulating a
/// settling transient.
pub fn effective_resolution(f_clk: f64, tau_th: f64, acc_bits: u32, p_fullscale: f64) -> Result<ResolutionReport> {
    if !(f_clk > 0.0 && p_fullscale > 0.0) {
        return Err(Error::domain("clock and full-scale power must be positive"));
    }
    let alpha = lowpass_alpha(tau_th, 1.0 / f_clk)?;
    let ds = DeltaSigma::new(acc_bits)?;
    let mut sigma = vec![0.0; ds.modulus() as usize];
    for code in 1..ds.max_code() {
        sigma[code as usize] = periodic_ripple(acc_bits, code, alpha, p_fullscale)?.sigma;
    }
    let (worst_code, worst) = sigma
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (k, &s)| if s > acc.1 { (k, s) } else { acc });
    Ok(ResolutionReport {
        effective_bits: (p_fullscale / worst).log2(),
        sigma_ripple: sigma,
        worst_code: worst_code as u32,
    })
}

/// Mean and RMS deviation of the filtered power for one code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RippleStats {
    pub mean: f64,
    pub sigma: f64,
}

/// Periodic steady-state filtered power statistics for a single code.
pub fn code_ripple(f_clk: f64, tau_th: f64, acc_bits: u32, code: u32, p_fullscale: f64) -> Result<RippleStats> {
    let alpha = lowpass_alpha(tau_th, 1.0 / f_clk)?;
    periodic_ripple(acc_bits, code, alpha, p_fullscale)
}

fn periodic_ripple(acc_bits: u32, code: u32, alpha: f64, p_fs: f64) -> Result<RippleStats> {
    let period = pattern_period(acc_bits, code);
    let bits = pulse_pattern(acc_bits, code, period)?;
    let keep = 1.0 - alpha;
    // y after one period from y0 is keep^M·y0 + b
    let mut b = 0.0;
    for &bit in &bits {
        b = keep * b + alpha * if bit { p_fs } else { 0.0 };
    }
    let mut y = b / (1.0 - keep.powi(period as i32));
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for &bit in &bits {
        y = keep * y + alpha * if bit { p_fs } else { 0.0 };
        sum += y;
        sum_sq += y * y;
    }
    let n = period as f64;
    let mean = sum / n;
    Ok(RippleStats {
        mean,
        sigma: (sum_sq / n - mean * mean).max(0.0).sqrt(),
    })
}

/// Mean heater power per code through the switched stage, measured over one
/// full `2^acc_bits` cycle window after a one-window warm-up.
pub fn transfer_curve(acc_bits: u32, stage: &SwitchStage, oversample: usize) -> Result<Vec<f64>> {
    let ds = DeltaSigma::new(acc_bits)?;
    let window = ds.modulus() as usize;
    let mut curve = Vec::with_capacity(window);
    let mut buf = Vec::with_capacity(window * oversample);
    for code in 0..=ds.max_code() {
        let bits = pulse_pattern(acc_bits, code, 2 * window)?;
        let mut node = SwitchNode::new(stage, oversample)?;
        buf.clear();
        for &b in &bits {
            node.clock(b, &mut buf);
        }
        let tail = &buf[window * oversample..];
        curve.push(tail.iter().sum::<f64>() / tail.len() as f64);
    }
    Ok(curve)
}

/// Integral and differential nonlinearity in LSB against the endpoint line.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearity {
    pub inl: Vec<f64>,
    /// `dnl[k]` describes the step from code `k` to `k + 1`.
    pub dnl: Vec<f64>,
    pub lsb: f64,
}

impl Linearity {
    pub fn max_abs_inl(&self) -> f64 {
        self.inl.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_dnl(&self) -> f64 {
        self.dnl.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_monotonic(&self) -> bool {
        self.min_dnl() > -1.0
    }
}

pub fn inl_dnl(transfer: &[f64]) -> Result<Linearity> {
    let n = transfer.len();
    if n < 4 {
        return Err(Error::domain("INL/DNL needs at least 4 codes"));
    }
    let lsb = (transfer[n - 1] - transfer[0]) / (n - 1) as f64;
    if !(lsb.abs() > 0.0) {
        return Err(Error::domain("transfer endpoints are equal"));
    }
    let inl = transfer
        .iter()
        .enumerate()
        .map(|(k, &y)| (y - (transfer[0] + k as f64 * lsb)) / lsb)
        .collect();
    let dnl = transfer.windows(2).map(|w| (w[1] - w[0]) / lsb - 1.0).collect();
    Ok(Linearity { inl, dnl, lsb })
}
