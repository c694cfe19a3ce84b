//! Geometry, air-to-ground path loss and SINR formulas.
//!
//! Everything in this module is a pure function of its arguments; no state,
//! no RNG. Distances are metres, powers are dBm or watts as named, path
//! losses are dB, carrier frequency is GHz, bandwidths are Hz.

use crate::error::{Result, SimError};

/// A point in 3D space. Ground nodes sit at `z = 0`, the UAV at `z = h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// A ground-level point (`z = 0`).
    pub fn ground(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }
}

/// Euclidean distance between two 3D points.
pub fn distance_3d(a: Position3D, b: Position3D) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// The UAV's predetermined circular flight path.
///
/// The UAV moves at constant `speed` along a circle of `radius` around
/// `center` at fixed `altitude`; its position is held constant within a
/// slot and advances by `speed * slot_length / radius` radians per slot.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Ground projection of the circle centre.
    pub center: Position3D,
    pub radius: f64,
    pub speed: f64,
    pub altitude: f64,
    pub slot_length: f64,
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        if self.radius <= 0.0 || self.altitude <= 0.0 || self.speed < 0.0 || self.slot_length <= 0.0
        {
            return Err(SimError::Domain(format!(
                "trajectory requires radius > 0, altitude > 0, speed >= 0, slot_length > 0 \
                 (got r={}, h={}, v={}, dt={})",
                self.radius, self.altitude, self.speed, self.slot_length
            )));
        }
        Ok(())
    }

    /// UAV position during slot `t` (slots are 1-based; slot 1 starts at angle 0).
    pub fn position_at(&self, slot: u64) -> Position3D {
        let dtheta = self.speed * self.slot_length / self.radius;
        let theta = dtheta * (slot.saturating_sub(1)) as f64;
        Position3D::new(
            self.center.x + self.radius * theta.cos(),
            self.center.y + self.radius * theta.sin(),
            self.altitude,
        )
    }
}

/// Transmit powers, bandwidths and noise density of the radio links.
#[derive(Debug, Clone)]
pub struct RadioParams {
    /// Transmit power of the serving macro base station, dBm.
    pub mbs_power_dbm: f64,
    /// Transmit power of the UAV, dBm.
    pub uav_power_dbm: f64,
    /// Transmit power of each interfering neighbour MBS, dBm.
    pub neighbor_power_dbm: Vec<f64>,
    /// Backhaul link bandwidth, Hz.
    pub backhaul_bandwidth_hz: f64,
    /// Radio access link bandwidth, Hz.
    pub access_bandwidth_hz: f64,
    /// Thermal noise density, dBm/Hz.
    pub noise_density_dbm_hz: f64,
    /// Carrier frequency, GHz.
    pub carrier_ghz: f64,
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let finite = self.mbs_power_dbm.is_finite()
            && self.uav_power_dbm.is_finite()
            && self.neighbor_power_dbm.iter().all(|p| p.is_finite())
            && self.noise_density_dbm_hz.is_finite();
        if !finite {
            return Err(SimError::Domain("radio powers must be finite".into()));
        }
        if self.backhaul_bandwidth_hz <= 0.0
            || self.access_bandwidth_hz <= 0.0
            || self.carrier_ghz <= 0.0
        {
            return Err(SimError::Domain(
                "bandwidths and carrier frequency must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Thermal noise power over the backhaul bandwidth, watts.
    pub fn backhaul_noise_w(&self) -> f64 {
        noise_power_w(self.noise_density_dbm_hz, self.backhaul_bandwidth_hz)
    }

    /// Thermal noise power over the access bandwidth, watts.
    pub fn access_noise_w(&self) -> f64 {
        noise_power_w(self.noise_density_dbm_hz, self.access_bandwidth_hz)
    }
}

/// Noise power in watts for a given density (dBm/Hz) and bandwidth (Hz).
pub fn noise_power_w(density_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watts(density_dbm_hz + 10.0 * bandwidth_hz.log10())
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Breakpoint distance of the LoS probability model, metres.
pub fn los_breakpoint(h: f64) -> f64 {
    (294.05 * h.log10() - 432.94).max(18.0)
}

/// Decay constant of the LoS probability model, metres.
pub fn los_decay(h: f64) -> f64 {
    233.98 * h.log10() - 0.95
}

/// Probability that the link from a ground node to the UAV at altitude `h`
/// is line-of-sight, given the 3D distance `d3`.
///
/// Within the breakpoint horizontal distance the link is always LoS; beyond
/// it the probability decays as `d_o/r + exp(-r/p_1) * (1 - d_o/r)`. (An
/// alternative reading places the second factor inside the exponent, but
/// that form exceeds 1 just past the breakpoint, so the multiplicative form
/// is used and the result is clamped to [0, 1].)
pub fn los_probability(d3: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) || !d3.is_finite() {
        return Err(SimError::Domain(format!(
            "los_probability requires h > 0 and finite d3 (got d3={d3}, h={h})"
        )));
    }
    if d3 < h {
        return Err(SimError::Domain(format!(
            "los_probability requires d3 >= h (got d3={d3}, h={h})"
        )));
    }
    let r = (d3 * d3 - h * h).max(0.0).sqrt();
    let d_o = los_breakpoint(h);
    if r <= d_o {
        return Ok(1.0);
    }
    let p1 = los_decay(h);
    let frac = d_o / r;
    let p = frac + (-r / p1).exp() * (1.0 - frac);
    Ok(p.clamp(0.0, 1.0))
}

fn check_loss_inputs(d3: f64, h: f64, f_ghz: f64) -> Result<()> {
    if d3 > 0.0 && h > 0.0 && f_ghz > 0.0 {
        Ok(())
    } else {
        Err(SimError::Domain(format!(
            "path loss requires positive d3, h, f (got d3={d3}, h={h}, f={f_ghz})"
        )))
    }
}

/// Line-of-sight path loss in dB at 3D distance `d3`, UAV altitude `h`,
/// carrier `f_ghz`.
pub fn path_loss_los(d3: f64, h: f64, f_ghz: f64) -> Result<f64> {
    check_loss_inputs(d3, h, f_ghz)?;
    Ok(22.25 * d3.log10() - 0.5 * h.log10() * d3.log10() + 20.0 * f_ghz.log10() + 30.9)
}

/// Non-line-of-sight path loss in dB.
pub fn path_loss_nlos(d3: f64, h: f64, f_ghz: f64) -> Result<f64> {
    check_loss_inputs(d3, h, f_ghz)?;
    Ok(43.2 * d3.log10() - 7.6 * h.log10() * d3.log10() + 20.0 * f_ghz.log10() + 32.4)
}

/// LoS-probability-weighted average path loss in dB.
///
/// `P_LoS * g_LoS + (1 - P_LoS) * max(g_LoS, g_NLoS)`; the max keeps the
/// NLoS branch from falling below the LoS loss in degenerate regimes.
pub fn avg_path_loss(d3: f64, h: f64, f_ghz: f64) -> Result<f64> {
    let g_los = path_loss_los(d3, h, f_ghz)?;
    let g_nlos = path_loss_nlos(d3, h, f_ghz)?;
    let p_los = los_probability(d3, h)?;
    Ok(p_los * g_los + (1.0 - p_los) * g_los.max(g_nlos))
}

/// SINR of the MBS-to-UAV backhaul link, linear ratio.
///
/// `serving_loss_db` is the average path loss of the serving link;
/// `neighbor_losses_db[i]` is the loss from neighbour MBS `i`, paired with
/// `params.neighbor_power_dbm[i]`. An empty neighbour list reduces this to a
/// pure SNR.
pub fn backhaul_sinr(
    serving_loss_db: f64,
    neighbor_losses_db: &[f64],
    params: &RadioParams,
) -> Result<f64> {
    if neighbor_losses_db.len() != params.neighbor_power_dbm.len() {
        return Err(SimError::Contract(format!(
            "neighbor loss/power length mismatch: {} vs {}",
            neighbor_losses_db.len(),
            params.neighbor_power_dbm.len()
        )));
    }
    let signal = dbm_to_watts(params.mbs_power_dbm) * db_to_linear(-serving_loss_db);
    let mut denom = params.backhaul_noise_w();
    for (loss, power) in neighbor_losses_db.iter().zip(&params.neighbor_power_dbm) {
        denom += dbm_to_watts(*power) * db_to_linear(-loss);
    }
    Ok(signal / denom)
}

/// Valid range of the NOMA near-user power allocation coefficient.
fn check_power_coefficient(h_g: f64) -> Result<()> {
    if h_g > 0.0 && h_g <= 0.5 {
        Ok(())
    } else {
        Err(SimError::Domain(format!(
            "NOMA power coefficient must lie in (0, 0.5], got {h_g}"
        )))
    }
}

/// Received SINRs `(gamma_NU, gamma_FU)` of a NOMA pair.
///
/// The near user decodes after SIC, so it sees only noise; the far user sees
/// the near user's superposed signal as interference.
pub fn noma_sinr(
    p_g_w: f64,
    h_g: f64,
    loss_nu_db: f64,
    loss_fu_db: f64,
    noise_w: f64,
) -> Result<(f64, f64)> {
    check_power_coefficient(h_g)?;
    let gain_nu = db_to_linear(-loss_nu_db);
    let gain_fu = db_to_linear(-loss_fu_db);
    let gamma_nu = p_g_w * h_g * gain_nu / noise_w;
    let i_nf = p_g_w * h_g * gain_fu;
    let gamma_fu = p_g_w * (1.0 - h_g) * gain_fu / (i_nf + noise_w);
    Ok((gamma_nu, gamma_fu))
}

/// SNR of a user served alone in its group (full group power, no intra-group
/// interference).
pub fn direct_snr(p_w: f64, loss_db: f64, noise_w: f64) -> f64 {
    p_w * db_to_linear(-loss_db) / noise_w
}

/// Whether successive interference cancellation succeeds for a NOMA pair:
/// the near user's received SINR for the far user's signal must be at least
/// the far user's own SINR.
pub fn sic_feasible(
    p_g_w: f64,
    h_g: f64,
    loss_nu_db: f64,
    loss_fu_db: f64,
    noise_w: f64,
) -> bool {
    let gain_nu = db_to_linear(-loss_nu_db);
    let gain_fu = db_to_linear(-loss_fu_db);
    let at_nu = p_g_w * (1.0 - h_g) * gain_nu / (p_g_w * h_g * gain_nu + noise_w);
    let at_fu = p_g_w * (1.0 - h_g) * gain_fu / (p_g_w * h_g * gain_fu + noise_w);
    at_nu >= at_fu
}
