//! Line-of-sight uplink signal model and wrapped carrier-phase measurements.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scenario::{Pos, Scenario, SeededRng};

/// Maps any angle into `[0, 2pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2pi for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Free-space amplitude gain `sqrt(Gtx Grx) * lambda / (4 pi d)`.
pub fn path_loss(dist: f64, sc: &Scenario) -> Result<f64> {
    if !(dist > 0.0) {
        return Err(Error::domain(format!("path loss needs a positive distance, got {dist}")));
    }
    Ok((sc.tx_gain() * sc.rx_gain()).sqrt() * sc.wavelength() / (4.0 * PI * dist))
}

/// Noise-free sample at AP `m` for a UE at `u`.
pub fn noiseless_sample(m: usize, u: &Pos, sc: &Scenario) -> Result<Complex64> {
    let d = (sc.ap(m) - u).norm();
    if d == 0.0 {
        return Err(Error::domain(format!("UE coincides with AP {m}")));
    }
    let amp = sc.tx_power().sqrt() * path_loss(d, sc)?;
    let phase = -TAU * d / sc.wavelength() - sc.phase_offset();
    Ok(Complex64::from_polar(amp, phase) * sc.pilot())
}

/// One snapshot: complex samples and their wrapped phases, one per AP.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    samples: Vec<Complex64>,
    phases: Vec<f64>,
    ue_truth: Option<Pos>,
}

impl Observation {
    pub fn from_samples(samples: Vec<Complex64>) -> Self {
        let phases = samples.iter().map(|y| wrap_phase(y.arg())).collect();
        Self { samples, phases, ue_truth: None }
    }

    pub fn with_truth(mut self, u: Pos) -> Self {
        self.ue_truth = Some(u);
        self
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn ue_truth(&self) -> Option<Pos> {
        self.ue_truth
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes `ap_index,re,im,phase` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["ap_index", "re", "im", "phase"])?;
        for (m, (y, r)) in self.samples.iter().zip(&self.phases).enumerate() {
            w.write_record([m.to_string(), y.re.to_string(), y.im.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_clear_of_aps(u: &Pos, sc: &Scenario) -> Result<()> {
    match sc.ap_positions().iter().position(|p| p == u) {
        Some(m) => Err(Error::domain(format!("UE coincides with AP {m}"))),
        None => Ok(()),
    }
}

/// Noise-free observation of a UE at `u`.
pub fn observe_noiseless(u: &Pos, sc: &Scenario) -> Result<Observation> {
    check_clear_of_aps(u, sc)?;
    let samples = (0..sc.num_aps())
        .map(|m| noiseless_sample(m, u, sc))
        .collect::<Result<Vec<_>>>()?;
    Ok(Observation::from_samples(samples).with_truth(*u))
}

/// Noisy observation: each sample gets independent circularly-symmetric
/// complex Gaussian noise of variance `noise_power`.
pub fn observe(u: &Pos, sc: &Scenario, rng: &mut SeededRng) -> Result<Observation> {
    check_clear_of_aps(u, sc)?;
    let sd = (sc.noise_power() / 2.0).sqrt();
    let samples = (0..sc.num_aps())
        .map(|m| {
            let mu = noiseless_sample(m, u, sc)?;
            let w = Complex64::new(sd * rng.standard_normal(), sd * rng.standard_normal());
            Ok(mu + w)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Observation::from_samples(samples).with_truth(*u))
}
