//! Periodic 2-d fields evolved in closed form: each trajectory is a finite
//! Fourier series, so every frame is evaluated exactly rather than stepped.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Trajectory;
use crate::error::{Error, Result};

/// One real Fourier mode `a·cos(2π k·x) + b·sin(2π k·x)` on `[0, 1)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub kx: i32,
    pub ky: i32,
    pub a: f64,
    pub b: f64,
}

impl Mode {
    pub fn wavenumber_sq(&self) -> f64 {
        f64::from(self.kx * self.kx + self.ky * self.ky)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectralField {
    pub modes: Vec<Mode>,
}

impl SpectralField {
    /// Random coefficients for all modes with `|kx|, |ky| ≤ cutoff` on a
    /// half-plane, amplitude decaying as `1 / (1 + |k|²)`.
    pub fn random(cutoff: usize, rng: &mut ChaCha8Rng) -> Self {
        let c = cutoff as i32;
        let mut modes = Vec::new();
        for kx in 0..=c {
            for ky in -c..=c {
                if kx == 0 && ky <= 0 {
                    continue;
                }
                let scale = 1.0 / (1.0 + f64::from(kx * kx + ky * ky));
                let a: f64 = StandardNormal.sample(rng);
                let b: f64 = StandardNormal.sample(rng);
                modes.push(Mode { kx, ky, a: a * scale, b: b * scale });
            }
        }
        SpectralField { modes }
    }

    /// Samples `Σ damping(k)·[a cos θ + b sin θ]`, `θ = 2π(kx(x − sx) + ky(y − sy))`,
    /// on the `H×W` grid with `x = j/W`, `y = i/H`.
    pub fn sample(&self, height: usize, width: usize, shift: (f64, f64), damping: impl Fn(&Mode) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; height * width];
        for mode in &self.modes {
            let amp = damping(mode);
            if amp == 0.0 {
                continue;
            }
            let phase0 = -(f64::from(mode.kx) * shift.0 + f64::from(mode.ky) * shift.1);
            for i in 0..height {
                let y = i as f64 / height as f64;
                for j in 0..width {
                    let x = j as f64 / width as f64;
                    let theta = TAU * (f64::from(mode.kx) * x + f64::from(mode.ky) * y + phase0);
                    out[i * width + j] += amp * (mode.a * theta.cos() + mode.b * theta.sin());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatParams {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kappa: f64,
    pub modes: usize,
    pub frames: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvectionParams {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub velocity: (f64, f64),
    pub modes: usize,
    pub frames: usize,
    pub dt: f64,
    pub seed: u64,
}

fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Assembles `(frames, H, W, D)` from per-channel fields and a per-frame sampler.
fn assemble(
    frames: usize,
    height: usize,
    width: usize,
    fields: &[SpectralField],
    frame_at: impl Fn(&SpectralField, usize) -> Vec<f64>,
) -> Trajectory {
    let channels = fields.len();
    let mut data = vec![0.0; frames * height * width * channels];
    for (c, field) in fields.iter().enumerate() {
        for f in 0..frames {
            let values = frame_at(field, f);
            for (px, v) in values.into_iter().enumerate() {
                data[(f * height * width + px) * channels + c] = v;
            }
        }
    }
    Trajectory { data, frames, height, width, channels }
}

/// Heat equation `∂u/∂t = κ Δu` on the periodic unit square: mode `k`
/// decays as `exp(−κ(2π)²|k|² t)`.
pub fn heat2d_from(field_per_channel: &[SpectralField], p: &HeatParams) -> Result<Trajectory> {
    if p.kappa < 0.0 || !p.kappa.is_finite() {
        return Err(Error::Invalid(format!("diffusivity must be >= 0, got {}", p.kappa)));
    }
    Ok(assemble(p.frames, p.height, p.width, field_per_channel, |field, f| {
        let t = f as f64 * p.dt;
        field.sample(p.height, p.width, (0.0, 0.0), |m| (-p.kappa * TAU * TAU * m.wavenumber_sq() * t).exp())
    }))
}

pub fn generate_heat2d(p: &HeatParams, count: usize) -> Result<Vec<Trajectory>> {
    (0..count)
        .map(|i| {
            let mut rng = trajectory_rng(p.seed, i);
            let fields: Vec<SpectralField> = (0..p.channels).map(|_| SpectralField::random(p.modes, &mut rng)).collect();
            heat2d_from(&fields, p)
        })
        .collect()
}

/// Heat trajectories from several diffusivity regimes, interleaved so that
/// every split sees each regime. Labels are the regime names.
pub fn heat2d_regimes(p: &HeatParams, regimes: &[(String, f64)], per_regime: usize) -> Result<(Vec<Trajectory>, Vec<String>)> {
    let mut by_regime = Vec::with_capacity(regimes.len());
    for (r, (_, kappa)) in regimes.iter().enumerate() {
        let params = HeatParams { kappa: *kappa, seed: p.seed.wrapping_add(r as u64 * 0x9E37_79B9), ..p.clone() };
        by_regime.push(generate_heat2d(&params, per_regime)?);
    }
    let mut trajectories = Vec::with_capacity(regimes.len() * per_regime);
    let mut labels = Vec::with_capacity(regimes.len() * per_regime);
    for i in 0..per_regime {
        for (r, (label, _)) in regimes.iter().enumerate() {
            trajectories.push(by_regime[r][i].clone());
            labels.push(label.clone());
        }
    }
    Ok((trajectories, labels))
}

/// Linear advection `u(x, t) = u₀(x − c t)`, exact phase shift per mode.
pub fn advection2d_from(field_per_channel: &[SpectralField], p: &AdvectionParams) -> Trajectory {
    assemble(p.frames, p.height, p.width, field_per_channel, |field, f| {
        let t = f as f64 * p.dt;
        field.sample(p.height, p.width, (p.velocity.0 * t, p.velocity.1 * t), |_| 1.0)
    })
}

pub fn generate_advection2d(p: &AdvectionParams, count: usize) -> Vec<Trajectory> {
    (0..count)
        .map(|i| {
            let mut rng = trajectory_rng(p.seed, i);
            let fields: Vec<SpectralField> = (0..p.channels).map(|_| SpectralField::random(p.modes, &mut rng)).collect();
            advection2d_from(&fields, p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat(kappa: f64) -> HeatParams {
        HeatParams { height: 16, width: 16, channels: 1, kappa, modes: 3, frames: 6, dt: 0.1, seed: 5 }
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn single_mode_decays_at_analytic_rate() {
        let field = SpectralField { modes: vec![Mode { kx: 1, ky: 0, a: 1.0, b: 0.0 }] };
        let p = HeatParams { kappa: 0.01, ..heat(0.0) };
        let traj = heat2d_from(&[field], &p).unwrap();
        let ratio = (-0.01 * 4.0 * std::f64::consts::PI.powi(2) * p.dt).exp();
        for (a, b) in traj.frame(1).iter().zip(traj.frame(0)) {
            assert!((a - ratio * b).abs() < 1e-14);
        }
        // the initial frame is cos(2πx)
        assert!((traj.frame(0)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_diffusivity_freezes_the_field() {
        let traj = &generate_heat2d(&heat(0.0), 1).unwrap()[0];
        for f in 1..traj.frames {
            assert_eq!(traj.frame(f), traj.frame(0));
        }
    }

    #[test]
    fn negative_diffusivity_is_rejected() {
        assert!(generate_heat2d(&heat(-0.1), 1).is_err());
    }

    #[test]
    fn heat_is_linear_in_the_initial_condition() {
        let m1 = Mode { kx: 1, ky: 2, a: 0.7, b: -0.2 };
        let m2 = Mode { kx: 3, ky: -1, a: -0.4, b: 0.9 };
        let p = heat(0.02);
        let both = heat2d_from(&[SpectralField { modes: vec![m1, m2] }], &p).unwrap();
        let a = heat2d_from(&[SpectralField { modes: vec![m1] }], &p).unwrap();
        let b = heat2d_from(&[SpectralField { modes: vec![m2] }], &p).unwrap();
        let sum: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
        assert!(max_diff(&both.data, &sum) < 1e-13);
    }

    #[test]
    fn heat_energy_is_non_increasing() {
        for traj in generate_heat2d(&heat(0.03), 4).unwrap() {
            let energy: Vec<f64> = (0..traj.frames).map(|f| traj.frame(f).iter().map(|v| v * v).sum()).collect();
            assert!(energy.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{energy:?}");
        }
    }

    #[test]
    fn regimes_are_interleaved() {
        let regimes = [("slow".to_string(), 0.0), ("fast".to_string(), 0.5)];
        let (trajs, labels) = heat2d_regimes(&heat(0.0), &regimes, 3).unwrap();
        assert_eq!(labels, ["slow", "fast", "slow", "fast", "slow", "fast"]);
        assert_eq!(trajs[0].frame(0), trajs[0].frame(5));
        assert_ne!(trajs[1].frame(0), trajs[1].frame(5));
    }

    fn adv(velocity: (f64, f64), frames: usize, dt: f64) -> AdvectionParams {
        AdvectionParams { height: 8, width: 16, channels: 2, velocity, modes: 3, frames, dt, seed: 3 }
    }

    #[test]
    fn zero_velocity_is_constant() {
        let traj = &generate_advection2d(&adv((0.0, 0.0), 4, 0.5), 1)[0];
        for f in 1..4 {
            assert_eq!(traj.frame(f), traj.frame(0));
        }
    }

    #[test]
    fn full_period_wraps_to_initial_frame() {
        // c_x · 4 · dt = 1
        let traj = &generate_advection2d(&adv((2.5, 0.0), 5, 0.1), 1)[0];
        assert!(max_diff(traj.frame(4), traj.frame(0)) < 1e-12);
    }

    #[test]
    fn one_cell_shift_is_a_circular_shift() {
        // c_x · dt = 1/W moves the field one column to the right
        let p = adv((1.0, 0.0), 2, 1.0 / 16.0);
        let traj = &generate_advection2d(&p, 1)[0];
        let (h, w, d) = (8, 16, 2);
        let mut shifted = vec![0.0; h * w * d];
        for i in 0..h {
            for j in 0..w {
                for c in 0..d {
                    shifted[(i * w + (j + 1) % w) * d + c] = traj.frame(0)[(i * w + j) * d + c];
                }
            }
        }
        assert!(max_diff(traj.frame(1), &shifted) < 1e-12);
    }

    #[test]
    fn advection_conserves_the_mean() {
        let traj = &generate_advection2d(&adv((0.37, -1.3), 6, 0.11), 1)[0];
        let mean = |f: &[f64]| f.iter().sum::<f64>() / f.len() as f64;
        let m0 = mean(traj.frame(0));
        for f in 1..traj.frames {
            assert!((mean(traj.frame(f)) - m0).abs() < 1e-10);
        }
    }
}
