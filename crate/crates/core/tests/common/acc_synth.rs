//! Synthetic wrist accelerometry: gesture kernels convolved with posture
//! impulse trains.

use cogassess::acc::deconv::convolve;
use cogassess::acc::{AccStream, Posture};
use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

pub const RATE: f64 = 32.0;
pub const WINDOW: usize = 64;
pub const KERNEL: usize = 24;

fn planar(g: usize, t: f64) -> [f64; 2] {
    let w = 2.0 * PI * t;
    match g {
        1 => [w.cos() - 1.0, w.sin()],
        2 => [w.sin(), 0.5 * (2.0 * w).sin()],
        3 => [1.5 * (w.cos() - 1.0), 0.4 * w.sin()],
        4 => [((3.0 * w).sin()).asin() * 0.7, 0.3 * w.sin()],
        5 => [0.4 * w.sin(), 1.2 * (2.0 * w).sin()],
        6 => [t * (2.0 * w).cos(), t * (2.0 * w).sin()],
        7 => [(2.0 * t - 1.0) * (1.0 - (2.0 * t - 1.0).powi(2)) * 2.0, 0.6 * (3.0 * w).sin()],
        _ => [w.cos().powi(3) - 1.0, w.sin().powi(3)],
    }
}

const GESTURE_SCALE: [f64; 8] = [1.0, 2.9, 0.7, 2.2, 1.3, 0.5, 1.45, 0.85];

/// Kernel of gesture `g` (1..=8) per axis, tapered to start and end at rest.
pub fn gesture_kernel(g: usize) -> [Vec<f64>; 3] {
    let gain = GESTURE_SCALE[g - 1];
    let tilt = Rotation3::from_euler_angles(0.3 * g as f64, -0.2 * g as f64, 0.15 * g as f64);
    let pts: Vec<Vector3<f64>> = (0..KERNEL)
        .map(|i| {
            let t = i as f64 / KERNEL as f64;
            let taper = (PI * (i as f64 + 0.5) / KERNEL as f64).sin();
            let [a, b] = planar(g, t);
            tilt * Vector3::new(gain * a * taper, gain * b * taper, 0.0)
        })
        .collect();
    std::array::from_fn(|k| pts.iter().map(|p| p[k]).collect())
}

/// Secondary impulse period (samples), amplitude, alternate-impulse factor,
/// doublet factor and per-axis gains of each posture.
fn signature(p: Posture) -> (usize, f64, f64, f64, [f64; 3]) {
    match p {
        Posture::Walking => (16, 1.0, 1.0, 0.0, [1.0, 1.0, 1.0]),
        Posture::WalkingWithWalker => (26, 1.0, 1.0, 0.75, [1.0, 0.3, 1.0]),
        Posture::WalkingWithStick => (20, 1.0, 0.3, 0.0, [1.0, 1.0, 0.3]),
        Posture::Sitting => (32, 0.6, 1.0, 0.0, [1.0, 0.0, 0.0]),
        Posture::Standing => (32, 0.6, 1.0, 0.0, [0.0, 1.0, 0.0]),
        Posture::Lying => (32, 0.6, 1.0, 0.0, [0.0, 0.0, 1.0]),
    }
}

pub struct AccSynth {
    rng: ChaCha8Rng,
    pub amplitude_jitter: f64,
    pub noise: f64,
    /// Amplitude of the posture impulses relative to the gesture impulse.
    pub secondary: f64,
}

impl AccSynth {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), amplitude_jitter: 0.02, noise: 0.003, secondary: 0.15 }
    }

    /// One unit gesture impulse placed so the whole gesture fits, plus the
    /// posture's secondary impulses.
    pub fn impulses(&mut self, p: Posture) -> [Vec<f64>; 3] {
        let (period, amp, alt, doublet, gains) = signature(p);
        let amp = amp * self.secondary;
        let jitter = |rng: &mut ChaCha8Rng| 1.0 + self.amplitude_jitter * rng.sample::<f64, _>(StandardNormal);
        let mut secondary = vec![0.0; WINDOW];
        let mut i = self.rng.random_range(0..period);
        let mut k = 0;
        while i < WINDOW {
            let a = if k % 2 == 1 { amp * alt } else { amp };
            secondary[i] += a * jitter(&mut self.rng);
            if doublet > 0.0 && i + 3 < WINDOW {
                secondary[i + 3] += a * doublet * jitter(&mut self.rng);
            }
            i += period;
            k += 1;
        }
        let main = self.rng.random_range(0..=WINDOW - KERNEL);
        let main_amp = jitter(&mut self.rng);
        gains.map(|g| {
            let mut s: Vec<f64> = secondary.iter().map(|v| v * g).collect();
            s[main] += main_amp;
            s
        })
    }

    pub fn window(&mut self, gesture: usize, p: Posture) -> AccStream {
        let h = gesture_kernel(gesture);
        let s = self.impulses(p);
        let axes: Vec<Vec<f64>> = (0..3)
            .map(|a| {
                convolve(&h[a], &s[a])
                    .into_iter()
                    .map(|v| v + self.noise * self.rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let samples: Vec<[f64; 3]> = (0..WINDOW).map(|i| [axes[0][i], axes[1][i], axes[2][i]]).collect();
        AccStream::from_samples(&samples, RATE, 0.0).unwrap()
    }

    /// One clean, isolated instance of `gesture` with small noise.
    pub fn isolated(&mut self, gesture: usize) -> AccStream {
        let h = gesture_kernel(gesture);
        let samples: Vec<[f64; 3]> = (0..KERNEL)
            .map(|i| std::array::from_fn(|a| h[a][i] + self.noise * self.rng.sample::<f64, _>(StandardNormal)))
            .collect();
        AccStream::from_samples(&samples, RATE, 0.0).unwrap()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
