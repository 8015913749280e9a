//! Synthetic physiological waveforms.

use cogassess::signal::TimeSeries;

/// Pulse wave with a beat at each time in `beats` (systolic plus diastolic
/// bump, band-limited well below 5 Hz).
pub fn pulse_wave_at(rate: f64, secs: f64, beats: &[f64]) -> TimeSeries {
    let v = (0..(rate * secs) as usize)
        .map(|i| {
            let t = i as f64 / rate;
            beats
                .iter()
                .map(|b| (-((t - b) / 0.09).powi(2)).exp() + 0.35 * (-((t - b - 0.28) / 0.1).powi(2)).exp())
                .sum()
        })
        .collect();
    TimeSeries::new(v, rate, 0.0).unwrap()
}
