//! Synthetic gait-signal generator: six-axis IMU-like streams at 1000 Hz
//! with exact stance/swing labels, parameterized by speed and foot-strike
//! style.
//!
//! The waveforms are design constants tuned so the segmentation task is
//! well-posed (impact transients at stance onset, strong gyro excursions in
//! swing), not a claim of physiological fidelity. All randomness flows from
//! the caller's seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::datapipe::{Activity, ImuRecording, PhaseEventList, Strike, ACCEL_RANGE_G, GYRO_RANGE_DPS};
use crate::error::{Error, Result};

pub const SOURCE_RATE_HZ: f64 = 1000.0;
pub const DEFAULT_NOISE_ACCEL_G: f64 = 0.05;
pub const DEFAULT_NOISE_GYRO_DPS: f64 = 10.0;
pub const SPEEDS_KMH: [f64; 7] = [5.0, 7.0, 9.0, 11.0, 13.0, 17.0, 19.0];

/// Timing constants per condition: full cycle duration and the fraction of
/// it spent in stance. Faster locomotion shortens both.
pub fn profile_timing(speed_kmh: f64, activity: Activity) -> Result<(f64, f64)> {
    let entry = match (speed_kmh as i64, activity) {
        (5, Activity::Walking) => (1.05, 0.62),
        (7, Activity::Walking) => (0.95, 0.58),
        (9, Activity::Running) => (0.78, 0.42),
        (11, Activity::Running) => (0.74, 0.39),
        (13, Activity::Running) => (0.70, 0.37),
        (17, Activity::Running) => (0.64, 0.34),
        (19, Activity::Running) => (0.62, 0.33),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "no timing profile for {} km/h {}",
                speed_kmh,
                activity.as_str()
            )))
        }
    };
    Ok(entry)
}

/// Activity implied by a speed from the supported set.
pub fn activity_for_speed(speed_kmh: f64) -> Result<Activity> {
    if !SPEEDS_KMH.contains(&speed_kmh) {
        return Err(Error::InvalidArgument(format!(
            "unsupported speed {} km/h",
            speed_kmh
        )));
    }
    Ok(if speed_kmh <= 7.0 {
        Activity::Walking
    } else {
        Activity::Running
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaitProfile {
    pub subject_id: String,
    pub speed_kmh: f64,
    pub activity: Activity,
    pub strike: Strike,
    pub cycle_s: f64,
    pub stance_fraction: f64,
    pub noise_accel_g: f64,
    pub noise_gyro_dps: f64,
    /// Per-subject amplitude idiosyncrasy (1.0 = nominal).
    pub amp_scale: f64,
    /// Per-subject timing idiosyncrasy (1.0 = nominal).
    pub time_scale: f64,
}

impl GaitProfile {
    pub fn new(subject_id: &str, speed_kmh: f64, strike: Strike) -> Result<GaitProfile> {
        let activity = activity_for_speed(speed_kmh)?;
        let (cycle_s, stance_fraction) = profile_timing(speed_kmh, activity)?;
        Ok(GaitProfile {
            subject_id: subject_id.to_string(),
            speed_kmh,
            activity,
            strike,
            cycle_s,
            stance_fraction,
            noise_accel_g: DEFAULT_NOISE_ACCEL_G,
            noise_gyro_dps: DEFAULT_NOISE_GYRO_DPS,
            amp_scale: 1.0,
            time_scale: 1.0,
        })
    }
}

/// Phase timeline: alternating stance/swing intervals with +-3% uniform
/// jitter per cycle. The requested duration is a lower bound; the final
/// cycle always completes so phase statistics stay unbiased.
fn build_cycles(profile: &GaitProfile, duration_s: f64, rng: &mut ChaCha12Rng) -> Vec<(f64, f64)> {
    let mut cycles = Vec::new();
    let mut t = 0.0;
    while t < duration_s {
        let jitter_c = rng.gen_range(0.97..1.03);
        let jitter_s = rng.gen_range(0.97..1.03);
        let cycle = profile.cycle_s * profile.time_scale * jitter_c;
        let stance = cycle * profile.stance_fraction * jitter_s;
        cycles.push((stance, cycle - stance));
        t += cycle;
    }
    cycles
}

/// Synthesize one recording plus its exact phase events.
///
/// Stance: accel settles near 1 g with an impact transient at the onset,
/// sharper and larger for rear-foot strikes; gyro near zero. Swing: half-sine
/// gyro excursion whose peak grows with speed, accompanied by a smooth accel
/// unweighting dip. Gaussian noise rides on every channel and the result is
/// clipped to the sensor range.
pub fn synth_recording(
    profile: &GaitProfile,
    duration_s: f64,
    seed: u64,
) -> Result<(ImuRecording, PhaseEventList)> {
    let min = profile.cycle_s * profile.time_scale;
    if duration_s <= min {
        return Err(Error::InvalidArgument(format!(
            "duration {} s must exceed one cycle ({} s)",
            duration_s, min
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let cycles = build_cycles(profile, duration_s, &mut rng);

    let mut events = Vec::with_capacity(2 * cycles.len());
    let mut t = 0.0;
    for &(stance, swing) in &cycles {
        events.push((t, 0u8));
        events.push((t + stance, 1u8));
        t += stance + swing;
    }
    let total_s = t;
    let n = (total_s * SOURCE_RATE_HZ).floor() as usize;

    let speed_factor = profile.speed_kmh / 19.0;
    let amp = profile.amp_scale;
    // impact transient shape per strike style
    let (imp_amp, imp_tau_s, imp_freq_hz) = match profile.strike {
        Strike::RFS => (3.0 * (1.0 + speed_factor) * amp, 0.015, 60.0),
        Strike::FFS => (1.5 * (1.0 + speed_factor) * amp, 0.025, 40.0),
    };
    let gyro_peak = (150.0 + 18.0 * profile.speed_kmh) * amp;
    let accel_noise = Normal::new(0.0, profile.noise_accel_g).map_err(|e| {
        Error::InvalidArgument(format!("bad accel noise std: {}", e))
    })?;
    let gyro_noise = Normal::new(0.0, profile.noise_gyro_dps).map_err(|e| {
        Error::InvalidArgument(format!("bad gyro noise std: {}", e))
    })?;

    let mut samples = Vec::with_capacity(n);
    let mut cycle_idx = 0usize;
    let mut cycle_start = 0.0f64;
    for i in 0..n {
        let ts = i as f64 / SOURCE_RATE_HZ;
        while cycle_idx + 1 < cycles.len()
            && ts >= cycle_start + cycles[cycle_idx].0 + cycles[cycle_idx].1
        {
            cycle_start += cycles[cycle_idx].0 + cycles[cycle_idx].1;
            cycle_idx += 1;
        }
        let (stance, swing) = cycles[cycle_idx];
        let local = ts - cycle_start;
        let (mut ax, mut ay, mut az);
        let (mut gx, mut gy, mut gz);
        if local < stance {
            // ground contact: gravity plus a decaying impact oscillation
            let ring = imp_amp * (-local / imp_tau_s).exp()
                * (2.0 * std::f64::consts::PI * imp_freq_hz * local).cos();
            az = 1.0 + ring;
            ax = 0.3 * ring;
            ay = 0.2 * ring;
            gx = 0.0;
            gy = 0.0;
            gz = 0.0;
        } else {
            // airborne: half-sine rotation, unweighting dip
            let u = (local - stance) / swing;
            let half_sine = (std::f64::consts::PI * u).sin();
            az = 1.0 - 0.5 * amp * half_sine;
            ax = 0.8 * (1.0 + speed_factor) * amp * half_sine;
            ay = 0.25 * amp * (2.0 * std::f64::consts::PI * u).sin();
            gy = gyro_peak * half_sine;
            gx = 0.3 * gyro_peak * half_sine;
            gz = -0.2 * gyro_peak * (2.0 * std::f64::consts::PI * u).sin();
        }
        ax += accel_noise.sample(&mut rng);
        ay += accel_noise.sample(&mut rng);
        az += accel_noise.sample(&mut rng);
        gx += gyro_noise.sample(&mut rng);
        gy += gyro_noise.sample(&mut rng);
        gz += gyro_noise.sample(&mut rng);
        samples.push([
            ax.clamp(-ACCEL_RANGE_G, ACCEL_RANGE_G),
            ay.clamp(-ACCEL_RANGE_G, ACCEL_RANGE_G),
            az.clamp(-ACCEL_RANGE_G, ACCEL_RANGE_G),
            gx.clamp(-GYRO_RANGE_DPS, GYRO_RANGE_DPS),
            gy.clamp(-GYRO_RANGE_DPS, GYRO_RANGE_DPS),
            gz.clamp(-GYRO_RANGE_DPS, GYRO_RANGE_DPS),
        ]);
    }

    let recording = ImuRecording {
        rate_hz: SOURCE_RATE_HZ,
        samples,
        subject_id: profile.subject_id.clone(),
        activity: profile.activity,
        speed_kmh: profile.speed_kmh,
        strike: profile.strike,
    };
    Ok((recording, PhaseEventList::new(events)?))
}

/// Number of subjects the default corpus carries.
pub const DEFAULT_SUBJECTS: usize = 3;

/// Per-condition recording duration that lands the 42-recording corpus near
/// its overall duration target.
pub const DEFAULT_CONDITION_DURATION_S: f64 = 37.5;

/// Full corpus: every subject runs every speed x strike condition once.
/// Subjects get idiosyncratic amplitude/timing multipliers so recordings of
/// the same condition differ across subjects.
pub fn synth_dataset(
    subjects: usize,
    condition_duration_s: f64,
    seed: u64,
) -> Result<Vec<(ImuRecording, PhaseEventList)>> {
    if subjects == 0 {
        return Err(Error::InvalidArgument("need at least one subject".into()));
    }
    let mut master = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(subjects * SPEEDS_KMH.len() * 2);
    for s in 0..subjects {
        let subject_id = format!("S{}", s + 1);
        let amp_scale = master.gen_range(0.9..1.1);
        let time_scale = master.gen_range(0.95..1.05);
        for &speed in &SPEEDS_KMH {
            for strike in [Strike::FFS, Strike::RFS] {
                let mut profile = GaitProfile::new(&subject_id, speed, strike)?;
                profile.amp_scale = amp_scale;
                profile.time_scale = time_scale;
                let rec_seed = master.gen::<u64>();
                out.push(synth_recording(&profile, condition_duration_s, rec_seed)?);
            }
        }
    }
    Ok(out)
}
