//! Seeded generator of records shaped like the absenteeism dataset.
//!
//! Used by tests and demos when the real file is not at hand. Value ranges
//! follow the published data dictionary; the class signal is planted through
//! the absence reason, workload and age so that classifiers have something
//! to learn. Nothing here reproduces the real data.

use crate::ingest::{to_hire_time, HireTimeRecord, RawRecord};
use crate::numerics::RngStream;

/// Reason codes with rough relative frequencies (code 20 never occurs).
const REASONS: [(u8, u32); 28] = [
    (0, 43), (1, 16), (2, 1), (3, 1), (4, 2), (5, 3), (6, 8), (7, 15), (8, 6), (9, 4),
    (10, 25), (11, 26), (12, 8), (13, 55), (14, 19), (15, 2), (16, 3), (17, 1), (18, 21),
    (19, 40), (21, 6), (22, 38), (23, 149), (24, 3), (25, 31), (26, 33), (27, 69), (28, 112),
];

fn pick_reason(rng: &mut RngStream) -> u8 {
    let total: u32 = REASONS.iter().map(|r| r.1).sum();
    let mut t = rng.next_below(total as usize) as u32;
    for &(code, w) in &REASONS {
        if t < w {
            return code;
        }
        t -= w;
    }
    REASONS[REASONS.len() - 1].0
}

fn uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_f64()
}

fn int_in(rng: &mut RngStream, lo: u32, hi: u32) -> u32 {
    lo + rng.next_below((hi - lo + 1) as usize) as u32
}

/// `n` raw records. The first 28 rows cycle through every reason code and the
/// first 4 through every education level, so any `n >= 28` yields the full
/// category vocabulary.
pub fn generate_raw(n: usize, seed: u64) -> Vec<RawRecord> {
    let mut rng = RngStream::new(seed);
    (0..n)
        .map(|i| {
            let reason = if i < REASONS.len() {
                REASONS[i].0
            } else {
                pick_reason(&mut rng)
            };
            let education = if i < 4 {
                i as u8 + 1
            } else {
                match rng.next_below(10) {
                    0..=6 => 1,
                    7 => 2,
                    8 => 3,
                    _ => 4,
                }
            };
            let age = int_in(&mut rng, 27, 58) as f64;
            let workload = (uniform(&mut rng, 205.0, 379.0) * 1000.0).round() / 1000.0;
            let weight = int_in(&mut rng, 56, 108) as f64;
            let height = int_in(&mut rng, 163, 196) as f64;
            let bmi = (weight / (height / 100.0).powi(2)).round();
            let son = int_in(&mut rng, 0, 4);

            // Planted signal: reason 0 means no absence; heavy workload, older
            // age and a few reason codes push towards long absences.
            let hours = if reason == 0 {
                if rng.next_below(20) == 0 { int_in(&mut rng, 1, 8) } else { 0 }
            } else {
                let mut risk = (workload - 205.0) / 174.0 * 0.9 + (age - 27.0) / 31.0 * 0.5;
                if matches!(reason, 13 | 19 | 9 | 12) {
                    risk += 0.9;
                }
                if matches!(reason, 23 | 27 | 28) {
                    risk -= 0.4;
                }
                risk += 0.15 * son as f64;
                risk += uniform(&mut rng, -0.35, 0.35);
                if risk > 1.05 {
                    int_in(&mut rng, 16, 120)
                } else if rng.next_below(40) == 0 {
                    0
                } else {
                    int_in(&mut rng, 1, 15)
                }
            };

            RawRecord {
                id: int_in(&mut rng, 1, 36),
                reason_for_absence: reason,
                month_of_absence: int_in(&mut rng, 1, 12) as u8,
                day_of_week: int_in(&mut rng, 2, 6) as u8,
                seasons: int_in(&mut rng, 1, 4) as u8,
                transportation_expense: int_in(&mut rng, 118, 388) as f64,
                distance_to_work: int_in(&mut rng, 5, 52) as f64,
                service_time: int_in(&mut rng, 1, 29) as f64,
                age,
                work_load_avg_per_day: workload,
                hit_target: int_in(&mut rng, 81, 100) as f64,
                disciplinary_failure: u8::from(rng.next_below(20) == 0),
                education,
                son,
                social_drinker: u8::from(rng.next_below(2) == 0),
                social_smoker: u8::from(rng.next_below(12) == 0),
                pet: int_in(&mut rng, 0, 8).saturating_sub(4),
                weight,
                height,
                body_mass_index: bmi,
                absenteeism_hours: hours,
            }
        })
        .collect()
}

pub fn generate(n: usize, seed: u64) -> Vec<HireTimeRecord> {
    to_hire_time(&generate_raw(n, seed)).expect("generated hours are in range")
}
