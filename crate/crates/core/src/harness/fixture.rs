//! Synthetic log shaped like the public Sepsis Cases log: emergency-room
//! registration followed by triage, lab tests, antibiotics, admission,
//! release and sometimes a return visit. Guideline compliance and return
//! rates trend steadily over the covered months so trend preservation can be
//! checked.

use chrono::{DateTime, Datelike, Duration, Utc};
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::event_log::{AttrValue, Event, EventLog, Scope, Trace};
use crate::mechanisms::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureConfig {
    pub seed: u64,
    pub start_year: i32,
    pub start_month: u32,
    pub months: u32,
    /// Mean traces per month; actual counts vary by ±10%.
    pub traces_per_month: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            seed: 2014,
            start_year: 2014,
            start_month: 1,
            months: 13,
            traces_per_month: 400,
        }
    }
}

fn minutes(m: f64) -> Duration {
    Duration::milliseconds((m * 60_000.0).round() as i64)
}

fn hours(h: f64) -> Duration {
    minutes(h * 60.0)
}

fn days(d: f64) -> Duration {
    hours(d * 24.0)
}

pub fn sepsis_fixture(config: &FixtureConfig) -> EventLog {
    let mut traces = Vec::new();
    let (mut year, mut month) = (config.start_year, config.start_month);
    let span = config.months.saturating_sub(1).max(1) as f64;
    for t in 0..config.months {
        let scope = Scope::monthly(year, month);
        let mut rng = stream_rng(config.seed, t as u64);
        let progress = t as f64 / span;
        let jitter = config.traces_per_month / 10;
        let count = config.traces_per_month - jitter + rng.random_range(0..=2 * jitter);
        for i in 0..count {
            let case = format!("{}{:02}-{i:04}", year, month);
            traces.push(patient(&case, scope, progress, &mut rng));
        }
        if month == 12 {
            (year, month) = (year + 1, 1);
        } else {
            month += 1;
        }
    }
    EventLog::from_traces(traces, vec!["Age".to_string(), "Diagnose".to_string()])
}

fn patient<R: Rng>(case: &str, scope: Scope, progress: f64, rng: &mut R) -> Trace {
    let window = (scope.window_end - scope.window_start).num_minutes() as f64;
    // Keep the registration early enough that every visit starts in its month.
    let start: DateTime<Utc> = scope.window_start + minutes(rng.random_range(0.0..window - 60.0));
    let mut events = Vec::new();
    let mut push = |activity: &str, at: DateTime<Utc>| events.push(Event::new(case, activity, at));

    push("ER Registration", start);
    push("ER Triage", start + minutes(rng.random_range(3.0..25.0)));
    push("ER Sepsis Triage", start + minutes(rng.random_range(25.0..40.0)));
    push("Leucocytes", start + minutes(rng.random_range(30.0..90.0)));
    push("CRP", start + minutes(rng.random_range(30.0..90.0)));

    if rng.random_bool(0.9) {
        let on_time = rng.random_bool(0.50 + 0.45 * progress);
        let delay = if on_time { rng.random_range(0.2..2.9) } else { rng.random_range(3.2..12.0) };
        push("LacticAcid", start + hours(delay));
    }
    if rng.random_bool(0.85) {
        let on_time = rng.random_bool(0.45 + 0.50 * progress);
        let delay = if on_time { rng.random_range(5.0..58.0) } else { rng.random_range(65.0..300.0) };
        push("IV Antibiotics", start + minutes(delay));
        push("IV Liquid", start + minutes(delay + rng.random_range(1.0..20.0)));
    }

    let admission_wait = 1.0 + Exp::new(1.0 / (30.0 - 16.0 * progress)).expect("positive rate").sample(rng);
    let admission = if rng.random_bool(0.9) { "Admission NC" } else { "Admission IC" };
    push(admission, start + hours(admission_wait));

    let stay = 2.0 + Exp::new(1.0 / (10.0 - 3.0 * progress)).expect("positive rate").sample(rng);
    let release_at = start + hours(admission_wait) + days(stay);
    let release = if rng.random_bool(0.8) { "Release A" } else { "Release B" };
    push(release, release_at);

    if rng.random_bool(0.30 - 0.25 * progress) {
        push("Return ER", release_at + days(rng.random_range(1.0..27.0)));
    } else if rng.random_bool(0.05) {
        push("Return ER", release_at + days(rng.random_range(30.0..90.0)));
    }

    let age = rng.random_range(20..95) as f64;
    let diagnose = ["A", "B", "C", "D"][rng.random_range(0..4)];
    if let Some(first) = events.first_mut() {
        first.set_attribute("Age".into(), AttrValue::Number(age)).expect("not reserved");
        first
            .set_attribute("Diagnose".into(), AttrValue::Text(diagnose.into()))
            .expect("not reserved");
    }
    Trace::new(case, events).expect("events share the case id")
}

/// Number of whole calendar months covered by the log's first events.
pub fn months_covered(log: &EventLog) -> usize {
    let mut months: Vec<(i32, u32)> = log
        .traces()
        .map(|t| (t.first_timestamp().year(), t.first_timestamp().month()))
        .collect();
    months.sort();
    months.dedup();
    months.len()
}
