use std::fmt;

use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EventLog, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Weekly,
    Monthly,
    Custom,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScopeError {
    #[error("scope window must start before it ends")]
    EmptyWindow,
    #[error("custom granularity has no calendar windows")]
    NotCalendar,
}

/// Half-open time window `[window_start, window_end)` a PPI is evaluated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "ScopeRepr")]
pub struct Scope {
    pub granularity: Granularity,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
}

#[derive(Deserialize)]
struct ScopeRepr {
    granularity: Granularity,
    window_start: DateTime<Utc>,
    window_end: DateTime<Utc>,
}

impl TryFrom<ScopeRepr> for Scope {
    type Error = ScopeError;

    fn try_from(r: ScopeRepr) -> Result<Self, Self::Error> {
        Scope::new(r.granularity, r.window_start, r.window_end)
    }
}

fn midnight(date: NaiveDate) -> DateTime<Utc> {
    date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc()
}

fn month_start(year: i32, month: u32) -> DateTime<Utc> {
    midnight(NaiveDate::from_ymd_opt(year, month, 1).expect("valid month"))
}

fn next_month(year: i32, month: u32) -> (i32, u32) {
    if month == 12 {
        (year + 1, 1)
    } else {
        (year, month + 1)
    }
}

impl Scope {
    pub fn new(
        granularity: Granularity,
        window_start: DateTime<Utc>,
        window_end: DateTime<Utc>,
    ) -> Result<Self, ScopeError> {
        if window_start >= window_end {
            return Err(ScopeError::EmptyWindow);
        }
        Ok(Scope {
            granularity,
            window_start,
            window_end,
        })
    }

    /// Calendar month `month` (1-based) of `year`.
    pub fn monthly(year: i32, month: u32) -> Self {
        let (ny, nm) = next_month(year, month);
        Scope {
            granularity: Granularity::Monthly,
            window_start: month_start(year, month),
            window_end: month_start(ny, nm),
        }
    }

    /// ISO week (Monday 00:00 UTC onward) containing `instant`.
    pub fn weekly_containing(instant: DateTime<Utc>) -> Self {
        let date = instant.date_naive();
        let monday = date - Duration::days(date.weekday().num_days_from_monday() as i64);
        let start = midnight(monday);
        Scope {
            granularity: Granularity::Weekly,
            window_start: start,
            window_end: start + Duration::days(7),
        }
    }

    pub fn monthly_containing(instant: DateTime<Utc>) -> Self {
        Scope::monthly(instant.year(), instant.month())
    }

    /// The calendar window of the given granularity that contains `instant`.
    pub fn containing(granularity: Granularity, instant: DateTime<Utc>) -> Result<Self, ScopeError> {
        match granularity {
            Granularity::Weekly => Ok(Scope::weekly_containing(instant)),
            Granularity::Monthly => Ok(Scope::monthly_containing(instant)),
            Granularity::Custom => Err(ScopeError::NotCalendar),
        }
    }

    pub fn contains(&self, instant: DateTime<Utc>) -> bool {
        self.window_start <= instant && instant < self.window_end
    }

    /// Traces are assigned to the window holding their first event.
    pub fn includes(&self, trace: &Trace) -> bool {
        self.contains(trace.first_timestamp())
    }

    fn successor(&self) -> Scope {
        match self.granularity {
            Granularity::Monthly => Scope::monthly_containing(self.window_end),
            _ => Scope {
                granularity: self.granularity,
                window_start: self.window_end,
                window_end: self.window_end + (self.window_end - self.window_start),
            },
        }
    }

    /// Short label: `2024-01` for months, `2024-W03` for ISO weeks.
    pub fn label(&self) -> String {
        match self.granularity {
            Granularity::Monthly => self.window_start.format("%Y-%m").to_string(),
            Granularity::Weekly => {
                let week = self.window_start.iso_week();
                format!("{}-W{:02}", week.year(), week.week())
            }
            Granularity::Custom => format!(
                "{}/{}",
                self.window_start.to_rfc3339(),
                self.window_end.to_rfc3339()
            ),
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = String;

    /// Accepts the labels produced by [`Scope::label`] for months and ISO weeks.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("`{s}` is neither YYYY-MM nor YYYY-Www");
        let (year, rest) = s.trim().split_once('-').ok_or_else(bad)?;
        let year: i32 = year.parse().map_err(|_| bad())?;
        if let Some(week) = rest.strip_prefix('W') {
            let week: u32 = week.parse().map_err(|_| bad())?;
            let monday = NaiveDate::from_isoywd_opt(year, week, chrono::Weekday::Mon).ok_or_else(bad)?;
            return Ok(Scope::weekly_containing(midnight(monday)));
        }
        let month: u32 = rest.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(Scope::monthly(year, month))
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Traces whose first event falls inside the scope window.
pub fn filter_scope<'a>(log: &'a EventLog, scope: &Scope) -> Vec<&'a Trace> {
    log.traces().filter(|t| scope.includes(t)).collect()
}

/// Contiguous calendar windows from the earliest to the latest first-event
/// timestamp in the log. Empty for an empty log.
pub fn enumerate_windows(log: &EventLog, granularity: Granularity) -> Result<Vec<Scope>, ScopeError> {
    let earliest = log.traces().map(Trace::first_timestamp).min();
    let latest = log.traces().map(Trace::first_timestamp).max();
    let (Some(earliest), Some(latest)) = (earliest, latest) else {
        return match granularity {
            Granularity::Custom => Err(ScopeError::NotCalendar),
            _ => Ok(Vec::new()),
        };
    };
    let mut window = Scope::containing(granularity, earliest)?;
    let mut windows = vec![window];
    while !window.contains(latest) {
        window = window.successor();
        windows.push(window);
    }
    Ok(windows)
}
