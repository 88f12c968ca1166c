//! Resolution of year-less `MM/DD` dates against an encounter window.

use std::sync::LazyLock;

use chrono::{Datelike, Duration, NaiveDate};
use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MonthDay {
    pub month: u32,
    pub day: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DateError {
    #[error("{month:02}/{day:02} is not a calendar date")]
    ImpossibleDate { month: u32, day: u32 },
    #[error("cannot read `{0}` as MM/DD")]
    Unparseable(String),
}

static MD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\d{1,2})\s*/\s*(\d{1,2})(?:\s*/\s*\d{2,4})?\s*$").unwrap());

impl MonthDay {
    pub fn new(month: u32, day: u32) -> Result<Self, DateError> {
        if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
            return Err(DateError::ImpossibleDate { month, day });
        }
        // 2000 is a leap year, so this admits 02/29 and nothing impossible.
        if NaiveDate::from_ymd_opt(2000, month, day).is_none() {
            return Err(DateError::ImpossibleDate { month, day });
        }
        Ok(Self { month, day })
    }

    /// Parses `M/D`, `MM/DD`; a trailing `/YY` or `/YYYY` is accepted and ignored.
    pub fn parse(s: &str) -> Result<Self, DateError> {
        let caps = MD.captures(s).ok_or_else(|| DateError::Unparseable(s.to_string()))?;
        let month = caps[1].parse().map_err(|_| DateError::Unparseable(s.to_string()))?;
        let day = caps[2].parse().map_err(|_| DateError::Unparseable(s.to_string()))?;
        Self::new(month, day)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedDate {
    pub date: NaiveDate,
    /// False when no candidate year fell inside the tolerance window.
    pub in_window: bool,
}

/// Days of slack before the window start when placing a year-less date.
pub const LOOKBACK_DAYS: i64 = 30;

/// Picks the year for `md` so that it lands in
/// `[window_start - 30 days, window_end + 1 day]`.
///
/// Several qualifying years resolve to the one closest to `window_end`; no
/// qualifying year resolves to the candidate nearest the range, flagged.
pub fn resolve_relative_date(md: MonthDay, window_start: NaiveDate, window_end: NaiveDate) -> Result<ResolvedDate, DateError> {
    let lo = window_start - Duration::days(LOOKBACK_DAYS);
    let hi = window_end + Duration::days(1);
    let candidates: Vec<NaiveDate> = (lo.year() - 1..=hi.year() + 1)
        .filter_map(|y| NaiveDate::from_ymd_opt(y, md.month, md.day))
        .collect();
    if candidates.is_empty() {
        return Err(DateError::ImpossibleDate { month: md.month, day: md.day });
    }
    let dist_end = |d: &NaiveDate| (*d - window_end).num_days().abs();
    let inside = candidates.iter().filter(|d| (lo..=hi).contains(*d)).min_by_key(|d| dist_end(d));
    if let Some(&date) = inside {
        return Ok(ResolvedDate { date, in_window: true });
    }
    let gap = |d: &NaiveDate| if *d < lo { (lo - *d).num_days() } else { (*d - hi).num_days() };
    let date = *candidates.iter().min_by_key(|d| (gap(d), dist_end(d))).expect("non-empty");
    Ok(ResolvedDate { date, in_window: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn unique_candidate() {
        let r = resolve_relative_date(MonthDay::new(1, 16).unwrap(), d(2024, 1, 5), d(2024, 1, 25)).unwrap();
        assert_eq!(r, ResolvedDate { date: d(2024, 1, 16), in_window: true });
    }

    #[test]
    fn year_boundary() {
        let r = resolve_relative_date(MonthDay::new(12, 30).unwrap(), d(2023, 12, 20), d(2024, 1, 8)).unwrap();
        assert_eq!(r.date, d(2023, 12, 30));
        let r = resolve_relative_date(MonthDay::new(1, 3).unwrap(), d(2023, 12, 20), d(2024, 1, 8)).unwrap();
        assert_eq!(r.date, d(2024, 1, 3));
    }

    #[test]
    fn impossible_and_leap() {
        assert_eq!(MonthDay::new(2, 30), Err(DateError::ImpossibleDate { month: 2, day: 30 }));
        assert!(MonthDay::parse("13/01").is_err());
        let md = MonthDay::new(2, 29).unwrap();
        let r = resolve_relative_date(md, d(2024, 2, 20), d(2024, 3, 5)).unwrap();
        assert_eq!(r.date, d(2024, 2, 29));
        // 2023 has no Feb 29: nearest real candidate is flagged.
        let r = resolve_relative_date(md, d(2023, 2, 20), d(2023, 3, 5)).unwrap();
        assert!(!r.in_window);
    }

    #[test]
    fn out_of_window_flagged() {
        let r = resolve_relative_date(MonthDay::new(6, 1).unwrap(), d(2024, 1, 5), d(2024, 1, 25)).unwrap();
        assert!(!r.in_window);
        assert_eq!(r.date, d(2023, 6, 1).max(d(2024, 6, 1)).min(d(2024, 6, 1)));
    }

    #[test]
    fn parse_forms() {
        assert_eq!(MonthDay::parse("1/16").unwrap(), MonthDay { month: 1, day: 16 });
        assert_eq!(MonthDay::parse(" 09/14 ").unwrap(), MonthDay { month: 9, day: 14 });
        assert_eq!(MonthDay::parse("09/14/2019").unwrap(), MonthDay { month: 9, day: 14 });
        assert!(MonthDay::parse("present").is_err());
    }
}
