//! Calendar decomposition and sinusoidal time features.
//!
//! Timestamps are decomposed into seven phase components (minute-of-hour,
//! hour-of-day, day-of-week, day-of-month, day-of-year, month-of-year,
//! year-of-decade), each a fraction in `[0, 1)`, then encoded as `(sin, cos)`
//! pairs. Conventions fixed here:
//!
//! - day-of-week origin is Monday = 0 (ISO)
//! - all day/month indices are 0-based phases
//! - year phase cycles over a decade: `(year mod 10) / 10`
//! - month stepping clamps to month end (Jan 31 + 1M = Feb 29/28)
//! - business-daily stepping skips Saturday/Sunday only, no holiday calendar

use crate::error::{Error, Result};
use chrono::{Datelike, Months, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

/// Calendar unit of one grid step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FreqUnit {
    Minutely,
    Hourly,
    Daily,
    BusinessDaily,
    Weekly,
    Monthly,
    Quarterly,
}

impl FreqUnit {
    fn code(self) -> char {
        match self {
            FreqUnit::Minutely => 'T',
            FreqUnit::Hourly => 'H',
            FreqUnit::Daily => 'D',
            FreqUnit::BusinessDaily => 'B',
            FreqUnit::Weekly => 'W',
            FreqUnit::Monthly => 'M',
            FreqUnit::Quarterly => 'Q',
        }
    }
}

/// A sampling frequency: `<multiplier><unit>`, e.g. `1H`, `3M`, `1B`.
///
/// `3M` and `1Q` both denote quarterly sampling and compare equal in
/// stepping and seasonality; each serializes back to its own spelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frequency {
    pub unit: FreqUnit,
    pub multiplier: u32,
}

impl Frequency {
    pub fn new(unit: FreqUnit, multiplier: u32) -> Result<Self> {
        if multiplier == 0 {
            return Err(Error::input("frequency multiplier must be >= 1"));
        }
        Ok(Frequency { unit, multiplier })
    }

    pub const fn minutely() -> Self {
        Frequency {
            unit: FreqUnit::Minutely,
            multiplier: 1,
        }
    }
    pub const fn hourly() -> Self {
        Frequency {
            unit: FreqUnit::Hourly,
            multiplier: 1,
        }
    }
    pub const fn daily() -> Self {
        Frequency {
            unit: FreqUnit::Daily,
            multiplier: 1,
        }
    }
    pub const fn business_daily() -> Self {
        Frequency {
            unit: FreqUnit::BusinessDaily,
            multiplier: 1,
        }
    }
    pub const fn weekly() -> Self {
        Frequency {
            unit: FreqUnit::Weekly,
            multiplier: 1,
        }
    }
    pub const fn monthly() -> Self {
        Frequency {
            unit: FreqUnit::Monthly,
            multiplier: 1,
        }
    }
    pub const fn quarterly() -> Self {
        Frequency {
            unit: FreqUnit::Quarterly,
            multiplier: 1,
        }
    }

    /// True for `3M` and `1Q` style quarterly sampling.
    pub fn is_quarterly(&self) -> bool {
        matches!(
            (self.unit, self.multiplier),
            (FreqUnit::Quarterly, _) | (FreqUnit::Monthly, 3)
        )
    }

    /// Advance a timestamp by exactly one step of this frequency.
    pub fn step(&self, ts: NaiveDateTime) -> NaiveDateTime {
        let m = i64::from(self.multiplier);
        match self.unit {
            FreqUnit::Minutely => ts + chrono::Duration::minutes(m),
            FreqUnit::Hourly => ts + chrono::Duration::hours(m),
            FreqUnit::Daily => ts + chrono::Duration::days(m),
            FreqUnit::Weekly => ts + chrono::Duration::weeks(m),
            FreqUnit::BusinessDaily => {
                let mut t = ts;
                for _ in 0..self.multiplier {
                    t += chrono::Duration::days(1);
                    while matches!(t.weekday(), Weekday::Sat | Weekday::Sun) {
                        t += chrono::Duration::days(1);
                    }
                }
                t
            }
            FreqUnit::Monthly => ts
                .checked_add_months(Months::new(self.multiplier))
                .expect("month step in range"),
            FreqUnit::Quarterly => ts
                .checked_add_months(Months::new(3 * self.multiplier))
                .expect("quarter step in range"),
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.multiplier, self.unit.code())
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = s
            .find(|c: char| c.is_ascii_alphabetic())
            .ok_or_else(|| Error::input(format!("frequency '{s}' has no unit")))?;
        let (num, unit) = s.split_at(split);
        let multiplier: u32 = if num.is_empty() {
            1
        } else {
            num.parse()
                .map_err(|_| Error::input(format!("bad frequency multiplier in '{s}'")))?
        };
        let unit = match unit.to_ascii_uppercase().as_str() {
            "T" | "MIN" => FreqUnit::Minutely,
            "H" => FreqUnit::Hourly,
            "D" => FreqUnit::Daily,
            "B" => FreqUnit::BusinessDaily,
            "W" => FreqUnit::Weekly,
            "M" => FreqUnit::Monthly,
            "Q" => FreqUnit::Quarterly,
            other => return Err(Error::input(format!("unknown frequency unit '{other}'"))),
        };
        Frequency::new(unit, multiplier)
    }
}

impl Serialize for Frequency {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Frequency {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Seven phase components, each in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalendarFeatures {
    pub minute_of_hour: f64,
    pub hour_of_day: f64,
    pub day_of_week: f64,
    pub day_of_month: f64,
    pub day_of_year: f64,
    pub month_of_year: f64,
    pub year_of_decade: f64,
}

impl CalendarFeatures {
    pub fn components(&self) -> [f64; 7] {
        [
            self.minute_of_hour,
            self.hour_of_day,
            self.day_of_week,
            self.day_of_month,
            self.day_of_year,
            self.month_of_year,
            self.year_of_decade,
        ]
    }
}

/// Number of tokens in the sinusoidal encoding: 7 components x (sin, cos).
pub const ENCODED_LEN: usize = 14;

fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            if is_leap_year(year) {
                29
            } else {
                28
            }
        }
        _ => unreachable!("month in 1..=12"),
    }
}

fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_year(year: i32) -> u32 {
    if is_leap_year(year) {
        366
    } else {
        365
    }
}

/// Decompose a timestamp into its seven calendar phases.
pub fn decompose(ts: NaiveDateTime) -> CalendarFeatures {
    let date = ts.date();
    let year = date.year();
    CalendarFeatures {
        minute_of_hour: f64::from(ts.minute()) / 60.0,
        hour_of_day: f64::from(ts.hour()) / 24.0,
        day_of_week: f64::from(date.weekday().num_days_from_monday()) / 7.0,
        day_of_month: f64::from(date.day() - 1) / f64::from(days_in_month(year, date.month())),
        day_of_year: f64::from(date.ordinal() - 1) / f64::from(days_in_year(year)),
        month_of_year: f64::from(date.month() - 1) / 12.0,
        year_of_decade: f64::from(year.rem_euclid(10)) / 10.0,
    }
}

/// Encode phases as `(sin 2*pi*p, cos 2*pi*p)` pairs, component order as in
/// [`CalendarFeatures::components`].
pub fn encode(cf: &CalendarFeatures) -> [f64; ENCODED_LEN] {
    let mut out = [0.0; ENCODED_LEN];
    for (i, p) in cf.components().iter().enumerate() {
        let angle = TAU * p;
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    out
}

/// Encoded features for a whole timestamp grid, row per timestamp.
pub fn encode_grid(grid: &[NaiveDateTime]) -> Vec<[f64; ENCODED_LEN]> {
    grid.iter().map(|ts| encode(&decompose(*ts))).collect()
}

/// Build `n` timestamps starting at `start`, stepping by `freq`.
pub fn make_grid(start: NaiveDateTime, freq: Frequency, n: usize) -> Result<Vec<NaiveDateTime>> {
    if n == 0 {
        return Err(Error::input("grid length must be >= 1"));
    }
    let mut out = Vec::with_capacity(n);
    let mut t = start;
    out.push(t);
    for _ in 1..n {
        t = freq.step(t);
        out.push(t);
    }
    Ok(out)
}

/// Convenience: parse a `YYYY-MM-DD[THH:MM[:SS]]` timestamp, also accepting
/// a space separator (GluonTS-style exports).
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).unwrap());
    }
    Err(Error::input(format!("unparseable timestamp '{s}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn frequency_round_trips() {
        for s in ["1T", "1H", "1D", "1B", "1W", "1M", "3M", "1Q"] {
            let f: Frequency = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("0H".parse::<Frequency>().is_err());
        assert!("5X".parse::<Frequency>().is_err());
        assert!("H".parse::<Frequency>().unwrap() == Frequency::hourly());
    }

    #[test]
    fn quarterly_aliases() {
        let three_m: Frequency = "3M".parse().unwrap();
        let one_q: Frequency = "1Q".parse().unwrap();
        assert!(three_m.is_quarterly() && one_q.is_quarterly());
        let start = ts("2020-01-31");
        assert_eq!(three_m.step(start), one_q.step(start));
    }

    #[test]
    fn hourly_grid_steps() {
        let g = make_grid(ts("2020-01-01T00:00"), Frequency::hourly(), 3).unwrap();
        assert_eq!(
            g,
            vec![
                ts("2020-01-01T00:00"),
                ts("2020-01-01T01:00"),
                ts("2020-01-01T02:00")
            ]
        );
    }

    #[test]
    fn business_daily_skips_weekend() {
        // 2020-01-03 is a Friday; next business day is Monday the 6th.
        let g = make_grid(ts("2020-01-03"), Frequency::business_daily(), 2).unwrap();
        assert_eq!(g, vec![ts("2020-01-03"), ts("2020-01-06")]);
        // Manual calendar walk across a full week.
        let g = make_grid(ts("2020-01-03"), Frequency::business_daily(), 4).unwrap();
        assert_eq!(
            g,
            vec![
                ts("2020-01-03"),
                ts("2020-01-06"),
                ts("2020-01-07"),
                ts("2020-01-08")
            ]
        );
    }

    #[test]
    fn month_step_clamps_to_month_end() {
        let g = make_grid(ts("2020-01-31"), Frequency::monthly(), 2).unwrap();
        assert_eq!(g, vec![ts("2020-01-31"), ts("2020-02-29")]);
        // Non-leap year clamps to the 28th.
        let g = make_grid(ts("2021-01-31"), Frequency::monthly(), 2).unwrap();
        assert_eq!(g, vec![ts("2021-01-31"), ts("2021-02-28")]);
    }

    #[test]
    fn grid_concatenation_is_associative() {
        let freq = Frequency::business_daily();
        let start = ts("2020-03-10");
        let whole = make_grid(start, freq, 13).unwrap();
        let head = make_grid(start, freq, 5).unwrap();
        let tail_start = freq.step(*head.last().unwrap());
        let tail = make_grid(tail_start, freq, 8).unwrap();
        let glued: Vec<_> = head.into_iter().chain(tail).collect();
        assert_eq!(whole, glued);
    }

    #[test]
    fn decompose_known_values() {
        // 2020-01-01 is a Wednesday (Monday = 0 -> 2/7).
        let cf = decompose(ts("2020-01-01T00:00"));
        assert_eq!(cf.minute_of_hour, 0.0);
        assert_eq!(cf.hour_of_day, 0.0);
        assert!((cf.day_of_week - 2.0 / 7.0).abs() < 1e-15);
        assert_eq!(cf.day_of_month, 0.0);
        assert_eq!(cf.day_of_year, 0.0);
        assert_eq!(cf.month_of_year, 0.0);
        assert_eq!(cf.year_of_decade, 0.0);
    }

    #[test]
    fn decompose_phases_in_unit_interval() {
        let mut t = ts("1999-12-31T23:59");
        for _ in 0..2000 {
            let cf = decompose(t);
            for p in cf.components() {
                assert!((0.0..1.0).contains(&p), "phase {p} out of range at {t}");
            }
            t += chrono::Duration::minutes(173);
        }
    }

    #[test]
    fn year_apart_differs_only_in_leap_components() {
        let a = decompose(ts("2020-07-01T09:30"));
        let b = decompose(ts("2021-07-01T09:30"));
        assert_eq!(a.minute_of_hour, b.minute_of_hour);
        assert_eq!(a.hour_of_day, b.hour_of_day);
        assert_eq!(a.month_of_year, b.month_of_year);
        assert_eq!(a.day_of_month, b.day_of_month);
        // 2020 is a leap year so the day-of-year phase differs,
        // and the decade phase steps by 1/10.
        assert_ne!(a.day_of_year, b.day_of_year);
        assert!((b.year_of_decade - a.year_of_decade - 0.1).abs() < 1e-15);
        // Day of week differs too (365 % 7 != 0); just confirm validity.
        assert!(a.day_of_week != b.day_of_week);
    }

    #[test]
    fn encode_zero_phase() {
        let cf = decompose(ts("2020-01-01T00:00"));
        let z = CalendarFeatures {
            day_of_week: 0.0,
            ..cf
        };
        let e = encode(&z);
        for pair in e.chunks(2) {
            assert!(pair[0].abs() < 1e-12);
            assert!((pair[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_half_and_quarter_phase() {
        let cf = CalendarFeatures {
            minute_of_hour: 0.5,
            hour_of_day: 0.25,
            day_of_week: 0.0,
            day_of_month: 0.0,
            day_of_year: 0.0,
            month_of_year: 0.0,
            year_of_decade: 0.0,
        };
        let e = encode(&cf);
        assert!(e[0].abs() < 1e-12 && (e[1] + 1.0).abs() < 1e-12);
        assert!((e[2] - 1.0).abs() < 1e-12 && e[3].abs() < 1e-12);
    }

    #[test]
    fn encoded_pairs_on_unit_circle() {
        let mut t = ts("2017-02-27T13:45");
        for _ in 0..500 {
            let e = encode(&decompose(t));
            for pair in e.chunks(2) {
                let norm = pair[0] * pair[0] + pair[1] * pair[1];
                assert!((norm - 1.0).abs() < 1e-12);
            }
            t += chrono::Duration::hours(37);
        }
    }

    #[test]
    fn encoding_is_periodic_per_component() {
        // One hour apart: minute phase identical.
        let a = encode(&decompose(ts("2020-05-05T10:17")));
        let b = encode(&decompose(ts("2020-05-05T11:17")));
        assert_eq!(a[0], b[0]);
        assert_eq!(a[1], b[1]);
        // One week apart: day-of-week phase identical.
        let a = encode(&decompose(ts("2020-05-05T10:17")));
        let b = encode(&decompose(ts("2020-05-12T10:17")));
        assert_eq!(a[4], b[4]);
        assert_eq!(a[5], b[5]);
    }

    #[test]
    fn timestamp_parsing_variants() {
        assert_eq!(ts("2020-01-02"), ts("2020-01-02T00:00:00"));
        assert_eq!(ts("2020-01-02 03:04:05"), ts("2020-01-02T03:04:05"));
        assert!(parse_timestamp("not a date").is_err());
    }
}
