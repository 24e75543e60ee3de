//! Wall-clock helpers: epoch microseconds and a small RFC 3339 parser.

use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid timestamp {text:?}: {reason}")]
pub struct TimestampError {
    pub text: String,
    pub reason: &'static str,
}

/// Current wall-clock time as microseconds since the Unix epoch.
pub fn now_micros() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

/// Parses an RFC 3339 UTC timestamp like `2013-05-01T10:00:00Z` or
/// `2013-05-01T10:00:00.123456+02:00` into epoch microseconds.
pub fn parse_rfc3339_micros(text: &str) -> Result<u64, TimestampError> {
    let err = |reason: &'static str| TimestampError {
        text: text.to_string(),
        reason,
    };
    let bytes = text.as_bytes();
    if bytes.len() < 20 {
        return Err(err("too short"));
    }
    let digits = |range: std::ops::Range<usize>| -> Result<i64, TimestampError> {
        text.get(range.clone())
            .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
            .ok_or_else(|| err("expected digits"))?
            .parse::<i64>()
            .map_err(|_| err("expected digits"))
    };
    let sep = |idx: usize, expected: &[u8]| -> Result<(), TimestampError> {
        if expected.contains(&bytes[idx]) {
            Ok(())
        } else {
            Err(err("bad separator"))
        }
    };

    let year = digits(0..4)?;
    sep(4, b"-")?;
    let month = digits(5..7)?;
    sep(7, b"-")?;
    let day = digits(8..10)?;
    sep(10, b"Tt ")?;
    let hour = digits(11..13)?;
    sep(13, b":")?;
    let minute = digits(14..16)?;
    sep(16, b":")?;
    let second = digits(17..19)?;

    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return Err(err("date out of range"));
    }
    if hour > 23 || minute > 59 || second > 60 {
        return Err(err("time out of range"));
    }

    let mut idx = 19;
    let mut micros = 0i64;
    if idx < bytes.len() && bytes[idx] == b'.' {
        idx += 1;
        let start = idx;
        while idx < bytes.len() && bytes[idx].is_ascii_digit() {
            idx += 1;
        }
        if idx == start {
            return Err(err("empty fraction"));
        }
        let frac = &text[start..idx];
        let scale = [100_000, 10_000, 1_000, 100, 10, 1];
        for (i, ch) in frac.bytes().take(6).enumerate() {
            micros += (ch - b'0') as i64 * scale[i];
        }
    }

    let offset_secs: i64 = match bytes.get(idx) {
        Some(b'Z') | Some(b'z') if idx + 1 == bytes.len() => 0,
        Some(b'+') | Some(b'-') if idx + 6 == bytes.len() => {
            let sign = if bytes[idx] == b'+' { 1 } else { -1 };
            let oh = digits(idx + 1..idx + 3)?;
            sep(idx + 3, b":")?;
            let om = digits(idx + 4..idx + 6)?;
            sign * (oh * 3600 + om * 60)
        }
        _ => return Err(err("missing or malformed offset")),
    };

    let days = days_from_civil(year, month, day);
    let secs = days * 86_400 + hour * 3600 + minute * 60 + second - offset_secs;
    if secs < 0 {
        return Err(err("before the epoch"));
    }
    Ok(secs as u64 * 1_000_000 + micros as u64)
}

/// Formats epoch microseconds as RFC 3339 UTC, `2013-05-01T10:00:00Z`,
/// with a fractional part only when nonzero.
pub fn format_rfc3339_micros(micros: u64) -> String {
    let secs = (micros / 1_000_000) as i64;
    let frac = micros % 1_000_000;
    let days = secs.div_euclid(86_400);
    let sod = secs.rem_euclid(86_400);
    let (year, month, day) = civil_from_days(days);
    let (hour, minute, second) = (sod / 3600, (sod / 60) % 60, sod % 60);
    if frac == 0 {
        format!("{year:04}-{month:02}-{day:02}T{hour:02}:{minute:02}:{second:02}Z")
    } else {
        format!("{year:04}-{month:02}-{day:02}T{hour:02}:{minute:02}:{second:02}.{frac:06}Z")
    }
}

fn civil_from_days(days: i64) -> (i64, i64, i64) {
    let z = days + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    (if month <= 2 { y + 1 } else { y }, month, day)
}

/// Days since 1970-01-01 for a proleptic Gregorian date (Howard Hinnant's
/// days_from_civil algorithm).
fn days_from_civil(year: i64, month: i64, day: i64) -> i64 {
    let y = if month <= 2 { year - 1 } else { year };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (month + 9) % 12;
    let doy = (153 * mp + 2) / 5 + day - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_utc_timestamps() {
        assert_eq!(
            parse_rfc3339_micros("1970-01-01T00:00:00Z").unwrap(),
            0
        );
        assert_eq!(
            parse_rfc3339_micros("2013-05-01T10:00:00Z").unwrap(),
            1_367_402_400_000_000
        );
        assert_eq!(
            parse_rfc3339_micros("2013-05-01T10:00:00.250Z").unwrap(),
            1_367_402_400_250_000
        );
    }

    #[test]
    fn parses_offsets() {
        // 10:00:00+02:00 is 08:00:00Z
        assert_eq!(
            parse_rfc3339_micros("2013-05-01T10:00:00+02:00").unwrap(),
            1_367_402_400_000_000 - 2 * 3600 * 1_000_000
        );
        assert_eq!(
            parse_rfc3339_micros("2013-05-01T10:00:00-05:00").unwrap(),
            1_367_402_400_000_000 + 5 * 3600 * 1_000_000
        );
    }

    #[test]
    fn format_parse_round_trip() {
        for micros in [0u64, 1_367_402_400_000_000, 1_367_402_400_250_000, 4_102_444_799_999_999] {
            let text = format_rfc3339_micros(micros);
            assert_eq!(parse_rfc3339_micros(&text).unwrap(), micros, "{text}");
        }
        assert_eq!(format_rfc3339_micros(1_367_402_400_000_000), "2013-05-01T10:00:00Z");
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "",
            "2013-05-01",
            "2013-05-01T10:00:00",
            "2013-13-01T10:00:00Z",
            "2013-05-01T25:00:00Z",
            "2013-05-01T10:00:00Q",
            "not-a-date",
        ] {
            assert!(parse_rfc3339_micros(bad).is_err(), "{bad:?}");
        }
    }
}
