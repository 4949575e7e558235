//! Injectable time sources. Verification logic never reads the wall clock
//! directly.

use std::sync::{Arc, Mutex};

use chrono::{Duration, Utc};

use crate::codec::time::{self, Timestamp};

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        time::truncate(Utc::now())
    }
}

/// A clock that only moves when told to. Clones share the same instant.
#[derive(Clone, Debug)]
pub struct ManualClock(Arc<Mutex<Timestamp>>);

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        Self(Arc::new(Mutex::new(time::truncate(start))))
    }

    pub fn set(&self, ts: Timestamp) {
        *self.0.lock().expect("clock poisoned") = time::truncate(ts);
    }

    pub fn advance(&self, by: Duration) -> Timestamp {
        let mut guard = self.0.lock().expect("clock poisoned");
        *guard += by;
        *guard
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        *self.0.lock().expect("clock poisoned")
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now(&self) -> Timestamp {
        (**self).now()
    }
}

/// Parses `300`, `300s`, `15m`, `12h`, `7d`, or a `+`-joined sum like `6d+23h`.
pub fn parse_duration(s: &str) -> Option<Duration> {
    let s = s.trim();
    if s.contains('+') {
        return s
            .split('+')
            .map(parse_duration)
            .try_fold(Duration::zero(), |acc, d| d.map(|d| acc + d));
    }
    let (neg, s) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: i64 = num.parse().ok()?;
    let d = match unit {
        "" | "s" => Duration::seconds(n),
        "m" => Duration::minutes(n),
        "h" => Duration::hours(n),
        "d" => Duration::days(n),
        "w" => Duration::weeks(n),
        _ => return None,
    };
    Some(if neg { -d } else { d })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations() {
        assert_eq!(parse_duration("3600"), Some(Duration::hours(1)));
        assert_eq!(parse_duration("7d"), Some(Duration::days(7)));
        assert_eq!(parse_duration("6d+23h"), Some(Duration::hours(167)));
        assert_eq!(parse_duration("-1d"), Some(Duration::days(-1)));
        assert_eq!(parse_duration("5y"), None);
        assert_eq!(parse_duration(""), None);
    }

    #[test]
    fn manual_clock_is_shared() {
        let c = ManualClock::new(time::from_unix(0));
        let c2 = c.clone();
        c.advance(Duration::seconds(10));
        assert_eq!(c2.now(), time::from_unix(10));
    }
}
