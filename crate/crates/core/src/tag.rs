//! Superdense logical time.
//!
//! A [`Tag`] is a `(time, microstep)` pair ordered lexicographically. Time
//! values are elapsed nanoseconds since startup, with two sentinels:
//! [`TimeValue::NEVER`] (below every time) and [`TimeValue::FOREVER`] (above
//! every time). The only tags carrying a sentinel are `(NEVER, 0)` and
//! `(FOREVER, MICROSTEP_MAX)`.
//!
//! Three pure functions make up the tag algebra used by the coordination
//! protocol:
//!
//! * [`Tag::delayed_by`] adds a delay tag, saturating instead of overflowing;
//! * [`Tag::from_delay`] turns a connection's after-delay into a delay tag;
//! * [`Tag::retreat_by`] is the saturating inverse of `delayed_by`: the
//!   latest tag `g` with `g.delayed_by(b) <= a`.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest representable microstep.
pub const MICROSTEP_MAX: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagError {
    #[error("time value {0} is negative and not NEVER")]
    NegativeTime(i64),
    #[error("tag ({time},{microstep}) violates the limit-tag invariant")]
    InvalidLimitTag { time: TimeValue, microstep: u32 },
    #[error("delay tag {0} is a limit tag and cannot be retreated by")]
    SubtrahendOutOfDomain(Tag),
    #[error("cannot parse {0:?} as a tag")]
    Parse(String),
}

/// Elapsed logical time in nanoseconds, or one of the two sentinels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeValue(i64);

impl TimeValue {
    pub const NEVER: TimeValue = TimeValue(i64::MIN);
    pub const FOREVER: TimeValue = TimeValue(i64::MAX);
    pub const ZERO: TimeValue = TimeValue(0);

    pub fn from_ns(ns: i64) -> Result<Self, TagError> {
        if ns < 0 && ns != i64::MIN {
            return Err(TagError::NegativeTime(ns));
        }
        Ok(TimeValue(ns))
    }

    /// Panics on negative input; intended for literals.
    pub const fn ns(ns: i64) -> Self {
        assert!(ns >= 0 || ns == i64::MIN, "negative time value");
        TimeValue(ns)
    }

    pub const fn ms(ms: i64) -> Self {
        Self::ns(ms * 1_000_000)
    }

    pub const fn secs(s: i64) -> Self {
        Self::ns(s * 1_000_000_000)
    }

    pub const fn as_ns(self) -> i64 {
        self.0
    }

    pub const fn is_never(self) -> bool {
        self.0 == i64::MIN
    }

    pub const fn is_forever(self) -> bool {
        self.0 == i64::MAX
    }

    pub const fn is_finite(self) -> bool {
        !self.is_never() && !self.is_forever()
    }
}

impl fmt::Display for TimeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_never() {
            f.write_str("NEVER")
        } else if self.is_forever() {
            f.write_str("FOREVER")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for TimeValue {
    type Err = TagError;

    /// `never`, `forever`, or an integer with an optional `ns`, `us`, `ms`
    /// or `s` suffix. A bare integer is nanoseconds.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("never") {
            return Ok(TimeValue::NEVER);
        }
        if s.eq_ignore_ascii_case("forever") {
            return Ok(TimeValue::FOREVER);
        }
        let bad = || TagError::Parse(s.to_string());
        let (digits, scale) = [("ns", 1), ("us", 1_000), ("ms", 1_000_000), ("s", 1_000_000_000)]
            .iter()
            .find_map(|&(unit, scale)| s.strip_suffix(unit).map(|d| (d.trim_end(), scale)))
            .unwrap_or((s, 1));
        let n: i64 = digits.parse().map_err(|_| bad())?;
        if n < 0 {
            return Err(TagError::NegativeTime(n));
        }
        let ns = n.checked_mul(scale).filter(|&ns| ns < i64::MAX).ok_or_else(bad)?;
        Ok(TimeValue(ns))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TimeRepr {
    Ns(i64),
    Limit(String),
}

impl Serialize for TimeValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.is_finite() {
            serializer.serialize_i64(self.0)
        } else {
            serializer.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for TimeValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match TimeRepr::deserialize(deserializer)? {
            TimeRepr::Ns(ns) => TimeValue::from_ns(ns).map_err(de::Error::custom),
            TimeRepr::Limit(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

/// A superdense logical time instant.
///
/// Field order matters: the derived `Ord` compares `time` first, then
/// `microstep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    time: TimeValue,
    microstep: u32,
}

impl Tag {
    pub const NEVER: Tag = Tag { time: TimeValue::NEVER, microstep: 0 };
    pub const FOREVER: Tag = Tag { time: TimeValue::FOREVER, microstep: MICROSTEP_MAX };
    pub const ZERO: Tag = Tag { time: TimeValue::ZERO, microstep: 0 };

    pub fn new(time: TimeValue, microstep: u32) -> Result<Self, TagError> {
        let ok = (time.is_never() && microstep == 0)
            || (time.is_forever() && microstep == MICROSTEP_MAX)
            || time.is_finite();
        if ok {
            Ok(Tag { time, microstep })
        } else {
            Err(TagError::InvalidLimitTag { time, microstep })
        }
    }

    /// A tag at a finite, non-negative time. Panics otherwise.
    pub fn at(ns: i64, microstep: u32) -> Self {
        assert!((0..i64::MAX).contains(&ns), "finite tag time out of range: {ns}");
        Tag { time: TimeValue(ns), microstep }
    }

    pub const fn time(self) -> TimeValue {
        self.time
    }

    pub const fn microstep(self) -> u32 {
        self.microstep
    }

    pub fn is_never(self) -> bool {
        self == Tag::NEVER
    }

    pub fn is_forever(self) -> bool {
        self == Tag::FOREVER
    }

    /// Tag addition with saturation.
    ///
    /// A zero-time delay adds microsteps (saturating at [`MICROSTEP_MAX`]);
    /// a positive-time delay adds time and takes the delay's microstep,
    /// discarding `self`'s. Time overflow saturates to `FOREVER`, and a
    /// `NEVER` operand yields `NEVER`.
    pub fn delayed_by(self, delay: Tag) -> Tag {
        if self.time.is_never() || delay.time.is_never() {
            return Tag::NEVER;
        }
        if self.time.is_forever() {
            return Tag::FOREVER;
        }
        let (ta, ma) = (self.time.0, self.microstep);
        let (tb, mb) = (delay.time.0, delay.microstep);
        if tb == 0 {
            match ma.checked_add(mb) {
                Some(m) if m < MICROSTEP_MAX => Tag { time: self.time, microstep: m },
                _ => Tag { time: self.time, microstep: MICROSTEP_MAX },
            }
        } else {
            match ta.checked_add(tb) {
                Some(t) if t < i64::MAX => Tag { time: TimeValue(t), microstep: mb },
                _ => Tag::FOREVER,
            }
        }
    }

    /// Converts a connection's after-delay into a delay tag.
    ///
    /// A zero delay still advances one microstep; `NEVER` stands for "no
    /// delay declared" and maps to `(0, 0)`.
    pub fn from_delay(delay: TimeValue) -> Tag {
        if delay.is_never() {
            Tag::ZERO
        } else if delay.is_forever() {
            Tag::FOREVER
        } else if delay.0 == 0 {
            Tag { time: TimeValue::ZERO, microstep: 1 }
        } else {
            Tag { time: delay, microstep: 0 }
        }
    }

    /// The latest tag `g` such that `g.delayed_by(delay) <= self`.
    ///
    /// `delay` must not be a limit tag. Returns `NEVER` when no tag
    /// qualifies.
    pub fn retreat_by(self, delay: Tag) -> Result<Tag, TagError> {
        if delay.is_never() || delay.is_forever() {
            return Err(TagError::SubtrahendOutOfDomain(delay));
        }
        if self.is_never() || self < delay {
            return Ok(Tag::NEVER);
        }
        if self.is_forever() {
            return Ok(Tag::FOREVER);
        }
        // From here self >= delay, so ta >= tb.
        let (ta, ma) = (self.time.0, self.microstep);
        let (tb, mb) = (delay.time.0, delay.microstep);
        let tag = if ma >= mb {
            if tb > 0 {
                Tag { time: TimeValue(ta - tb), microstep: MICROSTEP_MAX }
            } else if ma == MICROSTEP_MAX {
                // Microstep addition saturates, so every microstep at ta lands on ma.
                self
            } else {
                Tag { time: self.time, microstep: ma - mb }
            }
        } else {
            // ma < mb together with self >= delay forces ta > tb.
            Tag { time: TimeValue(ta - tb - 1), microstep: MICROSTEP_MAX }
        };
        Ok(tag)
    }

    /// The next tag in the total order (saturating at `FOREVER`).
    pub fn successor(self) -> Tag {
        if self.is_never() {
            return Tag::ZERO;
        }
        if self.is_forever() {
            return Tag::FOREVER;
        }
        if self.microstep < MICROSTEP_MAX {
            Tag { time: self.time, microstep: self.microstep + 1 }
        } else if self.time.0 + 1 < i64::MAX {
            Tag { time: TimeValue(self.time.0 + 1), microstep: 0 }
        } else {
            Tag::FOREVER
        }
    }

    /// The previous tag in the total order (saturating at `NEVER`).
    pub fn predecessor(self) -> Tag {
        if self.is_never() {
            return Tag::NEVER;
        }
        if self.is_forever() {
            return Tag { time: TimeValue(i64::MAX - 1), microstep: MICROSTEP_MAX };
        }
        if self.microstep > 0 {
            Tag { time: self.time, microstep: self.microstep - 1 }
        } else if self.time.0 > 0 {
            Tag { time: TimeValue(self.time.0 - 1), microstep: MICROSTEP_MAX }
        } else {
            Tag::NEVER
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.time, self.microstep)
    }
}

impl FromStr for Tag {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TagError::Parse(s.to_string());
        let inner = s.trim().strip_prefix('(').and_then(|r| r.strip_suffix(')')).ok_or_else(err)?;
        let (t, m) = inner.split_once(',').ok_or_else(err)?;
        let time: TimeValue = t.parse()?;
        let m = m.trim();
        let microstep: u32 =
            if m.eq_ignore_ascii_case("max") { MICROSTEP_MAX } else { m.parse().map_err(|_| err())? };
        Tag::new(time, microstep)
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("Tag", 2)?;
        st.serialize_field("t", &self.time)?;
        st.serialize_field("m", &self.microstep)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            t: TimeValue,
            m: u32,
        }
        let r = Repr::deserialize(deserializer)?;
        Tag::new(r.t, r.m).map_err(de::Error::custom)
    }
}
