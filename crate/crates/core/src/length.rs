//! Target lengths, their match intervals, and the meta length tokens.
//!
//! Every interval in this crate is half-open on the left: a word count `L`
//! belongs to `(lb, ub]` iff `lb < L <= ub`, and to `(lb, inf)` iff `lb < L`.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One of the nine benchmark target lengths.
///
/// `Over800` is open-ended and has no finite center; it renders as `">800"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TargetLength {
    T10,
    T30,
    T50,
    T80,
    T150,
    T300,
    T500,
    T700,
    Over800,
}

impl TargetLength {
    /// All nine targets in ascending order.
    pub const ALL: [TargetLength; 9] = [
        TargetLength::T10,
        TargetLength::T30,
        TargetLength::T50,
        TargetLength::T80,
        TargetLength::T150,
        TargetLength::T300,
        TargetLength::T500,
        TargetLength::T700,
        TargetLength::Over800,
    ];

    /// Builds a finite target from its word count. `Over800` is not reachable
    /// from an integer; use [`TargetLength::from_str`] with `">800"`.
    pub fn from_words(words: u32) -> Result<Self> {
        Ok(match words {
            10 => TargetLength::T10,
            30 => TargetLength::T30,
            50 => TargetLength::T50,
            80 => TargetLength::T80,
            150 => TargetLength::T150,
            300 => TargetLength::T300,
            500 => TargetLength::T500,
            700 => TargetLength::T700,
            other => return Err(Error::InvalidTarget(other.to_string())),
        })
    }

    /// The finite center in words, `None` for `Over800`.
    pub fn center(self) -> Option<u32> {
        match self {
            TargetLength::T10 => Some(10),
            TargetLength::T30 => Some(30),
            TargetLength::T50 => Some(50),
            TargetLength::T80 => Some(80),
            TargetLength::T150 => Some(150),
            TargetLength::T300 => Some(300),
            TargetLength::T500 => Some(500),
            TargetLength::T700 => Some(700),
            TargetLength::Over800 => None,
        }
    }

    /// Position in [`TargetLength::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TargetLength::T10 => "10",
            TargetLength::T30 => "30",
            TargetLength::T50 => "50",
            TargetLength::T80 => "80",
            TargetLength::T150 => "150",
            TargetLength::T300 => "300",
            TargetLength::T500 => "500",
            TargetLength::T700 => "700",
            TargetLength::Over800 => ">800",
        }
    }

    pub fn level(self) -> Level {
        level_of(self)
    }

    pub fn pm_range(self) -> MatchRange {
        pm_range(self)
    }

    pub fn fm_range(self) -> MatchRange {
        fm_range(self)
    }

    pub fn mlt(self) -> MetaLengthToken {
        mlt_for_target(self)
    }
}

impl fmt::Display for TargetLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetLength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        if trimmed == ">800" {
            return Ok(TargetLength::Over800);
        }
        match trimmed.parse::<u32>() {
            Ok(words) => TargetLength::from_words(words).map_err(|_| Error::InvalidTarget(s.to_string())),
            Err(_) => Err(Error::InvalidTarget(s.to_string())),
        }
    }
}

impl Serialize for TargetLength {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for TargetLength {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct TargetVisitor;

        impl Visitor<'_> for TargetVisitor {
            type Value = TargetLength;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a target length such as \"50\" or \">800\"")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<TargetLength, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<TargetLength, E> {
                u32::try_from(v)
                    .map_err(|_| Error::InvalidTarget(v.to_string()))
                    .and_then(TargetLength::from_words)
                    .map_err(E::custom)
            }
        }

        deserializer.deserialize_any(TargetVisitor)
    }
}

/// A word-count interval `(lower, upper]`, or `(lower, inf)` when `upper` is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatchRange {
    lower: u32,
    upper: Option<u32>,
}

impl MatchRange {
    pub fn new(lower: u32, upper: Option<u32>) -> Self {
        if let Some(upper) = upper {
            assert!(lower < upper, "empty match range ({lower}, {upper}]");
        }
        MatchRange { lower, upper }
    }

    pub fn bounded(lower: u32, upper: u32) -> Self {
        Self::new(lower, Some(upper))
    }

    pub fn unbounded(lower: u32) -> Self {
        Self::new(lower, None)
    }

    pub fn lower(&self) -> u32 {
        self.lower
    }

    pub fn upper(&self) -> Option<u32> {
        self.upper
    }

    pub fn contains(&self, length: usize) -> bool {
        let lower = self.lower as usize;
        match self.upper {
            Some(upper) => lower < length && length <= upper as usize,
            None => lower < length,
        }
    }

    /// True when every length in `self` is also in `other`.
    pub fn is_subset_of(&self, other: &MatchRange) -> bool {
        let upper_ok = match (self.upper, other.upper) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => a <= b,
        };
        self.lower >= other.lower && upper_ok
    }

    pub fn is_disjoint(&self, other: &MatchRange) -> bool {
        let below = |a: &MatchRange, b: &MatchRange| matches!(a.upper, Some(u) if u <= b.lower);
        below(self, other) || below(other, self)
    }
}

impl fmt::Display for MatchRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.upper {
            Some(upper) => write!(f, "({},{}]", self.lower, upper),
            None => write!(f, "({},inf)", self.lower),
        }
    }
}

/// Short (0), medium (1) and long (2) target bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Short,
    Medium,
    Long,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Short, Level::Medium, Level::Long];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Level> {
        Level::ALL.get(n as usize).copied()
    }

    pub fn targets(self) -> impl Iterator<Item = TargetLength> {
        TargetLength::ALL.into_iter().filter(move |t| t.level() == self)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Level:{}", self.number())
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let n = u8::deserialize(deserializer)?;
        Level::from_number(n).ok_or_else(|| de::Error::custom(format!("invalid level {n}")))
    }
}

/// A meta length token such as `[MLT:150]`, identified by its target center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MetaLengthToken(TargetLength);

impl MetaLengthToken {
    /// All nine tokens in ascending center order.
    pub const ALL: [MetaLengthToken; 9] = [
        MetaLengthToken(TargetLength::T10),
        MetaLengthToken(TargetLength::T30),
        MetaLengthToken(TargetLength::T50),
        MetaLengthToken(TargetLength::T80),
        MetaLengthToken(TargetLength::T150),
        MetaLengthToken(TargetLength::T300),
        MetaLengthToken(TargetLength::T500),
        MetaLengthToken(TargetLength::T700),
        MetaLengthToken(TargetLength::Over800),
    ];

    pub fn target(self) -> TargetLength {
        self.0
    }

    pub fn surface(self) -> &'static str {
        match self.0 {
            TargetLength::T10 => "[MLT:10]",
            TargetLength::T30 => "[MLT:30]",
            TargetLength::T50 => "[MLT:50]",
            TargetLength::T80 => "[MLT:80]",
            TargetLength::T150 => "[MLT:150]",
            TargetLength::T300 => "[MLT:300]",
            TargetLength::T500 => "[MLT:500]",
            TargetLength::T700 => "[MLT:700]",
            TargetLength::Over800 => "[MLT:>800]",
        }
    }

    /// Word counts this token stands for: `(c-5, c+5]` or `(800, inf)`.
    pub fn range(self) -> MatchRange {
        match self.0.center() {
            Some(c) => MatchRange::bounded(c - 5, c + 5),
            None => MatchRange::unbounded(800),
        }
    }

    pub fn from_surface(surface: &str) -> Option<MetaLengthToken> {
        MetaLengthToken::ALL.into_iter().find(|t| t.surface() == surface)
    }
}

impl fmt::Display for MetaLengthToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.surface())
    }
}

impl Serialize for MetaLengthToken {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.surface())
    }
}

impl<'de> Deserialize<'de> for MetaLengthToken {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        MetaLengthToken::from_surface(&s)
            .ok_or_else(|| de::Error::custom(format!("unknown meta length token {s:?}")))
    }
}

pub fn pm_range(target: TargetLength) -> MatchRange {
    let (center, tol) = match target {
        TargetLength::T10 => (10, 10),
        TargetLength::T30 => (30, 10),
        TargetLength::T50 => (50, 10),
        TargetLength::T80 => (80, 10),
        TargetLength::T150 => (150, 20),
        TargetLength::T300 => (300, 20),
        TargetLength::T500 => (500, 50),
        TargetLength::T700 => (700, 70),
        TargetLength::Over800 => return MatchRange::unbounded(800),
    };
    MatchRange::bounded(center - tol, center + tol)
}

pub fn fm_range(target: TargetLength) -> MatchRange {
    match target {
        TargetLength::T10 => MatchRange::bounded(0, 20),
        TargetLength::T30 => MatchRange::bounded(20, 40),
        TargetLength::T50 => MatchRange::bounded(40, 60),
        TargetLength::T80 => MatchRange::bounded(60, 100),
        TargetLength::T150 => MatchRange::bounded(100, 200),
        TargetLength::T300 => MatchRange::bounded(200, 400),
        TargetLength::T500 => MatchRange::bounded(400, 600),
        TargetLength::T700 => MatchRange::bounded(600, 800),
        TargetLength::Over800 => MatchRange::unbounded(800),
    }
}

pub fn level_of(target: TargetLength) -> Level {
    match target {
        TargetLength::T10 | TargetLength::T30 | TargetLength::T50 | TargetLength::T80 => Level::Short,
        TargetLength::T150 | TargetLength::T300 | TargetLength::T500 => Level::Medium,
        TargetLength::T700 | TargetLength::Over800 => Level::Long,
    }
}

pub fn mlt_for_target(target: TargetLength) -> MetaLengthToken {
    MetaLengthToken(target)
}

/// The token whose range contains `word_count`, scanning in ascending center
/// order. Word counts in the gaps between ranges (e.g. 20) match nothing.
pub fn mlt_for_length(word_count: usize) -> Option<MetaLengthToken> {
    MetaLengthToken::ALL
        .into_iter()
        .find(|t| t.range().contains(word_count))
}

/// Splits a leading meta length token off `text`.
///
/// Leading whitespace before the token is skipped, and one whitespace
/// character directly after it is consumed. Text that does not start with one
/// of the nine surfaces comes back unchanged.
pub fn parse_leading_mlt(text: &str) -> (Option<MetaLengthToken>, &str) {
    let trimmed = text.trim_start();
    for token in MetaLengthToken::ALL {
        if let Some(rest) = trimmed.strip_prefix(token.surface()) {
            let mut chars = rest.chars();
            let rest = match chars.next() {
                Some(c) if c.is_whitespace() => chars.as_str(),
                _ => rest,
            };
            return (Some(token), rest);
        }
    }
    (None, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pm_ranges_match_table() {
        let expected = [
            (TargetLength::T10, 0, 20),
            (TargetLength::T30, 20, 40),
            (TargetLength::T50, 40, 60),
            (TargetLength::T80, 70, 90),
            (TargetLength::T150, 130, 170),
            (TargetLength::T300, 280, 320),
            (TargetLength::T500, 450, 550),
            (TargetLength::T700, 630, 770),
        ];
        for (target, lb, ub) in expected {
            assert_eq!(pm_range(target), MatchRange::bounded(lb, ub), "{target}");
        }
        assert_eq!(pm_range(TargetLength::Over800), MatchRange::unbounded(800));
    }

    #[test]
    fn fm_ranges_match_table() {
        assert_eq!(fm_range(TargetLength::T80), MatchRange::bounded(60, 100));
        assert_eq!(fm_range(TargetLength::T150), MatchRange::bounded(100, 200));
        assert_eq!(fm_range(TargetLength::T10), MatchRange::bounded(0, 20));
        assert_eq!(fm_range(TargetLength::Over800), MatchRange::unbounded(800));
    }

    #[test]
    fn pm_is_subset_of_fm() {
        for t in TargetLength::ALL {
            assert!(pm_range(t).is_subset_of(&fm_range(t)), "{t}");
        }
        assert_eq!(pm_range(TargetLength::Over800), fm_range(TargetLength::Over800));
    }

    #[test]
    fn levels() {
        assert_eq!(level_of(TargetLength::T80), Level::Short);
        assert_eq!(level_of(TargetLength::T500), Level::Medium);
        assert_eq!(level_of(TargetLength::Over800), Level::Long);
        let counts: Vec<usize> = Level::ALL.iter().map(|l| l.targets().count()).collect();
        assert_eq!(counts, vec![4, 3, 2]);
    }

    #[test]
    fn only_nine_targets_parse() {
        for t in TargetLength::ALL {
            assert_eq!(t.as_str().parse::<TargetLength>().unwrap(), t);
        }
        for bad in ["42", "0", "800", "> 800", "", "abc", "-10"] {
            assert!(matches!(bad.parse::<TargetLength>(), Err(Error::InvalidTarget(_))), "{bad}");
        }
        assert_eq!(TargetLength::Over800.center(), None);
    }

    #[test]
    fn token_surfaces() {
        assert_eq!(mlt_for_target(TargetLength::T50).surface(), "[MLT:50]");
        assert_eq!(mlt_for_target(TargetLength::Over800).surface(), "[MLT:>800]");
        assert_eq!(mlt_for_target(TargetLength::T700).surface(), "[MLT:700]");
        for t in TargetLength::ALL {
            assert_eq!(mlt_for_target(t).target(), t);
        }
        let mut surfaces: Vec<_> = MetaLengthToken::ALL.iter().map(|t| t.surface()).collect();
        surfaces.dedup();
        assert_eq!(surfaces.len(), 9);
    }

    #[test]
    fn token_ranges_are_disjoint() {
        for (i, a) in MetaLengthToken::ALL.iter().enumerate() {
            for b in &MetaLengthToken::ALL[i + 1..] {
                assert!(a.range().is_disjoint(&b.range()), "{a} vs {b}");
            }
        }
        assert_eq!(MetaLengthToken(TargetLength::T10).range(), MatchRange::bounded(5, 15));
    }

    #[test]
    fn length_to_token() {
        assert_eq!(mlt_for_length(12).map(|t| t.surface()), Some("[MLT:10]"));
        assert_eq!(mlt_for_length(20), None);
        assert_eq!(mlt_for_length(850).map(|t| t.surface()), Some("[MLT:>800]"));
        // boundaries follow (c-5, c+5]
        assert_eq!(mlt_for_length(5), None);
        assert_eq!(mlt_for_length(15).map(|t| t.surface()), Some("[MLT:10]"));
        assert_eq!(mlt_for_length(800), None);
        assert_eq!(mlt_for_length(801).map(|t| t.surface()), Some("[MLT:>800]"));
    }

    #[test]
    fn leading_token() {
        assert_eq!(
            parse_leading_mlt("[MLT:150] The answer is"),
            (Some(MetaLengthToken(TargetLength::T150)), "The answer is")
        );
        assert_eq!(parse_leading_mlt("The answer is"), (None, "The answer is"));
        assert_eq!(parse_leading_mlt("[MLT:999] hi"), (None, "[MLT:999] hi"));
        assert_eq!(
            parse_leading_mlt("  [MLT:>800]\n\nbody"),
            (Some(MetaLengthToken(TargetLength::Over800)), "\nbody")
        );
        assert_eq!(
            parse_leading_mlt("[MLT:10]Hello"),
            (Some(MetaLengthToken(TargetLength::T10)), "Hello")
        );
    }

    #[test]
    fn serde_forms() {
        let json = serde_json::to_string(&TargetLength::Over800).unwrap();
        assert_eq!(json, "\">800\"");
        let t: TargetLength = serde_json::from_str("\"50\"").unwrap();
        assert_eq!(t, TargetLength::T50);
        assert!(serde_json::from_str::<TargetLength>("\"42\"").is_err());
        let tok: MetaLengthToken = serde_json::from_str("\"[MLT:>800]\"").unwrap();
        assert_eq!(tok.target(), TargetLength::Over800);
    }
}
