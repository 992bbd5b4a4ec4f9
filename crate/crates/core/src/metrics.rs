//! Word counting and Precise/Flexible Match scoring.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::length::{fm_range, level_of, pm_range, Level, TargetLength};

/// Number of maximal runs of non-whitespace characters. Punctuation stays
/// attached to its word, so `"a-b c's d."` counts as three.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn match_precise(target: TargetLength, length: usize) -> bool {
    pm_range(target).contains(length)
}

pub fn match_flexible(target: TargetLength, length: usize) -> bool {
    fm_range(target).contains(length)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoredItem {
    pub target: TargetLength,
    pub length: usize,
    pub pm_hit: bool,
    pub fm_hit: bool,
}

impl ScoredItem {
    pub fn new(target: TargetLength, length: usize) -> Self {
        ScoredItem {
            target,
            length,
            pm_hit: match_precise(target, length),
            fm_hit: match_flexible(target, length),
        }
    }
}

/// Hit counts for one aggregation bucket, with percentages derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreCell {
    pub n: usize,
    pub pm_hits: usize,
    pub fm_hits: usize,
    pub pm: f64,
    pub fm: f64,
}

impl ScoreCell {
    fn from_counts(n: usize, pm_hits: usize, fm_hits: usize) -> Self {
        let pct = |hits: usize| if n == 0 { 0.0 } else { 100.0 * hits as f64 / n as f64 };
        ScoreCell {
            n,
            pm_hits,
            fm_hits,
            pm: pct(pm_hits),
            fm: pct(fm_hits),
        }
    }

    fn add(self, other: ScoreCell) -> Self {
        ScoreCell::from_counts(
            self.n + other.n,
            self.pm_hits + other.pm_hits,
            self.fm_hits + other.fm_hits,
        )
    }
}

/// PM/FM percentages per target, per level, and over all items.
///
/// Level and all-level cells are micro-averages: hits are summed across
/// targets before dividing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_target: BTreeMap<TargetLength, ScoreCell>,
    pub per_level: BTreeMap<Level, ScoreCell>,
    pub all_level: ScoreCell,
}

impl ScoreReport {
    pub fn from_items(items: &[ScoredItem]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyEvaluation);
        }
        let mut counts: BTreeMap<TargetLength, (usize, usize, usize)> = BTreeMap::new();
        for item in items {
            let entry = counts.entry(item.target).or_default();
            entry.0 += 1;
            entry.1 += item.pm_hit as usize;
            entry.2 += item.fm_hit as usize;
        }
        let per_target: BTreeMap<_, _> = counts
            .into_iter()
            .map(|(t, (n, pm, fm))| (t, ScoreCell::from_counts(n, pm, fm)))
            .collect();

        let mut per_level: BTreeMap<Level, ScoreCell> = BTreeMap::new();
        for (target, cell) in &per_target {
            let slot = per_level.entry(level_of(*target)).or_default();
            *slot = slot.add(*cell);
        }
        let all_level = per_level
            .values()
            .fold(ScoreCell::default(), |acc, cell| acc.add(*cell));

        Ok(ScoreReport {
            per_target,
            per_level,
            all_level,
        })
    }

    /// Flat CSV with columns `target,level,n,pm,fm`: one row per target,
    /// then one `all` row per level, then a final `all,all` row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        let row = |csv: &mut csv::Writer<W>, target: &str, level: &str, cell: &ScoreCell| {
            csv.write_record([
                target,
                level,
                &cell.n.to_string(),
                &format!("{:.2}", cell.pm),
                &format!("{:.2}", cell.fm),
            ])
        };
        let write = |csv: &mut csv::Writer<W>| -> csv::Result<()> {
            csv.write_record(["target", "level", "n", "pm", "fm"])?;
            for (target, cell) in &self.per_target {
                row(csv, target.as_str(), &level_of(*target).number().to_string(), cell)?;
            }
            for (level, cell) in &self.per_level {
                row(csv, "all", &level.number().to_string(), cell)?;
            }
            row(csv, "all", "all", &self.all_level)
        };
        write(&mut csv).map_err(|e| Error::Io(e.into()))?;
        csv.flush()?;
        Ok(())
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Scores `(target, word count)` pairs. Fails with `EmptyEvaluation` on empty input.
pub fn score(items: &[(TargetLength, usize)]) -> Result<ScoreReport> {
    let scored: Vec<ScoredItem> = items.iter().map(|&(t, len)| ScoredItem::new(t, len)).collect();
    ScoreReport::from_items(&scored)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn items() -> impl Strategy<Value = Vec<(TargetLength, usize)>> {
        prop::collection::vec(((0usize..9).prop_map(|i| TargetLength::ALL[i]), 0usize..1200), 1..200)
    }

    proptest! {
        #[test]
        fn fm_dominates_pm(items in items()) {
            let r = score(&items).unwrap();
            prop_assert!(r.all_level.fm >= r.all_level.pm);
            for cell in r.per_target.values().chain(r.per_level.values()) {
                prop_assert!(cell.fm >= cell.pm);
                prop_assert!((0.0..=100.0).contains(&cell.pm));
            }
        }

        #[test]
        fn permutation_invariant(items in items(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = items.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(score(&items).unwrap(), score(&shuffled).unwrap());
        }

        #[test]
        fn duplication_doubles_counts(items in items()) {
            let once = score(&items).unwrap();
            let doubled: Vec<_> = items.iter().chain(items.iter()).copied().collect();
            let twice = score(&doubled).unwrap();
            prop_assert_eq!(twice.all_level.n, 2 * once.all_level.n);
            prop_assert_eq!(twice.all_level.pm, once.all_level.pm);
            prop_assert_eq!(twice.all_level.fm, once.all_level.fm);
            for (t, cell) in &once.per_target {
                prop_assert_eq!(twice.per_target[t].n, 2 * cell.n);
                prop_assert_eq!(twice.per_target[t].pm, cell.pm);
            }
        }

        #[test]
        fn levels_partition_items(items in items()) {
            let r = score(&items).unwrap();
            prop_assert_eq!(r.all_level.n, items.len());
            prop_assert_eq!(r.per_level.values().map(|c| c.n).sum::<usize>(), items.len());
        }
    }
}
