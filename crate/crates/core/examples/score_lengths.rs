//! Score a handful of (target, response) pairs and print the flat CSV.
//!
//! cargo run --example score_lengths

use tlgkit::length::TargetLength;
use tlgkit::metrics::{match_flexible, match_precise, word_count, ScoredItem, ScoreReport};

fn main() -> tlgkit::Result<()> {
    let responses = [
        (TargetLength::T10, "Rust is a systems language with a strong ownership model."),
        (TargetLength::T30, "Ownership gives each value one owner. Borrowing lends access without moving it, and the borrow checker makes sure no reference outlives the value it points at in memory."),
        (TargetLength::T150, "Too short for a hundred and fifty."),
    ];

    let mut items = Vec::new();
    for (target, text) in responses {
        let words = word_count(text);
        println!(
            "target {:>4}  words {:>3}  pm {:<5}  fm {}",
            target.as_str(),
            words,
            match_precise(target, words),
            match_flexible(target, words)
        );
        items.push(ScoredItem::new(target, words));
    }

    let report = ScoreReport::from_items(&items)?;
    report.write_csv(std::io::stdout())?;
    Ok(())
}
