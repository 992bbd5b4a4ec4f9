//! Tag instruction/answer pairs with meta length tokens, then format one
//! triple as a training example.
//!
//! cargo run --example build_dmlt

use tlgkit::dmlt::{build_dmlt, format_training_example, DmltOptions, RawPair};
use tlgkit::template;

fn answer(words: usize) -> String {
    vec!["word"; words].join(" ")
}

fn main() -> tlgkit::Result<()> {
    let pairs = [12, 30, 48, 20, 151, 305, 640, 900, 1]
        .iter()
        .enumerate()
        .map(|(i, &n)| RawPair::new(format!("Question {i}?"), answer(n), "demo"));

    let build = build_dmlt(pairs, DmltOptions { cap: 2, ..DmltOptions::default() })?;
    println!("{}", serde_json::to_string_pretty(&build.summary)?);

    for t in &build.triples {
        println!("{:<12} {}", t.mlt.surface(), t.x);
    }

    let gemma = template::builtin("gemma")?;
    let short = build.triples.iter().find(|t| t.y.split_whitespace().count() < 15).unwrap();
    println!("\n{}", format_training_example(short, &gemma));
    Ok(())
}
