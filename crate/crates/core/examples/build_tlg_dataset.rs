//! Sample a seeded evaluation set from a question pool and show the
//! resulting target distribution.
//!
//! cargo run --example build_tlg_dataset

use std::collections::BTreeMap;

use tlgkit::dataset::{augment_instruction, build_tlg};

fn main() -> tlgkit::Result<()> {
    let pool: Vec<String> = (0..500)
        .map(|i| format!("Describe item {i} of the museum catalogue."))
        .collect();

    let entries = build_tlg(&pool, 180, 42)?;

    let mut per_target = BTreeMap::new();
    for e in &entries {
        *per_target.entry(e.target_length).or_insert(0) += 1;
    }
    for (target, count) in &per_target {
        println!("{:>5}  {count}", target.as_str());
    }

    let first = &entries[0];
    println!("\n{}", augment_instruction(&first.instruction, first.target_length));

    // same seed, same set
    assert_eq!(entries, build_tlg(&pool, 180, 42)?);
    Ok(())
}
