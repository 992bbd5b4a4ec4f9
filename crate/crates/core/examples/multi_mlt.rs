//! Cross a few questions with all nine targets and print the per-target
//! FM table.
//!
//! cargo run --example multi_mlt

use tlgkit::backend::ApiStyle;
use tlgkit::mock::{MockBackend, MockBehavior, MockProfile};
use tlgkit::orchestrator::run_multi_mlt;
use tlgkit::report::{render_targets, tabulate_targets, TableFormat};
use tlgkit::template;

#[tokio::main]
async fn main() -> tlgkit::Result<()> {
    let questions = ["What is a comet?", "How do bees dance?", "Why is the sea salty?"];
    let template = template::builtin("qwen")?;

    let mut rows = Vec::new();
    for (label, behavior) in [
        ("mlt-aware", MockBehavior::MltAware),
        ("no-mlt", MockBehavior::NoMlt),
    ] {
        let backend = MockBackend::new(MockProfile::new(behavior), ApiStyle::Completion);
        let records = run_multi_mlt(&questions, &backend, &template).await?;
        println!("{label}: {} records", records.len());
        rows.push((label.to_string(), tabulate_targets(&records)));
    }
    print!("\n{}", render_targets(&rows, TableFormat::Markdown));
    Ok(())
}
