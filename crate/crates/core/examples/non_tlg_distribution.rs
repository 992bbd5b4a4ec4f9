//! Ask bare questions with no length target and report which length
//! tokens the model chose on its own.
//!
//! cargo run --example non_tlg_distribution

use tlgkit::backend::ApiStyle;
use tlgkit::length::TargetLength;
use tlgkit::mock::{MockBackend, MockBehavior, MockProfile};
use tlgkit::orchestrator::{run_non_tlg, score_records};
use tlgkit::report::{mlt_distribution, render_distribution, TableFormat};
use tlgkit::template;

#[tokio::main]
async fn main() -> tlgkit::Result<()> {
    let questions: Vec<String> = (0..50).map(|i| format!("Summarise chapter {i}.")).collect();
    let template = template::builtin("yi")?;
    let profile = MockProfile::new(MockBehavior::SelfMlt { fixed_mlt: TargetLength::T300.mlt() });
    let backend = MockBackend::new(profile, ApiStyle::Chat);

    let records = run_non_tlg(&questions, &backend, &template).await?;
    let dist = mlt_distribution(&records)?;
    print!("{}", render_distribution(&dist, TableFormat::Text));

    // each record is scored against the token it produced
    let scores = score_records(&records)?;
    println!("\nFM against self-chosen targets: {:.2}", scores.report.all_level.fm);
    Ok(())
}
