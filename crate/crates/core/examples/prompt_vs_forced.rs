//! Start the mock server, run the same evaluation set through the
//! prompt-only protocol and the forced-token protocol over HTTP, and print
//! the level table with deltas.
//!
//! cargo run --example prompt_vs_forced

use tlgkit::backend::{ApiStyle, HttpBackend};
use tlgkit::dataset::build_tlg;
use tlgkit::mock::{serve, MockBehavior, MockProfile};
use tlgkit::orchestrator::{run_forced_mlt, run_prompt_tlg, score_records};
use tlgkit::report::{render_levels, tabulate_levels, TableFormat};
use tlgkit::template;

#[tokio::main]
async fn main() -> tlgkit::Result<()> {
    let questions: Vec<String> = (0..300).map(|i| format!("Tell me about planet {i}.")).collect();
    let entries = build_tlg(&questions, 180, 7)?;
    let template = template::builtin("llama3")?;

    // a model that overshoots word-count instructions by 15 words
    let prompted = serve(MockProfile::new(MockBehavior::Offset { offset: 15 }), ([127, 0, 0, 1], 0)).await?;
    let backend = HttpBackend::new(prompted.backend_config(ApiStyle::Chat))?;
    let baseline = score_records(&run_prompt_tlg(&entries, &backend, &template).await?)?;
    prompted.shutdown().await?;

    // a model that follows the token it is given
    let forced = serve(MockProfile::new(MockBehavior::MltAware), ([127, 0, 0, 1], 0)).await?;
    let backend = HttpBackend::new(forced.backend_config(ApiStyle::Completion))?;
    let treated = score_records(&run_forced_mlt(&entries, &backend, &template).await?)?;
    forced.shutdown().await?;

    let rows = [
        tabulate_levels("offset+15 (prompt)", &baseline.report, None)?,
        tabulate_levels("mlt-aware (forced)", &treated.report, Some(&baseline.report))?,
    ];
    print!("{}", render_levels(&rows, TableFormat::Text));
    Ok(())
}
