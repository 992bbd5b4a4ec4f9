//! Render one instruction through every built-in chat template, with a
//! forced length token as the assistant prefix.
//!
//! cargo run --example render_templates

use tlgkit::length::TargetLength;
use tlgkit::template::TemplateRegistry;

fn main() {
    let mlt = TargetLength::T150.mlt();
    for template in TemplateRegistry::builtin().iter() {
        println!("== {} (eos {})", template.name, template.primary_eos());
        println!("{}\n", template.render("Explain tides.", mlt.surface()));
    }
}
