use std::path::PathBuf;

use tlgkit::dmlt::{format_training_example, split_assistant_content, MltTriple};
use tlgkit::length::TargetLength;
use tlgkit::template::TemplateRegistry;

const FAMILIES: [&str; 7] = ["mistral", "gemma", "llama3", "internlm2", "deepseek", "yi", "qwen"];

fn fixture(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("tests/fixtures/templates/{name}.txt"));
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn renders_match_goldens() {
    let registry = TemplateRegistry::builtin();
    for name in FAMILIES {
        let rendered = registry.get(name).unwrap().render("Hi", "");
        assert_eq!(rendered.as_bytes(), fixture(name), "{name}");
    }
}

#[test]
fn registry_holds_exactly_the_seven_families() {
    let registry = TemplateRegistry::builtin();
    let mut names: Vec<&str> = registry.names().collect();
    names.sort_unstable();
    let mut expected = FAMILIES.to_vec();
    expected.sort_unstable();
    assert_eq!(names, expected);
}

#[test]
fn prefix_is_appended_after_assistant_marker() {
    let registry = TemplateRegistry::builtin();
    for name in FAMILIES {
        let t = registry.get(name).unwrap();
        let with = t.render("Hi", "[MLT:30]");
        let mut expected = fixture(name);
        expected.extend_from_slice(b"[MLT:30]");
        assert_eq!(with.as_bytes(), expected, "{name}");
    }
}

#[test]
fn training_example_round_trips_in_every_family() {
    let triple = MltTriple {
        x: "Name a colour.".into(),
        mlt: TargetLength::T10.mlt(),
        y: "Blue, like the sky on a clear day.".into(),
    };
    for t in TemplateRegistry::builtin().iter() {
        let text = format_training_example(&triple, t);
        let prompt = t.render(&triple.x, "");
        let content = t.strip_eos(text.strip_prefix(&prompt).expect("prompt prefix"));
        let (mlt, y) = split_assistant_content(content).expect("token present");
        assert_eq!((mlt, y), (triple.mlt, triple.y.as_str()), "{}", t.name);
        assert!(text.ends_with(t.primary_eos()));
    }
}
