//! Per-family chat prompt templates.
//!
//! Templates are data: the seven built-in families live in
//! `data/templates.toml`, and users can load their own file with the same
//! layout through [`TemplateRegistry::from_toml_file`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN_TEMPLATES: &str = include_str!("../data/templates.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTemplate {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_preamble: Option<String>,
    pub pre_user: String,
    /// Everything between the user text and the assistant generation point.
    pub post_user: String,
    pub eos_tokens: Vec<String>,
}

impl ChatTemplate {
    /// `system_preamble + pre_user + instruction + post_user + assistant_prefix`.
    pub fn render(&self, instruction: &str, assistant_prefix: &str) -> String {
        let preamble = self.system_preamble.as_deref().unwrap_or("");
        let mut out = String::with_capacity(
            preamble.len() + self.pre_user.len() + instruction.len() + self.post_user.len() + assistant_prefix.len(),
        );
        out.push_str(preamble);
        out.push_str(&self.pre_user);
        out.push_str(instruction);
        out.push_str(&self.post_user);
        out.push_str(assistant_prefix);
        out
    }

    /// The token appended after training responses.
    pub fn primary_eos(&self) -> &str {
        &self.eos_tokens[0]
    }

    /// Removes trailing EOS markers (any number, in any order) and trailing whitespace.
    pub fn strip_eos<'a>(&self, text: &'a str) -> &'a str {
        let mut rest = text.trim_end();
        loop {
            let stripped = self
                .eos_tokens
                .iter()
                .find_map(|eos| rest.strip_suffix(eos.as_str()));
            match stripped {
                Some(shorter) => rest = shorter.trim_end(),
                None => return rest,
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidConfig("template with empty name".into()));
        }
        if self.eos_tokens.is_empty() || self.eos_tokens.iter().any(|t| t.is_empty()) {
            return Err(Error::InvalidConfig(format!(
                "template {:?} needs at least one non-empty eos token",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    template: Vec<ChatTemplate>,
}

#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: Vec<ChatTemplate>,
}

impl TemplateRegistry {
    /// Mistral, Gemma, Llama3, InternLM2, DeepSeek-LLM, Yi-1.5 and Qwen1.5.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_TEMPLATES).expect("built-in template file is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: TemplateFile =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("template file: {e}")))?;
        for t in &file.template {
            t.validate()?;
        }
        Ok(TemplateRegistry {
            templates: file.template,
        })
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Case-insensitive lookup by family name.
    pub fn get(&self, name: &str) -> Result<&ChatTemplate> {
        self.templates
            .iter()
            .find(|t| t.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::UnknownTemplate(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.iter().map(|t| t.name.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &ChatTemplate> {
        self.templates.iter()
    }
}

/// Looks up one of the built-in families.
pub fn builtin(name: &str) -> Result<ChatTemplate> {
    TemplateRegistry::builtin().get(name).cloned()
}
