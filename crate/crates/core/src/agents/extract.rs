//! Pulling source code out of a model reply.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockChoice {
    First,
    #[default]
    Last,
}

/// Leading tokens that make unfenced text count as code.
pub const DEFAULT_STARTERS: &[&str] = &[
    "def ",
    "class ",
    "import ",
    "from ",
    "async def ",
    "@",
    "#",
    "if ",
    "for ",
    "while ",
    "with ",
    "try:",
    "print(",
    "return ",
    "n = ",
    "t = ",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub choice: BlockChoice,
    pub starters: Vec<String>,
}

impl Default for Extraction {
    fn default() -> Self {
        Self {
            choice: BlockChoice::Last,
            starters: DEFAULT_STARTERS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no code found in model output")]
pub struct ExtractionError;

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Closed fenced blocks, in order. An unterminated trailing fence is ignored.
fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        match current.as_mut() {
            None if is_fence(line) => current = Some(Vec::new()),
            None => {}
            Some(body) if is_fence(line) && line.trim() == "```" => {
                blocks.push(body.join("\n"));
                current = None;
            }
            Some(body) => body.push(line),
        }
    }
    blocks
}

fn tidy(code: &str) -> Option<String> {
    let lines: Vec<&str> = code.lines().skip_while(|l| l.trim().is_empty()).collect();
    let joined = lines.join("\n");
    let trimmed = joined.trim_end();
    (!trimmed.is_empty()).then(|| trimmed.to_string())
}

impl Extraction {
    fn looks_like_code(&self, text: &str) -> bool {
        let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        let first = first.trim_start();
        if self.starters.iter().any(|s| first.starts_with(s.as_str())) {
            return true;
        }
        // `name = ...`, `name(...)`, `name.attr`, `name[...]`
        let ident_len = first
            .char_indices()
            .take_while(|(i, c)| {
                c.is_ascii_alphabetic() || *c == '_' || (*i > 0 && c.is_ascii_digit())
            })
            .count();
        if ident_len == 0 {
            return false;
        }
        let rest = first[ident_len..].trim_start();
        rest.starts_with('(')
            || rest.starts_with('[')
            || rest.starts_with('.')
            || (rest.starts_with('=') && !rest.starts_with("=="))
            || rest.starts_with("+=")
            || rest.starts_with("-=")
    }

    /// Returns the chosen fenced block (last by default). Without fences, the
    /// whole text is returned if it looks like code.
    pub fn extract(&self, llm_text: &str) -> Result<String, ExtractionError> {
        let blocks = fenced_blocks(llm_text);
        let picked = match self.choice {
            BlockChoice::Last => blocks.iter().rev().find_map(|b| tidy(b)),
            BlockChoice::First => blocks.iter().find_map(|b| tidy(b)),
        };
        if let Some(code) = picked {
            return Ok(code);
        }
        if blocks.is_empty() && !llm_text.lines().any(is_fence) && self.looks_like_code(llm_text) {
            if let Some(code) = tidy(llm_text) {
                return Ok(code);
            }
        }
        Err(ExtractionError)
    }
}

pub fn extract_code(llm_text: &str) -> Result<String, ExtractionError> {
    Extraction::default().extract(llm_text)
}
