//! Versioned prompt template sets.
//!
//! A set is a directory of six plain-text files, one system and one user
//! template per agent. Slots use `{{ name }}`; a slot that is not bound
//! renders to nothing and `{% if name %}` sections around it disappear.

use std::collections::BTreeMap;
use std::path::Path;

use minijinja::Environment;
use serde::Serialize;

use crate::llm::{Message, Role};

pub const DEFAULT_SET: &str = "default-v1";

/// Template file stems every set must provide.
pub const TEMPLATE_NAMES: [&str; 6] = [
    "coder_system",
    "coder_user",
    "analyzer_system",
    "analyzer_user",
    "remediation_system",
    "remediation_user",
];

const BUILTIN_DEFAULT: [(&str, &str); 6] = [
    (
        "coder_system",
        include_str!("../../templates/default-v1/coder_system.txt"),
    ),
    (
        "coder_user",
        include_str!("../../templates/default-v1/coder_user.txt"),
    ),
    (
        "analyzer_system",
        include_str!("../../templates/default-v1/analyzer_system.txt"),
    ),
    (
        "analyzer_user",
        include_str!("../../templates/default-v1/analyzer_user.txt"),
    ),
    (
        "remediation_system",
        include_str!("../../templates/default-v1/remediation_system.txt"),
    ),
    (
        "remediation_user",
        include_str!("../../templates/default-v1/remediation_user.txt"),
    ),
];

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown template set {0:?}")]
    UnknownSet(String),
    #[error("template set {set:?} is missing {name}.txt")]
    Missing { set: String, name: String },
    #[error("template {name} in set {set:?}: {message}")]
    Syntax {
        set: String,
        name: String,
        message: String,
    },
    #[error("reading template set: {0}")]
    Io(#[from] std::io::Error),
}

/// Values bound into a template. Unset slots render empty.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Slots<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entrypoint: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tests: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advice: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_code: Option<&'a str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentRole {
    Coder,
    Analyzer,
    Remediation,
}

impl AgentRole {
    fn stem(self) -> &'static str {
        match self {
            AgentRole::Coder => "coder",
            AgentRole::Analyzer => "analyzer",
            AgentRole::Remediation => "remediation",
        }
    }
}

pub struct TemplateSet {
    id: String,
    sources: BTreeMap<String, String>,
    env: Environment<'static>,
}

impl std::fmt::Debug for TemplateSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TemplateSet").field("id", &self.id).finish()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let sources = BUILTIN_DEFAULT
            .iter()
            .map(|(n, s)| (n.to_string(), s.to_string()))
            .collect();
        Self::from_sources(DEFAULT_SET, sources).expect("bundled templates are valid")
    }

    /// Loads a set from a directory; the set id is the directory name.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let mut sources = BTreeMap::new();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                return Err(TemplateError::Missing {
                    set: id,
                    name: name.to_string(),
                });
            }
            sources.insert(name.to_string(), std::fs::read_to_string(path)?);
        }
        Self::from_sources(&id, sources)
    }

    /// Resolves a CLI `--template-set` value: the bundled id or a directory path.
    pub fn resolve(id_or_path: &str) -> Result<Self, TemplateError> {
        if id_or_path == DEFAULT_SET {
            return Ok(Self::builtin());
        }
        let path = Path::new(id_or_path);
        if path.is_dir() {
            return Self::load_dir(path);
        }
        Err(TemplateError::UnknownSet(id_or_path.to_string()))
    }

    pub fn from_sources(
        id: &str,
        sources: BTreeMap<String, String>,
    ) -> Result<Self, TemplateError> {
        let mut env = Environment::new();
        env.set_trim_blocks(true);
        env.set_lstrip_blocks(true);
        let set = Self {
            id: id.to_string(),
            sources,
            env,
        };
        for name in TEMPLATE_NAMES {
            let src = set
                .sources
                .get(name)
                .ok_or_else(|| TemplateError::Missing {
                    set: id.to_string(),
                    name: name.to_string(),
                })?;
            set.env
                .render_str(src, Slots::default())
                .map_err(|e| TemplateError::Syntax {
                    set: id.to_string(),
                    name: name.to_string(),
                    message: e.to_string(),
                })?;
        }
        Ok(set)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// `<set>/<agent>`, recorded with every exchange.
    pub fn template_id(&self, role: AgentRole) -> String {
        format!("{}/{}", self.id, role.stem())
    }

    fn render(&self, name: &str, slots: &Slots<'_>) -> String {
        let src = &self.sources[name];
        // sources were test-rendered at load time; binding strings cannot fail
        let text = self
            .env
            .render_str(src, slots)
            .expect("validated template renders");
        text.trim().to_string()
    }

    /// System and user messages for one agent.
    pub fn messages(&self, role: AgentRole, slots: &Slots<'_>) -> Vec<Message> {
        let stem = role.stem();
        vec![
            Message::new(Role::System, self.render(&format!("{stem}_system"), slots)),
            Message::new(Role::User, self.render(&format!("{stem}_user"), slots)),
        ]
    }
}
