//! Built-in colleague roster and the global tone instruction.
//!
//! Role instructions are shipped as resource files under `personas/` and are
//! embedded at build time so the exact prompt bytes are auditable.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::CatalogError;

/// How much a colleague tends to speak, as phrased in its role instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Talkativeness {
    Low,
    LowToModerate,
    Moderate,
    ModerateToHigh,
    High,
}

impl Talkativeness {
    /// Reads the level from the "talks ..." phrase of a role instruction.
    pub fn from_role_text(text: &str) -> Option<Self> {
        let idx = text.find("talks ")?;
        let rest = &text[idx + "talks ".len()..];
        let table: [(&str, Talkativeness); 7] = [
            ("a lot", Talkativeness::High),
            ("much", Talkativeness::High),
            ("moderate to high", Talkativeness::ModerateToHigh),
            ("low to moderate", Talkativeness::LowToModerate),
            ("moderately", Talkativeness::Moderate),
            ("moderate", Talkativeness::Moderate),
            ("little", Talkativeness::Low),
        ];
        table
            .iter()
            .find(|(phrase, _)| rest.starts_with(phrase))
            .map(|(_, level)| *level)
            .or_else(|| rest.starts_with("low").then_some(Talkativeness::Low))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaConfig {
    pub id: String,
    pub display_name: String,
    pub role_instruction: String,
    pub talkativeness: Talkativeness,
    pub avatar_key: String,
    pub is_facilitator: bool,
}

/// The global tone block appended to persona prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToneInstruction {
    pub text: String,
}

impl ToneInstruction {
    pub fn global() -> Self {
        Self {
            text: include_str!("../templates/tone.txt").to_string(),
        }
    }
}

impl fmt::Display for ToneInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

pub const FACILITATOR_ID: &str = "facilitator";

const BUILTINS: [(&str, &str); 10] = [
    ("UX Designer", include_str!("../personas/ux_designer.txt")),
    ("Brand Strategist", include_str!("../personas/brand_strategist.txt")),
    ("Market Analyst", include_str!("../personas/market_analyst.txt")),
    ("System Architect", include_str!("../personas/system_architect.txt")),
    ("Software Engineer", include_str!("../personas/software_engineer.txt")),
    ("Data Scientist", include_str!("../personas/data_scientist.txt")),
    ("User Researcher", include_str!("../personas/user_researcher.txt")),
    ("Behavioral Expert", include_str!("../personas/behavioral_expert.txt")),
    ("AI Ethics Advisor", include_str!("../personas/ai_ethics_advisor.txt")),
    ("Facilitator", include_str!("../personas/facilitator.txt")),
];

/// Lowercase snake_case key for a display name.
pub fn persona_id(display_name: &str) -> String {
    display_name
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// All colleagues a session may draw from. Immutable once shared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    personas: Vec<PersonaConfig>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// On-disk export layout: one TOML document listing every persona.
#[derive(Serialize, Deserialize)]
struct CatalogDocument {
    tone: String,
    persona: Vec<PersonaConfig>,
}

impl Catalog {
    pub fn builtin() -> Self {
        let personas = BUILTINS
            .iter()
            .map(|(name, text)| {
                let id = persona_id(name);
                let is_facilitator = id == FACILITATOR_ID;
                PersonaConfig {
                    talkativeness: Talkativeness::from_role_text(text)
                        .unwrap_or(Talkativeness::Moderate),
                    avatar_key: id.clone(),
                    id,
                    display_name: name.to_string(),
                    role_instruction: text.to_string(),
                    is_facilitator,
                }
            })
            .collect();
        Self::from_personas(personas).expect("built-in catalog is well formed")
    }

    fn from_personas(personas: Vec<PersonaConfig>) -> Result<Self, CatalogError> {
        let mut index = HashMap::new();
        for (i, p) in personas.iter().enumerate() {
            if index.insert(p.id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateId(p.id.clone()));
            }
        }
        let facilitators = personas.iter().filter(|p| p.is_facilitator).count();
        if facilitators != 1 {
            return Err(CatalogError::FacilitatorCount(facilitators));
        }
        Ok(Self { personas, index })
    }

    pub fn register_persona(&mut self, cfg: PersonaConfig) -> Result<(), CatalogError> {
        if cfg.is_facilitator {
            return Err(CatalogError::FacilitatorImmutable);
        }
        if self.index.contains_key(&cfg.id) {
            return Err(CatalogError::DuplicateId(cfg.id));
        }
        if cfg.id.is_empty() || cfg.display_name.trim().is_empty() || cfg.role_instruction.trim().is_empty() {
            return Err(CatalogError::IncompletePersona(cfg.id));
        }
        self.index.insert(cfg.id.clone(), self.personas.len());
        self.personas.push(cfg);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PersonaConfig> {
        self.index.get(id).map(|&i| &self.personas[i])
    }

    pub fn facilitator(&self) -> &PersonaConfig {
        self.personas
            .iter()
            .find(|p| p.is_facilitator)
            .expect("catalog always holds one facilitator")
    }

    pub fn iter(&self) -> impl Iterator<Item = &PersonaConfig> {
        self.personas.iter()
    }

    pub fn colleagues(&self) -> impl Iterator<Item = &PersonaConfig> {
        self.personas.iter().filter(|p| !p.is_facilitator)
    }

    pub fn len(&self) -> usize {
        self.personas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.personas.is_empty()
    }

    pub fn to_toml(&self) -> String {
        let doc = CatalogDocument {
            tone: ToneInstruction::global().text,
            persona: self.personas.clone(),
        };
        toml::to_string(&doc).expect("catalog serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, CatalogError> {
        let doc: CatalogDocument =
            toml::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        Self::from_personas(doc.persona)
    }
}

impl<'a> std::ops::Index<&'a str> for Catalog {
    type Output = PersonaConfig;

    fn index(&self, id: &'a str) -> &PersonaConfig {
        self.get(id).unwrap_or_else(|| panic!("no persona {id}"))
    }
}
