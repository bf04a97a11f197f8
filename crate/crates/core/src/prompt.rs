//! Prompt rendering.
//!
//! A prompt is the instruction, a blank line, each demonstration block in
//! draw order, and finally the target block without its label. Block
//! formats are patterns with `{name}` placeholders naming datum fields
//! (`premise`, `hypothesis`, `question`, `choices`, `id`) or, in
//! demonstration blocks only, `{label}` / `{label_upper}`. `{{` and `}}`
//! produce literal braces. Substitution is single pass, so braces inside
//! datum text are never expanded.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{Datum, TaskKind};
use crate::id::DatumId;

pub const NLI_INSTRUCTION: &str =
    "Determine whether a hypothesis is entailment, neutral, contradiction giving a premise.";
pub const QA_INSTRUCTION: &str = "Answer this commonsense question from the given choices.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("datum {id} has no field {field:?}")]
    MissingField { id: String, field: String },
    #[error("label {label:?} of {id} is not in the label set")]
    UnknownLabel { id: String, label: String },
    #[error("datum {0} has no oracle label")]
    MissingLabel(String),
    #[error("expected {expected} demonstrations, got {actual}")]
    WrongDemoCount { expected: usize, actual: usize },
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
}

/// A datum guaranteed to carry an oracle label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Datum", into = "Datum")]
pub struct Demonstration(Datum);

impl Demonstration {
    pub fn new(datum: Datum) -> Result<Self, PromptError> {
        if datum.gold.is_none() {
            return Err(PromptError::MissingLabel(datum.id.to_string()));
        }
        Ok(Self(datum))
    }

    pub fn id(&self) -> &DatumId {
        &self.0.id
    }

    pub fn label(&self) -> &str {
        self.0
            .gold
            .as_deref()
            .expect("demonstrations always carry a label")
    }

    pub fn datum(&self) -> &Datum {
        &self.0
    }
}

impl TryFrom<Datum> for Demonstration {
    type Error = PromptError;

    fn try_from(d: Datum) -> Result<Self, Self::Error> {
        Self::new(d)
    }
}

impl From<Demonstration> for Datum {
    fn from(d: Demonstration) -> Self {
        d.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Field(String),
}

fn parse_pattern(pattern: &str) -> Result<Vec<Segment>, PromptError> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut chars = pattern.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                literal.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                literal.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) if ch.is_ascii_alphanumeric() || ch == '_' => name.push(ch),
                        _ => {
                            return Err(PromptError::InvalidTemplate(format!(
                                "unterminated or malformed placeholder in {pattern:?}"
                            )))
                        }
                    }
                }
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Field(name));
            }
            '}' => {
                return Err(PromptError::InvalidTemplate(format!(
                    "unmatched '}}' in {pattern:?}"
                )))
            }
            _ => literal.push(c),
        }
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    Ok(segments)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskTemplate {
    pub id: String,
    pub task_kind: TaskKind,
    pub instruction: String,
    pub demo_format: String,
    pub target_format: String,
    /// For QA this is the full letter alphabet; each datum narrows it to its
    /// own number of choices.
    pub label_set: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    #[serde(rename = "template")]
    templates: Vec<TaskTemplate>,
}

fn datum_fields(kind: TaskKind) -> &'static [&'static str] {
    match kind {
        TaskKind::Nli => &["id", "premise", "hypothesis"],
        TaskKind::MultipleChoiceQa => &["id", "question", "choices"],
    }
}

const LABEL_FIELDS: [&str; 2] = ["label", "label_upper"];

impl TaskTemplate {
    pub fn nli(id: &str, label_set: &[&str]) -> Self {
        Self {
            id: id.to_owned(),
            task_kind: TaskKind::Nli,
            instruction: NLI_INSTRUCTION.to_owned(),
            demo_format: "Premise: {premise}\nHypothesis: {hypothesis}\nLabel: {label}\n\n"
                .to_owned(),
            target_format: "Premise: {premise}\nHypothesis: {hypothesis}\nLabel:".to_owned(),
            label_set: label_set.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn qa(id: &str) -> Self {
        Self {
            id: id.to_owned(),
            task_kind: TaskKind::MultipleChoiceQa,
            instruction: QA_INSTRUCTION.to_owned(),
            demo_format: "Question: {question}\n{choices}\nAnswer: {label_upper}\n\n".to_owned(),
            target_format: "Question: {question}\n{choices}\nAnswer:".to_owned(),
            label_set: ["a", "b", "c", "d", "e"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let invalid =
            |msg: String| Err(PromptError::InvalidTemplate(format!("{}: {msg}", self.id)));
        if self.instruction.trim().is_empty() {
            return invalid("empty instruction".into());
        }
        if self.label_set.is_empty() {
            return invalid("empty label_set".into());
        }
        for (i, l) in self.label_set.iter().enumerate() {
            if l.is_empty() || *l != l.to_lowercase() || self.label_set[..i].contains(l) {
                return invalid(format!(
                    "labels must be distinct, non-empty and lowercase: {l:?}"
                ));
            }
        }
        let fields = datum_fields(self.task_kind);
        for (pattern, allow_label) in [(&self.demo_format, true), (&self.target_format, false)] {
            for seg in parse_pattern(pattern)? {
                if let Segment::Field(name) = seg {
                    let is_label = LABEL_FIELDS.contains(&name.as_str());
                    if is_label && !allow_label {
                        return invalid("target_format must not reference the label".into());
                    }
                    if !is_label && !fields.contains(&name.as_str()) {
                        return invalid(format!("unknown placeholder {{{name}}}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads every `[[template]]` table of a TOML file.
    pub fn load_file(path: &Path) -> Result<Vec<TaskTemplate>, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::InvalidTemplate(format!("{}: {e}", path.display())))?;
        Self::parse_toml(&text)
    }

    pub fn parse_toml(text: &str) -> Result<Vec<TaskTemplate>, PromptError> {
        let file: TemplateFile =
            toml::from_str(text).map_err(|e| PromptError::InvalidTemplate(e.to_string()))?;
        for t in &file.templates {
            t.validate()?;
        }
        Ok(file.templates)
    }

    /// Labels valid for `datum` under this template.
    pub fn labels_for(&self, datum: &Datum) -> Vec<String> {
        match datum.choice_labels() {
            Some(letters) => self
                .label_set
                .iter()
                .filter(|l| letters.contains(l))
                .cloned()
                .collect(),
            None => self.label_set.clone(),
        }
    }

    fn expand(
        &self,
        pattern: &str,
        datum: &Datum,
        label: Option<&str>,
        out: &mut String,
    ) -> Result<(), PromptError> {
        for seg in parse_pattern(pattern)? {
            match seg {
                Segment::Literal(s) => out.push_str(&s),
                Segment::Field(name) => {
                    let value = match (name.as_str(), label) {
                        ("label", Some(l)) => Some(l.to_owned()),
                        ("label_upper", Some(l)) => Some(l.to_uppercase()),
                        _ => datum.field(&name),
                    };
                    out.push_str(&value.ok_or_else(|| PromptError::MissingField {
                        id: datum.id.to_string(),
                        field: name.clone(),
                    })?);
                }
            }
        }
        Ok(())
    }
}

/// Instruction and label set for a benchmark dataset.
pub fn default_template(dataset_id: &str) -> Result<TaskTemplate, PromptError> {
    let key: String = dataset_id
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    let nli = ["entailment", "neutral", "contradiction"];
    match key.as_str() {
        "esnli" | "multinli" | "mnli" | "anli" => Ok(TaskTemplate::nli(&key, &nli)),
        "contractnli" => Ok(TaskTemplate::nli(
            "contractnli",
            &["entailment", "contradiction"],
        )),
        "cqa" | "commonsenseqa" => Ok(TaskTemplate::qa("cqa")),
        _ => Err(PromptError::UnknownDataset(dataset_id.to_owned())),
    }
}

/// One rendered committee member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInput {
    pub template_id: String,
    pub demonstrations: Vec<Demonstration>,
    pub target: Datum,
    /// Labels a completion may resolve to.
    pub labels: Vec<String>,
    pub rendered: String,
}

impl PromptInput {
    pub fn demo_ids(&self) -> Vec<DatumId> {
        self.demonstrations.iter().map(|d| d.id().clone()).collect()
    }
}

pub fn render(
    template: &TaskTemplate,
    demos: &[Demonstration],
    target: &Datum,
    m: usize,
) -> Result<PromptInput, PromptError> {
    if demos.len() != m {
        return Err(PromptError::WrongDemoCount {
            expected: m,
            actual: demos.len(),
        });
    }
    let mut rendered = String::with_capacity(256 * (m + 1));
    rendered.push_str(&template.instruction);
    rendered.push_str("\n\n");
    for demo in demos {
        let allowed = template.labels_for(demo.datum());
        if !allowed.iter().any(|l| l == demo.label()) {
            return Err(PromptError::UnknownLabel {
                id: demo.id().to_string(),
                label: demo.label().to_owned(),
            });
        }
        template.expand(
            &template.demo_format,
            demo.datum(),
            Some(demo.label()),
            &mut rendered,
        )?;
    }
    template.expand(&template.target_format, target, None, &mut rendered)?;
    Ok(PromptInput {
        template_id: template.id.clone(),
        demonstrations: demos.to_vec(),
        target: target.clone(),
        labels: template.labels_for(target),
        rendered,
    })
}
