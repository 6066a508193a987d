//! Prompt assembly.
//!
//! A prompt is the textual context, then the graph context (omitted when
//! empty), then a pair clause holding the mask token:
//!
//! ```text
//! MLM:          <x> <C> The pair <e1> and <e2> shows a [MASK] relation.
//! CLM/Seq2Seq:  <x> <C> The pair <e1> and <e2> shows a causal relation: [MASK].
//! ```

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::structure::StructureKind;
use crate::task::ClassLabel;
use crate::verbalize::GraphContext;

pub const DEFAULT_MASK: &str = "[MASK]";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("pair member names must be non-empty")]
    EmptyPair,
    #[error("unknown architecture `{0}` (expected MLM, CLM or Seq2Seq)")]
    UnknownArchitecture(String),
    #[error("class label `{0}` is not covered by the mapping")]
    UnknownLabel(String),
    #[error("label word `{0}` is not in the mapping range")]
    UnknownLabelWord(String),
    #[error("invalid label mapping: {0}")]
    InvalidMapping(String),
    #[error("invalid prompt template: {0}")]
    InvalidTemplate(String),
    #[error("the mask token `{0}` already occurs in the prompt inputs")]
    MaskCollision(String),
    #[error("budget of {budget} units cannot hold the {needed}-unit pair clause")]
    BudgetTooSmall { budget: usize, needed: usize },
    #[error("prompt file error: {0}")]
    Io(#[from] io::Error),
    #[error("prompt file line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    MLM,
    CLM,
    Seq2Seq,
}

impl Architecture {
    /// MLMs get the cloze form; the other two the generative form.
    pub fn is_cloze(self) -> bool {
        matches!(self, Architecture::MLM)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::MLM => "MLM",
            Architecture::CLM => "CLM",
            Architecture::Seq2Seq => "Seq2Seq",
        })
    }
}

impl FromStr for Architecture {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mlm" => Ok(Architecture::MLM),
            "clm" => Ok(Architecture::CLM),
            "seq2seq" | "seq2seqlm" => Ok(Architecture::Seq2Seq),
            _ => Err(PromptError::UnknownArchitecture(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingMode {
    Identity,
    Custom,
}

/// Label words for the two classes, in candidate order (causal first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelWords {
    pub causal: String,
    pub non_causal: String,
}

/// Injective map between class labels and the words a model fills in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMapping", into = "RawMapping")]
pub struct LabelMapping {
    mode: MappingMode,
    words: LabelWords,
}

#[derive(Serialize, Deserialize)]
struct RawMapping {
    mode: MappingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    causal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    non_causal: Option<String>,
}

impl TryFrom<RawMapping> for LabelMapping {
    type Error = PromptError;

    fn try_from(raw: RawMapping) -> Result<Self, Self::Error> {
        match raw.mode {
            MappingMode::Identity => Ok(LabelMapping::identity()),
            MappingMode::Custom => LabelMapping::custom(
                raw.causal.ok_or_else(|| PromptError::InvalidMapping("missing `causal` word".into()))?,
                raw.non_causal.ok_or_else(|| PromptError::InvalidMapping("missing `non_causal` word".into()))?,
            ),
        }
    }
}

impl From<LabelMapping> for RawMapping {
    fn from(m: LabelMapping) -> Self {
        match m.mode {
            MappingMode::Identity => RawMapping { mode: MappingMode::Identity, causal: None, non_causal: None },
            MappingMode::Custom => RawMapping {
                mode: MappingMode::Custom,
                causal: Some(m.words.causal),
                non_causal: Some(m.words.non_causal),
            },
        }
    }
}

impl Default for LabelMapping {
    fn default() -> Self {
        Self::identity()
    }
}

impl LabelMapping {
    /// Uses the class names themselves as label words.
    pub fn identity() -> Self {
        LabelMapping {
            mode: MappingMode::Identity,
            words: LabelWords {
                causal: ClassLabel::Causal.as_str().into(),
                non_causal: ClassLabel::NonCausal.as_str().into(),
            },
        }
    }

    pub fn custom(causal: impl Into<String>, non_causal: impl Into<String>) -> Result<Self, PromptError> {
        let (causal, non_causal) = (causal.into(), non_causal.into());
        if causal.trim().is_empty() || non_causal.trim().is_empty() {
            return Err(PromptError::InvalidMapping("label words must be non-empty".into()));
        }
        if causal == non_causal {
            return Err(PromptError::InvalidMapping(format!("both classes map to `{causal}`")));
        }
        Ok(LabelMapping { mode: MappingMode::Custom, words: LabelWords { causal, non_causal } })
    }

    pub fn mode(&self) -> MappingMode {
        self.mode
    }

    pub fn words(&self) -> &LabelWords {
        &self.words
    }

    pub fn map_label(&self, y: ClassLabel) -> &str {
        match y {
            ClassLabel::Causal => &self.words.causal,
            ClassLabel::NonCausal => &self.words.non_causal,
        }
    }

    /// Maps a class given by name; fails for anything but the two classes.
    pub fn map_label_str(&self, y: &str) -> Result<&str, PromptError> {
        let label: ClassLabel = y.parse().map_err(|_| PromptError::UnknownLabel(y.to_string()))?;
        Ok(self.map_label(label))
    }

    pub fn unmap_label(&self, word: &str) -> Result<ClassLabel, PromptError> {
        if word == self.words.causal {
            Ok(ClassLabel::Causal)
        } else if word == self.words.non_causal {
            Ok(ClassLabel::NonCausal)
        } else {
            Err(PromptError::UnknownLabelWord(word.to_string()))
        }
    }

    /// Label words in candidate order.
    pub fn candidates(&self) -> Vec<String> {
        vec![self.words.causal.clone(), self.words.non_causal.clone()]
    }
}

/// Pair-clause templates. `{e1}`, `{e2}` and `{mask}` are substituted;
/// `{mask}` must occur exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplate {
    pub cloze: String,
    pub generative: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            cloze: "The pair {e1} and {e2} shows a {mask} relation.".into(),
            generative: "The pair {e1} and {e2} shows a causal relation: {mask}.".into(),
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), PromptError> {
        for (name, t) in [("cloze", &self.cloze), ("generative", &self.generative)] {
            if t.matches("{mask}").count() != 1 {
                return Err(PromptError::InvalidTemplate(format!("`{name}` must contain `{{mask}}` exactly once")));
            }
        }
        Ok(())
    }

    fn clause(&self, arch: Architecture, e1: &str, e2: &str, mask: &str) -> String {
        let t = if arch.is_cloze() { &self.cloze } else { &self.generative };
        t.replace("{e1}", e1).replace("{e2}", e2).replace("{mask}", mask)
    }
}

/// Textual context with its pair and optional gold label, the input to
/// [`build_prompt`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptInput<'a> {
    pub instance_id: &'a str,
    pub text: &'a str,
    pub gold_label: Option<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptInstance {
    pub instance_id: String,
    pub architecture: Architecture,
    pub text: String,
    pub graph_context: GraphContext,
    pub pair: (String, String),
    pub prompt: String,
    pub mask_token: String,
    pub gold_label: Option<ClassLabel>,
    pub label_words: LabelWords,
    pub template: PromptTemplate,
    pub truncated: bool,
    pub dropped_context_items: usize,
    pub dropped_text_units: usize,
}

impl PromptInstance {
    fn pair_clause(&self) -> String {
        self.template.clause(self.architecture, &self.pair.0, &self.pair.1, &self.mask_token)
    }
}

fn assemble(text: &str, context: &GraphContext, clause: &str) -> String {
    let mut parts: Vec<&str> = Vec::with_capacity(3);
    if !text.is_empty() {
        parts.push(text);
    }
    if !context.empty {
        parts.push(&context.text);
    }
    parts.push(clause);
    parts.join(" ")
}

/// Builds the prompt for one instance.
#[allow(clippy::too_many_arguments)]
pub fn build_prompt(
    input: PromptInput<'_>,
    graph_context: GraphContext,
    pair: (&str, &str),
    arch: Architecture,
    mapping: &LabelMapping,
    mask_token: &str,
    template: Option<&PromptTemplate>,
) -> Result<PromptInstance, PromptError> {
    if pair.0.trim().is_empty() || pair.1.trim().is_empty() {
        return Err(PromptError::EmptyPair);
    }
    if mask_token.is_empty() {
        return Err(PromptError::InvalidTemplate("mask token must be non-empty".into()));
    }
    let template = template.cloned().unwrap_or_default();
    template.validate()?;
    if input.text.contains(mask_token) || graph_context.text.contains(mask_token) {
        return Err(PromptError::MaskCollision(mask_token.to_string()));
    }
    let clause = template.clause(arch, pair.0, pair.1, mask_token);
    if clause.matches(mask_token).count() != 1 {
        return Err(PromptError::MaskCollision(mask_token.to_string()));
    }
    let prompt = assemble(input.text, &graph_context, &clause);
    Ok(PromptInstance {
        instance_id: input.instance_id.to_string(),
        architecture: arch,
        text: input.text.to_string(),
        graph_context,
        pair: (pair.0.to_string(), pair.1.to_string()),
        prompt,
        mask_token: mask_token.to_string(),
        gold_label: input.gold_label,
        label_words: mapping.words().clone(),
        template,
        truncated: false,
        dropped_context_items: 0,
        dropped_text_units: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnit {
    WhitespaceToken,
    Character,
}

impl LengthUnit {
    pub fn measure(self, s: &str) -> usize {
        match self {
            LengthUnit::WhitespaceToken => s.split_whitespace().count(),
            LengthUnit::Character => s.chars().count(),
        }
    }

    /// The trailing `keep` units of `s`.
    fn tail(self, s: &str, keep: usize) -> String {
        match self {
            LengthUnit::WhitespaceToken => {
                let tokens: Vec<&str> = s.split_whitespace().collect();
                tokens[tokens.len().saturating_sub(keep)..].join(" ")
            }
            LengthUnit::Character => {
                let n = s.chars().count();
                s.chars().skip(n.saturating_sub(keep)).collect()
            }
        }
    }
}

/// Length budget for assembled prompts. Graph-context items are dropped
/// from the end first; then the textual context loses units from its start.
/// The pair clause is never touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationPolicy {
    pub max_units: usize,
    pub unit: LengthUnit,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy { max_units: 256, unit: LengthUnit::WhitespaceToken }
    }
}

pub fn truncate_prompt(p: &PromptInstance, policy: &TruncationPolicy) -> Result<PromptInstance, PromptError> {
    let unit = policy.unit;
    let clause = p.pair_clause();
    let needed = unit.measure(&clause);
    if policy.max_units <= needed {
        return Err(PromptError::BudgetTooSmall { budget: policy.max_units, needed });
    }
    if unit.measure(&p.prompt) <= policy.max_units {
        return Ok(p.clone());
    }

    let mut out = p.clone();
    out.truncated = true;
    let original_items = p.graph_context.item_count();
    let mut dropped = 0;
    while unit.measure(&assemble(&out.text, &out.graph_context, &clause)) > policy.max_units && dropped < original_items
    {
        dropped += 1;
        out.graph_context = p.graph_context.drop_last_items(dropped);
    }
    out.dropped_context_items = dropped;

    let mut prompt = assemble(&out.text, &out.graph_context, &clause);
    if unit.measure(&prompt) > policy.max_units {
        let rest = unit.measure(&assemble("", &out.graph_context, &clause));
        // the joining space counts as a character
        let joiner = match unit {
            LengthUnit::WhitespaceToken => 0,
            LengthUnit::Character => 1,
        };
        let room = policy.max_units.saturating_sub(rest + joiner);
        let before = unit.measure(&out.text);
        out.text = unit.tail(&out.text, room);
        out.dropped_text_units = before - unit.measure(&out.text);
        prompt = assemble(&out.text, &out.graph_context, &clause);
    }
    out.prompt = prompt;
    Ok(out)
}

/// One line of the prompt JSONL export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub instance_id: String,
    pub architecture: Architecture,
    pub prompt: String,
    pub mask_token: String,
    pub pair: (String, String),
    pub label_words: LabelWords,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<ClassLabel>,
    pub truncated: bool,
    pub text: String,
    pub graph_context: String,
    pub context_kind: StructureKind,
}

impl From<&PromptInstance> for PromptRecord {
    fn from(p: &PromptInstance) -> Self {
        PromptRecord {
            instance_id: p.instance_id.clone(),
            architecture: p.architecture,
            prompt: p.prompt.clone(),
            mask_token: p.mask_token.clone(),
            pair: p.pair.clone(),
            label_words: p.label_words.clone(),
            gold_label: p.gold_label,
            truncated: p.truncated,
            text: p.text.clone(),
            graph_context: p.graph_context.text.clone(),
            context_kind: p.graph_context.kind,
        }
    }
}

pub fn write_prompts_jsonl<'a>(
    records: impl IntoIterator<Item = &'a PromptRecord>,
    writer: impl Write,
) -> io::Result<usize> {
    let mut w = BufWriter::new(writer);
    let mut n = 0;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

/// Writes one JSON object per instance; returns the number of lines written.
pub fn export_prompts_jsonl(instances: &[PromptInstance], path: impl AsRef<Path>) -> Result<usize, PromptError> {
    let records: Vec<PromptRecord> = instances.iter().map(PromptRecord::from).collect();
    Ok(write_prompts_jsonl(&records, File::create(path)?)?)
}

pub fn read_prompts_jsonl(path: impl AsRef<Path>) -> Result<Vec<PromptRecord>, PromptError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| PromptError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(text: &str) -> PromptInput<'_> {
        PromptInput { instance_id: "i1", text, gold_label: Some(ClassLabel::Causal) }
    }

    #[test]
    fn identity_and_custom_mappings() {
        let id = LabelMapping::identity();
        assert_eq!(id.map_label(ClassLabel::Causal), "causal");
        assert_eq!(id.map_label(ClassLabel::NonCausal), "non-causal");
        let m = LabelMapping::custom("true", "false").unwrap();
        assert_eq!(m.map_label(ClassLabel::Causal), "true");
        assert_eq!(m.map_label(ClassLabel::NonCausal), "false");
        assert_eq!(m.unmap_label("true").unwrap(), ClassLabel::Causal);
        assert!(matches!(m.unmap_label("maybe"), Err(PromptError::UnknownLabelWord(_))));
        assert!(matches!(m.map_label_str("maybe"), Err(PromptError::UnknownLabel(_))));
        assert!(LabelMapping::custom("same", "same").is_err());
    }

    #[test]
    fn mapping_serde() {
        let m: LabelMapping = serde_json::from_str(r#"{"mode":"custom","causal":"yes","non_causal":"no"}"#).unwrap();
        assert_eq!(m.unmap_label("no").unwrap(), ClassLabel::NonCausal);
        let back: LabelMapping = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<LabelMapping>(r#"{"mode":"custom","causal":"x","non_causal":"x"}"#).is_err());
        let id: LabelMapping = serde_json::from_str(r#"{"mode":"identity"}"#).unwrap();
        assert_eq!(id, LabelMapping::identity());
    }

    #[test]
    fn architecture_parsing() {
        assert_eq!("mlm".parse::<Architecture>().unwrap(), Architecture::MLM);
        assert_eq!("Seq2Seq".parse::<Architecture>().unwrap(), Architecture::Seq2Seq);
        assert!(matches!("gpt".parse::<Architecture>(), Err(PromptError::UnknownArchitecture(_))));
    }

    #[test]
    fn empty_pair_rejected() {
        let err = build_prompt(
            input("x"),
            GraphContext::empty(StructureKind::NN),
            ("", "b"),
            Architecture::MLM,
            &LabelMapping::identity(),
            DEFAULT_MASK,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::EmptyPair));
    }

    #[test]
    fn mask_in_text_is_rejected() {
        let err = build_prompt(
            input("the [MASK] is here"),
            GraphContext::empty(StructureKind::NN),
            ("a", "b"),
            Architecture::MLM,
            &LabelMapping::identity(),
            DEFAULT_MASK,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::MaskCollision(_)));
    }

    #[test]
    fn template_needs_single_mask() {
        let t = PromptTemplate { cloze: "no slot".into(), ..Default::default() };
        assert!(t.validate().is_err());
    }

    fn mlm(text: &str) -> PromptInstance {
        build_prompt(
            input(text),
            GraphContext::empty(StructureKind::NN),
            ("a", "b"),
            Architecture::MLM,
            &LabelMapping::identity(),
            DEFAULT_MASK,
            None,
        )
        .unwrap()
    }

    #[test]
    fn under_budget_is_unchanged() {
        let p = mlm("short text");
        let t = truncate_prompt(&p, &TruncationPolicy::default()).unwrap();
        assert_eq!(t, p);
        assert!(!t.truncated);
    }

    #[test]
    fn budget_smaller_than_clause() {
        let p = mlm("short text");
        let err =
            truncate_prompt(&p, &TruncationPolicy { max_units: 5, unit: LengthUnit::WhitespaceToken }).unwrap_err();
        assert!(matches!(err, PromptError::BudgetTooSmall { needed: 9, .. }));
    }

    #[test]
    fn text_loses_leading_units() {
        let p = mlm("one two three four five");
        let t = truncate_prompt(&p, &TruncationPolicy { max_units: 12, unit: LengthUnit::WhitespaceToken }).unwrap();
        assert_eq!(t.text, "three four five");
        assert_eq!(t.prompt, "three four five The pair a and b shows a [MASK] relation.");
        assert_eq!(t.dropped_text_units, 2);
        assert!(t.truncated);

        let c = truncate_prompt(&p, &TruncationPolicy { max_units: 50, unit: LengthUnit::Character }).unwrap();
        assert!(c.prompt.chars().count() <= 50);
        assert!(c.prompt.ends_with("The pair a and b shows a [MASK] relation."));
        assert_eq!(truncate_prompt(&c, &TruncationPolicy { max_units: 50, unit: LengthUnit::Character }).unwrap(), c);
    }

    #[test]
    fn text_can_vanish_entirely() {
        let p = mlm("one two three");
        let clause = "The pair a and b shows a [MASK] relation.";
        let t = truncate_prompt(&p, &TruncationPolicy { max_units: clause.len() + 1, unit: LengthUnit::Character })
            .unwrap();
        assert_eq!(t.prompt, clause);
        assert_eq!(t.text, "");
    }
}
