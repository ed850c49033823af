//! Standoff annotation files and the event data model.
//!
//! An event is a trigger (event type + token span) plus labeled arguments
//! (type, span, subtype) and span-only arguments (type, span). The file
//! grammar uses tab-separated records:
//!
//! ```text
//! T<id>\t<Label> <charStart> <charEnd>\t<text>      text-bound span
//! E<id>\t<TriggerLabel>:T<id> (<ArgName><k?>:T<id>)*  event structure
//! A<id>\t<AttrName> T<id> <value>                   subtype on an argument span
//! ```
//!
//! Character spans are mapped to token spans by overlap: a token is covered
//! if its byte range overlaps the annotation span at all. Relation (`R`),
//! normalization (`N`), note (`#`), equivalence (`*`), and modification
//! (`M`) records are ignored with a warning.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};

/// Contiguous, non-empty run of token indices `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::range(format!("empty token span {start}..{end}")));
        }
        Ok(TokenSpan { start, end })
    }

    /// Span covering a single token.
    pub fn single(index: usize) -> Self {
        TokenSpan { start: index, end: index + 1 }
    }

    /// Build from an explicit index list, which must be strictly
    /// increasing and contiguous.
    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let (&first, &last) = match (indices.first(), indices.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::range("empty token span")),
        };
        if indices.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::range(format!("non-contiguous token span {indices:?}")));
        }
        TokenSpan::new(first, last + 1)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> {
        self.start..self.end
    }

    /// Mean of the covered token indices; the alignment distance metric.
    pub fn center(&self) -> f64 {
        (self.start + self.end - 1) as f64 / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    pub event_type: String,
    pub span: TokenSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledArgument {
    pub arg_type: String,
    pub span: TokenSpan,
    pub subtype: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanOnlyArgument {
    pub arg_type: String,
    pub span: TokenSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub trigger: Trigger,
    pub labeled_args: Vec<LabeledArgument>,
    pub span_args: Vec<SpanOnlyArgument>,
}

impl Event {
    pub fn trigger_only(event_type: impl Into<String>, span: TokenSpan) -> Self {
        Event {
            trigger: Trigger { event_type: event_type.into(), span },
            labeled_args: Vec::new(),
            span_args: Vec::new(),
        }
    }
}

/// Events keyed by sample id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub events: BTreeMap<String, Vec<Event>>,
}

impl AnnotationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sample_id: impl Into<String>, events: Vec<Event>) {
        self.events.insert(sample_id.into(), events);
    }

    pub fn get(&self, sample_id: &str) -> &[Event] {
        self.events.get(sample_id).map_or(&[], Vec::as_slice)
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = &str> {
        self.events.keys().map(String::as_str)
    }

    /// Event types present anywhere in the set.
    pub fn event_types(&self) -> BTreeSet<String> {
        self.events
            .values()
            .flatten()
            .map(|e| e.trigger.event_type.clone())
            .collect()
    }
}

/// Schema for one labeled argument type: its subtype label set and
/// whether annotation guidelines mark it required.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledArgDef {
    pub name: String,
    pub labels: Vec<String>,
    #[serde(default)]
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTypeDef {
    pub name: String,
    #[serde(default)]
    pub labeled_args: Vec<LabeledArgDef>,
    #[serde(default)]
    pub span_args: Vec<String>,
}

/// Configured event types with their argument structure. Order is
/// significant: it fixes head ordering and feature layout in the models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSchema {
    pub event_types: Vec<EventTypeDef>,
}

impl EventSchema {
    /// The five frequent social-history event types. Additional types can
    /// be added through the schema file.
    pub fn social_history() -> Self {
        let substance_status = LabeledArgDef {
            name: "Status".into(),
            labels: vec!["none".into(), "current".into(), "past".into()],
            required: true,
        };
        let substance_spans: Vec<String> =
            ["Duration", "History", "Type", "Amount", "Frequency"].iter().map(|s| s.to_string()).collect();
        let substance = |name: &str| EventTypeDef {
            name: name.into(),
            labeled_args: vec![substance_status.clone()],
            span_args: substance_spans.clone(),
        };
        EventSchema {
            event_types: vec![
                substance("Alcohol"),
                substance("Drug"),
                substance("Tobacco"),
                EventTypeDef {
                    name: "Employment".into(),
                    labeled_args: vec![LabeledArgDef {
                        name: "Status".into(),
                        labels: vec![
                            "employed".into(),
                            "unemployed".into(),
                            "retired".into(),
                            "on_disability".into(),
                            "student".into(),
                            "homemaker".into(),
                        ],
                        required: true,
                    }],
                    span_args: vec!["Duration".into(), "History".into(), "Type".into()],
                },
                EventTypeDef {
                    name: "LivingStatus".into(),
                    labeled_args: vec![
                        LabeledArgDef {
                            name: "Status".into(),
                            labels: vec!["current".into(), "past".into()],
                            required: true,
                        },
                        LabeledArgDef {
                            name: "Type".into(),
                            labels: vec![
                                "alone".into(),
                                "with_family".into(),
                                "with_others".into(),
                                "homeless".into(),
                            ],
                            required: true,
                        },
                    ],
                    span_args: vec!["Duration".into(), "History".into()],
                },
            ],
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let schema: EventSchema = serde_json::from_str(json)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for et in &self.event_types {
            if !seen.insert(&et.name) {
                return Err(Error::schema(format!("duplicate event type {:?}", et.name)));
            }
            let mut args = BTreeSet::new();
            for la in &et.labeled_args {
                if la.labels.is_empty() {
                    return Err(Error::schema(format!(
                        "empty label set for {}::{}",
                        et.name, la.name
                    )));
                }
                if !args.insert(&la.name) {
                    return Err(Error::schema(format!(
                        "duplicate labeled argument {}::{}",
                        et.name, la.name
                    )));
                }
            }
            for sa in &et.span_args {
                if !args.insert(sa) {
                    return Err(Error::schema(format!("duplicate argument {}::{}", et.name, sa)));
                }
            }
        }
        Ok(())
    }

    pub fn event_type(&self, name: &str) -> Option<&EventTypeDef> {
        self.event_types.iter().find(|e| e.name == name)
    }

    pub fn event_type_names(&self) -> Vec<String> {
        self.event_types.iter().map(|e| e.name.clone()).collect()
    }

    pub fn labeled_arg(&self, event_type: &str, arg_type: &str) -> Option<&LabeledArgDef> {
        self.event_type(event_type)?.labeled_args.iter().find(|a| a.name == arg_type)
    }

    /// Validate one event: known types, known arguments, legal subtype,
    /// no duplicated labeled argument type, spans within `n_tokens`.
    pub fn validate_event(&self, event: &Event, n_tokens: usize) -> Result<()> {
        let et = self.event_type(&event.trigger.event_type).ok_or_else(|| {
            Error::schema(format!("unknown event type {:?}", event.trigger.event_type))
        })?;
        let check_span = |span: &TokenSpan| -> Result<()> {
            if span.end > n_tokens {
                return Err(Error::range(format!(
                    "token span {}..{} exceeds sample length {n_tokens}",
                    span.start, span.end
                )));
            }
            Ok(())
        };
        check_span(&event.trigger.span)?;
        let mut seen_args = BTreeSet::new();
        for la in &event.labeled_args {
            check_span(&la.span)?;
            let def = self.labeled_arg(&et.name, &la.arg_type).ok_or_else(|| {
                Error::schema(format!("unknown labeled argument {}::{}", et.name, la.arg_type))
            })?;
            if !def.labels.contains(&la.subtype) {
                return Err(Error::schema(format!(
                    "unknown subtype {:?} for {}::{}",
                    la.subtype, et.name, la.arg_type
                )));
            }
            if !seen_args.insert(la.arg_type.clone()) {
                return Err(Error::schema(format!(
                    "duplicate labeled argument {}::{}",
                    et.name, la.arg_type
                )));
            }
        }
        for sa in &event.span_args {
            check_span(&sa.span)?;
            if !et.span_args.iter().any(|s| s == &sa.arg_type) {
                return Err(Error::schema(format!(
                    "unknown span-only argument {}::{}",
                    et.name, sa.arg_type
                )));
            }
        }
        Ok(())
    }
}

/// Canonical slot projection of an event: the comparable content for
/// slot-filling evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlotView {
    pub event_type: String,
    /// arg_type -> subtype.
    pub labeled: BTreeMap<String, String>,
    /// One token set per span-only argument instance, in event order.
    pub span_tokens: Vec<(String, BTreeSet<usize>)>,
}

pub fn events_to_slots(event: &Event) -> SlotView {
    SlotView {
        event_type: event.trigger.event_type.clone(),
        labeled: event
            .labeled_args
            .iter()
            .map(|a| (a.arg_type.clone(), a.subtype.clone()))
            .collect(),
        span_tokens: event
            .span_args
            .iter()
            .map(|a| (a.arg_type.clone(), a.span.indices().collect()))
            .collect(),
    }
}

/// Map a character span to the contiguous run of tokens whose byte ranges
/// overlap it.
pub fn char_span_to_tokens(sample: &Sample, char_start: usize, char_end: usize) -> Result<TokenSpan> {
    if char_start >= char_end || char_end > sample.text.len() {
        return Err(Error::range(format!(
            "character span {char_start}..{char_end} invalid for sample {:?} (len {})",
            sample.id,
            sample.text.len()
        )));
    }
    let covered: Vec<usize> = sample
        .tokens
        .iter()
        .filter(|t| t.char_start < char_end && char_start < t.char_end)
        .map(|t| t.index)
        .collect();
    if covered.is_empty() {
        return Err(Error::range(format!(
            "character span {char_start}..{char_end} covers no tokens in sample {:?}",
            sample.id
        )));
    }
    TokenSpan::from_indices(&covered)
}

#[derive(Debug)]
struct TextBound {
    label: String,
    char_start: usize,
    char_end: usize,
    line: usize,
}

/// Strip a trailing ordinal from a repeated argument name ("Type2" -> "Type").
fn strip_ordinal(name: &str) -> &str {
    let trimmed = name.trim_end_matches(|c: char| c.is_ascii_digit());
    if trimmed.is_empty() {
        name
    } else {
        trimmed
    }
}

/// Parse standoff records into schema-validated events.
pub fn parse_standoff(ann_text: &str, sample: &Sample, schema: &EventSchema) -> Result<Vec<Event>> {
    let mut text_bounds: HashMap<String, TextBound> = HashMap::new();
    let mut attributes: HashMap<String, (String, String, usize)> = HashMap::new(); // T-id -> (attr name, value, line)
    let mut event_records: Vec<(String, String, Vec<(String, String)>, usize)> = Vec::new(); // (trigger name, trigger id, args, line)

    for (lineno, raw) in ann_text.lines().enumerate() {
        let line = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split('\t');
        let id = fields.next().unwrap_or("");
        let body = fields.next();
        match id.chars().next() {
            Some('T') => {
                let body = body.ok_or_else(|| Error::parse(line, "text-bound record missing body"))?;
                if body.contains(';') {
                    return Err(Error::parse(line, "discontinuous spans are not supported"));
                }
                let mut parts = body.split_whitespace();
                let label = parts
                    .next()
                    .ok_or_else(|| Error::parse(line, "text-bound record missing label"))?;
                let start: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(line, "bad span start"))?;
                let end: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(line, "bad span end"))?;
                if parts.next().is_some() {
                    return Err(Error::parse(line, "trailing fields in span"));
                }
                if text_bounds
                    .insert(
                        id.to_string(),
                        TextBound { label: label.to_string(), char_start: start, char_end: end, line },
                    )
                    .is_some()
                {
                    return Err(Error::parse(line, format!("duplicate record id {id}")));
                }
            }
            Some('E') => {
                let body = body.ok_or_else(|| Error::parse(line, "event record missing body"))?;
                let mut pairs = Vec::new();
                for part in body.split_whitespace() {
                    let (name, target) = part
                        .split_once(':')
                        .ok_or_else(|| Error::parse(line, format!("bad event pair {part:?}")))?;
                    pairs.push((name.to_string(), target.to_string()));
                }
                if pairs.is_empty() {
                    return Err(Error::parse(line, "event record without trigger"));
                }
                let (trigger_name, trigger_id) = pairs.remove(0);
                event_records.push((trigger_name, trigger_id, pairs, line));
            }
            Some('A') => {
                let body = body.ok_or_else(|| Error::parse(line, "attribute record missing body"))?;
                let mut parts = body.split_whitespace();
                let name = parts
                    .next()
                    .ok_or_else(|| Error::parse(line, "attribute missing name"))?;
                let target = parts
                    .next()
                    .ok_or_else(|| Error::parse(line, "attribute missing target"))?;
                let value = parts
                    .next()
                    .ok_or_else(|| Error::parse(line, "attribute missing value"))?;
                if parts.next().is_some() {
                    return Err(Error::parse(line, "trailing fields in attribute"));
                }
                if attributes
                    .insert(target.to_string(), (name.to_string(), value.to_string(), line))
                    .is_some()
                {
                    return Err(Error::parse(line, format!("duplicate attribute for {target}")));
                }
            }
            Some('R') | Some('N') | Some('#') | Some('*') | Some('M') => {
                log::warn!("ignoring unsupported standoff record at line {line}: {raw}");
            }
            _ => return Err(Error::parse(line, format!("unrecognized record {raw:?}"))),
        }
    }

    let mut events = Vec::new();
    let mut used_bounds: BTreeSet<String> = BTreeSet::new();
    for (trigger_name, trigger_id, args, line) in event_records {
        let tb = text_bounds
            .get(&trigger_id)
            .ok_or_else(|| Error::parse(line, format!("event references unknown span {trigger_id}")))?;
        if tb.label != trigger_name {
            return Err(Error::parse(
                line,
                format!("trigger label {trigger_name:?} does not match span label {:?}", tb.label),
            ));
        }
        used_bounds.insert(trigger_id.clone());
        let trigger_span = char_span_to_tokens(sample, tb.char_start, tb.char_end)?;
        let mut event = Event::trigger_only(tb.label.clone(), trigger_span);
        if attributes.contains_key(&trigger_id) {
            log::warn!("ignoring attribute attached to trigger span {trigger_id}");
        }
        for (raw_name, target) in args {
            let arg_tb = text_bounds
                .get(&target)
                .ok_or_else(|| Error::parse(line, format!("event references unknown span {target}")))?;
            used_bounds.insert(target.clone());
            let span = char_span_to_tokens(sample, arg_tb.char_start, arg_tb.char_end)?;
            let arg_type = strip_ordinal(&raw_name).to_string();
            match attributes.get(&target) {
                Some((attr_name, value, _)) => {
                    if attr_name != &arg_type {
                        log::warn!(
                            "attribute name {attr_name:?} differs from argument type {arg_type:?} for {target}"
                        );
                    }
                    event.labeled_args.push(LabeledArgument {
                        arg_type,
                        span,
                        subtype: value.clone(),
                    });
                }
                None => {
                    // An argument of a configured labeled type must carry a
                    // subtype attribute.
                    if schema.labeled_arg(&event.trigger.event_type, &arg_type).is_some() {
                        return Err(Error::schema(format!(
                            "labeled argument {}::{arg_type} at line {line} has no subtype attribute",
                            event.trigger.event_type
                        )));
                    }
                    event.span_args.push(SpanOnlyArgument { arg_type, span });
                }
            }
        }
        schema.validate_event(&event, sample.tokens.len())?;
        events.push(event);
    }

    for (id, tb) in &text_bounds {
        if !used_bounds.contains(id) {
            log::warn!("ignoring stray text-bound {id} ({:?}) at line {}", tb.label, tb.line);
        }
    }
    Ok(events)
}

/// Serialize events back to standoff records. Round-trips through
/// [`parse_standoff`] up to record id renumbering.
pub fn serialize_standoff(events: &[Event], sample: &Sample) -> Result<String> {
    let schema_check = |span: &TokenSpan| -> Result<(usize, usize)> {
        if span.end > sample.tokens.len() {
            return Err(Error::range(format!(
                "token span {}..{} exceeds sample {:?} length {}",
                span.start,
                span.end,
                sample.id,
                sample.tokens.len()
            )));
        }
        Ok((sample.tokens[span.start].char_start, sample.tokens[span.end - 1].char_end))
    };
    let mut out = String::new();
    let mut t_counter = 0usize;
    let mut a_counter = 0usize;
    let mut push_span = |label: &str, span: &TokenSpan, out: &mut String| -> Result<String> {
        let (cs, ce) = schema_check(span)?;
        t_counter += 1;
        let tid = format!("T{t_counter}");
        let text: String = sample.text[cs..ce]
            .chars()
            .map(|c| if c.is_whitespace() { ' ' } else { c })
            .collect();
        out.push_str(&format!("{tid}\t{label} {cs} {ce}\t{text}\n"));
        Ok(tid)
    };

    for (k, event) in events.iter().enumerate() {
        let trigger_id = push_span(&event.trigger.event_type, &event.trigger.span, &mut out)?;
        let mut pairs = vec![format!("{}:{}", event.trigger.event_type, trigger_id)];
        let mut name_counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut attr_lines = Vec::new();
        for la in &event.labeled_args {
            let tid = push_span(&la.arg_type, &la.span, &mut out)?;
            let count = name_counts.entry(la.arg_type.as_str()).or_insert(0);
            *count += 1;
            let name =
                if *count == 1 { la.arg_type.clone() } else { format!("{}{}", la.arg_type, count) };
            pairs.push(format!("{name}:{tid}"));
            a_counter += 1;
            attr_lines.push(format!("A{a_counter}\t{} {tid} {}\n", la.arg_type, la.subtype));
        }
        for sa in &event.span_args {
            let tid = push_span(&sa.arg_type, &sa.span, &mut out)?;
            let count = name_counts.entry(sa.arg_type.as_str()).or_insert(0);
            *count += 1;
            let name =
                if *count == 1 { sa.arg_type.clone() } else { format!("{}{}", sa.arg_type, count) };
            pairs.push(format!("{name}:{tid}"));
        }
        out.push_str(&format!("E{}\t{}\n", k + 1, pairs.join(" ")));
        out.push_str(&attr_lines.concat());
    }
    Ok(out)
}

/// Load paired `{id}.txt` / `{id}.ann` files from a directory.
/// The sample id is the file stem; `source` is the directory name.
/// Missing `.ann` files yield empty event lists.
pub fn load_annotated_dir(
    dir: &Path,
    schema: &EventSchema,
) -> Result<(Vec<Sample>, AnnotationSet)> {
    let source = dir
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus")
        .to_string();
    let mut samples = Vec::new();
    let mut annotations = AnnotationSet::new();
    for (stem, text) in crate::corpus::read_documents(dir)? {
        let sample = Sample::new(stem.clone(), source.clone(), "", text);
        let ann_path = dir.join(format!("{stem}.ann"));
        let events = if ann_path.exists() {
            parse_standoff(&std::fs::read_to_string(&ann_path)?, &sample, schema)
                .map_err(|e| Error::data(format!("{}: {e}", ann_path.display())))?
        } else {
            Vec::new()
        };
        annotations.insert(stem, events);
        samples.push(sample);
    }
    Ok((samples, annotations))
}

/// Load only `.ann` files from `dir`, resolving spans against the given
/// samples (used to score predictions against a gold corpus's text).
pub fn load_annotations_for(
    dir: &Path,
    samples: &[Sample],
    schema: &EventSchema,
) -> Result<AnnotationSet> {
    let mut annotations = AnnotationSet::new();
    for sample in samples {
        let ann_path = dir.join(format!("{}.ann", sample.id));
        let events = if ann_path.exists() {
            parse_standoff(&std::fs::read_to_string(&ann_path)?, sample, schema)
                .map_err(|e| Error::data(format!("{}: {e}", ann_path.display())))?
        } else {
            Vec::new()
        };
        annotations.insert(sample.id.clone(), events);
    }
    Ok(annotations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> EventSchema {
        EventSchema::social_history()
    }

    // Mirrors the drug-use sentence used throughout the slot-filling
    // discussion: token 7 "cocaine", token 8 "use", token 9 "recently".
    fn sample() -> Sample {
        Sample::new("s0", "unit", "SH", "pt reports IVDU in the past ; cocaine use recently")
    }

    #[test]
    fn token_span_center() {
        assert_eq!(TokenSpan::single(8).center(), 8.0);
        assert_eq!(TokenSpan::new(8, 10).unwrap().center(), 8.5);
        assert!(TokenSpan::from_indices(&[3, 5]).is_err());
        assert!(TokenSpan::from_indices(&[]).is_err());
    }

    #[test]
    fn parse_trigger_with_labeled_and_span_arg() {
        let s = sample();
        let cocaine = &s.tokens[7];
        let use_tok = &s.tokens[8];
        let recently = &s.tokens[9];
        assert_eq!(cocaine.text, "cocaine");
        let ann = format!(
            "T1\tDrug {} {}\tcocaine\nT2\tStatus {} {}\trecently\nT3\tType {} {}\tcocaine\nE1\tDrug:T1 Status:T2 Type:T3\nA1\tStatus T2 current\n",
            use_tok.char_start, use_tok.char_end,
            recently.char_start, recently.char_end,
            cocaine.char_start, cocaine.char_end,
        );
        let events = parse_standoff(&ann, &s, &schema()).unwrap();
        assert_eq!(events.len(), 1);
        let e = &events[0];
        assert_eq!(e.trigger.event_type, "Drug");
        assert_eq!(e.trigger.span, TokenSpan::single(8));
        assert_eq!(e.labeled_args.len(), 1);
        assert_eq!(e.labeled_args[0].arg_type, "Status");
        assert_eq!(e.labeled_args[0].subtype, "current");
        assert_eq!(e.labeled_args[0].span, TokenSpan::single(9));
        assert_eq!(e.span_args.len(), 1);
        assert_eq!(e.span_args[0].span, TokenSpan::single(7));

        let slots = events_to_slots(e);
        assert_eq!(slots.event_type, "Drug");
        assert_eq!(slots.labeled.get("Status").unwrap(), "current");
        assert_eq!(slots.span_tokens[0].1, [7usize].into_iter().collect());
    }

    #[test]
    fn char_span_overlap_covers_multiple_tokens() {
        let s = sample();
        // from mid "cocaine" into "use": overlaps tokens 7 and 8
        let start = s.tokens[7].char_start + 2;
        let end = s.tokens[8].char_end;
        let span = char_span_to_tokens(&s, start, end).unwrap();
        assert_eq!(span, TokenSpan::new(7, 9).unwrap());
    }

    #[test]
    fn char_to_token_mapping_is_monotone() {
        let s = sample();
        let small = char_span_to_tokens(&s, s.tokens[7].char_start, s.tokens[7].char_end).unwrap();
        let large = char_span_to_tokens(&s, s.tokens[7].char_start, s.tokens[9].char_end).unwrap();
        assert!(large.len() >= small.len());
        assert!(large.start <= small.start && large.end >= small.end);
    }

    #[test]
    fn empty_ann_file() {
        assert!(parse_standoff("", &sample(), &schema()).unwrap().is_empty());
        assert!(parse_standoff("\n\n", &sample(), &schema()).unwrap().is_empty());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let s = sample();
        let err = parse_standoff("T1\tDrug x y\tz\n", &s, &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");

        let err = parse_standoff("T1\tDrug 0 2\tpt\nE1\tDrug:T9\n", &s, &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        let err = parse_standoff("garbage\n", &s, &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn out_of_range_span_rejected() {
        let s = sample();
        let ann = format!("T1\tDrug {} {}\tx\nE1\tDrug:T1\n", 0, s.text.len() + 10);
        assert!(matches!(parse_standoff(&ann, &s, &schema()), Err(Error::Range(_))));
    }

    #[test]
    fn labeled_argument_requires_subtype() {
        let s = sample();
        let t7 = &s.tokens[7];
        let t8 = &s.tokens[8];
        // Status without an attribute record
        let ann = format!(
            "T1\tDrug {} {}\tcocaine\nT2\tStatus {} {}\tuse\nE1\tDrug:T1 Status:T2\n",
            t7.char_start, t7.char_end, t8.char_start, t8.char_end
        );
        assert!(matches!(parse_standoff(&ann, &s, &schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn unknown_subtype_rejected() {
        let s = sample();
        let t7 = &s.tokens[7];
        let t8 = &s.tokens[8];
        let ann = format!(
            "T1\tDrug {} {}\tcocaine\nT2\tStatus {} {}\tuse\nE1\tDrug:T1 Status:T2\nA1\tStatus T2 sometimes\n",
            t7.char_start, t7.char_end, t8.char_start, t8.char_end
        );
        assert!(matches!(parse_standoff(&ann, &s, &schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn duplicate_labeled_arg_type_rejected() {
        let s = sample();
        let t7 = &s.tokens[7];
        let t8 = &s.tokens[8];
        let t9 = &s.tokens[9];
        let ann = format!(
            "T1\tDrug {} {}\tcocaine\nT2\tStatus {} {}\tuse\nT3\tStatus {} {}\trecently\nE1\tDrug:T1 Status:T2 Status2:T3\nA1\tStatus T2 current\nA2\tStatus T3 past\n",
            t7.char_start, t7.char_end, t8.char_start, t8.char_end, t9.char_start, t9.char_end
        );
        assert!(matches!(parse_standoff(&ann, &s, &schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn serialize_empty_and_trigger_only() {
        let s = sample();
        assert_eq!(serialize_standoff(&[], &s).unwrap(), "");
        let events = vec![Event::trigger_only("Drug", TokenSpan::single(8))];
        let text = serialize_standoff(&events, &s).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("T1\tDrug "));
        assert!(lines[1].starts_with("E1\tDrug:T1"));
        let reparsed = parse_standoff(&text, &s, &schema()).unwrap();
        assert_eq!(reparsed, events);
    }

    #[test]
    fn roundtrip_full_event() {
        let s = sample();
        let events = vec![Event {
            trigger: Trigger { event_type: "Drug".into(), span: TokenSpan::new(7, 9).unwrap() },
            labeled_args: vec![LabeledArgument {
                arg_type: "Status".into(),
                span: TokenSpan::single(9),
                subtype: "current".into(),
            }],
            span_args: vec![
                SpanOnlyArgument { arg_type: "Type".into(), span: TokenSpan::single(7) },
                SpanOnlyArgument { arg_type: "Type".into(), span: TokenSpan::single(2) },
            ],
        }];
        let text = serialize_standoff(&events, &s).unwrap();
        let reparsed = parse_standoff(&text, &s, &schema()).unwrap();
        assert_eq!(reparsed, events);
    }

    #[test]
    fn unsupported_records_are_skipped() {
        let s = sample();
        let t8 = &s.tokens[8];
        let ann = format!(
            "T1\tDrug {} {}\tuse\nE1\tDrug:T1\nR1\tCoref Arg1:T1 Arg2:T1\n#1\tAnnotatorNotes T1\tcheck this\n",
            t8.char_start, t8.char_end
        );
        let events = parse_standoff(&ann, &s, &schema()).unwrap();
        assert_eq!(events.len(), 1);
    }

    #[test]
    fn schema_json_roundtrip() {
        let schema = schema();
        let json = schema.to_json().unwrap();
        let loaded = EventSchema::from_json(&json).unwrap();
        assert_eq!(loaded, schema);
        assert_eq!(loaded.event_types.len(), 5);
        assert!(loaded.labeled_arg("LivingStatus", "Type").is_some());
        assert!(loaded.labeled_arg("Drug", "Type").is_none());
    }
}
