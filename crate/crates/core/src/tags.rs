//! The XML-style reasoning-tag grammar shared by every agent response.
//!
//! A response is a flat sequence of `<kind>body</kind>` blocks interleaved with
//! untagged prose. Tags do not nest: an opening tag inside a body is literal
//! text, and an unclosed trailing tag runs to the end of the message.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Thinking,
    Step,
    Count,
    Reflection,
    Reward,
    Answer,
    Caption,
    Report,
    Prose,
}

impl SegmentKind {
    /// Every kind that has a tag on the wire, in grammar order.
    pub const TAGGED: [SegmentKind; 8] = [
        SegmentKind::Thinking,
        SegmentKind::Step,
        SegmentKind::Count,
        SegmentKind::Reflection,
        SegmentKind::Reward,
        SegmentKind::Answer,
        SegmentKind::Caption,
        SegmentKind::Report,
    ];

    pub fn tag_name(self) -> Option<&'static str> {
        Some(match self {
            SegmentKind::Thinking => "thinking",
            SegmentKind::Step => "step",
            SegmentKind::Count => "count",
            SegmentKind::Reflection => "reflection",
            SegmentKind::Reward => "reward",
            SegmentKind::Answer => "answer",
            SegmentKind::Caption => "caption",
            SegmentKind::Report => "report",
            SegmentKind::Prose => return None,
        })
    }

    /// Maps a wire tag name to its kind. Unknown names are not tags.
    pub fn from_tag_name(name: &str) -> Option<Self> {
        Self::TAGGED
            .into_iter()
            .find(|kind| kind.tag_name() == Some(name))
    }

    fn is_numeric(self) -> bool {
        matches!(self, SegmentKind::Reward | SegmentKind::Count)
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag_name().unwrap_or("prose"))
    }
}

/// One parsed unit of an agent response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedSegment {
    pub kind: SegmentKind,
    pub body: String,
    /// Present iff `kind` is reward or count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric: Option<f64>,
}

impl TaggedSegment {
    pub fn prose(body: impl Into<String>) -> Self {
        Self {
            kind: SegmentKind::Prose,
            body: body.into(),
            numeric: None,
        }
    }

    /// Builds a tagged segment, validating the numeric body of reward/count.
    pub fn tagged(kind: SegmentKind, body: impl Into<String>) -> Result<Self, String> {
        let body = body.into();
        let numeric = if kind.is_numeric() {
            Some(parse_numeric(kind, &body)?)
        } else {
            None
        };
        Ok(Self {
            kind,
            body,
            numeric,
        })
    }

    pub fn is(&self, kind: SegmentKind) -> bool {
        self.kind == kind
    }
}

fn parse_numeric(kind: SegmentKind, body: &str) -> Result<f64, String> {
    let trimmed = body.trim();
    match kind {
        SegmentKind::Reward => match trimmed.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("reward body {trimmed:?} is not a number")),
        },
        SegmentKind::Count => trimmed
            .parse::<u64>()
            .map(|n| n as f64)
            .map_err(|_| format!("count body {trimmed:?} is not a non-negative integer")),
        _ => unreachable!("only reward and count carry numerics"),
    }
}

/// A non-fatal problem found while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Byte offset of the offending opening tag.
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Parsed {
    pub segments: Vec<TaggedSegment>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses a response into segments. Total: never fails.
pub fn parse_segments(text: &str) -> Vec<TaggedSegment> {
    parse_with_diagnostics(text).segments
}

pub fn parse_with_diagnostics(text: &str) -> Parsed {
    let mut out = Parsed::default();
    let mut prose = String::new();
    let mut cursor = 0;
    let mut search = 0;

    while let Some(rel) = text[search..].find('<') {
        let lt = search + rel;
        let Some((kind, open_len)) = match_open_tag(&text[lt..]) else {
            search = lt + 1;
            continue;
        };
        let name = kind.tag_name().unwrap_or_default();
        let body_start = lt + open_len;
        let close = format!("</{name}>");
        let (body, end) = match text[body_start..].find(&close) {
            Some(r) => (
                &text[body_start..body_start + r],
                body_start + r + close.len(),
            ),
            None => (&text[body_start..], text.len()),
        };

        prose.push_str(&text[cursor..lt]);
        match TaggedSegment::tagged(kind, body) {
            Ok(segment) => {
                if !prose.is_empty() {
                    out.segments
                        .push(TaggedSegment::prose(std::mem::take(&mut prose)));
                }
                out.segments.push(segment);
            }
            Err(message) => {
                prose.push_str(&text[lt..end]);
                out.diagnostics.push(Diagnostic {
                    offset: lt,
                    message,
                });
            }
        }
        cursor = end;
        search = end;
    }

    prose.push_str(&text[cursor..]);
    if !prose.is_empty() {
        out.segments.push(TaggedSegment::prose(prose));
    }
    out
}

fn match_open_tag(s: &str) -> Option<(SegmentKind, usize)> {
    let rest = s.strip_prefix('<')?;
    let gt = rest.find('>')?;
    let kind = SegmentKind::from_tag_name(&rest[..gt])?;
    Some((kind, gt + 2))
}

pub fn serialize_segments(segments: &[TaggedSegment]) -> String {
    let mut out = String::new();
    for segment in segments {
        write_segment(&mut out, segment);
    }
    out
}

fn write_segment(out: &mut String, segment: &TaggedSegment) {
    match segment.kind.tag_name() {
        Some(name) => {
            out.push('<');
            out.push_str(name);
            out.push('>');
            out.push_str(&segment.body);
            out.push_str("</");
            out.push_str(name);
            out.push('>');
        }
        None => out.push_str(&segment.body),
    }
}

/// Serializes segments, dropping every segment of the given kinds.
pub fn serialize_without(segments: &[TaggedSegment], drop: &[SegmentKind]) -> String {
    let mut out = String::new();
    for segment in segments.iter().filter(|s| !drop.contains(&s.kind)) {
        write_segment(&mut out, segment);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("reward {value} is outside [0, 1]")]
pub struct RewardRangeError {
    pub value: f64,
}

/// Last reward wins. Out-of-range values are errors, never clamped.
pub fn extract_reward(segments: &[TaggedSegment]) -> Result<Option<f64>, RewardRangeError> {
    let Some(value) = segments
        .iter()
        .rev()
        .find(|s| s.kind == SegmentKind::Reward)
        .and_then(|s| s.numeric)
    else {
        return Ok(None);
    };
    if (0.0..=1.0).contains(&value) {
        Ok(Some(value))
    } else {
        Err(RewardRangeError { value })
    }
}

/// The last agent-reported `<count>` value, if any.
pub fn extract_count(segments: &[TaggedSegment]) -> Option<u64> {
    segments
        .iter()
        .rev()
        .find(|s| s.kind == SegmentKind::Count)
        .and_then(|s| s.numeric)
        .map(|v| v as u64)
}

/// Body of the last segment of `kind`.
pub fn last_body(segments: &[TaggedSegment], kind: SegmentKind) -> Option<&str> {
    segments
        .iter()
        .rev()
        .find(|s| s.kind == kind)
        .map(|s| s.body.as_str())
}

pub fn count_kind(segments: &[TaggedSegment], kind: SegmentKind) -> usize {
    segments.iter().filter(|s| s.kind == kind).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(kind: SegmentKind, body: &str) -> TaggedSegment {
        TaggedSegment::tagged(kind, body).unwrap()
    }

    #[test]
    fn parses_thinking_step_count() {
        let got = parse_segments("<thinking>plan</thinking><step>do X</step><count>19</count>");
        assert_eq!(
            got,
            vec![
                seg(SegmentKind::Thinking, "plan"),
                seg(SegmentKind::Step, "do X"),
                seg(SegmentKind::Count, "19"),
            ]
        );
        assert_eq!(got[2].numeric, Some(19.0));
    }

    #[test]
    fn parses_reward() {
        let got = parse_segments("<reward>0.8</reward>");
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].kind, SegmentKind::Reward);
        assert_eq!(got[0].numeric, Some(0.8));
    }

    #[test]
    fn untagged_text_is_prose() {
        assert_eq!(
            parse_segments("no tags at all"),
            vec![TaggedSegment::prose("no tags at all")]
        );
        assert!(parse_segments("").is_empty());
    }

    #[test]
    fn unclosed_trailing_tag_runs_to_end() {
        let got = parse_segments("intro <answer>partial answ");
        assert_eq!(
            got,
            vec![
                TaggedSegment::prose("intro "),
                seg(SegmentKind::Answer, "partial answ"),
            ]
        );
    }

    #[test]
    fn nested_open_tag_is_literal() {
        let got = parse_segments("<thinking>a <step>b</step> c</thinking>");
        assert_eq!(got, vec![seg(SegmentKind::Thinking, "a <step>b</step> c")]);
    }

    #[test]
    fn unknown_tags_stay_in_prose() {
        let text = "<evaluation>ok</evaluation><step>s</step>";
        let got = parse_segments(text);
        assert_eq!(
            got,
            vec![
                TaggedSegment::prose("<evaluation>ok</evaluation>"),
                seg(SegmentKind::Step, "s"),
            ]
        );
        assert_eq!(serialize_segments(&got), text);
    }

    #[test]
    fn tag_names_are_case_sensitive() {
        let got = parse_segments("<Reward>0.9</Reward>");
        assert_eq!(got, vec![TaggedSegment::prose("<Reward>0.9</Reward>")]);
    }

    #[test]
    fn malformed_numeric_becomes_prose_with_diagnostic() {
        let parsed = parse_with_diagnostics("a<reward>high</reward>b<count>-2</count>");
        assert_eq!(
            parsed.segments,
            vec![TaggedSegment::prose(
                "a<reward>high</reward>b<count>-2</count>"
            )]
        );
        assert_eq!(parsed.diagnostics.len(), 2);
        assert_eq!(parsed.diagnostics[0].offset, 1);
    }

    #[test]
    fn reward_extraction() {
        assert_eq!(
            extract_reward(&parse_segments("<reward>0.85</reward>")),
            Ok(Some(0.85))
        );
        assert_eq!(
            extract_reward(&parse_segments("<thinking>x</thinking>")),
            Ok(None)
        );
        let many =
            parse_segments("<reward>0.4</reward><reflection>…</reflection><reward>0.7</reward>");
        assert_eq!(extract_reward(&many), Ok(Some(0.7)));
        let err = extract_reward(&parse_segments("<reward>1.5</reward>")).unwrap_err();
        assert_eq!(err.value, 1.5);
        assert!(err.to_string().contains("1.5"));
    }

    #[test]
    fn serializes_single_segments() {
        assert_eq!(
            serialize_segments(&[seg(SegmentKind::Answer, "done")]),
            "<answer>done</answer>"
        );
        assert_eq!(
            serialize_segments(&[seg(SegmentKind::Count, "19")]),
            "<count>19</count>"
        );
    }

    #[test]
    fn serialize_without_drops_kinds() {
        let segs = parse_segments("<thinking>secret</thinking><step>visible</step>");
        assert_eq!(
            serialize_without(&segs, &[SegmentKind::Thinking]),
            "<step>visible</step>"
        );
    }

    fn tagged_segment() -> impl Strategy<Value = TaggedSegment> {
        let text_kinds = prop::sample::select(vec![
            SegmentKind::Thinking,
            SegmentKind::Step,
            SegmentKind::Reflection,
            SegmentKind::Answer,
            SegmentKind::Caption,
            SegmentKind::Report,
        ]);
        let text = (text_kinds, "[a-zA-Z0-9 .,\n<>/]{0,24}")
            .prop_filter("body must not close its own tag", |(kind, body)| {
                !body.contains(&format!("</{}>", kind.tag_name().unwrap()))
            })
            .prop_map(|(kind, body)| TaggedSegment::tagged(kind, body).unwrap());
        let reward = (0u32..=100, " ?", " ?").prop_map(|(v, l, r)| {
            TaggedSegment::tagged(SegmentKind::Reward, format!("{l}{}{r}", v as f64 / 100.0))
                .unwrap()
        });
        let count = (0u64..50)
            .prop_map(|n| TaggedSegment::tagged(SegmentKind::Count, n.to_string()).unwrap());
        prop_oneof![4 => text, 1 => reward, 1 => count]
    }

    fn segment_list() -> impl Strategy<Value = Vec<TaggedSegment>> {
        let item = prop_oneof![
            3 => tagged_segment(),
            1 => "[a-zA-Z0-9 .,\n>/]{1,24}".prop_map(TaggedSegment::prose),
        ];
        prop::collection::vec(item, 0..12).prop_map(|segs| {
            // adjacent prose runs would merge on parse
            let mut out: Vec<TaggedSegment> = Vec::new();
            for s in segs {
                if s.kind == SegmentKind::Prose
                    && out.last().is_some_and(|l| l.kind == SegmentKind::Prose)
                {
                    continue;
                }
                out.push(s);
            }
            out
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn parse_inverts_serialize(segs in segment_list()) {
            let text = serialize_segments(&segs);
            prop_assert_eq!(parse_segments(&text), segs);
        }

        #[test]
        fn serialize_inverts_parse_on_any_text(text in "[a-z<>/ 0-9.]{0,60}|.{0,60}") {
            let segs = parse_segments(&text);
            prop_assert_eq!(parse_segments(&serialize_segments(&segs)), segs.clone());
            // order and reward bound
            if let Ok(Some(r)) = extract_reward(&segs) {
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn closed_input_round_trips_byte_identically(segs in segment_list()) {
            let text = serialize_segments(&segs);
            prop_assert_eq!(serialize_segments(&parse_segments(&text)), text);
        }
    }
}
