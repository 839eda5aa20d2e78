//! The evaluation specialist: tool, visual and task assessments produced by
//! the provider under restricted tag grammars, and the reward gate.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::llm::{ChatMessage, ChatProvider, ContentPart, GenerationParams, ProviderError, Role};
use crate::tags::{extract_reward, last_body, parse_with_diagnostics, SegmentKind, TaggedSegment};

pub const TOOL_EVALUATION_PROMPT: &str = include_str!("../assets/prompts/tool_evaluation.txt");
pub const VISUAL_EVALUATION_PROMPT: &str = include_str!("../assets/prompts/visual_evaluation.txt");
pub const TASK_EVALUATION_PROMPT: &str = include_str!("../assets/prompts/task_evaluation.txt");

pub const CONTINUE_THRESHOLD: f64 = 0.8;
pub const ADJUST_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    Continue,
    Adjust,
    Backtrack,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("reward {0} is outside [0, 1]")]
pub struct RewardOutOfRange(pub f64);

/// `continue` at 0.8 and above, `adjust` from 0.5 up to 0.8, `backtrack`
/// below 0.5.
pub fn gate(reward: f64) -> Result<GateDecision, RewardOutOfRange> {
    if !(0.0..=1.0).contains(&reward) {
        return Err(RewardOutOfRange(reward));
    }
    Ok(if reward >= CONTINUE_THRESHOLD {
        GateDecision::Continue
    } else if reward >= ADJUST_THRESHOLD {
        GateDecision::Adjust
    } else {
        GateDecision::Backtrack
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationStage {
    Tool,
    Visual,
    Task,
}

impl EvaluationStage {
    fn allowed(self) -> &'static [SegmentKind] {
        match self {
            EvaluationStage::Tool => &[SegmentKind::Reward, SegmentKind::Reflection],
            EvaluationStage::Visual => &[
                SegmentKind::Thinking,
                SegmentKind::Caption,
                SegmentKind::Reward,
                SegmentKind::Reflection,
            ],
            EvaluationStage::Task => &[
                SegmentKind::Thinking,
                SegmentKind::Report,
                SegmentKind::Reward,
                SegmentKind::Reflection,
            ],
        }
    }

    /// Tool and visual evaluations carry an explicit restriction block, so
    /// untagged text there is a violation too.
    fn allows_prose(self) -> bool {
        self == EvaluationStage::Task
    }

    fn prompt(self) -> &'static str {
        match self {
            EvaluationStage::Tool => TOOL_EVALUATION_PROMPT,
            EvaluationStage::Visual => VISUAL_EVALUATION_PROMPT,
            EvaluationStage::Task => TASK_EVALUATION_PROMPT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolEvaluation {
    pub reward: f64,
    pub reflection: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualEvaluation {
    pub caption: String,
    pub reward: f64,
    pub thinking: String,
    pub reflection: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEvaluation {
    pub report: String,
    pub reward: f64,
}

/// One provider reply and what was wrong with it, if anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationAttempt {
    pub raw: String,
    pub problem: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluationError {
    #[error("{stage:?} evaluation violated its output grammar twice: {problem}")]
    Protocol {
        stage: EvaluationStage,
        problem: String,
    },
    #[error("evaluation precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Result of an evaluation with every attempt kept for the session log.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated<T> {
    pub result: Result<T, EvaluationError>,
    pub attempts: Vec<EvaluationAttempt>,
}

impl<T> Evaluated<T> {
    fn failed(error: EvaluationError) -> Self {
        Self {
            result: Err(error),
            attempts: Vec::new(),
        }
    }
}

/// Checks a reply against the stage grammar and returns its segments.
pub fn check_grammar(stage: EvaluationStage, text: &str) -> Result<Vec<TaggedSegment>, String> {
    let parsed = parse_with_diagnostics(text);
    if let Some(d) = parsed.diagnostics.first() {
        return Err(d.message.clone());
    }
    let allowed = stage.allowed();
    for s in &parsed.segments {
        match s.kind {
            SegmentKind::Prose if stage.allows_prose() || s.body.trim().is_empty() => {}
            SegmentKind::Prose => {
                return Err(format!("untagged text {:?} is not allowed", s.body.trim()))
            }
            k if !allowed.contains(&k) => return Err(format!("<{k}> is not allowed here")),
            _ => {}
        }
    }
    match extract_reward(&parsed.segments) {
        Ok(Some(_)) => Ok(parsed.segments),
        Ok(None) => Err("missing <reward>".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn non_empty(segments: &[TaggedSegment], kind: SegmentKind) -> Option<String> {
    last_body(segments, kind)
        .map(|b| b.trim().to_string())
        .filter(|b| !b.is_empty())
}

/// Runs the evaluator prompt, retrying once with the problem spelled out.
fn run<T>(
    provider: &dyn ChatProvider,
    stage: EvaluationStage,
    context: Vec<ContentPart>,
    build: impl Fn(&[TaggedSegment]) -> Result<T, String>,
) -> Evaluated<T> {
    let mut messages = vec![
        ChatMessage::system(stage.prompt()),
        ChatMessage {
            role: Role::User,
            parts: context,
            tool_call_id: None,
            tool_calls: Vec::new(),
        },
    ];
    let mut attempts = Vec::new();
    for _ in 0..2 {
        let reply = match provider.complete(&messages, &[], &GenerationParams::evaluator()) {
            Ok(r) => r.text,
            Err(e) => {
                return Evaluated {
                    result: Err(e.into()),
                    attempts,
                }
            }
        };
        let outcome = check_grammar(stage, &reply).and_then(|segs| build(&segs));
        match outcome {
            Ok(value) => {
                attempts.push(EvaluationAttempt {
                    raw: reply,
                    problem: None,
                });
                return Evaluated {
                    result: Ok(value),
                    attempts,
                };
            }
            Err(problem) => {
                attempts.push(EvaluationAttempt {
                    raw: reply.clone(),
                    problem: Some(problem.clone()),
                });
                messages.push(ChatMessage::assistant(reply, Vec::new()));
                messages.push(ChatMessage::user(format!(
                    "Your evaluation was rejected: {problem}. Reply again using only the permitted tags."
                )));
            }
        }
    }
    let problem = attempts
        .last()
        .and_then(|a| a.problem.clone())
        .unwrap_or_default();
    Evaluated {
        result: Err(EvaluationError::Protocol { stage, problem }),
        attempts,
    }
}

/// What the tool evaluator sees.
#[derive(Debug, Clone, Copy)]
pub struct ToolEvalContext<'a> {
    pub task: &'a str,
    pub transcript_tail: &'a str,
    pub tool_name: &'a str,
    pub arguments: &'a Map<String, Value>,
    pub result_text: &'a str,
}

impl ToolEvalContext<'_> {
    fn render(&self) -> String {
        format!(
            "Task:\n{}\n\nRecent workflow:\n{}\n\nNewest tool call: {} with inputs {}\n\nTool output:\n{}",
            self.task,
            self.transcript_tail,
            self.tool_name,
            Value::Object(self.arguments.clone()),
            self.result_text
        )
    }
}

pub fn evaluate_tool_call(
    provider: &dyn ChatProvider,
    ctx: &ToolEvalContext<'_>,
) -> Evaluated<ToolEvaluation> {
    run(
        provider,
        EvaluationStage::Tool,
        vec![ContentPart::text(ctx.render())],
        |segs| {
            Ok(ToolEvaluation {
                reward: extract_reward(segs)
                    .ok()
                    .flatten()
                    .expect("grammar checked"),
                reflection: non_empty(segs, SegmentKind::Reflection),
            })
        },
    )
}

pub fn evaluate_visual(
    provider: &dyn ChatProvider,
    image: &[u8],
    media_type: &str,
    context: &str,
) -> Evaluated<VisualEvaluation> {
    if image.is_empty() {
        return Evaluated::failed(EvaluationError::Precondition("image is empty".into()));
    }
    let parts = vec![
        ContentPart::text(context),
        ContentPart::Image {
            media_type: media_type.to_string(),
            bytes: image.to_vec(),
        },
    ];
    run(provider, EvaluationStage::Visual, parts, |segs| {
        Ok(VisualEvaluation {
            caption: non_empty(segs, SegmentKind::Caption).ok_or("missing or empty <caption>")?,
            reward: extract_reward(segs)
                .ok()
                .flatten()
                .expect("grammar checked"),
            thinking: last_body(segs, SegmentKind::Thinking)
                .unwrap_or_default()
                .trim()
                .to_string(),
            reflection: non_empty(segs, SegmentKind::Reflection),
        })
    })
}

pub fn evaluate_task(provider: &dyn ChatProvider, workflow: &str) -> Evaluated<TaskEvaluation> {
    if workflow.trim().is_empty() {
        return Evaluated::failed(EvaluationError::Precondition(
            "workflow transcript is empty".into(),
        ));
    }
    run(
        provider,
        EvaluationStage::Task,
        vec![ContentPart::text(workflow)],
        |segs| {
            Ok(TaskEvaluation {
                report: non_empty(segs, SegmentKind::Report).ok_or("missing or empty <report>")?,
                reward: extract_reward(segs)
                    .ok()
                    .flatten()
                    .expect("grammar checked"),
            })
        },
    )
}
