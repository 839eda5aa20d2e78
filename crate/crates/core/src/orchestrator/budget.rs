//! Per-task step budgets.

use serde::{Deserialize, Serialize};

use crate::tags::{count_kind, extract_count, SegmentKind, TaggedSegment};

pub const DEFAULT_BUDGET: u32 = 20;
pub const EXTENSION_STEPS: u32 = 10;
pub const MAX_EXTENSIONS: u32 = 2;
/// Literal marker an agent writes to ask for more steps.
pub const EXTENSION_MARKER: &str = "<request_steps>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBudget {
    pub initial: u32,
    pub remaining: u32,
    pub extensions_granted: u32,
    pub used: u32,
}

impl StepBudget {
    pub fn new(initial: u32) -> Self {
        Self {
            initial,
            remaining: initial,
            extensions_granted: 0,
            used: 0,
        }
    }

    pub fn cap(&self) -> u32 {
        self.initial + EXTENSION_STEPS * MAX_EXTENSIONS
    }
}

impl Default for StepBudget {
    fn default() -> Self {
        Self::new(DEFAULT_BUDGET)
    }
}

/// What accounting one response did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepAccount {
    pub charged: u32,
    pub refused: u32,
    pub extension_granted: bool,
    pub extension_denied: bool,
    /// The agent's `<count>` when it disagrees with the orchestrator's.
    pub discrepancy: Option<u64>,
}

/// Charges one response against the budget.
///
/// Each `<step>` costs one; a response that calls tools without any `<step>`
/// still costs one, so the budget bounds every acting loop. An extension
/// marker is honoured before charging.
pub fn account_step(
    budget: StepBudget,
    text: &str,
    segments: &[TaggedSegment],
    acting: bool,
) -> (StepBudget, StepAccount) {
    let mut b = budget;
    let mut acc = StepAccount::default();
    if text.contains(EXTENSION_MARKER) {
        if b.extensions_granted < MAX_EXTENSIONS {
            b.extensions_granted += 1;
            b.remaining += EXTENSION_STEPS;
            acc.extension_granted = true;
        } else {
            acc.extension_denied = true;
        }
    }
    let mut steps = count_kind(segments, SegmentKind::Step) as u32;
    if acting && steps == 0 {
        steps = 1;
    }
    acc.charged = steps.min(b.remaining);
    acc.refused = steps - acc.charged;
    b.remaining -= acc.charged;
    b.used += acc.charged;
    if let Some(reported) = extract_count(segments) {
        if reported != u64::from(b.remaining) {
            acc.discrepancy = Some(reported);
        }
    }
    (b, acc)
}
