//! Job lifecycle states and the transition relation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Submitted,
    Waiting,
    Ready,
    Scheduled,
    Running,
    DoneOk,
    DoneFailed,
    Aborted,
    Cancelled,
    Cleared,
}

/// Color a monitor shows for a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplayColor {
    Blue,
    Green,
    Red,
    Orange,
    Gray,
    Neutral,
}

impl DisplayColor {
    pub fn as_str(self) -> &'static str {
        match self {
            DisplayColor::Blue => "blue",
            DisplayColor::Green => "green",
            DisplayColor::Red => "red",
            DisplayColor::Orange => "orange",
            DisplayColor::Gray => "gray",
            DisplayColor::Neutral => "neutral",
        }
    }
}

impl fmt::Display for DisplayColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl JobState {
    pub const ALL: [JobState; 10] = [
        JobState::Submitted,
        JobState::Waiting,
        JobState::Ready,
        JobState::Scheduled,
        JobState::Running,
        JobState::DoneOk,
        JobState::DoneFailed,
        JobState::Aborted,
        JobState::Cancelled,
        JobState::Cleared,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Submitted => "SUBMITTED",
            JobState::Waiting => "WAITING",
            JobState::Ready => "READY",
            JobState::Scheduled => "SCHEDULED",
            JobState::Running => "RUNNING",
            JobState::DoneOk => "DONE_OK",
            JobState::DoneFailed => "DONE_FAILED",
            JobState::Aborted => "ABORTED",
            JobState::Cancelled => "CANCELLED",
            JobState::Cleared => "CLEARED",
        }
    }

    /// States from which the job can still run: not done, aborted,
    /// cancelled or cleared.
    pub fn is_active(self) -> bool {
        matches!(
            self,
            JobState::Submitted
                | JobState::Waiting
                | JobState::Ready
                | JobState::Scheduled
                | JobState::Running
        )
    }

    /// The next state on the normal path, before completion.
    pub fn next_stage(self) -> Option<JobState> {
        match self {
            JobState::Submitted => Some(JobState::Waiting),
            JobState::Waiting => Some(JobState::Ready),
            JobState::Ready => Some(JobState::Scheduled),
            JobState::Scheduled => Some(JobState::Running),
            _ => None,
        }
    }

    pub fn may_transition(self, to: JobState) -> bool {
        use JobState::*;
        match (self, to) {
            (Submitted, Waiting) | (Waiting, Ready) | (Ready, Scheduled) | (Scheduled, Running) => {
                true
            }
            (Running, DoneOk | DoneFailed) => true,
            (from, Aborted | Cancelled) => from.is_active(),
            (DoneOk | DoneFailed, Cleared) => true,
            _ => false,
        }
    }

    pub fn color(self) -> DisplayColor {
        match self {
            JobState::Running => DisplayColor::Blue,
            JobState::DoneOk => DisplayColor::Green,
            JobState::Aborted => DisplayColor::Red,
            JobState::Cancelled => DisplayColor::Orange,
            JobState::Cleared => DisplayColor::Gray,
            _ => DisplayColor::Neutral,
        }
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown job state {0:?}")]
pub struct UnknownState(pub String);

impl FromStr for JobState {
    type Err = UnknownState;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JobState::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| UnknownState(s.to_owned()))
    }
}
