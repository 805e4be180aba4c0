//! Combining per-detector votes into alerts.

use serde::{Deserialize, Serialize};

/// One detector's contribution to the current event.
#[derive(Debug, Clone, PartialEq)]
pub struct Ballot {
    pub detector: String,
    pub binary: u8,
    pub raw: f64,
}

/// Scores cast for the event being processed. Emptied by every vote.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreBoard {
    ballots: Vec<Ballot>,
}

impl ScoreBoard {
    pub fn new() -> Self {
        ScoreBoard::default()
    }

    pub fn push(&mut self, detector: impl Into<String>, binary: u8, raw: f64) {
        self.ballots.push(Ballot { detector: detector.into(), binary, raw });
    }

    pub fn ballots(&self) -> &[Ballot] {
        &self.ballots
    }

    pub fn scores(&self) -> Vec<u8> {
        self.ballots.iter().map(|b| b.binary).collect()
    }

    pub fn len(&self) -> usize {
        self.ballots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ballots.is_empty()
    }

    pub fn clear(&mut self) {
        self.ballots.clear();
    }
}

impl FromIterator<u8> for ScoreBoard {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        ScoreBoard {
            ballots: iter
                .into_iter()
                .enumerate()
                .map(|(i, b)| Ballot { detector: format!("d{i}"), binary: b, raw: b as f64 })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    #[serde(rename = "eventId")]
    pub event_id: String,
    #[serde(rename = "userId")]
    pub user_id: String,
    #[serde(rename = "eventDate")]
    pub event_date: String,
    pub votes: u32,
}

/// Decides whether a set of binary scores constitutes an alert, returning
/// the positive count when it does.
pub trait VotingStrategy: Send + Sync {
    fn decide(&self, scores: &[u8]) -> Option<u32>;
}

/// Strictly more than half of the votes cast.
#[derive(Debug, Clone, Copy, Default)]
pub struct MajorityVote;

impl VotingStrategy for MajorityVote {
    fn decide(&self, scores: &[u8]) -> Option<u32> {
        if scores.is_empty() {
            return None;
        }
        let count = scores.iter().filter(|&&s| s == 1).count();
        (count > scores.len() / 2).then_some(count as u32)
    }
}

/// Votes on the board, appends an alert when the strategy fires, and clears
/// the board. An empty board is left alone.
pub fn vote_with(
    strategy: &dyn VotingStrategy,
    scores: &mut ScoreBoard,
    alerts: &mut Vec<Alert>,
    event_id: &str,
    event_date: &str,
    user_id: &str,
) -> Option<Alert> {
    if scores.is_empty() {
        return None;
    }
    let decision = strategy.decide(&scores.scores());
    scores.clear();
    let votes = decision?;
    let alert = Alert {
        event_id: event_id.to_string(),
        user_id: user_id.to_string(),
        event_date: event_date.to_string(),
        votes,
    };
    alerts.push(alert.clone());
    Some(alert)
}

pub fn majority_vote(
    scores: &mut ScoreBoard,
    alerts: &mut Vec<Alert>,
    event_id: &str,
    event_date: &str,
    user_id: &str,
) -> Option<Alert> {
    vote_with(&MajorityVote, scores, alerts, event_id, event_date, user_id)
}
