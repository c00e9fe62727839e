//! Assessors: the judgement step of consolidation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::kref::{is_token, Kref};
use crate::retrieval::tokenize;
use crate::store::{split_list, EdgeType, Metadata, RevisionRef, META_TOPICS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentInput {
    pub revision_ref: RevisionRef,
    pub summary: String,
    pub metadata: Metadata,
    pub created_at: Timestamp,
    /// Bundles whose CONTAINS edges include this item.
    pub bundle_context: Vec<Kref>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub revision_ref: RevisionRef,
    pub relevance_score: f64,
    pub should_deprecate: bool,
    #[serde(default)]
    pub deprecation_reason: String,
    #[serde(default)]
    pub suggested_tags: Vec<String>,
    #[serde(default)]
    pub metadata_updates: BTreeMap<String, String>,
    #[serde(default)]
    pub related_memories: Vec<(RevisionRef, EdgeType)>,
}

impl Assessment {
    /// A keep-everything assessment.
    pub fn keep(r: &RevisionRef, relevance_score: f64) -> Self {
        Assessment {
            revision_ref: r.clone(),
            relevance_score,
            should_deprecate: false,
            deprecation_reason: String::new(),
            suggested_tags: Vec::new(),
            metadata_updates: BTreeMap::new(),
            related_memories: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.relevance_score) {
            return Err(format!(
                "relevance score {} outside [0, 1]",
                self.relevance_score
            ));
        }
        if self.should_deprecate && self.deprecation_reason.trim().is_empty() {
            return Err("deprecation recommended without a reason".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("assessor failure: {0}")]
pub struct AssessorError(pub String);

/// Judges a batch of memories. Implementations must return one assessment
/// per input and should be conservative: when in doubt, keep.
pub trait Assessor: fmt::Debug {
    fn assess(&self, batch: &[AssessmentInput]) -> Result<Vec<Assessment>, AssessorError>;
}

/// Offline deterministic assessor.
///
/// A memory is flagged when another memory in the same batch has the same
/// normalized non-empty summary and is newer (later creation time, then
/// higher seq). Relevance grows with distinct token count, saturating at 32.
/// Topic tokens are suggested as tags.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleAssessor;

pub fn default_assessor() -> RuleAssessor {
    RuleAssessor
}

fn normalized(summary: &str) -> String {
    tokenize(summary).join(" ")
}

impl Assessor for RuleAssessor {
    fn assess(&self, batch: &[AssessmentInput]) -> Result<Vec<Assessment>, AssessorError> {
        let norms: Vec<String> = batch.iter().map(|m| normalized(&m.summary)).collect();
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let distinct: BTreeSet<String> = tokenize(&m.summary).into_iter().collect();
                let relevance = (distinct.len() as f64 / 32.0).min(1.0);
                let mut a = Assessment::keep(&m.revision_ref, relevance);
                let newer = batch.iter().enumerate().find(|(j, o)| {
                    *j != i
                        && !norms[i].is_empty()
                        && norms[*j] == norms[i]
                        && (o.created_at, o.revision_ref.seq) > (m.created_at, m.revision_ref.seq)
                });
                if let Some((_, o)) = newer {
                    a.should_deprecate = true;
                    a.deprecation_reason = format!("duplicate of {}", o.revision_ref);
                }
                let tags: BTreeSet<String> = m
                    .metadata
                    .get(META_TOPICS)
                    .map(|t| split_list(t))
                    .unwrap_or_default()
                    .iter()
                    .flat_map(|t| tokenize(t))
                    .filter(|t| is_token(t))
                    .collect();
                a.suggested_tags = tags.into_iter().collect();
                a
            })
            .collect())
    }
}

pub const ASSESSOR_URL_ENV: &str = "DREAM_ASSESSOR_URL";
pub const ASSESSOR_TOKEN_ENV: &str = "DREAM_ASSESSOR_TOKEN";

#[derive(Serialize)]
struct HttpRequest<'a> {
    memories: &'a [AssessmentInput],
}

#[derive(Deserialize)]
struct HttpResponse {
    assessments: Vec<Assessment>,
}

/// Remote assessor over HTTP.
///
/// POSTs `{"memories": [AssessmentInput...]}` as JSON to the configured URL
/// with an optional bearer token and expects `{"assessments": [...]}` back.
#[derive(Clone)]
pub struct HttpAssessor {
    url: String,
    token: Option<String>,
    timeout: Duration,
}

impl fmt::Debug for HttpAssessor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpAssessor")
            .field("url", &self.url)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpAssessor {
    pub fn new(url: impl Into<String>, token: Option<String>) -> Self {
        HttpAssessor {
            url: url.into(),
            token,
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads `DREAM_ASSESSOR_URL` and `DREAM_ASSESSOR_TOKEN`; `None` when no
    /// URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ASSESSOR_URL_ENV).ok().filter(|u| !u.is_empty())?;
        let token = std::env::var(ASSESSOR_TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Some(HttpAssessor::new(url, token))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Assessor for HttpAssessor {
    fn assess(&self, batch: &[AssessmentInput]) -> Result<Vec<Assessment>, AssessorError> {
        let mut req = ureq::post(&self.url).timeout(self.timeout);
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        let resp: HttpResponse = req
            .send_json(HttpRequest { memories: batch })
            .map_err(|e| AssessorError(e.to_string()))?
            .into_json()
            .map_err(|e| AssessorError(format!("bad response body: {e}")))?;
        Ok(resp.assessments)
    }
}
