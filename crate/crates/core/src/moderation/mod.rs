//! Pre-publication screening and the moderator flag workflow.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::discourse::PostKind;
use crate::error::{PdsError, Result};
use crate::experiments::permissions::Action;
use crate::ids::{FlagId, PostId, UserId};
use crate::store::{ExperimentScope, Platform};

pub const BLOCK_THRESHOLD: f64 = 0.5;
pub const CLASSIFIER_UNAVAILABLE: &str = "classifier_unavailable";

const SHIPPED_LEXICON: &str = include_str!("../../assets/lexicon.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Allow,
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModerationResult {
    pub verdict: Verdict,
    pub score: f64,
    pub matched_terms: Vec<String>,
    pub classifier_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    /// In [0, 1].
    pub score: f64,
    pub matched_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("classifier unavailable: {0}")]
pub struct ScorerError(pub String);

/// A content classifier. Implementations must be deterministic per version.
pub trait ContentScorer: Send + Sync {
    fn version(&self) -> String;
    fn assess(&self, body: &str) -> std::result::Result<Assessment, ScorerError>;
}

/// Lowercases and splits on anything that is not a letter or an ASCII
/// digit. The long s folds to `s`.
pub fn tokenize(body: &str) -> Vec<String> {
    body.to_lowercase()
        .replace('\u{17f}', "s")
        .split(|c: char| !(c.is_alphabetic() || c.is_ascii_digit()))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Whole-word lexicon matcher. Scores 1.0 on any hit, else 0.0.
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    terms: Vec<Vec<String>>,
    version: String,
}

impl LexiconScorer {
    pub fn parse(text: &str) -> Self {
        let mut seen = BTreeSet::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let words = tokenize(line);
            if !words.is_empty() {
                seen.insert(words);
            }
        }
        let terms: Vec<Vec<String>> = seen.into_iter().collect();
        let mut hasher = Sha256::new();
        for t in &terms {
            hasher.update(t.join(" ").as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let version = format!(
            "lexicon-{}",
            digest[..6]
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect::<String>()
        );
        Self { terms, version }
    }

    pub fn shipped() -> Self {
        Self::parse(SHIPPED_LEXICON)
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// Terms as written in the lexicon, multi-word terms joined by a space.
    pub fn terms(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.join(" ")).collect()
    }
}

impl ContentScorer for LexiconScorer {
    fn version(&self) -> String {
        self.version.clone()
    }

    fn assess(&self, body: &str) -> std::result::Result<Assessment, ScorerError> {
        let tokens = tokenize(body);
        let matched: Vec<String> = self
            .terms
            .iter()
            .filter(|term| tokens.windows(term.len()).any(|w| w == term.as_slice()))
            .map(|term| term.join(" "))
            .collect();
        Ok(Assessment {
            score: if matched.is_empty() { 0.0 } else { 1.0 },
            matched_terms: matched,
        })
    }
}

/// Always fails. Stands in for a classifier that is down.
#[derive(Debug, Clone, Default)]
pub struct UnavailableScorer;

impl ContentScorer for UnavailableScorer {
    fn version(&self) -> String {
        "unavailable".into()
    }

    fn assess(&self, _body: &str) -> std::result::Result<Assessment, ScorerError> {
        Err(ScorerError("disabled".into()))
    }
}

#[derive(Clone)]
pub struct Moderator {
    scorer: Arc<dyn ContentScorer>,
}

impl std::fmt::Debug for Moderator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Moderator")
            .field("version", &self.scorer.version())
            .finish()
    }
}

impl Moderator {
    pub fn new(scorer: Arc<dyn ContentScorer>) -> Self {
        Self { scorer }
    }

    pub fn classifier_version(&self) -> String {
        self.scorer.version()
    }

    /// Fails closed: a scorer error blocks.
    pub fn check_content(&self, body: &str) -> ModerationResult {
        let classifier_version = self.scorer.version();
        match self.scorer.assess(body) {
            Ok(a) => {
                let score = a.score.clamp(0.0, 1.0);
                let block = score >= BLOCK_THRESHOLD || !a.matched_terms.is_empty();
                ModerationResult {
                    verdict: if block {
                        Verdict::Block
                    } else {
                        Verdict::Allow
                    },
                    score,
                    reason: block.then(|| "lexicon_match".to_string()),
                    matched_terms: a.matched_terms,
                    classifier_version,
                }
            }
            Err(e) => {
                tracing::warn!(error = %e, "classifier failed; blocking");
                ModerationResult {
                    verdict: Verdict::Block,
                    score: 1.0,
                    matched_terms: Vec::new(),
                    classifier_version,
                    reason: Some(CLASSIFIER_UNAVAILABLE.into()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagState {
    Open,
    Dismissed,
    Actioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagResolution {
    Dismiss,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub id: FlagId,
    pub post: PostId,
    pub raised_by: UserId,
    pub reason: String,
    pub state: FlagState,
    pub created_at: DateTime<Utc>,
    pub resolved_by: Option<UserId>,
    pub resolved_at: Option<DateTime<Utc>>,
}

pub const MAX_FLAG_REASON: usize = 500;

fn moderation_action(kind: PostKind) -> Action {
    match kind {
        PostKind::Comment => Action::DeleteComment,
        PostKind::Original | PostKind::Repost => Action::DeleteThread,
    }
}

impl Platform {
    pub fn check_content(&self, body: &str) -> ModerationResult {
        self.moderator.check_content(body)
    }

    pub fn flag_post(&self, moderator: UserId, post: PostId, reason: &str) -> Result<Flag> {
        let reason = reason.trim();
        if reason.is_empty() {
            return Err(PdsError::EmptyReason);
        }
        if crate::text::scalar_len(reason) > MAX_FLAG_REASON {
            return Err(PdsError::FieldTooLong {
                field: "reason",
                max: MAX_FLAG_REASON,
            });
        }
        let now = self.now();
        let mut st = self.write();
        let experiment = st.experiment_of_post(post)?;
        let scope = st.scope(experiment, moderator)?;
        let kind = st
            .partition(&scope)
            .posts
            .get(&post)
            .ok_or(PdsError::PostNotFound)?
            .kind;
        scope.authorize(moderation_action(kind))?;
        let id = st.ids.next_flag();
        let flag = Flag {
            id,
            post,
            raised_by: moderator,
            reason: reason.to_string(),
            state: FlagState::Open,
            created_at: now,
            resolved_by: None,
            resolved_at: None,
        };
        st.partition_mut(&scope).flags.insert(id, flag.clone());
        st.flag_index.insert(id, experiment);
        Ok(flag)
    }

    pub fn resolve_flag(
        &self,
        actor: UserId,
        flag: FlagId,
        action: FlagResolution,
    ) -> Result<Flag> {
        let now = self.now();
        let mut st = self.write();
        let experiment = *st.flag_index.get(&flag).ok_or(PdsError::FlagNotFound)?;
        let scope = st.scope(experiment, actor)?;
        let current = st.partition(&scope).flags[&flag].clone();
        let kind = st
            .partition(&scope)
            .posts
            .get(&current.post)
            .ok_or(PdsError::PostNotFound)?
            .kind;
        scope.authorize(moderation_action(kind))?;
        if current.state != FlagState::Open {
            return Err(PdsError::FlagNotOpen);
        }
        if action == FlagResolution::Delete {
            self.delete_post_locked(&mut st, &scope, current.post)?;
        }
        let entry = st
            .partition_mut(&scope)
            .flags
            .get_mut(&flag)
            .expect("flag exists");
        entry.state = match action {
            FlagResolution::Dismiss => FlagState::Dismissed,
            FlagResolution::Delete => FlagState::Actioned,
        };
        entry.resolved_by = Some(actor);
        entry.resolved_at = Some(now);
        Ok(entry.clone())
    }

    /// Flags of the experiment, newest first. Moderation staff only.
    pub fn flags(&self, scope: &ExperimentScope, state: Option<FlagState>) -> Result<Vec<Flag>> {
        if !(scope.can(Action::DeleteComment) || scope.can(Action::DeleteThread)) {
            return Err(PdsError::forbidden(Some(scope.role()), "list_flags"));
        }
        let st = self.read();
        Ok(st
            .partition(scope)
            .flags
            .values()
            .rev()
            .filter(|f| state.is_none_or(|s| f.state == s))
            .cloned()
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::permissions::Role;
    use crate::testing::Fixture;

    #[test]
    fn lexicon_examples() {
        let m = Moderator::new(Arc::new(LexiconScorer::shipped()));
        let ok = m.check_content("have a nice day");
        assert_eq!(ok.verdict, Verdict::Allow);
        assert_eq!(ok.score, 0.0);
        assert_eq!(m.check_content("").verdict, Verdict::Allow);

        let term = LexiconScorer::shipped().terms()[0].clone();
        let bad = m.check_content(&format!("well {} then", term.to_uppercase()));
        assert_eq!(bad.verdict, Verdict::Block);
        assert_eq!(bad.matched_terms, vec![term]);
        assert_eq!(bad.score, 1.0);
    }

    #[test]
    fn word_boundaries() {
        let m = Moderator::new(Arc::new(LexiconScorer::parse("ass\npiss off")));
        assert_eq!(
            m.check_content("classic assessment").verdict,
            Verdict::Allow
        );
        assert_eq!(m.check_content("kick ass!").verdict, Verdict::Block);
        assert_eq!(m.check_content("just_ass_").verdict, Verdict::Block);
        assert_eq!(m.check_content("PISS   off").verdict, Verdict::Block);
        assert_eq!(m.check_content("piss on off").verdict, Verdict::Allow);
        assert_eq!(m.check_content("ass²").verdict, Verdict::Block);
        assert_eq!(m.check_content("\u{17f}hit ass").verdict, Verdict::Block);
    }

    #[test]
    fn version_tracks_contents() {
        let a = LexiconScorer::parse("one\ntwo");
        let b = LexiconScorer::parse("# comment\ntwo\nONE\n");
        let c = LexiconScorer::parse("one");
        assert_eq!(a.version(), b.version());
        assert_ne!(a.version(), c.version());
    }

    #[test]
    fn fail_closed() {
        let m = Moderator::new(Arc::new(UnavailableScorer));
        let r = m.check_content("have a nice day");
        assert_eq!(r.verdict, Verdict::Block);
        assert_eq!(r.reason.as_deref(), Some(CLASSIFIER_UNAVAILABLE));

        let f = Fixture::with_moderator(m);
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "S");
        let err = f.platform.create_post(owner, exp, "hello").unwrap_err();
        assert!(
            matches!(err, PdsError::ModerationRejected { ref reason, .. } if reason == CLASSIFIER_UNAVAILABLE)
        );
    }

    #[test]
    fn scored_threshold() {
        struct Fixed(f64);
        impl ContentScorer for Fixed {
            fn version(&self) -> String {
                "fixed".into()
            }
            fn assess(&self, _: &str) -> std::result::Result<Assessment, ScorerError> {
                Ok(Assessment {
                    score: self.0,
                    matched_terms: vec![],
                })
            }
        }
        assert_eq!(
            Moderator::new(Arc::new(Fixed(0.49)))
                .check_content("x")
                .verdict,
            Verdict::Allow
        );
        assert_eq!(
            Moderator::new(Arc::new(Fixed(0.5)))
                .check_content("x")
                .verdict,
            Verdict::Block
        );
    }

    #[test]
    fn flag_workflow() {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "S");
        let moder = f.member(exp, "moder", Role::ContentModerator);
        let regular = f.member(exp, "reg", Role::Regular);
        let post = f
            .platform
            .create_post(regular, exp, "questionable")
            .unwrap();

        assert!(matches!(
            f.platform.flag_post(regular, post.id, "spam").unwrap_err(),
            PdsError::Forbidden { .. }
        ));
        let flag = f.platform.flag_post(moder, post.id, "spam").unwrap();
        assert_eq!(flag.state, FlagState::Open);
        let resolved = f
            .platform
            .resolve_flag(owner, flag.id, FlagResolution::Delete)
            .unwrap();
        assert_eq!(resolved.state, FlagState::Actioned);
        let scope = f.platform.scoped(exp, owner).unwrap();
        assert!(f.platform.post(&scope, post.id).unwrap().deleted);
        assert_eq!(
            f.platform
                .resolve_flag(owner, flag.id, FlagResolution::Dismiss)
                .unwrap_err(),
            PdsError::FlagNotOpen
        );

        let other = f.platform.create_post(regular, exp, "fine").unwrap();
        let flag = f.platform.flag_post(moder, other.id, "check").unwrap();
        let dismissed = f
            .platform
            .resolve_flag(moder, flag.id, FlagResolution::Dismiss)
            .unwrap();
        assert_eq!(dismissed.state, FlagState::Dismissed);
        assert!(!f.platform.post(&scope, other.id).unwrap().deleted);
        assert_eq!(f.platform.flags(&scope, None).unwrap().len(), 2);
        let reg_scope = f.platform.scoped(exp, regular).unwrap();
        assert!(f.platform.flags(&reg_scope, None).is_err());
    }
}
