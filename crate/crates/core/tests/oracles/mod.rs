//! Reference models used by the integration and acceptance suites. Nothing
//! here calls into the code under test except to drive it; every expected
//! value is recomputed from the model.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use pds_core::feeds::NotificationKind;
use pds_core::ids::{ExperimentId, PostId, UserId};
use pds_core::testing::Fixture;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use regex::Regex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Original,
    Comment,
    Repost,
}

#[derive(Debug, Clone)]
pub struct MPost {
    pub id: PostId,
    pub author: UserId,
    pub kind: Kind,
    pub parent: Option<PostId>,
    pub repost_of: Option<PostId>,
    pub body: String,
    pub at: DateTime<Utc>,
    pub deleted: bool,
}

/// Hashtags by whitespace tokenization: a token starting with `#` names
/// the run of `[A-Za-z0-9_]` after it when that run is 1..=64 long.
pub fn tags_of(body: &str) -> BTreeSet<String> {
    body.split(char::is_whitespace)
        .filter_map(|tok| tok.strip_prefix('#'))
        .filter_map(|rest| {
            let run: String = rest
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
                .collect();
            (1..=64)
                .contains(&run.len())
                .then(|| run.to_ascii_lowercase())
        })
        .collect()
}

#[derive(Debug, Default, Clone)]
pub struct Model {
    pub posts: BTreeMap<PostId, MPost>,
    pub follows: BTreeSet<(UserId, UserId)>,
    pub likes: BTreeSet<(UserId, PostId)>,
    pub members: BTreeSet<UserId>,
    pub notifications: BTreeMap<(UserId, NotificationKind), usize>,
}

impl Model {
    pub fn visible(&self, id: PostId) -> bool {
        let Some(p) = self.posts.get(&id) else {
            return false;
        };
        !p.deleted
            && p.parent.is_none_or(|q| self.visible(q))
            && p.repost_of.is_none_or(|q| self.visible(q))
    }

    /// Ids satisfying `pred`, newest first by (created_at, id).
    pub fn sorted(&self, pred: impl Fn(&MPost) -> bool) -> Vec<PostId> {
        let mut hits: Vec<&MPost> = self
            .posts
            .values()
            .filter(|p| self.visible(p.id) && pred(p))
            .collect();
        hits.sort_by_key(|p| std::cmp::Reverse((p.at, p.id)));
        hits.into_iter().map(|p| p.id).collect()
    }

    pub fn home(&self, viewer: UserId) -> Vec<PostId> {
        self.sorted(|p| p.kind != Kind::Comment && self.follows.contains(&(viewer, p.author)))
    }

    pub fn explore(&self) -> Vec<PostId> {
        self.sorted(|p| p.kind != Kind::Comment)
    }

    pub fn hashtag(&self, tag: &str) -> Vec<PostId> {
        let tag = tag.to_ascii_lowercase();
        self.sorted(|p| tags_of(&p.body).contains(&tag))
    }

    pub fn search(&self, query: &str) -> Vec<PostId> {
        let q = query.to_lowercase();
        self.sorted(|p| p.body.to_lowercase().contains(&q))
    }

    /// Top `limit` tags over visible originals and comments.
    pub fn trending(&self, limit: usize) -> Vec<(String, usize)> {
        let mut stats: BTreeMap<String, (usize, (DateTime<Utc>, PostId))> = BTreeMap::new();
        for p in self.posts.values() {
            if p.kind == Kind::Repost || !self.visible(p.id) {
                continue;
            }
            for tag in tags_of(&p.body) {
                let e = stats.entry(tag).or_insert((0, (p.at, p.id)));
                e.0 += 1;
                if (p.at, p.id) > e.1 {
                    e.1 = (p.at, p.id);
                }
            }
        }
        let mut all: Vec<_> = stats.into_iter().collect();
        all.sort_by(|(ta, (ca, ra)), (tb, (cb, rb))| cb.cmp(ca).then(rb.cmp(ra)).then(ta.cmp(tb)));
        all.into_iter()
            .take(limit)
            .map(|(t, (c, _))| (t, c))
            .collect()
    }

    fn resolve(&self, id: PostId) -> Option<&MPost> {
        let p = self.posts.get(&id)?;
        match p.kind {
            Kind::Repost => self.posts.get(&p.repost_of?),
            _ => Some(p),
        }
    }

    fn bump(&mut self, recipient: UserId, actor: UserId, kind: NotificationKind) {
        if recipient != actor {
            *self.notifications.entry((recipient, kind)).or_default() += 1;
        }
    }

    pub fn count(&self, user: UserId, kind: NotificationKind) -> usize {
        self.notifications.get(&(user, kind)).copied().unwrap_or(0)
    }
}

/// Lexicon terms as case-insensitive regexes with word boundaries. Phrases
/// match across any run of non-word characters.
pub struct LexiconOracle {
    pub terms: Vec<String>,
    patterns: Vec<Regex>,
}

impl LexiconOracle {
    pub fn load(path: &str) -> Self {
        let text = std::fs::read_to_string(path).expect("lexicon file");
        let terms: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        let patterns = terms
            .iter()
            .map(|t| {
                let words: Vec<String> = t.split_whitespace().map(regex::escape).collect();
                Regex::new(&format!(r"(?i)\b{}\b", words.join(r"\W+"))).unwrap()
            })
            .collect();
        Self { terms, patterns }
    }

    pub fn shipped() -> Self {
        Self::load(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../core/assets/lexicon.txt"
        ))
    }

    pub fn hits(&self, body: &str) -> Vec<&str> {
        self.terms
            .iter()
            .zip(&self.patterns)
            .filter(|(_, re)| re.is_match(body))
            .map(|(t, _)| t.as_str())
            .collect()
    }
}

/// Drives random discourse against one experiment while keeping the model
/// in step. Each operation's success is predicted by the model first and
/// checked against the platform.
pub struct Driver<'a> {
    pub fx: &'a Fixture,
    pub exp: ExperimentId,
    pub users: Vec<UserId>,
    pub model: Model,
    pub rng: StdRng,
    /// Word that marks every body written by this driver.
    pub marker: String,
    pub tags: usize,
    pub ops: BTreeMap<&'static str, usize>,
}

const WORDS: &[&str] = &[
    "climate", "policy", "river", "Energy", "vote", "market", "school", "garden", "transit",
    "housing", "ÉCOLE", "数据", "🌍",
];

impl<'a> Driver<'a> {
    pub fn new(
        fx: &'a Fixture,
        exp: ExperimentId,
        users: Vec<UserId>,
        seed: u64,
        marker: &str,
    ) -> Self {
        let model = Model {
            members: users.iter().copied().collect(),
            ..Model::default()
        };
        Self {
            fx,
            exp,
            users,
            model,
            rng: StdRng::seed_from_u64(seed),
            marker: marker.into(),
            tags: 12,
            ops: BTreeMap::new(),
        }
    }

    fn pick_user(&mut self) -> UserId {
        self.users[self.rng.random_range(0..self.users.len())]
    }

    fn pick_post(&mut self) -> Option<PostId> {
        if self.model.posts.is_empty() {
            return None;
        }
        let i = self.rng.random_range(0..self.model.posts.len());
        self.model.posts.keys().nth(i).copied()
    }

    pub fn body(&mut self) -> String {
        let mut parts = vec![self.marker.clone()];
        for _ in 0..self.rng.random_range(1..5) {
            parts.push(WORDS[self.rng.random_range(0..WORDS.len())].to_string());
        }
        for _ in 0..self.rng.random_range(0..4) {
            let t = self.rng.random_range(0..self.tags);
            let tag = match self.rng.random_range(0..6) {
                0 => format!("#T{t}"),
                1 => format!("#t{t}!"),
                2 => format!("x#t{t}"),
                3 => format!("#{}", "q".repeat(65)),
                _ => format!("#t{t}"),
            };
            parts.push(tag);
        }
        parts.join(" ")
    }

    fn tick(&mut self) {
        let secs = self.rng.random_range(0..3);
        self.fx.clock.advance_secs(secs);
    }

    fn record(&mut self, op: &'static str) {
        *self.ops.entry(op).or_default() += 1;
    }

    pub fn post_by(&mut self, author: UserId, body: &str) -> PostId {
        let p = self
            .fx
            .platform
            .create_post(author, self.exp, body)
            .expect("post accepted");
        self.model.posts.insert(
            p.id,
            MPost {
                id: p.id,
                author,
                kind: Kind::Original,
                parent: None,
                repost_of: None,
                body: body.into(),
                at: p.created_at,
                deleted: false,
            },
        );
        self.record("post");
        p.id
    }

    pub fn post(&mut self) -> PostId {
        self.tick();
        let author = self.pick_user();
        let body = self.body();
        self.post_by(author, &body)
    }

    pub fn reply(&mut self) {
        let Some(target) = self.pick_post() else {
            return;
        };
        self.tick();
        let user = self.pick_user();
        let body = self.body();
        let parent = self.model.resolve(target).map(|p| (p.id, p.author));
        let expect = parent.is_some_and(|(id, _)| self.model.visible(id));
        let got = self.fx.platform.reply(user, target, &body);
        assert_eq!(got.is_ok(), expect, "reply {target} by {user}: {got:?}");
        if let Ok(p) = got {
            let (pid, pauthor) = parent.unwrap();
            assert_eq!(p.parent, Some(pid));
            self.model.posts.insert(
                p.id,
                MPost {
                    id: p.id,
                    author: user,
                    kind: Kind::Comment,
                    parent: Some(pid),
                    repost_of: None,
                    body,
                    at: p.created_at,
                    deleted: false,
                },
            );
            self.model.bump(pauthor, user, NotificationKind::Comment);
            self.record("reply");
        }
    }

    pub fn like(&mut self) {
        let Some(target) = self.pick_post() else {
            return;
        };
        let user = self.pick_user();
        let expect = self.model.visible(target) && !self.model.likes.contains(&(user, target));
        let got = self.fx.platform.like(user, target);
        assert_eq!(got.is_ok(), expect, "like {target} by {user}: {got:?}");
        if got.is_ok() {
            self.model.likes.insert((user, target));
            let author = self.model.posts[&target].author;
            self.model.bump(author, user, NotificationKind::Like);
            self.record("like");
        }
    }

    pub fn undo_like(&mut self) {
        let Some(target) = self.pick_post() else {
            return;
        };
        let user = self.pick_user();
        let expect = self.model.likes.contains(&(user, target));
        let got = self.fx.platform.undo_like(user, target);
        assert_eq!(got.is_ok(), expect, "undo like {target} by {user}: {got:?}");
        if got.is_ok() {
            self.model.likes.remove(&(user, target));
            self.record("undo_like");
        }
    }

    pub fn repost(&mut self) {
        let Some(target) = self.pick_post() else {
            return;
        };
        self.tick();
        let user = self.pick_user();
        let original = self.model.resolve(target).map(|p| (p.id, p.author));
        let expect = original.is_some_and(|(id, _)| self.model.visible(id));
        let got = self.fx.platform.repost(user, target);
        assert_eq!(got.is_ok(), expect, "repost {target} by {user}: {got:?}");
        if let Ok(p) = got {
            let (oid, oauthor) = original.unwrap();
            self.model.posts.insert(
                p.id,
                MPost {
                    id: p.id,
                    author: user,
                    kind: Kind::Repost,
                    parent: None,
                    repost_of: Some(oid),
                    body: String::new(),
                    at: p.created_at,
                    deleted: false,
                },
            );
            self.model.bump(oauthor, user, NotificationKind::Repost);
            self.record("repost");
        }
    }

    pub fn follow(&mut self) {
        let user = self.pick_user();
        let target = self.pick_user();
        let expect = user != target && !self.model.follows.contains(&(user, target));
        let got = self.fx.platform.follow(user, self.exp, target);
        assert_eq!(got.is_ok(), expect, "follow {target} by {user}: {got:?}");
        if got.is_ok() {
            self.model.follows.insert((user, target));
            self.model.bump(target, user, NotificationKind::Follow);
            self.record("follow");
        }
    }

    pub fn unfollow(&mut self) {
        let user = self.pick_user();
        let target = self.pick_user();
        let expect = self.model.follows.contains(&(user, target));
        let got = self.fx.platform.unfollow(user, self.exp, target);
        assert_eq!(got.is_ok(), expect, "unfollow {target} by {user}: {got:?}");
        if got.is_ok() {
            self.model.follows.remove(&(user, target));
            self.record("unfollow");
        }
    }

    /// Authors delete their own posts.
    pub fn delete(&mut self) {
        let Some(target) = self.pick_post() else {
            return;
        };
        let author = self.model.posts[&target].author;
        self.fx
            .platform
            .delete_post(author, target)
            .expect("author may delete");
        self.model.posts.get_mut(&target).unwrap().deleted = true;
        self.record("delete");
    }

    /// One random operation with a fixed mix.
    pub fn step(&mut self) {
        match self.rng.random_range(0..100) {
            0..30 => {
                self.post();
            }
            30..45 => self.reply(),
            45..65 => self.like(),
            65..70 => self.undo_like(),
            70..78 => self.repost(),
            78..92 => self.follow(),
            92..96 => self.unfollow(),
            _ => self.delete(),
        }
    }
}

const DISGUISES: &[&str] = &[
    "\u{200b}", "\u{200d}", "\u{0301}", "\u{00a0}", "\u{3000}", "²", "٣", "_", "-", ".", "!!", "*",
    "'", "\n", "\t", "@", "#",
];

/// A body that may or may not carry a lexicon term, dressed up to slip
/// past a naive filter: odd case, unicode separators, glued punctuation,
/// look-alike letters, or the term buried inside a longer word.
pub fn adversarial(rng: &mut StdRng, terms: &[String]) -> String {
    let term = &terms[rng.random_range(0..terms.len())];
    let mut t: String = term
        .chars()
        .map(|c| match rng.random_range(0..10) {
            0 | 1 => c.to_ascii_uppercase(),
            2 if c == 's' => '\u{17f}',
            3 if c == 'k' => '\u{212a}',
            _ => c,
        })
        .collect();
    if rng.random_bool(0.3) {
        let sep = DISGUISES[rng.random_range(0..DISGUISES.len())];
        t = t.replace(' ', sep);
    }
    let around = |rng: &mut StdRng| DISGUISES[rng.random_range(0..DISGUISES.len())].to_string();
    let core = match rng.random_range(0..8) {
        0 => format!("class{t}ic"),
        1 => format!("{t}{}", around(rng)),
        2 => format!("{}{t}", around(rng)),
        3 => format!("{}{t}{}", around(rng), around(rng)),
        4 => format!("#{t}"),
        5 => format!("{t}s"),
        6 => t.chars().flat_map(|c| [c, '\u{200b}']).collect(),
        _ => t,
    };
    let filler = ["well", "honestly", "that take is", "ok", "so"];
    let pre = filler[rng.random_range(0..filler.len())];
    let post = filler[rng.random_range(0..filler.len())];
    format!("{pre} {core} {post}")
}
