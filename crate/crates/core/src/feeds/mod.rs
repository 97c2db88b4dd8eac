//! Read path: timelines, hashtag pages, search, trending, threads and
//! notifications. Timelines are keyset-paginated on (created_at, id).

use std::cmp::Reverse;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::discourse::hashtags::normalize_tag;
use crate::discourse::{Post, PostKind};
use crate::error::{PdsError, Result};
use crate::experiments::MembershipStatus;
use crate::ids::{ExperimentId, NotificationId, PostId, UserId};
use crate::store::{ExperimentData, ExperimentScope, Platform, State};
use crate::text::scalar_len;

pub const PAGE_SIZE: usize = 20;
pub const TRENDING_SIZE: usize = 5;
pub const MAX_QUERY_CHARS: usize = 100;

#[derive(Debug, Clone, Serialize)]
pub struct PostView {
    #[serde(flatten)]
    pub post: Post,
    pub author_handle: String,
    pub author_display_name: String,
    /// `None` when the experiment hides agent badges from this viewer.
    pub author_is_agent: Option<bool>,
    pub like_count: usize,
    pub repost_count: usize,
    pub comment_count: usize,
    pub liked_by_caller: bool,
    /// For reposts, the reposted post.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub original: Option<Box<PostView>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeedPage {
    pub items: Vec<PostView>,
    pub next_cursor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendingEntry {
    pub tag: String,
    pub unique_post_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AccountMatch {
    pub user: UserId,
    pub handle: String,
    pub display_name: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResults {
    pub posts: FeedPage,
    pub accounts: Vec<AccountMatch>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThreadView {
    /// Root first, excluding the focused post.
    pub ancestors: Vec<PostView>,
    pub post: PostView,
    /// Visible descendants in depth-first order.
    pub replies: Vec<PostView>,
}

/// Sort key shared by every timeline. Larger keys come first.
pub type FeedKey = (DateTime<Utc>, PostId);

pub fn feed_key(post: &Post) -> FeedKey {
    (post.created_at, post.id)
}

pub fn encode_cursor(key: FeedKey) -> String {
    URL_SAFE_NO_PAD.encode(format!("{}:{}", key.0.timestamp_micros(), key.1))
}

pub fn decode_cursor(cursor: &str) -> Result<FeedKey> {
    let raw = URL_SAFE_NO_PAD
        .decode(cursor)
        .map_err(|_| PdsError::BadCursor)?;
    let raw = String::from_utf8(raw).map_err(|_| PdsError::BadCursor)?;
    let (micros, id) = raw.split_once(':').ok_or(PdsError::BadCursor)?;
    let micros: i64 = micros.parse().map_err(|_| PdsError::BadCursor)?;
    let id: PostId = id.parse().map_err(|_| PdsError::BadCursor)?;
    let at = DateTime::from_timestamp_micros(micros).ok_or(PdsError::BadCursor)?;
    Ok((at, id))
}

/// Keyset page over `posts`: everything strictly after `cursor` in
/// (created_at desc, id desc) order.
fn paginate<'a>(
    mut posts: Vec<&'a Post>,
    cursor: Option<&str>,
    limit: usize,
) -> Result<(Vec<&'a Post>, Option<String>)> {
    let after = cursor.map(decode_cursor).transpose()?;
    posts.sort_by_key(|p| Reverse(feed_key(p)));
    let mut page: Vec<&Post> = posts
        .into_iter()
        .filter(|p| after.is_none_or(|c| feed_key(p) < c))
        .take(limit + 1)
        .collect();
    let next = if page.len() > limit {
        page.truncate(limit);
        page.last().map(|p| encode_cursor(feed_key(p)))
    } else {
        None
    };
    Ok((page, next))
}

impl State {
    fn post_view(&self, data: &ExperimentData, viewer: &ExperimentScope, post: &Post) -> PostView {
        let reveal_agents = data.experiment.show_agent_badge || viewer.role().is_staff();
        let account = self.accounts.get(&post.author);
        let likes = data.likes.get(&post.id);
        let original = (post.kind == PostKind::Repost)
            .then(|| post.repost_of.and_then(|id| data.posts.get(&id)))
            .flatten()
            .map(|o| Box::new(self.post_view(data, viewer, o)));
        PostView {
            post: post.clone(),
            author_handle: account.map(|a| a.handle.clone()).unwrap_or_default(),
            author_display_name: account.map(|a| a.display_name.clone()).unwrap_or_default(),
            author_is_agent: reveal_agents.then(|| account.is_some_and(|a| a.is_agent)),
            like_count: likes.map_or(0, |l| l.len()),
            repost_count: data.reposts.get(&post.id).map_or(0, |r| {
                r.iter()
                    .filter(|id| data.posts.get(id).is_some_and(|p| !p.deleted))
                    .count()
            }),
            comment_count: data.children.get(&post.id).map_or(0, |c| {
                c.iter()
                    .filter(|id| data.posts.get(id).is_some_and(|p| !p.deleted))
                    .count()
            }),
            liked_by_caller: likes.is_some_and(|l| l.contains_key(&viewer.user())),
            original,
        }
    }

    fn feed(
        &self,
        scope: &ExperimentScope,
        cursor: Option<&str>,
        keep: impl Fn(&ExperimentData, &Post) -> bool,
    ) -> Result<FeedPage> {
        let data = self.partition(scope);
        let candidates: Vec<&Post> = data
            .posts
            .values()
            .filter(|p| data.is_visible(p) && keep(data, p))
            .collect();
        let (page, next_cursor) = paginate(candidates, cursor, PAGE_SIZE)?;
        Ok(FeedPage {
            items: page
                .into_iter()
                .map(|p| self.post_view(data, scope, p))
                .collect(),
            next_cursor,
        })
    }

    /// Experiments in which `user` currently holds an active membership.
    fn active_experiments(&self, user: UserId) -> Vec<ExperimentId> {
        self.experiments
            .iter()
            .filter(|(_, d)| d.active_membership(user).is_some())
            .map(|(id, _)| *id)
            .collect()
    }
}

fn is_timeline_kind(post: &Post) -> bool {
    matches!(post.kind, PostKind::Original | PostKind::Repost)
}

/// Trending over a set of posts: unique posts per tag, ties broken by most
/// recent use and then by tag.
pub fn rank_trending<'a>(
    posts: impl IntoIterator<Item = &'a Post>,
    limit: usize,
) -> Vec<TrendingEntry> {
    let mut stats: BTreeMap<&str, (usize, FeedKey)> = BTreeMap::new();
    for post in posts {
        for tag in &post.hashtags {
            let entry = stats.entry(tag.as_str()).or_insert((0, feed_key(post)));
            entry.0 += 1;
            entry.1 = entry.1.max(feed_key(post));
        }
    }
    let mut ranked: Vec<(&str, usize, FeedKey)> =
        stats.into_iter().map(|(t, (n, k))| (t, n, k)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(limit)
        .map(|(tag, n, _)| TrendingEntry {
            tag: tag.to_string(),
            unique_post_count: n,
        })
        .collect()
}

impl Platform {
    /// Originals and reposts by accounts the viewer follows.
    pub fn home_feed(&self, scope: &ExperimentScope, cursor: Option<&str>) -> Result<FeedPage> {
        let st = self.read();
        let viewer = scope.user();
        st.feed(scope, cursor, |data, p| {
            is_timeline_kind(p) && data.is_following(viewer, p.author)
        })
    }

    /// Every visible original and repost in the experiment.
    pub fn explore_feed(&self, scope: &ExperimentScope, cursor: Option<&str>) -> Result<FeedPage> {
        self.read().feed(scope, cursor, |_, p| is_timeline_kind(p))
    }

    /// Posts of any kind carrying `tag`. The tag is case-folded; a leading `#` is ignored.
    pub fn hashtag_feed(
        &self,
        scope: &ExperimentScope,
        tag: &str,
        cursor: Option<&str>,
    ) -> Result<FeedPage> {
        let tag = normalize_tag(tag.trim_start_matches('#'));
        self.read()
            .feed(scope, cursor, |_, p| p.hashtags.contains(&tag))
    }

    /// Top-level posts and reposts by one member, for profile pages.
    pub fn author_feed(
        &self,
        scope: &ExperimentScope,
        author: UserId,
        cursor: Option<&str>,
    ) -> Result<FeedPage> {
        self.read().feed(scope, cursor, |_, p| {
            is_timeline_kind(p) && p.author == author
        })
    }

    pub fn search(
        &self,
        scope: &ExperimentScope,
        query: &str,
        cursor: Option<&str>,
    ) -> Result<SearchResults> {
        let query = query.trim();
        if query.is_empty() {
            return Err(PdsError::QueryEmpty);
        }
        if scalar_len(query) > MAX_QUERY_CHARS {
            return Err(PdsError::QueryTooLong {
                max: MAX_QUERY_CHARS,
            });
        }
        let needle = query.to_lowercase();
        let st = self.read();
        let posts = st.feed(scope, cursor, |_, p| {
            p.body.to_lowercase().contains(&needle)
        })?;
        let data = st.partition(scope);
        let accounts = data
            .memberships
            .values()
            .filter(|m| m.status == MembershipStatus::Active)
            .filter_map(|m| st.accounts.get(&m.user))
            .filter(|a| {
                a.handle.to_lowercase().contains(&needle)
                    || a.display_name.to_lowercase().contains(&needle)
            })
            .map(|a| AccountMatch {
                user: a.id,
                handle: a.handle.clone(),
                display_name: a.display_name.clone(),
            })
            .collect();
        Ok(SearchResults { posts, accounts })
    }

    /// Up to five tags over visible originals and comments.
    pub fn trending(&self, scope: &ExperimentScope) -> Vec<TrendingEntry> {
        let st = self.read();
        let data = st.partition(scope);
        rank_trending(
            data.posts
                .values()
                .filter(|p| p.kind != PostKind::Repost && data.is_visible(p)),
            TRENDING_SIZE,
        )
    }

    /// The focused post with its ancestry and visible replies.
    pub fn thread(&self, scope: &ExperimentScope, post: PostId) -> Result<ThreadView> {
        let st = self.read();
        let data = st.partition(scope);
        let focused = data.posts.get(&post).ok_or(PdsError::PostNotFound)?;
        if !data.is_visible(focused) {
            return Err(PdsError::PostNotFound);
        }
        let chain = data.ancestry(post);
        let ancestors = chain[..chain.len() - 1]
            .iter()
            .filter_map(|id| data.posts.get(id))
            .map(|p| st.post_view(data, scope, p))
            .collect();
        let mut replies = Vec::new();
        let mut stack: Vec<PostId> = data
            .children
            .get(&post)
            .map(|c| c.iter().rev().copied().collect())
            .unwrap_or_default();
        while let Some(id) = stack.pop() {
            let Some(p) = data.posts.get(&id) else {
                continue;
            };
            if p.deleted {
                continue;
            }
            replies.push(st.post_view(data, scope, p));
            if let Some(children) = data.children.get(&id) {
                stack.extend(children.iter().rev());
            }
        }
        Ok(ThreadView {
            ancestors,
            post: st.post_view(data, scope, focused),
            replies,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotificationKind {
    Like,
    Comment,
    Repost,
    Follow,
}

impl NotificationKind {
    pub const ALL: [NotificationKind; 4] = [
        NotificationKind::Like,
        NotificationKind::Comment,
        NotificationKind::Repost,
        NotificationKind::Follow,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub id: NotificationId,
    pub recipient: UserId,
    pub experiment: ExperimentId,
    pub kind: NotificationKind,
    pub actor: UserId,
    /// Absent for follows.
    pub post: Option<PostId>,
    pub created_at: DateTime<Utc>,
    pub seen: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NotificationView {
    #[serde(flatten)]
    pub notification: Notification,
    pub actor_handle: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct NotificationPage {
    pub items: Vec<NotificationView>,
    pub unseen_count: usize,
    pub next_cursor: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotificationFilter {
    All,
    Likes,
    Comments,
    Reposts,
    Follows,
}

impl NotificationFilter {
    pub const ALL: [NotificationFilter; 5] = [
        NotificationFilter::All,
        NotificationFilter::Likes,
        NotificationFilter::Comments,
        NotificationFilter::Reposts,
        NotificationFilter::Follows,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NotificationFilter::All => "all",
            NotificationFilter::Likes => "likes",
            NotificationFilter::Comments => "comments",
            NotificationFilter::Reposts => "reposts",
            NotificationFilter::Follows => "follows",
        }
    }

    pub fn admits(self, kind: NotificationKind) -> bool {
        match self {
            NotificationFilter::All => true,
            NotificationFilter::Likes => kind == NotificationKind::Like,
            NotificationFilter::Comments => kind == NotificationKind::Comment,
            NotificationFilter::Reposts => kind == NotificationKind::Repost,
            NotificationFilter::Follows => kind == NotificationKind::Follow,
        }
    }
}

impl FromStr for NotificationFilter {
    type Err = PdsError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| PdsError::UnknownFilter(s.to_string()))
    }
}

impl fmt::Display for NotificationFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl State {
    /// The user's notifications from experiments they are active in, newest first.
    fn visible_notifications(&self, user: UserId) -> impl Iterator<Item = &Notification> {
        let active = self.active_experiments(user);
        self.notifications
            .values()
            .rev()
            .filter(move |n| n.recipient == user && active.contains(&n.experiment))
    }
}

impl Platform {
    pub fn notifications(
        &self,
        user: UserId,
        filter: NotificationFilter,
        cursor: Option<&str>,
    ) -> Result<NotificationPage> {
        let before: Option<NotificationId> = cursor
            .map(|c| c.parse().map_err(|_| PdsError::BadCursor))
            .transpose()?;
        let st = self.read();
        let mut items: Vec<NotificationView> = st
            .visible_notifications(user)
            .filter(|n| filter.admits(n.kind) && before.is_none_or(|b| n.id < b))
            .take(PAGE_SIZE + 1)
            .map(|n| NotificationView {
                notification: n.clone(),
                actor_handle: st.handle_of(n.actor).to_string(),
            })
            .collect();
        let next_cursor = if items.len() > PAGE_SIZE {
            items.truncate(PAGE_SIZE);
            items.last().map(|n| n.notification.id.to_string())
        } else {
            None
        };
        let unseen_count = st.visible_notifications(user).filter(|n| !n.seen).count();
        Ok(NotificationPage {
            items,
            unseen_count,
            next_cursor,
        })
    }

    pub fn unseen_count(&self, user: UserId) -> usize {
        self.read()
            .visible_notifications(user)
            .filter(|n| !n.seen)
            .count()
    }

    /// Marks the user's notifications with id ≤ `up_to` (all when absent) as
    /// seen and returns how many changed.
    pub fn mark_seen(&self, user: UserId, up_to: Option<NotificationId>) -> usize {
        let mut st = self.write();
        let ids: Vec<NotificationId> = st
            .visible_notifications(user)
            .filter(|n| !n.seen && up_to.is_none_or(|u| n.id <= u))
            .map(|n| n.id)
            .collect();
        for id in &ids {
            if let Some(n) = st.notifications.get_mut(id) {
                n.seen = true;
            }
        }
        ids.len()
    }
}
