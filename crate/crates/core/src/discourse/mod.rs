//! The write path: posts, comments, reposts, likes, follows and deletion.
//! Every operation is scoped to the experiment the post or member lives in.

pub mod hashtags;

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::agents::{DiscourseEvent, EventKind};
use crate::error::{PdsError, Result};
use crate::experiments::permissions::Action;
use crate::feeds::{Notification, NotificationKind};
use crate::ids::{EventId, ExperimentId, PostId, UserId};
use crate::live::LiveEvent;
use crate::moderation::Verdict;
use crate::store::{ExperimentData, ExperimentScope, Platform, State};
use crate::text::{scalar_len, MAX_POST_CHARS};
pub use hashtags::extract_hashtags;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostKind {
    Original,
    Comment,
    Repost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: PostId,
    pub experiment: ExperimentId,
    pub author: UserId,
    pub body: String,
    pub kind: PostKind,
    pub parent: Option<PostId>,
    pub repost_of: Option<PostId>,
    pub hashtags: BTreeSet<String>,
    pub created_at: DateTime<Utc>,
    pub deleted: bool,
    pub deleted_by: Option<UserId>,
    /// Classifier that admitted the body; absent for body-less reposts.
    pub classifier_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Like {
    pub user: UserId,
    pub post: PostId,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Follow {
    pub follower: UserId,
    pub followee: UserId,
    pub experiment: ExperimentId,
    pub created_at: DateTime<Utc>,
}

/// Validates length and runs the moderation gate. Runs outside the state lock.
pub(crate) fn screen_body(platform: &Platform, body: &str) -> Result<String> {
    if body.trim().is_empty() {
        return Err(PdsError::BodyEmpty);
    }
    if scalar_len(body) > MAX_POST_CHARS {
        return Err(PdsError::BodyTooLong {
            max: MAX_POST_CHARS,
        });
    }
    let result = platform.moderator.check_content(body);
    if result.verdict == Verdict::Block {
        return Err(PdsError::ModerationRejected {
            matched_terms: result.matched_terms,
            reason: result.reason.unwrap_or_else(|| "blocked".into()),
        });
    }
    Ok(result.classifier_version)
}

impl ExperimentData {
    /// False when the post, any ancestor, or a repost's target is deleted.
    pub(crate) fn is_visible(&self, post: &Post) -> bool {
        let mut current = post;
        loop {
            if current.deleted {
                return false;
            }
            let next = match current.kind {
                PostKind::Original => return true,
                PostKind::Comment => current.parent,
                PostKind::Repost => current.repost_of,
            };
            match next.and_then(|id| self.posts.get(&id)) {
                Some(p) => current = p,
                None => return false,
            }
        }
    }

    /// Number of comment ancestors: 0 for top-level posts.
    pub(crate) fn depth(&self, post: &Post) -> u32 {
        let mut depth = 0;
        let mut parent = post.parent;
        while let Some(id) = parent {
            depth += 1;
            parent = self.posts.get(&id).and_then(|p| p.parent);
        }
        depth
    }

    /// The chain from the thread root down to `post`, inclusive.
    pub(crate) fn ancestry(&self, post: PostId) -> Vec<PostId> {
        let mut chain = vec![post];
        let mut parent = self.posts.get(&post).and_then(|p| p.parent);
        while let Some(id) = parent {
            chain.push(id);
            parent = self.posts.get(&id).and_then(|p| p.parent);
        }
        chain.reverse();
        chain
    }

    pub(crate) fn is_following(&self, follower: UserId, followee: UserId) -> bool {
        self.follows
            .get(&follower)
            .is_some_and(|f| f.contains_key(&followee))
    }
}

/// What a committed write hands back for after-commit work.
#[derive(Debug, Default)]
pub(crate) struct Committed {
    pub live: Vec<(UserId, LiveEvent)>,
    pub event: Option<EventId>,
}

impl State {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn notify(
        &mut self,
        recipient: UserId,
        experiment: ExperimentId,
        kind: NotificationKind,
        actor: UserId,
        post: Option<PostId>,
        at: DateTime<Utc>,
        out: &mut Committed,
    ) {
        if recipient == actor {
            return;
        }
        let id = self.ids.next_notification();
        self.notifications.insert(
            id,
            Notification {
                id,
                recipient,
                experiment,
                kind,
                actor,
                post,
                created_at: at,
                seen: false,
            },
        );
        out.live.push((
            recipient,
            LiveEvent::Notification {
                notification: id,
                kind,
            },
        ));
    }

    /// Appends a post to the scope's partition and maintains the indexes.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn insert_post(
        &mut self,
        scope: &ExperimentScope,
        kind: PostKind,
        body: String,
        parent: Option<PostId>,
        repost_of: Option<PostId>,
        classifier_version: Option<String>,
        at: DateTime<Utc>,
        out: &mut Committed,
    ) -> Post {
        let id = self.ids.next_post();
        let post = Post {
            id,
            experiment: scope.experiment(),
            author: scope.user(),
            hashtags: extract_hashtags(&body),
            body,
            kind,
            parent,
            repost_of,
            created_at: at,
            deleted: false,
            deleted_by: None,
            classifier_version,
        };
        let data = self.partition_mut(scope);
        data.posts.insert(id, post.clone());
        if let Some(p) = parent {
            data.children.entry(p).or_default().push(id);
        }
        if let Some(r) = repost_of {
            data.reposts.entry(r).or_default().push(id);
        }
        let audience: Vec<UserId> = data
            .memberships
            .values()
            .filter(|m| {
                m.status == crate::experiments::MembershipStatus::Active && m.user != scope.user()
            })
            .map(|m| m.user)
            .collect();
        self.post_index.insert(id, scope.experiment());
        for user in audience {
            if self.accounts.get(&user).is_some_and(|a| !a.is_agent) {
                out.live.push((
                    user,
                    LiveEvent::PostCreated {
                        experiment: scope.experiment(),
                        post: id,
                    },
                ));
            }
        }
        if kind != PostKind::Repost {
            let event_id = self.ids.next_event();
            self.events.insert(
                event_id,
                DiscourseEvent {
                    id: event_id,
                    experiment: scope.experiment(),
                    kind: if kind == PostKind::Comment {
                        EventKind::NewReply
                    } else {
                        EventKind::NewPost
                    },
                    post: id,
                    author: scope.user(),
                    created_at: at,
                },
            );
            out.event = Some(event_id);
        }
        post
    }

    /// Resolves a post id to (scope, post), checking visibility.
    pub(crate) fn visible_post(
        &self,
        user: UserId,
        post: PostId,
    ) -> Result<(ExperimentScope, Post)> {
        let experiment = self.experiment_of_post(post)?;
        let scope = self.scope(experiment, user)?;
        let data = self.partition(&scope);
        let p = data.posts.get(&post).ok_or(PdsError::PostNotFound)?;
        if !data.is_visible(p) {
            return Err(PdsError::PostNotFound);
        }
        Ok((scope, p.clone()))
    }

    pub(crate) fn like_locked(
        &mut self,
        scope: &ExperimentScope,
        post: PostId,
        at: DateTime<Utc>,
        out: &mut Committed,
    ) -> Result<Like> {
        scope.authorize(Action::Interact)?;
        let data = self.partition_mut(scope);
        let author = data.posts.get(&post).ok_or(PdsError::PostNotFound)?.author;
        let likes = data.likes.entry(post).or_default();
        if likes.contains_key(&scope.user()) {
            return Err(PdsError::AlreadyLiked);
        }
        let like = Like {
            user: scope.user(),
            post,
            created_at: at,
        };
        likes.insert(scope.user(), like.clone());
        self.notify(
            author,
            scope.experiment(),
            NotificationKind::Like,
            scope.user(),
            Some(post),
            at,
            out,
        );
        Ok(like)
    }

    pub(crate) fn repost_locked(
        &mut self,
        scope: &ExperimentScope,
        target: PostId,
        at: DateTime<Utc>,
        out: &mut Committed,
    ) -> Result<Post> {
        scope.authorize(Action::Interact)?;
        let data = self.partition(scope);
        let mut original = data.posts.get(&target).ok_or(PdsError::PostNotFound)?;
        if original.kind == PostKind::Repost {
            original = original
                .repost_of
                .and_then(|id| data.posts.get(&id))
                .ok_or(PdsError::PostNotFound)?;
        }
        if !data.is_visible(original) {
            return Err(PdsError::PostDeleted);
        }
        let (original_id, original_author) = (original.id, original.author);
        let post = self.insert_post(
            scope,
            PostKind::Repost,
            String::new(),
            None,
            Some(original_id),
            None,
            at,
            out,
        );
        self.notify(
            original_author,
            scope.experiment(),
            NotificationKind::Repost,
            scope.user(),
            Some(original_id),
            at,
            out,
        );
        Ok(post)
    }

    /// Inserts a comment under `parent`. The body must already be screened.
    pub(crate) fn reply_locked(
        &mut self,
        scope: &ExperimentScope,
        parent: PostId,
        body: String,
        classifier_version: String,
        at: DateTime<Utc>,
        out: &mut Committed,
    ) -> Result<Post> {
        scope.authorize(Action::Post)?;
        let data = self.partition(scope);
        let mut parent_post = data.posts.get(&parent).ok_or(PdsError::ParentNotFound)?;
        if parent_post.kind == PostKind::Repost {
            parent_post = parent_post
                .repost_of
                .and_then(|id| data.posts.get(&id))
                .ok_or(PdsError::ParentNotFound)?;
        }
        if !data.is_visible(parent_post) {
            return Err(PdsError::ParentDeleted);
        }
        let (parent_id, parent_author) = (parent_post.id, parent_post.author);
        let post = self.insert_post(
            scope,
            PostKind::Comment,
            body,
            Some(parent_id),
            None,
            Some(classifier_version),
            at,
            out,
        );
        self.notify(
            parent_author,
            scope.experiment(),
            NotificationKind::Comment,
            scope.user(),
            Some(post.id),
            at,
            out,
        );
        Ok(post)
    }
}

impl Platform {
    /// Publishes live events and hands the discourse event to the dispatcher.
    pub(crate) fn after_commit(&self, committed: Committed) {
        self.publish(committed.live);
        if let Some(event) = committed.event {
            self.dispatch(event);
        }
    }

    pub fn create_post(
        &self,
        author: UserId,
        experiment: ExperimentId,
        body: &str,
    ) -> Result<Post> {
        // membership is checked before screening so outsiders learn nothing from the gate
        self.scoped(experiment, author)?.authorize(Action::Post)?;
        let version = screen_body(self, body)?;
        let now = self.now();
        let mut out = Committed::default();
        let post = {
            let mut st = self.write();
            let scope = st.scope(experiment, author)?;
            scope.authorize(Action::Post)?;
            st.insert_post(
                &scope,
                PostKind::Original,
                body.to_string(),
                None,
                None,
                Some(version),
                now,
                &mut out,
            )
        };
        self.after_commit(out);
        Ok(post)
    }

    pub fn reply(&self, author: UserId, parent: PostId, body: &str) -> Result<Post> {
        let experiment = self
            .read()
            .experiment_of_post(parent)
            .map_err(|_| PdsError::ParentNotFound)?;
        self.scoped(experiment, author)?.authorize(Action::Post)?;
        let version = screen_body(self, body)?;
        let now = self.now();
        let mut out = Committed::default();
        let post = {
            let mut st = self.write();
            let scope = st.scope(experiment, author)?;
            st.reply_locked(&scope, parent, body.to_string(), version, now, &mut out)?
        };
        self.after_commit(out);
        Ok(post)
    }

    pub fn like(&self, user: UserId, post: PostId) -> Result<Like> {
        let now = self.now();
        let mut out = Committed::default();
        let like = {
            let mut st = self.write();
            let (scope, _) = st.visible_post(user, post)?;
            st.like_locked(&scope, post, now, &mut out)?
        };
        self.after_commit(out);
        Ok(like)
    }

    /// Removes the like. The notification it produced stays.
    pub fn undo_like(&self, user: UserId, post: PostId) -> Result<()> {
        let mut st = self.write();
        let experiment = st.experiment_of_post(post)?;
        let scope = st.scope(experiment, user)?;
        scope.authorize(Action::Interact)?;
        let removed = st
            .partition_mut(&scope)
            .likes
            .get_mut(&post)
            .and_then(|likes| likes.remove(&user));
        removed.map(|_| ()).ok_or(PdsError::NotLiked)
    }

    /// Reposting a repost reposts its original.
    pub fn repost(&self, user: UserId, post: PostId) -> Result<Post> {
        let now = self.now();
        let mut out = Committed::default();
        let repost = {
            let mut st = self.write();
            let experiment = st.experiment_of_post(post)?;
            let scope = st.scope(experiment, user)?;
            st.repost_locked(&scope, post, now, &mut out)?
        };
        self.after_commit(out);
        Ok(repost)
    }

    pub fn follow(&self, user: UserId, experiment: ExperimentId, target: UserId) -> Result<Follow> {
        let now = self.now();
        let mut out = Committed::default();
        let follow = {
            let mut st = self.write();
            let scope = st.scope(experiment, user)?;
            scope.authorize(Action::Interact)?;
            if target == user {
                return Err(PdsError::SelfFollow);
            }
            let data = st.partition_mut(&scope);
            if data.active_membership(target).is_none() {
                return Err(PdsError::NotAMember);
            }
            let edges = data.follows.entry(user).or_default();
            if edges.contains_key(&target) {
                return Err(PdsError::AlreadyFollowing);
            }
            let follow = Follow {
                follower: user,
                followee: target,
                experiment,
                created_at: now,
            };
            edges.insert(target, follow.clone());
            st.notify(
                target,
                experiment,
                NotificationKind::Follow,
                user,
                None,
                now,
                &mut out,
            );
            follow
        };
        self.after_commit(out);
        Ok(follow)
    }

    pub fn unfollow(&self, user: UserId, experiment: ExperimentId, target: UserId) -> Result<()> {
        let mut st = self.write();
        let scope = st.scope(experiment, user)?;
        scope.authorize(Action::Interact)?;
        st.partition_mut(&scope)
            .follows
            .get_mut(&user)
            .and_then(|edges| edges.remove(&target))
            .map(|_| ())
            .ok_or(PdsError::NotFollowing)
    }

    /// Sets the deletion marker. Authors may delete their own posts; anyone
    /// else needs `delete_thread` (top level) or `delete_comment`. Deleting a
    /// thread root hides its replies from every read path.
    pub fn delete_post(&self, actor: UserId, post: PostId) -> Result<Post> {
        let mut st = self.write();
        let experiment = st.experiment_of_post(post)?;
        let scope = st.scope(experiment, actor)?;
        self.delete_post_locked(&mut st, &scope, post)
    }

    pub(crate) fn delete_post_locked(
        &self,
        st: &mut State,
        scope: &ExperimentScope,
        post: PostId,
    ) -> Result<Post> {
        let data = st.partition_mut(scope);
        let p = data.posts.get_mut(&post).ok_or(PdsError::PostNotFound)?;
        if p.author != scope.user() {
            scope.authorize(match p.kind {
                PostKind::Comment => Action::DeleteComment,
                PostKind::Original | PostKind::Repost => Action::DeleteThread,
            })?;
        }
        if !p.deleted {
            p.deleted = true;
            p.deleted_by = Some(scope.user());
        }
        Ok(p.clone())
    }

    /// A stored post regardless of visibility, for moderators and tests.
    pub fn post(&self, scope: &ExperimentScope, post: PostId) -> Result<Post> {
        self.read()
            .partition(scope)
            .posts
            .get(&post)
            .cloned()
            .ok_or(PdsError::PostNotFound)
    }

    pub fn experiment_of_post(&self, post: PostId) -> Result<ExperimentId> {
        self.read().experiment_of_post(post)
    }

    /// Depth of a post in its thread (0 for top level).
    pub fn thread_depth(&self, scope: &ExperimentScope, post: PostId) -> Result<u32> {
        let st = self.read();
        let data = st.partition(scope);
        let p = data.posts.get(&post).ok_or(PdsError::PostNotFound)?;
        Ok(data.depth(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::permissions::Role;
    use crate::testing::Fixture;

    fn setup() -> (Fixture, ExperimentId, UserId, UserId, UserId) {
        let f = Fixture::new();
        let owner = f.researcher("owner");
        let exp = f.experiment(owner, "S");
        let ada = f.member(exp, "ada", Role::Regular);
        let bob = f.member(exp, "bob", Role::Regular);
        (f, exp, owner, ada, bob)
    }

    #[test]
    fn length_boundary_in_scalars() {
        let (f, exp, _, ada, _) = setup();
        assert!(f.platform.create_post(ada, exp, &"a".repeat(280)).is_ok());
        assert_eq!(
            f.platform
                .create_post(ada, exp, &"a".repeat(281))
                .unwrap_err(),
            PdsError::BodyTooLong { max: 280 }
        );
        assert!(f.platform.create_post(ada, exp, &"😀".repeat(280)).is_ok());
        assert!(f.platform.create_post(ada, exp, &"漢".repeat(281)).is_err());
        assert_eq!(
            f.platform.create_post(ada, exp, "   ").unwrap_err(),
            PdsError::BodyEmpty
        );
    }

    #[test]
    fn hashtags_stored_on_create() {
        let (f, exp, _, ada, _) = setup();
        let post = f
            .platform
            .create_post(ada, exp, "Great talk! #AI #ai #Discourse")
            .unwrap();
        assert_eq!(
            post.hashtags,
            ["ai", "discourse"].iter().map(|s| s.to_string()).collect()
        );
    }

    #[test]
    fn non_members_cannot_post() {
        let (f, exp, _, _, _) = setup();
        let outsider = f.user("out");
        assert_eq!(
            f.platform.create_post(outsider, exp, "hi").unwrap_err(),
            PdsError::NotAMember
        );
    }

    #[test]
    fn moderation_blocks_posts() {
        let (f, exp, _, ada, _) = setup();
        let err = f
            .platform
            .create_post(ada, exp, "what the FUCK")
            .unwrap_err();
        assert!(
            matches!(err, PdsError::ModerationRejected { ref matched_terms, .. } if matched_terms == &vec!["fuck".to_string()])
        );
    }

    #[test]
    fn reply_notifications() {
        let (f, exp, _, ada, bob) = setup();
        let root = f.platform.create_post(ada, exp, "root").unwrap();
        let own = f.platform.reply(ada, root.id, "self reply").unwrap();
        assert_eq!(own.kind, PostKind::Comment);
        assert_eq!(own.parent, Some(root.id));
        assert_eq!(f.notification_count(ada), 0);
        f.platform.reply(bob, root.id, "other reply").unwrap();
        assert_eq!(f.notification_count(ada), 1);

        f.platform.delete_post(ada, root.id).unwrap();
        assert_eq!(
            f.platform.reply(bob, root.id, "late").unwrap_err(),
            PdsError::ParentDeleted
        );
        assert_eq!(
            f.platform.reply(bob, PostId(9999), "x").unwrap_err(),
            PdsError::ParentNotFound
        );
        // descendants of a deleted root are hidden too
        assert_eq!(
            f.platform.reply(bob, own.id, "x").unwrap_err(),
            PdsError::ParentDeleted
        );
    }

    #[test]
    fn like_rules() {
        let (f, exp, _, ada, bob) = setup();
        let post = f.platform.create_post(ada, exp, "post").unwrap();
        let scope = f.platform.scoped(exp, bob).unwrap();
        let count =
            |f: &Fixture| f.platform.explore_feed(&scope, None).unwrap().items[0].like_count;
        let before = count(&f);
        f.platform.like(bob, post.id).unwrap();
        assert_eq!(
            f.platform.like(bob, post.id).unwrap_err(),
            PdsError::AlreadyLiked
        );
        assert_eq!(count(&f), before + 1);
        f.platform.undo_like(bob, post.id).unwrap();
        assert_eq!(count(&f), before);
        assert_eq!(
            f.platform.undo_like(bob, post.id).unwrap_err(),
            PdsError::NotLiked
        );
        // notification remains after undo
        assert_eq!(f.notification_count(ada), 1);

        let comment = f.platform.reply(bob, post.id, "comment").unwrap();
        assert!(f.platform.like(ada, comment.id).is_ok());
        // self-like allowed, no notification
        let n = f.notification_count(ada);
        f.platform.like(ada, post.id).unwrap();
        assert_eq!(f.notification_count(ada), n);
        assert_eq!(
            f.platform.like(ada, PostId(424242)).unwrap_err(),
            PdsError::PostNotFound
        );
    }

    #[test]
    fn repost_resolution() {
        let (f, exp, owner, ada, bob) = setup();
        let original = f.platform.create_post(ada, exp, "original").unwrap();
        let r1 = f.platform.repost(bob, original.id).unwrap();
        assert_eq!(r1.kind, PostKind::Repost);
        assert_eq!(r1.repost_of, Some(original.id));
        assert!(r1.body.is_empty());
        let r2 = f.platform.repost(owner, r1.id).unwrap();
        assert_eq!(r2.repost_of, Some(original.id));
        assert_eq!(f.notification_count(ada), 2);

        f.platform.delete_post(ada, original.id).unwrap();
        assert_eq!(
            f.platform.repost(owner, original.id).unwrap_err(),
            PdsError::PostDeleted
        );
    }

    #[test]
    fn follow_rules() {
        let (f, exp, _, ada, bob) = setup();
        f.platform.follow(ada, exp, bob).unwrap();
        assert_eq!(f.notification_count(bob), 1);
        assert_eq!(
            f.platform.follow(ada, exp, ada).unwrap_err(),
            PdsError::SelfFollow
        );
        assert_eq!(
            f.platform.follow(ada, exp, bob).unwrap_err(),
            PdsError::AlreadyFollowing
        );
        f.platform.unfollow(ada, exp, bob).unwrap();
        assert_eq!(
            f.platform.unfollow(ada, exp, bob).unwrap_err(),
            PdsError::NotFollowing
        );
        assert_eq!(f.notification_count(bob), 1);
    }

    #[test]
    fn deletion_permissions() {
        let (f, exp, _, ada, bob) = setup();
        let moder = f.member(exp, "moder", Role::ContentModerator);
        let root = f.platform.create_post(ada, exp, "root").unwrap();
        let c1 = f.platform.reply(bob, root.id, "c1").unwrap();
        let c2 = f.platform.reply(ada, c1.id, "c2").unwrap();

        assert!(matches!(
            f.platform.delete_post(bob, root.id).unwrap_err(),
            PdsError::Forbidden { .. }
        ));
        let own = f.platform.create_post(bob, exp, "mine").unwrap();
        assert!(f.platform.delete_post(bob, own.id).unwrap().deleted);

        let deleted = f.platform.delete_post(moder, root.id).unwrap();
        assert_eq!(deleted.deleted_by, Some(moder));
        let scope = f.platform.scoped(exp, ada).unwrap();
        let explore = f.platform.explore_feed(&scope, None).unwrap();
        assert!(explore.items.is_empty());
        let st = f.platform.read();
        let data = st.partition(&scope);
        assert!(!data.is_visible(&data.posts[&c1.id]));
        assert!(!data.is_visible(&data.posts[&c2.id]));
        // content retained
        assert_eq!(data.posts[&c2.id].body, "c2");
    }

    #[test]
    fn concurrent_likes_produce_one() {
        let (f, exp, _, ada, bob) = setup();
        let post = f.platform.create_post(ada, exp, "post").unwrap();
        let oks = std::thread::scope(|s| {
            let hs: Vec<_> = (0..16)
                .map(|_| s.spawn(|| f.platform.like(bob, post.id).is_ok()))
                .collect();
            hs.into_iter()
                .map(|h| h.join().unwrap())
                .filter(|ok| *ok)
                .count()
        });
        assert_eq!(oks, 1);
    }

    #[test]
    fn depth_counts_comment_ancestors() {
        let (f, exp, _, ada, bob) = setup();
        let root = f.platform.create_post(ada, exp, "root").unwrap();
        let mut parent = root.id;
        for expected in 1..=4 {
            let c = f.platform.reply(bob, parent, "r").unwrap();
            let scope = f.platform.scoped(exp, ada).unwrap();
            assert_eq!(f.platform.thread_depth(&scope, c.id).unwrap(), expected);
            parent = c.id;
        }
    }
}
