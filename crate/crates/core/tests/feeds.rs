mod oracles;

use oracles::{Driver, Model};
use pds_core::experiments::permissions::Role;
use pds_core::feeds::{FeedPage, PAGE_SIZE, TRENDING_SIZE};
use pds_core::ids::{ExperimentId, PostId, UserId};
use pds_core::store::ExperimentScope;
use pds_core::testing::Fixture;
use proptest::prelude::*;
use rand::Rng;

fn setup(n: usize) -> (Fixture, ExperimentId, Vec<UserId>) {
    let fx = Fixture::new();
    let owner = fx.researcher("owner");
    let exp = fx.experiment(owner, "Feeds");
    let mut users = vec![owner];
    for i in 0..n.saturating_sub(1) {
        users.push(fx.member(exp, &format!("user{i}"), Role::Regular));
    }
    (fx, exp, users)
}

/// Walks every page and checks page sizes along the way.
fn collect(mut fetch: impl FnMut(Option<&str>) -> FeedPage) -> Vec<PostId> {
    let mut out = Vec::new();
    let mut cursor: Option<String> = None;
    loop {
        let page = fetch(cursor.as_deref());
        assert!(page.items.len() <= PAGE_SIZE);
        out.extend(page.items.iter().map(|v| v.post.id));
        match page.next_cursor {
            Some(c) => {
                assert_eq!(page.items.len(), PAGE_SIZE);
                cursor = Some(c);
            }
            None => return out,
        }
    }
}

fn check_all_feeds(fx: &Fixture, scope: &ExperimentScope, model: &Model, tags: usize) {
    let p = &fx.platform;
    assert_eq!(
        collect(|c| p.home_feed(scope, c).unwrap()),
        model.home(scope.user())
    );
    assert_eq!(
        collect(|c| p.explore_feed(scope, c).unwrap()),
        model.explore()
    );
    for t in 0..tags {
        for tag in [format!("t{t}"), format!("#T{t}")] {
            assert_eq!(
                collect(|c| p.hashtag_feed(scope, &tag, c).unwrap()),
                model.hashtag(tag.trim_start_matches('#')),
                "tag {tag}"
            );
        }
    }
    for q in [
        "climate",
        "ENERGY",
        "école",
        "数据",
        "🌍",
        "#t1",
        "nothing-matches",
    ] {
        assert_eq!(
            collect(|c| p.search(scope, q, c).unwrap().posts),
            model.search(q),
            "query {q}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10, .. ProptestConfig::default() })]

    #[test]
    fn feeds_match_brute_force(seed in any::<u64>(), users in 2usize..50, steps in 100usize..900) {
        let (fx, exp, ids) = setup(users);
        let mut d = Driver::new(&fx, exp, ids.clone(), seed, "feedtest");
        for _ in 0..steps {
            d.step();
        }
        for viewer in ids.iter().take(5) {
            let scope = fx.platform.scoped(exp, *viewer).unwrap();
            check_all_feeds(&fx, &scope, &d.model, d.tags);
        }
    }

    #[test]
    fn trending_matches_brute_force(seed in any::<u64>(), tags in 1usize..30, steps in 0usize..400) {
        let (fx, exp, ids) = setup(4);
        let mut d = Driver::new(&fx, exp, ids.clone(), seed, "trend");
        d.tags = tags;
        for _ in 0..steps {
            d.step();
        }
        let scope = fx.platform.scoped(exp, ids[0]).unwrap();
        let got: Vec<(String, usize)> = fx
            .platform
            .trending(&scope)
            .into_iter()
            .map(|e| (e.tag, e.unique_post_count))
            .collect();
        let want = d.model.trending(TRENDING_SIZE);
        prop_assert_eq!(&got, &want);
        for w in got.windows(2) {
            prop_assert!(w[0].1 >= w[1].1);
        }
    }
}

/// Pages fetched while posts land both ahead of and behind the cursor.
fn paginate_with_inserts(seed: u64) {
    let (fx, exp, ids) = setup(6);
    let mut d = Driver::new(&fx, exp, ids.clone(), seed, "mid");
    for _ in 0..120 {
        d.post();
    }
    let scope = fx.platform.scoped(exp, ids[0]).unwrap();
    let first = d.model.posts.values().map(|p| p.at).min().unwrap();
    let mut seen: Vec<PostId> = Vec::new();
    let mut cursor: Option<String> = None;
    let mut cursor_key = None;
    // (post, cursor key at the time it was inserted)
    let mut inserted = Vec::new();
    loop {
        let page = fx.platform.explore_feed(&scope, cursor.as_deref()).unwrap();
        let expect: Vec<PostId> = d
            .model
            .explore()
            .into_iter()
            .filter(|id| cursor_key.is_none_or(|k| key(&d.model, *id) < k))
            .take(PAGE_SIZE)
            .collect();
        let got: Vec<PostId> = page.items.iter().map(|v| v.post.id).collect();
        assert_eq!(got, expect);
        seen.extend(&got);
        let Some(next) = page.next_cursor else { break };
        cursor = Some(next);
        cursor_key = Some(key(&d.model, *got.last().unwrap()));

        let latest = d.model.posts.values().map(|p| p.at).max().unwrap();
        for _ in 0..d.rng.random_range(0..6) {
            let back = d.rng.random_bool(0.5);
            if back {
                let span = (latest - first).num_seconds().max(1);
                let at = first + chrono::Duration::seconds(d.rng.random_range(0..=span));
                fx.clock.set(at);
            }
            let author = ids[d.rng.random_range(0..ids.len())];
            let body = d.body();
            let id = d.post_by(author, &body);
            inserted.push((id, cursor_key.unwrap()));
            fx.clock.set(latest + chrono::Duration::seconds(1));
        }
    }
    let mut dedup = seen.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(dedup.len(), seen.len(), "duplicates across pages");
    for w in seen.windows(2) {
        assert!(key(&d.model, w[0]) > key(&d.model, w[1]));
    }
    for id in d.model.explore() {
        if seen.contains(&id) {
            continue;
        }
        let landed_ahead = inserted
            .iter()
            .any(|(p, k)| *p == id && key(&d.model, id) > *k);
        assert!(landed_ahead, "gap: {id} never served");
    }
}

fn key(model: &Model, id: PostId) -> (chrono::DateTime<chrono::Utc>, PostId) {
    let p = &model.posts[&id];
    (p.at, p.id)
}

#[test]
fn mid_pagination_inserts_leave_no_gaps() {
    for seed in 0..20 {
        paginate_with_inserts(seed);
    }
}

#[test]
fn forty_five_followee_posts_make_three_pages() {
    let (fx, exp, ids) = setup(3);
    let (viewer, author) = (ids[1], ids[2]);
    fx.platform.follow(viewer, exp, author).unwrap();
    for i in 0..45 {
        fx.platform
            .create_post(author, exp, &format!("post {i}"))
            .unwrap();
        fx.platform
            .create_post(ids[0], exp, "not followed")
            .unwrap();
    }
    let scope = fx.platform.scoped(exp, viewer).unwrap();
    let p1 = fx.platform.home_feed(&scope, None).unwrap();
    let p2 = fx
        .platform
        .home_feed(&scope, p1.next_cursor.as_deref())
        .unwrap();
    let p3 = fx
        .platform
        .home_feed(&scope, p2.next_cursor.as_deref())
        .unwrap();
    assert_eq!(
        (p1.items.len(), p2.items.len(), p3.items.len()),
        (20, 20, 5)
    );
    assert!(p3.next_cursor.is_none());
    assert!(p1
        .items
        .iter()
        .chain(&p2.items)
        .chain(&p3.items)
        .all(|v| v.post.author == author));
}

#[test]
fn trending_tie_break_example() {
    let (fx, exp, ids) = setup(2);
    let u = ids[1];
    let post = |body: &str| {
        fx.clock.advance_secs(1);
        fx.platform.create_post(u, exp, body).unwrap();
    };
    post("#x #y #w");
    post("#x #y #v");
    post("#x #z #u");
    post("#z");
    let scope = fx.platform.scoped(exp, u).unwrap();
    let tags: Vec<(String, usize)> = fx
        .platform
        .trending(&scope)
        .into_iter()
        .map(|e| (e.tag, e.unique_post_count))
        .collect();
    // x:3, z:2 (latest), y:2, then u (post 3) before v (post 2)
    let want = [("x", 3), ("z", 2), ("y", 2), ("u", 1), ("v", 1)];
    assert_eq!(tags, want.map(|(t, n)| (t.to_string(), n)).to_vec());
}
