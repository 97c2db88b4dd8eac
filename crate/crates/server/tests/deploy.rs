//! Startup wiring: configuration flags to a running platform and back.

use std::sync::Arc;

use clap::Parser;
use pds_core::agents::NewAgent;
use pds_core::experiments::{NewExperiment, Visibility};
use pds_core::identity::ResearcherDetails;
use pds_core::testing::{pdf, reg};
use pds_server::config::ServeArgs;
use pds_server::events::EventHub;
use pds_server::{build_platform, ensure_admin};

#[derive(Parser)]
struct Flags {
    #[command(flatten)]
    serve: ServeArgs,
}

fn flags(dir: &std::path::Path, extra: &[&str]) -> ServeArgs {
    let script = dir.join("script.json");
    std::fs::write(&script, r#"{"default": ["DECISION: like"]}"#).unwrap();
    let mut argv = vec![
        "pds".to_string(),
        format!("--db-url={}", dir.join("state.json").display()),
        format!("--email-sink-dir={}", dir.join("mail").display()),
        "--inference-mode=stub".into(),
        format!("--inference-stub-script={}", script.display()),
        "--secret-key=deploy-test-key".into(),
    ];
    argv.extend(extra.iter().map(|s| s.to_string()));
    Flags::parse_from(argv).serve
}

const ADMIN: [&str; 3] = [
    "--admin-handle=root_admin",
    "--admin-email=root@example.org",
    "--admin-password=a long admin password",
];

#[test]
fn admin_is_seeded_once_and_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let args = flags(dir.path(), &ADMIN);
    let platform = build_platform(&args, Arc::new(EventHub::default())).unwrap();
    ensure_admin(&platform, &args.admin).unwrap();
    let admin = platform.account_by_handle("root_admin").unwrap();
    ensure_admin(&platform, &args.admin).unwrap();
    assert_eq!(platform.account_by_handle("root_admin").unwrap().id, admin.id);
    platform.save_snapshot(&args.store.snapshot_path()).unwrap();

    let again = build_platform(&flags(dir.path(), &[]), Arc::new(EventHub::default())).unwrap();
    assert_eq!(again.account_by_handle("root_admin").unwrap().id, admin.id);
}

#[test]
fn without_admin_flags_nobody_is_created() {
    let dir = tempfile::tempdir().unwrap();
    let args = flags(dir.path(), &["--admin-handle=half_set"]);
    let platform = build_platform(&args, Arc::new(EventHub::default())).unwrap();
    ensure_admin(&platform, &args.admin).unwrap();
    assert!(platform.account_by_handle("half_set").is_err());
}

#[test]
fn sink_mail_and_stub_inference_are_wired() {
    let dir = tempfile::tempdir().unwrap();
    let mut extra = ADMIN.to_vec();
    extra.push("--inference-default-url=http://stub.invalid/v1");
    let args = flags(dir.path(), &extra);
    let platform = build_platform(&args, Arc::new(EventHub::default())).unwrap();
    ensure_admin(&platform, &args.admin).unwrap();

    platform.request_password_reset("root@example.org").unwrap();
    let mail: Vec<_> = std::fs::read_dir(dir.path().join("mail")).unwrap().collect();
    assert_eq!(mail.len(), 1);

    let admin = platform.account_by_handle("root_admin").unwrap().id;
    let (owner, request) = platform
        .request_researcher_access(
            reg("lab_lead"),
            ResearcherDetails {
                position_title: "Lecturer".into(),
                institution: "Somewhere".into(),
                department: "Sociology".into(),
                intent: "Study replies".into(),
            },
        )
        .unwrap();
    platform.decide_researcher_request(admin, request.id, true).unwrap();
    let owner = owner.id;
    let exp = platform
        .create_experiment(
            owner,
            NewExperiment {
                title: "Wiring".into(),
                description: "startup check".into(),
                visibility: Visibility::Private,
                irb_document: Some(pdf()),
            },
        )
        .unwrap()
        .id;
    let mut bot = NewAgent::new("wired_bot", "You like things.");
    bot.min_seconds_between_actions = 0;
    platform.register_agent(owner, exp, bot).unwrap();
    let post = platform.create_post(owner, exp, "is anyone listening?").unwrap();
    platform.drain_tasks();
    let thread = platform.thread(&platform.scoped(exp, owner).unwrap(), post.id).unwrap();
    let bot = platform.account_by_handle("wired_bot").unwrap().id;
    let tasks = platform.agent_tasks(owner, bot).unwrap();
    assert_eq!(thread.post.like_count, 1, "{tasks:?}");
}

#[test]
fn bad_default_inference_url_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let args = flags(dir.path(), &["--inference-default-url=not a url"]);
    assert!(build_platform(&args, Arc::new(EventHub::default())).is_err());
}
