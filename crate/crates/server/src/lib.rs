//! HTTP gateway for the discourse sandbox: REST routes, the live event
//! stream, outbound email, agent workers and snapshot persistence around a
//! [`pds_core::Platform`].

pub mod api;
pub mod config;
pub mod error;
pub mod events;
pub mod mailer;
pub mod openapi;
pub mod stub;
pub mod workers;

use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use pds_core::agents::inference::{HttpInference, Inference};
use pds_core::agents::{InferenceDefaults, Script, ScriptedInference};
use pds_core::identity::{ConsentKind, Registration};
use pds_core::mail::{EmailProvider, SinkProvider};
use pds_core::moderation::{LexiconScorer, Moderator};
use pds_core::{Platform, PlatformConfig, SystemClock};

use crate::api::AppState;
use crate::config::{AdminArgs, EmailMode, InferenceMode, ServeArgs, StoreArgs};
use crate::events::EventHub;
use crate::workers::{Persister, Workers};

fn load_script(path: &std::path::Path) -> anyhow::Result<Script> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading stub script {}", path.display()))?;
    Script::parse(&text).with_context(|| format!("parsing stub script {}", path.display()))
}

/// Builds the platform described by `args`, loading the snapshot if one exists.
pub fn build_platform(args: &ServeArgs, hub: Arc<EventHub>) -> anyhow::Result<Platform> {
    let default_inference = match &args.inference_default_url {
        Some(url) => Some(InferenceDefaults {
            endpoint: url::Url::parse(url).context("PDS_INFERENCE_DEFAULT_URL")?,
            model: args.inference_default_model.clone(),
            api_key: args.inference_default_key.clone(),
        }),
        None => None,
    };
    let config = PlatformConfig {
        base_url: args.base_url.trim_end_matches('/').to_string(),
        default_inference,
        ..PlatformConfig::default()
    };
    let mailer: Arc<dyn EmailProvider> = match args.email_mode {
        EmailMode::Sink => Arc::new(
            SinkProvider::new(&args.email_sink_dir)
                .with_context(|| format!("email sink {}", args.email_sink_dir.display()))?,
        ),
        EmailMode::Smtp => {
            let url = args
                .smtp_url
                .as_deref()
                .context("PDS_SMTP_URL is required when PDS_EMAIL_MODE=smtp")?;
            Arc::new(mailer::SmtpProvider::new(url, &args.email_from)?)
        }
    };
    let inference: Arc<dyn Inference> = match args.inference_mode {
        InferenceMode::Http => Arc::new(HttpInference::new()),
        InferenceMode::Stub => {
            let path = args
                .inference_stub_script
                .as_deref()
                .context("PDS_INFERENCE_STUB_SCRIPT is required when PDS_INFERENCE_MODE=stub")?;
            Arc::new(ScriptedInference::new(load_script(path)?))
        }
    };
    let scorer = match &args.moderation_lexicon {
        Some(path) => LexiconScorer::from_file(path)
            .with_context(|| format!("lexicon {}", path.display()))?,
        None => LexiconScorer::shipped(),
    };
    if args.store.secret_key.is_empty() {
        tracing::warn!("PDS_SECRET_KEY is empty; agent API keys are sealed with a well-known key");
    }
    let mut builder = Platform::builder()
        .config(config)
        .clock(Arc::new(SystemClock))
        .mailer(mailer)
        .events(hub)
        .inference(inference)
        .moderator(Moderator::new(Arc::new(scorer)))
        .secret_key(args.store.secret_key.clone());
    let path = args.store.snapshot_path();
    if path.exists() {
        let json = std::fs::read_to_string(&path)
            .with_context(|| format!("reading snapshot {}", path.display()))?;
        builder = builder.snapshot_json(&json)?;
        tracing::info!(path = %path.display(), "loaded snapshot");
    }
    Ok(builder.build())
}

/// Creates the administrator unless the handle already exists.
pub fn ensure_admin(platform: &Platform, admin: &AdminArgs) -> anyhow::Result<()> {
    let (Some(handle), Some(email), Some(password)) = (&admin.handle, &admin.email, &admin.password)
    else {
        return Ok(());
    };
    if platform.account_by_handle(handle).is_ok() {
        return Ok(());
    }
    platform.seed_admin(Registration {
        handle: handle.clone(),
        email: email.clone(),
        password: password.clone(),
        display_name: handle.clone(),
        consents: ConsentKind::REQUIRED.to_vec(),
    })?;
    tracing::info!(%handle, "seeded administrator");
    Ok(())
}

/// Loads a snapshot for offline commands, or starts empty.
pub fn open_store(store: &StoreArgs) -> anyhow::Result<Platform> {
    let mut builder = Platform::builder().secret_key(store.secret_key.clone());
    let path = store.snapshot_path();
    if path.exists() {
        builder = builder.snapshot_json(&std::fs::read_to_string(&path)?)?;
    }
    Ok(builder.build())
}

pub async fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let hub = Arc::new(EventHub::default());
    let platform = {
        let (args, hub) = (args.clone(), hub.clone());
        tokio::task::spawn_blocking(move || -> anyhow::Result<Platform> {
            let platform = build_platform(&args, hub)?;
            ensure_admin(&platform, &args.admin)?;
            Ok(platform)
        })
        .await??
    };
    let platform = Arc::new(platform);
    let workers = Workers::start(platform.clone(), args.workers);
    let persister = Persister::start(
        platform.clone(),
        args.store.snapshot_path(),
        Duration::from_secs(args.save_interval.max(1)),
    );
    let app = api::router(AppState::new(platform, hub));
    let listener = tokio::net::TcpListener::bind(args.bind)
        .await
        .with_context(|| format!("binding {}", args.bind))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
    tokio::task::spawn_blocking(move || {
        workers.shutdown();
        persister.shutdown();
    })
    .await?;
    Ok(())
}
