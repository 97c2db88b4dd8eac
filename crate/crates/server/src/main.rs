use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use pds_core::agents::Script;
use pds_core::store::export::ExportBundle;
use pds_server::config::{AdminArgs, ServeArgs, StoreArgs};
use pds_server::stub::StubServer;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "pds", version, about = "Discourse sandbox server")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    #[command(flatten)]
    serve: ServeArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP server (the default).
    Serve,
    /// Serve scripted chat completions for local agent testing.
    StubInference {
        #[arg(long, env = "PDS_INFERENCE_STUB_SCRIPT")]
        script: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8090")]
        bind: SocketAddr,
    },
    /// Create the administrator in the snapshot and exit.
    SeedAdmin {
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        admin: AdminArgs,
    },
    /// Load a non-anonymized export zip into the snapshot as a new experiment.
    Import {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        bundle: PathBuf,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .init();
    let cli = Cli::parse();
    match cli.command.unwrap_or(Command::Serve) {
        Command::Serve => pds_server::serve(cli.serve).await,
        Command::StubInference { script, bind } => {
            let text = std::fs::read_to_string(&script)
                .with_context(|| format!("reading {}", script.display()))?;
            StubServer::serve(bind, Script::parse(&text)?).await?;
            Ok(())
        }
        Command::SeedAdmin { store, admin } => {
            anyhow::ensure!(
                admin.handle.is_some() && admin.email.is_some() && admin.password.is_some(),
                "admin handle, email and password are all required"
            );
            let platform = pds_server::open_store(&store)?;
            pds_server::ensure_admin(&platform, &admin)?;
            platform.save_snapshot(&store.snapshot_path())?;
            Ok(())
        }
        Command::Import { store, bundle } => {
            let bytes = std::fs::read(&bundle)
                .with_context(|| format!("reading {}", bundle.display()))?;
            let platform = pds_server::open_store(&store)?;
            let id = platform.import_bundle(&ExportBundle::from_zip(&bytes)?)?;
            platform.save_snapshot(&store.snapshot_path())?;
            println!("imported experiment {id}");
            Ok(())
        }
    }
}
