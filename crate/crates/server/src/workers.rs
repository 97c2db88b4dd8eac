//! Agent worker threads and periodic snapshot saving.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use pds_core::Platform;

/// Threads that pull queued agent tasks and run one turn each.
pub struct Workers {
    platform: Arc<Platform>,
    stop: Arc<AtomicBool>,
    handles: Vec<JoinHandle<()>>,
}

impl Workers {
    pub fn start(platform: Arc<Platform>, count: usize) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let handles = (0..count)
            .map(|i| {
                let platform = platform.clone();
                let stop = stop.clone();
                std::thread::Builder::new()
                    .name(format!("agent-worker-{i}"))
                    .spawn(move || {
                        while !stop.load(Ordering::Acquire) {
                            let Some(task) = platform.next_task(Duration::from_millis(500)) else {
                                continue;
                            };
                            if let Err(e) = platform.run_turn(task) {
                                tracing::warn!(%task, error = %e, "agent task failed to run");
                            }
                        }
                    })
                    .expect("spawn worker")
            })
            .collect();
        Self {
            platform,
            stop,
            handles,
        }
    }

    /// Lets running turns finish, then joins.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::Release);
        self.platform.wake_workers();
        for h in self.handles {
            let _ = h.join();
        }
    }
}

/// Saves the snapshot whenever the state revision moved.
pub struct Persister {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<()>,
}

impl Persister {
    pub fn start(platform: Arc<Platform>, path: PathBuf, every: Duration) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::Builder::new()
            .name("snapshot".into())
            .spawn(move || {
                // nothing on disk yet counts as a change
                let mut saved = path.exists().then(|| platform.revision());
                let mut last = Instant::now();
                loop {
                    let stopping = flag.load(Ordering::Acquire);
                    if stopping || last.elapsed() >= every {
                        let rev = platform.revision();
                        if saved != Some(rev) {
                            match platform.save_snapshot(&path) {
                                Ok(()) => saved = Some(rev),
                                Err(e) => tracing::error!(error = %e, "snapshot save failed"),
                            }
                        }
                        last = Instant::now();
                    }
                    if stopping {
                        break;
                    }
                    std::thread::sleep(Duration::from_millis(100));
                }
            })
            .expect("spawn persister");
        Self { stop, handle }
    }

    /// Saves once more if needed and stops.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::Release);
        let _ = self.handle.join();
    }
}
