//! `GET /api/events`: the caller's live events as server-sent events.

use std::convert::Infallible;
use std::time::Duration;

use axum::extract::State;
use axum::http::HeaderMap;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::Extension;
use futures::stream::{self, StreamExt};
use serde::Deserialize;
use tokio::sync::broadcast::error::RecvError;

use super::{AppState, Caller, QueryArgs};
use crate::events::Sequenced;

pub const KEEPALIVE: Duration = Duration::from_secs(25);

/// Tells the client some events were dropped and it should refetch.
pub const RESYNC: &str = "resync";

fn to_event(item: &Sequenced) -> Event {
    Event::default()
        .id(item.id.to_string())
        .event(item.event.name())
        .data(serde_json::to_string(&item.event).expect("event serializes"))
}

fn resync() -> Event {
    Event::default().event(RESYNC).data("{}")
}

#[derive(Debug, Deserialize)]
pub struct StreamQuery {
    /// Same as the `Last-Event-ID` header, for clients that cannot set it.
    pub last_event_id: Option<u64>,
}

pub async fn events(
    State(state): State<AppState>,
    Extension(caller): Extension<Caller>,
    headers: HeaderMap,
    QueryArgs(q): QueryArgs<StreamQuery>,
) -> Response {
    let last_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse().ok())
        .or(q.last_event_id);
    let sub = state.hub.subscribe(caller.user, last_id);
    let last = sub.replay.last().map_or(sub.after, |e| e.id);
    let head: Vec<Result<Event, Infallible>> = sub
        .gap
        .then(resync)
        .into_iter()
        .chain(sub.replay.iter().map(to_event))
        .map(Ok)
        .collect();
    let live = stream::unfold((sub.live, last), |(mut rx, mut last)| async move {
        loop {
            match rx.recv().await {
                Ok(item) if item.id <= last => continue,
                Ok(item) => {
                    last = item.id;
                    return Some((Ok(to_event(&item)), (rx, last)));
                }
                Err(RecvError::Lagged(_)) => return Some((Ok(resync()), (rx, last))),
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream::iter(head).chain(live))
        .keep_alive(KeepAlive::new().interval(state.keepalive).text("keepalive"))
        .into_response()
}
