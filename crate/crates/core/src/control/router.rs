//! Delivers tagged feedback to whoever announced it is waiting for it.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::wire::In2Message;

#[derive(Debug, Default)]
struct Mailboxes {
    expected: BTreeSet<String>,
    delivered: BTreeMap<String, In2Message>,
}

/// Tag-addressed mailboxes. A tag must be announced with [`expect`] before
/// its feedback arrives; feedback for unannounced tags is not routed.
///
/// [`expect`]: FeedbackRouter::expect
#[derive(Debug, Default)]
pub struct FeedbackRouter {
    inner: Mutex<Mailboxes>,
    ready: Condvar,
}

impl FeedbackRouter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn expect(&self, tag: &str) {
        self.inner
            .lock()
            .expect("router lock")
            .expected
            .insert(tag.to_string());
    }

    /// Drops an expectation and any feedback already parked for it.
    pub fn cancel(&self, tag: &str) {
        let mut m = self.inner.lock().expect("router lock");
        m.expected.remove(tag);
        m.delivered.remove(tag);
    }

    /// Parks `msg` for its waiter. Returns whether it was routed. A second
    /// delivery for the same tag replaces the first.
    pub fn deliver(&self, msg: &In2Message) -> bool {
        let Some(tag) = &msg.probe_tag else {
            return false;
        };
        let mut m = self.inner.lock().expect("router lock");
        if !m.expected.contains(tag) {
            return false;
        }
        m.delivered.insert(tag.clone(), msg.clone());
        drop(m);
        self.ready.notify_all();
        true
    }

    /// Blocks until feedback for `tag` arrives or `timeout` passes. On
    /// timeout the expectation stays in place so the wait can be retried.
    pub fn wait(&self, tag: &str, timeout: Duration) -> Option<In2Message> {
        let deadline = Instant::now() + timeout;
        let mut m = self.inner.lock().expect("router lock");
        loop {
            if let Some(msg) = m.delivered.remove(tag) {
                m.expected.remove(tag);
                return Some(msg);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            m = self
                .ready
                .wait_timeout(m, deadline - now)
                .expect("router lock")
                .0;
        }
    }

    pub fn pending(&self) -> usize {
        self.inner.lock().expect("router lock").expected.len()
    }
}
