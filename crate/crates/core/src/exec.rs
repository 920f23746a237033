//! Index-ordered parallel execution and per-stage call bookkeeping.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use crate::backend::CallRecord;

/// Applies `f` to every item on up to `workers` threads. Results come back in
/// item order regardless of completion order.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(i, item)| f(i, item)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let result = f(i, item);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every slot is filled"))
        .collect()
}

/// A stage result together with the backend requests it issued, in
/// deterministic order, and the number of parse fallbacks it hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Staged<T> {
    pub value: T,
    pub calls: Vec<CallRecord>,
    pub fallbacks: usize,
}

impl<T> Staged<T> {
    pub fn new(value: T) -> Self {
        Self {
            value,
            calls: Vec::new(),
            fallbacks: 0,
        }
    }

    /// Moves `other`'s calls and fallbacks into `self`, returning its value.
    pub fn absorb<U>(&mut self, other: Staged<U>) -> U {
        self.calls.extend(other.calls);
        self.fallbacks += other.fallbacks;
        other.value
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Staged<U> {
        Staged {
            value: f(self.value),
            calls: self.calls,
            fallbacks: self.fallbacks,
        }
    }

    /// Calls that reached the backend.
    pub fn backend_calls(&self) -> usize {
        self.calls.iter().filter(|c| !c.from_cache).count()
    }
}
