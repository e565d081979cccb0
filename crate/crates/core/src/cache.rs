//! LRU cache of per-signature selections with single-flight misses.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::CorpusVersion;
use crate::tokenize::normalize_text;

pub const DEFAULT_CAPACITY: usize = 1024;

/// Task signature: normalized query, domain hint, corpus version and a
/// configuration digest. History is deliberately not part of the key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(query: &str, domain_hint: Option<&str>, version: &CorpusVersion, config_digest: &str) -> Self {
        let mut h = Sha256::new();
        for part in [
            normalize_text(query).as_str(),
            domain_hint.unwrap_or(""),
            version.0.as_str(),
            config_digest,
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        // distinguishes None from Some("")
        h.update([domain_hint.is_some() as u8]);
        CacheKey(hex::encode(h.finalize()))
    }

    /// Digest of any serializable configuration, for use as `config_digest`.
    pub fn config_digest<T: Serialize>(config: &T) -> String {
        let bytes = serde_json::to_vec(config).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    /// Times the compute function actually ran.
    pub computations: u64,
    pub entries: usize,
    pub capacity: usize,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvictPolicy {
    /// Drop least-recently-used entries until at most `keep` remain.
    Lru { keep: usize },
    Key(CacheKey),
    All,
}

enum Slot<V> {
    Pending,
    Ready { value: V, tick: u64 },
}

struct Inner<V> {
    slots: HashMap<CacheKey, Slot<V>>,
    /// Recency order of ready entries.
    lru: BTreeMap<u64, CacheKey>,
    tick: u64,
    stats: CacheStats,
}

impl<V> Inner<V> {
    fn touch(&mut self, key: &CacheKey) {
        self.tick += 1;
        let now = self.tick;
        if let Some(Slot::Ready { tick, .. }) = self.slots.get_mut(key) {
            self.lru.remove(tick);
            *tick = now;
            self.lru.insert(now, key.clone());
        }
    }

    fn evict_to(&mut self, keep: usize) -> usize {
        let mut n = 0;
        while self.lru.len() > keep {
            let (_, key) = self.lru.pop_first().expect("non-empty");
            self.slots.remove(&key);
            n += 1;
        }
        self.stats.evictions += n as u64;
        n
    }
}

/// Thread-safe LRU cache. Concurrent misses on one key run the compute
/// function once; the other callers wait and receive the stored value.
/// A capacity of zero disables storage entirely.
pub struct SelectionCache<V> {
    capacity: usize,
    inner: Mutex<Inner<V>>,
    ready: Condvar,
}

impl<V: Clone> SelectionCache<V> {
    pub fn new(capacity: usize) -> Self {
        SelectionCache {
            capacity,
            inner: Mutex::new(Inner {
                slots: HashMap::new(),
                lru: BTreeMap::new(),
                tick: 0,
                stats: CacheStats {
                    capacity,
                    ..Default::default()
                },
            }),
            ready: Condvar::new(),
        }
    }

    /// Returns the cached value and `true`, or computes, stores and returns
    /// it with `false`. A failed computation stores nothing and is returned
    /// to the caller that ran it; waiters then retry.
    pub fn get_or_compute<E>(&self, key: &CacheKey, compute: impl FnOnce() -> Result<V, E>) -> Result<(V, bool), E> {
        let mut inner = self.inner.lock().expect("cache lock");
        if self.capacity == 0 {
            inner.stats.misses += 1;
            inner.stats.computations += 1;
            drop(inner);
            return compute().map(|v| (v, false));
        }
        loop {
            match inner.slots.get(key) {
                Some(Slot::Ready { value, .. }) => {
                    let value = value.clone();
                    inner.stats.hits += 1;
                    inner.touch(key);
                    return Ok((value, true));
                }
                Some(Slot::Pending) => {
                    inner = self.ready.wait(inner).expect("cache lock");
                }
                None => break,
            }
        }
        inner.slots.insert(key.clone(), Slot::Pending);
        inner.stats.misses += 1;
        inner.stats.computations += 1;
        drop(inner);

        let outcome = compute();

        let mut inner = self.inner.lock().expect("cache lock");
        match &outcome {
            Ok(value) => {
                inner.slots.insert(
                    key.clone(),
                    Slot::Ready {
                        value: value.clone(),
                        tick: 0,
                    },
                );
                inner.touch(key);
                let capacity = self.capacity;
                inner.evict_to(capacity);
            }
            Err(_) => {
                inner.slots.remove(key);
            }
        }
        inner.stats.entries = inner.lru.len();
        drop(inner);
        self.ready.notify_all();
        outcome.map(|v| (v, false))
    }

    pub fn get(&self, key: &CacheKey) -> Option<V> {
        let mut inner = self.inner.lock().expect("cache lock");
        let value = match inner.slots.get(key) {
            Some(Slot::Ready { value, .. }) => value.clone(),
            _ => return None,
        };
        inner.touch(key);
        Some(value)
    }

    /// Removes entries per `policy` and returns how many were removed.
    pub fn evict(&self, policy: EvictPolicy) -> usize {
        let mut inner = self.inner.lock().expect("cache lock");
        let n = match policy {
            EvictPolicy::Lru { keep } => inner.evict_to(keep),
            EvictPolicy::All => inner.evict_to(0),
            EvictPolicy::Key(key) => match inner.slots.get(&key) {
                Some(Slot::Ready { tick, .. }) => {
                    let tick = *tick;
                    inner.lru.remove(&tick);
                    inner.slots.remove(&key);
                    inner.stats.evictions += 1;
                    1
                }
                _ => 0,
            },
        };
        inner.stats.entries = inner.lru.len();
        n
    }

    pub fn stats(&self) -> CacheStats {
        let inner = self.inner.lock().expect("cache lock");
        CacheStats {
            entries: inner.lru.len(),
            ..inner.stats
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").lru.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

impl<V: Clone> Default for SelectionCache<V> {
    fn default() -> Self {
        SelectionCache::new(DEFAULT_CAPACITY)
    }
}

impl<V> fmt::Debug for SelectionCache<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SelectionCache").field("capacity", &self.capacity).finish()
    }
}
