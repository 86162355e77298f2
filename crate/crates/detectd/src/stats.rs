//! Sliding window of recent classifications in one-second buckets.

use std::collections::VecDeque;

use fsnt_core::flowdata::{ClassLabel, NUM_CLASSES};
use serde::{Deserialize, Serialize};

use crate::decision::Decision;

#[derive(Debug, Clone, Copy)]
struct Bucket {
    second: u64,
    per_class: [u64; NUM_CLASSES],
    blocked: u64,
}

#[derive(Debug)]
pub struct StatsWindow {
    window: u64,
    buckets: VecDeque<Bucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class_id: usize,
    pub label: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub seconds: u64,
    pub requests: u64,
    pub blocked: u64,
    pub allowed: u64,
    pub per_class: Vec<ClassCount>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineBucket {
    /// Unix second the bucket starts at.
    pub t: u64,
    pub requests: u64,
    pub blocked: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSnapshot {
    pub window: WindowSummary,
    /// One bucket per second of the window, oldest first.
    pub timeline: Vec<TimelineBucket>,
}

impl StatsWindow {
    pub fn new(window_seconds: u64) -> Self {
        Self {
            window: window_seconds.max(1),
            buckets: VecDeque::new(),
        }
    }

    pub fn window_seconds(&self) -> u64 {
        self.window
    }

    pub fn set_window(&mut self, seconds: u64) {
        self.window = seconds.max(1);
    }

    fn prune(&mut self, now: u64) {
        let oldest = (now + 1).saturating_sub(self.window);
        while self.buckets.front().is_some_and(|b| b.second < oldest) {
            self.buckets.pop_front();
        }
    }

    pub fn record(&mut self, second: u64, class: ClassLabel, decision: Decision) {
        self.prune(second);
        // concurrent handlers can finish slightly out of order
        let pos = self.buckets.iter().rposition(|b| b.second <= second);
        let idx = match pos {
            Some(i) if self.buckets[i].second == second => i,
            _ => {
                let at = pos.map_or(0, |i| i + 1);
                self.buckets.insert(
                    at,
                    Bucket {
                        second,
                        per_class: [0; NUM_CLASSES],
                        blocked: 0,
                    },
                );
                at
            }
        };
        let b = &mut self.buckets[idx];
        b.per_class[class.id()] += 1;
        if decision == Decision::Block {
            b.blocked += 1;
        }
    }

    pub fn snapshot(&mut self, now: u64) -> WindowSnapshot {
        self.prune(now);
        let start = (now + 1).saturating_sub(self.window);
        let mut per_class = [0u64; NUM_CLASSES];
        let mut blocked = 0;
        let mut timeline: Vec<TimelineBucket> = (start..=now)
            .map(|t| TimelineBucket {
                t,
                requests: 0,
                blocked: 0,
            })
            .collect();
        for b in self.buckets.iter().filter(|b| b.second <= now) {
            let slot = &mut timeline[(b.second - start) as usize];
            slot.requests = b.per_class.iter().sum();
            slot.blocked = b.blocked;
            for (acc, v) in per_class.iter_mut().zip(b.per_class) {
                *acc += v;
            }
            blocked += b.blocked;
        }
        let requests: u64 = per_class.iter().sum();
        WindowSnapshot {
            window: WindowSummary {
                seconds: self.window,
                requests,
                blocked,
                allowed: requests - blocked,
                per_class: ClassLabel::ALL
                    .iter()
                    .map(|c| ClassCount {
                        class_id: c.id(),
                        label: c.name().to_string(),
                        count: per_class[c.id()],
                    })
                    .collect(),
            },
            timeline,
        }
    }
}
