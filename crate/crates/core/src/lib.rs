//! Flow-based DDoS detection: data handling, feature extraction, eight
//! classifiers, evaluation and a synthetic traffic generator.

pub mod eval;
pub mod features;
pub mod flowdata;
pub mod learn;
pub mod pipeline;
pub mod preprocess;
pub mod trafficgen;
