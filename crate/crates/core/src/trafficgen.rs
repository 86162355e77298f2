//! Seeded synthetic flow generator.
//!
//! Each class profile is a weighted mixture of flow shapes. A shape declares
//! distributions for the primitive quantities of a flow (ports, protocol,
//! duration, packet counts, per-direction packet sizes, inter-arrival
//! burstiness); totals, rates and inter-arrival statistics are then derived
//! from those draws so each record is internally consistent. Rates and
//! durations are log-normal, counts and lengths truncated normal.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowdata::{ClassLabel, Dataset, FeatureSchema, FlowRecord, CANONICAL_FEATURES, NUM_CLASSES};
use crate::learn::forest::tree_seeds;

/// Default per-class record counts, indexed by class id.
pub const DEFAULT_COUNTS: [usize; NUM_CLASSES] = [16_000, 30_000, 16_000, 35_000];

const MAX_PORT: f64 = 65_535.0;
const MAX_PACKET: f64 = 1_500.0;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("generator spec requests no records")]
    EmptySpec,
    #[error("invalid profile for {class}: {reason}")]
    InvalidProfile { class: ClassLabel, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Dist {
    /// Log-normal given by its median and log-space sigma, clamped to `[lo, hi]`.
    LogNormal { median: f64, sigma: f64, lo: f64, hi: f64 },
    /// Normal truncated to `[lo, hi]` by rejection.
    Normal { mean: f64, sd: f64, lo: f64, hi: f64 },
}

impl Dist {
    pub const fn lognormal(median: f64, sigma: f64, lo: f64, hi: f64) -> Self {
        Dist::LogNormal { median, sigma, lo, hi }
    }

    pub const fn normal(mean: f64, sd: f64, lo: f64, hi: f64) -> Self {
        Dist::Normal { mean, sd, lo, hi }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            Dist::LogNormal { lo, hi, .. } | Dist::Normal { lo, hi, .. } => (lo, hi),
        }
    }

    fn validate(&self) -> Result<(), String> {
        let (lo, hi) = self.bounds();
        let ok = match *self {
            Dist::LogNormal { median, sigma, .. } => median > 0.0 && sigma >= 0.0,
            Dist::Normal { sd, .. } => sd >= 0.0,
        };
        if ok && lo <= hi && lo.is_finite() && hi.is_finite() {
            Ok(())
        } else {
            Err(format!("bad distribution {self:?}"))
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Dist::LogNormal { median, sigma, lo, hi } => {
                let d = LogNormal::new(median.ln(), sigma).expect("validated");
                d.sample(rng).clamp(lo, hi)
            }
            Dist::Normal { mean, sd, lo, hi } => {
                let d = Normal::new(mean, sd).expect("validated");
                for _ in 0..64 {
                    let v = d.sample(rng);
                    if (lo..=hi).contains(&v) {
                        return v;
                    }
                }
                mean.clamp(lo, hi)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Port {
    Exact(u16),
    /// Uniform over the inclusive range.
    Range(u16, u16),
}

/// Weighted choice among port picks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortMix(pub Vec<(Port, f64)>);

impl PortMix {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *pick(&self.0, rng) {
            Port::Exact(p) => p as f64,
            Port::Range(lo, hi) => rng.random_range(lo..=hi) as f64,
        }
    }
}

fn pick<'a, T, R: Rng>(items: &'a [(T, f64)], rng: &mut R) -> &'a T {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for (item, w) in items {
        if u < *w {
            return item;
        }
        u -= w;
    }
    &items.last().expect("non-empty").0
}

const EPHEMERAL: Port = Port::Range(1024, 65_535);

/// Primitive-quantity distributions of one kind of flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowShape {
    pub src_port: PortMix,
    pub dst_port: PortMix,
    /// Weighted IP protocol numbers.
    pub protocol: Vec<(u8, f64)>,
    /// Microseconds.
    pub duration: Dist,
    pub fwd_packets: Dist,
    pub bwd_packets: Dist,
    /// Bytes.
    pub fwd_len: Dist,
    pub bwd_len: Dist,
    /// Packet-size standard deviation as a fraction of the mean.
    pub len_spread: Dist,
    /// Inter-arrival coefficient of variation.
    pub iat_cv: Dist,
}

impl FlowShape {
    fn dists(&self) -> [&Dist; 7] {
        [
            &self.duration,
            &self.fwd_packets,
            &self.bwd_packets,
            &self.fwd_len,
            &self.bwd_len,
            &self.len_spread,
            &self.iat_cv,
        ]
    }

    fn validate(&self) -> Result<(), String> {
        for d in self.dists() {
            d.validate()?;
        }
        if self.fwd_packets.bounds().0 < 1.0 {
            return Err("a flow needs at least one forward packet".into());
        }
        if self.bwd_packets.bounds().0 < 0.0 || self.duration.bounds().0 <= 0.0 {
            return Err("counts and durations must be non-negative".into());
        }
        for d in [&self.fwd_len, &self.bwd_len] {
            let (lo, hi) = d.bounds();
            if lo < 0.0 || hi > MAX_PACKET {
                return Err(format!("packet length bounds must lie in [0, {MAX_PACKET}]"));
            }
        }
        if self.src_port.0.is_empty() || self.dst_port.0.is_empty() || self.protocol.is_empty() {
            return Err("empty port or protocol mix".into());
        }
        for (p, _) in self.src_port.0.iter().chain(&self.dst_port.0) {
            if let Port::Range(lo, hi) = p {
                if lo > hi {
                    return Err("empty port range".into());
                }
            }
        }
        Ok(())
    }

    /// One record in canonical feature order.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let src = self.src_port.sample(rng);
        let dst = self.dst_port.sample(rng);
        let proto = *pick(&self.protocol, rng) as f64;
        let dur = self.duration.sample(rng).round().max(1.0);
        let nf = self.fwd_packets.sample(rng).round().max(1.0);
        let nb = self.bwd_packets.sample(rng).round().max(0.0);
        let spread = self.len_spread.sample(rng);

        let (f_mean, f_std, f_min, f_max) = direction(nf, self.fwd_len.sample(rng), spread);
        let (b_mean, _, b_min, b_max) = direction(nb, self.bwd_len.sample(rng), spread);
        let tot_f = nf * f_mean;
        let tot_b = nb * b_mean;
        let n = nf + nb;
        let secs = dur / 1e6;

        let cv = self.iat_cv.sample(rng);
        let iat_mean = dur / (n - 1.0).max(1.0);
        let iat_std = if n > 2.0 { cv * iat_mean } else { 0.0 };
        let iat_max = if n > 1.0 { (iat_mean + 2.0 * iat_std).min(dur) } else { dur };
        let iat_min = if n > 1.0 { (iat_mean - iat_std).max(0.0) * rng.random_range(0.05..1.0) } else { dur };
        let fwd_iat = if nf > 1.0 { dur / (nf - 1.0) } else { 0.0 };
        let bwd_iat = if nb > 1.0 { dur / (nb - 1.0) } else { 0.0 };

        vec![
            src,
            dst,
            proto,
            dur,
            nf,
            nb,
            tot_f,
            tot_b,
            f_max,
            f_min,
            f_mean,
            f_std,
            b_max,
            b_min,
            b_mean,
            (tot_f + tot_b) / secs,
            n / secs,
            iat_mean,
            iat_std,
            iat_max,
            iat_min,
            fwd_iat,
            bwd_iat,
            (tot_f + tot_b) / n,
        ]
    }
}

/// `(mean, std, min, max)` packet sizes for `n` packets around `center`.
fn direction(n: f64, center: f64, spread: f64) -> (f64, f64, f64, f64) {
    if n == 0.0 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let center = center.round();
    if n == 1.0 {
        return (center, 0.0, center, center);
    }
    let std = (spread * center).min(center);
    let max = (center + 1.5 * std).min(MAX_PACKET).round();
    let min = (center - 1.5 * std).max(0.0).round();
    (center, std, min, max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackProfile {
    pub class: ClassLabel,
    /// Weighted mixture of flow shapes.
    pub shapes: Vec<(FlowShape, f64)>,
}

impl AttackProfile {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        pick(&self.shapes, rng).sample(rng)
    }

    fn validate(&self) -> Result<(), GenError> {
        let err = |reason: String| GenError::InvalidProfile {
            class: self.class,
            reason,
        };
        if self.shapes.is_empty() || self.shapes.iter().any(|(_, w)| !(*w > 0.0)) {
            return Err(err("shape weights must be positive".into()));
        }
        for (s, _) in &self.shapes {
            s.validate().map_err(err)?;
        }
        Ok(())
    }
}

fn web_browsing() -> FlowShape {
    FlowShape {
        src_port: PortMix(vec![(EPHEMERAL, 1.0)]),
        dst_port: PortMix(vec![(Port::Exact(443), 0.7), (Port::Exact(80), 0.3)]),
        protocol: vec![(6, 1.0)],
        duration: Dist::lognormal(2.0e6, 1.2, 50.0, 1.2e8),
        fwd_packets: Dist::normal(12.0, 6.0, 1.0, 200.0),
        bwd_packets: Dist::normal(14.0, 8.0, 0.0, 300.0),
        fwd_len: Dist::normal(90.0, 40.0, 0.0, 1460.0),
        bwd_len: Dist::normal(700.0, 300.0, 0.0, 1460.0),
        len_spread: Dist::normal(0.8, 0.3, 0.0, 2.0),
        iat_cv: Dist::lognormal(1.5, 0.5, 0.0, 20.0),
    }
}

fn dns_lookup() -> FlowShape {
    FlowShape {
        src_port: PortMix(vec![(EPHEMERAL, 1.0)]),
        dst_port: PortMix(vec![(Port::Exact(53), 1.0)]),
        protocol: vec![(17, 1.0)],
        duration: Dist::lognormal(3.0e4, 1.0, 10.0, 5.0e6),
        fwd_packets: Dist::normal(1.5, 0.7, 1.0, 6.0),
        bwd_packets: Dist::normal(1.5, 0.7, 0.0, 6.0),
        fwd_len: Dist::normal(45.0, 10.0, 20.0, 300.0),
        bwd_len: Dist::normal(160.0, 60.0, 20.0, 1400.0),
        len_spread: Dist::normal(0.2, 0.1, 0.0, 1.0),
        iat_cv: Dist::lognormal(0.5, 0.5, 0.0, 10.0),
    }
}

fn misc_udp() -> FlowShape {
    FlowShape {
        src_port: PortMix(vec![(EPHEMERAL, 1.0)]),
        dst_port: PortMix(vec![(Port::Exact(123), 0.15), (Port::Exact(443), 0.35), (EPHEMERAL, 0.5)]),
        protocol: vec![(17, 0.8), (6, 0.2)],
        duration: Dist::lognormal(5.0e5, 1.5, 10.0, 1.2e8),
        fwd_packets: Dist::normal(8.0, 6.0, 1.0, 200.0),
        bwd_packets: Dist::normal(8.0, 6.0, 0.0, 200.0),
        fwd_len: Dist::normal(300.0, 200.0, 20.0, 1460.0),
        bwd_len: Dist::normal(400.0, 250.0, 20.0, 1460.0),
        len_spread: Dist::normal(0.6, 0.3, 0.0, 2.0),
        iat_cv: Dist::lognormal(1.2, 0.6, 0.0, 20.0),
    }
}

fn dns_reflection() -> FlowShape {
    FlowShape {
        src_port: PortMix(vec![(EPHEMERAL, 1.0)]),
        dst_port: PortMix(vec![(Port::Exact(53), 0.85), (EPHEMERAL, 0.15)]),
        protocol: vec![(17, 1.0)],
        duration: Dist::lognormal(5.0e5, 1.5, 1.0, 1.2e8),
        fwd_packets: Dist::normal(40.0, 25.0, 1.0, 500.0),
        bwd_packets: Dist::normal(6.0, 5.0, 0.0, 100.0),
        fwd_len: Dist::normal(60.0, 15.0, 20.0, 200.0),
        bwd_len: Dist::normal(700.0, 200.0, 100.0, 1300.0),
        len_spread: Dist::normal(0.3, 0.15, 0.0, 1.0),
        iat_cv: Dist::lognormal(0.6, 0.6, 0.0, 20.0),
    }
}

fn ntp_amplification() -> FlowShape {
    FlowShape {
        src_port: PortMix(vec![(EPHEMERAL, 1.0)]),
        dst_port: PortMix(vec![(Port::Exact(123), 0.85), (EPHEMERAL, 0.15)]),
        protocol: vec![(17, 1.0)],
        duration: Dist::lognormal(8.0e5, 1.3, 1.0, 1.2e8),
        fwd_packets: Dist::normal(30.0, 20.0, 1.0, 500.0),
        bwd_packets: Dist::normal(25.0, 15.0, 0.0, 300.0),
        fwd_len: Dist::normal(50.0, 10.0, 20.0, 200.0),
        bwd_len: Dist::normal(1400.0, 60.0, 1000.0, 1500.0),
        len_spread: Dist::normal(0.1, 0.05, 0.0, 0.5),
        iat_cv: Dist::lognormal(0.5, 0.5, 0.0, 20.0),
    }
}

fn udp_flood() -> FlowShape {
    FlowShape {
        src_port: PortMix(vec![(EPHEMERAL, 1.0)]),
        dst_port: PortMix(vec![(EPHEMERAL, 0.9), (Port::Exact(53), 0.05), (Port::Exact(123), 0.05)]),
        protocol: vec![(17, 1.0)],
        duration: Dist::lognormal(1.0e5, 1.5, 1.0, 1.2e8),
        fwd_packets: Dist::normal(200.0, 120.0, 1.0, 2000.0),
        bwd_packets: Dist::normal(0.3, 0.6, 0.0, 3.0),
        fwd_len: Dist::normal(700.0, 400.0, 1.0, 1472.0),
        bwd_len: Dist::normal(60.0, 20.0, 20.0, 200.0),
        len_spread: Dist::normal(0.05, 0.05, 0.0, 0.3),
        iat_cv: Dist::lognormal(0.2, 0.5, 0.0, 10.0),
    }
}

impl AttackProfile {
    /// Built-in profile for `class`. Each attack class carries a small
    /// share of flows shaped like another class, so the corpus is not
    /// perfectly separable.
    pub fn default_for(class: ClassLabel) -> Self {
        let shapes = match class {
            ClassLabel::Benign => vec![(web_browsing(), 0.55), (dns_lookup(), 0.25), (misc_udp(), 0.20)],
            ClassLabel::DdosDns => vec![(dns_reflection(), 0.994), (udp_flood(), 0.006)],
            ClassLabel::DdosNtp => vec![(ntp_amplification(), 0.994), (dns_reflection(), 0.006)],
            ClassLabel::DdosUdp => vec![(udp_flood(), 0.994), (misc_udp(), 0.006)],
        };
        Self { class, shapes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub counts: [usize; NUM_CLASSES],
    pub seed: u64,
    /// Indexed by class id.
    pub profiles: Vec<AttackProfile>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self::with_counts(DEFAULT_COUNTS, 42)
    }
}

impl GeneratorSpec {
    pub fn with_counts(counts: [usize; NUM_CLASSES], seed: u64) -> Self {
        Self {
            counts,
            seed,
            profiles: ClassLabel::ALL.iter().map(|&c| AttackProfile::default_for(c)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.counts.iter().sum::<usize>() == 0 {
            return Err(GenError::EmptySpec);
        }
        for (i, c) in ClassLabel::ALL.iter().enumerate() {
            let p = self.profiles.get(i).ok_or_else(|| GenError::InvalidProfile {
                class: *c,
                reason: "missing profile".into(),
            })?;
            if p.class != *c {
                return Err(GenError::InvalidProfile {
                    class: *c,
                    reason: format!("profile at index {i} is for {}", p.class),
                });
            }
            p.validate()?;
        }
        Ok(())
    }
}

/// Labeled records in canonical schema, shuffled, deterministic per seed.
/// Each class draws from its own seeded stream, so changing one class's
/// count leaves the other classes' records unchanged.
pub fn generate_dataset(g: &GeneratorSpec) -> Result<Dataset, GenError> {
    g.validate()?;
    let seeds = tree_seeds(g.seed, NUM_CLASSES + 1);
    let mut records = Vec::with_capacity(g.counts.iter().sum());
    for c in ClassLabel::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds[c.id()]);
        let profile = &g.profiles[c.id()];
        for _ in 0..g.counts[c.id()] {
            records.push(FlowRecord::new(profile.sample(&mut rng), Some(c)));
        }
    }
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds[NUM_CLASSES]));
    Ok(Dataset::new(FeatureSchema::canonical(), records).expect("canonical width"))
}

/// Physical plausibility of a canonical-schema record: ports in
/// `[0, 65535]`, every other feature finite and non-negative.
pub fn within_physical_bounds(values: &[f64]) -> bool {
    values.len() == CANONICAL_FEATURES.len()
        && values.iter().all(|v| v.is_finite() && *v >= 0.0)
        && values[0] <= MAX_PORT
        && values[1] <= MAX_PORT
        && values[0].fract() == 0.0
        && values[1].fract() == 0.0
}
