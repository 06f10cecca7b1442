//! Waveform-40 generator (CART waveform benchmark with 19 noise attributes).
//!
//! Each class is a random convex combination of two of three triangular base
//! waves, sampled at 21 points with unit Gaussian noise, followed by pure
//! noise attributes.

use serde::{Deserialize, Serialize};

use super::{StreamError, StreamSource};
use crate::instance::{Instance, Schema};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

pub const WAVE_LEN: usize = 21;

const fn triangle(peak: usize) -> [f64; WAVE_LEN] {
    // 1-based index j, height 6 at j = peak, zero beyond +-6
    let mut out = [0.0; WAVE_LEN];
    let mut i = 0;
    while i < WAVE_LEN {
        let j = i + 1;
        let d = j.abs_diff(peak);
        if d < 6 {
            out[i] = (6 - d) as f64;
        }
        i += 1;
    }
    out
}

/// The three base waves, peaking at 1-based indices 7, 15 and 11.
pub const BASE_WAVES: [[f64; WAVE_LEN]; 3] = [triangle(7), triangle(15), triangle(11)];

/// Base-wave pair mixed for each class.
const CLASS_WAVES: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Expected value of wave attribute `i` (0-based, `< 21`) for `class`.
pub fn class_mean(class: usize, i: usize) -> f64 {
    let (a, b) = CLASS_WAVES[class];
    0.5 * (BASE_WAVES[a][i] + BASE_WAVES[b][i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveformConfig {
    pub seed: u64,
    pub noise_features: usize,
    pub limit: Option<u64>,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            noise_features: 19,
            limit: None,
        }
    }
}

pub struct WaveformStream<F = f64> {
    config: WaveformConfig,
    schema: Schema,
    rng: SeededRng,
    emitted: u64,
    _scalar: std::marker::PhantomData<F>,
}

pub fn waveform40<F: Scalar>(config: WaveformConfig) -> WaveformStream<F> {
    let schema = Schema::new(WAVE_LEN + config.noise_features, 3).expect("waveform schema is valid");
    WaveformStream {
        rng: SeededRng::new(config.seed),
        config,
        schema,
        emitted: 0,
        _scalar: std::marker::PhantomData,
    }
}

impl<F: Scalar> WaveformStream<F> {
    fn generate(&mut self) -> Instance<F> {
        let class = self.rng.below(3);
        let u = self.rng.uniform();
        let (a, b) = CLASS_WAVES[class];
        let mut features = Vec::with_capacity(self.schema.num_features());
        for (wa, wb) in BASE_WAVES[a].iter().zip(&BASE_WAVES[b]) {
            let clean = u * wa + (1.0 - u) * wb;
            features.push(F::of(clean + self.rng.gaussian()));
        }
        for _ in 0..self.config.noise_features {
            features.push(F::of(self.rng.gaussian()));
        }
        let inst = Instance::new(features, class, self.emitted);
        self.emitted += 1;
        inst
    }
}

impl<F: Scalar> StreamSource<F> for WaveformStream<F> {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_instance(&mut self) -> Option<Result<Instance<F>, StreamError>> {
        if self.config.limit.is_some_and(|l| self.emitted >= l) {
            return None;
        }
        Some(Ok(self.generate()))
    }

    fn total_hint(&self) -> Option<u64> {
        self.config.limit
    }

    fn id(&self) -> String {
        format!("waveform{}", self.schema.num_features())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::collect;

    #[test]
    fn base_waves_match_the_canonical_table() {
        let w1: [f64; WAVE_LEN] = [
            0., 1., 2., 3., 4., 5., 6., 5., 4., 3., 2., 1., 0., 0., 0., 0., 0., 0., 0., 0., 0.,
        ];
        assert_eq!(BASE_WAVES[0], w1);
        assert_eq!(BASE_WAVES[1][14], 6.0);
        assert_eq!(BASE_WAVES[1][8], 0.0);
        assert_eq!(BASE_WAVES[1][9], 1.0);
        assert_eq!(BASE_WAVES[1][20], 0.0);
        assert_eq!(BASE_WAVES[2][10], 6.0);
        assert_eq!(BASE_WAVES[2][4], 0.0);
        assert_eq!(BASE_WAVES[2][16], 0.0);
    }

    #[test]
    fn default_schema_is_forty_by_three() {
        let s = waveform40::<f64>(WaveformConfig::default());
        assert_eq!(s.schema().num_features(), 40);
        assert_eq!(s.schema().num_classes(), 3);
    }

    #[test]
    fn limit_ends_stream() {
        let mut s = waveform40::<f32>(WaveformConfig {
            limit: Some(5),
            ..Default::default()
        });
        let got = collect(&mut s).unwrap();
        assert_eq!(got.len(), 5);
        assert_eq!(got[4].seq, 4);
    }

    #[test]
    fn same_seed_same_stream_different_seed_differs() {
        let gen = |seed| {
            let mut s = waveform40::<f64>(WaveformConfig {
                seed,
                limit: Some(1000),
                ..Default::default()
            });
            collect(&mut s).unwrap()
        };
        assert_eq!(gen(3), gen(3));
        assert_ne!(gen(3), gen(4));
    }

    #[test]
    fn f32_stream_tracks_f64_stream() {
        let cfg = WaveformConfig {
            limit: Some(50),
            ..Default::default()
        };
        let a = collect(&mut waveform40::<f64>(cfg.clone())).unwrap();
        let b = collect(&mut waveform40::<f32>(cfg)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.features[3] as f32, y.features[3]);
        }
    }
}
