use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Shift-paired two-class spectrogram benchmark.
///
/// Samples are generated in pairs. The class-0 sample holds a narrowband
/// line at `centers[0] + jitter` plus noise, and the whole clip is scaled by
/// an amplitude; its class-1 partner is the same spectrogram rolled circularly along
/// frequency by `centers[1] - centers[0]`. The two classes therefore contain
/// the same patterns up to a circular frequency shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Input channels; each draws its own gain.
    #[serde(default = "one")]
    pub channels: usize,
    /// Leading channels that carry the line; the rest hold noise only.
    #[serde(default = "one")]
    pub signal_channels: usize,
    pub time: usize,
    pub freq: usize,
    pub centers: [usize; 2],
    /// Line width in bins.
    pub width: usize,
    /// Circular frequency shifts drawn uniformly per pair.
    pub jitter: Vec<isize>,
    /// Multiplicative gain range `[lo, hi]` applied to the whole clip, sampled
    /// uniformly per pair.
    pub amplitude_jitter: Option<(f64, f64)>,
    pub noise_std: f64,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            channels: 1,
            signal_channels: 1,
            time: 8,
            freq: 64,
            centers: [16, 48],
            width: 3,
            jitter: vec![0],
            amplitude_jitter: None,
            noise_std: 0.1,
            n_train: 200,
            n_test: 200,
            seed: 42,
        }
    }
}

/// Per-sample generation record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleInfo {
    pub label: usize,
    pub jitter: isize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `(N, 1, T, F)`.
    pub x: Tensor,
    pub labels: Vec<usize>,
    pub info: Vec<SampleInfo>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Indices `(2k, 2k + 1)` of each shift-related pair.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        (0..self.len() / 2).map(|k| (2 * k, 2 * k + 1))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            x: self.x.gather_batch(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            info: indices.iter().map(|&i| self.info[i]).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub train: Dataset,
    pub test: Dataset,
}

impl SynthSpec {
    /// Three-channel variant for the amplitude ablation: the line appears in
    /// the first two channels, the third is noise only, every channel gets an
    /// independent gain from `[0.25, 4]` and the noise is strong enough that
    /// no mode saturates.
    pub fn ablation() -> Self {
        Self {
            channels: 3,
            signal_channels: 2,
            amplitude_jitter: Some((0.25, 4.0)),
            noise_std: 1.5,
            ..Self::default()
        }
    }

    /// Circular shift relating class 1 to class 0.
    pub fn class_shift(&self) -> isize {
        self.centers[1] as isize - self.centers[0] as isize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.time == 0 || self.freq == 0 || self.width == 0 || self.channels == 0 {
            return bad("channels, time, freq and width must be >= 1".into());
        }
        if self.signal_channels == 0 || self.signal_channels > self.channels {
            return bad(format!(
                "signal_channels must be in 1..={}, got {}",
                self.channels, self.signal_channels
            ));
        }
        if self.jitter.is_empty() {
            return bad("jitter set must not be empty".into());
        }
        if self.n_train == 0 || self.n_test == 0 || self.n_train % 2 != 0 || self.n_test % 2 != 0 {
            return bad(format!(
                "n_train and n_test must be positive and even for balanced pairs, got {} and {}",
                self.n_train, self.n_test
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be finite and >= 0, got {}", self.noise_std));
        }
        if let Some((lo, hi)) = self.amplitude_jitter {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("amplitude range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"));
            }
        }
        for &center in &self.centers {
            for &j in &self.jitter {
                let lo = center as isize + j - (self.width / 2) as isize;
                let hi = lo + self.width as isize - 1;
                if lo < 0 || hi >= self.freq as isize {
                    return Err(Error::OutOfRange(format!(
                        "pattern at center {center} with jitter {j} covers bins {lo}..={hi}, outside 0..{}",
                        self.freq
                    )));
                }
            }
        }
        Ok(())
    }

    fn pattern_bins(&self, center: usize, jitter: isize) -> std::ops::Range<usize> {
        let lo = (center as isize + jitter - (self.width / 2) as isize) as usize;
        lo..lo + self.width
    }
}

fn gen_split(spec: &SynthSpec, n: usize, rng: &mut Rng) -> Result<Dataset> {
    let (c_len, t_len, f_len) = (spec.channels, spec.time, spec.freq);
    let shift = spec.class_shift();
    let mut data = Vec::with_capacity(n * c_len * t_len * f_len);
    let mut labels = Vec::with_capacity(n);
    let mut info = Vec::with_capacity(n);
    for _ in 0..n / 2 {
        let jitter = spec.jitter[rng.below(spec.jitter.len())];
        let gains: Vec<f64> = (0..c_len)
            .map(|_| match spec.amplitude_jitter {
                Some((lo, hi)) if lo < hi => rng.uniform(lo, hi),
                Some((lo, _)) => lo,
                None => 1.0,
            })
            .collect();
        let mut base = Tensor::zeros([1, c_len, t_len, f_len])?;
        for c in 0..spec.signal_channels {
            for t in 0..t_len {
                for f in spec.pattern_bins(spec.centers[0], jitter) {
                    base.set(0, c, t, f, 1.0);
                }
            }
        }
        if spec.noise_std > 0.0 {
            for v in base.data_mut() {
                *v += rng.normal(0.0, spec.noise_std);
            }
        }
        for (c, &g) in gains.iter().enumerate() {
            for t in 0..t_len {
                let i = base.index(0, c, t, 0);
                base.data_mut()[i..i + f_len].iter_mut().for_each(|v| *v *= g);
            }
        }
        let partner = base.roll_freq(shift);
        data.extend_from_slice(base.data());
        data.extend_from_slice(partner.data());
        for label in 0..2 {
            labels.push(label);
            info.push(SampleInfo {
                label,
                jitter,
                amplitude: gains[0],
            });
        }
    }
    Ok(Dataset {
        x: Tensor::new([n, c_len, t_len, f_len], data)?,
        labels,
        info,
    })
}

/// Deterministic train/test split for `spec.seed`.
pub fn gen_synth(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let train = gen_split(spec, spec.n_train, &mut root.fork(1))?;
    let test = gen_split(spec, spec.n_test, &mut root.fork(2))?;
    Ok(SynthData {
        spec: spec.clone(),
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_unjittered_class0_samples_are_identical() {
        let spec = SynthSpec {
            noise_std: 0.0,
            ..SynthSpec::default()
        };
        let data = gen_synth(&spec).unwrap();
        let first = data.train.x.gather_batch(&[0]).unwrap();
        for (i, &label) in data.train.labels.iter().enumerate() {
            if label == 0 {
                assert_eq!(data.train.x.gather_batch(&[i]).unwrap(), first);
            }
        }
        assert_eq!(first.row(0, 0, 3)[15..18], [1.0, 1.0, 1.0]);
        assert_eq!(first.sum(), 24.0);
    }

    #[test]
    fn class1_is_circular_shift_of_class0() {
        let spec = SynthSpec {
            amplitude_jitter: Some((0.25, 4.0)),
            ..SynthSpec::default()
        };
        let data = gen_synth(&spec).unwrap();
        for split in [&data.train, &data.test] {
            for (a, b) in split.pairs() {
                let x0 = split.x.gather_batch(&[a]).unwrap();
                let x1 = split.x.gather_batch(&[b]).unwrap();
                assert_eq!(x0.roll_freq(32), x1);
            }
        }
    }

    #[test]
    fn classes_are_balanced() {
        let data = gen_synth(&SynthSpec::default()).unwrap();
        assert_eq!(data.train.len(), 200);
        assert_eq!(data.train.labels.iter().filter(|&&l| l == 1).count(), 100);
        assert_eq!(data.test.labels.iter().filter(|&&l| l == 0).count(), 100);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let spec = SynthSpec::default();
        assert_eq!(gen_synth(&spec).unwrap(), gen_synth(&spec).unwrap());
        let other = SynthSpec { seed: 7, ..spec };
        assert_ne!(gen_synth(&other).unwrap().train.x, gen_synth(&SynthSpec::default()).unwrap().train.x);
    }

    #[test]
    fn pattern_out_of_range_is_rejected() {
        let spec = SynthSpec {
            jitter: vec![0, 16],
            ..SynthSpec::default()
        };
        assert!(matches!(gen_synth(&spec), Err(Error::OutOfRange(_))));
        let odd = SynthSpec {
            n_train: 7,
            ..SynthSpec::default()
        };
        assert!(gen_synth(&odd).is_err());
    }

    #[test]
    fn ablation_variant_has_noise_only_channel() {
        let spec = SynthSpec {
            noise_std: 0.0,
            ..SynthSpec::ablation()
        };
        let data = gen_synth(&spec).unwrap();
        assert_eq!(data.train.x.shape(), [200, 3, 8, 64]);
        let x = &data.train.x;
        assert!(x.get(0, 0, 0, 16) > 0.0 && x.get(0, 1, 0, 16) > 0.0);
        assert!((0..64).all(|f| x.get(0, 2, 0, f) == 0.0));
        assert_eq!(x.gather_batch(&[0]).unwrap().roll_freq(32), x.gather_batch(&[1]).unwrap());
    }

    #[test]
    fn amplitudes_stay_in_range() {
        let spec = SynthSpec {
            amplitude_jitter: Some((0.25, 4.0)),
            ..SynthSpec::default()
        };
        let data = gen_synth(&spec).unwrap();
        assert!(data.train.info.iter().all(|s| (0.25..=4.0).contains(&s.amplitude)));
    }
}
