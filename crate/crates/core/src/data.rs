//! Labeled EEG segment sets, baseline correction and the synthetic
//! spatially-localized generator.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Montage, Real, Result, Tensor};

/// One labeled `C×TP` segment, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub label: usize,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EegSegmentSet {
    channel_names: Vec<String>,
    sample_rate_hz: f32,
    n_classes: usize,
    time_points: usize,
    segments: Vec<Segment>,
}

impl EegSegmentSet {
    pub fn new(
        channel_names: Vec<String>,
        sample_rate_hz: f32,
        n_classes: usize,
        time_points: usize,
        segments: Vec<Segment>,
    ) -> Result<Self> {
        if channel_names.is_empty() || time_points == 0 {
            return Err(Error::InvalidConfig(
                "segment set needs channels and time points".into(),
            ));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sample rate {sample_rate_hz} must be positive"
            )));
        }
        if n_classes == 0 {
            return Err(Error::InvalidConfig("need at least one class".into()));
        }
        let len = channel_names.len() * time_points;
        for (i, s) in segments.iter().enumerate() {
            if s.label >= n_classes {
                return Err(Error::LabelOutOfRange {
                    label: s.label,
                    classes: n_classes,
                });
            }
            if s.data.len() != len {
                return Err(Error::InvalidConfig(format!(
                    "segment {i} has {} values, expected {len}",
                    s.data.len()
                )));
            }
        }
        Ok(Self {
            channel_names,
            sample_rate_hz,
            n_classes,
            time_points,
            segments,
        })
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn time_points(&self) -> usize {
        self.time_points
    }

    pub fn sample_rate_hz(&self) -> f32 {
        self.sample_rate_hz
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.label).collect()
    }

    pub fn segment_tensor<T: Real>(&self, index: usize) -> Result<Tensor<T>> {
        let s = self.segments.get(index).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "segment index {index} out of range for {} segments",
                self.len()
            ))
        })?;
        Tensor::from_vec(
            &[self.channels(), self.time_points],
            s.data.iter().map(|&v| T::cast(v as f64)).collect(),
        )
    }

    /// Stacks the selected segments into a `B×C×TP` tensor with their labels.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let per = self.channels() * self.time_points;
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = self.segments.get(i).ok_or_else(|| {
                Error::InvalidConfig(format!("segment index {i} out of range for {} segments", self.len()))
            })?;
            data.extend(s.data.iter().map(|&v| T::cast(v as f64)));
            labels.push(s.label);
        }
        Ok((
            Tensor::from_vec(&[indices.len(), self.channels(), self.time_points], data)?,
            labels,
        ))
    }

    /// Subset in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let segments = indices
            .iter()
            .map(|&i| {
                self.segments.get(i).cloned().ok_or_else(|| {
                    Error::InvalidConfig(format!("segment index {i} out of range for {} segments", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            self.channel_names.clone(),
            self.sample_rate_hz,
            self.n_classes,
            self.time_points,
            segments,
        )
    }
}

/// Number of samples covered by `baseline_ms` at the set's rate.
pub fn baseline_samples(sample_rate_hz: f32, baseline_ms: f64) -> usize {
    libm::round(baseline_ms * sample_rate_hz as f64 / 1000.0) as usize
}

/// Subtracts, per segment and channel, the mean of the first `baseline_ms`.
pub fn baseline_correct(set: &EegSegmentSet, baseline_ms: f64) -> Result<EegSegmentSet> {
    if baseline_ms.is_nan() || baseline_ms <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "baseline window {baseline_ms} ms must be positive"
        )));
    }
    let n = baseline_samples(set.sample_rate_hz, baseline_ms);
    let tp = set.time_points;
    if n == 0 || n > tp {
        return Err(Error::InvalidConfig(format!(
            "baseline window of {n} samples does not fit a {tp}-sample segment"
        )));
    }
    let segments = set
        .segments
        .iter()
        .map(|s| {
            let mut data = s.data.clone();
            for row in data.chunks_exact_mut(tp) {
                let mean = row[..n].iter().map(|&v| v as f64).sum::<f64>() / n as f64;
                row.iter_mut().for_each(|v| *v = (*v as f64 - mean) as f32);
            }
            Segment { label: s.label, data }
        })
        .collect();
    Ok(EegSegmentSet {
        segments,
        ..set.clone()
    })
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub montage: Montage,
    pub n_classes: usize,
    /// Grid cells carrying the class oscillation, one list per class.
    pub active_cells: Vec<Vec<(usize, usize)>>,
    pub band_hz: (f64, f64),
    pub amplitude: f64,
    pub noise_sigma: f64,
    pub time_points: usize,
    pub segments_per_class: usize,
    pub sample_rate_hz: f32,
    pub seed: u64,
}

impl SynthSpec {
    /// Spec with `cells_per_class` active cells per class, taken from
    /// disjoint left-to-right bands of the grid.
    pub fn localized(montage: &Montage, n_classes: usize, cells_per_class: usize) -> Result<Self> {
        if n_classes == 0 || cells_per_class == 0 || n_classes * cells_per_class > montage.channel_count() {
            return Err(Error::InvalidConfig(format!(
                "{n_classes} classes x {cells_per_class} cells do not fit {} channels",
                montage.channel_count()
            )));
        }
        let mut order: Vec<(usize, usize)> = montage.channels().iter().map(|e| (e.col, e.row)).collect();
        order.sort_unstable();
        let c = order.len();
        let active_cells = (0..n_classes)
            .map(|k| {
                let start = k * c / n_classes;
                let end = (k + 1) * c / n_classes;
                let band = &order[start..end];
                // centre of the band
                let offset = (band.len() - cells_per_class) / 2;
                band[offset..offset + cells_per_class]
                    .iter()
                    .map(|&(col, row)| (row, col))
                    .collect()
            })
            .collect();
        Ok(Self {
            montage: montage.clone(),
            n_classes,
            active_cells,
            band_hz: (8.0, 13.0),
            amplitude: 4.0,
            noise_sigma: 1.0,
            time_points: 128,
            segments_per_class: 100,
            sample_rate_hz: 200.0,
            seed: 0,
        })
    }

    fn active_channels(&self) -> Result<Vec<Vec<usize>>> {
        if self.active_cells.len() != self.n_classes || self.n_classes == 0 {
            return Err(Error::InvalidConfig(format!(
                "{} active-cell sets for {} classes",
                self.active_cells.len(),
                self.n_classes
            )));
        }
        if self.amplitude.is_nan() || self.amplitude <= 0.0 || self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig(
                "amplitude must be positive and sigma non-negative".into(),
            ));
        }
        let (lo, hi) = self.band_hz;
        let band_ok = lo > 0.0 && hi >= lo;
        if !band_ok || self.time_points == 0 || self.sample_rate_hz.is_nan() || self.sample_rate_hz <= 0.0 {
            return Err(Error::InvalidConfig("band, rate and length must be positive".into()));
        }
        self.active_cells
            .iter()
            .enumerate()
            .map(|(k, cells)| {
                if cells.is_empty() {
                    return Err(Error::InvalidConfig(format!("class {k} has no active cells")));
                }
                cells
                    .iter()
                    .map(|&(r, c)| {
                        self.montage.channel_at(r, c).ok_or_else(|| {
                            Error::InvalidConfig(format!("active cell ({r}, {c}) of class {k} has no electrode"))
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

/// Gaussian noise on every channel plus a random-phase sinusoid (frequency
/// drawn from the band) on the class's active channels. Labels cycle
/// `0, 1, …, K−1`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<EegSegmentSet> {
    let active = spec.active_channels()?;
    let c = spec.montage.channel_count();
    let tp = spec.time_points;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fs = spec.sample_rate_hz as f64;
    let mut segments = Vec::with_capacity(spec.n_classes * spec.segments_per_class);
    for i in 0..spec.n_classes * spec.segments_per_class {
        let label = i % spec.n_classes;
        let mut data: Vec<f64> = (0..c * tp)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                spec.noise_sigma * z
            })
            .collect();
        let (lo, hi) = spec.band_hz;
        let freq = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let phase = rng.random_range(0.0..core::f64::consts::TAU);
        let wave: Vec<f64> = (0..tp)
            .map(|t| spec.amplitude * libm::sin(core::f64::consts::TAU * freq * t as f64 / fs + phase))
            .collect();
        for &ch in &active[label] {
            for (d, w) in data[ch * tp..(ch + 1) * tp].iter_mut().zip(&wave) {
                *d += w;
            }
        }
        segments.push(Segment {
            label,
            data: data.into_iter().map(|v| v as f32).collect(),
        });
    }
    EegSegmentSet::new(
        spec.montage.channel_names().map(String::from).collect(),
        spec.sample_rate_hz,
        spec.n_classes,
        tp,
        segments,
    )
}

/// Montage of `channels` electrodes filling an `h×w` grid row by row,
/// skipping the cells listed in `holes`.
pub fn filled_montage(name: &str, h: usize, w: usize, channels: usize, holes: &[(usize, usize)]) -> Result<Montage> {
    let cells: Vec<(usize, usize)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|cell| !holes.contains(cell))
        .take(channels)
        .collect();
    if cells.len() < channels {
        return Err(Error::InvalidMontage(format!(
            "{channels} channels do not fit {h}x{w} minus holes"
        )));
    }
    Montage::new(
        name,
        h,
        w,
        cells
            .into_iter()
            .enumerate()
            .map(|(i, (r, c))| crate::Electrode::new(format!("E{i}"), r, c))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn montage_5x6() -> Montage {
        filled_montage(
            "m",
            5,
            6,
            20,
            &[
                (0, 0),
                (0, 5),
                (4, 0),
                (4, 5),
                (0, 1),
                (0, 4),
                (4, 1),
                (4, 4),
                (1, 0),
                (1, 5),
            ],
        )
        .unwrap()
    }

    fn spec() -> SynthSpec {
        let mut s = SynthSpec::localized(&montage_5x6(), 2, 4).unwrap();
        s.time_points = 64;
        s.segments_per_class = 10;
        s.seed = 5;
        s
    }

    #[test]
    fn localized_sets_are_disjoint() {
        let s = spec();
        assert_eq!(s.active_cells.len(), 2);
        assert!(s.active_cells.iter().all(|c| c.len() == 4));
        assert!(s.active_cells[0].iter().all(|c| !s.active_cells[1].contains(c)));
    }

    #[test]
    fn noise_free_limit_is_zero_off_the_active_set() {
        let mut s = spec();
        s.noise_sigma = 0.0;
        let set = generate_synthetic(&s).unwrap();
        let active = s.active_channels().unwrap();
        for seg in set.segments() {
            for ch in 0..20 {
                let row = &seg.data[ch * 64..(ch + 1) * 64];
                if active[seg.label].contains(&ch) {
                    assert!(row.iter().any(|&v| v != 0.0));
                } else {
                    assert!(row.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn deterministic_and_balanced() {
        let a = generate_synthetic(&spec()).unwrap();
        let b = generate_synthetic(&spec()).unwrap();
        assert_eq!(a, b);
        let labels = a.labels();
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 10);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 10);
    }

    #[test]
    fn bad_active_cell_is_rejected() {
        let mut s = spec();
        s.active_cells[1].push((0, 0));
        assert!(generate_synthetic(&s).is_err());
    }

    #[test]
    fn baseline_window_length() {
        assert_eq!(baseline_samples(200.0, 100.0), 20);
        assert_eq!(baseline_samples(250.0, 100.0), 25);
    }

    #[test]
    fn baseline_of_constant_is_zero() {
        let set = EegSegmentSet::new(
            vec!["a".into(), "b".into()],
            200.0,
            2,
            40,
            vec![Segment {
                label: 1,
                data: vec![3.5; 80],
            }],
        )
        .unwrap();
        let out = baseline_correct(&set, 100.0).unwrap();
        assert!(out.segments()[0].data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn baseline_window_mean_and_idempotence() {
        let mut s = spec();
        s.noise_sigma = 2.0;
        let set = generate_synthetic(&s).unwrap();
        let once = baseline_correct(&set, 100.0).unwrap();
        for seg in once.segments() {
            for row in seg.data.chunks(64) {
                let m = row[..20].iter().map(|&v| v as f64).sum::<f64>() / 20.0;
                assert!(m.abs() < 1e-6);
            }
        }
        let twice = baseline_correct(&once, 100.0).unwrap();
        for (a, b) in once.segments().iter().zip(twice.segments()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn baseline_too_long() {
        let set = EegSegmentSet::new(vec!["a".into()], 200.0, 1, 10, vec![]).unwrap();
        assert!(baseline_correct(&set, 100.0).is_err());
        assert!(baseline_correct(&set, 1.0).is_err());
    }

    #[test]
    fn validation() {
        let bad = EegSegmentSet::new(
            vec!["a".into()],
            200.0,
            2,
            2,
            vec![Segment {
                label: 2,
                data: vec![0.0; 2],
            }],
        );
        assert_eq!(bad.unwrap_err(), Error::LabelOutOfRange { label: 2, classes: 2 });
        let bad = EegSegmentSet::new(
            vec!["a".into()],
            200.0,
            2,
            2,
            vec![Segment {
                label: 0,
                data: vec![0.0; 3],
            }],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn batches_stack_segments() {
        let set = generate_synthetic(&spec()).unwrap();
        let (x, labels) = set.batch::<f64>(&[3, 0]).unwrap();
        assert_eq!(x.shape(), &[2, 20, 64]);
        assert_eq!(labels, vec![1, 0]);
        assert_eq!(x.data()[0], set.segments()[3].data[0] as f64);
        assert!(set.batch::<f32>(&[99]).is_err());
    }
}
