//! ShallowConvNet-style host classifier, optionally fronted by a TRM.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    mean_pool_backward, mean_pool_forward, pooled_len, safe_log_backward, safe_log_forward, square_backward,
    square_forward, Conv2d, Dense, Dropout, ParamMut, Parameterized,
};
use crate::trm::TrmModule;
use crate::{Error, Mode, Montage, Real, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct HostNetConfig {
    pub n_temporal_filters: usize,
    pub temporal_kernel_len: usize,
    pub pool_len: usize,
    pub pool_stride: usize,
    pub dropout_p: f64,
    pub n_classes: usize,
}

impl HostNetConfig {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_temporal_filters: 40,
            temporal_kernel_len: 25,
            pool_len: 75,
            pool_stride: 15,
            dropout_p: 0.5,
            n_classes,
        }
    }

    /// Number of pooled outputs per filter for a segment of `time_points`.
    pub fn pooled_outputs(&self, time_points: usize) -> Option<usize> {
        let conv_len = time_points.checked_sub(self.temporal_kernel_len)? + 1;
        pooled_len(conv_len, self.pool_len, self.pool_stride)
    }

    fn validate(&self, time_points: usize) -> Result<usize> {
        if self.n_temporal_filters == 0
            || self.temporal_kernel_len == 0
            || self.pool_len == 0
            || self.pool_stride == 0
            || self.n_classes == 0
        {
            return Err(Error::InvalidConfig("host sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidConfig(format!(
                "dropout probability {} not in [0, 1)",
                self.dropout_p
            )));
        }
        self.pooled_outputs(time_points).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "{time_points} time points is shorter than temporal kernel {} plus pool {} minus 1",
                self.temporal_kernel_len, self.pool_len
            ))
        })
    }
}

#[derive(Debug, Clone)]
struct HostCache<T> {
    spatial_out: Tensor<T>,
    pooled: Tensor<T>,
    batch: usize,
}

/// Temporal conv → spatial conv → square → mean pool → log → dropout → dense.
#[derive(Debug, Clone)]
pub struct ShallowHost<T> {
    config: HostNetConfig,
    channels: usize,
    time_points: usize,
    pooled: usize,
    temporal: Conv2d<T>,
    spatial: Conv2d<T>,
    dropout: Dropout<T>,
    dense: Dense<T>,
    cache: Option<HostCache<T>>,
}

impl<T: Real> ShallowHost<T> {
    pub fn new(config: &HostNetConfig, channels: usize, time_points: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidConfig("host needs at least one channel".into()));
        }
        let pooled = config.validate(time_points)?;
        let f = config.n_temporal_filters;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let temporal = Conv2d::new(1, f, (1, config.temporal_kernel_len), true, &mut rng);
        let spatial = Conv2d::new(f, f, (channels, 1), true, &mut rng);
        let dense = Dense::new(f * pooled, config.n_classes, &mut rng);
        Ok(Self {
            config: config.clone(),
            channels,
            time_points,
            pooled,
            temporal,
            spatial,
            dropout: Dropout::new(config.dropout_p, seed ^ 0x5eed_d20f)?,
            dense,
            cache: None,
        })
    }

    pub fn config(&self) -> &HostNetConfig {
        &self.config
    }

    pub fn temporal_mut(&mut self) -> &mut Conv2d<T> {
        &mut self.temporal
    }

    pub fn spatial_mut(&mut self) -> &mut Conv2d<T> {
        &mut self.spatial
    }

    pub fn dense_mut(&mut self) -> &mut Dense<T> {
        &mut self.dense
    }

    fn set_input_grad(&mut self, needed: bool) {
        self.temporal.set_input_grad(needed);
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let [b, c, tp] = input.dims3("host input")?;
        if c != self.channels || tp != self.time_points {
            return Err(Error::ShapeMismatch {
                context: "host input",
                expected: vec![b, self.channels, self.time_points],
                found: vec![b, c, tp],
            });
        }
        let x = input.clone().reshape(&[b, 1, c, tp])?;
        let h = self.temporal.forward(&x)?;
        let spatial_out = self.spatial.forward(&h)?;
        let sq = square_forward(&spatial_out);
        let pooled = mean_pool_forward(&sq, self.config.pool_len, self.config.pool_stride)?;
        let logged = safe_log_forward(&pooled);
        let dropped = self.dropout.forward(&logged, mode);
        let flat = dropped.reshape(&[b, self.config.n_temporal_filters * self.pooled])?;
        let logits = self.dense.forward(&flat)?;
        logits.ensure_finite("host logits")?;
        self.cache = Some(HostCache {
            spatial_out,
            pooled,
            batch: b,
        });
        Ok(logits)
    }

    /// Returns the gradient for the `B×C×TP` input when it was requested.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        let cache = self.cache.take().ok_or(Error::ShapeMismatch {
            context: "host backward without forward",
            expected: vec![],
            found: vec![],
        })?;
        let g = self.dense.backward(grad_logits)?;
        let g = g.reshape(cache.pooled.shape())?;
        let g = self.dropout.backward(&g);
        let g = safe_log_backward(&g, &cache.pooled);
        let g = mean_pool_backward(
            &g,
            cache.spatial_out.shape(),
            self.config.pool_len,
            self.config.pool_stride,
        )?;
        let g = square_backward(&g, &cache.spatial_out);
        let g = self.spatial.backward(&g)?.ok_or(Error::ShapeMismatch {
            context: "spatial conv input gradient",
            expected: vec![],
            found: vec![],
        })?;
        let gx = self.temporal.backward(&g)?;
        let out = gx
            .map(|gx| gx.reshape(&[cache.batch, self.channels, self.time_points]))
            .transpose()?;
        self.cache = Some(cache);
        Ok(out)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
        self.temporal.clear_cache();
        self.spatial.clear_cache();
    }
}

impl<T: Real> Parameterized<T> for ShallowHost<T> {
    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        for (prefix, params) in [
            ("host.temporal", self.temporal.params_mut()),
            ("host.spatial", self.spatial.params_mut()),
            ("host.dense", self.dense.params_mut()),
        ] {
            for mut p in params {
                p.name = format!("{prefix}.{}", p.name);
                out.push(p);
            }
        }
        out
    }
}

/// One row of a model summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSummary {
    pub name: String,
    /// Output shape for a batch of one.
    pub output_shape: Vec<usize>,
    pub params: usize,
}

/// Raw EEG → (optional TRM) → host → logits.
#[derive(Debug, Clone)]
pub struct ClassifierModel<T> {
    trm: Option<TrmModule<T>>,
    host: ShallowHost<T>,
    channels: usize,
    time_points: usize,
}

/// Builds a classifier for `channels × time_points` segments.
///
/// `trm_k` selects the TRM base kernel; a montage with `channels` electrodes
/// is then required. Host and TRM initial weights come from separate streams
/// of `seed`, so the host starts identically with or without a TRM.
pub fn build_model<T: Real>(
    config: &HostNetConfig,
    channels: usize,
    time_points: usize,
    montage: Option<&Montage>,
    trm_k: Option<usize>,
    seed: u64,
) -> Result<ClassifierModel<T>> {
    let mut host = ShallowHost::new(config, channels, time_points, seed)?;
    let trm = match trm_k {
        None => None,
        Some(k) => {
            let montage = montage.ok_or_else(|| Error::InvalidConfig("TRM needs a montage".into()))?;
            if montage.channel_count() != channels {
                return Err(Error::ChannelMismatch {
                    expected: channels,
                    found: montage.channel_count(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2);
            Some(TrmModule::new(montage, k, &mut rng)?)
        }
    };
    host.set_input_grad(trm.is_some());
    Ok(ClassifierModel {
        trm,
        host,
        channels,
        time_points,
    })
}

impl<T: Real> ClassifierModel<T> {
    pub fn trm(&self) -> Option<&TrmModule<T>> {
        self.trm.as_ref()
    }

    pub fn trm_mut(&mut self) -> Option<&mut TrmModule<T>> {
        self.trm.as_mut()
    }

    pub fn host(&self) -> &ShallowHost<T> {
        &self.host
    }

    pub fn host_mut(&mut self) -> &mut ShallowHost<T> {
        &mut self.host
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn time_points(&self) -> usize {
        self.time_points
    }

    pub fn n_classes(&self) -> usize {
        self.host.config.n_classes
    }

    pub fn reseed_dropout(&mut self, seed: u64) {
        self.host.dropout.reseed(seed);
    }

    /// Makes the host return its input gradient even without a TRM.
    pub fn with_input_grad(mut self) -> Self {
        self.host.set_input_grad(true);
        self
    }

    /// `B×C×TP` → `B×K` logits.
    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        input.ensure_finite("model input")?;
        match self.trm.as_mut() {
            Some(trm) => {
                let mapped = trm.forward(input, mode)?;
                self.host.forward(&mapped, mode)
            }
            None => self.host.forward(input, mode),
        }
    }

    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        let g = self.host.backward(grad_logits)?;
        match (self.trm.as_mut(), g) {
            (Some(trm), Some(g)) => Ok(Some(trm.backward(&g)?)),
            (_, g) => Ok(g),
        }
    }

    pub fn clear_cache(&mut self) {
        self.host.clear_cache();
        if let Some(trm) = self.trm.as_mut() {
            trm.clear_cache();
        }
    }

    pub fn host_parameter_count(&mut self) -> usize {
        self.host.trainable_parameter_count()
    }

    pub fn trm_parameter_count(&mut self) -> usize {
        self.trm.as_mut().map_or(0, |t| t.trainable_parameter_count())
    }

    pub fn summary(&self) -> Vec<LayerSummary> {
        let mut rows = Vec::new();
        let (c, tp) = (self.channels, self.time_points);
        if let Some(trm) = &self.trm {
            let (gh, gw) = trm.montage().grid();
            rows.push(LayerSummary {
                name: "trm.scatter".into(),
                output_shape: vec![tp, 1, gh, gw],
                params: 0,
            });
            for (i, (step, conv)) in trm.schedule().steps.iter().zip(trm.convs()).enumerate() {
                let params = conv.weight.len() + conv.bias.as_ref().map_or(0, |b| b.len());
                rows.push(LayerSummary {
                    name: format!("trm.conv{i}"),
                    output_shape: vec![tp, c, step.out_h, step.out_w],
                    params,
                });
                rows.push(LayerSummary {
                    name: format!("trm.bn{i}"),
                    output_shape: vec![tp, c, step.out_h, step.out_w],
                    params: 0,
                });
            }
            rows.push(LayerSummary {
                name: "trm.output".into(),
                output_shape: vec![c, tp],
                params: 0,
            });
        }
        let cfg = &self.host.config;
        let f = cfg.n_temporal_filters;
        let t1 = tp - cfg.temporal_kernel_len + 1;
        let conv_params = |c: &Conv2d<T>| c.weight.len() + c.bias.as_ref().map_or(0, |b| b.len());
        rows.push(LayerSummary {
            name: "host.temporal".into(),
            output_shape: vec![f, c, t1],
            params: conv_params(&self.host.temporal),
        });
        rows.push(LayerSummary {
            name: "host.spatial".into(),
            output_shape: vec![f, 1, t1],
            params: conv_params(&self.host.spatial),
        });
        for name in ["host.square", "host.pool", "host.log", "host.dropout"] {
            let shape = if name == "host.square" {
                vec![f, 1, t1]
            } else {
                vec![f, 1, self.host.pooled]
            };
            rows.push(LayerSummary {
                name: name.into(),
                output_shape: shape,
                params: 0,
            });
        }
        rows.push(LayerSummary {
            name: "host.dense".into(),
            output_shape: vec![cfg.n_classes],
            params: self.host.dense.weight.len() + self.host.dense.bias.len(),
        });
        rows
    }
}

impl<T: Real> Parameterized<T> for ClassifierModel<T> {
    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        if let Some(trm) = self.trm.as_mut() {
            out.extend(trm.params_mut());
        }
        out.extend(self.host.params_mut());
        out
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.trm.as_mut().map_or_else(Vec::new, |t| t.buffers_mut())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montage::Electrode;
    use crate::nn::{grad_check, softmax_cross_entropy};
    use crate::trm::{count_parameters, derive_schedule};
    use rand_distr::{Distribution, StandardNormal};

    fn grid_montage(c: usize, h: usize, w: usize) -> Montage {
        let channels = (0..c).map(|i| Electrode::new(format!("E{i}"), i / w, i % w)).collect();
        Montage::new("grid", h, w, channels).unwrap()
    }

    fn small_config(n_classes: usize) -> HostNetConfig {
        HostNetConfig {
            n_temporal_filters: 3,
            temporal_kernel_len: 5,
            pool_len: 20,
            pool_stride: 10,
            dropout_p: 0.0,
            n_classes,
        }
    }

    #[test]
    fn published_input_shapes_build() {
        let cfg = HostNetConfig::new(2);
        let mut m = build_model::<f32>(&cfg, 55, 280, None, None, 0).unwrap();
        let x = Tensor::zeros(&[3, 55, 280]);
        assert_eq!(m.forward(&x, Mode::Eval).unwrap().shape(), &[3, 2]);

        let cfg4 = HostNetConfig::new(4);
        let mut m = build_model::<f32>(&cfg4, 44, 1000, None, None, 0).unwrap();
        assert_eq!(
            m.forward(&Tensor::zeros(&[1, 44, 1000]), Mode::Eval).unwrap().shape(),
            &[1, 4]
        );
    }

    #[test]
    fn trm_adds_exactly_its_parameter_count() {
        let cases = [
            (55, (7, 9), 280, 5, 46860),
            (55, (7, 9), 280, 3, 64130),
            (44, (7, 7), 1000, 5, 18612),
            (44, (7, 7), 1000, 3, 35332),
        ];
        for (c, (h, w), tp, k, expected) in cases {
            let montage = grid_montage(c, h, w);
            let cfg = HostNetConfig::new(2);
            let mut raw = build_model::<f32>(&cfg, c, tp, None, None, 1).unwrap();
            let mut with = build_model::<f32>(&cfg, c, tp, Some(&montage), Some(k), 1).unwrap();
            assert_eq!(raw.host_parameter_count(), with.host_parameter_count());
            let diff = with.trainable_parameter_count() - raw.trainable_parameter_count();
            assert_eq!(diff, expected);
            assert_eq!(diff, count_parameters(c, &derive_schedule((h, w), k).unwrap()));
            assert_eq!(with.trm_parameter_count(), expected);
        }
    }

    #[test]
    fn too_short_segments_are_rejected() {
        let cfg = HostNetConfig::new(2);
        assert!(matches!(
            build_model::<f32>(&cfg, 4, 98, None, None, 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(build_model::<f32>(&cfg, 4, 99, None, None, 0).is_ok());
        let m = grid_montage(3, 2, 2);
        assert!(matches!(
            build_model::<f32>(&cfg, 4, 120, Some(&m), Some(3), 0),
            Err(Error::ChannelMismatch { .. })
        ));
        assert!(build_model::<f32>(&cfg, 4, 120, None, Some(3), 0).is_err());
    }

    #[test]
    fn zero_everything_gives_dense_bias() {
        let cfg = small_config(3);
        let mut m = build_model::<f64>(&cfg, 4, 40, None, None, 2).unwrap();
        for p in m.params_mut() {
            p.value.fill(0.0);
        }
        m.host_mut().dense_mut().bias = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = m.forward(&Tensor::zeros(&[2, 4, 40]), Mode::Eval).unwrap();
        assert_eq!(y.data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn identical_segments_identical_logits() {
        let cfg = HostNetConfig::new(2);
        let mut m = build_model::<f32>(&cfg, 6, 120, None, None, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seg: Vec<f32> = (0..6 * 120).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x = Tensor::from_fn(&[3, 6, 120], |i| seg[i % seg.len()]);
        let y = m.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.data()[0..2], y.data()[2..4]);
        assert_eq!(y.data()[0..2], y.data()[4..6]);
        assert_eq!(m.forward(&x, Mode::Eval).unwrap(), y);
    }

    fn ce_check(model: &mut ClassifierModel<f64>, x: &Tensor<f64>, labels: &[usize], mode: Mode) {
        let report = grad_check(model, x, 1e-4, |m, x, backward| {
            let logits = m.forward(x, mode)?;
            let (loss, g) = softmax_cross_entropy(&logits, labels)?;
            let gx = if backward { m.backward(&g)? } else { None };
            Ok((loss, gx))
        })
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn host_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cfg = HostNetConfig::new(2);
        cfg.dropout_p = 0.0;
        cfg.n_temporal_filters = 4;
        let mut m = build_model::<f64>(&cfg, 6, 120, None, None, 4)
            .unwrap()
            .with_input_grad();
        let x = Tensor::from_fn(&[4, 6, 120], |_| StandardNormal.sample(&mut rng));
        ce_check(&mut m, &x, &[0, 1, 1, 0], Mode::Train);
    }

    #[test]
    fn trm_plus_host_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let montage = grid_montage(6, 3, 4);
        let cfg = small_config(3);
        for mode in [Mode::Train, Mode::Eval] {
            let mut m = build_model::<f64>(&cfg, 6, 40, Some(&montage), Some(3), 5).unwrap();
            let x = Tensor::from_fn(&[4, 6, 40], |_| StandardNormal.sample(&mut rng));
            ce_check(&mut m, &x, &[0, 2, 1, 0], mode);
        }
    }

    #[test]
    fn dropout_only_in_training() {
        let cfg = HostNetConfig::new(2);
        let mut m = build_model::<f64>(&cfg, 3, 100, None, None, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Tensor::from_fn(&[2, 3, 100], |_| StandardNormal.sample(&mut rng));
        let a = m.forward(&x, Mode::Train).unwrap();
        let b = m.forward(&x, Mode::Train).unwrap();
        assert_ne!(a, b);
        assert_eq!(m.forward(&x, Mode::Eval).unwrap(), m.forward(&x, Mode::Eval).unwrap());
    }

    #[test]
    fn summary_totals() {
        let montage = grid_montage(55, 7, 9);
        let cfg = HostNetConfig::new(2);
        let mut m = build_model::<f32>(&cfg, 55, 280, Some(&montage), Some(5), 0).unwrap();
        let rows = m.summary();
        let total: usize = rows.iter().map(|r| r.params).sum();
        assert_eq!(total, m.trainable_parameter_count());
        let trm: usize = rows
            .iter()
            .filter(|r| r.name.starts_with("trm"))
            .map(|r| r.params)
            .sum();
        assert_eq!(trm, 46860);
        assert_eq!(
            rows.iter().find(|r| r.name == "trm.output").unwrap().output_shape,
            vec![55, 280]
        );
    }
}
