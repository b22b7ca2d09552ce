//! The topographic representation module: scatter onto the montage grid,
//! then a stack of valid convolutions (each followed by batch norm) that
//! shrinks the grid to a single cell while producing `C` feature maps.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::nn::{BatchNorm, Conv2d, ParamMut, Parameterized};
use crate::{Error, Mode, Montage, Real, Result, Tensor};

/// One convolution of the shrinking stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleStep {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub has_bias: bool,
}

/// Kernel sizes for a grid and base kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelSchedule {
    pub grid: (usize, usize),
    pub base_k: usize,
    pub steps: Vec<ScheduleStep>,
}

/// Derives the kernel schedule for an `H×W` grid.
///
/// While the feature map exceeds `k` in either dimension a `k×k` kernel is
/// applied (clamped to the map where one side is already narrower);
/// otherwise a kernel covering the whole map collapses it to `1×1`. Only the
/// first and last steps carry a bias.
pub fn derive_schedule(grid: (usize, usize), base_k: usize) -> Result<KernelSchedule> {
    let (gh, gw) = grid;
    if gh == 0 || gw == 0 {
        return Err(Error::InvalidConfig(format!(
            "grid must be at least 1x1, got {gh}x{gw}"
        )));
    }
    if base_k < 2 {
        return Err(Error::InvalidConfig(format!(
            "base kernel must be at least 2, got {base_k}"
        )));
    }
    let (mut h, mut w) = grid;
    let mut steps = Vec::new();
    loop {
        let (kh, kw) = if h > base_k || w > base_k {
            (base_k.min(h), base_k.min(w))
        } else {
            (h, w)
        };
        h = h - kh + 1;
        w = w - kw + 1;
        steps.push(ScheduleStep {
            kernel_h: kh,
            kernel_w: kw,
            out_h: h,
            out_w: w,
            has_bias: false,
        });
        if (h, w) == (1, 1) {
            break;
        }
    }
    steps[0].has_bias = true;
    if let Some(last) = steps.last_mut() {
        last.has_bias = true;
    }
    Ok(KernelSchedule { grid, base_k, steps })
}

/// Trainable parameters of a TRM with `channels` feature maps per step.
/// Batch norm has no affine part and adds nothing.
pub fn count_parameters(channels: usize, schedule: &KernelSchedule) -> usize {
    schedule
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let cin = if i == 0 { 1 } else { channels };
            channels * cin * s.kernel_h * s.kernel_w + if s.has_bias { channels } else { 0 }
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct TrmModule<T> {
    montage: Montage,
    schedule: KernelSchedule,
    cells: Vec<usize>,
    convs: Vec<Conv2d<T>>,
    norms: Vec<BatchNorm<T>>,
    input_dims: Option<[usize; 3]>,
}

impl<T: Real> TrmModule<T> {
    pub fn new<R: Rng + ?Sized>(montage: &Montage, base_k: usize, rng: &mut R) -> Result<Self> {
        let schedule = derive_schedule(montage.grid(), base_k)?;
        let c = montage.channel_count();
        let convs = schedule
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let cin = if i == 0 { 1 } else { c };
                Conv2d::new(cin, c, (s.kernel_h, s.kernel_w), s.has_bias, rng)
            })
            .collect();
        let norms = schedule.steps.iter().map(|_| BatchNorm::new(c)).collect();
        Ok(Self {
            cells: montage.cell_indices(),
            montage: montage.clone(),
            schedule,
            convs,
            norms,
            input_dims: None,
        })
    }

    pub fn montage(&self) -> &Montage {
        &self.montage
    }

    pub fn schedule(&self) -> &KernelSchedule {
        &self.schedule
    }

    pub fn channels(&self) -> usize {
        self.montage.channel_count()
    }

    pub fn convs(&self) -> &[Conv2d<T>] {
        &self.convs
    }

    pub fn convs_mut(&mut self) -> &mut [Conv2d<T>] {
        &mut self.convs
    }

    pub fn norms_mut(&mut self) -> &mut [BatchNorm<T>] {
        &mut self.norms
    }

    /// `B×C×TP` → `B×C×TP`.
    ///
    /// Each time slice is scattered to a `1×H×W` map and the stack runs over
    /// the folded `B·TP` batch, so kernels are shared across time.
    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let [b, c, tp] = input.dims3("trm input")?;
        if c != self.channels() {
            return Err(Error::ChannelMismatch {
                expected: self.channels(),
                found: c,
            });
        }
        let (gh, gw) = self.montage.grid();
        let n = b * tp;
        // batch-last layout: features × h × w × (B·TP), with n = b·TP + t
        let mut grid = vec![T::zero(); gh * gw * n];
        let x = input.data();
        for s in 0..b {
            for (ch, &cell) in self.cells.iter().enumerate() {
                grid[cell * n + s * tp..][..tp].copy_from_slice(&x[(s * c + ch) * tp..][..tp]);
            }
        }
        let mut h = Tensor::from_vec(&[1, gh, gw, n], grid)?;
        for (conv, norm) in self.convs.iter_mut().zip(&mut self.norms) {
            let y = conv.forward_batch_last(&h)?;
            let shape = y.shape().to_vec();
            let flat = y.reshape(&[1, c, shape[1] * shape[2] * n])?;
            h = norm.forward(&flat, mode)?.reshape(&shape)?;
        }
        h.ensure_finite("trm output")?;
        // h is C×1×1×(B·TP); reassemble to B×C×TP
        let hd = h.data();
        let mut out = vec![T::zero(); b * c * tp];
        for s in 0..b {
            for ch in 0..c {
                out[(s * c + ch) * tp..][..tp].copy_from_slice(&hd[ch * n + s * tp..][..tp]);
            }
        }
        self.input_dims = Some([b, c, tp]);
        Tensor::from_vec(&[b, c, tp], out)
    }

    /// Writes parameter gradients and returns the gradient for the `B×C×TP` input.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let [b, c, tp] = self.input_dims.ok_or(Error::ShapeMismatch {
            context: "trm backward without forward",
            expected: vec![],
            found: vec![],
        })?;
        grad_out.expect_shape("trm grad_out", &[b, c, tp])?;
        let n = b * tp;
        let g = grad_out.data();
        let mut folded = vec![T::zero(); c * n];
        for s in 0..b {
            for ch in 0..c {
                folded[ch * n + s * tp..][..tp].copy_from_slice(&g[(s * c + ch) * tp..][..tp]);
            }
        }
        let mut gh = Tensor::from_vec(&[c, 1, 1, n], folded)?;
        for (conv, norm) in self.convs.iter_mut().zip(&mut self.norms).rev() {
            let shape = gh.shape().to_vec();
            let flat = gh.reshape(&[1, c, shape[1] * shape[2] * n])?;
            let gn = norm.backward(&flat)?.reshape(&shape)?;
            gh = conv.backward_batch_last(&gn)?.ok_or(Error::ShapeMismatch {
                context: "trm conv input gradient disabled",
                expected: vec![],
                found: vec![],
            })?;
        }
        let gd = gh.data();
        let mut out = vec![T::zero(); b * c * tp];
        for s in 0..b {
            for (ch, &cell) in self.cells.iter().enumerate() {
                out[(s * c + ch) * tp..][..tp].copy_from_slice(&gd[cell * n + s * tp..][..tp]);
            }
        }
        Tensor::from_vec(&[b, c, tp], out)
    }

    pub fn clear_cache(&mut self) {
        self.convs.iter_mut().for_each(Conv2d::clear_cache);
        self.norms.iter_mut().for_each(BatchNorm::clear_cache);
    }
}

impl<T: Real> Parameterized<T> for TrmModule<T> {
    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        for (i, conv) in self.convs.iter_mut().enumerate() {
            for mut p in conv.params_mut() {
                p.name = format!("trm.conv{i}.{}", p.name);
                out.push(p);
            }
        }
        out
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, norm) in self.norms.iter_mut().enumerate() {
            for (name, t) in norm.buffers_mut() {
                out.push((format!("trm.bn{i}.{name}"), t));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montage::Electrode;
    use crate::nn::grad_check;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn kernels(s: &KernelSchedule) -> Vec<((usize, usize), (usize, usize))> {
        s.steps
            .iter()
            .map(|s| ((s.kernel_h, s.kernel_w), (s.out_h, s.out_w)))
            .collect()
    }

    fn toy_montage(c: usize, h: usize, w: usize) -> Montage {
        // spread channels over the grid with a stride coprime to the cell count
        let cells = h * w;
        let mut step = 1;
        for s in (1..cells).rev() {
            if gcd(s, cells) == 1 && s * 2 > cells {
                step = s;
                break;
            }
        }
        let channels = (0..c)
            .map(|i| {
                let cell = (i * step) % cells;
                Electrode::new(format!("E{i}"), cell / w, cell % w)
            })
            .collect();
        Montage::new("toy", h, w, channels).unwrap()
    }

    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }

    #[test]
    fn published_grid_schedules() {
        let s = derive_schedule((7, 9), 5).unwrap();
        assert_eq!(kernels(&s), vec![((5, 5), (3, 5)), ((3, 5), (1, 1))]);
        let s = derive_schedule((7, 9), 3).unwrap();
        assert_eq!(
            kernels(&s),
            vec![((3, 3), (5, 7)), ((3, 3), (3, 5)), ((3, 3), (1, 3)), ((1, 3), (1, 1))]
        );
        let s = derive_schedule((7, 7), 5).unwrap();
        assert_eq!(kernels(&s), vec![((5, 5), (3, 3)), ((3, 3), (1, 1))]);
        let s = derive_schedule((7, 7), 3).unwrap();
        assert_eq!(kernels(&s), vec![((3, 3), (5, 5)), ((3, 3), (3, 3)), ((3, 3), (1, 1))]);
        let bias: Vec<bool> = s.steps.iter().map(|s| s.has_bias).collect();
        assert_eq!(bias, vec![true, false, true]);
    }

    #[test]
    fn degenerate_grid_is_one_biased_step() {
        for k in 2..8 {
            let s = derive_schedule((1, 1), k).unwrap();
            assert_eq!(kernels(&s), vec![((1, 1), (1, 1))]);
            assert!(s.steps[0].has_bias);
        }
        assert_eq!(count_parameters(1, &derive_schedule((1, 1), 3).unwrap()), 2);
    }

    #[test]
    fn narrow_grids_clamp_the_kernel() {
        let s = derive_schedule((2, 11), 5).unwrap();
        assert_eq!(kernels(&s), vec![((2, 5), (1, 7)), ((1, 5), (1, 3)), ((1, 3), (1, 1))]);
    }

    #[test]
    fn invalid_inputs() {
        assert!(derive_schedule((0, 3), 3).is_err());
        assert!(derive_schedule((3, 3), 1).is_err());
    }

    #[test]
    fn published_parameter_counts() {
        let count = |c, g, k| count_parameters(c, &derive_schedule(g, k).unwrap());
        assert_eq!(count(55, (7, 9), 5), 46860);
        assert_eq!(count(55, (7, 9), 3), 64130);
        assert_eq!(count(44, (7, 7), 5), 18612);
        assert_eq!(count(44, (7, 7), 3), 35332);
    }

    #[test]
    fn module_parameters_match_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = toy_montage(10, 4, 5);
        let mut trm = TrmModule::<f32>::new(&m, 3, &mut rng).unwrap();
        assert_eq!(trm.trainable_parameter_count(), count_parameters(10, trm.schedule()));
        assert_eq!(trm.convs()[0].in_channels(), 1);
        assert!(trm.convs()[1..].iter().all(|c| c.in_channels() == 10));
        assert!(trm.convs().iter().all(|c| c.out_channels() == 10));
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = toy_montage(6, 3, 4);
        let mut trm = TrmModule::<f64>::new(&m, 3, &mut rng).unwrap();
        for p in trm.params_mut() {
            p.value.fill(0.0);
        }
        let x = Tensor::from_fn(&[2, 6, 5], |_| StandardNormal.sample(&mut rng));
        for mode in [Mode::Train, Mode::Eval] {
            let y = trm.forward(&x, mode).unwrap();
            assert_eq!(y.shape(), &[2, 6, 5]);
            assert!(y.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = toy_montage(6, 3, 4);
        let mut trm = TrmModule::<f64>::new(&m, 3, &mut rng).unwrap();
        let x = Tensor::from_fn(&[4, 6, 8], |_| StandardNormal.sample(&mut rng));
        trm.forward(&x, Mode::Train).unwrap();
        let gx = trm.backward(&Tensor::zeros(&[4, 6, 8])).unwrap();
        assert_eq!(gx.shape(), &[4, 6, 8]);
        assert!(gx.data().iter().all(|&v| v == 0.0));
        for p in trm.params_mut() {
            assert!(p.grad.data().iter().all(|&v| v == 0.0), "{}", p.name);
        }
    }

    fn full_module_check(mode: Mode) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = toy_montage(6, 3, 4);
        let mut trm = TrmModule::<f64>::new(&m, 3, &mut rng).unwrap();
        for p in trm.params_mut() {
            if p.name.ends_with("bias") {
                p.value
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v = StandardNormal.sample(&mut rng));
            }
        }
        for bn in trm.norms_mut() {
            bn.momentum = 0.0;
            bn.running_mean = Tensor::from_fn(&[6], |_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.1 * z
            });
            bn.running_var = Tensor::from_fn(&[6], |i| 0.5 + 0.1 * i as f64);
        }
        let x = Tensor::from_fn(&[4, 6, 8], |_| StandardNormal.sample(&mut rng));
        let probe: Tensor<f64> = Tensor::from_fn(&[4, 6, 8], |_| StandardNormal.sample(&mut rng));
        let report = grad_check(&mut trm, &x, 1e-4, |trm, x, backward| {
            let y = trm.forward(x, mode)?;
            let loss = y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
            let gx = if backward { Some(trm.backward(&probe)?) } else { None };
            Ok((loss, gx))
        })
        .unwrap();
        assert!(report.passed, "{mode:?}: {report:?}");
        // 2 conv weights, 2 biases, input
        assert_eq!(report.per_tensor.len(), 5);
    }

    #[test]
    fn full_module_gradients() {
        full_module_check(Mode::Train);
        full_module_check(Mode::Eval);
    }

    #[test]
    fn time_shift_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = toy_montage(5, 3, 3);
        let mut trm = TrmModule::<f64>::new(&m, 3, &mut rng).unwrap();
        let x = Tensor::from_fn(&[2, 5, 7], |_| StandardNormal.sample(&mut rng));
        let perm = [3usize, 0, 6, 1, 5, 2, 4];
        let xp = Tensor::from_fn(&[2, 5, 7], |i| x.data()[i - i % 7 + perm[i % 7]]);
        let y = trm.forward(&x, Mode::Eval).unwrap();
        let yp = trm.forward(&xp, Mode::Eval).unwrap();
        for i in 0..y.len() {
            assert_eq!(yp.data()[i], y.data()[i - i % 7 + perm[i % 7]]);
        }
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = toy_montage(5, 3, 3);
        let mut trm = TrmModule::<f32>::new(&m, 3, &mut rng).unwrap();
        assert!(matches!(
            trm.forward(&Tensor::zeros(&[1, 4, 3]), Mode::Eval),
            Err(Error::ChannelMismatch { expected: 5, found: 4 })
        ));
        assert!(trm.backward(&Tensor::zeros(&[1, 5, 3])).is_err());
    }

    proptest! {
        #[test]
        fn schedule_terminates_at_one_by_one(h in 1usize..=12, w in 1usize..=12, k in 2usize..=7) {
            let s = derive_schedule((h, w), k).unwrap();
            prop_assert!(s.steps.len() <= h + w);
            let last = s.steps.last().unwrap();
            prop_assert_eq!((last.out_h, last.out_w), (1, 1));
            let (mut ch, mut cw) = (h, w);
            for step in &s.steps {
                prop_assert!(step.kernel_h <= ch && step.kernel_w <= cw);
                ch = ch - step.kernel_h + 1;
                cw = cw - step.kernel_w + 1;
                prop_assert_eq!((ch, cw), (step.out_h, step.out_w));
            }
            prop_assert_eq!(s, derive_schedule((h, w), k).unwrap());
        }
    }
}
