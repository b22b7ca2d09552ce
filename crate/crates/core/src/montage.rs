//! Electrode-to-grid assignments and the scatter/gather between channel-major
//! EEG and the topographic map.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Real, Result, Tensor};

/// One electrode placed on a grid cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Electrode {
    pub name: String,
    pub row: usize,
    pub col: usize,
}

impl Electrode {
    pub fn new(name: impl Into<String>, row: usize, col: usize) -> Self {
        Self {
            name: name.into(),
            row,
            col,
        }
    }
}

/// Named assignment of channels to cells of an `H×W` grid.
///
/// Channel order is significant: channel `i` of a signal lands on
/// `channels[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Montage {
    name: String,
    grid_height: usize,
    grid_width: usize,
    channels: Vec<Electrode>,
}

impl Montage {
    pub fn new(
        name: impl Into<String>,
        grid_height: usize,
        grid_width: usize,
        channels: Vec<Electrode>,
    ) -> Result<Self> {
        if grid_height == 0 || grid_width == 0 {
            return Err(Error::InvalidMontage(format!(
                "grid must be at least 1x1, got {grid_height}x{grid_width}"
            )));
        }
        if channels.is_empty() {
            return Err(Error::InvalidMontage("no channels".to_string()));
        }
        if channels.len() > grid_height * grid_width {
            return Err(Error::InvalidMontage(format!(
                "{} channels do not fit a {grid_height}x{grid_width} grid",
                channels.len()
            )));
        }
        let mut names = BTreeSet::new();
        let mut cells = BTreeSet::new();
        for e in &channels {
            if e.row >= grid_height || e.col >= grid_width {
                return Err(Error::InvalidMontage(format!(
                    "channel {:?} at ({}, {}) is outside the {grid_height}x{grid_width} grid",
                    e.name, e.row, e.col
                )));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::InvalidMontage(format!("duplicate channel name {:?}", e.name)));
            }
            if !cells.insert((e.row, e.col)) {
                return Err(Error::InvalidMontage(format!(
                    "duplicate cell ({}, {}) for channel {:?}",
                    e.row, e.col, e.name
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            grid_height,
            grid_width,
            channels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grid_height(&self) -> usize {
        self.grid_height
    }

    pub fn grid_width(&self) -> usize {
        self.grid_width
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_height, self.grid_width)
    }

    pub fn channels(&self) -> &[Electrode] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|e| e.name.as_str())
    }

    /// Flat `row * W + col` cell index for each channel, in channel order.
    pub fn cell_indices(&self) -> Vec<usize> {
        self.channels.iter().map(|e| e.row * self.grid_width + e.col).collect()
    }

    /// Channel index occupying `(row, col)`, if any.
    pub fn channel_at(&self, row: usize, col: usize) -> Option<usize> {
        self.channels.iter().position(|e| e.row == row && e.col == col)
    }

    /// Returns a copy whose channel order follows `names`.
    ///
    /// Every name must be present in the montage and the counts must agree.
    pub fn aligned_to<S: AsRef<str>>(&self, names: &[S]) -> Result<Montage> {
        if names.len() != self.channels.len() {
            return Err(Error::ChannelMismatch {
                expected: self.channels.len(),
                found: names.len(),
            });
        }
        let mut channels = Vec::with_capacity(names.len());
        for (index, name) in names.iter().enumerate() {
            let name = name.as_ref();
            let e = self
                .channels
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::ChannelNameMismatch {
                    index,
                    expected: self.channels[index].name.clone(),
                    found: name.to_string(),
                })?;
            channels.push(e.clone());
        }
        Montage::new(self.name.clone(), self.grid_height, self.grid_width, channels)
    }

    /// Fails unless `names` lists exactly this montage's channels in order.
    pub fn check_names<S: AsRef<str>>(&self, names: &[S]) -> Result<()> {
        if names.len() != self.channels.len() {
            return Err(Error::ChannelMismatch {
                expected: self.channels.len(),
                found: names.len(),
            });
        }
        for (index, (e, n)) in self.channels.iter().zip(names).enumerate() {
            if e.name != n.as_ref() {
                return Err(Error::ChannelNameMismatch {
                    index,
                    expected: e.name.clone(),
                    found: n.as_ref().to_string(),
                });
            }
        }
        Ok(())
    }
}

/// `H×W×TP` topographic map, stored row-major as `(row, col, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopographicTensor<T> {
    height: usize,
    width: usize,
    time_points: usize,
    values: Vec<T>,
}

impl<T: Real> TopographicTensor<T> {
    pub fn from_vec(height: usize, width: usize, time_points: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != height * width * time_points {
            return Err(Error::ShapeMismatch {
                context: "topographic tensor",
                expected: vec![height, width, time_points],
                found: vec![values.len()],
            });
        }
        Ok(Self {
            height,
            width,
            time_points,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn time_points(&self) -> usize {
        self.time_points
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn at(&self, row: usize, col: usize, t: usize) -> T {
        self.values[(row * self.width + col) * self.time_points + t]
    }

    /// Sum of one time slice over all grid cells.
    pub fn slice_sum(&self, t: usize) -> T {
        (0..self.height * self.width)
            .map(|cell| self.values[cell * self.time_points + t])
            .sum()
    }
}

/// Scatters a `C×TP` signal onto the montage grid. Unassigned cells are zero.
pub fn map_to_topographic<T: Real>(signal: &Tensor<T>, montage: &Montage) -> Result<TopographicTensor<T>> {
    let [c, tp] = signal.dims2("map_to_topographic")?;
    if c != montage.channel_count() {
        return Err(Error::ChannelMismatch {
            expected: montage.channel_count(),
            found: c,
        });
    }
    let (h, w) = montage.grid();
    let mut values = vec![T::zero(); h * w * tp];
    for (ch, cell) in montage.cell_indices().into_iter().enumerate() {
        values[cell * tp..(cell + 1) * tp].copy_from_slice(&signal.data()[ch * tp..(ch + 1) * tp]);
    }
    TopographicTensor::from_vec(h, w, tp, values)
}

/// Reads the assigned cells back into a `C×TP` signal in channel order.
pub fn gather_from_topographic<T: Real>(tensor: &TopographicTensor<T>, montage: &Montage) -> Result<Tensor<T>> {
    let (h, w) = montage.grid();
    if tensor.height != h || tensor.width != w {
        return Err(Error::ShapeMismatch {
            context: "gather_from_topographic",
            expected: vec![h, w],
            found: vec![tensor.height, tensor.width],
        });
    }
    let tp = tensor.time_points;
    let c = montage.channel_count();
    let mut out = Vec::with_capacity(c * tp);
    for cell in montage.cell_indices() {
        out.extend_from_slice(&tensor.values[cell * tp..(cell + 1) * tp]);
    }
    Tensor::from_vec(&[c, tp], out)
}
