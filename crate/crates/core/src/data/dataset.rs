use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::seeding::{stream_rng, Purpose};
use crate::tensor::Tensor;

/// Images (8-bit, row-major `H × W × C`) with one or more integer label channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Name and number of classes of each label channel.
    pub label_channels: Vec<(String, usize)>,
    pixels: Vec<u8>,
    labels: Vec<u16>,
}

impl Dataset {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        label_channels: Vec<(String, usize)>,
        pixels: Vec<u8>,
        labels: Vec<u16>,
    ) -> Result<Self> {
        let x_dim = height * width * channels;
        if x_dim == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if !pixels.len().is_multiple_of(x_dim) {
            return Err(Error::invalid(format!("{} pixel bytes is not a multiple of {x_dim}", pixels.len())));
        }
        let n = pixels.len() / x_dim;
        let c = label_channels.len();
        if labels.len() != n * c {
            return Err(Error::invalid(format!("expected {} labels, got {}", n * c, labels.len())));
        }
        for (i, &l) in labels.iter().enumerate() {
            let (name, card) = &label_channels[i % c.max(1)];
            if l as usize >= *card {
                return Err(Error::invalid(format!(
                    "record {}: label {l} outside 0..{card} for channel `{name}`",
                    i / c
                )));
            }
        }
        Ok(Dataset {
            height,
            width,
            channels,
            label_channels,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.len() / self.x_dim()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn x_dim(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn num_label_channels(&self) -> usize {
        self.label_channels.len()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.x_dim();
        &self.pixels[i * d..(i + 1) * d]
    }

    pub fn labels_of(&self, i: usize) -> &[u16] {
        let c = self.num_label_channels();
        &self.labels[i * c..(i + 1) * c]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    /// All labels of one channel.
    pub fn channel_labels(&self, channel: usize) -> Vec<usize> {
        let c = self.num_label_channels();
        self.labels.iter().skip(channel).step_by(c).map(|&l| l as usize).collect()
    }

    /// Pixels of the given records scaled to `[0, 1]`, shape `[indices.len(), x_dim]`.
    pub fn batch<S: Real>(&self, indices: &[usize]) -> Tensor<S> {
        let scale = S::lit(1.0 / 255.0);
        let mut data = Vec::with_capacity(indices.len() * self.x_dim());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&p| S::lit(p as f64) * scale));
        }
        Tensor::new(vec![indices.len(), self.x_dim()], data).expect("sized")
    }

    pub fn all<S: Real>(&self) -> Tensor<S> {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    /// The first `n` records (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            height: self.height,
            width: self.width,
            channels: self.channels,
            label_channels: self.label_channels.clone(),
            pixels: self.pixels[..n * self.x_dim()].to_vec(),
            labels: self.labels[..n * self.num_label_channels()].to_vec(),
        }
    }
}

/// Seed-deterministic permutation of `0..n` for one epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Purpose::Shuffle, epoch));
    order
}

/// Shuffled batches over one epoch; the final batch may be short.
#[derive(Clone, Debug)]
pub struct BatchIter {
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for BatchIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(out)
    }
}

pub fn iterate(dataset: &Dataset, batch_size: usize, seed: u64) -> Result<BatchIter> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    Ok(BatchIter {
        order: epoch_order(dataset.len(), seed, 0),
        batch_size,
        pos: 0,
    })
}

/// Record indices of training step `step` when epochs are walked back to back.
pub fn step_batch(n: usize, batch_size: usize, seed: u64, step: usize) -> Vec<usize> {
    let per_epoch = n.div_ceil(batch_size).max(1);
    let epoch = step / per_epoch;
    let slot = step % per_epoch;
    let order = epoch_order(n, seed, epoch as u64);
    let start = slot * batch_size;
    order[start..(start + batch_size).min(n)].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize) -> Dataset {
        Dataset::new(
            1,
            2,
            1,
            vec![("a".into(), 3)],
            (0..2 * n).map(|i| i as u8).collect(),
            (0..n).map(|i| (i % 3) as u16).collect(),
        )
        .unwrap()
    }

    #[test]
    fn batch_larger_than_dataset() {
        let d = tiny(5);
        let batches: Vec<_> = iterate(&d, 10, 1).unwrap().collect();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].len(), 5);
    }

    #[test]
    fn same_seed_same_order_and_short_tail() {
        let d = tiny(10);
        let a: Vec<_> = iterate(&d, 3, 7).unwrap().collect();
        let b: Vec<_> = iterate(&d, 3, 7).unwrap().collect();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        let mut seen: Vec<_> = a.concat();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn step_batches_cover_epochs() {
        let mut seen: Vec<usize> = (0..4).flat_map(|s| step_batch(10, 3, 5, s)).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(step_batch(10, 3, 5, 3).len(), 1);
        assert_eq!(step_batch(10, 3, 5, 4).len(), 3);
    }

    #[test]
    fn rejects_out_of_range_labels() {
        assert!(Dataset::new(1, 1, 1, vec![("a".into(), 2)], vec![0], vec![2]).is_err());
    }

    #[test]
    fn pixels_scale_to_unit_interval() {
        let d = Dataset::new(1, 2, 1, vec![], vec![0, 255], vec![]).unwrap();
        assert_eq!(d.batch::<f64>(&[0]).data(), &[0.0, 1.0]);
    }
}
