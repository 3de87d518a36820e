use rand::seq::SliceRandom;

use super::LabeledDataset;
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

/// Disjoint per-device index lists into one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DevicePartition {
    pub device_indices: Vec<Vec<usize>>,
}

impl DevicePartition {
    pub fn devices(&self) -> usize {
        self.device_indices.len()
    }

    /// Sorted distinct labels held by device `k`.
    pub fn label_set(&self, k: usize, ds: &LabeledDataset) -> Vec<usize> {
        let mut labels: Vec<usize> = self.device_indices[k]
            .iter()
            .map(|&i| ds.labels()[i])
            .collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    pub fn assigned(&self) -> usize {
        self.device_indices.iter().map(Vec::len).sum()
    }
}

/// Label-sharded non-IID split.
///
/// Device slot `d` is dealt the classes `d L, d L + 1, ..., d L + L - 1`
/// (mod `C`), so classes go round-robin and every device holds exactly `L`
/// distinct labels. Each class's samples, shuffled, are cut into contiguous
/// shards, one per holder. The seed shuffles samples within classes and which
/// device sits in which slot.
pub fn partition_noniid(
    ds: &LabeledDataset,
    k_devices: usize,
    labels_per_device: usize,
    seed: u64,
) -> Result<DevicePartition> {
    let classes = ds.class_count();
    if k_devices == 0 {
        return Err(Error::Partition("no devices".into()));
    }
    if labels_per_device == 0 || labels_per_device > classes {
        return Err(Error::Partition(format!(
            "labels_per_device must be in 1..={classes}, got {labels_per_device}"
        )));
    }

    let mut rng = stream_rng(seed, Stream::Partition, 0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in ds.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let mut slot_to_device: Vec<usize> = (0..k_devices).collect();
    slot_to_device.shuffle(&mut rng);

    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (slot, &device) in slot_to_device.iter().enumerate() {
        for j in 0..labels_per_device {
            holders[(slot * labels_per_device + j) % classes].push(device);
        }
    }

    let mut device_indices = vec![Vec::new(); k_devices];
    for (c, owners) in holders.iter().enumerate() {
        let members = &by_class[c];
        if owners.is_empty() {
            continue;
        }
        if members.len() < owners.len() {
            return Err(Error::Partition(format!(
                "class {c} has {} samples for {} holders",
                members.len(),
                owners.len()
            )));
        }
        let (base, extra) = (members.len() / owners.len(), members.len() % owners.len());
        let mut start = 0;
        for (s, &device) in owners.iter().enumerate() {
            let len = base + usize::from(s < extra);
            device_indices[device].extend_from_slice(&members[start..start + len]);
            start += len;
        }
    }
    for list in &mut device_indices {
        list.sort_unstable();
    }
    Ok(DevicePartition { device_indices })
}
