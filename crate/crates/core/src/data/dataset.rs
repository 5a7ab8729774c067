//! In-memory datasets with stable, sorted sample ids.

use crate::data::image_batch::ImageBatch;
use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Either kind of sample storage.
#[derive(Clone, Debug)]
pub enum DataStore {
    Images(ImageBatch),
    Points(Tensor), // [N, D]
}

/// Owned minibatch handed to models.
#[derive(Clone, Debug)]
pub enum BatchData {
    Images(ImageBatch),
    Points(Tensor),
}

/// Ordered collection of samples. Ids are unique and sorted; iteration
/// order is always a pure function of (ids, seed).
#[derive(Clone, Debug)]
pub struct Dataset {
    ids: Vec<String>,
    store: DataStore,
}

impl Dataset {
    /// Build from images with explicit ids; samples are reordered so ids
    /// are ascending.
    pub fn from_images(ids: Vec<String>, images: ImageBatch) -> Result<Dataset> {
        if ids.len() != images.n {
            return Err(Error::data(format!(
                "{} ids for {} images",
                ids.len(),
                images.n
            )));
        }
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
        for pair in order.windows(2) {
            if ids[pair[0]] == ids[pair[1]] {
                return Err(Error::data(format!("duplicate sample id {:?}", ids[pair[0]])));
            }
        }
        let sorted_ids: Vec<String> = order.iter().map(|&i| ids[i].clone()).collect();
        let images = images.select(&order);
        Ok(Dataset { ids: sorted_ids, store: DataStore::Images(images) })
    }

    /// Build from a point tensor; ids are generated from the prefix.
    pub fn from_points(prefix: &str, points: Tensor) -> Result<Dataset> {
        let (n, _d) = points.dims2()?;
        let ids = (0..n).map(|i| format!("{prefix}_{i:06}")).collect();
        Ok(Dataset { ids, store: DataStore::Points(points) })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn store(&self) -> &DataStore {
        &self.store
    }

    pub fn is_images(&self) -> bool {
        matches!(self.store, DataStore::Images(_))
    }

    /// (channels, height, width) for image datasets.
    pub fn resolution(&self) -> Option<(usize, usize, usize)> {
        match &self.store {
            DataStore::Images(b) => Some((b.c, b.h, b.w)),
            DataStore::Points(_) => None,
        }
    }

    pub fn point_dim(&self) -> Option<usize> {
        match &self.store {
            DataStore::Points(t) => Some(t.shape()[1]),
            DataStore::Images(_) => None,
        }
    }

    pub fn batch(&self, indices: &[usize]) -> BatchData {
        match &self.store {
            DataStore::Images(b) => BatchData::Images(b.select(indices)),
            DataStore::Points(t) => {
                let d = t.shape()[1];
                let mut data = Vec::with_capacity(indices.len() * d);
                for &i in indices {
                    data.extend_from_slice(t.sample(i));
                }
                BatchData::Points(Tensor::from_vec(&[indices.len(), d], data).expect("sizes agree"))
            }
        }
    }

    /// Subset preserving ids (result ids stay sorted because index lists
    /// are ascending in every caller that keeps set semantics).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let ids: Vec<String> = indices.iter().map(|&i| self.ids[i].clone()).collect();
        match self.batch(indices) {
            BatchData::Images(b) => Dataset::from_images(ids, b),
            BatchData::Points(t) => {
                let mut order: Vec<usize> = (0..ids.len()).collect();
                order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
                let d = t.shape()[1];
                let mut data = Vec::with_capacity(ids.len() * d);
                for &i in &order {
                    data.extend_from_slice(t.sample(i));
                }
                let sorted_ids = order.iter().map(|&i| ids[i].clone()).collect();
                Ok(Dataset {
                    ids: sorted_ids,
                    store: DataStore::Points(Tensor::from_vec(&[ids.len(), d], data)?),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_ids_are_sorted_and_unique() {
        let mut b = ImageBatch::zeros(3, 1, 1, 1);
        b.pixels = vec![10, 20, 30];
        let ds = Dataset::from_images(
            vec!["c.png".into(), "a.png".into(), "b.png".into()],
            b.clone(),
        )
        .unwrap();
        assert_eq!(ds.ids(), &["a.png", "b.png", "c.png"]);
        match ds.store() {
            DataStore::Images(imgs) => assert_eq!(imgs.pixels, vec![20, 30, 10]),
            _ => unreachable!(),
        }
        let dup = Dataset::from_images(vec!["a".into(), "a".into(), "b".into()], b);
        assert!(dup.is_err());
    }

    #[test]
    fn point_batches_select_rows() {
        let t = Tensor::from_vec(&[3, 2], vec![0., 1., 10., 11., 20., 21.]).unwrap();
        let ds = Dataset::from_points("pt", t).unwrap();
        match ds.batch(&[2, 0]) {
            BatchData::Points(p) => assert_eq!(p.data(), &[20., 21., 0., 1.]),
            _ => unreachable!(),
        }
    }
}
