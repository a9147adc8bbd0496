//! Streaming selection of the `k` smallest cells under a size functional.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::SizeFunctional;
use crate::model::TessellationModel;
use crate::sampler::{fold_stream, SampleStreamSpec, TypicalCell};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopKEntry {
    pub cell: TypicalCell,
    pub size: f64,
    pub sample_index: u64,
}

/// The `k` smallest cells of a stream, ascending by `(size, sample_index)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopKSelection {
    pub k: usize,
    pub functional: SizeFunctional,
    pub entries: Vec<TopKEntry>,
    /// Set when the stream held fewer than `k` cells.
    pub truncated: bool,
}

impl TopKSelection {
    pub fn min_size(&self) -> Option<f64> {
        self.entries.first().map(|e| e.size)
    }

    pub fn max_size(&self) -> Option<f64> {
        self.entries.last().map(|e| e.size)
    }
}

struct Candidate {
    size: f64,
    index: u64,
    edges: Vec<f64>,
}

impl Candidate {
    fn key_cmp(&self, size: f64, index: u64) -> Ordering {
        self.size.total_cmp(&size).then(self.index.cmp(&index))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other.size, other.index)
    }
}

/// Bounded max-heap keeping the `k` smallest `(size, index)` keys seen.
///
/// Keys are distinct because indices are, so the retained set is a function
/// of the offered keys alone and merging is order-insensitive.
pub struct TopKHeap {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopKHeap {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    /// Offers a cell; its edges are copied only if it is retained.
    #[inline]
    pub fn offer(&mut self, size: f64, index: u64, edges: &[f64]) {
        if self.heap.len() < self.k {
            self.heap.push(Candidate {
                size,
                index,
                edges: edges.to_vec(),
            });
            return;
        }
        let mut top = match self.heap.peek_mut() {
            Some(top) => top,
            None => return,
        };
        if top.key_cmp(size, index) == Ordering::Greater {
            top.size = size;
            top.index = index;
            top.edges.clear();
            top.edges.extend_from_slice(edges);
        }
    }

    pub fn merge(mut self, other: TopKHeap) -> TopKHeap {
        for c in other.heap {
            self.offer(c.size, c.index, &c.edges);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn into_selection(self, functional: SizeFunctional) -> TopKSelection {
        let k = self.k;
        let truncated = self.heap.len() < k;
        let entries = self
            .heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| TopKEntry {
                cell: TypicalCell { edge_lengths: c.edges },
                size: c.size,
                sample_index: c.index,
            })
            .collect();
        TopKSelection {
            k,
            functional,
            entries,
            truncated,
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::InvalidArgument("k must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// The `k` smallest cells of the stream `0..spec.count` under `functional`.
/// A stream shorter than `k` yields every cell with `truncated` set.
pub fn select_k_smallest(
    model: &TessellationModel,
    spec: &SampleStreamSpec,
    functional: SizeFunctional,
    k: usize,
) -> Result<TopKSelection> {
    Ok(select_k_smallest_many(model, spec, &[functional], k)?
        .pop()
        .expect("one functional in, one selection out"))
}

/// One pass over the stream selecting for several functionals at once.
pub fn select_k_smallest_many(
    model: &TessellationModel,
    spec: &SampleStreamSpec,
    functionals: &[SizeFunctional],
    k: usize,
) -> Result<Vec<TopKSelection>> {
    check_k(k)?;
    for f in functionals {
        f.check_dimension(model.dimension)?;
    }
    let sine = if functionals.contains(&SizeFunctional::GeometricArea) {
        model.planar_sine()?
    } else {
        1.0
    };
    let heaps = fold_stream(
        &model.edge_rates(),
        spec,
        || functionals.iter().map(|_| TopKHeap::new(k)).collect::<Vec<_>>(),
        |heaps, index, edges| {
            for (heap, f) in heaps.iter_mut().zip(functionals) {
                heap.offer(f.eval(edges, sine), index, edges);
            }
        },
        |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
    );
    Ok(heaps
        .into_iter()
        .zip(functionals)
        .map(|(h, f)| h.into_selection(*f))
        .collect())
}
