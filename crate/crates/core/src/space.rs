//! Finite weighted state spaces and symmetric tables indexed by multisets.
//!
//! A [`StateSpace`] is a finite collection of cells, each carrying a positive
//! measure. Integrals over the space (and over its powers) become weighted
//! sums. A symmetric function of `k` cell arguments is constant on each orbit
//! of the symmetric group, so it is stored once per *multiset* of cells in a
//! [`SymmetricTable`]; the orbit size is restored by the multiplicity factor
//! when summing over ordered tuples.
//!
//! Multisets of a given order are ordered lexicographically by their sorted
//! cell tuple, and [`MultisetIndex::rank`] / [`unrank`] convert between a
//! multiset and its position in that ordering.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Errors from constructing or combining spaces, multisets, and tables.
#[derive(Debug, Error)]
pub enum SpaceError {
    /// A state space needs at least one cell.
    #[error("state space needs at least one cell")]
    EmptySpace,
    /// Cell weights must be positive, finite numbers.
    #[error("cell weight must be positive and finite, got {value} at cell {cell}")]
    BadWeight { cell: usize, value: f64 },
    /// Number of labels must match the number of cells.
    #[error("expected {expected} cell labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    /// Tuple or multiset entries must name existing cells.
    #[error("cell index {cell} out of range for a space with {num_cells} cells")]
    CellOutOfRange { cell: usize, num_cells: usize },
    /// Multiset entries must be sorted in nondecreasing order.
    #[error("multiset entries must be nondecreasing, got {prev} before {next}")]
    Unsorted { prev: usize, next: usize },
    /// Orders (tuple lengths) must be at least one.
    #[error("order must be at least 1")]
    ZeroOrder,
    /// Rank out of range for the requested order and cell count.
    #[error("rank {rank} out of range: there are {count} multisets of order {order} over {num_cells} cells")]
    RankOutOfRange {
        rank: usize,
        order: usize,
        num_cells: usize,
        count: usize,
    },
    /// Table storage length must equal the number of multisets.
    #[error("expected {expected} values for a table of order {order} over {num_cells} cells, got {got}")]
    ValueCount {
        expected: usize,
        order: usize,
        num_cells: usize,
        got: usize,
    },
    /// Table values must be finite.
    #[error("table values must be finite, got {value} at rank {rank}")]
    NonFiniteValue { rank: usize, value: f64 },
    /// Sampling ranges must satisfy `lo <= hi`.
    #[error("invalid value range: lower bound {lo} exceeds upper bound {hi}")]
    InvalidRange { lo: f64, hi: f64 },
    /// Tuple length must match the table order.
    #[error("tuple of length {got} used with a table of order {expected}")]
    TupleLength { expected: usize, got: usize },
    /// Binary table operations need identical spaces and orders.
    #[error("tables are incompatible: {0}")]
    Mismatch(String),
}

/// A finite set of cells with positive weights (measures).
///
/// The weight of cell `c` is the measure of that cell; the total measure of
/// the space is the sum of all weights. Optional labels name the cells in
/// human-readable output but play no role in any computation.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    labels: Option<Vec<String>>,
    total: f64,
}

impl StateSpace {
    /// Creates a space from positive, finite cell weights.
    pub fn new(weights: Vec<f64>) -> Result<Self, SpaceError> {
        if weights.is_empty() {
            return Err(SpaceError::EmptySpace);
        }
        for (cell, &value) in weights.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(SpaceError::BadWeight { cell, value });
            }
        }
        let total = weights.iter().sum::<f64>();
        if !total.is_finite() {
            return Err(SpaceError::BadWeight {
                cell: 0,
                value: total,
            });
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
            labels: None,
            total,
        })
    }

    /// Creates a space of `num_cells` cells of unit weight.
    pub fn uniform(num_cells: usize) -> Result<Self, SpaceError> {
        Self::new(vec![1.0; num_cells])
    }

    /// Attaches one label per cell.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, SpaceError> {
        if labels.len() != self.num_cells() {
            return Err(SpaceError::LabelCount {
                expected: self.num_cells(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Number of cells.
    pub fn num_cells(&self) -> usize {
        self.weights.len()
    }

    /// Cell weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Natural logarithms of the cell weights.
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Weight of one cell.
    pub fn weight(&self, cell: usize) -> f64 {
        self.weights[cell]
    }

    /// Total measure of the space.
    pub fn total_measure(&self) -> f64 {
        self.total
    }

    /// Cell labels, if attached.
    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Number of multisets of the given order over this space.
    pub fn multiset_count(&self, order: usize) -> usize {
        multiset_count(self.num_cells(), order)
    }

    fn check_cell(&self, cell: usize) -> Result<(), SpaceError> {
        if cell >= self.num_cells() {
            return Err(SpaceError::CellOutOfRange {
                cell,
                num_cells: self.num_cells(),
            });
        }
        Ok(())
    }

    /// Validates that every entry of a tuple names an existing cell.
    pub fn check_tuple(&self, tuple: &[usize]) -> Result<(), SpaceError> {
        for &cell in tuple {
            self.check_cell(cell)?;
        }
        Ok(())
    }
}

impl fmt::Display for StateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "state space with {} cells, total measure {}",
            self.num_cells(),
            self.total
        )
    }
}

/// Binomial coefficient `C(n, k)` computed exactly in integer arithmetic.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of multisets of `order` elements drawn from `num_cells` cells.
pub fn multiset_count(num_cells: usize, order: usize) -> usize {
    let count = binomial(num_cells + order - 1, order);
    usize::try_from(count).expect("multiset count exceeds addressable size")
}

/// A multiset of cells, stored as a nondecreasing tuple.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultisetIndex {
    cells: Vec<usize>,
}

impl MultisetIndex {
    /// Wraps an already sorted tuple, validating order and cell range.
    pub fn new(cells: Vec<usize>, space: &StateSpace) -> Result<Self, SpaceError> {
        if cells.is_empty() {
            return Err(SpaceError::ZeroOrder);
        }
        for window in cells.windows(2) {
            if window[0] > window[1] {
                return Err(SpaceError::Unsorted {
                    prev: window[0],
                    next: window[1],
                });
            }
        }
        space.check_tuple(&cells)?;
        Ok(Self { cells })
    }

    /// Builds the multiset of an arbitrary ordered tuple by sorting a copy.
    pub fn from_tuple(tuple: &[usize], space: &StateSpace) -> Result<Self, SpaceError> {
        if tuple.is_empty() {
            return Err(SpaceError::ZeroOrder);
        }
        space.check_tuple(tuple)?;
        let mut cells = tuple.to_vec();
        cells.sort_unstable();
        Ok(Self { cells })
    }

    /// Number of elements (the order of the multiset).
    pub fn order(&self) -> usize {
        self.cells.len()
    }

    /// The sorted cell tuple.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Number of distinct orderings of this multiset: `k! / prod(counts!)`.
    pub fn multiplicity(&self) -> f64 {
        multiplicity_of_sorted(&self.cells)
    }

    /// Product of the cell weights of the entries.
    pub fn weight_product(&self, space: &StateSpace) -> f64 {
        self.cells.iter().map(|&c| space.weight(c)).product()
    }

    /// Position of this multiset in the lexicographic ordering.
    pub fn rank(&self, space: &StateSpace) -> Result<usize, SpaceError> {
        space.check_tuple(&self.cells)?;
        Ok(rank_of_sorted(&self.cells, space.num_cells()))
    }

    /// The multiset obtained by merging with another (sorted merge).
    pub fn merged(&self, other: &MultisetIndex) -> MultisetIndex {
        let mut cells = Vec::with_capacity(self.order() + other.order());
        let (a, b) = (&self.cells, &other.cells);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                cells.push(a[i]);
                i += 1;
            } else {
                cells.push(b[j]);
                j += 1;
            }
        }
        cells.extend_from_slice(&a[i..]);
        cells.extend_from_slice(&b[j..]);
        MultisetIndex { cells }
    }
}

impl fmt::Display for MultisetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.cells.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}

/// Multiplicity of a sorted tuple: `k! / prod(count of each value)!`.
fn multiplicity_of_sorted(cells: &[usize]) -> f64 {
    let mut acc: u128 = 1;
    let mut run = 1usize;
    let mut seen = 1usize;
    for i in 1..cells.len() {
        seen += 1;
        if cells[i] == cells[i - 1] {
            run += 1;
        } else {
            run = 1;
        }
        // Incremental k! / prod(counts!): multiplying by seen/run keeps the
        // intermediate value integral.
        acc = acc * seen as u128 / run as u128;
    }
    acc as f64
}

/// Rank of a sorted tuple among all nondecreasing tuples of the same length,
/// ordered lexicographically.
pub(crate) fn rank_of_sorted(cells: &[usize], num_cells: usize) -> usize {
    let order = cells.len();
    let mut rank = 0usize;
    let mut lo = 0usize;
    for (pos, &cell) in cells.iter().enumerate() {
        let remaining = order - pos - 1;
        for v in lo..cell {
            rank += multiset_count(num_cells - v, remaining);
        }
        lo = cell;
    }
    rank
}

/// Inverse of [`MultisetIndex::rank`]: the multiset at a given position.
pub fn unrank(
    rank: usize,
    order: usize,
    space: &StateSpace,
) -> Result<MultisetIndex, SpaceError> {
    if order == 0 {
        return Err(SpaceError::ZeroOrder);
    }
    let num_cells = space.num_cells();
    let count = multiset_count(num_cells, order);
    if rank >= count {
        return Err(SpaceError::RankOutOfRange {
            rank,
            order,
            num_cells,
            count,
        });
    }
    let mut remaining_rank = rank;
    let mut cells = Vec::with_capacity(order);
    let mut lo = 0usize;
    for pos in 0..order {
        let remaining = order - pos - 1;
        let mut v = lo;
        loop {
            let block = multiset_count(num_cells - v, remaining);
            if remaining_rank < block {
                break;
            }
            remaining_rank -= block;
            v += 1;
        }
        cells.push(v);
        lo = v;
    }
    Ok(MultisetIndex { cells })
}

/// Iterator over all multisets of a fixed order, in rank order.
pub struct MultisetIter {
    num_cells: usize,
    current: Option<Vec<usize>>,
}

impl MultisetIter {
    fn new(num_cells: usize, order: usize) -> Self {
        let current = if order == 0 || num_cells == 0 {
            None
        } else {
            Some(vec![0usize; order])
        };
        Self { num_cells, current }
    }
}

impl Iterator for MultisetIter {
    type Item = MultisetIndex;

    fn next(&mut self) -> Option<Self::Item> {
        let cells = self.current.as_mut()?;
        let item = MultisetIndex {
            cells: cells.clone(),
        };
        // Lexicographic successor: bump the rightmost entry that can grow,
        // then level everything after it.
        let mut pos = cells.len();
        loop {
            if pos == 0 {
                self.current = None;
                break;
            }
            pos -= 1;
            if cells[pos] + 1 < self.num_cells {
                let v = cells[pos] + 1;
                for entry in cells[pos..].iter_mut() {
                    *entry = v;
                }
                break;
            }
        }
        Some(item)
    }
}

/// All multisets of the given order over the space, in rank order.
pub fn multisets(space: &StateSpace, order: usize) -> MultisetIter {
    MultisetIter::new(space.num_cells(), order)
}

/// Mass of each multiset: multiplicity times the product of cell weights.
///
/// Summing `masses[rank] * table[rank]` over all ranks equals the sum of the
/// symmetric function over all ordered tuples weighted by the product
/// measure, i.e. its integral over the `order`-fold product space.
pub fn multiset_masses(space: &StateSpace, order: usize) -> Vec<f64> {
    multisets(space, order)
        .map(|idx| idx.multiplicity() * idx.weight_product(space))
        .collect()
}

/// Maps ordered tuples to the rank of their sorted multiset.
///
/// Small tuple spaces get a dense precomputed table; larger ones fall back to
/// sorting a scratch buffer per query.
pub(crate) enum TupleRanker {
    Lut { num_cells: usize, lut: Vec<u32> },
    Direct { num_cells: usize },
}

const LUT_LIMIT: u128 = 1 << 16;

impl TupleRanker {
    pub(crate) fn new(num_cells: usize, order: usize) -> Self {
        let tuple_space = (num_cells as u128).checked_pow(order as u32);
        match tuple_space {
            Some(size) if size <= LUT_LIMIT => {
                let size = size as usize;
                let mut lut = vec![0u32; size];
                let mut digits = vec![0usize; order];
                let mut scratch = vec![0usize; order];
                for (flat, slot) in lut.iter_mut().enumerate() {
                    let mut rest = flat;
                    for d in digits.iter_mut().rev() {
                        *d = rest % num_cells;
                        rest /= num_cells;
                    }
                    scratch.copy_from_slice(&digits);
                    scratch.sort_unstable();
                    *slot = rank_of_sorted(&scratch, num_cells) as u32;
                }
                TupleRanker::Lut { num_cells, lut }
            }
            _ => TupleRanker::Direct { num_cells },
        }
    }

    /// Rank of the multiset underlying an ordered tuple.
    pub(crate) fn rank(&self, tuple: &[usize], scratch: &mut Vec<usize>) -> usize {
        match self {
            TupleRanker::Lut { num_cells, lut } => {
                let mut flat = 0usize;
                for &v in tuple {
                    flat = flat * num_cells + v;
                }
                lut[flat] as usize
            }
            TupleRanker::Direct { num_cells } => {
                scratch.clear();
                scratch.extend_from_slice(tuple);
                scratch.sort_unstable();
                rank_of_sorted(scratch, *num_cells)
            }
        }
    }
}

/// A symmetric function of `order` cell arguments, stored per multiset.
///
/// Values are kept in rank order. All entries are finite by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricTable {
    space: Arc<StateSpace>,
    order: usize,
    values: Vec<f64>,
}

impl SymmetricTable {
    /// Wraps explicit per-multiset values.
    pub fn new(
        space: Arc<StateSpace>,
        order: usize,
        values: Vec<f64>,
    ) -> Result<Self, SpaceError> {
        if order == 0 {
            return Err(SpaceError::ZeroOrder);
        }
        let expected = space.multiset_count(order);
        if values.len() != expected {
            return Err(SpaceError::ValueCount {
                expected,
                order,
                num_cells: space.num_cells(),
                got: values.len(),
            });
        }
        for (rank, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(SpaceError::NonFiniteValue { rank, value });
            }
        }
        Ok(Self {
            space,
            order,
            values,
        })
    }

    /// The zero table.
    pub fn zeros(space: Arc<StateSpace>, order: usize) -> Result<Self, SpaceError> {
        let count = space.multiset_count(order.max(1));
        Self::new(space, order, vec![0.0; count])
    }

    /// A constant table.
    pub fn constant(space: Arc<StateSpace>, order: usize, value: f64) -> Result<Self, SpaceError> {
        let count = space.multiset_count(order.max(1));
        Self::new(space, order, vec![value; count])
    }

    /// Builds a table by evaluating a function on each multiset.
    pub fn from_fn(
        space: Arc<StateSpace>,
        order: usize,
        mut f: impl FnMut(&MultisetIndex) -> f64,
    ) -> Result<Self, SpaceError> {
        if order == 0 {
            return Err(SpaceError::ZeroOrder);
        }
        let values: Vec<f64> = multisets(&space, order).map(|idx| f(&idx)).collect();
        Self::new(space, order, values)
    }

    /// A table with entries drawn uniformly from `[lo, hi]`, reproducible
    /// from the seed.
    pub fn random(
        space: Arc<StateSpace>,
        order: usize,
        lo: f64,
        hi: f64,
        seed: u64,
    ) -> Result<Self, SpaceError> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(SpaceError::InvalidRange { lo, hi });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(space, order, |_| rng.random_range(lo..=hi))
    }

    /// Projects a function given on all ordered tuples onto its symmetric
    /// part by averaging over each multiset orbit.
    ///
    /// `ordered` holds one value per ordered tuple, indexed by the flat index
    /// `sum(tuple[i] * num_cells^(order-1-i))`. When all values on an orbit
    /// agree bitwise the common value is returned unchanged, so the
    /// projection is exactly idempotent and fixes symmetric inputs exactly.
    pub fn symmetrized(
        space: Arc<StateSpace>,
        order: usize,
        ordered: &[f64],
    ) -> Result<Self, SpaceError> {
        if order == 0 {
            return Err(SpaceError::ZeroOrder);
        }
        let num_cells = space.num_cells();
        let expected = (num_cells as u128)
            .checked_pow(order as u32)
            .and_then(|n| usize::try_from(n).ok())
            .ok_or(SpaceError::ValueCount {
                expected: usize::MAX,
                order,
                num_cells,
                got: ordered.len(),
            })?;
        if ordered.len() != expected {
            return Err(SpaceError::ValueCount {
                expected,
                order,
                num_cells,
                got: ordered.len(),
            });
        }
        let count = space.multiset_count(order);
        let mut sums = vec![0.0f64; count];
        let mut firsts = vec![f64::NAN; count];
        let mut uniform = vec![true; count];
        let mut counts = vec![0u64; count];
        let ranker = TupleRanker::new(num_cells, order);
        let mut tuple = vec![0usize; order];
        let mut scratch = Vec::with_capacity(order);
        for &value in ordered {
            let rank = ranker.rank(&tuple, &mut scratch);
            if counts[rank] == 0 {
                firsts[rank] = value;
            } else if value.to_bits() != firsts[rank].to_bits() {
                uniform[rank] = false;
            }
            sums[rank] += value;
            counts[rank] += 1;
            let mut pos = order;
            while pos > 0 {
                pos -= 1;
                tuple[pos] += 1;
                if tuple[pos] < num_cells {
                    break;
                }
                tuple[pos] = 0;
            }
        }
        let values = (0..count)
            .map(|rank| {
                if uniform[rank] {
                    firsts[rank]
                } else {
                    sums[rank] / counts[rank] as f64
                }
            })
            .collect();
        Self::new(space, order, values)
    }

    /// Expands the table back to one value per ordered tuple.
    pub fn to_ordered(&self) -> Vec<f64> {
        let num_cells = self.space.num_cells();
        let size = num_cells.pow(self.order as u32);
        let ranker = TupleRanker::new(num_cells, self.order);
        let mut tuple = vec![0usize; self.order];
        let mut scratch = Vec::with_capacity(self.order);
        let mut out = Vec::with_capacity(size);
        for _ in 0..size {
            out.push(self.values[ranker.rank(&tuple, &mut scratch)]);
            let mut pos = self.order;
            while pos > 0 {
                pos -= 1;
                tuple[pos] += 1;
                if tuple[pos] < num_cells {
                    break;
                }
                tuple[pos] = 0;
            }
        }
        out
    }

    /// Number of arguments.
    pub fn order(&self) -> usize {
        self.order
    }

    /// The underlying space.
    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    /// Per-multiset values in rank order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of stored entries (multisets).
    pub fn num_entries(&self) -> usize {
        self.values.len()
    }

    /// Value at a rank.
    pub fn value(&self, rank: usize) -> f64 {
        self.values[rank]
    }

    /// Value at an ordered tuple (any ordering of the arguments).
    pub fn at_tuple(&self, tuple: &[usize]) -> Result<f64, SpaceError> {
        if tuple.len() != self.order {
            return Err(SpaceError::TupleLength {
                expected: self.order,
                got: tuple.len(),
            });
        }
        let idx = MultisetIndex::from_tuple(tuple, &self.space)?;
        Ok(self.values[rank_of_sorted(idx.cells(), self.space.num_cells())])
    }

    /// Value at a multiset.
    pub fn at_multiset(&self, index: &MultisetIndex) -> Result<f64, SpaceError> {
        if index.order() != self.order {
            return Err(SpaceError::TupleLength {
                expected: self.order,
                got: index.order(),
            });
        }
        Ok(self.values[index.rank(&self.space)?])
    }

    fn check_compatible(&self, other: &SymmetricTable) -> Result<(), SpaceError> {
        if self.order != other.order {
            return Err(SpaceError::Mismatch(format!(
                "orders {} and {} differ",
                self.order, other.order
            )));
        }
        if self.space.weights() != other.space.weights() {
            return Err(SpaceError::Mismatch(
                "tables live on different state spaces".into(),
            ));
        }
        Ok(())
    }

    /// Integral over the product space: `sum_alpha mass(alpha) * value(alpha)`.
    pub fn integrate(&self) -> f64 {
        multisets(&self.space, self.order)
            .zip(&self.values)
            .map(|(idx, &v)| idx.multiplicity() * idx.weight_product(&self.space) * v)
            .sum()
    }

    /// Weighted inner product: the integral of the pointwise product.
    pub fn weighted_inner(&self, other: &SymmetricTable) -> Result<f64, SpaceError> {
        self.check_compatible(other)?;
        Ok(multisets(&self.space, self.order)
            .zip(self.values.iter().zip(&other.values))
            .map(|(idx, (&a, &b))| idx.multiplicity() * idx.weight_product(&self.space) * a * b)
            .sum())
    }

    /// Mean with respect to the product measure: `integrate / total^order`.
    pub fn weighted_mean(&self) -> f64 {
        self.integrate() / self.space.total_measure().powi(self.order as i32)
    }

    /// Applies a function entrywise; the results must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<SymmetricTable, SpaceError> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Self::new(self.space.clone(), self.order, values)
    }

    /// Combines two tables entrywise.
    pub fn zip_with(
        &self,
        other: &SymmetricTable,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<SymmetricTable, SpaceError> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.space.clone(), self.order, values)
    }

    /// Entrywise sum.
    pub fn add(&self, other: &SymmetricTable) -> Result<SymmetricTable, SpaceError> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Entrywise difference.
    pub fn sub(&self, other: &SymmetricTable) -> Result<SymmetricTable, SpaceError> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Multiplies every entry by a scalar.
    pub fn scale(&self, factor: f64) -> Result<SymmetricTable, SpaceError> {
        self.map(|v| v * factor)
    }

    /// Adds a constant to every entry.
    pub fn shift(&self, constant: f64) -> Result<SymmetricTable, SpaceError> {
        self.map(|v| v + constant)
    }

    /// `self + step * direction`.
    pub fn axpy(&self, step: f64, direction: &SymmetricTable) -> Result<SymmetricTable, SpaceError> {
        self.zip_with(direction, |a, d| a + step * d)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Smallest entry.
    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |acc, &v| acc.min(v))
    }

    /// Largest entry.
    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v))
    }

    /// Supremum distance: largest absolute entrywise difference.
    pub fn sup_distance(&self, other: &SymmetricTable) -> Result<f64, SpaceError> {
        self.check_compatible(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    /// Weighted L1 distance: the integral of the absolute difference.
    pub fn l1_weighted_distance(&self, other: &SymmetricTable) -> Result<f64, SpaceError> {
        self.check_compatible(other)?;
        Ok(multisets(&self.space, self.order)
            .zip(self.values.iter().zip(&other.values))
            .map(|(idx, (&a, &b))| {
                idx.multiplicity() * idx.weight_product(&self.space) * (a - b).abs()
            })
            .sum())
    }

    /// Rank of the entry with the largest absolute difference from `other`.
    pub fn argmax_abs_diff(&self, other: &SymmetricTable) -> Result<usize, SpaceError> {
        self.check_compatible(other)?;
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (rank, (&a, &b)) in self.values.iter().zip(&other.values).enumerate() {
            let d = (a - b).abs();
            if d > best_abs {
                best_abs = d;
                best = rank;
            }
        }
        Ok(best)
    }
}
