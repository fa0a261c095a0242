//! K-nearest-neighbor classifier with a KD-tree accelerator and the
//! partial-distance primitive used by the two-party prediction path.

use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::{Matrix, NumericDataset};
use crate::error::{Error, Result};

pub const KDTREE_LEAF_CAPACITY: usize = 30;

const SNAPSHOT_MAGIC: &[u8; 4] = b"FKNN";
const SNAPSHOT_VERSION: u8 = 1;

/// Squared distances of `x_sub` to the selected columns of every row.
///
/// `columns[t]` indexes into `rows`; `x_sub[t]` is the query value for that
/// column. Squared Euclidean distance is additive over disjoint column
/// sets, so partials computed by different parties sum to the full
/// distance.
pub fn partial_sq_dist(columns: &[usize], x_sub: &[f64], rows: &Matrix) -> Result<Vec<f64>> {
    if columns.len() != x_sub.len() {
        return Err(Error::DimensionMismatch {
            expected: columns.len(),
            got: x_sub.len(),
        });
    }
    for &c in columns {
        if c >= rows.cols {
            return Err(Error::IndexOutOfRange {
                index: c,
                columns: rows.cols,
            });
        }
    }
    let mut out = vec![0.0f64; rows.rows];
    for (i, o) in out.iter_mut().enumerate() {
        let row = rows.row(i);
        let mut acc = 0.0;
        for (t, &c) in columns.iter().enumerate() {
            let d = row[c] - x_sub[t];
            acc += d * d;
        }
        *o = acc;
    }
    Ok(out)
}

/// Keeps the k smallest (distance, index) pairs seen so far, ordered
/// ascending with ties broken by index.
#[derive(Debug)]
pub struct NearestSet {
    k: usize,
    best: Vec<(f64, u32)>,
}

impl NearestSet {
    pub fn new(k: usize) -> Self {
        NearestSet {
            k,
            best: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn beats_worst(&self, d: f64, idx: u32) -> bool {
        match self.best.last() {
            Some(&(wd, wi)) => d < wd || (d == wd && idx < wi),
            None => true,
        }
    }

    #[inline]
    pub fn offer(&mut self, d: f64, idx: u32) {
        if self.best.len() == self.k && !self.beats_worst(d, idx) {
            return;
        }
        let pos = self
            .best
            .partition_point(|&(bd, bi)| bd < d || (bd == d && bi < idx));
        self.best.insert(pos, (d, idx));
        if self.best.len() > self.k {
            self.best.pop();
        }
    }

    /// The current k-th distance, if k entries are present.
    #[inline]
    pub fn worst(&self) -> Option<(f64, u32)> {
        if self.best.len() == self.k {
            self.best.last().copied()
        } else {
            None
        }
    }

    pub fn into_sorted(self) -> Vec<(f64, u32)> {
        self.best
    }
}

/// Selects the k nearest training rows given a full distance vector and
/// returns the positive-label vote fraction.
pub fn vote_from_distances(distances: &[f64], labels: &[u8], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::KZero);
    }
    if k > distances.len() {
        return Err(Error::KTooLarge {
            k,
            n: distances.len(),
        });
    }
    let mut set = NearestSet::new(k);
    for (i, &d) in distances.iter().enumerate() {
        set.offer(d, i as u32);
    }
    let positives: u32 = set
        .into_sorted()
        .iter()
        .map(|&(_, i)| labels[i as usize] as u32)
        .sum();
    Ok(positives as f64 / k as f64)
}

enum NodeKind {
    Leaf {
        start: usize,
        len: usize,
    },
    Internal {
        dim: usize,
        left: usize,
        right: usize,
    },
}

struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    kind: NodeKind,
}

/// Static KD-tree over training rows. The tree only accelerates the
/// search; results are pinned to the exhaustive-scan semantics (ascending
/// distance, ties by ascending row index).
pub struct KdTree {
    nodes: Vec<Node>,
    point_idx: Vec<u32>,
    root: usize,
}

impl KdTree {
    pub fn build(rows: &Matrix, leaf_capacity: usize) -> KdTree {
        let mut point_idx: Vec<u32> = (0..rows.rows as u32).collect();
        let mut nodes = Vec::new();
        let root = if rows.rows == 0 {
            usize::MAX
        } else {
            build_node(
                rows,
                &mut nodes,
                &mut point_idx,
                0,
                rows.rows,
                leaf_capacity,
            )
        };
        KdTree {
            nodes,
            point_idx,
            root,
        }
    }

    /// Exact k-nearest search; equivalent to scanning all rows.
    pub fn nearest(&self, rows: &Matrix, x: &[f64], k: usize) -> Vec<(f64, u32)> {
        let mut set = NearestSet::new(k);
        if self.root != usize::MAX {
            self.visit(self.root, rows, x, &mut set);
        }
        set.into_sorted()
    }

    fn visit(&self, node_id: usize, rows: &Matrix, x: &[f64], set: &mut NearestSet) {
        let node = &self.nodes[node_id];
        if let Some((wd, _)) = set.worst() {
            if box_min_sq_dist(&node.lo, &node.hi, x) > wd {
                return;
            }
        }
        match node.kind {
            NodeKind::Leaf { start, len } => {
                for &pi in &self.point_idx[start..start + len] {
                    let d = sq_dist(rows.row(pi as usize), x);
                    set.offer(d, pi);
                }
            }
            NodeKind::Internal { dim, left, right } => {
                let (first, second) = if x[dim] <= self.nodes[left].hi[dim] {
                    (left, right)
                } else {
                    (right, left)
                };
                self.visit(first, rows, x, set);
                self.visit(second, rows, x, set);
            }
        }
    }
}

#[inline]
fn sq_dist(row: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in row.iter().zip(x) {
        let d = a - b;
        acc += d * d;
    }
    acc
}

fn box_min_sq_dist(lo: &[f64], hi: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..x.len() {
        let v = x[j];
        let d = if v < lo[j] {
            lo[j] - v
        } else if v > hi[j] {
            v - hi[j]
        } else {
            0.0
        };
        acc += d * d;
    }
    acc
}

fn build_node(
    rows: &Matrix,
    nodes: &mut Vec<Node>,
    point_idx: &mut [u32],
    start: usize,
    len: usize,
    leaf_capacity: usize,
) -> usize {
    let p = rows.cols;
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for &pi in &point_idx[start..start + len] {
        let row = rows.row(pi as usize);
        for j in 0..p {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    if len <= leaf_capacity {
        nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf { start, len },
        });
        return nodes.len() - 1;
    }
    let mut dim = 0;
    let mut spread = -1.0;
    for j in 0..p {
        let s = hi[j] - lo[j];
        if s > spread {
            spread = s;
            dim = j;
        }
    }
    if spread == 0.0 {
        // All points identical; splitting cannot make progress.
        nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf { start, len },
        });
        return nodes.len() - 1;
    }
    let mid = len / 2;
    point_idx[start..start + len].select_nth_unstable_by(mid, |&a, &b| {
        let va = rows.get(a as usize, dim);
        let vb = rows.get(b as usize, dim);
        va.partial_cmp(&vb).unwrap().then(a.cmp(&b))
    });
    let left = build_node(rows, nodes, point_idx, start, mid, leaf_capacity);
    let right = build_node(
        rows,
        nodes,
        point_idx,
        start + mid,
        len - mid,
        leaf_capacity,
    );
    nodes.push(Node {
        lo,
        hi,
        kind: NodeKind::Internal { dim, left, right },
    });
    nodes.len() - 1
}

/// Immutable trained classifier: training rows, labels, k, and the spatial
/// index.
pub struct KnnModel {
    pub train: Matrix,
    pub labels: Vec<u8>,
    pub k: usize,
    tree: KdTree,
}

impl KnnModel {
    pub fn fit(train: &NumericDataset, k: usize) -> Result<KnnModel> {
        KnnModel::from_parts(train.matrix.clone(), train.labels.clone(), k)
    }

    pub fn from_parts(train: Matrix, labels: Vec<u8>, k: usize) -> Result<KnnModel> {
        if k == 0 {
            return Err(Error::KZero);
        }
        if train.rows == 0 {
            return Err(Error::EmptyDataset);
        }
        if k > train.rows {
            return Err(Error::KTooLarge { k, n: train.rows });
        }
        if labels.len() != train.rows {
            return Err(Error::DimensionMismatch {
                expected: train.rows,
                got: labels.len(),
            });
        }
        let tree = KdTree::build(&train, KDTREE_LEAF_CAPACITY);
        Ok(KnnModel {
            train,
            labels,
            k,
            tree,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train.rows
    }

    pub fn n_features(&self) -> usize {
        self.train.cols
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.train.cols {
            return Err(Error::DimensionMismatch {
                expected: self.train.cols,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Positive-label fraction among the k nearest training rows.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let nearest = self.tree.nearest(&self.train, x, self.k);
        let positives: u32 = nearest
            .iter()
            .map(|&(_, i)| self.labels[i as usize] as u32)
            .sum();
        Ok(positives as f64 / self.k as f64)
    }

    /// Same result as `predict_proba`, bypassing the spatial index.
    pub fn predict_proba_scan(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let all: Vec<usize> = (0..self.train.cols).collect();
        let distances = partial_sq_dist(&all, x, &self.train)?;
        vote_from_distances(&distances, &self.labels, self.k)
    }

    /// 1 iff the positive vote fraction reaches 0.5.
    pub fn predict_label(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.predict_proba(x)? >= 0.5))
    }

    pub fn accuracy(&self, test: &NumericDataset) -> Result<f64> {
        if test.n_rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let hits: usize = (0..test.n_rows())
            .map(|i| {
                self.predict_label(test.matrix.row(i))
                    .map(|l| usize::from(l == test.labels[i]))
            })
            .collect::<Result<Vec<_>>>()?
            .iter()
            .sum();
        Ok(hits as f64 / test.n_rows() as f64)
    }

    /// Writes the versioned binary snapshot: magic, version, k, row count,
    /// column count, labels, then row-major values as little-endian f64.
    /// The spatial index is rebuilt on load.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf =
            Vec::with_capacity(16 + self.labels.len() + self.train.rows * self.train.cols * 8);
        buf.extend_from_slice(SNAPSHOT_MAGIC);
        buf.push(SNAPSHOT_VERSION);
        buf.extend_from_slice(&(self.k as u32).to_le_bytes());
        buf.extend_from_slice(&(self.train.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(self.train.cols as u32).to_le_bytes());
        buf.extend_from_slice(&self.labels);
        for i in 0..self.train.rows {
            for &v in self.train.row(i) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<KnnModel> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::io(path, e))?
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let mut at = 0usize;
        let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
            if *at + n > bytes.len() {
                return Err(Error::Snapshot("truncated snapshot".into()));
            }
            let s = &bytes[*at..*at + n];
            *at += n;
            Ok(s)
        };
        if take(&mut at, 4)? != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = take(&mut at, 1)?[0];
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let read_u32 = |at: &mut usize| -> Result<u32> {
            Ok(u32::from_le_bytes(take(at, 4)?.try_into().unwrap()))
        };
        let k = read_u32(&mut at)? as usize;
        let n = read_u32(&mut at)? as usize;
        let p = read_u32(&mut at)? as usize;
        let labels = take(&mut at, n)?.to_vec();
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Snapshot("labels must be 0 or 1".into()));
        }
        let mut matrix = Matrix::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                let v = f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
                matrix.set(i, j, v);
            }
        }
        if at != bytes.len() {
            return Err(Error::Snapshot("trailing bytes".into()));
        }
        KnnModel::from_parts(matrix, labels, k)
    }
}
