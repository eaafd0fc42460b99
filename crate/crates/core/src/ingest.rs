//! Rating data ingestion: MovieLens parsing, dense re-indexing, seeded
//! train/test splits and the binary transform used by top-N training.
//!
//! Dense indices are assigned by ascending raw id, so the mapping depends only
//! on the set of ids present and not on line order. A split written to disk
//! and read back therefore reproduces the indices of the original load.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// `user<TAB>item<TAB>rating<TAB>timestamp` (MovieLens 100K `u.data`).
    Ml100k,
    /// `user::item::rating::timestamp` (MovieLens 1M `ratings.dat`).
    Ml1m,
    /// Same layout as `Ml1m` with half-star ratings (MovieLens 10M).
    Ml10m,
}

impl Format {
    fn separator(self) -> &'static str {
        match self {
            Format::Ml100k => "\t",
            Format::Ml1m | Format::Ml10m => "::",
        }
    }

    pub fn rating_range(self) -> (f64, f64) {
        match self {
            Format::Ml10m => (0.5, 5.0),
            _ => (1.0, 5.0),
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml100k" | "ml-100k" => Ok(Format::Ml100k),
            "ml1m" | "ml-1m" => Ok(Format::Ml1m),
            "ml10m" | "ml-10m" => Ok(Format::Ml10m),
            other => Err(Error::InvalidArgument(format!(
                "unknown data format `{other}` (expected ml100k, ml1m or ml10m)"
            ))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Format::Ml100k => f.write_str("ml100k"),
            Format::Ml1m => f.write_str("ml1m"),
            Format::Ml10m => f.write_str("ml10m"),
        }
    }
}

/// One raw line of a ratings file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    pub user_raw_id: u64,
    pub item_raw_id: u64,
    pub rating: f64,
    pub timestamp: i64,
}

/// An observed entry with dense indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub user: u32,
    pub item: u32,
    pub value: f64,
}

/// Bidirectional map between raw ids and dense indices `0..len`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    raw: Vec<u64>,
    dense: HashMap<u64, u32>,
}

impl IdMap {
    fn from_ids(ids: impl IntoIterator<Item = u64>) -> Self {
        let mut raw: Vec<u64> = ids.into_iter().collect();
        raw.sort_unstable();
        raw.dedup();
        let dense = raw.iter().enumerate().map(|(idx, &id)| (id, idx as u32)).collect();
        IdMap { raw, dense }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn dense(&self, raw: u64) -> Option<u32> {
        self.dense.get(&raw).copied()
    }

    pub fn raw(&self, dense: u32) -> Option<u64> {
        self.raw.get(dense as usize).copied()
    }
}

/// The observed entry set of an `m x n` rating matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRatingMatrix {
    m: usize,
    n: usize,
    entries: Vec<Entry>,
    timestamps: Vec<i64>,
    users: Arc<IdMap>,
    items: Arc<IdMap>,
}

impl SparseRatingMatrix {
    /// Builds a matrix from raw triples. Triples are numbered from 1 in
    /// diagnostics.
    pub fn from_triples(triples: &[RatingTriple]) -> Result<Self> {
        Self::from_numbered(triples.iter().enumerate().map(|(i, t)| (i + 1, *t)))
    }

    fn from_numbered(rows: impl IntoIterator<Item = (usize, RatingTriple)>) -> Result<Self> {
        let rows: Vec<(usize, RatingTriple)> = rows.into_iter().collect();
        if rows.is_empty() {
            return Err(Error::EmptyData);
        }
        let users = Arc::new(IdMap::from_ids(rows.iter().map(|(_, t)| t.user_raw_id)));
        let items = Arc::new(IdMap::from_ids(rows.iter().map(|(_, t)| t.item_raw_id)));
        let mut seen = HashSet::with_capacity(rows.len());
        let mut entries = Vec::with_capacity(rows.len());
        let mut timestamps = Vec::with_capacity(rows.len());
        for (line, t) in rows {
            if !seen.insert((t.user_raw_id, t.item_raw_id)) {
                return Err(Error::DuplicateEntry {
                    line,
                    user: t.user_raw_id,
                    item: t.item_raw_id,
                });
            }
            entries.push(Entry {
                user: users.dense(t.user_raw_id).expect("user id mapped"),
                item: items.dense(t.item_raw_id).expect("item id mapped"),
                value: t.rating,
            });
            timestamps.push(t.timestamp);
        }
        Ok(SparseRatingMatrix {
            m: users.len(),
            n: items.len(),
            entries,
            timestamps,
            users,
            items,
        })
    }

    /// Matrix over the same dimensions and id maps as `self`, holding the
    /// entries at `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        SparseRatingMatrix {
            m: self.m,
            n: self.n,
            entries: indices.iter().map(|&i| self.entries[i]).collect(),
            timestamps: indices.iter().map(|&i| self.timestamps[i]).collect(),
            users: Arc::clone(&self.users),
            items: Arc::clone(&self.items),
        }
    }

    pub fn num_users(&self) -> usize {
        self.m
    }

    pub fn num_items(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn user_ids(&self) -> &IdMap {
        &self.users
    }

    pub fn item_ids(&self) -> &IdMap {
        &self.items
    }

    pub fn shares_id_maps(&self, other: &SparseRatingMatrix) -> bool {
        Arc::ptr_eq(&self.users, &other.users) && Arc::ptr_eq(&self.items, &other.items)
    }

    /// Raw triple for entry `idx`.
    pub fn raw_triple(&self, idx: usize) -> RatingTriple {
        let e = self.entries[idx];
        RatingTriple {
            user_raw_id: self.users.raw(e.user).expect("dense user index"),
            item_raw_id: self.items.raw(e.item).expect("dense item index"),
            rating: e.value,
            timestamp: self.timestamps[idx],
        }
    }

    /// Item lists per user, each sorted ascending.
    pub fn items_by_user(&self) -> Vec<Vec<u32>> {
        let mut lists = vec![Vec::new(); self.m];
        for e in &self.entries {
            lists[e.user as usize].push(e.item);
        }
        for l in &mut lists {
            l.sort_unstable();
        }
        lists
    }

    /// Dense `m * n` membership mask, row-major.
    pub fn observed_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.m * self.n];
        for e in &self.entries {
            mask[e.user as usize * self.n + e.item as usize] = true;
        }
        mask
    }

    pub fn mean_value(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| e.value).sum::<f64>() / self.entries.len() as f64
    }
}

/// A disjoint train/test partition of one matrix.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: SparseRatingMatrix,
    pub test: SparseRatingMatrix,
    pub ratio: f64,
    pub seed: u64,
}

fn parse_line(line: &str, format: Format, line_no: usize) -> Result<RatingTriple> {
    let bad = |message: String| Error::Parse { line: line_no, message };
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(format.separator()).collect();
    if fields.len() != 4 {
        return Err(bad(format!(
            "expected 4 `{}`-separated fields, found {}",
            format.separator().escape_default(),
            fields.len()
        )));
    }
    let user_raw_id = fields[0]
        .trim()
        .parse::<u64>()
        .map_err(|e| bad(format!("user id `{}`: {e}", fields[0])))?;
    let item_raw_id = fields[1]
        .trim()
        .parse::<u64>()
        .map_err(|e| bad(format!("item id `{}`: {e}", fields[1])))?;
    let rating = fields[2]
        .trim()
        .parse::<f64>()
        .map_err(|e| bad(format!("rating `{}`: {e}", fields[2])))?;
    let timestamp = fields[3]
        .trim()
        .parse::<i64>()
        .map_err(|e| bad(format!("timestamp `{}`: {e}", fields[3])))?;
    let (lo, hi) = format.rating_range();
    if !(lo..=hi).contains(&rating) {
        return Err(bad(format!("rating {rating} outside [{lo}, {hi}]")));
    }
    Ok(RatingTriple {
        user_raw_id,
        item_raw_id,
        rating,
        timestamp,
    })
}

/// Reads triples with their 1-based line numbers. Blank lines and lines
/// starting with `#` are skipped.
type NumberedTriples = Vec<(usize, RatingTriple)>;

fn read_triples(path: &Path, format: Format) -> Result<(NumberedTriples, Vec<String>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut comments = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(c) = trimmed.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        rows.push((idx + 1, parse_line(&line, format, idx + 1)?));
    }
    Ok((rows, comments))
}

pub fn load_movielens(path: impl AsRef<Path>, format: Format) -> Result<SparseRatingMatrix> {
    let (rows, _) = read_triples(path.as_ref(), format)?;
    SparseRatingMatrix::from_numbered(rows)
}

/// Uniform random partition of the entries: the first `round(ratio * |Ω|)`
/// entries of a seeded shuffle go to the training side.
pub fn split_train_test(matrix: &SparseRatingMatrix, ratio: f64, seed: u64) -> Result<SplitPair> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let total = matrix.len();
    if total < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 entries to split, got {total}"
        )));
    }
    let n_train = ((ratio * total as f64).round() as usize).clamp(1, total - 1);
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let (train_idx, test_idx) = order.split_at(n_train);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(SplitPair {
        train: matrix.select(&train_idx),
        test: matrix.select(&test_idx),
        ratio,
        seed,
    })
}

/// Every observed value becomes `+1`.
pub fn binarize(matrix: &SparseRatingMatrix) -> SparseRatingMatrix {
    let mut out = matrix.clone();
    for e in &mut out.entries {
        e.value = 1.0;
    }
    out
}

/// Keeps a seeded uniform `fraction` of the entries (rounded, at least one).
pub fn subsample(matrix: &SparseRatingMatrix, fraction: f64, seed: u64) -> Result<SparseRatingMatrix> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "training fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if fraction == 1.0 {
        return Ok(matrix.clone());
    }
    let keep = (fraction * matrix.len() as f64).round() as usize;
    if keep == 0 {
        return Err(Error::EmptySet("subsampled training set"));
    }
    let mut order: Vec<usize> = (0..matrix.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    Ok(matrix.select(&kept))
}

fn write_tab(path: &Path, matrix: &SparseRatingMatrix, header: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for idx in 0..matrix.len() {
        let t = matrix.raw_triple(idx);
        writeln!(w, "{}\t{}\t{}\t{}", t.user_raw_id, t.item_raw_id, t.rating, t.timestamp).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `train.tsv` and `test.tsv` into `dir`, each starting with
/// `# seed=<s> ratio=<r>`.
pub fn write_split(dir: impl AsRef<Path>, split: &SplitPair) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = format!("# seed={} ratio={}", split.seed, split.ratio);
    write_tab(&dir.join("train.tsv"), &split.train, &header)?;
    write_tab(&dir.join("test.tsv"), &split.test, &header)
}

fn parse_split_header(comments: &[String]) -> Option<(u64, f64)> {
    comments.iter().find_map(|c| {
        let mut seed = None;
        let mut ratio = None;
        for tok in c.split_whitespace() {
            if let Some(v) = tok.strip_prefix("seed=") {
                seed = v.parse().ok();
            } else if let Some(v) = tok.strip_prefix("ratio=") {
                ratio = v.parse().ok();
            }
        }
        Some((seed?, ratio?))
    })
}

/// Reads a split written by [`write_split`] (TAB format). Both sides share id
/// maps built over their union.
pub fn read_split(dir: impl AsRef<Path>) -> Result<SplitPair> {
    let dir = dir.as_ref();
    let (train_rows, comments) = read_triples(&dir.join("train.tsv"), Format::Ml100k)?;
    let (test_rows, _) = read_triples(&dir.join("test.tsv"), Format::Ml100k)?;
    let (seed, ratio) = parse_split_header(&comments).ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing `# seed=<s> ratio=<r>` header in train.tsv".into(),
    })?;
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::EmptyData);
    }
    let n_train = train_rows.len();
    let all = SparseRatingMatrix::from_numbered(train_rows.into_iter().chain(test_rows))?;
    let train_idx: Vec<usize> = (0..n_train).collect();
    let test_idx: Vec<usize> = (n_train..all.len()).collect();
    Ok(SplitPair {
        train: all.select(&train_idx),
        test: all.select(&test_idx),
        ratio,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn triple(u: u64, i: u64, r: f64) -> RatingTriple {
        RatingTriple {
            user_raw_id: u,
            item_raw_id: i,
            rating: r,
            timestamp: 0,
        }
    }

    #[test]
    fn singleton_file() {
        let f = write_tmp("1\t1\t5\t0\n");
        let m = load_movielens(f.path(), Format::Ml100k).unwrap();
        assert_eq!((m.num_users(), m.num_items()), (1, 1));
        assert_eq!(
            m.entries(),
            &[Entry {
                user: 0,
                item: 0,
                value: 5.0
            }]
        );
    }

    #[test]
    fn two_users_same_item_collapse() {
        let f = write_tmp("10\t7\t3\t1\n20\t7\t4\t2\n");
        let m = load_movielens(f.path(), Format::Ml100k).unwrap();
        assert_eq!((m.num_users(), m.num_items(), m.len()), (2, 1, 2));
    }

    #[test]
    fn ml1m_separator() {
        let f = write_tmp("1::1193::5::978300760\n1::661::3::978302109\n");
        let m = load_movielens(f.path(), Format::Ml1m).unwrap();
        assert_eq!((m.num_users(), m.num_items(), m.len()), (1, 2, 2));
        assert_eq!(m.timestamps(), &[978300760, 978302109]);
    }

    #[test]
    fn ml10m_half_stars() {
        let f = write_tmp(
            "1::122::4.5::838985046
1::185::0.5::838983525
",
        );
        let m = load_movielens(f.path(), "ml10m".parse().unwrap()).unwrap();
        assert!(m.entries().iter().any(|e| e.value == 0.5));
        assert_eq!(Format::Ml10m.rating_range(), (0.5, 5.0));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("1\t1\t5\t0\n2\tx\t3\t0\n");
        match load_movielens(f.path(), Format::Ml100k) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("1\t1\t5\n");
        assert!(matches!(
            load_movielens(f.path(), Format::Ml100k),
            Err(Error::Parse { line: 1, .. })
        ));
        let f = write_tmp("1\t1\t9\t0\n");
        assert!(matches!(
            load_movielens(f.path(), Format::Ml100k),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_pair_rejected() {
        let f = write_tmp("1\t1\t5\t0\n1\t2\t5\t0\n1\t1\t3\t9\n");
        assert!(matches!(
            load_movielens(f.path(), Format::Ml100k),
            Err(Error::DuplicateEntry {
                line: 3,
                user: 1,
                item: 1
            })
        ));
    }

    #[test]
    fn empty_file_rejected() {
        let f = write_tmp("\n\n");
        assert!(matches!(
            load_movielens(f.path(), Format::Ml100k),
            Err(Error::EmptyData)
        ));
    }

    #[test]
    fn dense_ids_follow_raw_order() {
        let m = SparseRatingMatrix::from_triples(&[triple(50, 9, 1.0), triple(3, 4, 2.0)]).unwrap();
        assert_eq!(m.user_ids().dense(3), Some(0));
        assert_eq!(m.user_ids().dense(50), Some(1));
        assert_eq!(m.item_ids().raw(1), Some(9));
        assert_eq!(m.raw_triple(0), triple(50, 9, 1.0));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let triples: Vec<_> = (0..1000u64).map(|k| triple(k % 37, k, 3.0)).collect();
        let m = SparseRatingMatrix::from_triples(&triples).unwrap();
        let a = split_train_test(&m, 0.9, 7).unwrap();
        let b = split_train_test(&m, 0.9, 7).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (900, 100));
        assert_eq!(a.train.entries(), b.train.entries());
        assert_eq!(a.test.entries(), b.test.entries());
        assert!(a.train.shares_id_maps(&a.test));
        let c = split_train_test(&m, 0.9, 8).unwrap();
        assert_ne!(a.test.entries(), c.test.entries());
    }

    #[test]
    fn split_rejects_bad_ratio() {
        let m = SparseRatingMatrix::from_triples(&[triple(1, 1, 1.0), triple(1, 2, 1.0)]).unwrap();
        for r in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(split_train_test(&m, r, 0), Err(Error::InvalidArgument(_))));
        }
        let one = SparseRatingMatrix::from_triples(&[triple(1, 1, 1.0)]).unwrap();
        assert!(split_train_test(&one, 0.5, 0).is_err());
    }

    #[test]
    fn binarize_sets_ones_and_is_idempotent() {
        let m = SparseRatingMatrix::from_triples(&[triple(1, 1, 4.0), triple(2, 1, 1.0)]).unwrap();
        let b = binarize(&m);
        assert!(b.entries().iter().all(|e| e.value == 1.0));
        assert_eq!(b.len(), m.len());
        assert_eq!(binarize(&b), b);
    }

    #[test]
    fn subsample_halves() {
        let triples: Vec<_> = (0..101u64).map(|k| triple(k % 5, k, 2.0)).collect();
        let m = SparseRatingMatrix::from_triples(&triples).unwrap();
        let half = subsample(&m, 0.5, 3).unwrap();
        assert!((half.len() as i64 - 50).abs() <= 1);
        assert_eq!(subsample(&m, 1.0, 3).unwrap(), m);
        assert!(subsample(&m, 0.0, 3).is_err());
        assert!(matches!(subsample(&m, 0.001, 3), Err(Error::EmptySet(_))));
    }

    #[test]
    fn split_roundtrips_through_disk() {
        let triples: Vec<_> = (0..200u64)
            .map(|k| triple(k % 13, k % 29, ((k % 5) + 1) as f64))
            .collect();
        let dedup: Vec<_> = {
            let mut seen = HashSet::new();
            triples
                .into_iter()
                .filter(|t| seen.insert((t.user_raw_id, t.item_raw_id)))
                .collect()
        };
        let m = SparseRatingMatrix::from_triples(&dedup).unwrap();
        let split = split_train_test(&m, 0.8, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_split(dir.path(), &split).unwrap();
        let back = read_split(dir.path()).unwrap();
        assert_eq!(back.seed, 11);
        assert_eq!(back.ratio, 0.8);
        assert_eq!(back.train.entries(), split.train.entries());
        assert_eq!(back.test.entries(), split.test.entries());
        let header = std::fs::read_to_string(dir.path().join("test.tsv")).unwrap();
        assert!(header.starts_with("# seed=11 ratio=0.8\n"));
    }
}
