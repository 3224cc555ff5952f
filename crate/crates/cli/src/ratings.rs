//! Ratings files, train/test splits and NMAE evaluation.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use optspace::metrics::nmae;
use optspace::rng::{stream, Stream};
use optspace::sparse::{read_matrix_market, MatrixLike};
use optspace::{incremental_optspace, optspace, ObservedMatrix, OptConfig, ProblemShape};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{CliError, CliResult};
use crate::plan::SolverKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingsFormat {
    /// `user item rating [extra...]` per line, tab or comma separated.
    Triples,
    MatrixMarket,
}

impl RatingsFormat {
    pub fn name(self) -> &'static str {
        match self {
            RatingsFormat::Triples => "triples",
            RatingsFormat::MatrixMarket => "mtx",
        }
    }

    /// MatrixMarket for `.mtx`, triples otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("mtx") => RatingsFormat::MatrixMarket,
            _ => RatingsFormat::Triples,
        }
    }
}

impl FromStr for RatingsFormat {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim() {
            "triples" | "tsv" | "csv" | "tsv_triples" => Ok(RatingsFormat::Triples),
            "mtx" | "matrix_market" => Ok(RatingsFormat::MatrixMarket),
            _ => Err(CliError::plan(format!("unknown ratings format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HoldoutRule {
    /// `k` random ratings of every user with at least `k + 1` go to test.
    PerUserK { k: usize, seed: u64 },
    /// A second file, in the same format, is the test set.
    FixedSplit(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct RatingsDataset {
    pub users: usize,
    pub items: usize,
    pub train: Vec<Rating>,
    pub test: Vec<Rating>,
    pub min: f64,
    pub max: f64,
    /// Original identifiers, indexed by dense user / item index.
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// Users left entirely in train because they had too few ratings.
    pub flagged_users: Vec<usize>,
}

impl RatingsDataset {
    pub fn train_matrix(&self) -> CliResult<ObservedMatrix> {
        let shape = ProblemShape::new(self.users, self.items)?;
        Ok(ObservedMatrix::new(shape, self.train.iter().map(|r| (r.user, r.item, r.value)))?)
    }

    fn check(&self) -> CliResult<()> {
        if !(self.max > self.min) {
            return Err(CliError::data(format!("rating range [{}, {}] is empty", self.min, self.max)));
        }
        let mut seen = HashSet::new();
        for r in self.train.iter().chain(&self.test) {
            if !(r.value >= self.min && r.value <= self.max) {
                return Err(CliError::data(format!(
                    "rating {} of user {} outside [{}, {}]",
                    r.value, self.user_ids[r.user], self.min, self.max
                )));
            }
            if !seen.insert((r.user, r.item)) {
                return Err(CliError::Conflict {
                    user: self.user_ids[r.user].clone(),
                    item: self.item_ids[r.item].clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct Ids {
    index: HashMap<String, usize>,
    names: Vec<String>,
}

impl Ids {
    fn get(&mut self, key: &str) -> usize {
        if let Some(&i) = self.index.get(key) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(key.to_string(), i);
        self.names.push(key.to_string());
        i
    }
}

struct Raw {
    shape: Option<(usize, usize)>,
    entries: Vec<(String, String, f64)>,
}

fn sniff_delimiter(path: &Path) -> CliResult<u8> {
    let reader = BufReader::new(File::open(path)?);
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        return Ok(if t.contains('\t') {
            b'\t'
        } else if t.contains(',') {
            b','
        } else {
            b' '
        });
    }
    Ok(b'\t')
}

fn read_triples(path: &Path) -> CliResult<Raw> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .delimiter(sniff_delimiter(path)?)
        .from_path(path)?;
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.len() < 3 {
            return Err(CliError::data(format!("{}:{line}: expected user, item, rating", path.display())));
        }
        match record[2].parse::<f64>() {
            Ok(v) if v.is_finite() => entries.push((record[0].to_string(), record[1].to_string(), v)),
            // a header row
            Err(_) if i == 0 => continue,
            _ => {
                return Err(CliError::data(format!(
                    "{}:{line}: rating {:?} is not a finite number",
                    path.display(),
                    &record[2]
                )))
            }
        }
    }
    Ok(Raw { shape: None, entries })
}

fn read_mtx(path: &Path) -> CliResult<Raw> {
    let m = read_matrix_market(BufReader::new(File::open(path)?))?;
    let entries = m
        .iter()
        .map(|(i, j, v)| ((i + 1).to_string(), (j + 1).to_string(), v))
        .collect();
    Ok(Raw {
        shape: Some(m.shape().dims()),
        entries,
    })
}

fn read_raw(path: &Path, format: RatingsFormat) -> CliResult<Raw> {
    match format {
        RatingsFormat::Triples => read_triples(path),
        RatingsFormat::MatrixMarket => read_mtx(path),
    }
}

/// All entries of a ratings file as one observed matrix.
pub fn load_matrix(path: &Path, format: RatingsFormat) -> CliResult<ObservedMatrix> {
    if format == RatingsFormat::MatrixMarket {
        return Ok(read_matrix_market(BufReader::new(File::open(path)?))?);
    }
    let raw = read_triples(path)?;
    let (mut users, mut items) = (Ids::default(), Ids::default());
    let entries: Vec<_> = raw.entries.iter().map(|(u, i, v)| (users.get(u), items.get(i), *v)).collect();
    let shape = ProblemShape::new(users.names.len(), items.names.len())?;
    Ok(ObservedMatrix::new(shape, entries)?)
}

/// Reads a ratings file and splits it into train and test.
///
/// `bounds` defaults to the smallest and largest rating present.
pub fn load_ratings(path: &Path, format: RatingsFormat, holdout: &HoldoutRule, bounds: Option<(f64, f64)>) -> CliResult<RatingsDataset> {
    let main = read_raw(path, format)?;
    let test_raw = match holdout {
        HoldoutRule::FixedSplit(p) => Some(read_raw(p, format)?),
        HoldoutRule::PerUserK { .. } => None,
    };

    let mut users = Ids::default();
    let mut items = Ids::default();
    let mut dims = main.shape;
    if let Some((m, n)) = dims {
        for i in 1..=m {
            users.get(&i.to_string());
        }
        for j in 1..=n {
            items.get(&j.to_string());
        }
    }
    if let (Some(a), Some(b)) = (dims, test_raw.as_ref().and_then(|t| t.shape)) {
        if a != b {
            return Err(CliError::data(format!("train is {}x{} but test is {}x{}", a.0, a.1, b.0, b.1)));
        }
    }
    let mut convert = |raw: &Raw| -> Vec<Rating> {
        raw.entries
            .iter()
            .map(|(u, i, v)| Rating {
                user: users.get(u),
                item: items.get(i),
                value: *v,
            })
            .collect()
    };
    let mut train = convert(&main);
    let mut test = test_raw.as_ref().map(&mut convert).unwrap_or_default();
    if dims.is_none() {
        dims = Some((users.names.len(), items.names.len()));
    }
    let (n_users, n_items) = dims.unwrap_or((0, 0));

    let mut flagged = Vec::new();
    if let HoldoutRule::PerUserK { k, seed } = holdout {
        let (tr, te, fl) = per_user_split(train, n_users, *k, *seed);
        train = tr;
        test = te;
        flagged = fl;
    }
    if train.is_empty() || test.is_empty() {
        return Err(CliError::data(format!(
            "need non-empty train and test sets, got {} and {}",
            train.len(),
            test.len()
        )));
    }

    let (min, max) = match bounds {
        Some(b) => b,
        None => train
            .iter()
            .chain(&test)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.value), hi.max(r.value))),
    };
    let dataset = RatingsDataset {
        users: n_users,
        items: n_items,
        train,
        test,
        min,
        max,
        user_ids: users.names,
        item_ids: items.names,
        flagged_users: flagged,
    };
    dataset.check()?;
    Ok(dataset)
}

fn per_user_split(all: Vec<Rating>, users: usize, k: usize, seed: u64) -> (Vec<Rating>, Vec<Rating>, Vec<usize>) {
    let mut by_user: Vec<Vec<Rating>> = vec![Vec::new(); users];
    for r in all {
        by_user[r.user].push(r);
    }
    let mut rng = stream(seed, Stream::Holdout);
    let (mut train, mut test, mut flagged) = (Vec::new(), Vec::new(), Vec::new());
    for (u, mut ratings) in by_user.into_iter().enumerate() {
        if ratings.is_empty() {
            continue;
        }
        if ratings.len() <= k {
            flagged.push(u);
            train.extend(ratings);
            continue;
        }
        ratings.sort_by_key(|r| r.item);
        ratings.shuffle(&mut rng);
        test.extend_from_slice(&ratings[..k]);
        train.extend_from_slice(&ratings[k..]);
    }
    (train, test, flagged)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmaeReport {
    pub nmae: f64,
    pub r_hat: usize,
    pub iterations: usize,
    pub wall_time_seconds: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub flagged_users: usize,
}

/// Fits the train set and scores clipped predictions on the test set.
///
/// With [`SolverKind::Incremental`] a `rank` caps the rank it grows to.
pub fn ratings_eval(dataset: &RatingsDataset, solver: SolverKind, config: &OptConfig, rank: Option<usize>) -> CliResult<NmaeReport> {
    let observed = dataset.train_matrix()?;
    let start = Instant::now();
    let result = match solver {
        SolverKind::OptSpace => optspace(&observed, config, rank)?,
        SolverKind::Incremental => {
            let mut cfg = config.clone();
            if let Some(r) = rank {
                cfg.rho_max = r;
            }
            incremental_optspace(&observed, &cfg)?
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let predictions: Vec<_> = dataset
        .test
        .iter()
        .map(|r| ((r.user, r.item), result.triple.entry(r.user, r.item).clamp(dataset.min, dataset.max)))
        .collect();
    Ok(NmaeReport {
        nmae: nmae(&predictions, &truth_list(dataset), dataset.min, dataset.max)?,
        r_hat: result.rank(),
        iterations: result.iterations(),
        wall_time_seconds: wall,
        train_count: dataset.train.len(),
        test_count: dataset.test.len(),
        flagged_users: dataset.flagged_users.len(),
    })
}

/// NMAE of predictions drawn uniformly from the rating range.
pub fn random_baseline_nmae(dataset: &RatingsDataset, seed: u64) -> CliResult<f64> {
    let mut rng = stream(seed, Stream::Diagnostics);
    let predictions: Vec<_> = dataset
        .test
        .iter()
        .map(|r| ((r.user, r.item), rng.random_range(dataset.min..=dataset.max)))
        .collect();
    Ok(nmae(&predictions, &truth_list(dataset), dataset.min, dataset.max)?)
}

fn truth_list(dataset: &RatingsDataset) -> Vec<((usize, usize), f64)> {
    dataset.test.iter().map(|r| ((r.user, r.item), r.value)).collect()
}
