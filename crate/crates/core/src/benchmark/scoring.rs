use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::KValue;
use super::pipeline::ResultRow;
use crate::error::{Error, Result};

/// Points for first, second and third place.
pub const PLACE_POINTS: [u32; 3] = [3, 2, 1];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceCounts {
    pub first: u32,
    pub second: u32,
    pub third: u32,
}

impl PlaceCounts {
    pub fn new(first: u32, second: u32, third: u32) -> Self {
        PlaceCounts { first, second, third }
    }

    pub fn score(&self) -> u32 {
        PLACE_POINTS[0] * self.first + PLACE_POINTS[1] * self.second + PLACE_POINTS[2] * self.third
    }
}

/// Per-method placement counts over a set of (model, k) cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreBoard {
    /// Board label, e.g. `k=5`.
    pub label: String,
    /// Methods in the order they were requested.
    pub methods: Vec<String>,
    pub counts: Vec<PlaceCounts>,
    pub cells: usize,
    /// Cells where several methods shared a place.
    pub tied_cells: usize,
}

impl ScoreBoard {
    pub fn from_counts(label: impl Into<String>, entries: &[(&str, PlaceCounts)]) -> Self {
        ScoreBoard {
            label: label.into(),
            methods: entries.iter().map(|(m, _)| m.to_string()).collect(),
            counts: entries.iter().map(|(_, c)| *c).collect(),
            cells: 0,
            tied_cells: 0,
        }
    }

    pub fn score(&self, method: &str) -> Option<u32> {
        self.counts_for(method).map(|c| c.score())
    }

    pub fn counts_for(&self, method: &str) -> Option<PlaceCounts> {
        self.methods.iter().position(|m| m == method).map(|i| self.counts[i])
    }

    /// Methods by descending score, ties by request order.
    pub fn standings(&self) -> Vec<(&str, PlaceCounts)> {
        let mut idx: Vec<usize> = (0..self.methods.len()).collect();
        idx.sort_by_key(|&i| std::cmp::Reverse(self.counts[i].score()));
        idx.into_iter().map(|i| (self.methods[i].as_str(), self.counts[i])).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["method", "first", "second", "third", "score"])?;
        for (m, c) in self.methods.iter().zip(&self.counts) {
            w.write_record([m.clone(), c.first.to_string(), c.second.to_string(), c.third.to_string(), c.score().to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn read_csv(path: impl AsRef<Path>, label: impl Into<String>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let mut board = ScoreBoard {
            label: label.into(),
            ..ScoreBoard::default()
        };
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<u32> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Input(format!("bad scoreboard field {i} in {rec:?}")))
            };
            let c = PlaceCounts::new(num(1)?, num(2)?, num(3)?);
            if num(4)? != c.score() {
                return Err(Error::Input(format!("scoreboard score mismatch in {rec:?}")));
            }
            board.methods.push(rec[0].to_string());
            board.counts.push(c);
        }
        Ok(board)
    }

    /// Fixed-width table.
    pub fn to_table(&self) -> String {
        let width = self.methods.iter().map(|m| m.len()).max().unwrap_or(6).max(6);
        let mut s = String::new();
        let _ = writeln!(s, "{} ({} cells, {} with shared places)", self.label, self.cells, self.tied_cells);
        let _ = writeln!(s, "{:<width$}  first  second  third  score", "method");
        for (m, c) in self.standings() {
            let _ = writeln!(s, "{m:<width$}  {:>5}  {:>6}  {:>5}  {:>5}", c.first, c.second, c.third, c.score());
        }
        s
    }
}

/// Metric tuple compared lexicographically: acc, then prec, rec, f1, bacc,
/// mcc, aucroc.
fn sort_key(r: &ResultRow) -> [f64; 7] {
    let m = &r.metrics;
    [m.acc, m.prec, m.rec, m.f1, m.bacc, m.mcc, m.aucroc]
}

fn cmp_desc(a: &[f64; 7], b: &[f64; 7]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.total_cmp(x) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Scores `methods` on every (model, k) cell found in `rows`, skipping
/// `k = all` (every method shares the full-feature run there).
///
/// Methods with identical metric tuples share a place; the three best
/// distinct tuples earn 3, 2 and 1 points.
pub fn weighted_scoring(rows: &[ResultRow], methods: &[String]) -> Result<ScoreBoard> {
    weighted_scoring_where(rows, methods, "all k", |k| k != KValue::All)
}

/// One board per selected k.
pub fn scoring_by_k(rows: &[ResultRow], methods: &[String]) -> Result<Vec<ScoreBoard>> {
    let ks: BTreeSet<KValue> = rows.iter().map(|r| r.k).filter(|k| *k != KValue::All).collect();
    ks.into_iter()
        .map(|k| weighted_scoring_where(rows, methods, &format!("k={k}"), |x| x == k))
        .collect()
}

fn weighted_scoring_where(
    rows: &[ResultRow],
    methods: &[String],
    label: &str,
    keep: impl Fn(KValue) -> bool,
) -> Result<ScoreBoard> {
    let wanted: BTreeSet<&str> = methods.iter().map(String::as_str).collect();
    let mut cells: BTreeMap<(String, KValue), BTreeMap<&str, &ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| keep(r.k) && wanted.contains(r.method.as_str())) {
        let cell = cells.entry((r.model.clone(), r.k)).or_default();
        if cell.insert(r.method.as_str(), r).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate row for model {} method {} k={}",
                r.model, r.method, r.k
            )));
        }
    }
    let mut board = ScoreBoard {
        label: label.to_string(),
        methods: methods.to_vec(),
        counts: vec![PlaceCounts::default(); methods.len()],
        cells: cells.len(),
        tied_cells: 0,
    };
    for ((model, k), cell) in &cells {
        for m in methods {
            if !cell.contains_key(m.as_str()) {
                return Err(Error::MissingCell(format!("model {model}, k={k}, method {m}")));
            }
        }
        let mut keyed: Vec<(usize, [f64; 7])> = methods
            .iter()
            .enumerate()
            .map(|(i, m)| (i, sort_key(cell[m.as_str()])))
            .collect();
        keyed.sort_by(|a, b| cmp_desc(&a.1, &b.1).then(a.0.cmp(&b.0)));
        let mut place = 0usize;
        let mut tied = false;
        for (j, (i, key)) in keyed.iter().enumerate() {
            if j > 0 {
                if cmp_desc(&keyed[j - 1].1, key).is_ne() {
                    place += 1;
                } else {
                    tied = true;
                }
            }
            if place >= PLACE_POINTS.len() {
                break;
            }
            let c = &mut board.counts[*i];
            match place {
                0 => c.first += 1,
                1 => c.second += 1,
                _ => c.third += 1,
            }
        }
        if tied {
            board.tied_cells += 1;
        }
    }
    Ok(board)
}
