//! Feature rankings: aggregation of per-model importances into a single
//! ranking, rank voting, statistical baselines and top-k selection.
//!
//! Ties are always broken by ascending feature index.

mod baseline;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use baseline::{anova_f_scores, baseline_rank, chi2_scores, info_gain_scores, BaselineMethod, BaselineScores};

use crate::attribution::GlobalImportance;
use crate::error::{Error, Result};

/// Aggregation methods built on per-model attributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Each model's own ranking.
    ModelSpecific,
    OverallRank,
    WeightedRank,
    NormalizedWeightedRank,
    ModelsAttacks,
    CombinedSelection,
}

impl Aggregation {
    pub const ALL: [Aggregation; 6] = [
        Aggregation::ModelSpecific,
        Aggregation::OverallRank,
        Aggregation::WeightedRank,
        Aggregation::NormalizedWeightedRank,
        Aggregation::ModelsAttacks,
        Aggregation::CombinedSelection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Aggregation::ModelSpecific => "model_specific",
            Aggregation::OverallRank => "overall_rank",
            Aggregation::WeightedRank => "weighted_rank",
            Aggregation::NormalizedWeightedRank => "normalized_weighted_rank",
            Aggregation::ModelsAttacks => "models_attacks",
            Aggregation::CombinedSelection => "combined_selection",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let key = match key.as_str() {
            "overall" => "overall_rank",
            "weighted" => "weighted_rank",
            "normalized" | "normalized_weighted" => "normalized_weighted_rank",
            "models_attacks_score" | "models+attacks" => "models_attacks",
            "combined" => "combined_selection",
            other => other,
        }
        .to_string();
        Aggregation::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ranking method `{s}`")))
    }
}

/// Features ordered from most to least important.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub method: String,
    /// `(feature index, score)` in rank order.
    pub entries: Vec<(usize, f64)>,
    pub feature_names: Vec<String>,
    /// True when a lower score means a better rank.
    pub lower_is_better: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl FeatureRanking {
    /// Orders features by `scores` (descending unless `lower_is_better`),
    /// ties by index.
    pub fn from_scores(method: impl Into<String>, scores: &[f64], feature_names: &[String], lower_is_better: bool) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            let c = scores[a].total_cmp(&scores[b]);
            (if lower_is_better { c } else { c.reverse() }).then(a.cmp(&b))
        });
        FeatureRanking {
            method: method.into(),
            entries: order.into_iter().map(|j| (j, scores[j])).collect(),
            feature_names: feature_names.to_vec(),
            lower_is_better,
            flags: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }

    /// 1-based rank position of every feature, indexed by feature.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.entries.len()];
        for (r, (j, _)) in self.entries.iter().enumerate() {
            pos[*j] = r + 1;
        }
        pos
    }

    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.entries.len()];
        for (j, _) in &self.entries {
            if *j >= seen.len() || seen[*j] {
                return false;
            }
            seen[*j] = true;
        }
        true
    }

    pub fn top_names(&self, k: usize) -> Vec<String> {
        self.entries.iter().take(k).map(|(j, _)| self.feature_names[*j].clone()).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        self.write_records(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Appends `method,rank,feature,score` rows (header included).
    pub fn write_records<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["method", "rank", "feature", "score"])?;
        for (r, (j, s)) in self.entries.iter().enumerate() {
            w.write_record([self.method.clone(), (r + 1).to_string(), self.feature_names[*j].clone(), s.to_string()])?;
        }
        Ok(())
    }

    /// Reads a ranking CSV; `feature_names` fixes the index space.
    pub fn read_csv(path: impl AsRef<Path>, feature_names: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let mut method = String::new();
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            method = rec[0].to_string();
            let j = feature_names
                .iter()
                .position(|n| n == &rec[2])
                .ok_or_else(|| Error::Input(format!("{}: unknown feature `{}`", path.display(), &rec[2])))?;
            let s: f64 = rec[3]
                .parse()
                .map_err(|_| Error::Input(format!("bad score `{}`", &rec[3])))?;
            entries.push((j, s));
        }
        let lower_is_better = entries.windows(2).any(|w| w[0].1 < w[1].1);
        let ranking = FeatureRanking {
            method,
            entries,
            feature_names: feature_names.to_vec(),
            lower_is_better,
            flags: Vec::new(),
        };
        if ranking.len() != feature_names.len() || !ranking.is_permutation() {
            return Err(Error::Input(format!("{}: ranking does not cover every feature once", path.display())));
        }
        Ok(ranking)
    }
}

/// Descending importance, ties by index.
pub fn rank_from_importance(method: impl Into<String>, importance: &[f64], feature_names: &[String]) -> FeatureRanking {
    FeatureRanking::from_scores(method, importance, feature_names, false)
}

/// Inputs shared by the aggregation methods.
#[derive(Debug, Clone, PartialEq)]
pub struct RankContext {
    pub models: Vec<String>,
    /// Per-model accuracy, the weight in the weighted rankings.
    pub accuracies: Vec<f64>,
    pub attacks: Vec<String>,
    pub feature_names: Vec<String>,
    /// `[model][feature]`
    pub importance: Vec<Array1<f64>>,
    /// `[model]` -> `[attack][feature]`
    pub per_class: Vec<Array2<f64>>,
}

impl RankContext {
    /// From one global importance per model; every class counts as an
    /// entry of the attack set.
    pub fn from_importances(models: &[(String, f64, &GlobalImportance)]) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::InvalidArgument("rank context needs at least one model".into()))?
            .2;
        for (name, _, g) in models {
            if g.feature_names != first.feature_names || g.class_names != first.class_names {
                return Err(Error::InvalidArgument(format!("model `{name}` explains a different feature/class set")));
            }
        }
        let ctx = RankContext {
            models: models.iter().map(|m| m.0.clone()).collect(),
            accuracies: models.iter().map(|m| m.1).collect(),
            attacks: first.class_names.clone(),
            feature_names: first.feature_names.clone(),
            importance: models.iter().map(|m| m.2.overall.clone()).collect(),
            per_class: models.iter().map(|m| m.2.per_class.clone()).collect(),
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, d) = (self.models.len(), self.feature_names.len());
        if m == 0 {
            return Err(Error::InvalidArgument("rank context needs at least one model".into()));
        }
        if self.accuracies.len() != m || self.importance.len() != m {
            return Err(Error::shape(format!("{m} models"), "mismatched per-model inputs"));
        }
        if self.accuracies.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidArgument("accuracies must lie in [0, 1]".into()));
        }
        for imp in &self.importance {
            if imp.len() != d || imp.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidArgument("importances must be finite, non-negative, one per feature".into()));
            }
        }
        if !self.per_class.is_empty() {
            if self.per_class.len() != m {
                return Err(Error::shape(format!("{m} per-class tables"), self.per_class.len().to_string()));
            }
            for pc in &self.per_class {
                if pc.dim() != (self.attacks.len(), d) {
                    return Err(Error::shape(
                        format!("{} x {d}", self.attacks.len()),
                        format!("{:?}", pc.dim()),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn model_ranking(&self, m: usize) -> FeatureRanking {
        rank_from_importance(
            format!("{}:{}", Aggregation::ModelSpecific, self.models[m]),
            self.importance[m].as_slice().expect("contiguous"),
            &self.feature_names,
        )
    }
}

fn mean_positions<'a>(rankings: impl Iterator<Item = &'a FeatureRanking>, d: usize) -> Vec<f64> {
    let mut sum = vec![0.0; d];
    let mut count = 0.0;
    for r in rankings {
        for (j, p) in r.positions().into_iter().enumerate() {
            sum[j] += p as f64;
        }
        count += 1.0;
    }
    sum.iter().map(|s| s / count).collect()
}

/// Mean rank position across models; ascending.
pub fn overall_rank(ctx: &RankContext) -> Result<FeatureRanking> {
    ctx.validate()?;
    let rankings: Vec<FeatureRanking> = (0..ctx.models.len()).map(|m| ctx.model_ranking(m)).collect();
    let score = mean_positions(rankings.iter(), ctx.feature_names.len());
    Ok(FeatureRanking::from_scores(Aggregation::OverallRank.name(), &score, &ctx.feature_names, true))
}

fn weighted(ctx: &RankContext, importance: &[Array1<f64>], name: &str) -> FeatureRanking {
    let d = ctx.feature_names.len();
    let m = ctx.models.len() as f64;
    let score: Vec<f64> = (0..d)
        .map(|j| {
            ctx.accuracies
                .iter()
                .zip(importance)
                .map(|(a, imp)| a * imp[j])
                .sum::<f64>()
                / m
        })
        .collect();
    FeatureRanking::from_scores(name, &score, &ctx.feature_names, false)
}

/// Mean over models of `accuracy * importance`; descending.
pub fn weighted_rank(ctx: &RankContext) -> Result<FeatureRanking> {
    ctx.validate()?;
    Ok(weighted(ctx, &ctx.importance, Aggregation::WeightedRank.name()))
}

/// As [`weighted_rank`] with each model's importances scaled to sum 1.
pub fn normalized_weighted_rank(ctx: &RankContext) -> Result<FeatureRanking> {
    ctx.validate()?;
    let normalized = ctx
        .importance
        .iter()
        .zip(&ctx.models)
        .map(|(imp, name)| {
            let s = imp.sum();
            if s > 0.0 {
                Ok(imp / s)
            } else {
                Err(Error::InvalidArgument(format!("model `{name}` has an all-zero importance vector")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(weighted(ctx, &normalized, Aggregation::NormalizedWeightedRank.name()))
}

/// `r_i = (mean_m r_im + mean_a r_ia) / 2`, ascending. Per-attack ranks
/// come from per-class importances averaged over models.
pub fn models_attacks_score(ctx: &RankContext) -> Result<FeatureRanking> {
    ctx.validate()?;
    if ctx.per_class.is_empty() || ctx.attacks.is_empty() {
        return Err(Error::InvalidArgument("models + attacks score needs per-class importances".into()));
    }
    let d = ctx.feature_names.len();
    let model_ranks: Vec<Vec<usize>> = (0..ctx.models.len()).map(|m| ctx.model_ranking(m).positions()).collect();
    let pooled = ctx.per_class.iter().fold(Array2::zeros((ctx.attacks.len(), d)), |a, p| a + p)
        / ctx.models.len() as f64;
    let attack_ranks: Vec<Vec<usize>> = pooled
        .outer_iter()
        .map(|row| rank_from_importance("", &row.to_vec(), &ctx.feature_names).positions())
        .collect();
    let score = models_attacks_formula(&model_ranks, &attack_ranks, d);
    Ok(FeatureRanking::from_scores(Aggregation::ModelsAttacks.name(), &score, &ctx.feature_names, true))
}

/// The score from explicit rank tables `[model][feature]`, `[attack][feature]`.
pub fn models_attacks_formula(model_ranks: &[Vec<usize>], attack_ranks: &[Vec<usize>], d: usize) -> Vec<f64> {
    let mean = |ranks: &[Vec<usize>], j: usize| ranks.iter().map(|r| r[j] as f64).sum::<f64>() / ranks.len() as f64;
    (0..d).map(|j| 0.5 * (mean(model_ranks, j) + mean(attack_ranks, j))).collect()
}

fn check_same_features(rankings: &[FeatureRanking]) -> Result<usize> {
    let first = rankings
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least one ranking".into()))?;
    let d = first.len();
    for r in rankings {
        if r.len() != d || !r.is_permutation() || r.feature_names != first.feature_names {
            return Err(Error::InvalidArgument(format!(
                "ranking `{}` does not cover the same feature set",
                r.method
            )));
        }
    }
    Ok(d)
}

/// Counts appearances in each input's top `k`; ties by mean rank
/// position, then index. `k` above the feature count is clamped (flagged).
pub fn combined_selection(rankings: &[FeatureRanking], k: usize) -> Result<FeatureRanking> {
    let d = check_same_features(rankings)?;
    let mut flags = Vec::new();
    let k = if k > d {
        flags.push(format!("k={k} clamped to {d} features"));
        d
    } else {
        k
    };
    let mut count = vec![0.0f64; d];
    for r in rankings {
        for (j, _) in r.entries.iter().take(k) {
            count[*j] += 1.0;
        }
    }
    let mean_pos = mean_positions(rankings.iter(), d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        count[b]
            .total_cmp(&count[a])
            .then(mean_pos[a].total_cmp(&mean_pos[b]))
            .then(a.cmp(&b))
    });
    Ok(FeatureRanking {
        method: Aggregation::CombinedSelection.name().to_string(),
        entries: order.into_iter().map(|j| (j, count[j])).collect(),
        feature_names: rankings[0].feature_names.clone(),
        lower_is_better: false,
        flags,
    })
}

/// Each ranking awards `n, n-1, ..., 1` points from first to last.
pub fn voting(rankings: &[FeatureRanking]) -> Result<FeatureRanking> {
    let d = check_same_features(rankings)?;
    let mut points = vec![0.0; d];
    for r in rankings {
        for (pos, (j, _)) in r.entries.iter().enumerate() {
            points[*j] += (d - pos) as f64;
        }
    }
    Ok(FeatureRanking::from_scores("voting", &points, &rankings[0].feature_names, false))
}

/// Feature indices of the first `k` entries.
pub fn select_top_k(r: &FeatureRanking, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > r.len() {
        return Err(Error::InvalidArgument(format!("k={k} outside 1..={}", r.len())));
    }
    Ok(r.entries.iter().take(k).map(|e| e.0).collect())
}
