//! Domain types and the Bayesian bookkeeping that connects confusion
//! channels, class distributions, robot actions, and the shared cloud
//! dataset.
//!
//! The central object is the feasible data matrix P of a robot: column j is
//! the posterior distribution over true classes given that the robot's
//! perception predicted class j. An action a (intended uploads per predicted
//! class) therefore contributes P·a expected data points per true class to
//! the cloud.

use nalgebra::DMatrix;

use crate::error::Error;
use crate::Result;

/// Tolerance on probability sums.
pub const DIST_SUM_TOL: f64 = 1e-9;
/// Smallest singular value below which a feasible data matrix is treated as
/// rank deficient.
pub const RANK_TOL: f64 = 1e-8;
/// Condition-number cap for inverting a confusion channel.
pub const CONDITION_CAP: f64 = 1e8;

/// A probability distribution over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("no classes".into()));
        }
        if let Some((k, &p)) = probs
            .iter()
            .enumerate()
            .find(|(_, &p)| !p.is_finite() || p < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "entry {k} is {p}, must be finite and nonnegative"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DIST_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_class: usize) -> Result<Self> {
        if n_class == 0 {
            return Err(Error::ZeroClasses);
        }
        Ok(Self {
            probs: vec![1.0 / n_class as f64; n_class],
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// A row-stochastic perception channel: entry (k, j) is the probability that
/// an observation whose true class is k gets predicted as class j.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    rows: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidConfusion("no rows".into()));
        }
        for (k, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidConfusion(format!(
                    "row {k} has length {}, expected {n}",
                    row.len()
                )));
            }
            if let Some((j, &e)) = row
                .iter()
                .enumerate()
                .find(|(_, &e)| !e.is_finite() || !(0.0..=1.0).contains(&e))
            {
                return Err(Error::InvalidConfusion(format!(
                    "entry ({k},{j}) is {e}, must lie in [0,1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > DIST_SUM_TOL {
                return Err(Error::InvalidConfusion(format!(
                    "row {k} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { rows })
    }

    /// Perfect perception: every observation is predicted as its true class.
    pub fn identity(n_class: usize) -> Result<Self> {
        if n_class == 0 {
            return Err(Error::ZeroClasses);
        }
        let rows = (0..n_class)
            .map(|k| {
                let mut row = vec![0.0; n_class];
                row[k] = 1.0;
                row
            })
            .collect();
        Ok(Self { rows })
    }

    /// Symmetric noise: `accuracy` on the diagonal, remaining mass split
    /// equally over the other classes.
    pub fn noisy_symmetric(n_class: usize, accuracy: f64) -> Result<Self> {
        if n_class == 0 {
            return Err(Error::ZeroClasses);
        }
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::InvalidConfusion(format!(
                "accuracy {accuracy} must lie in [0,1]"
            )));
        }
        if n_class == 1 {
            if (accuracy - 1.0).abs() > DIST_SUM_TOL {
                return Err(Error::InvalidConfusion(
                    "a single-class channel must have accuracy 1".into(),
                ));
            }
            return Self::from_rows(vec![vec![1.0]]);
        }
        let off = (1.0 - accuracy) / (n_class - 1) as f64;
        let rows = (0..n_class)
            .map(|k| {
                (0..n_class)
                    .map(|j| if j == k { accuracy } else { off })
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn n_class(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn entry(&self, k: usize, j: usize) -> f64 {
        self.rows[k][j]
    }
}

/// Per-robot map from predicted-class picks to expected true-class
/// contributions. Column j is the posterior p(true = · | predicted = j).
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleDataMatrix {
    cols: Vec<Vec<f64>>,
}

impl FeasibleDataMatrix {
    /// Build directly from posterior columns. Each column must be a
    /// probability distribution and the columns must be independent, the same
    /// requirements [`build_feasible_matrix`] enforces on derived columns.
    pub fn from_columns(cols: Vec<Vec<f64>>) -> Result<Self> {
        let n = cols.len();
        if n == 0 {
            return Err(Error::ZeroClasses);
        }
        for (j, col) in cols.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "posterior column length",
                    expected: n,
                    actual: col.len(),
                });
            }
            if col.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "posterior column {j} has a negative or non-finite entry"
                )));
            }
            let mass: f64 = col.iter().sum();
            if (mass - 1.0).abs() > DIST_SUM_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "posterior column {j} sums to {mass}"
                )));
            }
        }
        let m = DMatrix::from_fn(n, n, |k, j| cols[j][k]);
        if m.singular_values().iter().any(|&s| s < RANK_TOL) {
            return Err(Error::RankDeficient);
        }
        Ok(FeasibleDataMatrix { cols })
    }

    pub fn n_class(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    /// P·a for a raw coefficient vector.
    pub fn apply(&self, a: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_class();
        if a.len() != n {
            return Err(Error::DimensionMismatch {
                context: "matrix-action product",
                expected: n,
                actual: a.len(),
            });
        }
        let mut v = vec![0.0; n];
        for (j, col) in self.cols.iter().enumerate() {
            let w = a[j];
            for (k, &c) in col.iter().enumerate() {
                v[k] += w * c;
            }
        }
        Ok(v)
    }

    /// The expected per-true-class contribution of an action.
    pub fn expected_contribution(&self, action: &Action) -> Result<FeasibleAction> {
        Ok(FeasibleAction {
            expected_true_counts: self.apply(action.counts())?,
        })
    }
}

/// Column j of P is the elementwise product of confusion column j with the
/// true-class distribution, normalized to unit mass (Bayes posterior).
pub fn build_feasible_matrix(
    confusion: &ConfusionMatrix,
    true_dist: &ClassDistribution,
) -> Result<FeasibleDataMatrix> {
    let n = confusion.n_class();
    if true_dist.len() != n {
        return Err(Error::DimensionMismatch {
            context: "feasible matrix construction",
            expected: n,
            actual: true_dist.len(),
        });
    }
    let p = true_dist.as_slice();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let raw: Vec<f64> = (0..n).map(|k| confusion.entry(k, j) * p[k]).collect();
        let mass: f64 = raw.iter().sum();
        if mass <= 0.0 {
            return Err(Error::ZeroPredictedMass(j));
        }
        cols.push(raw.into_iter().map(|x| x / mass).collect());
    }
    let m = DMatrix::from_fn(n, n, |k, j| cols[j][k]);
    let sigma = m.singular_values();
    if sigma.iter().any(|&s| s < RANK_TOL) {
        return Err(Error::RankDeficient);
    }
    Ok(FeasibleDataMatrix { cols })
}

/// How a robot turns locally observed predicted-label frequencies into an
/// estimate of its true-class distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMode {
    /// The simulation hands the robot its true distribution (default).
    GroundTruth,
    /// Solve Cᵀ·p(true) = p(predicted) and project the solution back onto
    /// the probability simplex.
    LinearInversion,
}

impl EstimationMode {
    pub fn name(self) -> &'static str {
        match self {
            EstimationMode::GroundTruth => "ground-truth",
            EstimationMode::LinearInversion => "linear-inversion",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "ground-truth" => Some(EstimationMode::GroundTruth),
            "linear-inversion" => Some(EstimationMode::LinearInversion),
            _ => None,
        }
    }
}

/// Estimate the true-class distribution behind an observed predicted-label
/// distribution. `true_dist` is the scenario's ground truth; GroundTruth mode
/// returns it untouched.
pub fn estimate_true_distribution(
    true_dist: &ClassDistribution,
    predicted_dist: &ClassDistribution,
    confusion: &ConfusionMatrix,
    mode: EstimationMode,
) -> Result<ClassDistribution> {
    match mode {
        EstimationMode::GroundTruth => Ok(true_dist.clone()),
        EstimationMode::LinearInversion => {
            let n = confusion.n_class();
            if predicted_dist.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "channel inversion",
                    expected: n,
                    actual: predicted_dist.len(),
                });
            }
            let ct = DMatrix::from_fn(n, n, |k, j| confusion.entry(j, k));
            let sigma = ct.clone().singular_values();
            let (smax, smin) = (sigma.max(), sigma.min());
            if smin <= 0.0 || smax / smin > CONDITION_CAP {
                return Err(Error::SingularChannel);
            }
            let q = nalgebra::DVector::from_column_slice(predicted_dist.as_slice());
            let sol = ct
                .lu()
                .solve(&q)
                .ok_or(Error::SingularChannel)?;
            // The algebraic solution can leave the simplex when the observed
            // frequencies are noisy; snap it back with minimal distortion.
            let projected =
                crate::solver::project_onto_scaled_simplex(sol.as_slice(), 1.0);
            ClassDistribution::new(projected)
        }
    }
}

/// The shared cloud dataset, tracked as expected data-point counts per true
/// class alongside the target composition.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudState {
    counts: Vec<f64>,
    target: Vec<f64>,
}

impl CloudState {
    pub fn new(counts: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        if counts.len() != target.len() {
            return Err(Error::DimensionMismatch {
                context: "cloud state",
                expected: target.len(),
                actual: counts.len(),
            });
        }
        if counts.is_empty() {
            return Err(Error::ZeroClasses);
        }
        for (k, &c) in counts.iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidState(format!(
                    "count for class {k} is {c}, must be finite and nonnegative"
                )));
            }
        }
        for (k, &t) in target.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidState(format!(
                    "target for class {k} is {t}, must be finite and nonnegative"
                )));
            }
        }
        Ok(Self { counts, target })
    }

    pub fn n_class(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// target − counts, the remaining per-class deficit (can be negative for
    /// overfull classes).
    pub fn deficit(&self) -> Vec<f64> {
        self.target
            .iter()
            .zip(&self.counts)
            .map(|(t, c)| t - c)
            .collect()
    }
}

/// counts + elementwise sum of contributions; target unchanged.
pub fn update_cloud_counts(state: &CloudState, contributions: &[Vec<f64>]) -> Result<CloudState> {
    let n = state.n_class();
    let mut counts = state.counts.clone();
    for contribution in contributions {
        if contribution.len() != n {
            return Err(Error::DimensionMismatch {
                context: "cloud update",
                expected: n,
                actual: contribution.len(),
            });
        }
        for (k, &x) in contribution.iter().enumerate() {
            if x < 0.0 {
                return Err(Error::NegativeContribution { class: k, value: x });
            }
            counts[k] += x;
        }
    }
    Ok(CloudState {
        counts,
        target: state.target.clone(),
    })
}

/// ‖target − counts‖₂, the distance the policies minimize.
pub fn loss_l2(state: &CloudState) -> f64 {
    state
        .deficit()
        .iter()
        .map(|d| d * d)
        .sum::<f64>()
        .sqrt()
}

/// Intended uploads per predicted class, bounded by the robot's cache.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    counts: Vec<f64>,
    cache_budget: f64,
}

impl Action {
    pub fn new(counts: Vec<f64>, cache_budget: f64) -> Result<Self> {
        if cache_budget < 0.0 || !cache_budget.is_finite() {
            return Err(Error::NegativeBudget(cache_budget));
        }
        if let Some((k, &c)) = counts
            .iter()
            .enumerate()
            .find(|(_, &c)| !c.is_finite() || c < 0.0)
        {
            return Err(Error::InvalidAction(format!(
                "entry {k} is {c}, must be finite and nonnegative"
            )));
        }
        let total: f64 = counts.iter().sum();
        if total > cache_budget + 1e-9 {
            return Err(Error::InvalidAction(format!(
                "entries sum to {total}, exceeding the cache budget {cache_budget}"
            )));
        }
        Ok(Self {
            counts,
            cache_budget,
        })
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn cache_budget(&self) -> f64 {
        self.cache_budget
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Expected per-true-class contribution v = P·a of some robot's action.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleAction {
    expected_true_counts: Vec<f64>,
}

impl FeasibleAction {
    pub fn expected_true_counts(&self) -> &[f64] {
        &self.expected_true_counts
    }
}

/// Everything fixed about one robot: what it truly observes, how its
/// perception garbles labels, and its per-round observation volume and
/// upload budget.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotProfile {
    pub id: usize,
    pub true_dist: ClassDistribution,
    pub confusion: ConfusionMatrix,
    pub obs_per_round: u64,
    pub cache_budget: f64,
}

impl RobotProfile {
    pub fn new(
        id: usize,
        true_dist: ClassDistribution,
        confusion: ConfusionMatrix,
        obs_per_round: u64,
        cache_budget: f64,
    ) -> Result<Self> {
        if confusion.n_class() != true_dist.len() {
            return Err(Error::InvalidProfile(format!(
                "robot {id}: confusion is {}x{} but true_dist has {} classes",
                confusion.n_class(),
                confusion.n_class(),
                true_dist.len()
            )));
        }
        if !cache_budget.is_finite() || cache_budget <= 0.0 {
            return Err(Error::InvalidProfile(format!(
                "robot {id}: cache budget {cache_budget} must be positive"
            )));
        }
        // A robot must observe far more than it may upload, otherwise its
        // action is the whole sample and the channel statistics degenerate.
        if (obs_per_round as f64) < 10.0 * cache_budget {
            return Err(Error::InvalidProfile(format!(
                "robot {id}: observes {obs_per_round} per round, needs at least 10x the \
                 cache budget {cache_budget}"
            )));
        }
        Ok(Self {
            id,
            true_dist,
            confusion,
            obs_per_round,
            cache_budget,
        })
    }

    pub fn n_class(&self) -> usize {
        self.true_dist.len()
    }
}
