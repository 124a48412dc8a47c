//! Weight calibration by exhaustive grid search on the weight simplex.
//!
//! Candidate weight vectors are the lattice points of a discretized
//! simplex; each is scored by how well the resulting R-distance ranks a
//! set of labeled pairs (AUC of the negated distance). When labels are
//! derived from recorded collaborations, the collaboration weight is
//! pinned to zero so the target cannot predict itself.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::agent::AgentSet;
use crate::metric::{component_distances, ComponentVector, Weights, FACTOR_COUNT};

/// Index of the past-collaboration factor inside weight vectors.
const COLLABORATION_FACTOR: usize = 3;

/// An unordered pair of agent ids, stored with the smaller id first.
pub type LabelPair = (String, String);

/// Where the positive labels come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelSource {
    /// Explicit pairs, e.g. held-out observed collaborations.
    HeldOutPairs(BTreeSet<LabelPair>),
    /// Pairs linked by the records' own collaborator lists. Scoring then
    /// excludes the collaboration factor entirely.
    D4Labels,
}

/// Ranking quality measure; only AUC is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scoring {
    #[default]
    Auc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    /// Simplex discretization; must divide 1 within 1e-9.
    pub grid_step: f64,
    pub label_source: LabelSource,
    pub scoring: Scoring,
}

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("grid step {0} does not divide 1")]
    BadGridStep(f64),
    #[error("at least two agents are required to calibrate weights")]
    EmptyAgentSet,
    #[error("label pair names unknown agent id {0:?}")]
    UnknownLabelId(String),
    #[error("label pair ({0:?}, {0:?}) does not name two distinct agents")]
    SelfPair(String),
    #[error("malformed label line {line}: {text:?}")]
    MalformedLabel { line: usize, text: String },
}

fn grid_divisions(grid_step: f64) -> Result<usize, CalibrateError> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(CalibrateError::BadGridStep(grid_step));
    }
    let n = (1.0 / grid_step).round();
    if n < 1.0 || (n * grid_step - 1.0).abs() > 1e-9 {
        return Err(CalibrateError::BadGridStep(grid_step));
    }
    Ok(n as usize)
}

/// All weight vectors on the grid: nonnegative multiples of `grid_step`
/// summing to 1, in lexicographic order.
pub fn enumerate_simplex(grid_step: f64) -> Result<Vec<Weights>, CalibrateError> {
    let n = grid_divisions(grid_step)?;
    let scale = n as f64;
    let mut out = Vec::new();
    for c1 in 0..=n {
        for c2 in 0..=(n - c1) {
            for c3 in 0..=(n - c1 - c2) {
                for c4 in 0..=(n - c1 - c2 - c3) {
                    let c5 = n - c1 - c2 - c3 - c4;
                    let k = [c1, c2, c3, c4, c5].map(|c| c as f64 / scale);
                    out.push(Weights::new(k).expect("grid point is on the simplex"));
                }
            }
        }
    }
    Ok(out)
}

/// Grid over the sub-simplex with the collaboration weight pinned to zero,
/// in lexicographic order of the full 5-vector.
fn enumerate_simplex_without_collaboration(grid_step: f64) -> Result<Vec<Weights>, CalibrateError> {
    let n = grid_divisions(grid_step)?;
    let scale = n as f64;
    let mut out = Vec::new();
    for c1 in 0..=n {
        for c2 in 0..=(n - c1) {
            for c3 in 0..=(n - c1 - c2) {
                let c5 = n - c1 - c2 - c3;
                let k = [
                    c1 as f64 / scale,
                    c2 as f64 / scale,
                    c3 as f64 / scale,
                    0.0,
                    c5 as f64 / scale,
                ];
                out.push(Weights::new(k).expect("grid point is on the simplex"));
            }
        }
    }
    Ok(out)
}

/// Normalize an id pair to (smaller, larger).
pub fn normalize_pair(a: &str, b: &str) -> Result<LabelPair, CalibrateError> {
    if a == b {
        return Err(CalibrateError::SelfPair(a.to_owned()));
    }
    if a < b {
        Ok((a.to_owned(), b.to_owned()))
    } else {
        Ok((b.to_owned(), a.to_owned()))
    }
}

/// Parse a labels file: one `idA,idB` pair per line, blank lines ignored.
pub fn parse_label_pairs(text: &str) -> Result<BTreeSet<LabelPair>, CalibrateError> {
    let mut pairs = BTreeSet::new();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                pairs.insert(normalize_pair(a, b)?);
            }
            _ => {
                return Err(CalibrateError::MalformedLabel {
                    line: index + 1,
                    text: raw.to_owned(),
                })
            }
        }
    }
    Ok(pairs)
}

/// AUC of `-distance` as a predictor of membership in `labels`, over every
/// unordered pair of agents. Ties earn half credit; degenerate label sets
/// (no positives or no negatives) score 0.5.
pub fn score_weights(
    agents: &AgentSet,
    weights: &Weights,
    labels: &BTreeSet<LabelPair>,
) -> Result<f64, CalibrateError> {
    let pairs = pair_components(agents);
    let labeled = label_flags(agents, &pairs, labels)?;
    let distances: Vec<f64> = pairs
        .iter()
        .map(|p| crate::metric::r_distance(p.components, weights))
        .collect();
    Ok(auc(&distances, &labeled))
}

struct PairData {
    i: usize,
    j: usize,
    components: ComponentVector,
}

fn pair_components(agents: &AgentSet) -> Vec<PairData> {
    let n = agents.len();
    let mut pairs = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push(PairData {
                i,
                j,
                components: component_distances(agents.get(i), agents.get(j)),
            });
        }
    }
    pairs
}

fn label_flags(
    agents: &AgentSet,
    pairs: &[PairData],
    labels: &BTreeSet<LabelPair>,
) -> Result<Vec<bool>, CalibrateError> {
    for (a, b) in labels {
        for id in [a, b] {
            if !agents.contains(id) {
                return Err(CalibrateError::UnknownLabelId(id.clone()));
            }
        }
        if a == b {
            return Err(CalibrateError::SelfPair(a.clone()));
        }
    }
    Ok(pairs
        .iter()
        .map(|p| {
            let pair = normalize_pair(&agents.get(p.i).id, &agents.get(p.j).id)
                .expect("distinct agents by construction");
            labels.contains(&pair)
        })
        .collect())
}

fn auc(distances: &[f64], labeled: &[bool]) -> f64 {
    let pos_total = labeled.iter().filter(|&&l| l).count();
    let neg_total = labeled.len() - pos_total;
    if pos_total == 0 || neg_total == 0 {
        return 0.5;
    }
    let mut items: Vec<(f64, bool)> =
        distances.iter().copied().zip(labeled.iter().copied()).collect();
    items.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut wins = 0.0;
    let mut negatives_seen = 0usize;
    let mut index = 0;
    while index < items.len() {
        let mut end = index;
        let mut pos_here = 0usize;
        let mut neg_here = 0usize;
        while end < items.len() && items[end].0 == items[index].0 {
            if items[end].1 {
                pos_here += 1;
            } else {
                neg_here += 1;
            }
            end += 1;
        }
        // A positive beats all negatives at strictly larger distance and
        // half-beats negatives tied with it.
        let neg_after = neg_total - negatives_seen - neg_here;
        wins += pos_here as f64 * (neg_after as f64 + 0.5 * neg_here as f64);
        negatives_seen += neg_here;
        index = end;
    }
    wins / (pos_total as f64 * neg_total as f64)
}

/// The winning grid vector together with its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub weights: Weights,
    pub score: f64,
}

/// Exhaustive grid search for the weights that best rank the labeled
/// pairs. Ties go to the lexicographically smallest vector, so the result
/// is a deterministic function of the inputs.
pub fn fit_weights(
    agents: &AgentSet,
    config: &CalibrationConfig,
) -> Result<Calibration, CalibrateError> {
    if agents.len() < 2 {
        return Err(CalibrateError::EmptyAgentSet);
    }
    let pairs = pair_components(agents);
    let (grid, labeled) = match &config.label_source {
        LabelSource::HeldOutPairs(labels) => {
            let labeled = label_flags(agents, &pairs, labels)?;
            (enumerate_simplex(config.grid_step)?, labeled)
        }
        LabelSource::D4Labels => {
            // Collaboration links are the target, so the collaboration
            // factor is excluded from the candidate weights.
            let labeled = pairs
                .iter()
                .map(|p| p.components.as_array()[COLLABORATION_FACTOR] == 1)
                .collect();
            (enumerate_simplex_without_collaboration(config.grid_step)?, labeled)
        }
    };
    let Scoring::Auc = config.scoring;
    let mut best: Option<Calibration> = None;
    for weights in grid {
        let distances: Vec<f64> = pairs
            .iter()
            .map(|p| crate::metric::r_distance(p.components, &weights))
            .collect();
        let score = auc(&distances, &labeled);
        // Strictly-greater keeps the first (lexicographically smallest)
        // of any tied maxima.
        if best.map(|b| score > b.score).unwrap_or(true) {
            best = Some(Calibration { weights, score });
        }
    }
    Ok(best.expect("grid is never empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentRecord;

    fn binomial(n: usize, k: usize) -> usize {
        let mut result = 1usize;
        for i in 0..k {
            result = result * (n - i) / (i + 1);
        }
        result
    }

    fn agent(id: &str, institution: &str, fields: &[&str]) -> AgentRecord {
        AgentRecord {
            id: id.into(),
            name: id.into(),
            institution: institution.into(),
            phd_institution: format!("phd-{id}"),
            fields: fields.iter().map(|s| s.to_string()).collect(),
            collaborators: BTreeSet::new(),
            citations: BTreeSet::new(),
        }
    }

    #[test]
    fn unit_step_yields_one_hot_vectors() {
        let grid = enumerate_simplex(1.0).unwrap();
        assert_eq!(grid.len(), 5);
        for (slot, w) in grid.iter().rev().enumerate() {
            let mut expected = [0.0; FACTOR_COUNT];
            expected[slot] = 1.0;
            assert_eq!(w.as_array(), expected);
        }
    }

    #[test]
    fn grid_sizes_match_composition_counts() {
        // Compositions of n into 5 nonnegative parts: C(n+4, 4).
        assert_eq!(enumerate_simplex(0.5).unwrap().len(), binomial(6, 4));
        assert_eq!(enumerate_simplex(0.05).unwrap().len(), binomial(24, 4));
    }

    #[test]
    fn grid_is_lexicographically_sorted_and_on_simplex() {
        let grid = enumerate_simplex(0.25).unwrap();
        for w in &grid {
            let sum: f64 = w.as_array().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        for pair in grid.windows(2) {
            assert!(pair[0].as_array() < pair[1].as_array());
        }
    }

    #[test]
    fn bad_grid_steps_are_rejected() {
        assert!(enumerate_simplex(0.0).is_err());
        assert!(enumerate_simplex(0.3).is_err());
        assert!(enumerate_simplex(1.5).is_err());
    }

    fn institution_clustered_set() -> AgentSet {
        // a, b share an institution; c, d, e are loners with disjoint fields.
        AgentSet::new(vec![
            agent("a", "X", &["01"]),
            agent("b", "X", &["02"]),
            agent("c", "P", &["03"]),
            agent("d", "Q", &["04"]),
            agent("e", "R", &["05"]),
        ])
        .unwrap()
    }

    #[test]
    fn empty_labels_score_half() {
        let agents = institution_clustered_set();
        let score = score_weights(&agents, &Weights::equal(), &BTreeSet::new()).unwrap();
        assert_eq!(score, 0.5);
    }

    #[test]
    fn identical_agents_all_tie() {
        let agents = AgentSet::new(vec![
            agent("a", "X", &["01"]),
            agent("b", "X", &["01"]),
            agent("c", "X", &["01"]),
        ])
        .unwrap();
        // Same institution and fields but distinct phd institutions; use
        // weights concentrated on tied components so every distance ties.
        let w = Weights::new([0.5, 0.5, 0.0, 0.0, 0.0]).unwrap();
        let labels = BTreeSet::from([normalize_pair("a", "b").unwrap()]);
        assert_eq!(score_weights(&agents, &w, &labels).unwrap(), 0.5);
    }

    #[test]
    fn one_hot_institution_weight_separates_institution_labels() {
        let agents = institution_clustered_set();
        let labels = BTreeSet::from([normalize_pair("a", "b").unwrap()]);
        let w = Weights::new([1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        // Independent check: the labeled pair is strictly closest.
        let m = crate::metric::distance_matrix(&agents, &w);
        for i in 0..agents.len() {
            for j in (i + 1)..agents.len() {
                if (i, j) != (0, 1) {
                    assert!(m.get(0, 1) < m.get(i, j));
                }
            }
        }
        assert_eq!(score_weights(&agents, &w, &labels).unwrap(), 1.0);
    }

    #[test]
    fn fit_prefers_institution_weight_for_institution_labels() {
        let agents = institution_clustered_set();
        let labels = BTreeSet::from([normalize_pair("a", "b").unwrap()]);
        let config = CalibrationConfig {
            grid_step: 0.5,
            label_source: LabelSource::HeldOutPairs(labels.clone()),
            scoring: Scoring::Auc,
        };
        let fit = fit_weights(&agents, &config).unwrap();
        assert_eq!(fit.score, 1.0);
        assert_eq!(fit.weights.as_array(), [0.5, 0.0, 0.0, 0.0, 0.5]);

        // Exhaustive oracle: no grid vector scores higher, and the chosen
        // one is the lexicographically smallest of the maxima.
        let mut best_score = f64::MIN;
        let mut best_vec = None;
        for w in enumerate_simplex(0.5).unwrap() {
            let s = score_weights(&agents, &w, &labels).unwrap();
            if s > best_score {
                best_score = s;
                best_vec = Some(w);
            }
        }
        assert_eq!(best_score, fit.score);
        assert_eq!(best_vec.unwrap().as_array(), fit.weights.as_array());
    }

    #[test]
    fn no_labels_returns_lexicographically_smallest_vector() {
        let agents = institution_clustered_set();
        let config = CalibrationConfig {
            grid_step: 0.5,
            label_source: LabelSource::HeldOutPairs(BTreeSet::new()),
            scoring: Scoring::Auc,
        };
        let fit = fit_weights(&agents, &config).unwrap();
        assert_eq!(fit.score, 0.5);
        assert_eq!(fit.weights.as_array(), [0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn single_agent_cannot_calibrate() {
        let agents = AgentSet::new(vec![agent("a", "X", &["01"])]).unwrap();
        let config = CalibrationConfig {
            grid_step: 0.5,
            label_source: LabelSource::D4Labels,
            scoring: Scoring::Auc,
        };
        assert!(matches!(fit_weights(&agents, &config), Err(CalibrateError::EmptyAgentSet)));
    }

    #[test]
    fn d4_calibration_pins_collaboration_weight_to_zero() {
        // Collaborators are exactly the same-phd pairs, so the phd factor
        // should carry the signal once collaboration is excluded.
        let mut a = agent("a", "X", &["01"]);
        let mut b = agent("b", "Y", &["02"]);
        a.phd_institution = "S".into();
        b.phd_institution = "S".into();
        a.collaborators.insert("b".into());
        let c = agent("c", "Z", &["03"]);
        let d = agent("d", "W", &["04"]);
        let agents = AgentSet::new(vec![a, b, c, d]).unwrap();
        let config = CalibrationConfig {
            grid_step: 0.5,
            label_source: LabelSource::D4Labels,
            scoring: Scoring::Auc,
        };
        let fit = fit_weights(&agents, &config).unwrap();
        assert_eq!(fit.weights.as_array()[COLLABORATION_FACTOR], 0.0);
        assert_eq!(fit.score, 1.0);
        assert_eq!(fit.weights.as_array(), [0.0, 0.0, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn unknown_label_id_is_rejected() {
        let agents = institution_clustered_set();
        let labels = BTreeSet::from([("a".to_owned(), "nobody".to_owned())]);
        assert!(matches!(
            score_weights(&agents, &Weights::equal(), &labels),
            Err(CalibrateError::UnknownLabelId(_))
        ));
    }

    #[test]
    fn label_file_parsing() {
        let pairs = parse_label_pairs("a,b\n\n c , d \n").unwrap();
        assert_eq!(pairs.len(), 2);
        assert!(pairs.contains(&("a".to_owned(), "b".to_owned())));
        assert!(pairs.contains(&("c".to_owned(), "d".to_owned())));
        assert!(parse_label_pairs("a").is_err());
        assert!(parse_label_pairs("a,a").is_err());
        assert!(parse_label_pairs("a,b,c").is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let agents = institution_clustered_set();
        let labels = BTreeSet::from([normalize_pair("a", "b").unwrap()]);
        let config = CalibrationConfig {
            grid_step: 0.25,
            label_source: LabelSource::HeldOutPairs(labels),
            scoring: Scoring::Auc,
        };
        let first = fit_weights(&agents, &config).unwrap();
        let second = fit_weights(&agents, &config).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn adding_the_closest_pair_never_lowers_the_optimum_score() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};

        let institutions = ["X", "Y", "Z"];
        let schools = ["S", "T"];
        let codes = ["01", "02", "03"];
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..30 {
            let n = rng.random_range(3..7);
            let mut records = Vec::new();
            for idx in 0..n {
                let mut r = agent(
                    &format!("a{idx}"),
                    institutions[rng.random_range(0..institutions.len())],
                    &[codes[rng.random_range(0..codes.len())]],
                );
                r.phd_institution = schools[rng.random_range(0..schools.len())].into();
                records.push(r);
            }
            let agents = AgentSet::new(records).unwrap();
            let mut labels = BTreeSet::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random_bool(0.3) {
                        labels.insert(
                            normalize_pair(&agents.get(i).id, &agents.get(j).id).unwrap(),
                        );
                    }
                }
            }
            let config = CalibrationConfig {
                grid_step: 0.5,
                label_source: LabelSource::HeldOutPairs(labels.clone()),
                scoring: Scoring::Auc,
            };
            let fit = fit_weights(&agents, &config).unwrap();

            // Closest unlabeled pair under the fitted weights.
            let m = crate::metric::distance_matrix(&agents, &fit.weights);
            let mut closest: Option<(f64, LabelPair)> = None;
            for i in 0..n {
                for j in (i + 1)..n {
                    let pair = normalize_pair(&agents.get(i).id, &agents.get(j).id).unwrap();
                    if labels.contains(&pair) {
                        continue;
                    }
                    let d = m.get(i, j);
                    if closest.as_ref().map(|(best, _)| d < *best).unwrap_or(true) {
                        closest = Some((d, pair));
                    }
                }
            }
            let Some((_, pair)) = closest else { continue };
            let mut grown = labels.clone();
            grown.insert(pair);
            let rescored = score_weights(&agents, &fit.weights, &grown).unwrap();
            assert!(
                rescored + 1e-12 >= fit.score,
                "score dropped from {} to {rescored}",
                fit.score
            );
        }
    }
}
