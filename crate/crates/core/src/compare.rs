//! Rank mitigation strategies on the fairness-performance plane.

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::report;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    None,
    Pre,
    In,
    Post,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluatedModel {
    pub id: String,
    pub family: Family,
    pub metrics: MetricsReport,
}

impl EvaluatedModel {
    /// Fairness values are consumed as magnitudes; ratio-style metrics
    /// (keys ending in `_ratio`) are transformed to |1 - ratio| first.
    pub fn fairness(&self, key: &str) -> Result<f64> {
        let raw = self.metrics.get(key).ok_or_else(|| Error::MissingMetric {
            key: key.to_string(),
            model: self.id.clone(),
        })?;
        Ok(if key.ends_with("_ratio") {
            (1.0 - raw).abs()
        } else {
            raw.abs()
        })
    }

    pub fn performance(&self, key: &str) -> Result<f64> {
        self.metrics.get(key).ok_or_else(|| Error::MissingMetric {
            key: key.to_string(),
            model: self.id.clone(),
        })
    }
}

/// F-beta-shaped trade-off between a fairness magnitude and a performance
/// value: `(1 + b^2) (1-|phi|) pi / (b^2 (1-|phi|) + pi)`.
pub fn tradeoff_score(pi: f64, phi: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::BadBeta(beta));
    }
    let fairness = 1.0 - phi.abs();
    let numerator = (1.0 + beta * beta) * fairness * pi;
    let denominator = beta * beta * fairness + pi;
    if denominator <= 0.0 {
        // continuity limit: the numerator vanishes whenever the denominator does
        return Ok(0.0);
    }
    Ok(numerator / denominator)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub id: String,
    pub family: Family,
    pub fairness: f64,
    pub performance: f64,
    pub tradeoff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub fairness_key: String,
    pub performance_key: String,
    pub phi_bound: Option<f64>,
    pub beta: f64,
    pub rows: Vec<ComparisonRow>,
    /// Best model under the constrained-performance rule; None when the
    /// feasible set is empty (a first-class outcome, not an error).
    pub winner: Option<String>,
    pub frontier: Vec<String>,
}

impl ComparisonReport {
    pub fn to_text_table(&self) -> String {
        let best = self
            .rows
            .iter()
            .map(|r| r.performance)
            .fold(f64::NEG_INFINITY, f64::max);
        let worst = self
            .rows
            .iter()
            .map(|r| r.performance)
            .fold(f64::INFINITY, f64::min);
        let mut rows = vec![vec![
            "model".to_string(),
            "family".to_string(),
            format!("|{}|", self.fairness_key),
            self.performance_key.clone(),
            "tradeoff".to_string(),
            "notes".to_string(),
        ]];
        for r in &self.rows {
            let mut notes = Vec::new();
            if r.performance == best {
                notes.push("*best*");
            }
            if r.performance == worst {
                notes.push("_worst_");
            }
            if self.winner.as_deref() == Some(&r.id) {
                notes.push("winner");
            }
            if self.frontier.contains(&r.id) {
                notes.push("frontier");
            }
            rows.push(vec![
                r.id.clone(),
                format!("{:?}", r.family).to_lowercase(),
                report::fmt(r.fairness),
                report::fmt(r.performance),
                report::fmt(r.tradeoff),
                notes.join(" "),
            ]);
        }
        let mut out = report::text_table(&rows);
        if self.winner.is_none() && self.phi_bound.is_some() {
            out.push_str(&format!(
                "no model satisfies |{}| <= {}\n",
                self.fairness_key,
                self.phi_bound.unwrap()
            ));
        }
        out
    }
}

/// Highest performance among models meeting the fairness bound; ties break
/// by lexicographic id. `None` when nothing qualifies.
pub fn constrained_best(
    models: &[EvaluatedModel],
    fairness_key: &str,
    performance_key: &str,
    phi_bound: f64,
) -> Result<Option<String>> {
    let mut best: Option<(f64, &str)> = None;
    for m in models {
        let phi = m.fairness(fairness_key)?;
        let pi = m.performance(performance_key)?;
        if phi <= phi_bound {
            let better = match best {
                None => true,
                Some((bp, bid)) => pi > bp || (pi == bp && m.id.as_str() < bid),
            };
            if better {
                best = Some((pi, &m.id));
            }
        }
    }
    Ok(best.map(|(_, id)| id.to_string()))
}

/// Models not dominated in (smaller |phi|, larger pi), ordered by |phi|.
/// Duplicate (phi, pi) points keep only the lexicographically first id.
pub fn pareto_frontier(
    models: &[EvaluatedModel],
    fairness_key: &str,
    performance_key: &str,
) -> Result<Vec<String>> {
    let mut points: Vec<(f64, f64, &str)> = models
        .iter()
        .map(|m| {
            Ok((
                m.fairness(fairness_key)?,
                m.performance(performance_key)?,
                m.id.as_str(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(b.1.partial_cmp(&a.1).unwrap())
            .then(a.2.cmp(b.2))
    });
    let mut frontier: Vec<(f64, f64, &str)> = Vec::new();
    for (phi, pi, id) in points {
        if let Some((lphi, lpi, _)) = frontier.last() {
            if phi == *lphi && pi == *lpi {
                continue; // duplicate point, first id wins
            }
            if pi <= *lpi {
                continue; // dominated by an already-kept point
            }
        }
        frontier.push((phi, pi, id));
    }
    Ok(frontier
        .into_iter()
        .map(|(_, _, id)| id.to_string())
        .collect())
}

/// Assemble the full comparison document.
pub fn compare(
    models: &[EvaluatedModel],
    fairness_key: &str,
    performance_key: &str,
    phi_bound: Option<f64>,
    beta: f64,
) -> Result<ComparisonReport> {
    let mut rows = Vec::with_capacity(models.len());
    for m in models {
        let phi = m.fairness(fairness_key)?;
        let pi = m.performance(performance_key)?;
        rows.push(ComparisonRow {
            id: m.id.clone(),
            family: m.family,
            fairness: phi,
            performance: pi,
            tradeoff: tradeoff_score(pi, phi, beta)?,
        });
    }
    let winner = match phi_bound {
        Some(bound) => constrained_best(models, fairness_key, performance_key, bound)?,
        None => None,
    };
    Ok(ComparisonReport {
        fairness_key: fairness_key.to_string(),
        performance_key: performance_key.to_string(),
        phi_bound,
        beta,
        rows,
        winner,
        frontier: pareto_frontier(models, fairness_key, performance_key)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricsReport;

    fn model(id: &str, phi: f64, pi: f64) -> EvaluatedModel {
        let mut metrics = MetricsReport::default();
        metrics.values.insert("dp_diff".into(), phi);
        metrics.values.insert("f1".into(), pi);
        EvaluatedModel {
            id: id.into(),
            family: Family::None,
            metrics,
        }
    }

    #[test]
    fn tradeoff_spot_values() {
        assert!((tradeoff_score(0.8, 0.0, 1.0).unwrap() - 0.8889).abs() < 1e-4);
        assert_eq!(tradeoff_score(0.5, 1.0, 1.0).unwrap(), 0.0);
        assert!((tradeoff_score(0.875, 0.2, 1.0).unwrap() - 0.8358).abs() < 1e-4);
        assert_eq!(
            tradeoff_score(0.5, 0.5, -1.0).unwrap_err().name(),
            "BadBeta"
        );
    }

    #[test]
    fn tradeoff_monotone_and_beta_limit() {
        let base = tradeoff_score(0.7, 0.3, 1.0).unwrap();
        assert!(tradeoff_score(0.8, 0.3, 1.0).unwrap() > base);
        assert!(tradeoff_score(0.7, 0.2, 1.0).unwrap() > base);
        // beta -> 0 recovers the performance metric
        assert!((tradeoff_score(0.7, 0.3, 1e-6).unwrap() - 0.7).abs() < 1e-4);
    }

    #[test]
    fn constrained_best_and_empty_set() {
        let models = vec![model("m1", 0.03, 0.85), model("m2", 0.07, 0.90)];
        let best = constrained_best(&models, "dp_diff", "f1", 0.05).unwrap();
        assert_eq!(best.as_deref(), Some("m1"));
        assert!(constrained_best(&models, "dp_diff", "f1", 0.01)
            .unwrap()
            .is_none());
        let err = constrained_best(&models, "nope", "f1", 0.1).unwrap_err();
        assert_eq!(err.name(), "MissingMetric");
    }

    #[test]
    fn constrained_best_invariant_under_monotone_rescaling() {
        let models = vec![
            model("a", 0.02, 0.6),
            model("b", 0.04, 0.8),
            model("c", 0.5, 0.99),
        ];
        let best = constrained_best(&models, "dp_diff", "f1", 0.05).unwrap();
        let rescaled: Vec<EvaluatedModel> = models
            .iter()
            .map(|m| {
                let mut c = m.clone();
                let pi = c.metrics.get("f1").unwrap();
                c.metrics.values.insert("f1".into(), pi.powi(3) * 0.5);
                c
            })
            .collect();
        assert_eq!(
            best,
            constrained_best(&rescaled, "dp_diff", "f1", 0.05).unwrap()
        );
    }

    #[test]
    fn frontier_cases() {
        let single = vec![model("only", 0.1, 0.5)];
        assert_eq!(
            pareto_frontier(&single, "dp_diff", "f1").unwrap(),
            vec!["only"]
        );

        let models = vec![
            model("a", 0.01, 0.7),
            model("b", 0.02, 0.9),
            model("c", 0.03, 0.8),
        ];
        assert_eq!(
            pareto_frontier(&models, "dp_diff", "f1").unwrap(),
            vec!["a", "b"]
        );

        let dupes = vec![model("z", 0.02, 0.9), model("a", 0.02, 0.9)];
        assert_eq!(pareto_frontier(&dupes, "dp_diff", "f1").unwrap(), vec!["a"]);
    }

    #[test]
    fn ratio_keys_transformed() {
        let mut m = model("r", 0.0, 0.9);
        m.metrics.values.insert("dp_ratio".into(), 0.85);
        assert!((m.fairness("dp_ratio").unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn report_renders() {
        let models = vec![model("a", 0.01, 0.7), model("b", 0.02, 0.9)];
        let rep = compare(&models, "dp_diff", "f1", Some(0.05), 1.0).unwrap();
        assert_eq!(rep.winner.as_deref(), Some("b"));
        let text = rep.to_text_table();
        assert!(text.contains("*best*"));
        assert!(text.contains("_worst_"));
    }
}
