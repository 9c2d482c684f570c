use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::apa::{apa_with, ApaMode};
use super::LabeledSequence;
use crate::align::{cost_matrix, dtw};
use crate::context::contextualize_optional;
use crate::draq::{draq_with_optimal, neg_kendall_tau_from_costs, Indicator, RandomPathConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEvalConfig {
    pub context: bool,
    pub random_paths: RandomPathConfig,
    pub apa_mode: ApaMode,
}

impl Default for PairEvalConfig {
    fn default() -> Self {
        Self {
            context: true,
            random_paths: RandomPathConfig::default(),
            apa_mode: ApaMode::Tuples,
        }
    }
}

/// Indicators and alignment quality for one sequence pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub a: String,
    pub b: String,
    /// Both sequences carry the same action label.
    pub alignable: bool,
    pub apa: f64,
    pub draq: f64,
    pub dtw_cost: f64,
    pub neg_tau: f64,
}

impl PairRecord {
    pub fn indicator(&self, which: Indicator) -> f64 {
        match which {
            Indicator::Draq => self.draq,
            Indicator::DtwCost => self.dtw_cost,
            Indicator::NegKendallTau => self.neg_tau,
        }
    }
}

pub fn evaluate_pair(
    a: &LabeledSequence,
    b: &LabeledSequence,
    cfg: &PairEvalConfig,
) -> Result<PairRecord> {
    let pa = a.labels.phases_or_err()?;
    let pb = b.labels.phases_or_err()?;
    let c = cost_matrix(
        &contextualize_optional(&a.seq, cfg.context),
        &contextualize_optional(&b.seq, cfg.context),
    )?;
    let (path, cost) = dtw(&c);
    let draq = draq_with_optimal(&c, cost, &cfg.random_paths.for_pair(a.id(), b.id()));
    let neg_tau = if c.rows() >= 2 {
        neg_kendall_tau_from_costs(&c).value
    } else {
        0.0
    };
    Ok(PairRecord {
        a: a.id().to_owned(),
        b: b.id().to_owned(),
        alignable: matches!((a.action(), b.action()), (Some(x), Some(y)) if x == y),
        apa: apa_with(cfg.apa_mode, pa, pb, &path)?,
        draq: draq.score.value,
        dtw_cost: cost,
        neg_tau,
    })
}

/// Evaluates pairs in parallel, preserving input order.
pub fn evaluate_pairs(
    pairs: &[(&LabeledSequence, &LabeledSequence)],
    cfg: &PairEvalConfig,
) -> Result<Vec<PairRecord>> {
    pairs
        .par_iter()
        .map(|(a, b)| evaluate_pair(a, b, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub percentile: f64,
    /// Absent when no pair falls below the percentile.
    pub mean_apa: Option<f64>,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub indicator: Indicator,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub curves: Vec<SweepCurve>,
    pub pairs: usize,
    /// Same number of alignable and non-alignable pairs.
    pub balanced: bool,
}

impl SweepReport {
    pub fn curve(&self, indicator: Indicator) -> Option<&SweepCurve> {
        self.curves.iter().find(|c| c.indicator == indicator)
    }

    /// `indicator,percentile,mean_apa,n_pairs` rows; absent means are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("indicator,percentile,mean_apa,n_pairs\n");
        for c in &self.curves {
            for p in &c.points {
                let apa = p.mean_apa.map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    c.indicator, p.percentile, apa, p.n_pairs
                ));
            }
        }
        out
    }
}

/// Record indices ordered by ascending indicator value, ties by position.
fn ranked(records: &[PairRecord], which: Indicator) -> Vec<usize> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&x, &y| {
        records[x]
            .indicator(which)
            .total_cmp(&records[y].indicator(which))
            .then(x.cmp(&y))
    });
    order
}

/// Number of pairs in the lowest `percentile` percent of `n`.
fn count_below(percentile: f64, n: usize) -> usize {
    let exact = percentile / 100.0 * n as f64;
    ((exact - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Mean APA of the `fraction` of pairs with the lowest indicator values.
pub fn lowest_fraction_mean_apa(
    records: &[PairRecord],
    which: Indicator,
    fraction: f64,
) -> Option<f64> {
    let k = count_below(fraction * 100.0, records.len());
    (k > 0).then(|| {
        ranked(records, which)[..k]
            .iter()
            .map(|&i| records[i].apa)
            .sum::<f64>()
            / k as f64
    })
}

/// Curves of mean APA over the pairs whose indicator lies in the lowest
/// `p` percent, for each requested percentile.
pub fn sweep_records(
    records: &[PairRecord],
    indicators: &[Indicator],
    percentiles: &[f64],
) -> Result<SweepReport> {
    if let Some(p) = percentiles.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    let curves = indicators
        .iter()
        .map(|&which| {
            let order = ranked(records, which);
            let points = percentiles
                .iter()
                .map(|&p| {
                    let k = count_below(p, records.len());
                    let mean_apa = (k > 0).then(|| {
                        order[..k].iter().map(|&i| records[i].apa).sum::<f64>() / k as f64
                    });
                    SweepPoint {
                        percentile: p,
                        mean_apa,
                        n_pairs: k,
                    }
                })
                .collect();
            SweepCurve {
                indicator: which,
                points,
            }
        })
        .collect();
    let alignable = records.iter().filter(|r| r.alignable).count();
    Ok(SweepReport {
        curves,
        pairs: records.len(),
        balanced: 2 * alignable == records.len(),
    })
}

pub fn sweep_indicators(
    pairs: &[(&LabeledSequence, &LabeledSequence)],
    indicators: &[Indicator],
    percentiles: &[f64],
    cfg: &PairEvalConfig,
) -> Result<SweepReport> {
    sweep_records(&evaluate_pairs(pairs, cfg)?, indicators, percentiles)
}

/// ROC-AUC of an indicator for telling alignable from non-alignable pairs,
/// where a lower value predicts alignable. Ties count one half.
pub fn roc_auc(records: &[PairRecord], which: Indicator) -> Option<f64> {
    let pos: Vec<f64> = records
        .iter()
        .filter(|r| r.alignable)
        .map(|r| r.indicator(which))
        .collect();
    let neg: Vec<f64> = records
        .iter()
        .filter(|r| !r.alignable)
        .map(|r| r.indicator(which))
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p < n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featureio::{FeatureSequence, SequenceLabels};
    use proptest::prelude::*;

    fn record(alignable: bool, apa: f64, draq: f64) -> PairRecord {
        PairRecord {
            a: "a".into(),
            b: "b".into(),
            alignable,
            apa,
            draq,
            dtw_cost: 1.0 - draq,
            neg_tau: 0.0,
        }
    }

    fn labeled(id: &str) -> LabeledSequence {
        let rows: Vec<[f32; 2]> = (0..9)
            .map(|t| [(t as f32 * 0.7).sin(), t as f32 * 0.1])
            .collect();
        LabeledSequence {
            seq: FeatureSequence::from_rows(id, &rows).unwrap(),
            labels: SequenceLabels {
                id: id.into(),
                action: Some("x".into()),
                phases: Some((0..9).map(|t| t / 3).collect()),
            },
        }
    }

    #[test]
    fn identical_pairs_give_flat_curves() {
        let (a, b) = (labeled("a"), labeled("b"));
        let pairs = vec![(&a, &b), (&b, &a), (&a, &a)];
        let r = sweep_indicators(
            &pairs,
            &Indicator::ALL,
            &[10.0, 50.0, 100.0],
            &PairEvalConfig::default(),
        )
        .unwrap();
        for c in &r.curves {
            for p in &c.points {
                assert_eq!(p.mean_apa, Some(1.0));
            }
        }
        assert!(!r.balanced);
    }

    #[test]
    fn single_pair_curve() {
        let recs = vec![record(true, 0.4, 0.2)];
        let r = sweep_records(&recs, &[Indicator::Draq], &[0.0, 5.0, 100.0]).unwrap();
        let pts = &r.curves[0].points;
        assert_eq!(pts[0].mean_apa, None);
        assert_eq!(pts[1].mean_apa, Some(0.4));
        assert_eq!(pts[2].mean_apa, Some(0.4));
        assert!(sweep_records(&recs, &[Indicator::Draq], &[101.0]).is_err());
    }

    #[test]
    fn csv_shape() {
        let recs = vec![record(true, 1.0, 0.1), record(false, 0.0, 0.9)];
        let csv = sweep_records(&recs, &[Indicator::Draq], &[0.0, 50.0])
            .unwrap()
            .to_csv();
        assert_eq!(
            csv,
            "indicator,percentile,mean_apa,n_pairs\ndraq,0,,0\ndraq,50,1,1\n"
        );
    }

    #[test]
    fn auc_extremes() {
        let recs = vec![
            record(true, 1.0, 0.1),
            record(true, 1.0, 0.2),
            record(false, 0.0, 0.9),
        ];
        assert_eq!(roc_auc(&recs, Indicator::Draq), Some(1.0));
        assert_eq!(roc_auc(&recs, Indicator::DtwCost), Some(0.0));
        assert_eq!(roc_auc(&recs, Indicator::NegKendallTau), Some(0.5));
        assert_eq!(roc_auc(&recs[..2], Indicator::Draq), None);
    }

    proptest! {
        #[test]
        fn percentile_sets_are_nested(
            vals in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..60),
            mut ps in proptest::collection::vec(0.0f64..=100.0, 1..10),
        ) {
            ps.sort_by(f64::total_cmp);
            let recs: Vec<_> = vals.iter().map(|&(apa, d)| record(apa > 0.5, apa, d)).collect();
            let order = ranked(&recs, Indicator::Draq);
            let mut prev = 0;
            for &p in &ps {
                let k = count_below(p, recs.len());
                prop_assert!(k >= prev);
                prop_assert!(order[..prev].iter().all(|i| order[..k].contains(i)));
                prev = k;
            }
            let r = sweep_records(&recs, &[Indicator::Draq], &ps).unwrap();
            for pt in &r.curves[0].points {
                if let Some(m) = pt.mean_apa { prop_assert!((0.0..=1.0).contains(&m)); }
            }
        }
    }
}
