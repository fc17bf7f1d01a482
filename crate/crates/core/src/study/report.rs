use std::io::Write;

use serde::{Deserialize, Serialize};

use super::likert::LikertTable;
use super::stats::{effect_size_r, friedman, kendalls_w, wilcoxon_signed_rank, Alternative, FriedmanResult, StatsError};
use crate::session::{Measure, WorkflowKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub a: WorkflowKind,
    pub b: WorkflowKind,
    /// Complete pairs used (listwise).
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_effective: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub measure: Measure,
    pub workflows: Vec<WorkflowKind>,
    pub n: usize,
    pub friedman: FriedmanResult,
    pub kendalls_w: f64,
    pub pairwise: Vec<PairReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub alternative: Alternative,
    pub measures: Vec<MeasureReport>,
}

/// Omnibus test and concordance per measure, then every workflow pair
/// `(a, b)` with `a` before `b` in column order, tested on `a - b`.
/// Pairs too small for the normal approximation carry an error string
/// instead of statistics.
pub fn analyze<'a>(
    tables: impl IntoIterator<Item = &'a LikertTable>,
    alternative: Alternative,
) -> Result<TestReport, StatsError> {
    let mut measures = Vec::new();
    for table in tables {
        let rows = table.complete_rows();
        let omnibus = friedman(&rows)?;
        let w = kendalls_w(&rows)?;
        let mut pairwise = Vec::new();
        for i in 0..table.workflows.len() {
            for j in i + 1..table.workflows.len() {
                let (a, b): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r[i], r[j])).unzip();
                let mut pair = PairReport {
                    a: table.workflows[i],
                    b: table.workflows[j],
                    n: a.len(),
                    n_effective: None,
                    z: None,
                    p: None,
                    r: None,
                    error: None,
                };
                match wilcoxon_signed_rank(&a, &b, alternative) {
                    Ok(res) => {
                        pair.n_effective = Some(res.n_effective);
                        pair.z = Some(res.z);
                        pair.p = Some(res.p);
                        pair.r = Some(effect_size_r(res.z, a.len())?);
                    }
                    Err(e) => pair.error = Some(e.to_string()),
                }
                pairwise.push(pair);
            }
        }
        measures.push(MeasureReport {
            measure: table.measure,
            workflows: table.workflows.clone(),
            n: rows.len(),
            friedman: omnibus,
            kendalls_w: w,
            pairwise,
        });
    }
    Ok(TestReport { alternative, measures })
}

impl TestReport {
    /// Flat CSV: one omnibus row and one row per pair for each measure.
    pub fn write_csv(&self, writer: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["measure", "test", "comparison", "n", "statistic", "df", "z", "p", "effect", "note"])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for m in &self.measures {
            w.write_record([
                m.measure.as_str().to_string(),
                "friedman".into(),
                m.workflows.iter().map(|w| w.as_str()).collect::<Vec<_>>().join("|"),
                m.n.to_string(),
                format!("{:.6}", m.friedman.chi2),
                m.friedman.df.to_string(),
                String::new(),
                format!("{:.6}", m.friedman.p),
                format!("{:.6}", m.kendalls_w),
                "effect=kendalls_w".into(),
            ])?;
            for p in &m.pairwise {
                w.write_record([
                    m.measure.as_str().to_string(),
                    "wilcoxon".into(),
                    format!("{}-{}", p.a, p.b),
                    p.n.to_string(),
                    String::new(),
                    String::new(),
                    opt(p.z),
                    opt(p.p),
                    opt(p.r),
                    p.error.clone().unwrap_or_else(|| "effect=r".into()),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
