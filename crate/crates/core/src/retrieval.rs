//! Leave-one-out retrieval: ranking, evaluation metrics and pair timing.
//!
//! Every image queries the rest of the corpus. Rankings sort by descending
//! similarity with ties broken by ascending image id, so they are a pure
//! function of the similarity matrix. Metrics are rank based:
//!
//! - `P@n`: fraction of relevant items among the first `n`
//! - AP: mean of `i / r_i` over the ranks `r_1 < r_2 < ...` of relevant items
//! - RA: `P@(C - 1)` with `C` the query's class size
//! - AUC: probability a relevant item scores above an irrelevant one, ties
//!   counting one half
//!
//! Per-query values are computed in parallel and reduced in query order, so
//! results do not depend on the worker count.

use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::descriptor::{DistanceKind, Method};
use crate::error::{Error, Result};
use crate::image::{DatasetManifest, GrayImage};
use crate::pipeline::{extract_corpus, load_corpus, pair_similarity, similarity_matrix, Extractor, PipelineConfig};

/// Dense symmetric `n x n` similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n}x{n} matrix",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Metric(format!("non-finite similarity {v}")));
        }
        Ok(Self { n, data })
    }

    /// Evaluates `f(i, j)` for `i <= j` and mirrors it.
    pub fn from_symmetric_fn<F>(n: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Result<f64> + Sync,
    {
        let rows = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| f(i, j)).collect::<Result<Vec<f64>>>())
            .collect::<Result<Vec<_>>>()?;
        let mut data = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (k, v) in row.into_iter().enumerate() {
                let j = i + k;
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self::new(n, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let data = (0..n * n).map(|k| self.data[(k % n) * n + k / n]).collect();
        Self { n, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// One query's ordering of the rest of the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query: usize,
    /// Corpus ids by descending similarity.
    pub items: Vec<usize>,
    pub similarities: Vec<f64>,
    /// Whether each item shares the query's label.
    pub relevant: Vec<bool>,
}

impl RankedList {
    /// Ranks every id but `query` by `scores[id]`.
    pub fn from_scores<S: AsRef<str>>(query: usize, scores: &[f64], labels: &[S]) -> Result<Self> {
        if scores.len() != labels.len() || query >= scores.len() {
            return Err(Error::ShapeMismatch(format!(
                "query {query} with {} scores and {} labels",
                scores.len(),
                labels.len()
            )));
        }
        let mut items: Vec<usize> = (0..scores.len()).filter(|&i| i != query).collect();
        items.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let label = labels[query].as_ref();
        Ok(Self {
            query,
            similarities: items.iter().map(|&i| scores[i]).collect(),
            relevant: items.iter().map(|&i| labels[i].as_ref() == label).collect(),
            items,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn relevant_count(&self) -> usize {
        self.relevant.iter().filter(|&&r| r).count()
    }
}

/// Ranks the corpus once per query.
pub fn rank_all<S: AsRef<str> + Sync>(sim: &SimilarityMatrix, labels: &[S]) -> Result<Vec<RankedList>> {
    if sim.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} images",
            labels.len(),
            sim.len()
        )));
    }
    (0..sim.len())
        .into_par_iter()
        .map(|q| RankedList::from_scores(q, sim.row(q), labels))
        .collect()
}

fn check_retrieval_corpus(manifest: &DatasetManifest) -> Result<()> {
    if manifest.is_empty() {
        return Err(Error::Empty("manifest has no images".into()));
    }
    if manifest.classes().len() < 2 {
        return Err(Error::Metric("retrieval needs at least 2 classes".into()));
    }
    if let Some((label, _)) = manifest.classes().iter().find(|(_, &n)| n < 2) {
        return Err(Error::Metric(format!("class {label:?} has fewer than 2 images")));
    }
    Ok(())
}

/// Similarity matrix of a manifest's images under one method.
pub fn corpus_similarity(
    manifest: &DatasetManifest,
    method: Method,
    distance: DistanceKind,
    cfg: &PipelineConfig,
) -> Result<SimilarityMatrix> {
    check_retrieval_corpus(manifest)?;
    let images = load_corpus(manifest)?;
    images_similarity(&images, method, distance, cfg)
}

pub fn images_similarity(
    images: &[GrayImage],
    method: Method,
    distance: DistanceKind,
    cfg: &PipelineConfig,
) -> Result<SimilarityMatrix> {
    let features = extract_corpus(method, images, cfg)?;
    similarity_matrix(&features, distance, cfg)
}

/// Leave-one-out rankings of every image of a manifest.
pub fn run_retrieval(
    manifest: &DatasetManifest,
    method: Method,
    distance: DistanceKind,
    cfg: &PipelineConfig,
) -> Result<Vec<RankedList>> {
    let sim = corpus_similarity(manifest, method, distance, cfg)?;
    rank_all(&sim, &manifest.labels())
}

pub fn precision_at_n(r: &RankedList, n: usize) -> Result<f64> {
    if n == 0 || n > r.len() {
        return Err(Error::Metric(format!("P@{n} undefined for a ranking of {}", r.len())));
    }
    let hits = r.relevant[..n].iter().filter(|&&x| x).count();
    Ok(hits as f64 / n as f64)
}

pub fn average_precision(r: &RankedList) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0.0;
    for (k, &rel) in r.relevant.iter().enumerate() {
        if rel {
            hits += 1;
            total += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::Metric(format!("query {} has no relevant items", r.query)));
    }
    Ok(total / hits as f64)
}

fn mean_of(rs: &[RankedList], f: impl Fn(&RankedList) -> Result<f64> + Sync + Send) -> Result<f64> {
    if rs.is_empty() {
        return Err(Error::Metric("no rankings".into()));
    }
    let values = rs.par_iter().map(f).collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn mean_precision_at_n(rs: &[RankedList], n: usize) -> Result<f64> {
    mean_of(rs, |r| precision_at_n(r, n))
}

pub fn mean_average_precision(rs: &[RankedList]) -> Result<f64> {
    mean_of(rs, average_precision)
}

pub fn retrieval_accuracy(rs: &[RankedList], manifest: &DatasetManifest) -> Result<f64> {
    let labels = manifest.labels();
    mean_of(rs, |r| {
        let label = labels
            .get(r.query)
            .ok_or_else(|| Error::Metric(format!("query {} is not in the manifest", r.query)))?;
        match manifest.class_size(label) {
            0 | 1 => Err(Error::Metric(format!("class {label:?} has a single image"))),
            c => precision_at_n(r, c - 1),
        }
    })
}

/// Groups of equal similarity as `(relevant, irrelevant)` counts, best first.
fn tie_groups(r: &RankedList) -> Vec<(usize, usize)> {
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for (k, &rel) in r.relevant.iter().enumerate() {
        let new_group = k == 0 || r.similarities[k].total_cmp(&r.similarities[k - 1]) != Ordering::Equal;
        if new_group {
            groups.push((0, 0));
        }
        let g = groups.last_mut().expect("group exists");
        if rel {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// AUC of one query by the rank-sum statistic with tied scores averaged.
pub fn query_auc(r: &RankedList) -> Result<f64> {
    let pos = r.relevant_count();
    let neg = r.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(format!(
            "AUC of query {} needs relevant and irrelevant items",
            r.query
        )));
    }
    // count relevant-above-irrelevant pairs walking from the worst score up
    let mut below = 0usize;
    let mut wins = 0.0;
    for &(p, n) in tie_groups(r).iter().rev() {
        wins += p as f64 * (below as f64 + 0.5 * n as f64);
        below += n;
    }
    Ok(wins / (pos * neg) as f64)
}

pub fn auc(rs: &[RankedList]) -> Result<f64> {
    mean_of(rs, query_auc)
}

/// ROC vertices `(false positive rate, true positive rate)` of one query.
pub fn roc_points(r: &RankedList) -> Result<Vec<(f64, f64)>> {
    let pos = r.relevant_count();
    let neg = r.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(format!(
            "ROC of query {} needs relevant and irrelevant items",
            r.query
        )));
    }
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (p, n) in tie_groups(r) {
        tp += p;
        fp += n;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Metrics a report can carry, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    PAt20,
    PAt50,
    Map,
    Ra,
    Auc,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::PAt20, Metric::PAt50, Metric::Map, Metric::Ra, Metric::Auc];

    pub fn key(self) -> &'static str {
        match self {
            Metric::PAt20 => "p_at_20",
            Metric::PAt50 => "p_at_50",
            Metric::Map => "map",
            Metric::Ra => "ra",
            Metric::Auc => "auc",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.key() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

/// One method's row of a report. `P@n` is `None` when rankings are shorter than `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodMetrics {
    pub values: Vec<(Metric, Option<f64>)>,
    pub seconds_per_pair: Option<f64>,
}

impl Serialize for MethodMetrics {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let extra = usize::from(self.seconds_per_pair.is_some());
        let mut map = s.serialize_map(Some(self.values.len() + extra))?;
        for (m, v) in &self.values {
            map.serialize_entry(m.key(), v)?;
        }
        if let Some(t) = self.seconds_per_pair {
            map.serialize_entry("seconds_per_pair", &t)?;
        }
        map.end()
    }
}

pub fn evaluate_metrics(rs: &[RankedList], manifest: &DatasetManifest, metrics: &[Metric]) -> Result<MethodMetrics> {
    let values = metrics
        .iter()
        .map(|&m| {
            let v = match m {
                Metric::PAt20 | Metric::PAt50 => {
                    let n = if m == Metric::PAt20 { 20 } else { 50 };
                    if rs.iter().any(|r| r.len() < n) {
                        None
                    } else {
                        Some(mean_precision_at_n(rs, n)?)
                    }
                }
                Metric::Map => Some(mean_average_precision(rs)?),
                Metric::Ra => Some(retrieval_accuracy(rs, manifest)?),
                Metric::Auc => Some(auc(rs)?),
            };
            Ok((m, v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MethodMetrics {
        values,
        seconds_per_pair: None,
    })
}

/// Method name to metrics row, in the order methods were evaluated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<(Method, MethodMetrics)>,
}

impl Serialize for MetricsReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.rows.len()))?;
        for (method, row) in &self.rows {
            map.serialize_entry(method.name(), row)?;
        }
        map.end()
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn get(&self, method: Method, metric: Metric) -> Option<f64> {
        self.rows
            .iter()
            .find(|(m, _)| *m == method)
            .and_then(|(_, row)| row.values.iter().find(|(k, _)| *k == metric))
            .and_then(|(_, v)| *v)
    }
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Metric(format!("csv output: {e}"));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Metric(format!("csv output: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Metric(format!("csv output: {e}")))
}

/// `query_id,rank,item_id,similarity,relevant` rows; ranks start at 1.
pub fn rankings_csv(rs: &[RankedList]) -> Result<String> {
    let rows = rs.iter().flat_map(|r| {
        r.items
            .iter()
            .zip(&r.similarities)
            .zip(&r.relevant)
            .enumerate()
            .map(move |(k, ((item, sim), rel))| {
                vec![
                    r.query.to_string(),
                    (k + 1).to_string(),
                    item.to_string(),
                    sim.to_string(),
                    u8::from(*rel).to_string(),
                ]
            })
    });
    csv_text(&["query_id", "rank", "item_id", "similarity", "relevant"], rows)
}

/// `method,query_id,fpr,tpr` ROC vertices for every query.
pub fn roc_csv(curves: &[(Method, Vec<RankedList>)]) -> Result<String> {
    let mut rows = Vec::new();
    for (method, rs) in curves {
        for r in rs {
            for (fpr, tpr) in roc_points(r)? {
                rows.push(vec![
                    method.name().to_string(),
                    r.query.to_string(),
                    fpr.to_string(),
                    tpr.to_string(),
                ]);
            }
        }
    }
    csv_text(&["method", "query_id", "fpr", "tpr"], rows)
}

/// Wall-clock cost of comparing one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTiming {
    pub method: Method,
    pub median_seconds: f64,
    pub samples: Vec<f64>,
}

/// Median seconds to extract both descriptors and compare them, after one
/// untimed warm-up. Layout calibration and transform planning happen once
/// beforehand, as they would for a corpus.
pub fn bench_pair_time(
    method: Method,
    a: &GrayImage,
    b: &GrayImage,
    reps: usize,
    distance: DistanceKind,
    cfg: &PipelineConfig,
) -> Result<PairTiming> {
    if reps < 3 {
        return Err(Error::Config(format!("timing needs at least 3 repetitions, got {reps}")));
    }
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::ShapeMismatch("timed images must share a size".into()));
    }
    let ex = Extractor::for_size(method, *cfg, a.height(), a.width())?;
    let layout = crate::pipeline::calibrate(method, &[a.clone(), b.clone()], cfg)?;
    let run = || pair_similarity(&ex, layout.as_ref(), a, b, distance);
    std::hint::black_box(run()?);
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        std::hint::black_box(run()?);
        samples.push(start.elapsed().as_secs_f64());
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    Ok(PairTiming {
        method,
        median_seconds: median,
        samples,
    })
}

/// `method,seconds_per_pair,reps` rows.
pub fn timing_csv(rows: &[PairTiming]) -> Result<String> {
    let rows = rows.iter().map(|t| {
        vec![
            t.method.name().to_string(),
            format!("{:.9}", t.median_seconds),
            t.samples.len().to_string(),
        ]
    });
    csv_text(&["method", "seconds_per_pair", "reps"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranked(relevant: &[bool]) -> RankedList {
        let n = relevant.len();
        RankedList {
            query: n,
            items: (0..n).collect(),
            similarities: (0..n).map(|k| 1.0 - k as f64 / (n as f64 + 1.0)).collect(),
            relevant: relevant.to_vec(),
        }
    }

    #[test]
    fn precision_examples() {
        assert_eq!(precision_at_n(&ranked(&[true; 20]), 20).unwrap(), 1.0);
        assert_eq!(precision_at_n(&ranked(&[true, false, true, false]), 4).unwrap(), 0.5);
        assert_eq!(precision_at_n(&ranked(&[false, true]), 1).unwrap(), 0.0);
        assert!(precision_at_n(&ranked(&[true]), 2).is_err());
        assert!(precision_at_n(&ranked(&[true]), 0).is_err());
    }

    #[test]
    fn average_precision_examples() {
        assert_eq!(average_precision(&ranked(&[true, true, false, false])).unwrap(), 1.0);
        let ap = average_precision(&ranked(&[true, false, true, false])).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&ranked(&[false, true, false])).unwrap(), 0.5);
        assert!(average_precision(&ranked(&[false, false])).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(query_auc(&ranked(&[true, true, false])).unwrap(), 1.0);
        assert_eq!(query_auc(&ranked(&[false, false, true])).unwrap(), 0.0);
        let mut flat = ranked(&[true, false, false, true]);
        flat.similarities = vec![0.3; 4];
        assert_eq!(query_auc(&flat).unwrap(), 0.5);
        assert!(query_auc(&ranked(&[true, true])).is_err());
    }

    #[test]
    fn ranking_tie_rule_and_length() {
        let labels = ["a", "a", "b", "b", "c"];
        let scores = [0.5; 5];
        let r = RankedList::from_scores(2, &scores, &labels).unwrap();
        assert_eq!(r.items, vec![0, 1, 3, 4]);
        assert_eq!(r.relevant, vec![false, false, true, false]);
        let r = RankedList::from_scores(0, &[1.0, 0.2, 0.9, 0.2, 0.4], &labels).unwrap();
        assert_eq!(r.items, vec![2, 4, 1, 3]);
    }

    #[test]
    fn micro_corpus_classmate_first() {
        // two tight pairs far apart
        let pos: [f64; 4] = [0.0, 0.1, 5.0, 5.2];
        let sim = SimilarityMatrix::from_symmetric_fn(4, |i, j| Ok(1.0 / (1.0 + (pos[i] - pos[j]).abs()))).unwrap();
        let rs = rank_all(&sim, &["x", "x", "y", "y"]).unwrap();
        for r in &rs {
            assert_eq!(r.len(), 3);
            assert!(r.relevant[0]);
        }
    }

    #[test]
    fn retrieval_accuracy_examples() {
        let manifest = DatasetManifest::from_entries(
            "",
            ["a", "a", "b", "b"]
                .iter()
                .enumerate()
                .map(|(i, l)| crate::image::ManifestEntry {
                    path: format!("{i}.png"),
                    label: l.to_string(),
                })
                .collect(),
        )
        .unwrap();
        let rs: Vec<RankedList> = (0..4)
            .map(|q| RankedList {
                query: q,
                items: (0..4).filter(|&i| i != q).collect(),
                similarities: vec![0.9, 0.5, 0.1],
                relevant: vec![false, false, true],
            })
            .collect();
        assert_eq!(retrieval_accuracy(&rs, &manifest).unwrap(), 0.0);
        let perfect: Vec<RankedList> = rs
            .iter()
            .map(|r| RankedList {
                relevant: vec![true, false, false],
                ..r.clone()
            })
            .collect();
        assert_eq!(retrieval_accuracy(&perfect, &manifest).unwrap(), 1.0);
    }

    #[test]
    fn roc_runs_from_origin_to_corner() {
        let pts = roc_points(&ranked(&[true, false, true, false])).unwrap();
        assert_eq!(pts.first(), Some(&(0.0, 0.0)));
        assert_eq!(pts.last(), Some(&(1.0, 1.0)));
        assert_eq!(pts[1], (0.0, 0.5));
    }

    #[test]
    fn report_json_keys() {
        let report = MetricsReport {
            rows: vec![(
                Method::Ct,
                MethodMetrics {
                    values: Metric::ALL.iter().map(|&m| (m, Some(1.0))).collect(),
                    seconds_per_pair: None,
                },
            )],
        };
        let v: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        let keys: Vec<&String> = v["ct"].as_object().unwrap().keys().collect();
        let mut keys: Vec<&str> = keys.iter().map(|k| k.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["auc", "map", "p_at_20", "p_at_50", "ra"]);
        assert_eq!(report.get(Method::Ct, Metric::Map), Some(1.0));
    }

    #[test]
    fn bench_rejects_few_reps() {
        let img = GrayImage::zeros(32, 32);
        assert!(bench_pair_time(Method::Clbp, &img, &img, 2, DistanceKind::Scd, &PipelineConfig::default()).is_err());
        let t = bench_pair_time(Method::Clbp, &img, &img, 3, DistanceKind::Scd, &PipelineConfig::default()).unwrap();
        assert_eq!(t.samples.len(), 3);
        assert!(t.median_seconds > 0.0);
    }
}
