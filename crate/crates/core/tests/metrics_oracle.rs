use seistex::image::{DatasetManifest, ManifestEntry};
use seistex::retrieval::{
    auc, evaluate_metrics, mean_average_precision, mean_precision_at_n, rank_all, retrieval_accuracy, Metric,
    SimilarityMatrix,
};
use seistex::synth::Rng;

struct Corpus {
    labels: Vec<String>,
    sim: Vec<Vec<f64>>,
}

fn random_corpus(rng: &mut Rng) -> Corpus {
    let classes = rng.int_range(2, 4);
    // every class gets at least two members
    let mut labels: Vec<String> = (0..classes).flat_map(|c| [c, c]).map(|c| format!("k{c}")).collect();
    let extra = rng.int_range(0, 20 - labels.len());
    for _ in 0..extra {
        labels.push(format!("k{}", rng.int_range(0, classes - 1)));
    }
    // shuffle so classes interleave
    for i in (1..labels.len()).rev() {
        let j = rng.int_range(0, i);
        labels.swap(i, j);
    }
    let n = labels.len();
    // coarse levels force ties in some corpora
    let levels = if rng.next_f64() < 0.5 { 4.0 } else { 0.0 };
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        sim[i][i] = 1.0;
        for j in i + 1..n {
            let mut v = rng.next_f64();
            if levels > 0.0 {
                v = (v * levels).floor() / levels;
            }
            sim[i][j] = v;
            sim[j][i] = v;
        }
    }
    Corpus { labels, sim }
}

/// Relevance flags of the brute-force ranking of `q`: descending score, ascending id.
fn oracle_ranking(c: &Corpus, q: usize) -> Vec<(usize, bool)> {
    let mut rest: Vec<usize> = (0..c.labels.len()).filter(|&i| i != q).collect();
    let mut out = Vec::new();
    while !rest.is_empty() {
        let mut best = 0;
        for k in 1..rest.len() {
            let (a, b) = (rest[k], rest[best]);
            if c.sim[q][a] > c.sim[q][b] || (c.sim[q][a] == c.sim[q][b] && a < b) {
                best = k;
            }
        }
        let id = rest.remove(best);
        out.push((id, c.labels[id] == c.labels[q]));
    }
    out
}

fn oracle_p_at(c: &Corpus, q: usize, n: usize) -> f64 {
    let r = oracle_ranking(c, q);
    r[..n].iter().filter(|x| x.1).count() as f64 / n as f64
}

fn oracle_ap(c: &Corpus, q: usize) -> f64 {
    let r = oracle_ranking(c, q);
    let mut precisions = Vec::new();
    for k in 0..r.len() {
        if r[k].1 {
            let hits = r[..=k].iter().filter(|x| x.1).count();
            precisions.push(hits as f64 / (k + 1) as f64);
        }
    }
    precisions.iter().sum::<f64>() / precisions.len() as f64
}

fn oracle_auc(c: &Corpus, q: usize) -> f64 {
    let n = c.labels.len();
    let (mut credit, mut pairs) = (0.0, 0.0);
    for i in (0..n).filter(|&i| i != q && c.labels[i] == c.labels[q]) {
        for j in (0..n).filter(|&j| j != q && c.labels[j] != c.labels[q]) {
            pairs += 1.0;
            if c.sim[q][i] > c.sim[q][j] {
                credit += 1.0;
            } else if c.sim[q][i] == c.sim[q][j] {
                credit += 0.5;
            }
        }
    }
    credit / pairs
}

fn mean(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    (0..n).map(f).sum::<f64>() / n as f64
}

fn manifest(labels: &[String]) -> DatasetManifest {
    let entries = labels
        .iter()
        .enumerate()
        .map(|(i, l)| ManifestEntry {
            path: format!("{i}.png"),
            label: l.clone(),
        })
        .collect();
    DatasetManifest::from_entries("", entries).unwrap()
}

fn matrix(c: &Corpus) -> SimilarityMatrix {
    let n = c.labels.len();
    SimilarityMatrix::new(n, c.sim.iter().flatten().copied().collect()).unwrap()
}

#[test]
fn engine_matches_brute_force_definitions() {
    let mut rng = Rng::new(99);
    for _ in 0..200 {
        let c = random_corpus(&mut rng);
        let n = c.labels.len();
        let m = manifest(&c.labels);
        let rs = rank_all(&matrix(&c), &c.labels).unwrap();
        assert!(rs.iter().all(|r| r.len() == n - 1));

        for k in [1, 2, n - 1] {
            let want = mean(n, |q| oracle_p_at(&c, q, k));
            assert!((mean_precision_at_n(&rs, k).unwrap() - want).abs() <= 1e-12);
        }
        let want = mean(n, |q| oracle_ap(&c, q));
        assert!((mean_average_precision(&rs).unwrap() - want).abs() <= 1e-12);
        let want = mean(n, |q| {
            let size = c.labels.iter().filter(|l| **l == c.labels[q]).count();
            oracle_p_at(&c, q, size - 1)
        });
        assert!((retrieval_accuracy(&rs, &m).unwrap() - want).abs() <= 1e-12);
        let want = mean(n, |q| oracle_auc(&c, q));
        assert!((auc(&rs).unwrap() - want).abs() <= 1e-12);
    }
}

#[test]
fn reports_are_invariant_under_squaring_similarities() {
    let mut rng = Rng::new(7);
    for _ in 0..200 {
        let c = random_corpus(&mut rng);
        let m = manifest(&c.labels);
        let sim = matrix(&c);
        let a = rank_all(&sim, &c.labels).unwrap();
        let b = rank_all(&sim.map(|s| s * s), &c.labels).unwrap();
        let ra = evaluate_metrics(&a, &m, &Metric::ALL).unwrap();
        let rb = evaluate_metrics(&b, &m, &Metric::ALL).unwrap();
        assert_eq!(ra, rb);
    }
}

#[test]
fn rankings_from_transpose_are_identical() {
    let mut rng = Rng::new(5);
    for _ in 0..50 {
        let c = random_corpus(&mut rng);
        let sim = matrix(&c);
        assert_eq!(sim, sim.transpose());
        assert_eq!(rank_all(&sim, &c.labels).unwrap(), rank_all(&sim.transpose(), &c.labels).unwrap());
    }
}

#[test]
fn identical_descriptors_rank_by_id() {
    let labels: Vec<String> = ["a", "a", "b", "b", "b"].iter().map(|s| s.to_string()).collect();
    let sim = SimilarityMatrix::new(5, vec![0.5; 25]).unwrap();
    for r in rank_all(&sim, &labels).unwrap() {
        let expect: Vec<usize> = (0..5).filter(|&i| i != r.query).collect();
        assert_eq!(r.items, expect);
    }
    assert_eq!(auc(&rank_all(&sim, &labels).unwrap()).unwrap(), 0.5);
}
