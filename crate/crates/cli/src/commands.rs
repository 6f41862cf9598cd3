use std::fmt;
use std::path::Path;

use anyhow::Context;
use seistex::descriptor::{BinLayout, Method};
use seistex::image::{load_image, load_manifest, DatasetManifest, GrayImage, ManifestEntry};
use seistex::pipeline::{extract_corpus, similarity_matrix, CorpusFeatures, DescriptorFile, Extractor};
use seistex::retrieval::{
    bench_pair_time, evaluate_metrics, rank_all, rankings_csv, roc_csv, timing_csv, MetricsReport, RankedList,
};
use seistex::synth::{generate, generate_dataset, write_dataset, DatasetSpec, SynthKind, SynthSpec};

use crate::{BenchArgs, Command, CorpusArgs, EvaluateArgs, ExtractArgs, RetrieveArgs, SeisimArgs, Source, SynthArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<seistex::Error> for CliError {
    fn from(e: seistex::Error) -> Self {
        match e {
            seistex::Error::Config(m) => CliError::Usage(m),
            other => CliError::Runtime(anyhow::anyhow!(other.to_string())),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Seisim(a) => seisim(a),
        Command::BenchTime(a) => bench_time(a),
    }
}

fn emit(text: &str, out: Option<&Path>) -> CliResult {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(CliError::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dataset_spec(c: &CorpusArgs) -> DatasetSpec {
    DatasetSpec {
        classes: c.classes,
        per_class: c.per_class,
        height: c.size.0,
        width: c.size.1,
        seed: c.seed,
    }
}

fn synth(a: SynthArgs) -> CliResult {
    let spec = dataset_spec(&a.corpus);
    let manifest = write_dataset(&spec, &a.out)?;
    eprintln!(
        "wrote {} images and {}",
        manifest.len(),
        a.out.join("manifest.csv").display()
    );
    Ok(())
}

fn load_source_manifest(path: &Path) -> CliResult<(DatasetManifest, Vec<GrayImage>)> {
    let manifest = load_manifest(path)?;
    let images = seistex::pipeline::load_corpus(&manifest)?;
    Ok((manifest, images))
}

fn extract(a: ExtractArgs) -> CliResult {
    if a.method == Method::Seisim {
        return Err(usage(
            "seisim compares images directly; use `evaluate` or `retrieve` with --manifest",
        ));
    }
    let cfg = a.tuning.config();
    let (manifest, images) = load_source_manifest(&a.manifest)?;
    let (layout, sets) = match &a.layout {
        Some(path) => {
            let layout = BinLayout::load(path)?;
            let first = &images[0];
            let ex = Extractor::for_size(a.method, cfg, first.height(), first.width())?;
            let sets = images
                .iter()
                .map(|img| ex.descriptor(img, Some(&layout)))
                .collect::<seistex::Result<Vec<_>>>()?;
            (Some(layout), sets)
        }
        None => match extract_corpus(a.method, &images, &cfg)? {
            CorpusFeatures::Histograms { layout, sets } => (layout, sets),
            CorpusFeatures::Seisim(_) => unreachable!("seisim rejected above"),
        },
    };
    if let (Some(path), Some(layout)) = (&a.layout_out, &layout) {
        layout.save(path)?;
    }
    let file = DescriptorFile::new(&manifest, a.method, layout, sets)?;
    file.save(&a.out)?;
    eprintln!(
        "wrote {} {} descriptors of {} histograms to {}",
        file.entries.len(),
        a.method,
        file.entries.first().map_or(0, |e| e.descriptor.histograms.len()),
        a.out.display()
    );
    Ok(())
}

/// A loaded corpus: labels plus either images or stored descriptors.
struct Corpus {
    manifest: DatasetManifest,
    images: Option<Vec<GrayImage>>,
    stored: Option<DescriptorFile>,
}

fn synthetic_corpus(c: &CorpusArgs) -> CliResult<Corpus> {
    let data = generate_dataset(&dataset_spec(c))?;
    let entries = data
        .iter()
        .enumerate()
        .map(|(i, (label, _))| ManifestEntry {
            path: format!("{label}/{:03}.png", i % c.per_class),
            label: label.clone(),
        })
        .collect();
    Ok(Corpus {
        manifest: DatasetManifest::from_entries("", entries)?,
        images: Some(data.into_iter().map(|(_, img)| img).collect()),
        stored: None,
    })
}

fn open_corpus(source: &Source, fallback: Option<&CorpusArgs>) -> CliResult<Corpus> {
    if let Some(path) = &source.descriptors {
        let file = DescriptorFile::load(path)?;
        let entries = file
            .entries
            .iter()
            .map(|e| ManifestEntry {
                path: e.path.clone(),
                label: e.label.clone(),
            })
            .collect();
        return Ok(Corpus {
            manifest: DatasetManifest::from_entries("", entries)?,
            images: None,
            stored: Some(file),
        });
    }
    if let Some(path) = &source.manifest {
        let (manifest, images) = load_source_manifest(path)?;
        return Ok(Corpus {
            manifest,
            images: Some(images),
            stored: None,
        });
    }
    match fallback {
        Some(c) => synthetic_corpus(c),
        None => Err(usage("one of --manifest or --descriptors is required")),
    }
}

fn check_labels(manifest: &DatasetManifest) -> CliResult {
    if manifest.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!("corpus has no images")));
    }
    if manifest.classes().len() < 2 || manifest.classes().values().any(|&n| n < 2) {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "retrieval needs at least 2 classes of at least 2 images each"
        )));
    }
    Ok(())
}

fn rankings_for(
    corpus: &Corpus,
    method: Method,
    distance: seistex::descriptor::DistanceKind,
    cfg: &seistex::pipeline::PipelineConfig,
) -> CliResult<Vec<RankedList>> {
    check_labels(&corpus.manifest)?;
    let features = match (&corpus.stored, &corpus.images) {
        (Some(file), _) => {
            if file.method != method {
                return Err(usage(format!(
                    "descriptor file holds {} descriptors, {} requested",
                    file.method, method
                )));
            }
            file.features()
        }
        (None, Some(images)) => extract_corpus(method, images, cfg)?,
        (None, None) => unreachable!("corpus has images or descriptors"),
    };
    let sim = similarity_matrix(&features, distance, cfg)?;
    Ok(rank_all(&sim, &corpus.manifest.labels())?)
}

fn retrieve(a: RetrieveArgs) -> CliResult {
    let corpus = open_corpus(&a.source, None)?;
    let method = match (&corpus.stored, a.method) {
        (Some(file), None) => file.method,
        (_, Some(m)) => m,
        (None, None) => return Err(usage("--method is required with --manifest")),
    };
    let mut rs = rankings_for(&corpus, method, a.distance, &a.tuning.config())?;
    if let Some(q) = a.query {
        if q >= rs.len() {
            return Err(usage(format!("query id {q} is out of range 0..{}", rs.len())));
        }
        rs = vec![rs.swap_remove(q)];
    }
    emit(&rankings_csv(&rs)?, a.out.as_deref())
}

fn evaluate(a: EvaluateArgs) -> CliResult {
    if a.metrics.is_empty() {
        return Err(usage("no metrics requested"));
    }
    if matches!(a.time_reps, Some(r) if r < 3) {
        return Err(usage("--time-reps must be at least 3"));
    }
    let corpus = open_corpus(&a.source, Some(&a.corpus))?;
    let cfg = a.tuning.config();
    let methods = match &corpus.stored {
        Some(file) => {
            if a.method != Method::ALL && a.method != [file.method] {
                return Err(usage(format!("descriptor file only holds {} descriptors", file.method)));
            }
            vec![file.method]
        }
        None => dedup(&a.method),
    };
    let mut report = MetricsReport::default();
    let mut curves = Vec::new();
    for method in methods {
        let rs = rankings_for(&corpus, method, a.distance, &cfg)?;
        let mut row = evaluate_metrics(&rs, &corpus.manifest, &a.metrics)?;
        if let Some(reps) = a.time_reps {
            let images = corpus
                .images
                .as_ref()
                .ok_or_else(|| usage("timing needs images, not a descriptor file"))?;
            row.seconds_per_pair = Some(bench_pair_time(method, &images[0], &images[1], reps, a.distance, &cfg)?.median_seconds);
        }
        report.rows.push((method, row));
        if a.roc.is_some() {
            curves.push((method, rs));
        }
    }
    if let Some(path) = &a.roc {
        emit(&roc_csv(&curves)?, Some(path))?;
    }
    emit(&report.to_json()?, a.out.as_deref())
}

fn dedup(methods: &[Method]) -> Vec<Method> {
    let mut out = Vec::new();
    for &m in methods {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

fn seisim(a: SeisimArgs) -> CliResult {
    let cfg = a.tuning.config();
    let x = load_image(&a.first)?;
    let y = load_image(&a.second)?;
    let ex = Extractor::new(Method::Seisim, cfg)?;
    let score = seistex::pipeline::pair_similarity(&ex, None, &x, &y, seistex::descriptor::DistanceKind::Scd)?;
    println!("{score}");
    Ok(())
}

fn bench_time(a: BenchArgs) -> CliResult {
    if a.reps < 3 {
        return Err(usage(format!("--reps must be at least 3, got {}", a.reps)));
    }
    let cfg = a.tuning.config();
    let (x, y) = match (&a.first, &a.second) {
        (Some(p), Some(q)) => (load_image(p)?, load_image(q)?),
        _ => {
            let (h, w) = a.size;
            let seeds = seistex::synth::image_seed(a.seed, 0, 0);
            (
                generate(&SynthSpec::new(SynthKind::Layered, h, w, seeds))?,
                generate(&SynthSpec::new(SynthKind::Faulted, h, w, seeds.wrapping_add(1)))?,
            )
        }
    };
    let rows = dedup(&a.method)
        .into_iter()
        .map(|m| bench_pair_time(m, &x, &y, a.reps, a.distance, &cfg))
        .collect::<seistex::Result<Vec<_>>>()?;
    emit(&timing_csv(&rows)?, a.out.as_deref())
}
