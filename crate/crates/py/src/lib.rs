//! Python bindings: corpora, models, training, generation, metrics and the
//! command-line driver.

use clap::Parser;
use iavc::data::{self, ClipRecord, SynthConfig};
use iavc::identity::{identify, PlayerCatalog, PlayerSequence, SequenceSource};
use iavc::metrics::{self, BleuOptions, MeteorParams};
use iavc::optim::Adam;
use iavc::train::{self, CaptionTrainConfig, PinTrainConfig};
use iavc::{AblationFlags, Error, HyperConfig, IavcModel, Tensor};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde_json::Value;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        Error::MissingCheckpoint(p) => PyIOError::new_err(format!("missing checkpoint: {p}")),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// `base` with the keys of the JSON object `overrides` replaced.
fn overlay<T>(base: &T, overrides: Option<&str>) -> PyResult<T>
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let mut v = serde_json::to_value(base).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(text) = overrides {
        let o: Value = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let Value::Object(o) = o else {
            return Err(PyValueError::new_err("overrides must be a JSON object"));
        };
        for (k, x) in o {
            v[k] = x;
        }
    }
    serde_json::from_value(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn flags(no_vclm: bool, no_pin: bool, no_bsim: bool) -> PyResult<AblationFlags> {
    let f = AblationFlags { no_vclm, no_pin, no_bsim, ..Default::default() };
    f.validate().map_err(py_err)?;
    Ok(f)
}

/// `(loss, mca, mpca)` of one classifier epoch.
type PinRow = (f64, Option<f64>, Option<f64>);

/// A set of annotated clips with the player catalog and vocabulary built
/// over them.
#[pyclass(module = "iavc_py", skip_from_py_object)]
#[derive(Clone)]
pub struct Corpus {
    records: Vec<ClipRecord>,
    catalog: PlayerCatalog,
    vocab: iavc::captioner::Vocabulary,
}

#[pymethods]
impl Corpus {
    /// Synthetic corpus; `config` is a JSON object overriding generator
    /// defaults.
    #[staticmethod]
    #[pyo3(signature = (config=None))]
    fn synth(config: Option<&str>) -> PyResult<Self> {
        let cfg: SynthConfig = overlay(&SynthConfig::default(), config)?;
        let c = data::synth_generate(&cfg).map_err(py_err)?;
        Ok(Corpus { records: c.records, catalog: c.catalog, vocab: c.vocab })
    }

    /// JSON Lines annotations with their tensor sidecar.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let records = data::load_annotations(path.as_ref()).map_err(py_err)?;
        let mut names: Vec<String> = records
            .iter()
            .flat_map(|r| r.player_names.iter().cloned().chain(r.candidate_names.iter().flatten().cloned()))
            .collect();
        names.sort();
        names.dedup();
        let catalog = PlayerCatalog::new(names).map_err(py_err)?;
        let vocab = data::synth::corpus_vocabulary(&records, &catalog);
        Ok(Corpus { records, catalog, vocab })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        data::save_annotations(path.as_ref(), &self.records).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.records.len()
    }

    fn video_ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.video_id.clone()).collect()
    }

    fn captions(&self) -> Vec<String> {
        self.records.iter().map(|r| r.caption.clone()).collect()
    }

    fn players(&self) -> Vec<String> {
        self.catalog.names().to_vec()
    }

    /// `(train, test)` by game, 35/40 of the games on the training side.
    fn split(&self) -> PyResult<(Corpus, Corpus)> {
        let spec = data::SplitSpec::by_ratio(&self.records).map_err(py_err)?;
        let (a, b) = data::split_by_game(&self.records, &spec).map_err(py_err)?;
        let side = |records| Corpus { records, catalog: self.catalog.clone(), vocab: self.vocab.clone() };
        Ok((side(a), side(b)))
    }
}

/// The full captioning model.
#[pyclass(module = "iavc_py")]
pub struct Model {
    inner: IavcModel,
}

#[pymethods]
impl Model {
    /// Fresh model for `corpus`; `config` is a JSON object overriding the
    /// desk hyperparameters.
    #[new]
    #[pyo3(signature = (corpus, config=None))]
    fn new(corpus: &Corpus, config: Option<&str>) -> PyResult<Self> {
        let mut cfg: HyperConfig = overlay(&HyperConfig::desk(), config)?;
        if let Some(r) = corpus.records.first() {
            cfg.d_in = r.video_features.cols();
        }
        let inner = IavcModel::new(cfg, corpus.catalog.clone(), corpus.vocab.clone()).map_err(py_err)?;
        Ok(Model { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ck = data::load_checkpoint(path.as_ref()).map_err(py_err)?;
        Ok(Model { inner: IavcModel::from_checkpoint(ck).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        data::save_checkpoint(path.as_ref(), &self.inner.to_checkpoint(None, Value::Null)).map_err(py_err)
    }

    fn parameter_count(&self) -> usize {
        self.inner.store.scalar_count()
    }

    /// Per-epoch `(loss, mca, mpca)`; accuracies are `None` without a
    /// held-out slice.
    #[pyo3(signature = (corpus, epochs=50, lr=3e-3, seed=0))]
    fn train_pin(&mut self, corpus: &Corpus, epochs: usize, lr: f64, seed: u64) -> PyResult<Vec<PinRow>> {
        let opts = PinTrainConfig { epochs, lr, seed, ..Default::default() };
        let mut adam = Adam::new(lr);
        let log = train::train_pin(&mut self.inner, &corpus.records, &opts, &mut adam, &mut |_| {}).map_err(py_err)?;
        Ok(log.iter().map(|e| (e.loss, e.mca, e.mpca)).collect())
    }

    /// Per-epoch mean caption loss.
    #[pyo3(signature = (corpus, epochs=100, lr=2e-3, seed=0, no_vclm=false, no_pin=false, no_bsim=false))]
    #[allow(clippy::too_many_arguments)]
    fn train_captioner(
        &mut self,
        corpus: &Corpus,
        epochs: usize,
        lr: f64,
        seed: u64,
        no_vclm: bool,
        no_pin: bool,
        no_bsim: bool,
    ) -> PyResult<Vec<f64>> {
        let opts = CaptionTrainConfig { epochs, lr, seed, flags: flags(no_vclm, no_pin, no_bsim)?, ..Default::default() };
        let mut adam = Adam::new(lr);
        let log = train::train_captioner(&mut self.inner, &corpus.records, &opts, &mut adam, 0, &mut |_| {})
            .map_err(py_err)?;
        Ok(log.iter().map(|e| e.loss).collect())
    }

    /// One caption per clip, in corpus order.
    #[pyo3(signature = (corpus, beam=1, no_vclm=false, no_pin=false, no_bsim=false))]
    fn generate(&self, corpus: &Corpus, beam: usize, no_vclm: bool, no_pin: bool, no_bsim: bool) -> PyResult<Vec<String>> {
        let out = train::generate_all(&self.inner, &corpus.records, flags(no_vclm, no_pin, no_bsim)?, beam)
            .map_err(py_err)?;
        Ok(out.into_iter().map(|g| g.caption).collect())
    }

    /// Metric report over `corpus` as a JSON string.
    #[pyo3(signature = (corpus, beam=1))]
    fn evaluate(&self, corpus: &Corpus, beam: usize) -> PyResult<String> {
        let (_, report) = train::evaluate_model(
            &self.inner,
            &corpus.records,
            AblationFlags::default(),
            beam,
            &Default::default(),
            Value::Null,
        )
        .map_err(py_err)?;
        report.to_json().map_err(py_err)
    }

    /// `(name, confidence)` for a player sequence given as frame rows.
    fn identify(&self, frames: Vec<Vec<f64>>) -> PyResult<(String, f64)> {
        let t = Tensor::from_rows(&frames).map_err(py_err)?;
        let seq = PlayerSequence::new(t, None, SequenceSource::TrackerStub);
        let p = identify(&self.inner.store, &self.inner.cfg, &seq, &self.inner.catalog).map_err(py_err)?;
        Ok((p.name, p.confidence))
    }
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    metrics::tokenize(text)
}

#[pyfunction]
#[pyo3(signature = (candidate, references, max_n=4))]
fn bleu(candidate: &str, references: Vec<String>, max_n: usize) -> f64 {
    let refs: Vec<Vec<String>> = references.iter().map(|r| metrics::tokenize(r)).collect();
    metrics::bleu(&metrics::tokenize(candidate), &refs, BleuOptions { max_n, ..Default::default() })
}

#[pyfunction]
fn rouge_l(candidate: &str, reference: &str) -> f64 {
    metrics::rouge_l(&metrics::tokenize(candidate), &metrics::tokenize(reference), 1.0)
}

#[pyfunction]
fn meteor(candidate: &str, reference: &str) -> f64 {
    metrics::meteor(&metrics::tokenize(candidate), &metrics::tokenize(reference), MeteorParams::default())
}

/// Corpus-level report (JSON string) for aligned candidate and reference
/// captions.
#[pyfunction]
fn evaluate(candidates: Vec<String>, references: Vec<String>) -> PyResult<String> {
    if candidates.len() != references.len() {
        return Err(PyValueError::new_err("candidates and references differ in length"));
    }
    let pairs: Vec<metrics::EvalPair> = candidates
        .into_iter()
        .zip(references)
        .enumerate()
        .map(|(i, (c, r))| metrics::EvalPair {
            video_id: i.to_string(),
            candidate: c,
            references: vec![r],
            event_type: None,
        })
        .collect();
    let report = metrics::evaluate_corpus(&pairs, &Default::default(), Value::Null).map_err(py_err)?;
    report.to_json().map_err(py_err)
}

/// Runs the `iavc` command line with `args` (program name excluded) and
/// returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    let argv = std::iter::once("iavc".to_string()).chain(args);
    match iavc_cli::Cli::try_parse_from(argv) {
        Ok(cli) => match iavc_cli::run(&cli) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                i32::from(iavc_cli::exit_code(&e))
            }
        },
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}

#[pymodule]
fn iavc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(meteor, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
