//! Python bindings: search spaces, hardware costs, the synthetic oracle, the
//! search itself, and the quantization and Pareto helpers.

use std::sync::Arc;

use eenas_core::arch::{self, BackboneSpec, Chromosome};
use eenas_core::eval::{self, toy_dataset, Evaluator, OracleConfig, OracleEvaluator, ToyEvaluator, TrainingConfig};
use eenas_core::hwcost::{cost_report, AcceleratorSpec};
use eenas_core::nas::{self, EvaluatorKind, NasConfig};
use eenas_core::predict::LabeledRecord;
use eenas_core::quant::{self, QuantParams};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn chromosome(genes: &[u8]) -> PyResult<Chromosome> {
    Chromosome::from_genes(genes).map_err(err)
}

/// Architecture search space over a backbone.
#[pyclass(module = "eenas", frozen, skip_from_py_object)]
#[derive(Clone)]
struct SearchSpace {
    inner: arch::SearchSpace,
}

#[pymethods]
impl SearchSpace {
    /// `backbone` is `table3`, `table3_rederived`, `toy_dense`, or backbone
    /// table text.
    #[new]
    #[pyo3(signature = (backbone = "table3"))]
    fn new(backbone: &str) -> PyResult<Self> {
        let inner = match backbone {
            "table3" => arch::SearchSpace::with_defaults(Arc::new(BackboneSpec::mobilenetv2_table3())),
            "table3_rederived" => {
                arch::SearchSpace::with_defaults(Arc::new(BackboneSpec::mobilenetv2_table3_rederived()))
            }
            "toy_dense" => arch::SearchSpace::toy(),
            text => arch::SearchSpace::with_defaults(Arc::new(text.parse::<BackboneSpec>().map_err(err)?)),
        };
        Ok(Self { inner })
    }

    #[getter]
    fn h(&self) -> usize {
        self.inner.h()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    fn size(&self) -> PyResult<u64> {
        self.inner.size().map_err(err)
    }

    /// Genes of a uniformly sampled architecture.
    fn sample(&self, seed: u64) -> Vec<u8> {
        arch::sample_architecture(&self.inner, seed).genes()
    }

    /// Mount labels of the exits an architecture uses.
    fn exits(&self, genes: Vec<u8>) -> PyResult<Vec<String>> {
        let a = self.inner.decode(&chromosome(&genes)?).map_err(err)?;
        Ok(a.exit_labels().into_iter().map(String::from).collect())
    }

    /// Canonical hash; genes of absent exits do not contribute.
    fn hash(&self, genes: Vec<u8>) -> PyResult<String> {
        Ok(chromosome(&genes)?.hash().0)
    }

    /// Hardware cost on the default accelerator, or on one given as TOML.
    #[pyo3(signature = (genes, exit_ratios, accelerator = None))]
    fn cost<'py>(
        &self,
        py: Python<'py>,
        genes: Vec<u8>,
        exit_ratios: Vec<f64>,
        accelerator: Option<&str>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let spec = match accelerator {
            Some(t) => AcceleratorSpec::from_toml(t).map_err(err)?,
            None => AcceleratorSpec::default(),
        };
        let a = self.inner.decode(&chromosome(&genes)?).map_err(err)?;
        let r = cost_report(&a, &spec, &exit_ratios).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("et", r.et)?;
        d.set_item("et_avg", r.et_avg)?;
        d.set_item("overheads", r.overheads)?;
        d.set_item("cumulative_macs", r.cumulative_macs)?;
        d.set_item("makespan", r.makespan)?;
        d.set_item("energy", r.layers.iter().map(|l| l.energy).sum::<f64>())?;
        Ok(d)
    }

    /// Accuracy and exit ratios from the synthetic oracle.
    #[pyo3(signature = (genes, seed = 0))]
    fn evaluate<'py>(&self, py: Python<'py>, genes: Vec<u8>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let c = chromosome(&genes)?;
        let a = self.inner.decode(&c).map_err(err)?;
        let r = OracleEvaluator {
            config: OracleConfig::default(),
            seed,
        }
        .evaluate(&c, &a)
        .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("accuracy", r.accuracy)?;
        d.set_item("exit_ratios", r.exit_ratios)?;
        d.set_item("acc_avg", r.acc_avg)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("SearchSpace(H={}, p={}, q={})", self.inner.h(), self.inner.p(), self.inner.q())
    }
}

/// A labeled architecture.
#[pyclass(module = "eenas", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct Record {
    hash: String,
    genes: Vec<u8>,
    acc_avg: f64,
    et_avg: f64,
    exit_ratios: Vec<f64>,
    iteration: usize,
}

#[pymethods]
impl Record {
    fn __repr__(&self) -> String {
        format!("Record({}, acc_avg={:.4}, et_avg={:.6e})", self.hash, self.acc_avg, self.et_avg)
    }
}

impl From<&LabeledRecord> for Record {
    fn from(r: &LabeledRecord) -> Self {
        Self {
            hash: r.hash.0.clone(),
            genes: r.chromosome.genes(),
            acc_avg: r.acc_avg,
            et_avg: r.et_avg,
            exit_ratios: r.exit_ratios.clone(),
            iteration: r.iteration,
        }
    }
}

/// Outcome of a search.
#[pyclass(module = "eenas", frozen, get_all)]
struct SearchResult {
    labeled: Vec<Record>,
    front: Vec<Record>,
    population: usize,
    iterations: usize,
    /// The full history as JSON lines.
    history: String,
}

/// Run a search with the oracle or the toy evaluator.
#[pyfunction]
#[pyo3(signature = (
    space, seed = 0, evaluator = "oracle", n = 20, iterations = 6, generations = 3,
    initial_population = 50, theta = 0.5, mu = 0.5
))]
#[allow(clippy::too_many_arguments)]
fn run_search(
    space: &SearchSpace,
    seed: u64,
    evaluator: &str,
    n: usize,
    iterations: usize,
    generations: usize,
    initial_population: usize,
    theta: f64,
    mu: f64,
) -> PyResult<SearchResult> {
    let kind: EvaluatorKind = evaluator.parse().map_err(PyValueError::new_err)?;
    let config = NasConfig {
        n,
        iterations,
        generations,
        initial_population,
        theta,
        mu,
        seed,
        evaluator: kind,
        ..NasConfig::default()
    };
    let ev: Box<dyn Evaluator> = match kind {
        EvaluatorKind::Oracle => Box::new(OracleEvaluator {
            config: OracleConfig::default(),
            seed,
        }),
        EvaluatorKind::Toy => Box::new(ToyEvaluator {
            data: toy_dataset(600, 0),
            config: TrainingConfig {
                epochs: 10,
                learning_rate: 0.05,
                batch_size: 32,
                seed,
                ..TrainingConfig::default()
            },
        }),
        EvaluatorKind::External => return Err(PyValueError::new_err("the external evaluator is only available from the CLI")),
    };
    let (state, history) =
        nas::run_search(space.inner.clone(), AcceleratorSpec::default(), config, ev.as_ref()).map_err(err)?;
    Ok(SearchResult {
        labeled: state.labeled.iter().map(Record::from).collect(),
        front: state.front().iter().map(Record::from).collect(),
        population: state.population.len(),
        iterations: state.stats.len(),
        history: history.to_jsonl(),
    })
}

/// Indices of the points not dominated under (max accuracy, min ET).
#[pyfunction]
fn pareto_front(points: Vec<(f64, f64)>) -> Vec<usize> {
    nas::pareto_indices(&points)
}

#[pyfunction]
fn acc_avg(accuracy: Vec<f64>, exit_ratios: Vec<f64>) -> PyResult<f64> {
    eval::acc_avg(&accuracy, &exit_ratios).map_err(err)
}

#[pyfunction]
fn et_avg(et: Vec<f64>, exit_ratios: Vec<f64>) -> PyResult<f64> {
    eenas_core::hwcost::et_avg(&et, &exit_ratios).map_err(err)
}

#[pyfunction]
fn mac_reduction(exit_ratios: Vec<f64>, cumulative_macs: Vec<u64>, static_macs: u64) -> PyResult<f64> {
    nas::mac_reduction(&exit_ratios, &cumulative_macs, static_macs).map_err(err)
}

/// Symmetric floor quantization of each value.
#[pyfunction]
fn quantize(values: Vec<f64>, clip: f64, bits: u8) -> PyResult<Vec<f64>> {
    let p = QuantParams::new(clip, bits).map_err(err)?;
    Ok(quant::fake_quant_forward(&values, &p))
}

#[pyfunction]
fn scale_factor(clip: f64, bits: u8) -> PyResult<f64> {
    quant::scale_factor(clip, bits).map_err(err)
}

#[pyfunction]
fn search_space_size(h: u64, p: u64, q: u64) -> PyResult<u64> {
    arch::search_space_size(h, p, q).map_err(err)
}

#[pymodule]
fn eenas(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SearchSpace>()?;
    m.add_class::<Record>()?;
    m.add_class::<SearchResult>()?;
    m.add_function(wrap_pyfunction!(run_search, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_front, m)?)?;
    m.add_function(wrap_pyfunction!(acc_avg, m)?)?;
    m.add_function(wrap_pyfunction!(et_avg, m)?)?;
    m.add_function(wrap_pyfunction!(mac_reduction, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(scale_factor, m)?)?;
    m.add_function(wrap_pyfunction!(search_space_size, m)?)?;
    Ok(())
}
