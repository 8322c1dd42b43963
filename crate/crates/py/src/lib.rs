//! Python bindings: tape-based tensors with backward, the GAN losses, the
//! toy data/augmentation pipeline, the linear SVM and exact t-SNE.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ganaug_core::classify;
use ganaug_core::data;
use ganaug_core::embed;
use ganaug_core::error::Error;
use ganaug_core::experiment;
use ganaug_core::ganloss;
use ganaug_core::tensor;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Training { .. } | Error::Numerical(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Differentiation tape; all tensors created through one tape share a graph.
#[pyclass(unsendable)]
struct Tape {
    inner: tensor::Tape,
}

#[pymethods]
impl Tape {
    #[new]
    fn new() -> Self {
        Self {
            inner: tensor::Tape::new(),
        }
    }

    /// New tensor from a shape and flat row-major data.
    #[pyo3(signature = (shape, data, requires_grad = false))]
    fn tensor(&self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> PyResult<Tensor> {
        let value = tensor::Value::new(shape, data).map_err(to_py_err)?;
        Ok(Tensor {
            inner: self.inner.leaf(value, requires_grad),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Tape-bound tensor handle.
#[pyclass(unsendable)]
#[derive(Clone)]
struct Tensor {
    inner: tensor::Tensor,
}

#[pymethods]
impl Tensor {
    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn item(&self) -> PyResult<f64> {
        self.inner.item().map_err(to_py_err)
    }

    fn matmul(&self, other: &Tensor) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.matmul(&other.inner).map_err(to_py_err)?,
        })
    }

    fn add(&self, other: &Tensor) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.add(&other.inner).map_err(to_py_err)?,
        })
    }

    fn sub(&self, other: &Tensor) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.sub(&other.inner).map_err(to_py_err)?,
        })
    }

    fn mul(&self, other: &Tensor) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.mul(&other.inner).map_err(to_py_err)?,
        })
    }

    fn relu(&self) -> Tensor {
        Tensor { inner: self.inner.relu() }
    }

    fn tanh(&self) -> Tensor {
        Tensor { inner: self.inner.tanh() }
    }

    fn sigmoid(&self) -> Tensor {
        Tensor { inner: self.inner.sigmoid() }
    }

    fn square(&self) -> Tensor {
        Tensor { inner: self.inner.square() }
    }

    fn mean(&self) -> Tensor {
        Tensor { inner: self.inner.mean() }
    }

    fn sum(&self) -> Tensor {
        Tensor { inner: self.inner.sum_all() }
    }

    fn l1(&self) -> Tensor {
        Tensor { inner: self.inner.l1() }
    }

    /// Gradients of this scalar w.r.t. every listed tensor.
    fn backward(&self, wrt: Vec<PyRef<'_, Tensor>>) -> PyResult<Vec<Vec<f64>>> {
        let grads = self.inner.backward().map_err(to_py_err)?;
        Ok(wrt
            .iter()
            .map(|t| grads.get(&t.inner).data().to_vec())
            .collect())
    }
}

/// E[(D(real)−1)²] + E[D(fake)²] on raw scores.
#[pyfunction]
fn lsgan_d_loss(real: Vec<f64>, fake: Vec<f64>) -> PyResult<f64> {
    let tape = tensor::Tape::new();
    let scores = ganloss::BatchScores {
        real_scores: tape.constant(tensor::Value::new(vec![real.len()], real).map_err(to_py_err)?),
        fake_scores: tape.constant(tensor::Value::new(vec![fake.len()], fake).map_err(to_py_err)?),
    };
    ganloss::lsgan_d_loss(&scores)
        .and_then(|t| t.item())
        .map_err(to_py_err)
}

/// E[(D(fake)−1)²] on raw scores.
#[pyfunction]
fn lsgan_g_loss(fake: Vec<f64>) -> PyResult<f64> {
    let tape = tensor::Tape::new();
    let fake = tape.constant(tensor::Value::new(vec![fake.len()], fake).map_err(to_py_err)?);
    ganloss::lsgan_g_loss(&fake).item().map_err(to_py_err)
}

/// Mean per-sample L1 reconstruction penalty over both domains.
#[pyfunction]
fn cycle_loss(
    originals_r: Vec<Vec<f64>>,
    reconstructed_r: Vec<Vec<f64>>,
    originals_t: Vec<Vec<f64>>,
    reconstructed_t: Vec<Vec<f64>>,
) -> PyResult<f64> {
    let tape = tensor::Tape::new();
    let rows = |rows: &[Vec<f64>]| -> PyResult<tensor::Tensor> {
        Ok(tape.constant(tensor::Value::from_rows(rows).map_err(to_py_err)?))
    };
    let batch = ganloss::CycleBatch {
        originals_r: rows(&originals_r)?,
        reconstructed_r: rows(&reconstructed_r)?,
        originals_t: rows(&originals_t)?,
        reconstructed_t: rows(&reconstructed_t)?,
    };
    ganloss::cycle_loss(&batch)
        .and_then(|t| t.item())
        .map_err(to_py_err)
}

type SplitSets = (Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>, Vec<usize>);

/// Draw the imbalanced three-Gaussian toy sets; returns
/// (train_features, train_labels, test_features, test_labels).
#[pyfunction]
fn sample_toy_data(seed: u64) -> PyResult<SplitSets> {
    let (train, test) =
        data::sample_gaussians(&data::GaussianSpec::default(), seed).map_err(to_py_err)?;
    let rows = |set: &data::LabeledSet| -> Vec<Vec<f64>> {
        (0..set.len()).map(|i| set.row(i).to_vec()).collect()
    };
    Ok((
        rows(&train),
        train.labels().to_vec(),
        rows(&test),
        test.labels().to_vec(),
    ))
}

/// One-vs-rest linear SVM: train on (features, labels), return predictions
/// for the query rows.
#[pyfunction]
#[pyo3(signature = (features, labels, num_classes, query, reg_lambda = 1e-3, epochs = 30, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn svm_train_predict(
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    query: Vec<Vec<f64>>,
    reg_lambda: f64,
    epochs: usize,
    seed: u64,
) -> PyResult<Vec<usize>> {
    let dim = features.first().map(|r| r.len()).unwrap_or(0);
    let flat: Vec<f64> = features.into_iter().flatten().collect();
    let set = data::LabeledSet::new(flat, dim, labels, num_classes).map_err(to_py_err)?;
    let model = classify::svm_train(&set, reg_lambda, epochs, seed).map_err(to_py_err)?;
    let query = tensor::Value::from_rows(&query).map_err(to_py_err)?;
    classify::svm_predict(&model, &query).map_err(to_py_err)
}

/// Exact t-SNE to 2-D; returns (coordinates, initial_kl, final_kl).
#[pyfunction]
#[pyo3(signature = (features, perplexity = 30.0, iterations = 500, seed = 0))]
fn tsne(
    features: Vec<Vec<f64>>,
    perplexity: f64,
    iterations: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, f64, f64)> {
    let n = features.len();
    let value = tensor::Value::from_rows(&features).map_err(to_py_err)?;
    let labels = vec![0usize; n];
    let config = embed::EmbedConfig {
        perplexity,
        iterations,
        exaggeration_iters: iterations / 4,
        momentum_switch: iterations / 4,
        seed,
        ..embed::EmbedConfig::default()
    };
    let emb = embed::tsne_run(&value, &labels, &config).map_err(to_py_err)?;
    let coords = emb
        .coordinates
        .data()
        .chunks_exact(2)
        .map(|c| c.to_vec())
        .collect();
    Ok((coords, emb.initial_kl, emb.final_kl))
}

/// Full toy experiment into `out_dir`; returns a summary dict.
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 1, cyclegan_steps = None))]
fn run_toy_experiment(
    py: Python<'_>,
    out_dir: String,
    seed: u64,
    cyclegan_steps: Option<usize>,
) -> PyResult<Py<PyDict>> {
    let mut config = experiment::ExperimentConfig {
        seed,
        output_dir: out_dir,
        ..experiment::ExperimentConfig::default()
    };
    if let Some(steps) = cyclegan_steps {
        config.cyclegan.steps = steps;
    }
    let report = experiment::run_toy(&config).map_err(to_py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("seed", report.seed)?;
    dict.set_item("histogram_before", report.histogram_before.clone())?;
    dict.set_item("histogram_after", report.histogram_after.clone())?;
    if let Some(b) = &report.baseline {
        dict.set_item("baseline_accuracy", b.overall)?;
    }
    if let Some(a) = &report.augmented {
        dict.set_item("augmented_accuracy", a.overall)?;
    }
    dict.set_item("files", report.referenced_files())?;
    Ok(dict.into())
}

#[pymodule]
fn ganaug_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tape>()?;
    m.add_class::<Tensor>()?;
    m.add_function(wrap_pyfunction!(lsgan_d_loss, m)?)?;
    m.add_function(wrap_pyfunction!(lsgan_g_loss, m)?)?;
    m.add_function(wrap_pyfunction!(cycle_loss, m)?)?;
    m.add_function(wrap_pyfunction!(sample_toy_data, m)?)?;
    m.add_function(wrap_pyfunction!(svm_train_predict, m)?)?;
    m.add_function(wrap_pyfunction!(tsne, m)?)?;
    m.add_function(wrap_pyfunction!(run_toy_experiment, m)?)?;
    Ok(())
}
