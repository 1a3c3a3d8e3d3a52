use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;

use uma_rfid::channel::ScenarioScript;
use uma_rfid::harness::{self, Experiment, OutputFormat, TrialConfig};
use uma_rfid::protocol::{self as proto, PairState, ReaderState, TagState};
use uma_rfid::seed::TrialRng;
use uma_rfid::word;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Fixed-width bit vector of 4 to 128 bits.
#[pyclass(name = "Word", frozen, eq, hash, skip_from_py_object)]
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct PyWord(word::Word);

#[pymethods]
impl PyWord {
    #[new]
    fn new(value: u128, length: u32) -> PyResult<Self> {
        word::Word::new(value, length).map(PyWord).map_err(value_err)
    }

    #[staticmethod]
    fn from_hex(text: &str) -> PyResult<Self> {
        word::Word::from_hex(text).map(PyWord).map_err(value_err)
    }

    #[staticmethod]
    fn random(length: u32, seed: u64) -> PyResult<Self> {
        word::validate_len(length).map_err(value_err)?;
        Ok(PyWord(word::Word::random(length, &mut TrialRng::seed_from_u64(seed))))
    }

    #[getter]
    fn value(&self) -> u128 {
        self.0.value()
    }

    fn __len__(&self) -> usize {
        self.0.len() as usize
    }

    fn hex(&self) -> String {
        self.0.to_hex()
    }

    fn hamming_weight(&self) -> u32 {
        self.0.hamming_weight()
    }

    fn rotate_left(&self, n: u32) -> Self {
        PyWord(self.0.rotate_left(n))
    }

    /// Left rotation by the Hamming weight of `by`.
    fn rot(&self, by: &PyWord) -> PyResult<Self> {
        self.0.try_rot(&by.0).map(PyWord).map_err(value_err)
    }

    fn __xor__(&self, other: &PyWord) -> PyResult<Self> {
        self.binop(other, word::BitOp::Xor)
    }

    fn __or__(&self, other: &PyWord) -> PyResult<Self> {
        self.binop(other, word::BitOp::Or)
    }

    fn __and__(&self, other: &PyWord) -> PyResult<Self> {
        self.binop(other, word::BitOp::And)
    }

    fn __invert__(&self) -> Self {
        PyWord(!self.0)
    }

    fn __repr__(&self) -> String {
        format!("Word('{}', {})", self.0.to_hex(), self.0.len())
    }

    fn __str__(&self) -> String {
        self.0.to_hex()
    }
}

impl PyWord {
    fn binop(&self, other: &PyWord, op: word::BitOp) -> PyResult<Self> {
        self.0.bitwise(&other.0, op).map(PyWord).map_err(value_err)
    }
}

fn same_len(a: &PyWord, b: &PyWord) -> PyResult<()> {
    if a.0.len() == b.0.len() {
        Ok(())
    } else {
        Err(value_err(word::WordError::LengthMismatch {
            left: a.0.len(),
            right: b.0.len(),
        }))
    }
}

#[pyfunction]
fn compute_a(key: &PyWord, nonce: &PyWord) -> PyResult<PyWord> {
    same_len(key, nonce)?;
    Ok(PyWord(proto::compute_a(&key.0, &nonce.0)))
}

#[pyfunction]
fn compute_b(key: &PyWord, nonce: &PyWord) -> PyResult<PyWord> {
    same_len(key, nonce)?;
    Ok(PyWord(proto::compute_b(&key.0, &nonce.0)))
}

#[pyfunction]
fn compute_c(key: &PyWord, nonce: &PyWord) -> PyResult<PyWord> {
    same_len(key, nonce)?;
    Ok(PyWord(proto::compute_c(&key.0, &nonce.0)))
}

/// `(IDT', K')` after a successful session that used `(idt, key)` with `nonce`.
#[pyfunction]
fn next_pair(idt: &PyWord, key: &PyWord, nonce: &PyWord) -> PyResult<(PyWord, PyWord)> {
    same_len(idt, key)?;
    same_len(key, nonce)?;
    let p = proto::next_pair(&PairState { idt: idt.0, key: key.0 }, &nonce.0);
    Ok((PyWord(p.idt), PyWord(p.key)))
}

#[pyfunction]
fn recover_key(a_n: &PyWord, b_n: &PyWord, idt_next: &PyWord) -> PyResult<PyWord> {
    same_len(a_n, b_n)?;
    same_len(b_n, idt_next)?;
    Ok(PyWord(uma_rfid::attacks::recover_key(&a_n.0, &b_n.0, &idt_next.0)))
}

/// One tag registered with one reader, driven session by session.
#[pyclass]
struct Simulation {
    reader: ReaderState,
    tag: TagState,
    nonces: TrialRng,
    next_session: u64,
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (bits = 128, seed = 0))]
    fn new(bits: u32, seed: u64) -> PyResult<Self> {
        word::validate_len(bits).map_err(value_err)?;
        let tag = TagState::random(bits, &mut TrialRng::seed_from_u64(seed));
        let mut reader = ReaderState::new();
        reader.register(tag.database_entry()).map_err(value_err)?;
        Ok(Simulation {
            reader,
            tag,
            nonces: TrialRng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15),
            next_session: 0,
        })
    }

    /// Runs one session. `script` uses the interception-rule format, e.g.
    /// `"0 C block"`. Returns `(outcome, transcript_lines)`.
    #[pyo3(signature = (script = None))]
    fn session(&mut self, script: Option<&str>) -> PyResult<(String, Vec<String>)> {
        let script = ScenarioScript::parse(script.unwrap_or("")).map_err(value_err)?;
        let s = self.next_session;
        self.next_session += 1;
        let t = proto::run_session(
            &mut self.reader,
            &mut self.tag,
            &mut self.nonces,
            &mut script.channel(),
            s,
        )
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok((
            format!("{:?}", t.outcome),
            t.events.iter().map(|e| e.to_line()).collect(),
        ))
    }

    fn synchronized(&self) -> bool {
        self.reader.is_synchronized_with(&self.tag)
    }

    /// `[ID, IDT, K, IDT_old, K_old]`.
    fn tag_words(&self) -> Vec<PyWord> {
        self.tag.to_words().into_iter().map(PyWord).collect()
    }

    /// `[IDT, K, ID]`.
    fn reader_words(&self) -> Vec<PyWord> {
        self.reader.entries()[0].to_words().into_iter().map(PyWord).collect()
    }
}

/// Runs a named experiment and returns its JSON-lines output; the last
/// line is `{"summary": {...}}`.
#[pyfunction]
#[pyo3(signature = (name, bits = 128, trials = None, seed = 0, workers = 0))]
fn run_experiment(
    py: Python<'_>,
    name: &str,
    bits: u32,
    trials: Option<u64>,
    seed: u64,
    workers: usize,
) -> PyResult<String> {
    let exp = Experiment::from_name(name).map_err(|e| PyKeyError::new_err(e.to_string()))?;
    let mut cfg = TrialConfig::new(exp).with_word_len(bits).with_seed(seed).with_workers(workers);
    if let Some(t) = trials {
        cfg = cfg.with_trials(t);
    }
    let text = py.detach(|| -> Result<String, harness::HarnessError> {
        let out = harness::run_trials(&cfg)?;
        let mut buf = Vec::new();
        harness::write_output(&mut buf, &out, OutputFormat::JsonLines)?;
        Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
    });
    text.map_err(value_err)
}

#[pymodule]
fn uma_rfid_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWord>()?;
    m.add_class::<Simulation>()?;
    m.add_function(wrap_pyfunction!(compute_a, m)?)?;
    m.add_function(wrap_pyfunction!(compute_b, m)?)?;
    m.add_function(wrap_pyfunction!(compute_c, m)?)?;
    m.add_function(wrap_pyfunction!(next_pair, m)?)?;
    m.add_function(wrap_pyfunction!(recover_key, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("EXPERIMENTS", Experiment::NAMES.to_vec())?;
    Ok(())
}
