//! C interface to the `dnlmm` library.
//!
//! Fallible functions return a [`DnlmmStatus`]. Objects are opaque handles
//! written to an out-pointer by their constructor and released with the
//! matching `*_free`. On failure the message is kept per thread and can be read with
//! [`dnlmm_last_error_message`]. Panics are caught at the boundary and
//! reported as [`DnlmmStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dnlmm::harness::{preset, run_experiment, run_theory, ExperimentConfig, ResultSet, TheoryOverlay};
use dnlmm::network::{build_topology, metropolis_weights, CombinationMatrix, Topology, TopologySpec};
use dnlmm::Error;

/// Result codes shared by all entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DnlmmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    Capability = 4,
    Instability = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
    BufferTooSmall = 9,
}

/// Network graph.
pub struct DnlmmTopology(Topology);

/// Column-stochastic combination weights.
pub struct DnlmmCombination(CombinationMatrix);

/// Experiment configuration.
pub struct DnlmmExperiment(ExperimentConfig);

/// Monte Carlo results of one experiment run.
pub struct DnlmmResults(ResultSet);

/// Analytical curves, one entry per configured algorithm.
pub struct DnlmmTheory(Vec<std::result::Result<TheoryOverlay, String>>);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(DnlmmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn status_of(e: &Error) -> DnlmmStatus {
    match e {
        Error::Trial { source, .. } => status_of(source),
        Error::InvalidArgument(_) => DnlmmStatus::InvalidArgument,
        Error::Validation(_) => DnlmmStatus::Validation,
        Error::Capability(_) => DnlmmStatus::Capability,
        Error::Instability(_) => DnlmmStatus::Instability,
        Error::Io(_) => DnlmmStatus::Io,
        Error::Json(_) | Error::Toml(_) => DnlmmStatus::Parse,
    }
}

impl Failure {
    fn null(what: &str) -> Self {
        Failure(DnlmmStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(msg: impl Into<String>) -> Self {
        Failure(DnlmmStatus::InvalidArgument, msg.into())
    }
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

/// Run `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> DnlmmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            DnlmmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DnlmmStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn out<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn boxed<T>(p: *mut *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    p.write(Box::into_raw(Box::new(value)));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Copy `values` into a caller buffer of `capacity` doubles. `written` (if
/// not null) always receives the required length.
unsafe fn copy_out(values: &[f64], buf: *mut f64, capacity: usize, written: *mut usize) -> Result<(), Failure> {
    if !written.is_null() {
        written.write(values.len());
    }
    if capacity < values.len() {
        return Err(Failure(
            DnlmmStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", values.len()),
        ));
    }
    if buf.is_null() {
        return Err(Failure::null("buffer"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// Copy `s` as a NUL-terminated string. `needed` (if not null) receives the
/// size including the terminator.
unsafe fn copy_str(s: &str, buf: *mut c_char, capacity: usize, needed: *mut usize) -> Result<(), Failure> {
    let len = s.len() + 1;
    if !needed.is_null() {
        needed.write(len);
    }
    if capacity < len {
        return Err(Failure(
            DnlmmStatus::BufferTooSmall,
            format!("buffer holds {capacity} bytes, {len} needed"),
        ));
    }
    if buf.is_null() {
        return Err(Failure::null("buffer"));
    }
    ptr::copy_nonoverlapping(s.as_ptr().cast::<c_char>(), buf, s.len());
    buf.add(s.len()).write(0);
    Ok(())
}

/// Message of the last failed call on this thread, NUL-terminated. Returns
/// the size needed including the terminator; copies only when it fits.
///
/// # Safety
/// `buf` must be null or point to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_last_error_message(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let len = e.len() + 1;
        if !buf.is_null() && capacity >= len {
            ptr::copy_nonoverlapping(e.as_ptr().cast::<c_char>(), buf, e.len());
            buf.add(e.len()).write(0);
        }
        len
    })
}

/// Random geometric graph on the unit square, retried until connected.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_topology_random_geometric(
    nodes: usize,
    seed: u64,
    radius: f64,
    out: *mut *mut DnlmmTopology,
) -> DnlmmStatus {
    guard(|| {
        let t = build_topology(&TopologySpec::random_geometric(nodes, seed, radius))?;
        boxed(out, DnlmmTopology(t), "out")
    })
}

/// Ring in which every node links to its two neighbours.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_topology_ring(nodes: usize, out: *mut *mut DnlmmTopology) -> DnlmmStatus {
    guard(|| {
        let t = build_topology(&TopologySpec::ring(nodes))?;
        boxed(out, DnlmmTopology(t), "out")
    })
}

/// # Safety
/// `topology` must be a live handle; `nodes` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_topology_node_count(topology: *const DnlmmTopology, nodes: *mut usize) -> DnlmmStatus {
    guard(|| out(nodes, deref(topology, "topology")?.0.node_count(), "nodes"))
}

/// Degree of node `k`, counting the node itself.
///
/// # Safety
/// `topology` must be a live handle; `degree` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_topology_degree(
    topology: *const DnlmmTopology,
    k: usize,
    degree: *mut usize,
) -> DnlmmStatus {
    guard(|| {
        let t = &deref(topology, "topology")?.0;
        if k >= t.node_count() {
            return Err(Failure::invalid(format!("node {k} out of range")));
        }
        out(degree, t.degree(k), "degree")
    })
}

/// # Safety
/// `topology` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_topology_free(topology: *mut DnlmmTopology) {
    release(topology);
}

/// Metropolis weights for `topology`.
///
/// # Safety
/// `topology` must be a live handle; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_combination_metropolis(
    topology: *const DnlmmTopology,
    out: *mut *mut DnlmmCombination,
) -> DnlmmStatus {
    guard(|| {
        let c = metropolis_weights(&deref(topology, "topology")?.0);
        boxed(out, DnlmmCombination(c), "out")
    })
}

/// Weight `c_{m,k}` that node `k` gives to node `m`.
///
/// # Safety
/// `combination` must be a live handle; `weight` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_combination_weight(
    combination: *const DnlmmCombination,
    m: usize,
    k: usize,
    weight: *mut f64,
) -> DnlmmStatus {
    guard(|| {
        let c = &deref(combination, "combination")?.0;
        let n = c.node_count();
        if m >= n || k >= n {
            return Err(Failure::invalid(format!("index ({m}, {k}) out of range for {n} nodes")));
        }
        out(weight, c.weight(m, k), "weight")
    })
}

/// # Safety
/// `combination` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_combination_free(combination: *mut DnlmmCombination) {
    release(combination);
}

/// Parse and validate a JSON experiment configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_experiment_from_json(
    json: *const c_char,
    out: *mut *mut DnlmmExperiment,
) -> DnlmmStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(text(json, "json")?)?;
        cfg.validate()?;
        boxed(out, DnlmmExperiment(cfg), "out")
    })
}

/// Built-in experiment by name.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_experiment_preset(name: *const c_char, out: *mut *mut DnlmmExperiment) -> DnlmmStatus {
    guard(|| {
        let cfg = preset(text(name, "name")?)?;
        boxed(out, DnlmmExperiment(cfg), "out")
    })
}

/// Override the trial and iteration counts; zero leaves a value unchanged.
///
/// # Safety
/// `experiment` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_experiment_set_run_length(
    experiment: *mut DnlmmExperiment,
    trials: usize,
    iterations: usize,
) -> DnlmmStatus {
    guard(|| {
        let run = &mut deref_mut(experiment, "experiment")?.0.run;
        if trials > 0 {
            run.trials = trials;
        }
        if iterations > 0 {
            run.iterations = iterations;
            run.steady_window = run.steady_window.min(iterations);
        }
        Ok(())
    })
}

/// Serialize the configuration as JSON into `buf`.
///
/// # Safety
/// `experiment` must be a live handle; `buf` null or `capacity` bytes;
/// `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_experiment_to_json(
    experiment: *const DnlmmExperiment,
    buf: *mut c_char,
    capacity: usize,
    needed: *mut usize,
) -> DnlmmStatus {
    guard(|| {
        let json = deref(experiment, "experiment")?.0.to_json()?;
        copy_str(&json, buf, capacity, needed)
    })
}

/// Run the Monte Carlo simulation.
///
/// # Safety
/// `experiment` must be a live handle; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_experiment_run(
    experiment: *const DnlmmExperiment,
    out: *mut *mut DnlmmResults,
) -> DnlmmStatus {
    guard(|| {
        let r = run_experiment(&deref(experiment, "experiment")?.0)?;
        boxed(out, DnlmmResults(r), "out")
    })
}

/// Evaluate the analytical model for every algorithm.
///
/// # Safety
/// `experiment` must be a live handle; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_experiment_theory(
    experiment: *const DnlmmExperiment,
    out: *mut *mut DnlmmTheory,
) -> DnlmmStatus {
    guard(|| {
        let overlays = run_theory(&deref(experiment, "experiment")?.0)?
            .into_iter()
            .map(|(_, o)| o)
            .collect();
        boxed(out, DnlmmTheory(overlays), "out")
    })
}

/// # Safety
/// `experiment` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_experiment_free(experiment: *mut DnlmmExperiment) {
    release(experiment);
}

fn algorithm(r: &ResultSet, index: usize) -> Result<&dnlmm::harness::AlgorithmResult, Failure> {
    r.algorithms
        .get(index)
        .ok_or_else(|| Failure::invalid(format!("algorithm {index} out of range")))
}

/// # Safety
/// `results` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_results_algorithm_count(results: *const DnlmmResults, count: *mut usize) -> DnlmmStatus {
    guard(|| out(count, deref(results, "results")?.0.algorithms.len(), "count"))
}

/// Label of algorithm `index` as a NUL-terminated string.
///
/// # Safety
/// `results` must be a live handle; `buf` null or `capacity` bytes;
/// `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_results_label(
    results: *const DnlmmResults,
    index: usize,
    buf: *mut c_char,
    capacity: usize,
    needed: *mut usize,
) -> DnlmmStatus {
    guard(|| {
        let a = algorithm(&deref(results, "results")?.0, index)?;
        copy_str(&a.label, buf, capacity, needed)
    })
}

/// Trial-averaged network MSD in dB, one value per iteration.
///
/// # Safety
/// `results` must be a live handle; `buf` null or `capacity` doubles;
/// `written` null or writable.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_results_msd_db(
    results: *const DnlmmResults,
    index: usize,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> DnlmmStatus {
    guard(|| {
        let a = algorithm(&deref(results, "results")?.0, index)?;
        copy_out(&a.msd_db, buf, capacity, written)
    })
}

/// Steady-state network MSD in dB and the number of diverged trials.
///
/// # Safety
/// `results` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_results_summary(
    results: *const DnlmmResults,
    index: usize,
    steady_msd_db: *mut f64,
    diverged_trials: *mut usize,
) -> DnlmmStatus {
    guard(|| {
        let a = algorithm(&deref(results, "results")?.0, index)?;
        out(steady_msd_db, a.steady_msd_db, "steady_msd_db")?;
        out(diverged_trials, a.diverged_trials, "diverged_trials")
    })
}

/// # Safety
/// `results` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_results_free(results: *mut DnlmmResults) {
    release(results);
}

fn overlay(t: &DnlmmTheory, index: usize) -> Result<&TheoryOverlay, Failure> {
    match t.0.get(index) {
        None => Err(Failure::invalid(format!("algorithm {index} out of range"))),
        Some(Ok(o)) => Ok(o),
        Some(Err(msg)) => Err(Failure(DnlmmStatus::Capability, msg.clone())),
    }
}

/// Model network MSD in dB, one value per iteration. Fails with
/// `Capability` when the model does not cover algorithm `index`.
///
/// # Safety
/// `theory` must be a live handle; `buf` null or `capacity` doubles;
/// `written` null or writable.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_theory_msd_db(
    theory: *const DnlmmTheory,
    index: usize,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> DnlmmStatus {
    guard(|| {
        let o = overlay(deref(theory, "theory")?, index)?;
        copy_out(&o.network_msd_db, buf, capacity, written)
    })
}

/// Closed-form steady-state network MSD in dB and the spectral radius of
/// the mean-square transition operator.
///
/// # Safety
/// `theory` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_theory_summary(
    theory: *const DnlmmTheory,
    index: usize,
    steady_msd_db: *mut f64,
    spectral_radius: *mut f64,
) -> DnlmmStatus {
    guard(|| {
        let o = overlay(deref(theory, "theory")?, index)?;
        let steady = o.report.steady_network_msd_db.ok_or_else(|| {
            Failure(
                DnlmmStatus::Instability,
                o.report
                    .steady_error
                    .clone()
                    .unwrap_or_else(|| "no steady state".into()),
            )
        })?;
        out(steady_msd_db, steady, "steady_msd_db")?;
        out(spectral_radius, o.report.spectral_radius, "spectral_radius")
    })
}

/// # Safety
/// `theory` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dnlmm_theory_free(theory: *mut DnlmmTheory) {
    release(theory);
}
