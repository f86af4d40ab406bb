//! C ABI for the blackwell-rl toolkit.
//!
//! Conventions: every fallible function returns a [`BrlStatus`] and writes
//! results through out-pointers; objects cross the boundary as opaque
//! handles that must be released with their matching `*_free` function.
//! On any non-OK status, `brl_last_error` retrieves a human-readable
//! message for the calling thread. No function panics across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use blackwell_rl::envs::{greedy_path_length, to_mdp, GridWorldSpec};
use blackwell_rl::harness::{run_single, AlgorithmConfig, EnvironmentConfig, ExperimentConfig};
use blackwell_rl::learner::EpisodeLog;
use blackwell_rl::mdp::{self, argmax, value_iteration, MdpModel, Policy, QTable};
use blackwell_rl::planner::blackwell_value_iteration;
use blackwell_rl::Error;

/// Status code of every fallible API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrlStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Arguments failed validation (bad sizes, unknown names, ...).
    InvalidArgument = 3,
    /// File could not be read or written.
    Io = 4,
    /// The computation failed numerically.
    Numerical = 5,
    /// An output buffer was too small.
    BufferTooSmall = 6,
    /// Internal failure (a bug; details via brl_last_error).
    Internal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> BrlStatus {
    match err {
        Error::Io(_) => BrlStatus::Io,
        Error::Numerical(_) | Error::NonFiniteIterate { .. } => BrlStatus::Numerical,
        _ => BrlStatus::InvalidArgument,
    }
}

fn fail(err: &Error) -> BrlStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn null_argument(what: &str) -> BrlStatus {
    set_error(&format!("null argument: {what}"));
    BrlStatus::NullArgument
}

/// Runs a closure, converting panics into `Internal` instead of unwinding
/// across the ABI.
fn guarded<F: FnOnce() -> BrlStatus>(f: F) -> BrlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            BrlStatus::Internal
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, BrlStatus> {
    if ptr.is_null() {
        return Err(null_argument(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        BrlStatus::InvalidUtf8
    })
}

fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> BrlStatus {
    if buf.is_null() {
        return null_argument("buf");
    }
    if len < values.len() {
        set_error(&format!(
            "buffer holds {len} values, {} required",
            values.len()
        ));
        return BrlStatus::BufferTooSmall;
    }
    unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len()) };
    BrlStatus::Ok
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> BrlStatus {
    if out.is_null() {
        return null_argument("out");
    }
    *out = Box::into_raw(Box::new(value));
    BrlStatus::Ok
}

/// Copies the last error message of this thread into `buf` (truncated,
/// always NUL-terminated) and returns the full message length in bytes.
/// Call with a null `buf` to query the required capacity.
///
/// # Safety
/// `buf` must be null or point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn brl_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn brl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ── MDP handles ─────────────────────────────────────────────────────────

/// Opaque finite MDP model.
pub struct BrlMdp {
    model: MdpModel,
}

/// Loads an MDP from its text-file form.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn brl_mdp_load(path: *const c_char, out: *mut *mut BrlMdp) -> BrlStatus {
    guarded(|| {
        let path = match cstr_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match mdp::io::load_mdp(Path::new(path)) {
            Ok(model) => write_handle(out, BrlMdp { model }),
            Err(e) => fail(&e),
        }
    })
}

/// Writes an MDP to its text-file form.
///
/// # Safety
/// `mdp` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn brl_mdp_save(mdp: *const BrlMdp, path: *const c_char) -> BrlStatus {
    guarded(|| {
        let Some(handle) = mdp.as_ref() else {
            return null_argument("mdp");
        };
        let path = match cstr_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match mdp::io::save_mdp(Path::new(path), &handle.model) {
            Ok(()) => BrlStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

/// Builds a dense random MDP, reproducible from `seed`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn brl_mdp_random(
    num_states: usize,
    num_actions: usize,
    discount: f64,
    seed: u64,
    out: *mut *mut BrlMdp,
) -> BrlStatus {
    guarded(
        || match blackwell_rl::envs::random_mdp(num_states, num_actions, discount, seed) {
            Ok(model) => write_handle(out, BrlMdp { model }),
            Err(e) => fail(&e),
        },
    )
}

/// The canonical 4x12 cliff-walking gridworld as an MDP (absorbing
/// terminal state appended).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn brl_mdp_cliff(discount: f64, out: *mut *mut BrlMdp) -> BrlStatus {
    guarded(|| match to_mdp(&GridWorldSpec::cliff_walking(), discount) {
        Ok(model) => write_handle(out, BrlMdp { model }),
        Err(e) => fail(&e),
    })
}

/// Number of states (0 on a null handle).
///
/// # Safety
/// `mdp` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn brl_mdp_num_states(mdp: *const BrlMdp) -> usize {
    unsafe { mdp.as_ref() }.map_or(0, |h| h.model.num_states())
}

/// Number of actions (0 on a null handle).
///
/// # Safety
/// `mdp` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn brl_mdp_num_actions(mdp: *const BrlMdp) -> usize {
    unsafe { mdp.as_ref() }.map_or(0, |h| h.model.num_actions())
}

/// Discount factor (NaN on a null handle).
///
/// # Safety
/// `mdp` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn brl_mdp_discount(mdp: *const BrlMdp) -> f64 {
    unsafe { mdp.as_ref() }.map_or(f64::NAN, |h| h.model.discount())
}

/// Releases an MDP handle; null is a no-op.
///
/// # Safety
/// `mdp` must have been returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn brl_mdp_free(mdp: *mut BrlMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

// ── Planning ────────────────────────────────────────────────────────────

/// Opaque planning result: a Q table and its greedy/regret-matched policy.
pub struct BrlPlan {
    qtable: QTable,
    policy: Policy,
    iterations: usize,
    converged: bool,
}

/// Classic Bellman-optimality iteration to `tolerance` (or `max_iters`).
///
/// # Safety
/// `mdp` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn brl_plan_value_iteration(
    mdp: *const BrlMdp,
    tolerance: f64,
    max_iters: usize,
    out: *mut *mut BrlPlan,
) -> BrlStatus {
    guarded(|| {
        let Some(handle) = mdp.as_ref() else {
            return null_argument("mdp");
        };
        match value_iteration(&handle.model, tolerance, max_iters) {
            Ok(outcome) => write_handle(
                out,
                BrlPlan {
                    qtable: outcome.qstar,
                    policy: outcome.greedy,
                    iterations: outcome.iterations,
                    converged: outcome.converged,
                },
            ),
            Err(e) => fail(&e),
        }
    })
}

/// Blackwell value iteration for exactly `iters` steps from the zero /
/// uniform start; the returned Q table is the running average.
///
/// # Safety
/// `mdp` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn brl_plan_blackwell(
    mdp: *const BrlMdp,
    iters: usize,
    out: *mut *mut BrlPlan,
) -> BrlStatus {
    guarded(|| {
        let Some(handle) = mdp.as_ref() else {
            return null_argument("mdp");
        };
        let model = &handle.model;
        let start_q = QTable::zeros(model.num_states(), model.num_actions());
        let start_pi = Policy::uniform(model.num_states(), model.num_actions());
        match blackwell_value_iteration(model, iters, start_q, start_pi) {
            Ok(run) => write_handle(
                out,
                BrlPlan {
                    qtable: run.qbar,
                    policy: run.policy,
                    iterations: iters,
                    converged: true,
                },
            ),
            Err(e) => fail(&e),
        }
    })
}

/// Iterations actually performed.
///
/// # Safety
/// `plan` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn brl_plan_iterations(plan: *const BrlPlan) -> usize {
    unsafe { plan.as_ref() }.map_or(0, |p| p.iterations)
}

/// Whether the tolerance was reached (always true for the Blackwell
/// planner, which runs a fixed budget).
///
/// # Safety
/// `plan` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn brl_plan_converged(plan: *const BrlPlan) -> bool {
    unsafe { plan.as_ref() }.is_some_and(|p| p.converged)
}

/// Copies the Q table (row-major `num_states * num_actions`) into `buf`.
///
/// # Safety
/// `plan` must be a live handle; `buf` must hold at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn brl_plan_q(plan: *const BrlPlan, buf: *mut f64, len: usize) -> BrlStatus {
    guarded(|| {
        let Some(p) = plan.as_ref() else {
            return null_argument("plan");
        };
        copy_out(p.qtable.values(), buf, len)
    })
}

/// Greedy action of the plan's policy at `state`.
///
/// # Safety
/// `plan` must be a live handle; `out_action` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn brl_plan_greedy_action(
    plan: *const BrlPlan,
    state: usize,
    out_action: *mut usize,
) -> BrlStatus {
    guarded(|| {
        let Some(p) = plan.as_ref() else {
            return null_argument("plan");
        };
        if out_action.is_null() {
            return null_argument("out_action");
        }
        if state >= p.policy.num_states() {
            set_error(&format!("state {state} out of range"));
            return BrlStatus::InvalidArgument;
        }
        *out_action = argmax(p.policy.row(state));
        BrlStatus::Ok
    })
}

/// Releases a plan handle; null is a no-op.
///
/// # Safety
/// `plan` must have been returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn brl_plan_free(plan: *mut BrlPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

// ── Online learning ─────────────────────────────────────────────────────

/// Opaque learning result: final Q table and the per-episode log.
pub struct BrlLearn {
    qtable: QTable,
    log: EpisodeLog,
    grid: GridWorldSpec,
}

/// Runs one learner on the canonical cliff-walking task. `algo` is one of
/// `blackwell-q`, `q-learning`, `sarsa`, `expected-sarsa`; seeding matches
/// the CLI (`run i` of the harness with `base_seed = seed`, run id 0), so
/// results are reproducible across bindings.
///
/// # Safety
/// `algo` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn brl_learn_cliff(
    algo: *const c_char,
    episodes: usize,
    seed: u64,
    out: *mut *mut BrlLearn,
) -> BrlStatus {
    guarded(|| {
        let algo = match cstr_arg(algo, "algo") {
            Ok(a) => a,
            Err(status) => return status,
        };
        let grid = GridWorldSpec::cliff_walking();
        let config = ExperimentConfig {
            episodes,
            runs: 1,
            base_seed: seed,
            discount: None,
            max_steps_per_episode: 10_000,
            out: None,
            environment: EnvironmentConfig::Cliff { grid: grid.clone() },
            algorithms: vec![AlgorithmConfig::named(algo)],
        };
        if let Err(e) = config.validate() {
            return fail(&e);
        }
        match run_single(&config, &config.algorithms[0], 0) {
            Ok((log, qtable)) => write_handle(out, BrlLearn { qtable, log, grid }),
            Err(e) => fail(&e),
        }
    })
}

/// Number of completed episodes.
///
/// # Safety
/// `learn` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn brl_learn_num_episodes(learn: *const BrlLearn) -> usize {
    unsafe { learn.as_ref() }.map_or(0, |l| l.log.episodes.len())
}

/// Return of one episode.
///
/// # Safety
/// `learn` must be a live handle; `out_return` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn brl_learn_episode_return(
    learn: *const BrlLearn,
    episode: usize,
    out_return: *mut f64,
) -> BrlStatus {
    guarded(|| {
        let Some(l) = learn.as_ref() else {
            return null_argument("learn");
        };
        if out_return.is_null() {
            return null_argument("out_return");
        }
        match l.log.episodes.get(episode) {
            Some(stats) => {
                *out_return = stats.total_return;
                BrlStatus::Ok
            }
            None => {
                set_error(&format!("episode {episode} out of range"));
                BrlStatus::InvalidArgument
            }
        }
    })
}

/// Copies the learned Q table (row-major) into `buf`.
///
/// # Safety
/// `learn` must be a live handle; `buf` must hold at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn brl_learn_q(
    learn: *const BrlLearn,
    buf: *mut f64,
    len: usize,
) -> BrlStatus {
    guarded(|| {
        let Some(l) = learn.as_ref() else {
            return null_argument("learn");
        };
        copy_out(l.qtable.values(), buf, len)
    })
}

/// Steps the greedy policy of the learned Q table takes to reach the goal
/// from the start; writes false to `out_reached` if it fails within 10000
/// steps.
///
/// # Safety
/// `learn` must be a live handle; both out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn brl_learn_greedy_path(
    learn: *const BrlLearn,
    out_reached: *mut bool,
    out_steps: *mut usize,
) -> BrlStatus {
    guarded(|| {
        let Some(l) = learn.as_ref() else {
            return null_argument("learn");
        };
        if out_reached.is_null() || out_steps.is_null() {
            return null_argument("out_reached/out_steps");
        }
        match greedy_path_length(&l.grid, &l.qtable, 10_000) {
            Some(steps) => {
                *out_reached = true;
                *out_steps = steps;
            }
            None => {
                *out_reached = false;
                *out_steps = 0;
            }
        }
        BrlStatus::Ok
    })
}

/// Releases a learn handle; null is a no-op.
///
/// # Safety
/// `learn` must have been returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn brl_learn_free(learn: *mut BrlLearn) {
    if !learn.is_null() {
        drop(Box::from_raw(learn));
    }
}
