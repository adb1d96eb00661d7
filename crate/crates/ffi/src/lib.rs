//! C ABI over the `selbayes` library.
//!
//! Every function returns an [`SbStatus`]; on failure the message is kept
//! per thread and can be read with [`sb_last_error_message`]. Matrices are
//! passed column-major. Handles are opaque and must be released with the
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nalgebra::{DMatrix, DVector};

use selbayes::features::{gsva_scores, ExpressionMatrix, GeneSetCollection, GsvaParams};
use selbayes::geometry::{build_geometry, estimate_sigma};
use selbayes::linalg::select_columns;
use selbayes::posterior::{PriorSpec, SelectivePosterior};
use selbayes::rng::{derive_seed, rng_from_seed};
use selbayes::sampler::{selective_infer, SamplerConfig};
use selbayes::selection::{
    default_epsilon, noise_scaled_lambda, outcome_noise_estimate, solve_randomized_lasso, RandomizationSpec,
    SelectionRecord,
};
use selbayes::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Parse = 3,
    Numerical = 4,
    NonConvergence = 5,
    SamplerAbort = 6,
    Io = 7,
    /// The selection is empty; there is nothing to infer.
    NoModel = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SbStatus {
    match e {
        Error::Dimension { .. } | Error::InvalidInput(_) => SbStatus::InvalidInput,
        Error::Parse { .. } | Error::Json(_) => SbStatus::Parse,
        Error::Numerical(_) => SbStatus::Numerical,
        Error::NonConvergence(_) => SbStatus::NonConvergence,
        Error::SamplerAbort(_) => SbStatus::SamplerAbort,
        Error::Io(_) => SbStatus::Io,
    }
}

struct Failure(SbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SbStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any error or panic, and converts to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SbStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SbStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn sb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Result of one randomized LASSO selection on `(y, G)`.
pub struct SbSelection {
    y: DVector<f64>,
    g: DMatrix<f64>,
    record: SelectionRecord,
    sigma_sq_hat: f64,
    eta_sq: f64,
}

/// Runs the randomized LASSO on all columns of the `n × p` matrix `g`.
///
/// `lambda <= 0` picks the noise-scaled default and `eta_sq <= 0` uses the
/// full-model noise estimate. On success `*out` owns a new handle, even when
/// nothing is selected.
///
/// # Safety
/// `y` must point to `n` values and `g` to `n * p` values.
#[no_mangle]
pub unsafe extern "C" fn sb_select(
    y: *const f64,
    g: *const f64,
    n: usize,
    p: usize,
    lambda: f64,
    eta_sq: f64,
    seed: u64,
    out: *mut *mut SbSelection,
) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let y = DVector::from_column_slice(input(y, n, "y")?);
        let g = DMatrix::from_column_slice(n, p, input(g, n * p, "g")?);
        if p == 0 {
            return Err(Failure(SbStatus::InvalidInput, "G has no columns".into()));
        }
        let sigma_sq_hat = outcome_noise_estimate(&y, &g)?;
        let eta_sq = if eta_sq > 0.0 { eta_sq } else { sigma_sq_hat };
        let lambda = if lambda > 0.0 {
            lambda
        } else {
            noise_scaled_lambda(&g, sigma_sq_hat, 1.0, 50, &mut rng_from_seed(derive_seed(seed, 3)))?
        };
        let rand = RandomizationSpec::draw(eta_sq, derive_seed(seed, 1), p)?;
        let record = solve_randomized_lasso(&y, &g, &DVector::from_element(p, lambda), default_epsilon(&g), &rand)?;
        if !record.converged {
            return Err(Failure(SbStatus::NonConvergence, "randomized LASSO did not converge".into()));
        }
        let fbar: Vec<usize> = (0..p).collect();
        let active = record.active.clone();
        let record = record.lift(&g, &y, &fbar, active)?;
        *out = Box::into_raw(Box::new(SbSelection {
            y,
            g,
            record,
            sigma_sq_hat,
            eta_sq,
        }));
        Ok(())
    })
}

/// Number of selected columns.
///
/// # Safety
/// `sel` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sb_selection_len(sel: *const SbSelection, out_len: *mut usize) -> SbStatus {
    guard(|| {
        let sel = sel.as_ref().ok_or_else(|| null("selection"))?;
        *out_len.as_mut().ok_or_else(|| null("out_len"))? = sel.record.active.len();
        Ok(())
    })
}

/// Copies the selected column indices and their signs into buffers of
/// length `cap`, which must be at least the selection length.
///
/// # Safety
/// `sel` must be a live handle; buffers must hold `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn sb_selection_active(
    sel: *const SbSelection,
    out_indices: *mut usize,
    out_signs: *mut f64,
    cap: usize,
) -> SbStatus {
    guard(|| {
        let sel = sel.as_ref().ok_or_else(|| null("selection"))?;
        let e = sel.record.active.len();
        if cap < e {
            return Err(Failure(SbStatus::InvalidInput, format!("buffer holds {cap}, need {e}")));
        }
        output(out_indices, e, "out_indices")?.copy_from_slice(&sel.record.active_global());
        output(out_signs, e, "out_signs")?.copy_from_slice(&sel.record.signs);
        Ok(())
    })
}

/// Noise estimate and randomization variance used by the selection.
///
/// # Safety
/// `sel` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_selection_noise(
    sel: *const SbSelection,
    out_sigma_sq_hat: *mut f64,
    out_eta_sq: *mut f64,
) -> SbStatus {
    guard(|| {
        let sel = sel.as_ref().ok_or_else(|| null("selection"))?;
        *out_sigma_sq_hat.as_mut().ok_or_else(|| null("out_sigma_sq_hat"))? = sel.sigma_sq_hat;
        *out_eta_sq.as_mut().ok_or_else(|| null("out_eta_sq"))? = sel.eta_sq;
        Ok(())
    })
}

/// # Safety
/// `sel` must come from [`sb_select`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sb_selection_free(sel: *mut SbSelection) {
    if !sel.is_null() {
        drop(Box::from_raw(sel));
    }
}

/// Selection-aware posterior for a nonempty selection.
pub struct SbPosterior {
    inner: SelectivePosterior,
}

/// Builds the posterior. `sigma_sq <= 0` estimates the noise on the selected
/// columns; `prior_scale <= 0` uses a flat prior, otherwise a Laplace prior
/// with that scale.
///
/// # Safety
/// `sel` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sb_posterior_new(
    sel: *const SbSelection,
    sigma_sq: f64,
    prior_scale: f64,
    out: *mut *mut SbPosterior,
) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let sel = sel.as_ref().ok_or_else(|| null("selection"))?;
        if sel.record.is_empty() {
            return Err(Failure(SbStatus::NoModel, "the selection is empty".into()));
        }
        let sigma_sq = if sigma_sq > 0.0 {
            sigma_sq
        } else {
            estimate_sigma(&sel.y, &select_columns(&sel.g, &sel.record.augmented))?
        };
        let geom = build_geometry(&sel.record, &sel.g, sigma_sq, sel.eta_sq)?;
        let prior = if prior_scale > 0.0 {
            PriorSpec::laplace(prior_scale)
        } else {
            PriorSpec::flat()
        };
        *out = Box::into_raw(Box::new(SbPosterior {
            inner: SelectivePosterior::new(geom, prior)?,
        }));
        Ok(())
    })
}

/// Dimension of the parameter (the number of selected columns).
///
/// # Safety
/// `post` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_posterior_dim(post: *const SbPosterior, out_dim: *mut usize) -> SbStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("posterior"))?;
        *out_dim.as_mut().ok_or_else(|| null("out_dim"))? = post.inner.dim();
        Ok(())
    })
}

/// Log posterior in the reparameterized coordinates, up to a constant.
///
/// # Safety
/// `zeta` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn sb_posterior_log_density(
    post: *const SbPosterior,
    zeta: *const f64,
    dim: usize,
    out_value: *mut f64,
) -> SbStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("posterior"))?;
        if dim != post.inner.dim() {
            return Err(Error::Dimension {
                what: "zeta".into(),
                expected: post.inner.dim(),
                found: dim,
            }
            .into());
        }
        let z = DVector::from_column_slice(input(zeta, dim, "zeta")?);
        *out_value.as_mut().ok_or_else(|| null("out_value"))? = post.inner.log_posterior_zeta(&z)?;
        Ok(())
    })
}

/// Samples the posterior and writes medians (`dim` values) and equal-tailed
/// bounds (`dim * n_levels` values each, coefficient-major).
///
/// # Safety
/// Buffers must match the sizes above and `levels` hold `n_levels` values.
#[no_mangle]
pub unsafe extern "C" fn sb_posterior_sample(
    post: *const SbPosterior,
    n_samples: usize,
    burn_in: usize,
    seed: u64,
    levels: *const f64,
    n_levels: usize,
    out_median: *mut f64,
    out_lower: *mut f64,
    out_upper: *mut f64,
) -> SbStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("posterior"))?;
        let levels = input(levels, n_levels, "levels")?;
        let config = SamplerConfig {
            n_samples,
            burn_in,
            seed,
            ..SamplerConfig::default()
        };
        let (ci, _) = selective_infer(&post.inner, &config, levels)?;
        let d = post.inner.dim();
        output(out_median, d, "out_median")?.copy_from_slice(&ci.median);
        let lower = output(out_lower, d * n_levels, "out_lower")?;
        let upper = output(out_upper, d * n_levels, "out_upper")?;
        for j in 0..d {
            for k in 0..n_levels {
                lower[j * n_levels + k] = ci.lower[j][k];
                upper[j * n_levels + k] = ci.upper[j][k];
            }
        }
        Ok(())
    })
}

/// # Safety
/// `post` must come from [`sb_posterior_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sb_posterior_free(post: *mut SbPosterior) {
    if !post.is_null() {
        drop(Box::from_raw(post));
    }
}

/// GSVA scores for `n_sets` gene sets over a `p × n` (genes × samples)
/// expression matrix. Set `k` has members `members[offsets[k]..offsets[k+1]]`
/// (`offsets` has `n_sets + 1` entries). Writes an `n_sets × n` column-major
/// matrix to `out_scores`.
///
/// # Safety
/// All buffers must hold the sizes described.
#[no_mangle]
pub unsafe extern "C" fn sb_gsva(
    values: *const f64,
    p: usize,
    n: usize,
    members: *const usize,
    offsets: *const usize,
    n_sets: usize,
    tau: f64,
    out_scores: *mut f64,
) -> SbStatus {
    guard(|| {
        let z = DMatrix::from_column_slice(p, n, input(values, p * n, "values")?);
        if offsets.is_null() {
            return Err(null("offsets"));
        }
        let offsets = slice::from_raw_parts(offsets, n_sets + 1);
        if offsets.windows(2).any(|w| w[1] < w[0]) {
            return Err(Failure(SbStatus::InvalidInput, "offsets must be nondecreasing".into()));
        }
        let total = offsets[n_sets];
        let members: &[usize] = if total == 0 {
            &[]
        } else if members.is_null() {
            return Err(null("members"));
        } else {
            slice::from_raw_parts(members, total)
        };
        let sets = GeneSetCollection::new(
            (0..n_sets)
                .map(|k| (format!("set{k}"), members[offsets[k]..offsets[k + 1]].to_vec()))
                .collect(),
        );
        let expr = ExpressionMatrix::new(
            z,
            (0..p).map(|i| format!("g{i}")).collect(),
            (0..n).map(|j| format!("s{j}")).collect(),
        )?;
        let params = GsvaParams {
            tau,
            ..GsvaParams::default()
        };
        let s = gsva_scores(&expr, &sets, &params)?;
        output(out_scores, n_sets * n, "out_scores")?.copy_from_slice(s.as_slice());
        Ok(())
    })
}
