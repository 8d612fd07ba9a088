//! C ABI over the canm library.
//!
//! Every function returns a [`CanmStatus`]. On failure the message is kept
//! per thread and can be read with [`canm_last_error`]. Images cross the
//! boundary as row-major `double` buffers of one `[H, W]` slice in `[0, 1]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use canm::data::kspace_degrade;
use canm::data::ImagePair;
use canm::metrics::{psnr, ssim};
use canm::network::{Network, NetworkConfig};
use canm::verify::suites::{self, Suite, VerifyOptions};
use canm::{CanmError, Tensor};

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CanmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Config = 4,
    Io = 5,
    Format = 6,
    /// Non-finite values, division by zero or diverged training.
    Numeric = 7,
    /// A verification run finished and at least one check failed.
    CheckFailed = 8,
    Panic = 9,
}

/// Opaque network handle.
pub struct CanmNetwork {
    inner: Network,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &CanmError) -> CanmStatus {
    match e {
        CanmError::Shape(_) => CanmStatus::Shape,
        CanmError::Usage(_) => CanmStatus::InvalidArgument,
        CanmError::Config(_) | CanmError::Json(_) => CanmStatus::Config,
        CanmError::NonFinite { .. } | CanmError::DivByZero | CanmError::Divergence { .. } => CanmStatus::Numeric,
        CanmError::Format(_) | CanmError::Checkpoint { .. } | CanmError::Image(_) => CanmStatus::Format,
        CanmError::Io { .. } => CanmStatus::Io,
        CanmError::Gradcheck { .. } => CanmStatus::CheckFailed,
    }
}

struct Fail(CanmStatus, String);

impl From<CanmError> for Fail {
    fn from(e: CanmError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CanmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CanmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CanmStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(CanmStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(CanmStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{what}` is not UTF-8")))
}

unsafe fn image_arg(p: *const f64, h: usize, w: usize, what: &str) -> Result<Tensor, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let n = h.checked_mul(w).filter(|&n| n > 0).ok_or_else(|| invalid(format!("`{what}` has no pixels")))?;
    Ok(Tensor::new(&[h, w], std::slice::from_raw_parts(p, n).to_vec())?)
}

unsafe fn write_out(dst: *mut f64, len: usize, src: &Tensor, what: &str) -> Result<(), Fail> {
    if dst.is_null() {
        return Err(null(what));
    }
    if len != src.len() {
        return Err(Fail(CanmStatus::Shape, format!("`{what}` holds {len} values, {} needed", src.len())));
    }
    ptr::copy_nonoverlapping(src.data().as_ptr(), dst, len);
    Ok(())
}

unsafe fn net_ref<'a>(net: *const CanmNetwork) -> Result<&'a Network, Fail> {
    net.as_ref().map(|n| &n.inner).ok_or_else(|| null("net"))
}

fn hand_out(out: *mut *mut CanmNetwork, net: Network) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(CanmNetwork { inner: net })) };
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn canm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn canm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a fresh network from a preset name (`default`, `desk`, `micro`).
///
/// # Safety
/// `preset` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn canm_network_from_preset(preset: *const c_char, seed: u64, out: *mut *mut CanmNetwork) -> CanmStatus {
    guard(|| {
        let cfg = NetworkConfig::preset(str_arg(preset, "preset")?)?;
        hand_out(out, Network::build(&cfg, seed)?)
    })
}

/// Builds a fresh network from a JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn canm_network_from_json(json: *const c_char, seed: u64, out: *mut *mut CanmNetwork) -> CanmStatus {
    guard(|| {
        let cfg = NetworkConfig::from_json(str_arg(json, "json")?)?;
        hand_out(out, Network::build(&cfg, seed)?)
    })
}

/// Loads a checkpoint directory.
///
/// # Safety
/// `dir` must be a NUL-terminated path and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn canm_network_open(dir: *const c_char, out: *mut *mut CanmNetwork) -> CanmStatus {
    guard(|| {
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        hand_out(out, Network::open(&dir)?)
    })
}

/// Writes the weights and manifest to `dir`.
///
/// # Safety
/// `net` must come from this library and `dir` be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn canm_network_save(net: *const CanmNetwork, dir: *const c_char) -> CanmStatus {
    guard(|| {
        let net = net_ref(net)?;
        net.save_weights(&PathBuf::from(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `net` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn canm_network_free(net: *mut CanmNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input resolution expected by `net`.
///
/// # Safety
/// `net` must come from this library; `h` and `w` must be writable.
#[no_mangle]
pub unsafe extern "C" fn canm_network_input_size(net: *const CanmNetwork, h: *mut usize, w: *mut usize) -> CanmStatus {
    guard(|| {
        let net = net_ref(net)?;
        if h.is_null() || w.is_null() {
            return Err(null("h/w"));
        }
        [*h, *w] = net.config.input_size;
        Ok(())
    })
}

/// Number of learnable scalars.
///
/// # Safety
/// `net` must come from this library; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn canm_network_param_count(net: *const CanmNetwork, count: *mut u64) -> CanmStatus {
    guard(|| {
        let net = net_ref(net)?;
        let count = count.as_mut().ok_or_else(|| null("count"))?;
        *count = net.param_count() as u64;
        Ok(())
    })
}

/// Super-resolves one image. All buffers hold `h * w` values; the output
/// is not clamped.
///
/// # Safety
/// `net` must come from this library and the buffers must hold `h * w`
/// doubles; `out` must not alias the inputs.
#[no_mangle]
pub unsafe extern "C" fn canm_network_forward(
    net: *const CanmNetwork,
    reference: *const f64,
    lr_interp: *const f64,
    h: usize,
    w: usize,
    out: *mut f64,
) -> CanmStatus {
    guard(|| {
        let net = net_ref(net)?;
        let r = image_arg(reference, h, w, "reference")?;
        let lr = image_arg(lr_interp, h, w, "lr_interp")?;
        let y = net.forward(&ImagePair::batch(&r), &ImagePair::batch(&lr))?;
        write_out(out, h * w, &y.reshape(&[h, w])?, "out")
    })
}

/// Simulates low-resolution acquisition of `img` by central k-space
/// cropping. `lr_small` receives `(h / scale) * (w / scale)` values and
/// may be null; `lr_interp` receives `h * w` values.
///
/// # Safety
/// `img` and `lr_interp` must hold `h * w` doubles and `lr_small`, when
/// non-null, `(h / scale) * (w / scale)`.
#[no_mangle]
pub unsafe extern "C" fn canm_degrade(
    img: *const f64,
    h: usize,
    w: usize,
    scale: usize,
    lr_small: *mut f64,
    lr_interp: *mut f64,
) -> CanmStatus {
    guard(|| {
        let d = kspace_degrade(&image_arg(img, h, w, "img")?, scale)?;
        write_out(lr_interp, h * w, &d.lr_interp, "lr_interp")?;
        if !lr_small.is_null() {
            write_out(lr_small, d.lr_small.len(), &d.lr_small, "lr_small")?;
        }
        Ok(())
    })
}

/// PSNR in dB for the given data range; identical images give +inf.
///
/// # Safety
/// `a` and `b` must hold `h * w` doubles; `db` must be writable.
#[no_mangle]
pub unsafe extern "C" fn canm_psnr(a: *const f64, b: *const f64, h: usize, w: usize, data_range: f64, db: *mut f64) -> CanmStatus {
    guard(|| {
        let v = psnr(&image_arg(a, h, w, "a")?, &image_arg(b, h, w, "b")?, data_range)?;
        *db.as_mut().ok_or_else(|| null("db"))? = v;
        Ok(())
    })
}

/// Mean SSIM with an 11x11 Gaussian window.
///
/// # Safety
/// `a` and `b` must hold `h * w` doubles; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn canm_ssim(a: *const f64, b: *const f64, h: usize, w: usize, data_range: f64, value: *mut f64) -> CanmStatus {
    guard(|| {
        let v = ssim(&image_arg(a, h, w, "a")?, &image_arg(b, h, w, "b")?, data_range)?;
        *value.as_mut().ok_or_else(|| null("value"))? = v;
        Ok(())
    })
}

/// Runs a verification suite (`grad`, `oracle` or `all`). `report_json`
/// may be null; otherwise it receives a string to release with
/// [`canm_string_free`]. Returns `CANM_STATUS_CHECK_FAILED` when any check
/// fails, still filling the report.
///
/// # Safety
/// `suite` must be a NUL-terminated string; `report_json`, when non-null,
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn canm_verify(suite: *const c_char, report_json: *mut *mut c_char) -> CanmStatus {
    guard(|| {
        let suite = Suite::parse(str_arg(suite, "suite")?)?;
        let report = suites::run(suite, &VerifyOptions::default())?;
        if !report_json.is_null() {
            let text = serde_json::to_string(&report).map_err(CanmError::from)?;
            *report_json = CString::new(text).map_err(|_| invalid("report contains NUL"))?.into_raw();
        }
        if report.passed {
            Ok(())
        } else {
            let failed: Vec<String> = report.failures().map(|(s, c)| format!("{s}/{}", c.name)).collect();
            Err(Fail(CanmStatus::CheckFailed, format!("failed checks: {}", failed.join(", "))))
        }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn canm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
