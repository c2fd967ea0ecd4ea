//! C ABI over the `cvtransfer` engine.
//!
//! Every fallible function returns a [`CvtStatus`]; on failure a message is
//! available from [`cvt_last_error_message`] on the same thread. Protocol
//! handles are opaque and must be released with [`cvt_protocol_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cvtransfer::gaussian::{mean, variance, ModeExpr, Quadrature};
use cvtransfer::mc::{estimate_channel_snr, simulate_protocol_shots, MCConfig, MCEstimate};
use cvtransfer::metrics::{
    clone_bound, clone_copy_closed, clone_out1_closed, fidelity_bound_transfer, fidelity_coherent, protocol_channel_snr,
};
use cvtransfer::protocol::{build_transfer, GainPolicy, ProtocolOutputs, ProtocolParams};
use cvtransfer::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DomainError = 3,
    Unphysical = 4,
    IndexOutOfRange = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvtGain {
    /// Cancels the input-beamsplitter vacuum.
    Cancellation = 0,
    /// Restores unit input amplitude after link loss.
    LossCompensated = 1,
    /// Uses `CvtParams::gain`.
    Manual = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvtOutput {
    /// The displaced beam arriving at the receiver.
    Channel = 0,
    Out1 = 1,
    Out2 = 2,
    /// One of the cloner outputs, selected by index.
    Clone = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvtParams {
    pub reflectivity: f64,
    pub squeezing: f64,
    pub eta: f64,
    pub gain_policy: CvtGain,
    pub gain: f64,
    /// 0 for the two-output transfer, otherwise the number of cloner copies.
    pub clones: u32,
    pub mean_x: f64,
    pub mean_y: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CvtMcEstimate {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub stderr_mean_x: f64,
    pub stderr_mean_y: f64,
    pub stderr_var_x: f64,
    pub stderr_var_y: f64,
    pub fidelity: f64,
    pub stderr_fidelity: f64,
    pub shots: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CvtSnr {
    pub snr_x: f64,
    pub snr_y: f64,
    /// The closed printed expression, for comparison.
    pub printed_x: f64,
    pub printed_y: f64,
}

/// Opaque built protocol.
pub struct CvtProtocol {
    outputs: ProtocolOutputs,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CvtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Unphysical(_) | Error::NotPositiveSemidefinite(_) => CvtStatus::Unphysical,
            Error::OutOfRange { .. } | Error::NegativeSqueezing(_) | Error::CloningReflectivity { .. } => {
                CvtStatus::InvalidArgument
            }
            _ => CvtStatus::DomainError,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CvtStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CvtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CvtStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_owned());
            CvtStatus::Panic
        }
    }
}

fn write<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    unsafe { ptr.write(value) };
    Ok(())
}

fn params_from(p: *const CvtParams) -> Result<ProtocolParams, Failure> {
    let p = unsafe { p.as_ref() }.ok_or_else(|| null("params"))?;
    let gain_policy = match p.gain_policy {
        CvtGain::Cancellation => GainPolicy::Cancellation,
        CvtGain::LossCompensated => GainPolicy::LossCompensated,
        CvtGain::Manual => GainPolicy::Manual(p.gain),
    };
    let mut params = match p.clones {
        0 => ProtocolParams::new(p.reflectivity, p.squeezing),
        m => ProtocolParams {
            reflectivity: p.reflectivity,
            ..ProtocolParams::cloner(m, p.squeezing)
        },
    };
    params.eta = p.eta;
    params.gain_policy = gain_policy;
    params.input_mean = (p.mean_x, p.mean_y);
    params.validate()?;
    Ok(params)
}

fn protocol<'a>(p: *const CvtProtocol) -> Result<&'a CvtProtocol, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| null("protocol"))
}

fn select(outputs: &ProtocolOutputs, which: CvtOutput, index: u32) -> Result<&ModeExpr, Failure> {
    match which {
        CvtOutput::Channel => Ok(&outputs.channel),
        CvtOutput::Out1 => Ok(&outputs.out1),
        CvtOutput::Out2 => Ok(&outputs.out2),
        CvtOutput::Clone => outputs
            .clones
            .as_ref()
            .and_then(|c| c.get(index as usize))
            .ok_or_else(|| Failure(CvtStatus::IndexOutOfRange, format!("no clone output {index}"))),
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cvt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cvt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Transfer at `R = 0`, `r = 0`, lossless, cancellation gain, vacuum input.
#[no_mangle]
pub extern "C" fn cvt_params_default() -> CvtParams {
    CvtParams {
        reflectivity: 0.0,
        squeezing: 0.0,
        eta: 1.0,
        gain_policy: CvtGain::Cancellation,
        gain: 0.0,
        clones: 0,
        mean_x: 0.0,
        mean_y: 0.0,
    }
}

/// # Safety
/// `params` must point to a valid `CvtParams`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvt_protocol_build(params: *const CvtParams, out: *mut *mut CvtProtocol) -> CvtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let outputs = build_transfer(&params_from(params)?)?;
        write(out, Box::into_raw(Box::new(CvtProtocol { outputs })), "out")
    })
}

/// # Safety
/// `protocol` must be null or a handle from `cvt_protocol_build` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cvt_protocol_free(protocol: *mut CvtProtocol) {
    if !protocol.is_null() {
        drop(Box::from_raw(protocol));
    }
}

/// # Safety
/// `protocol` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvt_protocol_gain(protocol: *const CvtProtocol, out: *mut f64) -> CvtStatus {
    guard(|| write(out, self::protocol(protocol)?.outputs.g_used, "out"))
}

/// Number of cloner outputs (0 for the two-output transfer).
///
/// # Safety
/// `protocol` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvt_protocol_clone_count(protocol: *const CvtProtocol, out: *mut u32) -> CvtStatus {
    guard(|| {
        let n = self::protocol(protocol)?.outputs.clones.as_ref().map_or(0, Vec::len);
        write(out, n as u32, "out")
    })
}

/// Fidelity of an output with the coherent input.
///
/// # Safety
/// `protocol` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvt_protocol_fidelity(
    protocol: *const CvtProtocol,
    which: CvtOutput,
    index: u32,
    out: *mut f64,
) -> CvtStatus {
    guard(|| {
        let o = &self::protocol(protocol)?.outputs;
        let e = select(o, which, index)?;
        let f = fidelity_coherent(e, &o.state, o.params.input_mean)?;
        write(out, f.fidelity, "out")
    })
}

/// # Safety
/// `protocol` must be a live handle; `vx` and `vy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvt_protocol_variance(
    protocol: *const CvtProtocol,
    which: CvtOutput,
    index: u32,
    vx: *mut f64,
    vy: *mut f64,
) -> CvtStatus {
    guard(|| {
        let o = &self::protocol(protocol)?.outputs;
        let e = select(o, which, index)?;
        if vy.is_null() {
            return Err(null("vy"));
        }
        write(vx, variance(e, &o.state, Quadrature::X)?, "vx")?;
        write(vy, variance(e, &o.state, Quadrature::Y)?, "vy")
    })
}

/// # Safety
/// `protocol` must be a live handle; `mx` and `my` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvt_protocol_mean(
    protocol: *const CvtProtocol,
    which: CvtOutput,
    index: u32,
    mx: *mut f64,
    my: *mut f64,
) -> CvtStatus {
    guard(|| {
        let o = &self::protocol(protocol)?.outputs;
        let (x, y) = mean(select(o, which, index)?, &o.state)?;
        if my.is_null() {
            return Err(null("my"));
        }
        write(mx, x, "mx")?;
        write(my, y, "my")
    })
}

/// `1/(R+1)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvt_fidelity_bound_transfer(reflectivity: f64, out: *mut f64) -> CvtStatus {
    guard(|| write(out, fidelity_bound_transfer(reflectivity)?, "out"))
}

/// `M/(2M-1)`; returns NaN for `m < 1`.
#[no_mangle]
pub extern "C" fn cvt_clone_bound(m: u32) -> f64 {
    if m == 0 {
        f64::NAN
    } else {
        clone_bound(m)
    }
}

/// Closed-form fidelities of the first and of every other cloner output.
///
/// # Safety
/// `out1` and `copy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvt_clone_closed_forms(m: u32, squeezing: f64, out1: *mut f64, copy: *mut f64) -> CvtStatus {
    guard(|| {
        if m < 2 || !(squeezing >= 0.0) {
            return Err(Failure(
                CvtStatus::InvalidArgument,
                format!("need M >= 2 and r >= 0, got M = {m}, r = {squeezing}"),
            ));
        }
        if copy.is_null() {
            return Err(null("copy"));
        }
        write(out1, clone_out1_closed(m, squeezing), "out1")?;
        write(copy, clone_copy_closed(m, squeezing), "copy")
    })
}

/// First-principles SNR of a dual-homodyne measurement of the channel.
///
/// # Safety
/// `params` must point to a valid `CvtParams`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvt_channel_snr(
    params: *const CvtParams,
    vin_x: f64,
    vin_y: f64,
    out: *mut CvtSnr,
) -> CvtStatus {
    guard(|| {
        let r = protocol_channel_snr(&params_from(params)?, (vin_x, vin_y))?;
        let (px, py) = r.printed_formula.unwrap_or((f64::NAN, f64::NAN));
        write(
            out,
            CvtSnr {
                snr_x: r.snr_x,
                snr_y: r.snr_y,
                printed_x: px,
                printed_y: py,
            },
            "out",
        )
    })
}

/// Monte-Carlo SNR estimate with its standard errors.
///
/// # Safety
/// `params` must point to a valid `CvtParams`; every output pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvt_mc_snr(
    params: *const CvtParams,
    shots: u64,
    seed: u64,
    vin_x: f64,
    vin_y: f64,
    snr_x: *mut f64,
    snr_y: *mut f64,
    stderr_x: *mut f64,
    stderr_y: *mut f64,
) -> CvtStatus {
    guard(|| {
        if snr_y.is_null() || stderr_x.is_null() || stderr_y.is_null() {
            return Err(null("output"));
        }
        let e = estimate_channel_snr(&params_from(params)?, &MCConfig::new(shots, seed), (vin_x, vin_y))?;
        write(snr_x, e.snr_x, "snr_x")?;
        write(snr_y, e.snr_y, "snr_y")?;
        write(stderr_x, e.stderr_x, "stderr_x")?;
        write(stderr_y, e.stderr_y, "stderr_y")
    })
}

fn to_c(e: &MCEstimate) -> CvtMcEstimate {
    CvtMcEstimate {
        mean_x: e.mean_x,
        mean_y: e.mean_y,
        var_x: e.var_x,
        var_y: e.var_y,
        stderr_mean_x: e.stderr_mean_x,
        stderr_mean_y: e.stderr_mean_y,
        stderr_var_x: e.stderr_var_x,
        stderr_var_y: e.stderr_var_y,
        fidelity: e.fidelity_estimate,
        stderr_fidelity: e.stderr_fidelity,
        shots: e.shots,
    }
}

/// Shot-level simulation; writes the estimate for one output.
///
/// # Safety
/// `params` must point to a valid `CvtParams`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvt_mc_run(
    params: *const CvtParams,
    shots: u64,
    seed: u64,
    which: CvtOutput,
    index: u32,
    out: *mut CvtMcEstimate,
) -> CvtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let est = simulate_protocol_shots(&params_from(params)?, &MCConfig::new(shots, seed))?;
        let e = match which {
            CvtOutput::Channel => &est.channel,
            CvtOutput::Out1 => &est.out1,
            CvtOutput::Out2 => &est.out2,
            CvtOutput::Clone => est
                .clones
                .get(index as usize)
                .ok_or_else(|| Failure(CvtStatus::IndexOutOfRange, format!("no clone output {index}")))?,
        };
        write(out, to_c(e), "out")
    })
}
