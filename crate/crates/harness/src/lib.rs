//! Experiment harness for `ot-core`: text and image I/O, seeded instances,
//! benchmark drivers and color transfer. The `ot` binary wraps these.

pub mod bench;
pub mod color;
pub mod error;
pub mod instances;
pub mod io;
pub mod ppm;

pub use error::{HarnessError, Result};

/// Reads `OT_THREADS`. Unset or `0` selects sequential kernels; `n > 0`
/// enables the parallel kernels on a pool of `n` threads. Both modes give
/// bitwise-identical results.
pub fn parallelism_from_env() -> Result<bool> {
    let Ok(raw) = std::env::var("OT_THREADS") else {
        return Ok(false);
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| HarnessError::Invalid(format!("OT_THREADS must be a non-negative integer, got {raw:?}")))?;
    if n == 0 {
        return Ok(false);
    }
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(true)
}
