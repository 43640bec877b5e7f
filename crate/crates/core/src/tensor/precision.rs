//! Arithmetic precision of recorded operations.
//!
//! Storage is always `f64`. In [`Precision::F32`] mode every operation output
//! and every optimizer update is rounded through `f32`, which reproduces
//! single-precision runtime numerics while keeping one code path. Gradient
//! checking runs in [`Precision::F64`].
//!
//! The process-wide default is set with [`set_default`]; [`scoped`] overrides
//! it for the current thread only.

use std::cell::Cell;
use std::sync::atomic::{AtomicU8, Ordering};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

static DEFAULT: AtomicU8 = AtomicU8::new(1);

thread_local! {
    static OVERRIDE: Cell<Option<Precision>> = const { Cell::new(None) };
}

fn encode(p: Precision) -> u8 {
    match p {
        Precision::F32 => 0,
        Precision::F64 => 1,
    }
}

pub fn set_default(p: Precision) {
    DEFAULT.store(encode(p), Ordering::Relaxed);
}

pub fn current() -> Precision {
    OVERRIDE.with(|o| o.get()).unwrap_or_else(|| match DEFAULT.load(Ordering::Relaxed) {
        0 => Precision::F32,
        _ => Precision::F64,
    })
}

/// Runs `f` with `p` as this thread's precision, restoring the previous
/// override afterwards (also on unwind).
pub fn scoped<R>(p: Precision, f: impl FnOnce() -> R) -> R {
    struct Restore(Option<Precision>);
    impl Drop for Restore {
        fn drop(&mut self) {
            OVERRIDE.with(|o| o.set(self.0));
        }
    }
    let _restore = Restore(OVERRIDE.with(|o| o.replace(Some(p))));
    f()
}

#[inline]
pub fn round(v: f64, p: Precision) -> f64 {
    match p {
        Precision::F32 => v as f32 as f64,
        Precision::F64 => v,
    }
}

pub(crate) fn round_slice(data: &mut [f64]) {
    if current() == Precision::F32 {
        for v in data {
            *v = *v as f32 as f64;
        }
    }
}
