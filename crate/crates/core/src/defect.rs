use serde::Serialize;
use std::ops::{BitOr, BitOrAssign};

/// Conditions under which a numerical identity is no longer expected to be
/// exact. They travel with results instead of turning into errors.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Flags {
    /// A nonzero value would have been moved or read across the boundary of
    /// the truncation window.
    pub window_overflow: bool,
    /// A group function reaches beyond the radius on which the dual
    /// quadrature is exact.
    pub band_exceeded: bool,
}

impl Flags {
    pub const NONE: Flags = Flags {
        window_overflow: false,
        band_exceeded: false,
    };

    pub fn overflow() -> Self {
        Flags {
            window_overflow: true,
            ..Flags::NONE
        }
    }

    pub fn band() -> Self {
        Flags {
            band_exceeded: true,
            ..Flags::NONE
        }
    }

    pub fn is_clean(&self) -> bool {
        !self.window_overflow && !self.band_exceeded
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.window_overflow {
            out.push("window-overflow");
        }
        if self.band_exceeded {
            out.push("exactness-band");
        }
        out
    }
}

impl BitOr for Flags {
    type Output = Flags;

    fn bitor(self, rhs: Flags) -> Flags {
        Flags {
            window_overflow: self.window_overflow || rhs.window_overflow,
            band_exceeded: self.band_exceeded || rhs.band_exceeded,
        }
    }
}

impl BitOrAssign for Flags {
    fn bitor_assign(&mut self, rhs: Flags) {
        *self = *self | rhs;
    }
}

/// Absolute size of a violated identity, reported next to the norms of the
/// two sides that were compared. Tolerances are applied by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Defect {
    pub value: f64,
    pub lhs_norm: f64,
    pub rhs_norm: f64,
    pub flags: Flags,
}

impl Defect {
    pub fn new(value: f64, lhs_norm: f64, rhs_norm: f64) -> Self {
        Defect {
            value,
            lhs_norm,
            rhs_norm,
            flags: Flags::NONE,
        }
    }

    pub fn with_flags(mut self, flags: Flags) -> Self {
        self.flags |= flags;
        self
    }

    /// Worst case of two defects; norms are taken from the larger one.
    pub fn max(self, other: Defect) -> Defect {
        let flags = self.flags | other.flags;
        let mut out = if other.value > self.value { other } else { self };
        out.flags = flags;
        out
    }

    pub fn zero() -> Self {
        Defect::new(0.0, 0.0, 0.0)
    }
}

/// A result that carries [`Flags`] alongside its value.
#[derive(Debug, Clone, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    pub flags: Flags,
}

impl<T> Flagged<T> {
    pub fn new(value: T, flags: Flags) -> Self {
        Flagged { value, flags }
    }

    pub fn clean(value: T) -> Self {
        Flagged::new(value, Flags::NONE)
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Flagged<U> {
        Flagged::new(f(self.value), self.flags)
    }
}
