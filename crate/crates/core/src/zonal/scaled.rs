/// Real number stored as `mant * exp(shift)` so long products of ratios can
/// pass through magnitudes outside the `f64` range.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scaled {
    mant: f64,
    shift: f64,
}

const TINY: f64 = 1e-280;
const HUGE: f64 = 1e280;

impl Scaled {
    pub(crate) fn from_log(log_abs: f64, sign: f64) -> Self {
        if sign == 0.0 || log_abs == f64::NEG_INFINITY {
            return Self {
                mant: 0.0,
                shift: 0.0,
            };
        }
        let mut s = Self {
            mant: sign.signum(),
            shift: log_abs,
        };
        s.normalize();
        s
    }

    #[inline]
    pub(crate) fn mul(&mut self, r: f64) {
        self.mant *= r;
        let a = self.mant.abs();
        if self.shift != 0.0 || !(a > TINY && a < HUGE) {
            self.normalize();
        }
    }

    fn normalize(&mut self) {
        if self.mant == 0.0 {
            self.shift = 0.0;
            return;
        }
        if !self.mant.is_finite() {
            return;
        }
        let l = self.mant.abs().ln() + self.shift;
        let s = self.mant.signum();
        if l.abs() < 600.0 {
            self.mant = s * l.exp();
            self.shift = 0.0;
        } else {
            self.mant = s;
            self.shift = l;
        }
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        if self.shift == 0.0 {
            self.mant
        } else {
            self.mant * self.shift.exp()
        }
    }

    pub(crate) fn log_abs(&self) -> f64 {
        if self.mant == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.mant.abs().ln() + self.shift
        }
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.mant == 0.0
    }
}

/// Streaming sum of terms given in log form, kept as `s * exp(offset)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    s: f64,
    offset: f64,
}

impl LogSum {
    pub(crate) fn new() -> Self {
        Self {
            s: 0.0,
            offset: f64::NEG_INFINITY,
        }
    }

    pub(crate) fn add(&mut self, log_abs: f64, sign: f64) {
        if sign == 0.0 || log_abs == f64::NEG_INFINITY {
            return;
        }
        if log_abs > self.offset {
            self.s = if self.offset == f64::NEG_INFINITY {
                0.0
            } else {
                self.s * (self.offset - log_abs).exp()
            };
            self.offset = log_abs;
            self.s += sign;
        } else {
            self.s += sign * (log_abs - self.offset).exp();
        }
    }

    pub(crate) fn log_abs(&self) -> f64 {
        if self.s == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.s.abs().ln() + self.offset
        }
    }

    pub(crate) fn sign(&self) -> f64 {
        if self.s == 0.0 {
            0.0
        } else {
            self.s.signum()
        }
    }
}
