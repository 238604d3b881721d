use serde::Serialize;

/// Closed interval with possibly infinite endpoints. Used as a cheap range
/// bound for subexpressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Sign of a quantity, as far as it can be certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SignInfo {
    Positive,
    Negative,
    Nonneg,
    Nonpos,
    UnknownSign,
}

impl SignInfo {
    pub fn is_nonneg(self) -> bool {
        matches!(self, SignInfo::Positive | SignInfo::Nonneg)
    }

    pub fn is_nonpos(self) -> bool {
        matches!(self, SignInfo::Negative | SignInfo::Nonpos)
    }
}

// 0 * inf counts as 0: a factor known to be exactly zero wins.
fn mul0(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

#[allow(clippy::should_implement_trait)]
impl Interval {
    pub const ALL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            Interval::ALL
        } else {
            Interval { lo, hi }
        }
    }

    pub fn point(v: f64) -> Self {
        Interval::new(v, v)
    }

    pub fn sign(self) -> SignInfo {
        if self.lo > 0.0 {
            SignInfo::Positive
        } else if self.hi < 0.0 {
            SignInfo::Negative
        } else if self.lo >= 0.0 {
            SignInfo::Nonneg
        } else if self.hi <= 0.0 {
            SignInfo::Nonpos
        } else {
            SignInfo::UnknownSign
        }
    }

    pub fn contains_zero(self) -> bool {
        self.lo <= 0.0 && self.hi >= 0.0
    }

    pub fn add(self, o: Interval) -> Interval {
        Interval::new(self.lo + o.lo, self.hi + o.hi)
    }

    pub fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }

    pub fn mul(self, o: Interval) -> Interval {
        let c = [
            mul0(self.lo, o.lo),
            mul0(self.lo, o.hi),
            mul0(self.hi, o.lo),
            mul0(self.hi, o.hi),
        ];
        Interval::new(
            c.iter().copied().fold(f64::INFINITY, f64::min),
            c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }

    pub fn div(self, o: Interval) -> Interval {
        if self == Interval::point(0.0) && !(o.lo == 0.0 && o.hi == 0.0) {
            return Interval::point(0.0);
        }
        if o.contains_zero() {
            return Interval::ALL;
        }
        self.mul(Interval::new(1.0 / o.hi, 1.0 / o.lo))
    }

    pub fn pow(self, p: f64) -> Interval {
        if p == 0.0 {
            return Interval::point(1.0);
        }
        let integer = p.fract() == 0.0;
        let f = |x: f64| x.powf(p);
        if !integer {
            // real powers are only defined for nonnegative bases
            if self.hi < 0.0 || (p < 0.0 && self.hi <= 0.0) {
                return Interval::ALL;
            }
            let lo = self.lo.max(0.0);
            if p < 0.0 && lo == 0.0 {
                return Interval::new(f(self.hi), f64::INFINITY);
            }
            return Interval::new(f(lo).min(f(self.hi)), f(lo).max(f(self.hi)));
        }
        let even = (p / 2.0).fract() == 0.0;
        if p > 0.0 {
            if !even || self.lo >= 0.0 {
                Interval::new(f(self.lo), f(self.hi))
            } else if self.hi <= 0.0 {
                Interval::new(f(self.hi), f(self.lo))
            } else {
                Interval::new(0.0, f(self.lo).max(f(self.hi)))
            }
        } else {
            if self.contains_zero() {
                return Interval::ALL;
            }
            // monotone on each side of zero
            let (a, b) = (f(self.lo), f(self.hi));
            Interval::new(a.min(b), a.max(b))
        }
    }

    pub fn ln(self) -> Interval {
        if self.hi <= 0.0 {
            return Interval::ALL;
        }
        let lo = if self.lo <= 0.0 {
            f64::NEG_INFINITY
        } else {
            self.lo.ln()
        };
        Interval::new(lo, self.hi.ln())
    }

    pub fn scale(self, k: f64) -> Interval {
        self.mul(Interval::point(k))
    }

    pub fn exp(self) -> Interval {
        Interval::new(self.lo.exp(), self.hi.exp())
    }

    pub fn sqrt(self) -> Interval {
        if self.hi < 0.0 {
            return Interval::ALL;
        }
        Interval::new(self.lo.max(0.0).sqrt(), self.hi.sqrt())
    }

    pub fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            self.neg()
        } else {
            Interval::new(0.0, (-self.lo).max(self.hi))
        }
    }
}
