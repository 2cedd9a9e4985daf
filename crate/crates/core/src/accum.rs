//! Summation accumulators.
//!
//! [`CompensatedSum`] is a Neumaier-compensated running sum: cheap, and
//! deterministic for a fixed summation order.
//!
//! [`ExactSum`] accumulates IEEE-754 doubles in a fixed-point register
//! (68 overlapping 32-bit digits spanning the full double range) and
//! rounds once at the end. The result is the correctly rounded value of
//! the exact real sum, which makes it independent of summation order and
//! of how partial sums are merged. Moment estimates and test statistics
//! built on it are bit-identical under row permutation and across worker
//! counts.

/// Neumaier variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

const DIGITS: usize = 68;
const DIGIT_BITS: u32 = 32;
// Digit j carries weight 2^(32*j - 1074); digit 0 sits at the smallest
// subnormal, digits 66..68 are headroom for carries above f64::MAX.
const VALUE_OFFSET: i32 = 1074;
// Deposits grow a digit by < 2^32 each; propagating every 2^28 adds keeps
// every digit well inside i64.
const PROPAGATE_EVERY: u32 = 1 << 28;

/// Order-independent exact accumulator for finite doubles.
#[derive(Clone, Debug)]
pub struct ExactSum {
    digits: [i64; DIGITS],
    pending: u32,
}

impl Default for ExactSum {
    fn default() -> Self {
        Self { digits: [0; DIGITS], pending: 0 }
    }
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one finite value. Panics on NaN or infinity; inputs are
    /// validated at matrix construction.
    #[inline]
    pub fn add(&mut self, x: f64) {
        assert!(x.is_finite(), "ExactSum::add requires finite input");
        if x == 0.0 {
            return;
        }
        if self.pending == PROPAGATE_EVERY {
            self.propagate_signed();
        }
        self.pending += 1;

        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7FF) as u32;
        let mut mant = bits & ((1u64 << 52) - 1);
        let exp = if biased == 0 {
            0
        } else {
            mant |= 1 << 52;
            biased - 1
        };
        // value = mant * 2^(exp - 1074); spread over three digits
        let idx = (exp / DIGIT_BITS) as usize;
        let wide = (mant as u128) << (exp % DIGIT_BITS);
        let parts = [
            (wide & 0xFFFF_FFFF) as i64,
            ((wide >> 32) & 0xFFFF_FFFF) as i64,
            ((wide >> 64) & 0xFFFF_FFFF) as i64,
        ];
        for (k, part) in parts.into_iter().enumerate() {
            if negative {
                self.digits[idx + k] -= part;
            } else {
                self.digits[idx + k] += part;
            }
        }
    }

    /// Fold another accumulator in. Exact, so merging order never matters.
    pub fn merge(&mut self, other: &ExactSum) {
        self.propagate_signed();
        let mut rhs = other.clone();
        rhs.propagate_signed();
        for (d, r) in self.digits.iter_mut().zip(rhs.digits.iter()) {
            *d += r;
        }
        self.pending = 2;
    }

    // Renormalizes digits into [-2^31, 2^31).
    fn propagate_signed(&mut self) {
        let mut carry: i64 = 0;
        for d in self.digits.iter_mut() {
            let v = *d + carry;
            carry = (v + (1 << 31)) >> DIGIT_BITS;
            *d = v - (carry << DIGIT_BITS);
        }
        debug_assert_eq!(carry, 0, "exact sum exceeded representable range");
        self.pending = 0;
    }

    /// Correctly rounded (nearest-even) double value of the exact sum.
    pub fn value(&self) -> f64 {
        let mut digits = self.digits;
        signed_canonical(&mut digits);

        let top = match digits.iter().rposition(|&d| d != 0) {
            Some(j) => j,
            None => return 0.0,
        };
        let negative = digits[top] < 0;
        if negative {
            for d in digits.iter_mut() {
                *d = -*d;
            }
        }
        unsigned_canonical(&mut digits);
        let top = digits
            .iter()
            .rposition(|&d| d != 0)
            .expect("nonzero total cannot cancel during canonicalization");

        let base = top.saturating_sub(2);
        let mut acc: u128 = 0;
        for j in (base..=top).rev() {
            acc = (acc << 32) | digits[j] as u128;
        }
        let sticky_lower = digits[..base].iter().any(|&d| d != 0);

        let msb = 127 - acc.leading_zeros() as i32;
        let position = msb + 32 * base as i32;
        let exponent = position - VALUE_OFFSET;
        if exponent >= 1024 {
            return if negative { f64::NEG_INFINITY } else { f64::INFINITY };
        }

        let keep: i32 = if exponent >= -1022 { 53 } else { exponent + 1075 };
        let drop = msb + 1 - keep;
        debug_assert!(drop >= 0);
        let mut mantissa: u64;
        if drop > 0 {
            mantissa = (acc >> drop) as u64;
            let round = (acc >> (drop - 1)) & 1 == 1;
            let sticky =
                sticky_lower || (drop > 1 && acc & ((1u128 << (drop - 1)) - 1) != 0);
            if round && (sticky || mantissa & 1 == 1) {
                mantissa += 1;
            }
        } else {
            debug_assert!(!sticky_lower);
            mantissa = acc as u64;
        }
        let mut unit = exponent - keep + 1;
        if keep == 53 && mantissa == 1 << 53 {
            mantissa >>= 1;
            unit += 1;
        }

        let bits = if unit == -1074 {
            // Subnormals and the first normal binade share unit 2^-1074,
            // where the bit pattern is the unit count itself.
            debug_assert!(mantissa < 1 << 53);
            mantissa
        } else {
            debug_assert!((1 << 52..1 << 53).contains(&mantissa));
            let biased = (52 + unit + 1023) as u64;
            if biased >= 2047 {
                return if negative { f64::NEG_INFINITY } else { f64::INFINITY };
            }
            (biased << 52) | (mantissa & ((1 << 52) - 1))
        };
        let magnitude = f64::from_bits(bits);
        if negative {
            -magnitude
        } else {
            magnitude
        }
    }
}

fn signed_canonical(digits: &mut [i64; DIGITS]) {
    let mut carry: i64 = 0;
    for d in digits.iter_mut() {
        let v = *d + carry;
        carry = (v + (1 << 31)) >> DIGIT_BITS;
        *d = v - (carry << DIGIT_BITS);
    }
    debug_assert_eq!(carry, 0);
}

fn unsigned_canonical(digits: &mut [i64; DIGITS]) {
    let mut carry: i64 = 0;
    for d in digits.iter_mut() {
        let v = *d + carry;
        carry = v >> DIGIT_BITS;
        *d = v - (carry << DIGIT_BITS);
    }
    debug_assert_eq!(carry, 0);
}

/// Sums a slice exactly.
pub fn exact_sum(values: &[f64]) -> f64 {
    let mut acc = ExactSum::new();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}
