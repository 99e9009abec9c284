//! Binary genotype encoding of bounded real variables.
//!
//! Each variable is mapped onto an unsigned big-endian bit field whose length
//! is derived from the requested precision. A chromosome is the concatenation
//! of all fields in variable order.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// Codes wider than this cannot be represented exactly in an `f64` mantissa.
pub const MAX_BIT_LENGTH: u32 = 52;

/// Smallest `l >= 1` with `(upper - lower) / precision <= 2^l`.
pub fn compute_bit_length(lower: f64, upper: f64, precision: f64) -> Result<u32> {
    if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
        return Err(Error::domain(format!(
            "bounds must satisfy lower < upper, got [{lower}, {upper}]"
        )));
    }
    if !(precision > 0.0) || !precision.is_finite() {
        return Err(Error::domain(format!("precision must be > 0, got {precision}")));
    }
    let intervals = (upper - lower) / precision;
    let mut l = 1u32;
    while (2f64).powi(l as i32) < intervals {
        l += 1;
        if l > MAX_BIT_LENGTH {
            return Err(Error::domain(format!(
                "precision {precision} over [{lower}, {upper}] needs more than {MAX_BIT_LENGTH} bits"
            )));
        }
    }
    Ok(l)
}

/// Minimum population size for a binary alphabet such that every allele is
/// present at each locus of a random population with probability `confidence`:
/// `N = ceil(1 + log2(-l / ln P))`.
pub fn min_population_size(string_length: usize, confidence: f64) -> Result<usize> {
    if string_length == 0 {
        return Err(Error::domain("string length must be at least 1"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::domain(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let n = 1.0 + (-(string_length as f64) / confidence.ln()).log2();
    Ok(n.ceil().max(1.0) as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpec {
    pub lower: f64,
    pub upper: f64,
    pub precision: f64,
    pub bit_length: u32,
}

impl VariableSpec {
    pub fn new(lower: f64, upper: f64, precision: f64) -> Result<Self> {
        let bit_length = compute_bit_length(lower, upper, precision)?;
        Ok(Self {
            lower,
            upper,
            precision,
            bit_length,
        })
    }

    /// Largest representable integer code, `2^l - 1`.
    pub fn max_code(&self) -> u64 {
        (1u64 << self.bit_length) - 1
    }

    /// Spacing of the decode grid, `(b - a) / (2^l - 1)`.
    pub fn step(&self) -> f64 {
        (self.upper - self.lower) / self.max_code() as f64
    }

    pub fn decode_code(&self, code: u64) -> f64 {
        if code == self.max_code() {
            // avoid rounding drift at the top of the range
            return self.upper;
        }
        self.lower + self.step() * code as f64
    }

    /// Nearest grid code for `x`; exact ties go to the smaller code.
    pub fn encode_value(&self, index: usize, x: f64) -> Result<u64> {
        if !x.is_finite()
            || x < self.lower - self.precision
            || x > self.upper + self.precision
        {
            return Err(Error::OutOfBounds {
                index,
                value: x,
                lower: self.lower,
                upper: self.upper,
            });
        }
        let t = (x.clamp(self.lower, self.upper) - self.lower) / self.step();
        let code = (t - 0.5).ceil().max(0.0) as u64;
        Ok(code.min(self.max_code()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingSpec {
    variables: Vec<VariableSpec>,
    total_length: usize,
}

impl EncodingSpec {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::domain("encoding needs at least one variable"));
        }
        let total_length = variables.iter().map(|v| v.bit_length as usize).sum();
        Ok(Self {
            variables,
            total_length,
        })
    }

    /// One variable per bound pair, all at the same precision.
    pub fn from_bounds(lower: &[f64], upper: &[f64], precision: f64) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::LengthMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        let vars = lower
            .iter()
            .zip(upper)
            .map(|(&a, &b)| VariableSpec::new(a, b, precision))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vars)
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn dimension(&self) -> usize {
        self.variables.len()
    }

    pub fn total_length(&self) -> usize {
        self.total_length
    }

    pub fn decode(&self, chrom: &Chromosome) -> Result<Vec<f64>> {
        self.check_length(chrom)?;
        let mut offset = 0;
        Ok(self
            .variables
            .iter()
            .map(|var| {
                let l = var.bit_length as usize;
                let code = chrom.bits[offset..offset + l]
                    .iter()
                    .fold(0u64, |acc, &b| (acc << 1) | b as u64);
                offset += l;
                var.decode_code(code)
            })
            .collect())
    }

    pub fn encode(&self, x: &[f64]) -> Result<Chromosome> {
        if x.len() != self.variables.len() {
            return Err(Error::LengthMismatch {
                expected: self.variables.len(),
                found: x.len(),
            });
        }
        let mut bits = Vec::with_capacity(self.total_length);
        for (i, (var, &xi)) in self.variables.iter().zip(x).enumerate() {
            let code = var.encode_value(i, xi)?;
            for j in (0..var.bit_length).rev() {
                bits.push((code >> j) & 1 == 1);
            }
        }
        Ok(Chromosome { bits })
    }

    pub fn random_chromosome<R: Rng + ?Sized>(&self, rng: &mut R) -> Chromosome {
        Chromosome {
            bits: (0..self.total_length).map(|_| rng.gen::<bool>()).collect(),
        }
    }

    fn check_length(&self, chrom: &Chromosome) -> Result<()> {
        if chrom.len() != self.total_length {
            return Err(Error::LengthMismatch {
                expected: self.total_length,
                found: chrom.len(),
            });
        }
        Ok(())
    }
}

/// Fixed-length bit string; bit 0 is the most significant bit of the first
/// variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chromosome {
    bits: Vec<bool>,
}

impl Chromosome {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Bitwise complement.
    pub fn inverted(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn hamming_distance(&self, other: &Self) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }
}

impl std::str::FromStr for Chromosome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::domain(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_bits)
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}
