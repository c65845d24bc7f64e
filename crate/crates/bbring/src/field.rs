//! Explicit arithmetic for F_q (q = p^m, p an odd prime) and for the matrix
//! ring M2(F_q), together with exact enumeration oracles over tiny fields.
//!
//! Everything here is the *plaintext* side of the simulation: the reference
//! oracle and the test harness may use it freely, the recovery pipeline never
//! sees it.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

/// Field orders are capped so that q(q^2-1) stays well inside 128-bit
/// exponent arithmetic.
pub const MAX_ORDER: u64 = 1 << 20;

/// Largest q for which the exhaustive commutator-square census over all
/// q^8 matrix pairs is allowed to run.
pub const SCALAR_CENSUS_MAX_Q: u64 = 9;

/// Largest q for which the exhaustive invertibility census over all q^4
/// matrices is allowed to run.
pub const INVERTIBILITY_CENSUS_MAX_Q: u64 = 27;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("characteristic must be an odd prime, got {0}")]
    NotOddPrime(u64),
    #[error("extension degree must be at least 1")]
    ZeroDegree,
    #[error("field order {0} exceeds the supported bound 2^20")]
    OrderTooLarge(u64),
    #[error("modulus must be a monic polynomial of degree {expected} with coefficients below p, got {got} coefficients")]
    BadModulus { expected: usize, got: usize },
    #[error("modulus is reducible over F_p (found a factor of degree {0})")]
    ReducibleModulus(usize),
    #[error("no built-in modulus for order {0}; pass the polynomial explicitly")]
    NoDefaultModulus(u64),
    #[error("division by zero in F_q")]
    ZeroInverse,
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("exhaustive census refused: q = {q} exceeds the bound {bound}")]
    CensusTooLarge { q: u64, bound: u64 },
    #[error("cannot parse field parameters: {0}")]
    Parse(String),
}

/// An element of F_q in canonical reduced form: `m` residue-polynomial
/// coefficients, each in `[0, p)`, constant term first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FqElement {
    coeffs: Vec<u64>,
}

impl FqElement {
    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }
}

impl fmt::Display for FqElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.len() == 1 {
            write!(f, "{}", self.coeffs[0])
        } else {
            write!(f, "[")?;
            for (i, c) in self.coeffs.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, "]")
        }
    }
}

/// A 2x2 matrix over F_q, entries in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mat2 {
    entries: [FqElement; 4],
}

impl Mat2 {
    pub fn new(entries: [FqElement; 4]) -> Self {
        Mat2 { entries }
    }

    pub fn entries(&self) -> &[FqElement; 4] {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> &FqElement {
        &self.entries[2 * row + col]
    }
}

/// Parameters of F_q = F_p[x]/(modulus), q = p^m.
///
/// The modulus is stored constant-first including the leading coefficient
/// (so it has m+1 entries and ends in 1). For m = 1 it is ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldParams {
    p: u64,
    m: u32,
    modulus: Vec<u64>,
    q: u64,
    limb_width: usize,
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Built-in irreducible moduli for the prime-power orders the toolkit ships
/// with. Constant-first, leading coefficient included.
const DEFAULT_MODULI: &[(u64, &[u64])] = &[
    (9, &[1, 0, 1]),          // x^2 + 1 over F_3
    (25, &[2, 0, 1]),         // x^2 + 2 over F_5
    (27, &[1, 2, 0, 1]),      // x^3 + 2x + 1 over F_3
    (49, &[1, 0, 1]),         // x^2 + 1 over F_7
    (81, &[1, 1, 1, 1, 1]),   // x^4 + x^3 + x^2 + x + 1 over F_3
];

impl FieldParams {
    /// Prime field F_p.
    pub fn prime(p: u64) -> Result<Self, FieldError> {
        Self::extension(p, 1, &[0, 1])
    }

    /// Extension field F_p[x]/(modulus) of degree m. `modulus` lists m+1
    /// coefficients, constant term first, and must be monic and irreducible.
    pub fn extension(p: u64, m: u32, modulus: &[u64]) -> Result<Self, FieldError> {
        if p < 3 || p % 2 == 0 || !is_prime(p) {
            return Err(FieldError::NotOddPrime(p));
        }
        if m == 0 {
            return Err(FieldError::ZeroDegree);
        }
        let mut q: u64 = 1;
        for _ in 0..m {
            q = q.checked_mul(p).ok_or(FieldError::OrderTooLarge(u64::MAX))?;
            if q > MAX_ORDER {
                return Err(FieldError::OrderTooLarge(q));
            }
        }
        let modulus: Vec<u64> = modulus.iter().map(|&c| c % p).collect();
        if m > 1 {
            if modulus.len() != m as usize + 1 || *modulus.last().unwrap() != 1 {
                return Err(FieldError::BadModulus {
                    expected: m as usize + 1,
                    got: modulus.len(),
                });
            }
            if let Some(deg) = reducible_factor_degree(p, &modulus) {
                return Err(FieldError::ReducibleModulus(deg));
            }
        }
        let modulus = if m == 1 { vec![0, 1] } else { modulus };
        let limb_width = match p {
            0..=0xFF => 1,
            0x100..=0xFFFF => 2,
            _ => 3,
        };
        Ok(FieldParams {
            p,
            m,
            modulus,
            q,
            limb_width,
        })
    }

    /// Build parameters from the order alone: primes directly, prime powers
    /// through the built-in modulus table.
    pub fn from_order(q: u64) -> Result<Self, FieldError> {
        if q > MAX_ORDER {
            return Err(FieldError::OrderTooLarge(q));
        }
        if q < 3 || q % 2 == 0 {
            return Err(FieldError::NotOddPrime(q));
        }
        if is_prime(q) {
            return Self::prime(q);
        }
        if let Some((_, modulus)) = DEFAULT_MODULI.iter().find(|(order, _)| *order == q) {
            let (p, m) = prime_power_split(q).expect("table orders are prime powers");
            return Self::extension(p, m, modulus);
        }
        if prime_power_split(q).is_some() {
            return Err(FieldError::NoDefaultModulus(q));
        }
        Err(FieldError::NotOddPrime(q))
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn modulus(&self) -> &[u64] {
        &self.modulus
    }

    /// Bytes per serialized field-element limb.
    pub fn limb_width(&self) -> usize {
        self.limb_width
    }

    /// Bytes in a serialized field element.
    pub fn element_width(&self) -> usize {
        self.limb_width * self.m as usize
    }

    /// E = q(q^2 - 1), the exponent of GL_2(F_q): every invertible 2x2
    /// matrix raised to E is the identity.
    pub fn gl2_exponent(&self) -> u128 {
        let q = self.q as u128;
        q * (q * q - 1)
    }

    // ---- scalar arithmetic -------------------------------------------------

    pub fn zero(&self) -> FqElement {
        FqElement {
            coeffs: vec![0; self.m as usize],
        }
    }

    pub fn one(&self) -> FqElement {
        self.from_u64(1)
    }

    /// Embed an integer into the prime subfield.
    pub fn from_u64(&self, n: u64) -> FqElement {
        let mut coeffs = vec![0; self.m as usize];
        coeffs[0] = n % self.p;
        FqElement { coeffs }
    }

    /// Element with the given residue-polynomial coefficients (constant
    /// first; shorter slices are zero-padded).
    pub fn from_coeffs(&self, coeffs: &[u64]) -> FqElement {
        let mut full = vec![0; self.m as usize];
        for (i, &c) in coeffs.iter().take(self.m as usize).enumerate() {
            full[i] = c % self.p;
        }
        FqElement { coeffs: full }
    }

    /// The i-th element in the canonical enumeration (base-p digits of i).
    pub fn element_from_index(&self, index: u64) -> FqElement {
        debug_assert!(index < self.q);
        let mut coeffs = vec![0; self.m as usize];
        let mut rest = index;
        for c in coeffs.iter_mut() {
            *c = rest % self.p;
            rest /= self.p;
        }
        FqElement { coeffs }
    }

    /// Inverse of [`element_from_index`].
    pub fn element_index(&self, a: &FqElement) -> u64 {
        let mut index = 0u64;
        for &c in a.coeffs.iter().rev() {
            index = index * self.p + c;
        }
        index
    }

    pub fn is_zero(&self, a: &FqElement) -> bool {
        a.coeffs.iter().all(|&c| c == 0)
    }

    pub fn add(&self, a: &FqElement, b: &FqElement) -> FqElement {
        let coeffs = a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(&x, &y)| (x + y) % self.p)
            .collect();
        FqElement { coeffs }
    }

    pub fn sub(&self, a: &FqElement, b: &FqElement) -> FqElement {
        let coeffs = a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(&x, &y)| (x + self.p - y) % self.p)
            .collect();
        FqElement { coeffs }
    }

    pub fn neg(&self, a: &FqElement) -> FqElement {
        let coeffs = a.coeffs.iter().map(|&x| (self.p - x) % self.p).collect();
        FqElement { coeffs }
    }

    pub fn mul(&self, a: &FqElement, b: &FqElement) -> FqElement {
        let m = self.m as usize;
        if m == 1 {
            let prod = (a.coeffs[0] as u128 * b.coeffs[0] as u128 % self.p as u128) as u64;
            return FqElement { coeffs: vec![prod] };
        }
        // Schoolbook product followed by reduction by the monic modulus.
        let mut tmp = vec![0u128; 2 * m - 1];
        for (i, &x) in a.coeffs.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.coeffs.iter().enumerate() {
                tmp[i + j] += x as u128 * y as u128;
            }
        }
        let p = self.p as u128;
        for i in (m..2 * m - 1).rev() {
            let c = tmp[i] % p;
            if c != 0 {
                for j in 0..m {
                    let mj = self.modulus[j] as u128;
                    tmp[i - m + j] += c * (p - mj);
                }
            }
            tmp[i] = 0;
        }
        let coeffs = tmp[..m].iter().map(|&v| (v % p) as u64).collect();
        FqElement { coeffs }
    }

    pub fn pow(&self, a: &FqElement, mut e: u128) -> FqElement {
        let mut base = a.clone();
        let mut acc: Option<FqElement> = None;
        while e > 0 {
            if e & 1 == 1 {
                acc = Some(match acc {
                    Some(r) => self.mul(&r, &base),
                    None => base.clone(),
                });
            }
            e >>= 1;
            if e > 0 {
                base = self.mul(&base, &base);
            }
        }
        acc.unwrap_or_else(|| self.one())
    }

    /// Multiplicative inverse by Fermat: a^(q-2).
    pub fn inv(&self, a: &FqElement) -> Result<FqElement, FieldError> {
        if self.is_zero(a) {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(a, self.q as u128 - 2))
    }

    pub fn random_element<R: Rng>(&self, rng: &mut R) -> FqElement {
        let coeffs = (0..self.m).map(|_| rng.gen_range(0..self.p)).collect();
        FqElement { coeffs }
    }

    // ---- serialization -----------------------------------------------------

    /// Append the canonical encoding: m fixed-width little-endian limbs.
    pub fn serialize_element(&self, a: &FqElement, out: &mut Vec<u8>) {
        for &c in &a.coeffs {
            let bytes = c.to_le_bytes();
            out.extend_from_slice(&bytes[..self.limb_width]);
        }
    }

    pub fn deserialize_element(&self, bytes: &[u8]) -> Option<FqElement> {
        if bytes.len() != self.element_width() {
            return None;
        }
        let mut coeffs = Vec::with_capacity(self.m as usize);
        for chunk in bytes.chunks(self.limb_width) {
            let mut buf = [0u8; 8];
            buf[..self.limb_width].copy_from_slice(chunk);
            let c = u64::from_le_bytes(buf);
            if c >= self.p {
                return None;
            }
            coeffs.push(c);
        }
        Some(FqElement { coeffs })
    }

    // ---- matrix arithmetic -------------------------------------------------

    pub fn mat_zero(&self) -> Mat2 {
        Mat2::new([self.zero(), self.zero(), self.zero(), self.zero()])
    }

    pub fn mat_identity(&self) -> Mat2 {
        Mat2::new([self.one(), self.zero(), self.zero(), self.one()])
    }

    /// c * I.
    pub fn mat_scalar(&self, c: &FqElement) -> Mat2 {
        Mat2::new([c.clone(), self.zero(), self.zero(), c.clone()])
    }

    pub fn mat_add(&self, a: &Mat2, b: &Mat2) -> Mat2 {
        Mat2::new(std::array::from_fn(|i| {
            self.add(&a.entries[i], &b.entries[i])
        }))
    }

    pub fn mat_sub(&self, a: &Mat2, b: &Mat2) -> Mat2 {
        Mat2::new(std::array::from_fn(|i| {
            self.sub(&a.entries[i], &b.entries[i])
        }))
    }

    pub fn mat_neg(&self, a: &Mat2) -> Mat2 {
        Mat2::new(std::array::from_fn(|i| self.neg(&a.entries[i])))
    }

    pub fn mat_mul(&self, a: &Mat2, b: &Mat2) -> Mat2 {
        let e = |r: usize, c: usize| {
            self.add(
                &self.mul(a.entry(r, 0), b.entry(0, c)),
                &self.mul(a.entry(r, 1), b.entry(1, c)),
            )
        };
        Mat2::new([e(0, 0), e(0, 1), e(1, 0), e(1, 1)])
    }

    /// ab - ba.
    pub fn mat_commutator(&self, a: &Mat2, b: &Mat2) -> Mat2 {
        self.mat_sub(&self.mat_mul(a, b), &self.mat_mul(b, a))
    }

    pub fn mat_trace(&self, a: &Mat2) -> FqElement {
        self.add(a.entry(0, 0), a.entry(1, 1))
    }

    pub fn mat_det(&self, a: &Mat2) -> FqElement {
        self.sub(
            &self.mul(a.entry(0, 0), a.entry(1, 1)),
            &self.mul(a.entry(0, 1), a.entry(1, 0)),
        )
    }

    pub fn mat_is_invertible(&self, a: &Mat2) -> bool {
        !self.is_zero(&self.mat_det(a))
    }

    pub fn mat_inverse(&self, a: &Mat2) -> Result<Mat2, FieldError> {
        let det = self.mat_det(a);
        if self.is_zero(&det) {
            return Err(FieldError::SingularMatrix);
        }
        let inv_det = self.inv(&det)?;
        Ok(Mat2::new([
            self.mul(&inv_det, a.entry(1, 1)),
            self.mul(&inv_det, &self.neg(a.entry(0, 1))),
            self.mul(&inv_det, &self.neg(a.entry(1, 0))),
            self.mul(&inv_det, a.entry(0, 0)),
        ]))
    }

    pub fn mat_pow(&self, a: &Mat2, mut e: u128) -> Mat2 {
        let mut base = a.clone();
        let mut acc: Option<Mat2> = None;
        while e > 0 {
            if e & 1 == 1 {
                acc = Some(match acc {
                    Some(r) => self.mat_mul(&r, &base),
                    None => base.clone(),
                });
            }
            e >>= 1;
            if e > 0 {
                base = self.mat_mul(&base, &base);
            }
        }
        acc.unwrap_or_else(|| self.mat_identity())
    }

    pub fn random_matrix<R: Rng>(&self, rng: &mut R) -> Mat2 {
        Mat2::new(std::array::from_fn(|_| self.random_element(rng)))
    }
}

fn prime_power_split(q: u64) -> Option<(u64, u32)> {
    let mut p = 3u64;
    while p * p <= q {
        if q % p == 0 {
            let mut m = 0u32;
            let mut rest = q;
            while rest % p == 0 {
                rest /= p;
                m += 1;
            }
            return if rest == 1 { Some((p, m)) } else { None };
        }
        p += 2;
    }
    Some((q, 1))
}

// ---- modulus irreducibility by trial factorization ------------------------

fn poly_degree(f: &[u64]) -> usize {
    f.iter().rposition(|&c| c != 0).unwrap_or(0)
}

/// Remainder of f by a monic divisor d over F_p.
fn poly_rem(p: u64, f: &[u64], d: &[u64]) -> Vec<u64> {
    let dd = poly_degree(d);
    let mut r: Vec<u64> = f.to_vec();
    for i in (dd..r.len()).rev() {
        let c = r[i];
        if c == 0 {
            continue;
        }
        r[i] = 0;
        for j in 0..dd {
            let sub = c as u128 * d[j] as u128 % p as u128;
            r[i - dd + j] = ((r[i - dd + j] as u128 + p as u128 - sub) % p as u128) as u64;
        }
    }
    r.truncate(dd.max(1));
    r
}

/// Degree of a proper monic factor of `modulus`, if one exists. Exhaustive
/// over all monic polynomials of degree up to deg/2; fine at desk scale.
fn reducible_factor_degree(p: u64, modulus: &[u64]) -> Option<usize> {
    let deg = modulus.len() - 1;
    for d in 1..=deg / 2 {
        let count = p.pow(d as u32);
        for idx in 0..count {
            let mut divisor = vec![0u64; d + 1];
            let mut rest = idx;
            for c in divisor.iter_mut().take(d) {
                *c = rest % p;
                rest /= p;
            }
            divisor[d] = 1;
            let r = poly_rem(p, modulus, &divisor);
            if r.iter().all(|&c| c == 0) {
                return Some(d);
            }
        }
    }
    None
}

impl FromStr for FieldParams {
    type Err = FieldError;

    /// Parses the textual form `p=3,m=2,irr=1,0,1` (irr constant-first,
    /// leading coefficient included; optional when m = 1).
    fn from_str(s: &str) -> Result<Self, FieldError> {
        let mut p: Option<u64> = None;
        let mut m: Option<u32> = None;
        let mut irr: Vec<u64> = Vec::new();
        let mut irr_seen = false;

        let mut parts = s.split(',').peekable();
        while let Some(part) = parts.next() {
            let part = part.trim();
            if let Some(v) = part.strip_prefix("p=") {
                p = Some(
                    v.parse()
                        .map_err(|_| FieldError::Parse(format!("bad p value '{v}'")))?,
                );
            } else if let Some(v) = part.strip_prefix("m=") {
                m = Some(
                    v.parse()
                        .map_err(|_| FieldError::Parse(format!("bad m value '{v}'")))?,
                );
            } else if let Some(v) = part.strip_prefix("irr=") {
                irr_seen = true;
                irr.push(
                    v.parse()
                        .map_err(|_| FieldError::Parse(format!("bad irr coefficient '{v}'")))?,
                );
                // Remaining comma-separated tokens belong to the list.
                for v in parts.by_ref() {
                    let v = v.trim();
                    irr.push(
                        v.parse()
                            .map_err(|_| FieldError::Parse(format!("bad irr coefficient '{v}'")))?,
                    );
                }
            } else {
                return Err(FieldError::Parse(format!("unrecognized component '{part}'")));
            }
        }

        let p = p.ok_or_else(|| FieldError::Parse("missing p=".into()))?;
        let m = m.unwrap_or(1);
        if m > 1 && !irr_seen {
            return Err(FieldError::Parse("missing irr= for extension field".into()));
        }
        if m == 1 {
            FieldParams::prime(p)
        } else {
            FieldParams::extension(p, m, &irr)
        }
    }
}

// ---- exact enumeration oracles ---------------------------------------------

/// An exact count out of a known total; the probabilities the censuses emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactFraction {
    pub numerator: u128,
    pub denominator: u128,
}

impl ExactFraction {
    pub fn as_f64(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl fmt::Display for ExactFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// Exact distribution of the scalar c with (ab - ba)^2 = c*I over all
/// ordered pairs (a, b) of 2x2 matrices.
#[derive(Debug, Clone)]
pub struct ScalarSquareDistribution {
    /// counts[i] is the number of pairs hitting the scalar with canonical
    /// index i (see [`FieldParams::element_from_index`]).
    counts: Vec<u64>,
    total: u128,
}

impl ScalarSquareDistribution {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u128 {
        self.total
    }

    pub fn probability(&self, scalar_index: u64) -> ExactFraction {
        ExactFraction {
            numerator: self.counts[scalar_index as usize] as u128,
            denominator: self.total,
        }
    }
}

/// Exhausts all q^8 ordered pairs (a, b) in M2(F_q)^2 and tallies the scalar
/// value of (ab - ba)^2. Refuses q above [`SCALAR_CENSUS_MAX_Q`].
pub fn commutator_square_distribution(
    params: &FieldParams,
) -> Result<ScalarSquareDistribution, FieldError> {
    let q = params.q();
    if q > SCALAR_CENSUS_MAX_Q {
        return Err(FieldError::CensusTooLarge {
            q,
            bound: SCALAR_CENSUS_MAX_Q,
        });
    }
    let matrices = all_matrices(params);
    let mut counts = vec![0u64; q as usize];
    for a in &matrices {
        for b in &matrices {
            let c = params.mat_commutator(a, b);
            let sq = params.mat_mul(&c, &c);
            debug_assert!(params.is_zero(sq.entry(0, 1)) && params.is_zero(sq.entry(1, 0)));
            debug_assert_eq!(sq.entry(0, 0), sq.entry(1, 1));
            counts[params.element_index(sq.entry(0, 0)) as usize] += 1;
        }
    }
    let total = (matrices.len() as u128) * (matrices.len() as u128);
    Ok(ScalarSquareDistribution { counts, total })
}

/// |GL_2(F_q)| / q^4 by exhaustive enumeration. Refuses q above
/// [`INVERTIBILITY_CENSUS_MAX_Q`].
pub fn invertibility_rate(params: &FieldParams) -> Result<ExactFraction, FieldError> {
    let q = params.q();
    if q > INVERTIBILITY_CENSUS_MAX_Q {
        return Err(FieldError::CensusTooLarge {
            q,
            bound: INVERTIBILITY_CENSUS_MAX_Q,
        });
    }
    let mut invertible = 0u128;
    let total = (q as u128).pow(4);
    for_each_matrix(params, |m| {
        if params.mat_is_invertible(m) {
            invertible += 1;
        }
    });
    Ok(ExactFraction {
        numerator: invertible,
        denominator: total,
    })
}

/// Closed form for the invertibility rate: (1 - 1/q)(1 - 1/q^2) as an exact
/// fraction over q^4 — the algebraic cross-check for the census.
pub fn invertibility_rate_closed_form(q: u64) -> ExactFraction {
    let q = q as u128;
    ExactFraction {
        numerator: (q * q - 1) * (q * q - q),
        denominator: q * q * q * q,
    }
}

fn all_matrices(params: &FieldParams) -> Vec<Mat2> {
    let q = params.q();
    let mut out = Vec::with_capacity((q * q * q * q) as usize);
    for_each_matrix(params, |m| out.push(m.clone()));
    out
}

fn for_each_matrix(params: &FieldParams, mut f: impl FnMut(&Mat2)) {
    let q = params.q();
    let elements: Vec<FqElement> = (0..q).map(|i| params.element_from_index(i)).collect();
    for a in 0..q {
        for b in 0..q {
            for c in 0..q {
                for d in 0..q {
                    let m = Mat2::new([
                        elements[a as usize].clone(),
                        elements[b as usize].clone(),
                        elements[c as usize].clone(),
                        elements[d as usize].clone(),
                    ]);
                    f(&m);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn f(q: u64) -> FieldParams {
        FieldParams::from_order(q).unwrap()
    }

    #[test]
    fn inverse_of_two_in_f5() {
        let p = f(5);
        assert_eq!(p.inv(&p.from_u64(2)).unwrap(), p.from_u64(3));
    }

    #[test]
    fn defining_relation_in_f9() {
        let p = f(9);
        let x = p.from_coeffs(&[0, 1]);
        assert_eq!(p.mul(&x, &x), p.from_u64(2));
    }

    #[test]
    fn fermat_little_theorem_in_f7() {
        let p = f(7);
        assert_eq!(p.pow(&p.from_u64(3), 6), p.one());
    }

    #[test]
    fn zero_inverse_is_rejected() {
        let p = f(5);
        assert!(matches!(p.inv(&p.zero()), Err(FieldError::ZeroInverse)));
    }

    #[test]
    fn nilpotent_commutator_example_over_f5() {
        let p = f(5);
        let a = p_mat(&p, [0, 1, 0, 0]);
        let b = p_mat(&p, [0, 0, 1, 0]);
        let c = p.mat_commutator(&a, &b);
        assert_eq!(c, p_mat(&p, [1, 0, 0, 4]));
        assert_eq!(p.mat_commutator(&a, &a), p.mat_zero());
    }

    #[test]
    fn trace_zero_square_is_scalar_over_f7() {
        let p = f(7);
        let s = p_mat(&p, [2, 0, 0, 5]);
        assert_eq!(p.mat_mul(&s, &s), p_mat(&p, [4, 0, 0, 4]));
    }

    fn p_mat(p: &FieldParams, e: [u64; 4]) -> Mat2 {
        Mat2::new([
            p.from_u64(e[0]),
            p.from_u64(e[1]),
            p.from_u64(e[2]),
            p.from_u64(e[3]),
        ])
    }

    #[test]
    fn gl2_exponent_values() {
        assert_eq!(f(5).gl2_exponent(), 120);
        assert_eq!(f(3).gl2_exponent(), 24);
        assert_eq!(f(13).gl2_exponent(), 2184);
    }

    #[test]
    fn exponent_kills_invertibles_at_q13() {
        let p = f(13);
        let e = p.gl2_exponent();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let mut seen = 0;
        while seen < 500 {
            let m = p.random_matrix(&mut rng);
            if !p.mat_is_invertible(&m) {
                continue;
            }
            seen += 1;
            assert_eq!(p.mat_pow(&m, e), p.mat_identity());
        }
    }

    #[test]
    fn exponent_never_fixes_singular_nonzero_matrices() {
        for q in [3u64, 5, 9] {
            let p = f(q);
            let e = p.gl2_exponent();
            let mut rng = ChaCha12Rng::seed_from_u64(5);
            let mut seen = 0;
            while seen < 200 {
                // Rank-one products u * v^T are singular; skip the zero matrix.
                let u = [p.random_element(&mut rng), p.random_element(&mut rng)];
                let v = [p.random_element(&mut rng), p.random_element(&mut rng)];
                let m = Mat2::new([
                    p.mul(&u[0], &v[0]),
                    p.mul(&u[0], &v[1]),
                    p.mul(&u[1], &v[0]),
                    p.mul(&u[1], &v[1]),
                ]);
                if m == p.mat_zero() {
                    continue;
                }
                seen += 1;
                assert!(!p.mat_is_invertible(&m));
                assert_ne!(p.mat_pow(&m, e), p.mat_identity());
            }
        }
    }

    #[test]
    fn invertibility_census_matches_closed_form() {
        for q in [3u64, 5, 7, 9] {
            let rate = invertibility_rate(&f(q)).unwrap();
            let closed = invertibility_rate_closed_form(q);
            assert_eq!(
                rate.numerator * closed.denominator,
                closed.numerator * rate.denominator,
                "q = {q}"
            );
            // 1 - 2/q lower bound.
            assert!(rate.as_f64() >= 1.0 - 2.0 / q as f64);
        }
    }

    #[test]
    fn invertibility_census_exact_small_counts() {
        assert_eq!(
            invertibility_rate(&f(3)).unwrap(),
            ExactFraction {
                numerator: 48,
                denominator: 81
            }
        );
        assert_eq!(
            invertibility_rate(&f(5)).unwrap(),
            ExactFraction {
                numerator: 480,
                denominator: 625
            }
        );
    }

    #[test]
    fn census_refuses_large_orders() {
        assert!(matches!(
            invertibility_rate(&f(101)),
            Err(FieldError::CensusTooLarge { .. })
        ));
        assert!(matches!(
            commutator_square_distribution(&f(13)),
            Err(FieldError::CensusTooLarge { .. })
        ));
    }

    #[test]
    fn scalar_square_census_q3_totals() {
        let dist = commutator_square_distribution(&f(3)).unwrap();
        assert_eq!(dist.total(), 6561);
        assert_eq!(dist.counts().iter().map(|&c| c as u128).sum::<u128>(), 6561);
        // Frozen exhaustive counts over all 6561 pairs: scalars 0, 1, 2.
        assert_eq!(dist.counts(), &[2673, 2592, 1296]);
    }

    #[test]
    fn scalar_square_census_q5_band() {
        let dist = commutator_square_distribution(&f(5)).unwrap();
        for idx in 1..5u64 {
            let prob = dist.probability(idx).as_f64();
            assert!(
                (prob - 0.2).abs() <= 3.0 / 25.0,
                "class {idx} probability {prob}"
            );
        }
    }

    #[test]
    fn reducible_moduli_are_rejected() {
        // x^2 + 1 has roots over F_5.
        assert!(matches!(
            FieldParams::extension(5, 2, &[1, 0, 1]),
            Err(FieldError::ReducibleModulus(_))
        ));
        // x^2 + 6 = (x-1)(x+1) over F_7.
        assert!(matches!(
            FieldParams::extension(7, 2, &[6, 0, 1]),
            Err(FieldError::ReducibleModulus(_))
        ));
        // x^4 + 1 over F_3 factors into quadratics despite having no roots.
        assert!(matches!(
            FieldParams::extension(3, 4, &[1, 0, 0, 0, 1]),
            Err(FieldError::ReducibleModulus(2))
        ));
    }

    #[test]
    fn order_validation() {
        assert!(matches!(
            FieldParams::from_order(4),
            Err(FieldError::NotOddPrime(4))
        ));
        assert!(matches!(
            FieldParams::from_order(121),
            Err(FieldError::NoDefaultModulus(121))
        ));
        assert!(matches!(
            FieldParams::from_order((1 << 20) + 1),
            Err(FieldError::OrderTooLarge(_))
        ));
        for q in [3u64, 5, 9, 25, 27, 49, 81, 65519] {
            let params = f(q);
            assert_eq!(params.q(), q);
        }
    }

    #[test]
    fn parse_field_params_text() {
        let p: FieldParams = "p=3,m=2,irr=1,0,1".parse().unwrap();
        assert_eq!(p.q(), 9);
        assert_eq!(p.modulus(), &[1, 0, 1]);
        let p: FieldParams = "p=13".parse().unwrap();
        assert_eq!(p.q(), 13);
        assert!("m=2,irr=1,0,1".parse::<FieldParams>().is_err());
        assert!("p=3,m=2".parse::<FieldParams>().is_err());
        assert!("p=abc".parse::<FieldParams>().is_err());
    }

    #[test]
    fn serialization_round_trip() {
        for q in [5u64, 9, 27, 65519] {
            let p = f(q);
            let mut rng = ChaCha12Rng::seed_from_u64(q);
            for _ in 0..50 {
                let a = p.random_element(&mut rng);
                let mut buf = Vec::new();
                p.serialize_element(&a, &mut buf);
                assert_eq!(buf.len(), p.element_width());
                assert_eq!(p.deserialize_element(&buf).unwrap(), a);
            }
        }
    }

    #[test]
    fn element_index_round_trip() {
        let p = f(27);
        for i in 0..27 {
            assert_eq!(p.element_index(&p.element_from_index(i)), i);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_element(q: u64) -> impl Strategy<Value = FqElement> {
            let params = f(q);
            (0..q).prop_map(move |i| params.element_from_index(i))
        }

        fn arb_matrix(q: u64) -> impl Strategy<Value = Mat2> {
            proptest::array::uniform4(arb_element(q)).prop_map(Mat2::new)
        }

        macro_rules! field_axioms {
            ($name:ident, $q:expr) => {
                mod $name {
                    use super::*;

                    proptest! {
                        #[test]
                        fn ring_axioms(a in arb_element($q), b in arb_element($q), c in arb_element($q)) {
                            let p = f($q);
                            prop_assert_eq!(p.add(&a, &b), p.add(&b, &a));
                            prop_assert_eq!(p.mul(&a, &b), p.mul(&b, &a));
                            prop_assert_eq!(p.add(&p.add(&a, &b), &c), p.add(&a, &p.add(&b, &c)));
                            prop_assert_eq!(p.mul(&p.mul(&a, &b), &c), p.mul(&a, &p.mul(&b, &c)));
                            prop_assert_eq!(
                                p.mul(&a, &p.add(&b, &c)),
                                p.add(&p.mul(&a, &b), &p.mul(&a, &c))
                            );
                            prop_assert_eq!(p.add(&a, &p.neg(&a)), p.zero());
                            prop_assert_eq!(p.pow(&a, $q as u128), a.clone());
                            if !p.is_zero(&a) {
                                prop_assert_eq!(p.mul(&a, &p.inv(&a).unwrap()), p.one());
                            }
                        }

                        #[test]
                        fn commutators_have_trace_zero(a in arb_matrix($q), b in arb_matrix($q)) {
                            let p = f($q);
                            let c = p.mat_commutator(&a, &b);
                            prop_assert_eq!(p.mat_trace(&c), p.zero());
                            // and their squares are scalar
                            let sq = p.mat_mul(&c, &c);
                            prop_assert!(p.is_zero(sq.entry(0, 1)));
                            prop_assert!(p.is_zero(sq.entry(1, 0)));
                            prop_assert_eq!(sq.entry(0, 0), sq.entry(1, 1));
                        }

                        #[test]
                        fn trace_zero_squares_to_killing_scalar(
                            a in arb_element($q), b in arb_element($q), c in arb_element($q)
                        ) {
                            let p = f($q);
                            let s = Mat2::new([a.clone(), b.clone(), c.clone(), p.neg(&a)]);
                            let scalar = p.add(&p.mul(&a, &a), &p.mul(&b, &c));
                            prop_assert_eq!(p.mat_mul(&s, &s), p.mat_scalar(&scalar));
                        }

                        #[test]
                        fn matrix_inverse_round_trip(m in arb_matrix($q)) {
                            let p = f($q);
                            if p.mat_is_invertible(&m) {
                                let inv = p.mat_inverse(&m).unwrap();
                                prop_assert_eq!(p.mat_mul(&m, &inv), p.mat_identity());
                                prop_assert_eq!(p.mat_mul(&inv, &m), p.mat_identity());
                            } else {
                                prop_assert!(p.mat_inverse(&m).is_err());
                            }
                        }
                    }
                }
            };
        }

        field_axioms!(f5, 5);
        field_axioms!(f9, 9);
        field_axioms!(f27, 27);
    }
}
