//! Growth exponents of the double phase energy and their admissibility rules.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Regularization used when none is given: `pi_eps(s) = sqrt(s^2 + eps^2)`.
pub const DEFAULT_REGULARIZATION: f64 = 1e-8;

/// Tolerance on `|1/p - (1/q - 1/n)|` for exponents flagged as Sobolev-linked.
pub const SOBOLEV_RELATION_TOL: f64 = 1e-12;

/// How [`validate_exponents`] obtains `p` from `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentMode {
    /// `p` is the Sobolev conjugate of `q`: `1/p = 1/q - 1/n`, which needs `q < n`.
    Strict,
    /// `p` is supplied by the caller and only `q < p` is enforced.
    Relaxed,
}

impl fmt::Display for ExponentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExponentMode::Strict => "strict",
            ExponentMode::Relaxed => "relaxed",
        })
    }
}

impl std::str::FromStr for ExponentMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(ExponentMode::Strict),
            "relaxed" => Ok(ExponentMode::Relaxed),
            other => Err(Error::Exponents(format!(
                "unknown exponent mode {other:?} (expected strict or relaxed)"
            ))),
        }
    }
}

/// Validated exponents `(p, q)` for a problem in dimension `n`, with the
/// regularization scale `eps` used inside every power.
///
/// The ordering is always `q < p`, except for configurations built with
/// [`Exponents::equal_growth`], which exist for single-phase reference runs
/// such as the quadratic case `p = q = 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents<T> {
    p: T,
    q: T,
    n: usize,
    eps: T,
    strict_sobolev: bool,
    equal_growth: bool,
}

impl<T: Scalar> Exponents<T> {
    /// Exponents with an explicit `p`; requires `1 < q < p`.
    pub fn new(p: T, q: T, n: usize, eps: T) -> Result<Self> {
        Self {
            p,
            q,
            n,
            eps,
            strict_sobolev: false,
            equal_growth: false,
        }
        .validated()
    }

    /// Both phases share the exponent `p`; the `q < p` ordering is waived.
    pub fn equal_growth(p: T, n: usize, eps: T) -> Result<Self> {
        Self {
            p,
            q: p,
            n,
            eps,
            strict_sobolev: false,
            equal_growth: true,
        }
        .validated()
    }

    /// `p` from the Sobolev relation `1/p = 1/q - 1/n`.
    pub fn sobolev(q: T, n: usize, eps: T) -> Result<Self> {
        let p = sobolev_conjugate(q, n)?;
        Self {
            p,
            q,
            n,
            eps,
            strict_sobolev: true,
            equal_growth: false,
        }
        .validated()
    }

    /// Same exponents with a different regularization scale.
    pub fn with_regularization(self, eps: T) -> Result<Self> {
        Self { eps, ..self }.validated()
    }

    fn validated(self) -> Result<Self> {
        let Self { p, q, n, eps, .. } = self;
        let bad = |msg: String| Err(Error::Exponents(msg));
        if !(1..=2).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        if !(p.is_finite() && q.is_finite()) || !(q > T::one()) || !(p > T::one()) {
            return bad(format!("exponents must satisfy p > 1 and q > 1 (got p = {p}, q = {q})"));
        }
        if !self.equal_growth && !(q < p) {
            return bad(format!("requires q < p (got p = {p}, q = {q})"));
        }
        if !(eps >= T::zero()) || !eps.is_finite() {
            return bad(format!("regularization must be finite and >= 0 (got {eps})"));
        }
        if p.min(q) < T::of(2.0) && eps == T::zero() {
            return bad(format!(
                "regularization must be positive when min(p, q) < 2 (got p = {p}, q = {q})"
            ));
        }
        if self.strict_sobolev {
            let gap = (p.recip() - (q.recip() - T::count(n).recip())).abs();
            if !(q < T::count(n)) || gap.to_f64_lossy() > SOBOLEV_RELATION_TOL {
                return bad(format!(
                    "Sobolev relation 1/p = 1/q - 1/n violated (p = {p}, q = {q}, n = {n})"
                ));
            }
        }
        Ok(self)
    }

    #[inline]
    pub fn p(&self) -> T {
        self.p
    }

    #[inline]
    pub fn q(&self) -> T {
        self.q
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn regularization(&self) -> T {
        self.eps
    }

    #[inline]
    pub fn strict_sobolev(&self) -> bool {
        self.strict_sobolev
    }

    #[inline]
    pub fn is_equal_growth(&self) -> bool {
        self.equal_growth
    }
}

fn sobolev_conjugate<T: Scalar>(q: T, n: usize) -> Result<T> {
    if !(q < T::count(n)) {
        return Err(Error::Exponents(format!(
            "Sobolev relation 1/p = 1/q - 1/n needs q < n (got q = {q}, n = {n}): p would be nonpositive or infinite"
        )));
    }
    Ok((q.recip() - T::count(n).recip()).recip())
}

/// Builds exponents from `q` and the dimension.
///
/// Strict mode derives `p` from `1/p = 1/q - 1/n` (an explicit `p_override`
/// must agree with it); relaxed mode takes `p_override` and only requires
/// `q < p`. The regularization defaults to [`DEFAULT_REGULARIZATION`].
pub fn validate_exponents<T: Scalar>(
    q: T,
    n: usize,
    mode: ExponentMode,
    p_override: Option<T>,
) -> Result<Exponents<T>> {
    if !(q > T::one()) {
        return Err(Error::Exponents(format!("requires q > 1 (got q = {q})")));
    }
    let eps = T::of(DEFAULT_REGULARIZATION);
    match mode {
        ExponentMode::Strict => {
            let e = Exponents::sobolev(q, n, eps)?;
            if let Some(p) = p_override {
                if (p - e.p).abs().to_f64_lossy() > SOBOLEV_RELATION_TOL * e.p.to_f64_lossy() {
                    return Err(Error::Exponents(format!(
                        "p = {p} contradicts the Sobolev relation 1/p = 1/q - 1/n, which gives p = {}",
                        e.p
                    )));
                }
            }
            Ok(e)
        }
        ExponentMode::Relaxed => {
            let p = p_override.ok_or_else(|| {
                Error::Exponents("relaxed mode needs an explicit p".into())
            })?;
            Exponents::new(p, q, n, eps)
        }
    }
}
