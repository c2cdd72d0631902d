//! Closed-form probability that a single pending request is finalized
//! within `r` sessions when `t` validators accept everything and then abort
//! signing.
//!
//! A session succeeds iff its proposer is honest and the `t` other
//! committee members, drawn without replacement from the `n - 1`
//! acceptors, are all honest:
//!
//! ```text
//! p_h = (n - t)/n * prod_{i=1..t} (n - i - t)/(n - i)
//! p(r) = 1 - (1 - p_h)^r
//! ```

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("need 0 <= t < n (n={n}, t={t})")]
    Threshold { n: u64, t: u64 },
    #[error("need r >= 1")]
    Sessions,
}

fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact per-session success probability.
pub fn p_honest_committee(n: u64, t: u64) -> Result<BigRational, DomainError> {
    if t >= n {
        return Err(DomainError::Threshold { n, t });
    }
    let mut p = ratio(n - t, n);
    for i in 1..=t {
        // Once n - i - t hits zero the committee cannot be all honest.
        let Some(num) = n.checked_sub(i + t) else {
            return Ok(BigRational::zero());
        };
        p *= ratio(num, n - i);
    }
    Ok(p)
}

/// Exact probability of finalizing within `r` sessions.
pub fn p_liveness_exact(n: u64, t: u64, r: u32) -> Result<BigRational, DomainError> {
    if r == 0 {
        return Err(DomainError::Sessions);
    }
    let fail = BigRational::one() - p_honest_committee(n, t)?;
    Ok(BigRational::one() - num_traits::pow(fail, r as usize))
}

pub fn p_liveness(n: u64, t: u64, r: u32) -> Result<f64, DomainError> {
    Ok(p_liveness_exact(n, t, r)?.to_f64().unwrap_or(f64::NAN))
}
