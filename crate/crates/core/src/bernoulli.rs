//! Exact Bernoulli numbers with the convention `B₁ = −1/2`, from
//! `Σ_{k=0}^{n} C(n+1, k) B_k = 0`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// `B_0, …, B_n`.
pub fn bernoulli_table(n: usize) -> Vec<BigRational> {
    let mut b: Vec<BigRational> = Vec::with_capacity(n + 1);
    b.push(BigRational::one());
    for m in 1..=n {
        // binomials C(m+1, k) built incrementally
        let mut binom = BigInt::one();
        let mut acc = BigRational::zero();
        for (k, bk) in b.iter().enumerate() {
            acc += BigRational::from_integer(binom.clone()) * bk;
            binom = binom * BigInt::from(m + 1 - k) / BigInt::from(k + 1);
        }
        b.push(-acc / BigRational::from_integer(BigInt::from(m + 1)));
    }
    b
}

pub fn bernoulli(n: usize) -> BigRational {
    bernoulli_table(n).pop().expect("table has n + 1 entries")
}

/// `B_k / k!` as `f64` for `k = 0..=n`.
pub fn bernoulli_over_factorial(n: usize) -> Vec<f64> {
    let mut fact = BigInt::one();
    bernoulli_table(n)
        .into_iter()
        .enumerate()
        .map(|(k, b)| {
            if k > 0 {
                fact *= BigInt::from(k);
            }
            (b / BigRational::from_integer(fact.clone())).to_f64().expect("finite")
        })
        .collect()
}
