//! Random generators and exact identity checks shared by the property suites
//! and the acceptance runner.
#![allow(dead_code)]

use hzeta::arith::{normalize_point, prime_factors, primes_up_to, product_formula, PrimitiveTriple};
use hzeta::fourier::{local_ft_generic, local_ft_trivial, pn_local_ft, PnCharacter};
use hzeta::heights::{
    anticanonical_height_squared, global_height, global_height_component, height_bundle_exact, hyperplane_height,
    local_height_finite, place_by_place_height, HeightValue, PicardVector,
};
use hzeta::surface::{validate_config, SurfaceConfig};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEED: u64 = 0x5eed_2024;
pub const CASES: usize = 10_000;

pub fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(SEED ^ salt)
}

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// `r` pairwise non-proportional primitive forms with small coefficients.
pub fn random_config(rng: &mut ChaCha8Rng, r: usize) -> SurfaceConfig {
    loop {
        let forms: Vec<(i64, i64)> = (0..r)
            .map(|_| loop {
                let u: i64 = rng.gen_range(-6..=6);
                let v: i64 = rng.gen_range(-6..=6);
                if u.gcd(&v) == 1 {
                    break (u, v);
                }
            })
            .collect();
        if let Ok(c) = validate_config("random", &forms) {
            return c;
        }
    }
}

/// A primitive triple with `c >= 1`; coordinates are biased towards
/// sharing factors with `c` so that finite places are exercised.
pub fn random_triple(rng: &mut ChaCha8Rng, max: i64) -> PrimitiveTriple {
    loop {
        let c: i64 = rng.gen_range(1..=max);
        let shared: i64 = if rng.gen_bool(0.5) { c.gcd(&rng.gen_range(1..=max)) } else { 1 };
        let a: i64 = rng.gen_range(-max..=max) * shared;
        let b: i64 = rng.gen_range(-max..=max);
        if a.gcd(&b).gcd(&c) == 1 {
            return PrimitiveTriple::from_i64(a, b, c).unwrap();
        }
    }
}

pub fn random_rational(rng: &mut ChaCha8Rng) -> BigRational {
    let n: i64 = loop {
        let n = rng.gen_range(-1_000_000_000_000i64..=1_000_000_000_000);
        if n != 0 {
            break n;
        }
    };
    let d: i64 = rng.gen_range(1..=1_000_000_000_000i64);
    // sprinkle small prime powers so valuations are nontrivial
    let k: u32 = rng.gen_range(0..8);
    BigRational::new(BigInt::from(n) * BigInt::from(2).pow(k), BigInt::from(d) * BigInt::from(3).pow(rng.gen_range(0..6)))
}

fn same(a: &HeightValue, b: &HeightValue) -> bool {
    a.squared() == b.squared()
}

/// Runs `check` on `cases` seeded cases and reports the first failure.
pub fn run_suite<F>(salt: u64, cases: usize, mut check: F) -> Result<(), String>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<(), String>,
{
    let mut rng = rng(salt);
    for i in 0..cases {
        check(&mut rng).map_err(|e| format!("case {i}: {e}"))?;
    }
    Ok(())
}

pub fn check_product_formula(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let x = random_rational(rng);
    let v = product_formula(&x).map_err(|e| e.to_string())?;
    if v.is_one() {
        Ok(())
    } else {
        Err(format!("product formula gives {v} for {x}"))
    }
}

pub fn check_factorization(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let r = rng.gen_range(0..=4);
    let config = random_config(rng, r);
    let x = random_triple(rng, 10_000);
    let mut prod = HeightValue::one();
    for k in 0..=r {
        prod = prod.mul(&global_height(&config, k, &x).map_err(|e| e.to_string())?);
    }
    if same(&prod, &hyperplane_height(&x)) {
        Ok(())
    } else {
        Err(format!("H_0 prod H_k != H_O(1) at {x} for {:?}", config.forms()))
    }
}

pub fn check_place_by_place(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let r = rng.gen_range(1..=4);
    let config = random_config(rng, r);
    let x = random_triple(rng, 10_000);
    for k in 1..=r {
        let closed = global_height_component(&config, k, &x).map_err(|e| e.to_string())?;
        let local = place_by_place_height(&config, k, &x).map_err(|e| e.to_string())?;
        if !same(&closed, &local) {
            return Err(format!("H_{k} closed form differs from the place-by-place product at {x}"));
        }
    }
    Ok(())
}

pub fn check_translation(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let r = rng.gen_range(1..=4);
    let config = random_config(rng, r);
    let x = random_triple(rng, 10_000);
    let t1 = BigInt::from(rng.gen_range(-1000i64..=1000));
    let t2 = BigInt::from(rng.gen_range(-1000i64..=1000));
    let y = x.translate(&t1, &t2);
    let mut primes = prime_factors(x.c());
    primes.extend(primes_up_to(13));
    for p in primes {
        for k in 0..=r {
            let a = local_height_finite(&config, k, &x, p).map_err(|e| e.to_string())?;
            let b = local_height_finite(&config, k, &y, p).map_err(|e| e.to_string())?;
            if a != b {
                return Err(format!("H_{k},{p} changes under translation of {x} by ({t1}, {t2})"));
            }
        }
    }
    Ok(())
}

/// Without blow-ups the surface is the plane: both closed forms must reduce
/// to the projective-space transforms.
pub fn check_degeneration(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let config = validate_config("plane", &[]).unwrap();
    let p = [2u64, 3, 5, 7][rng.gen_range(0..4)];
    let s0: i64 = rng.gen_range(3..=40);
    let s = PicardVector::new(vec![q(s0, 1)]);
    let triv = local_ft_trivial(&config, p, &s).map_err(|e| e.to_string())?.value;
    let pn0 = pn_local_ft(2, p, &q(s0, 1), PnCharacter::Trivial).map_err(|e| e.to_string())?.value;
    let gen = local_ft_generic(&config, p, &s).map_err(|e| e.to_string())?.value;
    let pnq = pn_local_ft(2, p, &q(s0, 1), PnCharacter::NontrivialGood).map_err(|e| e.to_string())?.value;
    if triv != pn0 {
        return Err(format!("trivial transform {triv} != {pn0} at p = {p}, s = {s0}"));
    }
    if gen != pnq {
        return Err(format!("generic transform {gen} != {pnq} at p = {p}, s = {s0}"));
    }
    Ok(())
}

pub fn check_anticanonical_closed_form(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let r = rng.gen_range(0..=3);
    let config = random_config(rng, r);
    let x = random_triple(rng, 10_000);
    let s: Vec<i64> = PicardVector::<BigRational>::anticanonical(r).iter().map(|v| v.to_integer().try_into().unwrap()).collect();
    let bundle = height_bundle_exact(&config, &s, &x).map_err(|e| e.to_string())?;
    if bundle.squared() == anticanonical_height_squared(&config, &x) {
        Ok(())
    } else {
        Err(format!("anticanonical closed form differs at {x}"))
    }
}

pub fn check_normalize(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let x = random_triple(rng, 100_000);
    let lambda: i64 = loop {
        let l = rng.gen_range(-1000i64..=1000);
        if l != 0 {
            break l;
        }
    };
    let (x1, x2) = x.coordinates();
    let scaled1 = BigRational::new(x.a() * lambda, x.c() * lambda);
    let scaled2 = BigRational::new(x.b() * lambda, x.c() * lambda);
    let once = normalize_point(&x1, &x2);
    let again = normalize_point(&once.coordinates().0, &once.coordinates().1);
    if once != x || again != once || normalize_point(&scaled1, &scaled2) != x {
        return Err(format!("normalize_point is not idempotent or scale-invariant at {x}"));
    }
    Ok(())
}

/// The five exact suites of the acceptance criteria, by name.
pub fn exact_suites() -> Vec<(&'static str, fn(&mut ChaCha8Rng) -> Result<(), String>)> {
    vec![
        ("product formula", check_product_formula),
        ("H_0 prod H_k = H_O(1)", check_factorization),
        ("closed form = place-by-place", check_place_by_place),
        ("finite-place translation invariance", check_translation),
        ("plane degeneration of the transforms", check_degeneration),
    ]
}
