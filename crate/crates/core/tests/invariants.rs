use hzeta::arith::PrimitiveTriple;
use hzeta::counting::{count_series, ExactBundle};
use hzeta::fourier::{convergence_margin, local_ft_closed, local_ft_generic};
use hzeta::heights::{height_bundle_exact, local_height_finite, PicardVector};
use hzeta::oracle::{local_ft_oracle, OracleOptions};
use hzeta::surface::{classify_character, count_points_mod_p, validate_config, CharacterKind, SurfaceConfig};
use num_integer::Integer;
use num_rational::BigRational;
use proptest::prelude::*;

fn form() -> impl Strategy<Value = (i64, i64)> {
    (-7i64..=7, -7i64..=7).prop_filter("primitive", |(u, v)| u.gcd(v) == 1)
}

fn config(max_r: usize) -> impl Strategy<Value = SurfaceConfig> {
    prop::collection::vec(form(), 0..=max_r).prop_filter_map("non-proportional", |f| validate_config("p", &f).ok())
}

// keeps the proven search box small enough to sweep
fn small_config(max_r: usize) -> impl Strategy<Value = SurfaceConfig> {
    let small = (-2i64..=2, -2i64..=2).prop_filter("primitive", |(u, v)| u.gcd(v) == 1);
    prop::collection::vec(small, 0..=max_r).prop_filter_map("non-proportional", |f| validate_config("p", &f).ok())
}

fn triple() -> impl Strategy<Value = PrimitiveTriple> {
    (-5000i64..=5000, -5000i64..=5000, 1i64..=5000)
        .prop_filter_map("primitive", |(a, b, c)| PrimitiveTriple::from_i64(a, b, c).ok())
}

fn character() -> impl Strategy<Value = (i64, i64)> {
    (-60i64..=60, -60i64..=60).prop_filter("nonzero", |a| *a != (0, 0))
}

const SMALL_PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn good_reduction_point_count(c in config(4), i in 0usize..10) {
        let p = SMALL_PRIMES[i];
        prop_assume!(c.is_good(p));
        let r = c.r() as u64;
        prop_assert_eq!(count_points_mod_p(&c, p).unwrap(), p * p + (r + 1) * p + 1);
    }

    #[test]
    fn character_classes(c in config(4), a in character(), lambda in prop::sample::select(vec![-3i64, -1, 2, 5, 7])) {
        let cls = classify_character(&c, a);
        prop_assert!(c.bad_primes().is_subset(&cls.bad_set));
        let scaled = classify_character(&c, (lambda * a.0, lambda * a.1));
        prop_assert_eq!(cls.kind, scaled.kind);
        if let CharacterKind::Special(k) = cls.kind {
            prop_assert_eq!(c.form(k).det_vec(a), 0);
        }
    }

    #[test]
    fn finite_local_heights(c in config(4), x in triple(), i in 0usize..10) {
        let p = SMALL_PRIMES[i];
        let divides = (x.c() % p) == 0u32.into();
        for k in 1..=c.r() {
            let h = local_height_finite(&c, k, &x, p).unwrap();
            prop_assert!(h.valuation <= 0, "H_k,p < 1");
            if !divides {
                prop_assert_eq!(h.valuation, 0);
            }
        }
    }

    #[test]
    fn bundle_heights_are_multiplicative(
        c in config(3),
        x in triple(),
        s in prop::collection::vec(-4i64..=6, 4),
        t in prop::collection::vec(-4i64..=6, 4),
    ) {
        let n = c.r() + 1;
        let (s, t) = (&s[..n], &t[..n]);
        let sum: Vec<i64> = s.iter().zip(t).map(|(a, b)| a + b).collect();
        let hs = height_bundle_exact(&c, s, &x).unwrap();
        let ht = height_bundle_exact(&c, t, &x).unwrap();
        let hsum = height_bundle_exact(&c, &sum, &x).unwrap();
        prop_assert_eq!(hs.mul(&ht).squared(), hsum.squared());
    }

    #[test]
    fn generic_factor_tail(c in config(3), i in 0usize..10, s0 in 2.05f64..8.0, eps in 0.05f64..3.0) {
        let p = SMALL_PRIMES[i];
        prop_assume!(c.is_good(p) && c.r() >= 1);
        let mut s = vec![s0.max(2.0 + eps)];
        s.extend(std::iter::repeat(1.0 + eps).take(c.r()));
        let s = PicardVector::new(s);
        let margin = convergence_margin(&c, &s).unwrap();
        let v = local_ft_generic(&c, p, &s).unwrap().value;
        let r = c.r() as f64;
        let pf = p as f64;
        let bound = r * pf.powf(-1.0 - margin) + (r - 1.0).abs() * pf.powf(-2.0 - margin);
        prop_assert!((v - 1.0).abs() <= bound + 1e-15, "{} > {}", (v - 1.0).abs(), bound);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_forms_match_oracle(
        c in config(3),
        i in 0usize..5,
        a in (-12i64..=12, -12i64..=12),
        s0 in 4.0f64..6.5,
        sk in 3.0f64..4.5,
    ) {
        let p = SMALL_PRIMES[i];
        let cls = classify_character(&c, a);
        prop_assume!(cls.is_good_at(p));
        let s = PicardVector::new(std::iter::once(s0).chain(std::iter::repeat(sk).take(c.r())).collect());
        let closed = local_ft_closed(&c, p, &s, &cls).unwrap().value;
        let o = local_ft_oracle(&c, p, &s, a, &OracleOptions::with_target(1e-6)).unwrap();
        prop_assert!((closed - o.value).abs() <= o.tail_bound + 1e-12, "p={} a={:?}: {} vs {}", p, a, closed, o.value);
    }

    #[test]
    fn counts_are_monotone_and_shard_independent(c in small_config(3), shards in 2usize..9) {
        let grid: Vec<BigRational> = [5, 20, 60].iter().map(|&b| BigRational::from_integer(b.into())).collect();
        let bundle = ExactBundle::new(&PicardVector::anticanonical(c.r())).unwrap();
        let one = count_series(&c, &bundle, &grid, 1).unwrap();
        let many = count_series(&c, &bundle, &grid, shards).unwrap();
        prop_assert_eq!(&one.counts, &many.counts);
        prop_assert!(one.counts.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(one.counts[0] >= 1);
    }
}
