use proptest::prelude::*;

use ps_increments::increments::{
    apply_increment, block_series, d_coefficients, functional_value, increment_value, multi_step_weights, unblock_series,
    CoefficientSet, Series,
};
use ps_increments::{CVec, Complex64, IncrementSpec};

fn cvec(v: &[(f64, f64)]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().map(|&(r, i)| Complex64::new(r, i)))
}

/// Random `(spec, a, ζ)` with `ζ` covering `[-μn, N]`.
fn case() -> impl Strategy<Value = (IncrementSpec, Vec<CVec>, Series)> {
    (1usize..=3, 1usize..=3, 1usize..=3, 0usize..=8).prop_flat_map(|(n, mu, t, horizon)| {
        let entry = (-2.0f64..2.0, -2.0f64..2.0);
        let a = prop::collection::vec(prop::collection::vec(entry.clone(), t), horizon + 1);
        let z = prop::collection::vec(prop::collection::vec(entry, t), horizon + 1 + n * mu);
        (a, z).prop_map(move |(a, z)| {
            let spec = IncrementSpec::new(n, mu, t, horizon).unwrap();
            let a = a.iter().map(|v| cvec(v)).collect();
            let zeta = Series::new(-((n * mu) as i64), z.iter().map(|v| cvec(v)).collect());
            (spec, a, zeta)
        })
    })
}

fn decomposition(set: &CoefficientSet, zeta: &Series) -> Complex64 {
    let s = set.spec;
    let inc = apply_increment(zeta, s.n, s.mu).unwrap();
    let b_part = functional_value(&set.b, &inc).unwrap();
    let v_part: Complex64 = (1..=s.lag_span() as i64).map(|k| set.v_at(-k).unwrap().dot(zeta.get(-k).unwrap())).sum();
    b_part - v_part
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pathwise_identity((spec, a, zeta) in case()) {
        let set = CoefficientSet::new(spec, a.clone()).unwrap();
        let lhs = functional_value(&a, &zeta).unwrap();
        let rhs = decomposition(&set, &zeta);
        let scale = 1.0 + lhs.norm();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * scale, "{lhs} vs {rhs}");
    }

    #[test]
    fn decomposition_is_linear_in_a((spec, a, zeta) in case(), alpha in -3.0f64..3.0) {
        let a2: Vec<CVec> = a.iter().rev().cloned().collect();
        let mix: Vec<CVec> = a.iter().zip(&a2).map(|(x, y)| x * Complex64::new(alpha, 0.0) + y).collect();
        let one = decomposition(&CoefficientSet::new(spec, a).unwrap(), &zeta);
        let two = decomposition(&CoefficientSet::new(spec, a2).unwrap(), &zeta);
        let both = decomposition(&CoefficientSet::new(spec, mix).unwrap(), &zeta);
        let expect = one * alpha + two;
        prop_assert!((both - expect).norm() <= 1e-10 * (1.0 + expect.norm()));
    }

    #[test]
    fn increments_compose(n1 in 1usize..=3, n2 in 1usize..=3, mu in 1usize..=3,
                          vals in prop::collection::vec(-5.0f64..5.0, 40)) {
        let x = Series::from_scalars(-7, &vals.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>());
        let twice = apply_increment(&apply_increment(&x, n1, mu).unwrap(), n2, mu).unwrap();
        let once = apply_increment(&x, n1 + n2, mu).unwrap();
        prop_assert_eq!(twice.start, once.start);
        for (p, q) in twice.values.iter().zip(&once.values) {
            prop_assert!((p - q).norm() <= 1e-9);
        }
    }

    #[test]
    fn multi_step_increment_expansion(n in 1usize..=3, mu in 1usize..=2, k in 1usize..=3,
                                      vals in prop::collection::vec(-5.0f64..5.0, 40)) {
        // ξ^(n)(m, kμ) = Σ_l A_l ξ^(n)(m - lμ, μ)
        let x = Series::from_scalars(0, &vals.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>());
        let m = 39i64;
        let wide = increment_value(&x, m, n, (k * mu) as i64).unwrap();
        let mut acc = CVec::zeros(1);
        for (l, w) in multi_step_weights(n, k).iter().enumerate() {
            acc += increment_value(&x, m - (l * mu) as i64, n, mu as i64).unwrap() * Complex64::new(*w, 0.0);
        }
        prop_assert!((wide - acc).norm() <= 1e-9);
    }

    #[test]
    fn blocking_round_trip(t in 1usize..=4, blocks in 1usize..=6, seed in any::<u64>()) {
        let theta: Vec<Complex64> = (0..t * blocks).map(|i| Complex64::new((seed.wrapping_add(i as u64) % 97) as f64, i as f64)).collect();
        prop_assert_eq!(unblock_series(&block_series(&theta, t).unwrap()), theta);
    }
}

/// Coefficients of `(1 + x^μ + x^{2μ} + …)^n` by repeated truncated products.
fn expansion(n: usize, mu: usize, max: usize) -> Vec<f64> {
    let base: Vec<f64> = (0..=max).map(|k| if k % mu == 0 { 1.0 } else { 0.0 }).collect();
    let mut acc = vec![0.0; max + 1];
    acc[0] = 1.0;
    for _ in 0..n {
        let mut next = vec![0.0; max + 1];
        for (i, &p) in acc.iter().enumerate() {
            for (j, &q) in base.iter().enumerate().take(max + 1 - i) {
                next[i + j] += p * q;
            }
        }
        acc = next;
    }
    acc
}

#[test]
fn d_closed_form_matches_generating_function() {
    for n in 1..=5 {
        for mu in 1..=5 {
            assert_eq!(d_coefficients(n, mu, 50), expansion(n, mu, 50), "n={n} mu={mu}");
        }
    }
}
