//! Property tests for the algebraic invariants the library relies on.

use std::cmp::Ordering;
use std::sync::Arc;

use fake_annulus::cohomology::{cocycle_from_potential, h1_reduce, H1Class};
use fake_annulus::dmodule::{matrix_inverse, monomial_module, DModule};
use fake_annulus::frobenius::{
    embed_in_level, naive_compare_check, substitution_hom, teichmuller_expand, FrobeniusLift,
};
use fake_annulus::monoval::{point, LambdaBound, MonomialValuation};
use fake_annulus::residue::{as_reduce, ResidueSeries};
use fake_annulus::series::{Context, FakeSeries, SeriesMatrix};
use fake_annulus::solver::{f_invariant_check, trivialize_unit_root};
use fake_annulus::{CoeffRing, CoeffRingParams};
use proptest::prelude::*;

type Terms = Vec<((i64, i64), i64)>;

fn plane(prec: i32) -> Arc<Context> {
    Context::new(
        CoeffRing::prime_field(5, prec).unwrap(),
        Arc::new(MonomialValuation::sqrt2_plane()),
    )
}

fn series(ctx: &Arc<Context>, terms: &Terms) -> FakeSeries {
    let prec = ctx.prec();
    let mut acc = FakeSeries::zero(ctx, prec);
    for &((a, b), c) in terms {
        let t = FakeSeries::monomial(ctx, &[a, b], ctx.ring().from_int(c, prec));
        acc = acc.add(&t).unwrap();
    }
    acc
}

fn terms(n: usize, radius: i64) -> impl Strategy<Value = Terms> {
    prop::collection::vec(
        ((-radius..=radius, -radius..=radius), -3124i64..=3124),
        1..=n,
    )
}

fn scalar(s: FakeSeries) -> SeriesMatrix {
    SeriesMatrix::from_rows(vec![vec![s]]).unwrap()
}

/// I + p·E for a 2×2 E built from four term lists.
fn near_identity(ctx: &Arc<Context>, e: &[Terms; 4]) -> SeriesMatrix {
    let prec = ctx.prec();
    let id = SeriesMatrix::identity(ctx, 2, prec);
    let m = SeriesMatrix::from_rows(vec![
        vec![series(ctx, &e[0]), series(ctx, &e[1])],
        vec![series(ctx, &e[2]), series(ctx, &e[3])],
    ])
    .unwrap();
    id.add(&m.map(|x| x.shift_pi(1).truncate_prec(prec)))
        .unwrap()
}

fn quad(n: usize, r: i64) -> impl Strategy<Value = [Terms; 4]> {
    [terms(n, r), terms(n, r), terms(n, r), terms(n, r)]
}

fn same_module(a: &DModule, b: &DModule) -> bool {
    a.a().approx_eq(b.a())
        && match (a.connection(), b.connection()) {
            (Some(x), Some(y)) => x.iter().zip(y).all(|(u, v)| u.approx_eq(v)),
            (None, None) => true,
            _ => false,
        }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficient_valuation_is_multiplicative(a in -3124i64..=3124, b in -3124i64..=3124, ea in 0i32..3, eb in 0i32..3) {
        let ring = CoeffRing::prime_field(5, 8).unwrap();
        let x = ring.shift(&ring.from_int(a, 8), ea);
        let y = ring.shift(&ring.from_int(b, 8), eb);
        let (wx, wy) = (x.val_bound(), y.val_bound());
        let wp = ring.mul(&x, &y).val_bound();
        prop_assert!(wp >= (wx + wy).min(8));
        if wx + wy < 8 && !x.is_zero() && !y.is_zero() {
            prop_assert_eq!(wp, wx + wy);
        }
        let ws = ring.add(&x, &y).val_bound();
        prop_assert!(ws >= wx.min(wy));
        if wx != wy {
            prop_assert_eq!(ws, wx.min(wy));
        }
    }

    #[test]
    fn sigma_is_a_ring_hom_on_the_unramified_ring(x in prop::array::uniform2(-624i64..=624), y in prop::array::uniform2(-624i64..=624)) {
        let ring = CoeffRing::new(CoeffRingParams::unramified(5, 2, 6)).unwrap();
        let (a, b) = (ring.from_coords(&x, 6), ring.from_coords(&y, 6));
        let s = |v: &fake_annulus::Padic| ring.sigma(v);
        prop_assert!(ring.eq_at_prec(&s(&ring.add(&a, &b)), &ring.add(&s(&a), &s(&b))));
        prop_assert!(ring.eq_at_prec(&s(&ring.mul(&a, &b)), &ring.mul(&s(&a), &s(&b))));
        // the f-th power of the absolute Frobenius is the identity
        prop_assert!(ring.eq_at_prec(&ring.phi_pow(&a, 2), &a));
        let r = ring.residue(&a).unwrap();
        let t = ring.teichmuller(&r, 6);
        prop_assert!(ring.eq_at_prec(&ring.pow(&t, 25).unwrap(), &t));
    }

    #[test]
    fn lambda_order_is_translation_invariant(a in prop::array::uniform2(-50i64..=50), b in prop::array::uniform2(-50i64..=50), c in prop::array::uniform2(-50i64..=50)) {
        let val = MonomialValuation::sqrt2_plane();
        let ac = [a[0] + c[0], a[1] + c[1]];
        let bc = [b[0] + c[0], b[1] + c[1]];
        prop_assert_eq!(val.compare_points(&ac, &bc), val.compare_points(&a, &b));
        prop_assert_eq!(val.lambda(&ac), val.lambda(&a).add(&val.lambda(&c)));
        if a != [0, 0] {
            prop_assert_ne!(val.sign(&val.lambda(&a)), Ordering::Equal);
        }
        let fa = val.lambda_approx(&a) - val.lambda_approx(&b);
        if fa.abs() > 1e-9 {
            prop_assert_eq!(val.compare_points(&a, &b), fa.partial_cmp(&0.0).unwrap());
        }
    }

    #[test]
    fn derivations_are_additive_and_leibniz(x in terms(4, 6), y in terms(4, 6), mu in prop::array::uniform2(-3i64..=3), nu in prop::array::uniform2(-3i64..=3)) {
        let ctx = plane(6);
        let (x, y) = (series(&ctx, &x), series(&ctx, &y));
        let xy = x.mul(&y).unwrap();
        let lhs = xy.derivation(&mu);
        let rhs = x.derivation(&mu).mul(&y).unwrap().add(&x.mul(&y.derivation(&mu)).unwrap()).unwrap();
        prop_assert!(lhs.approx_eq(&rhs));
        let sum = [mu[0] + nu[0], mu[1] + nu[1]];
        prop_assert!(x.derivation(&sum).approx_eq(&x.derivation(&mu).add(&x.derivation(&nu)).unwrap()));
    }

    #[test]
    fn unit_inverse_multiplies_to_one(lead in 1i64..5, x in terms(3, 4)) {
        let ctx = plane(6);
        let tail = series(&ctx, &x).shift_pi(1).truncate_prec(6);
        let u = FakeSeries::from_int(&ctx, lead, 6).add(&tail).unwrap();
        let hi = LambdaBound::Finite(ctx.valuation().int_value(12));
        let inv = u.invert_unit(&hi).unwrap();
        let d = u.mul(&inv).unwrap().sub(&FakeSeries::one(&ctx, 6)).unwrap();
        prop_assert!(d.is_zero(), "residual {}", d);
    }

    #[test]
    fn standard_sigma_is_a_hom_scaling_partial_valuations(x in terms(4, 8), y in terms(4, 8)) {
        let ctx = plane(6);
        let s = FrobeniusLift::standard(&ctx);
        let (x, y) = (series(&ctx, &x), series(&ctx, &y));
        let sx = s.apply(&x).unwrap();
        let sy = s.apply(&y).unwrap();
        prop_assert!(s.apply(&x.add(&y).unwrap()).unwrap().approx_eq(&sx.add(&sy).unwrap()));
        prop_assert!(s.apply(&x.mul(&y).unwrap()).unwrap().approx_eq(&sx.mul(&sy).unwrap()));
        for n in 0..6 {
            let v = x.naive_partial_valuation(n).unwrap();
            prop_assert_eq!(sx.naive_partial_valuation(n).unwrap(), v.scale(5, 1));
        }
    }

    #[test]
    fn teichmuller_digits_reassemble(x in terms(3, 3)) {
        let ctx = plane(6);
        let s = FrobeniusLift::standard(&ctx);
        let x = series(&ctx, &x);
        let cap = LambdaBound::Finite(ctx.valuation().int_value(4));
        let e = teichmuller_expand(&s, &x, 2, &cap).unwrap();
        let level_x = embed_in_level(&x, &e.level_ctx, 2).truncate_prec(3).truncate_lambda(&cap);
        prop_assert!(e.reassemble().unwrap().approx_eq(&level_x));
        prop_assert!(naive_compare_check(&s, &x, 2, (1, 2)).unwrap());
    }

    #[test]
    fn substitution_is_multiplicative_and_moves_coordinates(x in terms(3, 5), y in terms(3, 5), k in prop::array::uniform2(1i64..25)) {
        let ctx = plane(6);
        let u: Vec<FakeSeries> = k.iter().map(|&c| FakeSeries::from_int(&ctx, 5 * c, 6)).collect();
        let (x, y) = (series(&ctx, &x), series(&ctx, &y));
        let fxy = substitution_hom(&u, &x.mul(&y).unwrap()).unwrap();
        let prod = substitution_hom(&u, &x).unwrap().mul(&substitution_hom(&u, &y).unwrap()).unwrap();
        prop_assert!(fxy.approx_eq(&prod));
        for i in 0..2 {
            let zi = FakeSeries::monomial(&ctx, &ctx.basis_point(i), ctx.ring().one(6));
            let image = substitution_hom(&u, &zi).unwrap();
            prop_assert!(image.approx_eq(&zi.mul(&FakeSeries::one(&ctx, 6).add(&u[i]).unwrap()).unwrap()));
        }
    }

    #[test]
    fn as_reduce_certificate_and_idempotence(x in prop::collection::vec(((-30i64..=30, -30i64..=30), 1u64..5), 1..6)) {
        let ctx = plane(4);
        let terms: Vec<_> = x.iter().map(|&((a, b), c)| (point(&[a, b]), [c].into_iter().collect())).collect();
        let x = ResidueSeries::from_terms(&ctx, &terms);
        let red = as_reduce(&x).unwrap();
        let y = &red.certificate;
        let window = red.canonical.lambda_hi().clone();
        let lhs = x.sub(y).unwrap().add(&y.frobenius(1).unwrap()).unwrap().truncate_lambda(&window);
        prop_assert!(lhs.sub(&red.canonical).unwrap().is_zero());
        let again = as_reduce(&red.canonical).unwrap();
        prop_assert!(again.canonical.sub(&red.canonical).unwrap().is_zero());
    }
}

fn falling_partial(r: &FakeSeries, j: &[usize]) -> FakeSeries {
    let ring = r.ring().clone();
    let prec = r.prec();
    let terms = r
        .terms()
        .iter()
        .map(|(z, c)| {
            let f: i64 = z
                .iter()
                .zip(j)
                .map(|(&zi, &ji)| (0..ji as i64).map(|l| zi - l).product::<i64>())
                .product();
            (z.clone(), ring.mul_int(c, f))
        })
        .collect();
    FakeSeries::from_terms(r.ctx(), terms, prec)
}

fn binom(n: usize, k: usize) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn leibniz_rule_for_falling_factorials(r in terms(3, 4), v in quad(2, 3), j in (0usize..=3, 0usize..=3).prop_filter("|J| <= 3", |(a, b)| a + b <= 3)) {
        let ctx = plane(6);
        let s = FrobeniusLift::standard(&ctx);
        let m = DModule::trivial(&s, 2, 6).gauge_change(&near_identity(&ctx, &v)).unwrap();
        let r = series(&ctx, &r);
        let vec = vec![FakeSeries::one(&ctx, 6), r.shift_pi(1).truncate_prec(6)];
        let j = [j.0, j.1];
        let rv: Vec<FakeSeries> = vec.iter().map(|e| r.mul(e).unwrap()).collect();
        let lhs = m.delta_falling(&j, &rv).unwrap();
        let mut rhs = vec![FakeSeries::zero(&ctx, 6); 2];
        for a in 0..=j[0] {
            for b in 0..=j[1] {
                let dr = falling_partial(&r, &[a, b]).scale_int(binom(j[0], a) * binom(j[1], b));
                let dv = m.delta_falling(&[j[0] - a, j[1] - b], &vec).unwrap();
                for k in 0..2 {
                    rhs[k] = rhs[k].add(&dr.mul(&dv[k]).unwrap()).unwrap();
                }
            }
        }
        for k in 0..2 {
            prop_assert!(lhs[k].approx_eq(&rhs[k]), "J = {:?}, component {}", j, k);
        }
    }

    #[test]
    fn compatibility_survives_gauge_change(z in prop::array::uniform2(-4i64..=4), u in quad(2, 3), twist in 0i32..2) {
        let ctx = plane(6);
        let s = FrobeniusLift::standard(&ctx);
        let good = monomial_module(&s, &z, 6).unwrap().tensor(&DModule::trivial(&s, 2, 6)).unwrap();
        let good = DModule::new(s.clone(), good.a().map(|e| e.truncate_prec(6)), Some(good.connection().unwrap().to_vec())).unwrap();
        let bad = good.twist(twist).with_connection(vec![SeriesMatrix::identity(&ctx, 2, 6).scale_scalar(&ctx.ring().from_int(1, 6)); 2]).unwrap();
        let u = near_identity(&ctx, &u);
        prop_assert!(good.check_compatibility().unwrap().pass);
        prop_assert!(good.gauge_change(&u).unwrap().check_compatibility().unwrap().pass);
        let before = bad.check_compatibility().unwrap().pass;
        let after = bad.gauge_change(&u).unwrap().check_compatibility().unwrap().pass;
        prop_assert_eq!(before, after);
    }

    #[test]
    fn gauge_round_trip_and_dual_twist(z in prop::array::uniform2(-4i64..=4), u in quad(2, 3), c in -2i32..=2) {
        let ctx = plane(6);
        let s = FrobeniusLift::standard(&ctx);
        let m = monomial_module(&s, &z, 6).unwrap().tensor(&DModule::trivial(&s, 2, 6)).unwrap();
        let u = near_identity(&ctx, &u);
        let uinv = matrix_inverse(&u).unwrap();
        let back = m.gauge_change(&u).unwrap().gauge_change(&uinv).unwrap();
        prop_assert!(same_module(&back, &m));
        let lhs = m.twist(c).dual().unwrap();
        let rhs = m.dual().unwrap().twist(-c);
        prop_assert!(same_module(&lhs, &rhs));
    }

    #[test]
    fn trivialized_columns_are_f_invariant(u in quad(2, 3)) {
        let ctx = plane(6);
        let s = FrobeniusLift::standard(&ctx);
        let v = near_identity(&ctx, &u);
        let a = v.mul(&matrix_inverse(&s.apply_matrix(&v).unwrap()).unwrap()).unwrap().truncate_prec(6);
        let m = DModule::new(s.clone(), a, None).unwrap();
        let r = trivialize_unit_root(&m, 6).unwrap();
        prop_assert!(r.obstruction.is_none());
        for j in 0..2 {
            prop_assert!(f_invariant_check(&m, &r.u.column(j)).unwrap());
        }
    }

    #[test]
    fn h1_steps_preserve_cocycles(a in terms(3, 6), d in 1i32..=2) {
        let ctx = plane(6);
        let s = FrobeniusLift::standard(&ctx);
        let cls = cocycle_from_potential(&s, d, &series(&ctx, &a)).unwrap();
        let red = h1_reduce(&s, &cls, &LambdaBound::PosInf).unwrap();
        let mut cur: H1Class = cls.clone();
        for step in &red.transcript {
            cur = cur.add_coboundary(&s, &step.w).unwrap();
            prop_assert!(cur.is_cocycle(&s).unwrap(), "after {}", step.label);
        }
        prop_assert!(cur.approx_eq(&red.class));
    }

    #[test]
    fn derived_connection_is_unique(z in prop::array::uniform2(-5i64..=5), e in terms(2, 3)) {
        let ctx = plane(6);
        let s = FrobeniusLift::standard(&ctx);
        let a = scalar(FakeSeries::monomial(&ctx, &z, ctx.ring().one(6)));
        let m = DModule::new(s, a, None).unwrap().derive_connection().unwrap();
        let n = m.connection().unwrap();
        let bump = series(&ctx, &e).shift_pi(1).truncate_prec(6);
        let start: Vec<SeriesMatrix> = n.iter().map(|x| x.add(&scalar(bump.clone())).unwrap()).collect();
        let again = m.with_connection(start).unwrap().derive_connection().unwrap();
        prop_assert!(same_module(&again, &m));
    }
}
