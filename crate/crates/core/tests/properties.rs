use nalgebra::DMatrix;
use proptest::prelude::*;

use spfun::apps::lemma::{lemma1_check, random_pairs, Objective};
use spfun::apps::network::{build_reduced_network, is_connected, laplacian, ones_complement};
use spfun::apps::source_seeking::{delta_e, saturation, SourceSeekingScenario};
use spfun::catalog::CurveSpec;
use spfun::comparison::{
    check_small_gain, compose, construct_sigma, invert_numeric, Bracket, ComparisonCurve, LogGrid,
};
use spfun::system::{simulate, Dims, PerturbedSystem, SimConfig};

fn kinf_spec() -> impl Strategy<Value = CurveSpec> {
    let leaf = prop_oneof![
        (0.1f64..10.0).prop_map(|k| CurveSpec::Linear { k }),
        (0.1f64..10.0, 0.3f64..3.0).prop_map(|(k, p)| CurveSpec::Power { k, p }),
    ];
    leaf.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..3).prop_map(|terms| CurveSpec::Sum { terms }),
            (inner.clone(), inner).prop_map(|(o, i)| CurveSpec::Compose {
                outer: Box::new(o),
                inner: Box::new(i)
            }),
        ]
    })
}

/// Random connected graph: a spanning path plus random extra edges.
fn connected_graph() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..7).prop_flat_map(|n| {
        prop::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
            let mut a = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    if j == i + 1 || bits[i * n + j] {
                        a[(i, j)] = 1.0;
                        a[(j, i)] = 1.0;
                    }
                }
            }
            a
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_is_right_inverse(spec in kinf_spec(), y in 1e-4f64..1e4) {
        let c = spec.build().unwrap();
        let r = invert_numeric(&c, y, Bracket::default()).unwrap();
        prop_assert!((c.eval(r) - y).abs() <= 1e-9 * y);
        let r2 = c.inverse().eval(y);
        prop_assert!((c.eval(r2) - y).abs() <= 1e-9 * y);
    }

    #[test]
    fn compose_is_associative(a in kinf_spec(), b in kinf_spec(), c in kinf_spec(), r in 1e-3f64..1e2) {
        let (a, b, c) = (a.build().unwrap(), b.build().unwrap(), c.build().unwrap());
        let left = compose(&compose(&a, &b), &c).eval(r);
        let right = compose(&a, &compose(&b, &c)).eval(r);
        prop_assert!((left - right).abs() <= 1e-12 * left.abs().max(1e-300));
    }

    #[test]
    fn small_gain_of_linear_pair(k1 in 0.05f64..5.0, k2 in 0.05f64..5.0) {
        let report = check_small_gain(&ComparisonCurve::linear(k1), &ComparisonCurve::linear(k2), &LogGrid::default()).unwrap();
        let product = k1 * k2;
        if product < 1.0 - 1e-6 {
            prop_assert!(report.pass);
            prop_assert!((report.worst_margin - (1.0 - product)).abs() < 1e-9);
        } else if product > 1.0 {
            prop_assert!(!report.pass);
        }
    }

    #[test]
    fn sigma_is_wedged(ks in 0.1f64..10.0, ps in 0.5f64..2.0, slack in 1.1f64..3.0, r in 1e-5f64..1e5) {
        let gamma_s = ComparisonCurve::power(ks, ps);
        let gamma_f = ComparisonCurve::power(ks * slack, ps).inverse();
        let sigma = construct_sigma(&gamma_s, &gamma_f).unwrap();
        let (lo, s, hi) = (gamma_s.eval(r), sigma.eval(r), gamma_f.inverse().eval(r));
        prop_assert!(lo < s && s < hi);
    }

    #[test]
    fn saturation_contract(v in prop::collection::vec(-20.0f64..20.0, 1..5)) {
        let s = saturation(&v);
        let norm = |u: &[f64]| u.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(norm(&s) <= 1.0 + 1e-15);
        if norm(&v) <= 1.0 {
            prop_assert_eq!(&s, &v);
        }
        if norm(&v) > 0.0 {
            prop_assert!(v.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() > 0.0);
        }
    }

    #[test]
    fn laplacian_structure(adj in connected_graph()) {
        prop_assert!(is_connected(&adj));
        let l = laplacian(&adj);
        let n = l.nrows();
        for i in 0..n {
            prop_assert!(l.row(i).sum().abs() < 1e-14);
        }
        prop_assert_eq!(&l, &l.transpose());
        prop_assert!(l.symmetric_eigenvalues().iter().all(|&e| e > -1e-12));
        let u1 = ones_complement(n);
        prop_assert!((u1.transpose() * &u1 - DMatrix::<f64>::identity(n - 1, n - 1)).norm() < 1e-12);
        prop_assert!(u1.row_sum().norm() < 1e-12);
    }

    #[test]
    fn lyapunov_solve_residual(adj in connected_graph(), dim in 1usize..3, mu in 0.2f64..5.0) {
        let mats = build_reduced_network(&adj, dim, mu).unwrap();
        prop_assert!(mats.spectral_abscissa() < 0.0);
        prop_assert!(mats.lyapunov_residual() <= 1e-8);
        prop_assert!(mats.p.symmetric_eigenvalues().iter().all(|&e| e > 0.0));
    }

    #[test]
    fn formation_offsets_cancel(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 2..7)) {
        let n = rows.len();
        let scn = SourceSeekingScenario::from_formation(
            &rows,
            spfun::apps::network::complete_graph(n),
            1.0,
            0.1,
            Objective::constant(5.0, 2),
            vec![0.0, 0.0],
            0.2,
        )
        .unwrap();
        for i in 0..n {
            for j in 0..n {
                for k in 0..2 {
                    prop_assert_eq!(scn.offsets[i][j][k], -scn.offsets[j][i][k]);
                }
            }
        }
        let d0 = scn.d_i0();
        let total = (0..2).map(|k| d0.iter().map(|d| d[k]).sum::<f64>().powi(2)).sum::<f64>().sqrt();
        prop_assert!(total <= 1e-15, "{}", total);
        prop_assert!(delta_e(&scn, &[0.3, -0.4]).iter().all(|v| v.abs() <= 1e-14));
    }

    #[test]
    fn lemma1_on_scaled_quadratics(scale in 0.1f64..10.0, seed in any::<u64>()) {
        let h = Objective::quadratic(vec![1.0, -2.0], scale);
        let report = lemma1_check(&h, h.theta, &random_pairs(2, 200, 10.0, seed));
        prop_assert!(report.pass);
        prop_assert!((report.worst_ratio - 0.5).abs() < 1e-6);
    }

    #[test]
    fn csv_round_trips(x0 in -5.0f64..5.0, z0 in -5.0f64..5.0) {
        let sys = PerturbedSystem::new("decay", Dims::new(1, 1, 0, 0))
            .slow(|x, _, _, out| out[0] = -x[0])
            .fast(|z, x, _, out| out[0] = -(z[0] - x[0]))
            .steady_state(|x, out| out[0] = x[0]);
        let traj = simulate(&sys, &[x0], &[z0], &SimConfig::rk4(1.0, 0.1)).unwrap();
        let csv = traj.to_csv();
        for (line, ((t, x), z)) in csv.lines().skip(1).zip(traj.times.iter().zip(&traj.xs).zip(&traj.zs)) {
            let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            prop_assert_eq!(v, vec![*t, x[0], z[0]]);
        }
    }
}
