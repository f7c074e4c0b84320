use kdisc::calibration::{ml_estimate, rate_slope, Partition};
use kdisc::kernels::gram;
use kdisc::kqd::order_statistic;
use kdisc::mmd::{mmd2_u, mmd2_v, DiscrepancyEstimate, EmpiricalMeasure, Estimator};
use kdisc::{KernelSpec, MaternOrder, Points, RngStream};
use proptest::prelude::*;

fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
    (0.1f64..5.0, 0.2f64..3.0, 0usize..4).prop_map(|(a, l, f)| match f {
        0 => KernelSpec::gaussian(a, l).unwrap(),
        1 => KernelSpec::matern(MaternOrder::Half, a, l).unwrap(),
        2 => KernelSpec::matern(MaternOrder::ThreeHalves, a, l).unwrap(),
        _ => KernelSpec::matern(MaternOrder::FiveHalves, a, l).unwrap(),
    })
}

fn points(n: usize) -> impl Strategy<Value = Points> {
    prop::collection::vec(-3.0f64..3.0, n * 2).prop_map(|v| Points::new(v, 2).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_is_symmetric_psd(k in kernel_strategy(), x in points(12)) {
        let g = gram(&k, &x).unwrap().into_inner();
        prop_assert!((&g - g.transpose()).amax() <= 1e-12 * g.amax());
        let trace = g.trace();
        let eig = g.symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() >= -1e-10 * trace);
    }

    #[test]
    fn v_statistic_nonnegative_and_symmetric(k in kernel_strategy(), x in points(8), y in points(11)) {
        let (p, q) = (EmpiricalMeasure::uniform(x), EmpiricalMeasure::uniform(y));
        let a = mmd2_v(&k, &p, &q).unwrap();
        let b = mmd2_v(&k, &q, &p).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        let (ua, ub) = (mmd2_u(&k, &p, &q).unwrap(), mmd2_u(&k, &q, &p).unwrap());
        prop_assert!((ua - ub).abs() <= 1e-12 * (1.0 + ua.abs()));
    }

    #[test]
    fn order_statistic_is_a_sample_value(mut v in prop::collection::vec(-1e3f64..1e3, 1..50), a in 0.001f64..1.0) {
        let orig = v.clone();
        let q = order_statistic(&mut v, a).unwrap();
        prop_assert!(orig.contains(&q));
        let below = orig.iter().filter(|&&x| x <= q).count();
        prop_assert!(below as f64 >= a * orig.len() as f64 - 1e-9);
    }

    #[test]
    fn rate_slope_recovers_power_laws(c in 0.1f64..10.0, s in -3.0f64..2.0) {
        let ns = [100.0, 1000.0, 10000.0];
        let vals: Vec<f64> = ns.iter().map(|n: &f64| c * n.powf(s)).collect();
        prop_assert!((rate_slope(&ns, &vals).unwrap() - s).abs() < 1e-9);
    }

    #[test]
    fn ml_scales_quadratically(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut rng = RngStream::new(seed);
        let part = Partition::uniform(20, 1.0).unwrap();
        let f = rng.normal(20);
        let cf: Vec<f64> = f.iter().map(|v| c * v).collect();
        let a = ml_estimate(&part, &f).unwrap().value;
        let b = ml_estimate(&part, &cf).unwrap().value;
        prop_assert!((b - c * c * a).abs() <= 1e-10 * b.abs().max(1.0));
    }

    #[test]
    fn csv_value_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let k = KernelSpec::gaussian(1.0, 1.0).unwrap();
        let row = DiscrepancyEstimate::new(v, Estimator::U, 3, 4, &k).to_csv_row();
        let back: f64 = row[5].parse().unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn rng_splits_reproduce(seed in any::<u64>(), label in "[a-z]{1,8}", i in 0usize..1000) {
        let a = RngStream::new(seed).split(&label).split_indexed("rep", i).normal(4);
        let b = RngStream::new(seed).split(&label).split_indexed("rep", i).normal(4);
        prop_assert_eq!(a, b);
    }
}
