use kdisc::bq::Measure;
use kdisc::cbq::{cbq_fit, cbq_predict, klsmc_fit, lsmc_fit, CbqOptions, ConditionalTask};
use kdisc::kernels::gram;
use kdisc::{KernelSpec, MaternOrder, Points, RngStream};
use nalgebra::{DMatrix, DVector};

fn measure_at(th: &[f64]) -> kdisc::Result<Measure> {
    Measure::gaussian(vec![0.1 * th[0]], DMatrix::from_element(1, 1, th[0]))
}

fn task(t: usize, n: usize, seed: u64) -> ConditionalTask {
    let mut rng = RngStream::new(seed);
    let thetas: Vec<f64> = rng.uniform(t).iter().map(|u| 1.0 + 2.0 * u).collect();
    let thetas = Points::from_scalars(&thetas);
    let mut samples = Vec::new();
    let mut fvals = Vec::new();
    for (i, th) in thetas.rows().enumerate() {
        let x = measure_at(th).unwrap().sample(n, &mut rng.split_indexed("x", i)).unwrap();
        fvals.push(x.rows().map(|v| v[0] * v[0] + 0.5 * th[0]).collect());
        samples.push(x);
    }
    ConditionalTask::new(
        thetas,
        samples,
        fvals,
        measure_at,
        KernelSpec::gaussian(1.0, 1.5).unwrap(),
        KernelSpec::matern(MaternOrder::ThreeHalves, 1.0, 1.0).unwrap(),
    )
    .unwrap()
}

fn permuted(task: &ConditionalTask, perm: &[usize]) -> ConditionalTask {
    ConditionalTask {
        thetas: task.thetas.select(perm),
        samples: perm.iter().map(|&i| task.samples[i].clone()).collect(),
        fvals: perm.iter().map(|&i| task.fvals[i].clone()).collect(),
        measures: perm.iter().map(|&i| task.measures[i].clone()).collect(),
        ..task.clone()
    }
}

#[test]
fn parameter_order_does_not_matter() {
    let base = task(8, 10, 1);
    let perm = vec![3, 7, 0, 5, 1, 6, 2, 4];
    let opts = CbqOptions::default().with_lambda_theta(0.1);
    let a = cbq_fit(&base, &opts).unwrap();
    let b = cbq_fit(&permuted(&base, &perm), &opts).unwrap();
    for (j, &i) in perm.iter().enumerate() {
        assert_eq!(a.stage1[i], b.stage1[j]);
    }
    for q in [1.2, 2.0, 2.9] {
        let (pa, pb) = (cbq_predict(&a, &[q]).unwrap(), cbq_predict(&b, &[q]).unwrap());
        assert!((pa.mean - pb.mean).abs() < 1e-12);
        assert!((pa.variance - pb.variance).abs() < 1e-12);
    }
}

#[test]
fn larger_nugget_shrinks_toward_prior_mean() {
    let t = task(10, 8, 2);
    let opts = CbqOptions::default().with_standardize(false);
    let fits: Vec<_> = [0.0, 0.1, 1.0, 10.0]
        .iter()
        .map(|&l| cbq_fit(&t, &opts.clone().with_lambda_theta(l)).unwrap())
        .collect();
    let targets: Vec<f64> = fits[0].stage1.iter().map(|s| s.mean).collect();
    let fitted: Vec<Vec<f64>> = fits
        .iter()
        .map(|f| t.thetas.rows().map(|th| cbq_predict(f, th).unwrap().mean).collect())
        .collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let sizes: Vec<f64> = fitted.iter().map(|m| norm(m)).collect();
    let gaps: Vec<f64> = fitted
        .iter()
        .map(|m| norm(&m.iter().zip(&targets).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .collect();
    for w in sizes.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{sizes:?}");
    }
    for w in gaps.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "{gaps:?}");
    }
}

#[test]
fn quadrature_form_reproduces_mean() {
    let t = task(3, 4, 3);
    for standardize in [true, false] {
        let post = cbq_fit(&t, &CbqOptions::default().with_lambda_theta(0.05).with_standardize(standardize)).unwrap();
        for q in [1.0, 1.7, 2.5] {
            let pred = cbq_predict(&post, &[q]).unwrap();
            assert_eq!(pred.weights.len(), 12);
            assert!((pred.quadrature_value(&t) - pred.mean).abs() < 1e-10);
        }
    }
}

#[test]
fn standardization_round_trip() {
    let t = task(6, 7, 4);
    let t = t.with_kernels(t.kernel_x.with_lengthscale(0.5).unwrap(), t.kernel_theta);
    let std = t.standardization();
    let s2 = std.scale * std.scale;
    let lambda = 0.1;
    let standardized = cbq_fit(&t, &CbqOptions::default().with_lambda_theta(lambda)).unwrap();
    let mut raw = t.with_kernels(
        t.kernel_x.with_amplitude(t.kernel_x.amplitude * s2).unwrap(),
        t.kernel_theta.with_amplitude(t.kernel_theta.amplitude * s2).unwrap(),
    );
    for f in raw.fvals.iter_mut() {
        for v in f.iter_mut() {
            *v -= std.mean;
        }
    }
    let unstandardized = cbq_fit(
        &raw,
        &CbqOptions::default().with_lambda_theta(lambda * s2).with_standardize(false),
    )
    .unwrap();
    for q in [1.1, 2.0, 2.8] {
        let a = cbq_predict(&standardized, &[q]).unwrap();
        let b = cbq_predict(&unstandardized, &[q]).unwrap();
        assert!((a.mean - (b.mean + std.mean)).abs() < 1e-10, "{} vs {}", a.mean, b.mean + std.mean);
        assert!((a.variance - b.variance).abs() < 1e-10 * (1.0 + a.variance));
    }
}

#[test]
fn far_query_variance_is_prior() {
    let t = task(6, 5, 5);
    let post = cbq_fit(&t, &CbqOptions::default().with_standardize(false)).unwrap();
    let v = cbq_predict(&post, &[500.0]).unwrap().variance;
    assert!((v / t.kernel_theta.amplitude - 1.0).abs() < 0.01);
}

#[test]
fn kernel_ridge_matches_dense_solve() {
    let mut rng = RngStream::new(6);
    let th = Points::new(rng.normal(10), 2).unwrap();
    let y = rng.normal(5);
    let k = KernelSpec::gaussian(1.5, 0.9).unwrap();
    let ridge = 0.3;
    let model = klsmc_fit(&th, &y, &k, ridge).unwrap();
    let g = gram(&k, &th).unwrap().into_inner() + DMatrix::identity(5, 5) * ridge;
    let alpha = g.lu().solve(&DVector::from_column_slice(&y)).unwrap();
    for _ in 0..5 {
        let q = rng.normal(2);
        let want: f64 = th.rows().zip(alpha.iter()).map(|(r, a)| a * k.eval(&q, r).unwrap()).sum();
        assert!((model.predict(&q).unwrap() - want).abs() < 1e-10);
    }
}

#[test]
fn polynomial_recovered_exactly() {
    let mut rng = RngStream::new(7);
    let th = Points::new(rng.uniform(40), 2).unwrap();
    let f = |r: &[f64]| 0.5 - r[0] + 2.0 * r[1] + 3.0 * r[0] * r[1] - r[1] * r[1];
    let y: Vec<f64> = th.rows().map(f).collect();
    let model = lsmc_fit(&th, &y, 2).unwrap();
    for r in th.rows() {
        assert!((model.predict(r).unwrap() - f(r)).abs() < 1e-10);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    assert!((lsmc_fit(&th, &y, 0).unwrap().predict(&[9.0, 9.0]).unwrap() - mean).abs() < 1e-12);
}
