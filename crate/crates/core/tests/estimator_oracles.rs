use kdisc::bq::{bq_posterior, KernelEmbedding, Measure};
use kdisc::calibration::Partition;
use kdisc::kqd::{direction_terms, sample_directions, KqdConfig, QuantileWeighting};
use kdisc::mmd::{mmd2_linear, mmd2_multi, mmd2_u, mmd2_v, mmd2_weighted, EmpiricalMeasure};
use kdisc::{JitterPolicy, KernelSpec, MaternOrder, Points, RngStream};
use nalgebra::DMatrix;

fn sample(rng: &mut RngStream, n: usize, d: usize, shift: f64) -> Points {
    Points::new(rng.normal(n * d).into_iter().map(|v| v + shift).collect(), d).unwrap()
}

fn kernels() -> Vec<KernelSpec> {
    vec![
        KernelSpec::gaussian(1.3, 0.8).unwrap(),
        KernelSpec::matern(MaternOrder::FiveHalves, 0.7, 1.1).unwrap(),
        KernelSpec::polynomial(3, 1.0, 1.0).unwrap(),
    ]
}

fn mean_k(k: &KernelSpec, a: &Points, b: &Points, skip_diag: bool) -> f64 {
    let mut acc = 0.0;
    let mut count = 0.0;
    for (i, x) in a.rows().enumerate() {
        for (j, y) in b.rows().enumerate() {
            if skip_diag && i == j {
                continue;
            }
            acc += k.eval(x, y).unwrap();
            count += 1.0;
        }
    }
    acc / count
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn v_and_u_statistics_match_brute_force() {
    let mut rng = RngStream::new(21);
    for k in kernels() {
        let x = sample(&mut rng, 17, 1, 0.0);
        let y = sample(&mut rng, 23, 1, 0.4);
        let v = mean_k(&k, &x, &x, false) + mean_k(&k, &y, &y, false) - 2.0 * mean_k(&k, &x, &y, false);
        let u = mean_k(&k, &x, &x, true) + mean_k(&k, &y, &y, true) - 2.0 * mean_k(&k, &x, &y, false);
        let (p, q) = (EmpiricalMeasure::uniform(x), EmpiricalMeasure::uniform(y));
        assert!(close(mmd2_v(&k, &p, &q).unwrap(), v, 1e-12));
        assert!(close(mmd2_u(&k, &p, &q).unwrap(), u, 1e-12));
    }
}

fn h(k: &KernelSpec, x: &Points, y: &Points, i: usize, j: usize) -> f64 {
    k.eval(x.row(i), x.row(j)).unwrap() + k.eval(y.row(i), y.row(j)).unwrap()
        - k.eval(x.row(i), y.row(j)).unwrap()
        - k.eval(x.row(j), y.row(i)).unwrap()
}

#[test]
fn multi_at_full_band_is_the_pair_average() {
    let mut rng = RngStream::new(22);
    for k in kernels() {
        let n = 15;
        let x = sample(&mut rng, n, 2, 0.0);
        let y = sample(&mut rng, n, 2, 0.3);
        let mut acc = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                acc += h(&k, &x, &y, i, j);
            }
        }
        let want = acc / (n * (n - 1) / 2) as f64;
        let (p, q) = (EmpiricalMeasure::uniform(x.clone()), EmpiricalMeasure::uniform(y.clone()));
        assert!(close(mmd2_multi(&k, &p, &q, n - 1).unwrap(), want, 1e-12));
        let lin = (0..n / 2).map(|b| h(&k, &x, &y, 2 * b, 2 * b + 1)).sum::<f64>() / (n / 2) as f64;
        assert!(close(mmd2_linear(&k, &p, &q).unwrap(), lin, 1e-12));
    }
}

#[test]
fn uniform_weights_reduce_to_v_statistic() {
    let mut rng = RngStream::new(23);
    for k in kernels() {
        let x = sample(&mut rng, 12, 1, 0.0);
        let y = sample(&mut rng, 9, 1, 1.0);
        let w = EmpiricalMeasure::weighted(x.clone(), vec![1.0 / 12.0; 12]).unwrap();
        let v = mmd2_v(&k, &EmpiricalMeasure::uniform(x), &EmpiricalMeasure::uniform(y.clone())).unwrap();
        let got = mmd2_weighted(&k, &w, &EmpiricalMeasure::uniform(y)).unwrap();
        assert!(close(got, v, 1e-12), "{got} vs {v}");
    }
}

#[test]
fn bq_matches_dense_quadratic_form() {
    let mut rng = RngStream::new(24);
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let measure = Measure::gaussian(vec![0.2, -0.1], cov).unwrap();
    let k = KernelSpec::gaussian(1.0, 1.2).unwrap();
    let emb = KernelEmbedding::new(k, measure.clone()).unwrap();
    let nodes = measure.sample(12, &mut rng).unwrap();
    let f: Vec<f64> = nodes.rows().map(|r| r[0].sin() + r[1] * r[1]).collect();
    let post = bq_posterior(&emb, &nodes, &f, 0.0, &JitterPolicy::default()).unwrap();
    let w = &post.rule.weights;
    let mu = emb.kme_vector(&nodes).unwrap();
    let mut quad = emb.initial_error();
    for i in 0..nodes.len() {
        quad -= 2.0 * w[i] * mu[i];
        for j in 0..nodes.len() {
            quad += w[i] * w[j] * k.eval(nodes.row(i), nodes.row(j)).unwrap();
        }
    }
    let wf: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
    assert!((post.mean - wf).abs() < 1e-10);
    assert!((post.variance - quad).abs() < 1e-10, "{} vs {quad}", post.variance);
}

#[test]
fn brownian_uniform_grid_variance() {
    for (t, n) in [(1.0, 10), (2.0, 25), (0.5, 40)] {
        let part = Partition::uniform(n, t).unwrap();
        let nodes = Points::from_scalars(part.points());
        let emb = KernelEmbedding::new(KernelSpec::brownian(1.0).unwrap(), Measure::lebesgue(t).unwrap()).unwrap();
        let f = vec![0.0; n];
        let post = bq_posterior(&emb, &nodes, &f, 0.0, &JitterPolicy::default()).unwrap();
        let want = t * t * t / (12.0 * (n * n) as f64);
        assert!((post.variance - want).abs() < 1e-10, "{} vs {want}", post.variance);
    }
}

#[test]
fn gaussian_embedding_matches_monte_carlo() {
    let mut rng = RngStream::new(25);
    let draws = 200_000;
    for case in 0..6 {
        let d = 1 + case % 3;
        let a = DMatrix::from_fn(d, d, |_, _| 0.5 * rng.next_normal());
        let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.3;
        let mean: Vec<f64> = rng.normal(d);
        let measure = Measure::gaussian(mean.clone(), cov).unwrap();
        let k = KernelSpec::gaussian(1.0, 0.8 + rng.next_uniform()).unwrap();
        let emb = KernelEmbedding::new(k, measure.clone()).unwrap();
        let x: Vec<f64> = mean.iter().map(|m| m + 0.5 * rng.next_normal()).collect();
        let s = measure.sample(draws, &mut rng).unwrap();
        let mc = s.rows().map(|r| k.eval(&x, r).unwrap()).sum::<f64>() / draws as f64;
        let exact = emb.kme_eval(&x).unwrap();
        assert!((mc / exact - 1.0).abs() < 0.02, "case {case}: {mc} vs {exact}");
    }
}

#[test]
fn shared_directions_give_exact_symmetry() {
    let mut rng = RngStream::new(26);
    let x = sample(&mut rng, 40, 2, 0.0);
    let y = sample(&mut rng, 40, 2, 0.5);
    let k = KernelSpec::gaussian(1.0, 1.0).unwrap();
    let pooled = x.concat(&y).unwrap();
    let nu = QuantileWeighting::Uniform;
    for p in [1, 2, 3] {
        let dirs = sample_directions(&k, &KqdConfig::new(p, 7, 9, 3), &pooled).unwrap();
        let a = direction_terms(&dirs, &x, &y, p, &nu).unwrap();
        let b = direction_terms(&dirs, &y, &x, p, &nu).unwrap();
        assert_eq!(a.ekqd(), b.ekqd());
        assert_eq!(a.supkqd(), b.supkqd());
        let one = sample_directions(&k, &KqdConfig::new(p, 1, 9, 4), &pooled).unwrap();
        let t = direction_terms(&one, &x, &y, p, &nu).unwrap();
        assert_eq!(t.ekqd(), t.supkqd());
    }
}
