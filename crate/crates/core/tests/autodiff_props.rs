use canm::autodiff::{Conv2dSpec, Resample};
use canm::verify::gradcheck::{gradcheck, GradcheckOptions};
use canm::{Result, Tensor, Var};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

/// Weighted sum so that no output coordinate is left out of the check.
fn readout(y: &Var) -> Result<Var> {
    let w = Tensor::from_fn(y.shape(), |idx| {
        let k: usize = idx.iter().fold(0, |a, &i| a * 7 + i);
        (0.37 * k as f64 + 0.1).sin() + 0.25
    });
    y.mul(&Var::constant(w))?.sum()
}

/// Values bounded away from zero, where abs and relu are smooth.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Tensor::rand_uniform(shape, 0.2, 1.5, &mut rng);
    Tensor::from_fn(shape, |idx| {
        let s = if idx.iter().sum::<usize>() % 2 == 0 { 1.0 } else { -1.0 };
        s * t.get(idx)
    })
}

fn randn(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(shape, 1.0, &mut rng)
}

fn check(f: impl Fn(&[Var]) -> Result<Var>, inputs: &[Tensor]) {
    let r = gradcheck(|v| readout(&f(v)?), inputs, &GradcheckOptions::new(TOL)).unwrap();
    assert!(r.passed, "max rel error {:e} over {} coords", r.max_rel_error, r.checked);
}

fn shape2() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 2)
}

fn shape3() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..4, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn binary_elementwise(shape in shape3(), seed in 0u64..1000) {
        let a = randn(&shape, seed);
        let b = away_from_zero(&shape, seed + 1);
        check(|v| v[0].add(&v[1]), &[a.clone(), b.clone()]);
        check(|v| v[0].sub(&v[1]), &[a.clone(), b.clone()]);
        check(|v| v[0].mul(&v[1]), &[a.clone(), b.clone()]);
        check(|v| v[0].div(&v[1]), &[a, b]);
    }

    #[test]
    fn broadcasting_add_and_mul(shape in shape3(), seed in 0u64..1000) {
        let a = randn(&shape, seed);
        let row = randn(&[shape[2]], seed + 2);
        check(|v| v[0].add(&v[1]), &[a.clone(), row.clone()]);
        check(|v| v[0].mul(&v[1]), &[a, row]);
    }

    #[test]
    fn unary_elementwise(shape in shape3(), seed in 0u64..1000) {
        let x = away_from_zero(&shape, seed);
        let pos = x.map(f64::abs);
        check(|v| v[0].neg(), std::slice::from_ref(&x));
        check(|v| v[0].scale(-1.7), std::slice::from_ref(&x));
        check(|v| v[0].add_scalar(0.3), std::slice::from_ref(&x));
        check(|v| v[0].exp(), std::slice::from_ref(&x));
        check(|v| v[0].gelu(), std::slice::from_ref(&x));
        check(|v| v[0].relu(), std::slice::from_ref(&x));
        check(|v| v[0].abs(), std::slice::from_ref(&x));
        check(|v| v[0].sqrt(), std::slice::from_ref(&pos));
        check(|v| v[0].powf(1.5), &[pos]);
    }

    #[test]
    fn reductions(shape in shape3(), seed in 0u64..1000) {
        let x = randn(&shape, seed);
        check(|v| v[0].sum(), std::slice::from_ref(&x));
        check(|v| v[0].mean(), std::slice::from_ref(&x));
        check(|v| v[0].sum_axes(&[1]), std::slice::from_ref(&x));
        check(|v| v[0].mean_axes(&[0, 2]), &[x]);
    }

    #[test]
    fn matmul(m in 1usize..5, k in 1usize..5, n in 1usize..5, seed in 0u64..1000) {
        check(|v| v[0].matmul(&v[1]), &[randn(&[m, k], seed), randn(&[k, n], seed + 1)]);
        check(|v| v[0].matmul(&v[1]), &[randn(&[2, m, k], seed + 2), randn(&[2, k, n], seed + 3)]);
    }

    #[test]
    fn softmax(shape in shape3(), seed in 0u64..1000) {
        let x = randn(&shape, seed);
        check(|v| v[0].softmax(2), std::slice::from_ref(&x));
        check(|v| v[0].softmax(0), std::slice::from_ref(&x));
        let last = shape[2];
        let mask: Vec<bool> = (0..x.len()).map(|i| i % last != 0 || last == 1).collect();
        check(|v| v[0].masked_softmax_last(&mask), &[x]);
    }

    #[test]
    fn shape_ops(shape in shape3(), seed in 0u64..1000) {
        let x = randn(&shape, seed);
        let n: usize = shape.iter().product();
        check(|v| v[0].reshape(&[n]), std::slice::from_ref(&x));
        check(|v| v[0].permute(&[2, 0, 1]), std::slice::from_ref(&x));
        check(|v| v[0].transpose_last(), std::slice::from_ref(&x));
        check(|v| v[0].roll(2, 1), std::slice::from_ref(&x));
        check(|v| v[0].roll(0, -1), std::slice::from_ref(&x));
        check(|v| Var::concat(&[&v[0], &v[1]], 1), &[x.clone(), randn(&shape, seed + 9)]);
        let len = shape[1];
        check(|v| v[0].narrow(1, len - 1, 1), std::slice::from_ref(&x));
        let pieces = shape[0];
        check(|v| Ok(v[0].chunk(pieces, 0)?.pop().expect("non-empty")), &[x]);
    }

    #[test]
    fn conv2d(c in 1usize..3, o in 1usize..3, h in 3usize..6, w in 3usize..6, seed in 0u64..1000) {
        let x = randn(&[1, c, h, w], seed);
        let k3 = randn(&[o, c, 3, 3], seed + 1);
        let bias = randn(&[o], seed + 2);
        check(|v| v[0].conv2d(&v[1], Some(&v[2]), Conv2dSpec::same(3)), &[x.clone(), k3.clone(), bias]);
        let strided = Conv2dSpec { stride: 2, padding: 1, groups: 1 };
        check(|v| v[0].conv2d(&v[1], None, strided), &[x.clone(), k3]);
        let dw = Conv2dSpec { stride: 1, padding: 1, groups: c };
        check(|v| v[0].conv2d(&v[1], None, dw), &[x, randn(&[c, 1, 3, 3], seed + 3)]);
    }

    #[test]
    fn resampling(c in 1usize..3, h in 1usize..3, w in 1usize..3, seed in 0u64..1000) {
        let x4 = randn(&[1, c, 4 * h, 4 * w], seed);
        check(|v| v[0].resample(Resample::AvgPoolDown2), std::slice::from_ref(&x4));
        check(|v| v[0].resample(Resample::AvgPoolDown4), &[x4]);
        let x = randn(&[1, 4 * c, h, w], seed + 1);
        check(|v| v[0].resample(Resample::PixelShuffleUp2), &[x]);
    }

    #[test]
    fn softmax_rows_sum_to_one(shape in shape2(), seed in 0u64..1000) {
        let x = randn(&shape, seed).map(|v| 30.0 * v);
        let y = Var::constant(x).softmax(1).unwrap();
        let cols = shape[1];
        for row in y.value().data().chunks(cols) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12, "row sum {s}");
        }
    }

    #[test]
    fn second_backward_is_bitwise(shape in shape3(), seed in 0u64..1000) {
        let x = Var::param(randn(&shape, seed));
        let w = Var::param(randn(&[shape[0], shape[2], 3], seed + 1));
        let build = || readout(&x.matmul(&w)?.gelu()?.softmax(2)?);
        build().unwrap().backward().unwrap();
        let (gx, gw) = (x.grad().unwrap(), w.grad().unwrap());
        x.zero_grad();
        w.zero_grad();
        build().unwrap().backward().unwrap();
        let (gx2, gw2) = (x.grad().unwrap(), w.grad().unwrap());
        prop_assert_eq!(gx.data(), gx2.data());
        prop_assert_eq!(gw.data(), gw2.data());
    }

    #[test]
    fn finite_inputs_stay_finite(shape in shape3(), seed in 0u64..1000) {
        let x = Var::constant(randn(&shape, seed).map(|v| 20.0 * v));
        let soft = x.softmax(2).unwrap().add(&x.gelu().unwrap()).unwrap();
        let y = soft.mul(&x.exp().unwrap().add_scalar(1.0).unwrap().sqrt().unwrap()).unwrap();
        prop_assert!(y.value().all_finite());
    }
}
