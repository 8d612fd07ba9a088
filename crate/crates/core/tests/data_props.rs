use canm::data::image_io::{decode_png, encode_png};
use canm::data::kspace::{keep_mask, spectrum};
use canm::data::{kspace_degrade, misalign, synth_pair, BitDepth, MisalignSpec};
use canm::metrics::psnr;
use canm::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn image(h: usize, w: usize, seed: u64) -> Tensor {
    Tensor::rand_uniform(&[h, w], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn sized() -> impl Strategy<Value = (usize, usize, usize)> {
    (prop::sample::select(vec![2usize, 4]), 1usize..5, 1usize..5).prop_map(|(s, a, b)| (s, 2 * s * a, 2 * s * b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kept_band_matches_target_spectrum((s, h, w) in sized(), seed in 0u64..1000) {
        let hr = image(h, w, seed);
        let d = kspace_degrade(&hr, s).unwrap();
        let (a, _, _) = spectrum(&d.raw_interp).unwrap();
        let (b, _, _) = spectrum(&hr).unwrap();
        let mask = keep_mask(h, w, s);
        for k in 0..h * w {
            let err = (a[k] - b[k]).norm();
            if mask[k] {
                prop_assert!(err <= 1e-9, "{err}");
            } else {
                prop_assert!(a[k].norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn degradation_is_linear((s, h, w) in sized(), seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let (x, y) = (image(h, w, seed), image(h, w, seed + 1));
        let mix = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
        let (dx, dy, dm) = (kspace_degrade(&x, s).unwrap(), kspace_degrade(&y, s).unwrap(), kspace_degrade(&mix, s).unwrap());
        let lin = |p: &Tensor, q: &Tensor| p.zip_map(q, |u, v| a * u + b * v).unwrap();
        prop_assert!(dm.raw_interp.max_abs_diff(&lin(&dx.raw_interp, &dy.raw_interp)) <= 1e-10);
        prop_assert!(dm.raw_small.max_abs_diff(&lin(&dx.raw_small, &dy.raw_small)) <= 1e-10);
    }

    #[test]
    fn zero_misalignment_is_bitwise(h in 1usize..20, w in 1usize..20, seed in 0u64..1000) {
        let img = image(h, w, seed);
        prop_assert_eq!(misalign(&img, &MisalignSpec::default()).unwrap(), img);
    }

    #[test]
    fn integer_translation_moves_pixels_exactly(tx in -4i32..=4, ty in -4i32..=4, seed in 0u64..1000) {
        let (h, w) = (16usize, 20usize);
        let img = image(h, w, seed);
        let out = misalign(&img, &MisalignSpec::new(tx as f64, ty as f64, 0.0).unwrap()).unwrap();
        for y in 0..h as i32 {
            for x in 0..w as i32 {
                let (sy, sx) = ((y - ty).clamp(0, h as i32 - 1), (x - tx).clamp(0, w as i32 - 1));
                prop_assert_eq!(out.get(&[y as usize, x as usize]), img.get(&[sy as usize, sx as usize]));
            }
        }
    }

    #[test]
    fn small_rotations_stay_close(theta in -3.0f64..3.0, seed in 0u64..50) {
        let pair = synth_pair(seed, 64, 64, 4).unwrap();
        let spec = MisalignSpec::new(0.0, 0.0, theta).unwrap();
        let back = misalign(&misalign(&pair.reference, &spec).unwrap(), &MisalignSpec::new(0.0, 0.0, -theta).unwrap()).unwrap();
        // bilinear resampling twice only blurs, it does not move structure
        prop_assert!(psnr(&back, &pair.reference, 1.0).unwrap() > 20.0);
    }

    #[test]
    fn png_roundtrips(h in 1usize..24, w in 1usize..24, seed in 0u64..1000) {
        let img = image(h, w, seed);
        let (back, depth) = decode_png(&encode_png(&img, BitDepth::Sixteen).unwrap()).unwrap();
        prop_assert_eq!(depth, BitDepth::Sixteen);
        prop_assert!(back.max_abs_diff(&img) <= 0.5 / 65535.0 + 1e-15);
        let bytes = encode_png(&img, BitDepth::Eight).unwrap();
        let (eight, _) = decode_png(&bytes).unwrap();
        prop_assert_eq!(encode_png(&eight, BitDepth::Eight).unwrap(), bytes);
    }
}

#[test]
fn synth_pairs_are_pure_and_degraded() {
    for seed in 0..4 {
        for s in [2, 4] {
            let a = synth_pair(seed, 64, 64, s).unwrap();
            assert_eq!(a, synth_pair(seed, 64, 64, s).unwrap());
            let p = psnr(&a.lr_interp, &a.hr, 1.0).unwrap();
            assert!(p < 60.0, "seed {seed} s {s}: {p} dB");
        }
    }
    assert_ne!(synth_pair(0, 64, 64, 4).unwrap(), synth_pair(1, 64, 64, 4).unwrap());
}
