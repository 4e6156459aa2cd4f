use droplens::metrics::{
    binary_seg_stats, confusion_matrix, multiclass_miou, per_class_iou, psnr, report, ssim, BinaryMask, LabelMap, SegStats,
};
use droplens::ImageBuffer;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(w: usize, h: usize, c: usize, lo: f32, hi: f32, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_vec(w, h, c, (0..w * h * c).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn map(img: &ImageBuffer, f: impl Fn(f32) -> f32) -> ImageBuffer {
    ImageBuffer::from_vec(img.width(), img.height(), img.channels(), img.as_slice().iter().map(|&v| f(v)).collect()).unwrap()
}

/// SSIM with the full 2D window written out, on a single-channel image.
fn brute_ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let total: f64 = g.iter().sum();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (w, h) = a.dims();
    let mut sum = 0.0;
    let mut n = 0;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..11 {
                for i in 0..11 {
                    let wt = g[i] * g[j] / (total * total);
                    let x = a.get(x0 + i, y0 + j, 0) as f64;
                    let y = b.get(x0 + i, y0 + j, 0) as f64;
                    mx += wt * x;
                    my += wt * y;
                    xx += wt * x * x;
                    yy += wt * y * y;
                    xy += wt * x * y;
                }
            }
            let (vx, vy, cov) = (xx - mx * mx, yy - my * my, xy - mx * my);
            sum += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            n += 1;
        }
    }
    sum / n as f64
}

#[test]
fn constant_offset_psnr() {
    let a = random_image(40, 30, 3, 0.0, 1.0 - 16.0 / 255.0, 1);
    let b = map(&a, |v| v + 16.0 / 255.0);
    let p = psnr(&a, &b, 1.0).unwrap();
    assert!((p - 24.05).abs() < 0.01, "{p}");
    let direct = 20.0 * (255.0f64 / 16.0).log10();
    assert!((p - direct).abs() < 1e-5);
}

#[test]
fn identical_images() {
    let a = random_image(24, 20, 3, 0.0, 1.0, 2);
    let r = report(&a, &a).unwrap();
    assert_eq!(r.psnr_db, f64::INFINITY);
    assert!((r.ssim - 1.0).abs() < 1e-12);
}

#[test]
fn metrics_are_symmetric() {
    let a = random_image(32, 24, 3, 0.0, 1.0, 3);
    let b = random_image(32, 24, 3, 0.0, 1.0, 4);
    assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
    assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
}

#[test]
fn inverted_binary_image_is_anticorrelated() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = (0..24 * 24).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
    let x = ImageBuffer::from_vec(24, 24, 1, data).unwrap();
    let y = map(&x, |v| 1.0 - v);
    let s = ssim(&x, &y).unwrap();
    assert!((-1.0..0.0).contains(&s), "{s}");
    assert!((s - brute_ssim(&x, &y)).abs() < 1e-9);
}

#[test]
fn ssim_matches_the_direct_window_sum() {
    for seed in 0..5 {
        let a = random_image(19, 23, 1, 0.0, 1.0, seed);
        let b = map(&a, |v| (v * 0.7 + 0.1).clamp(0.0, 1.0));
        let noisy = random_image(19, 23, 1, 0.0, 1.0, seed + 100);
        for other in [&b, &noisy] {
            assert!((ssim(&a, other).unwrap() - brute_ssim(&a, other)).abs() < 1e-9);
        }
    }
}

#[test]
fn undersized_and_mismatched_inputs_are_errors() {
    let small = random_image(10, 40, 1, 0.0, 1.0, 0);
    assert!(ssim(&small, &small).is_err());
    let a = random_image(16, 16, 1, 0.0, 1.0, 0);
    let b = random_image(16, 16, 3, 0.0, 1.0, 0);
    assert!(psnr(&a, &b, 1.0).is_err());
    assert!(ssim(&a, &b).is_err());
}

#[test]
fn psnr_falls_as_noise_grows() {
    let base = random_image(32, 32, 3, 0.2, 0.8, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let unit: Vec<f32> = (0..32 * 32 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut last = f64::INFINITY;
    for amp in [0.01f32, 0.03, 0.1, 0.2] {
        let noisy = ImageBuffer::from_vec(
            32,
            32,
            3,
            base.as_slice().iter().zip(&unit).map(|(&b, &n)| b + amp * n).collect(),
        )
        .unwrap();
        let p = psnr(&base, &noisy, 1.0).unwrap();
        assert!(p < last);
        last = p;
    }
}

#[test]
fn two_by_two_segmentation() {
    let pred = BinaryMask::new(2, 2, vec![true, true, false, false]).unwrap();
    let gt = BinaryMask::new(2, 2, vec![true, false, true, false]).unwrap();
    let s = binary_seg_stats(&pred, &gt).unwrap();
    assert_eq!((s.tp, s.fp, s.fn_, s.tn), (1, 1, 1, 1));
    assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    assert!((s.iou - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn empty_prediction_and_truth_give_zero_ratios() {
    let none = BinaryMask::new(3, 3, vec![false; 9]).unwrap();
    let s = binary_seg_stats(&none, &none).unwrap();
    assert_eq!(s, SegStats::from_counts(0, 0, 0, 9));
    assert_eq!((s.precision, s.recall, s.f1, s.iou), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn crafted_three_class_miou() {
    #[rustfmt::skip]
    let gt = vec![
        0, 0, 1, 1,
        0, 0, 1, 1,
        2, 2, 2, 2,
        2, 2, 2, 255,
    ];
    #[rustfmt::skip]
    let pred = vec![
        0, 1, 1, 1,
        0, 0, 1, 1,
        2, 2, 0, 2,
        2, 2, 2, 0,
    ];
    let (gt, pred) = (LabelMap::new(4, 4, gt).unwrap(), LabelMap::new(4, 4, pred).unwrap());
    let ious = per_class_iou(&pred, &gt, 3, Some(255)).unwrap();
    let expected = [0.6, 0.8, 6.0 / 7.0];
    for ((c, v), e) in ious.iter().zip(expected) {
        assert!((v - e).abs() < 1e-12, "class {c}: {v}");
    }
    let m = multiclass_miou(&pred, &gt, 3, Some(255)).unwrap();
    assert!((m - expected.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    assert_eq!(confusion_matrix(&pred, &gt, 3, Some(255)).unwrap().iter().flatten().sum::<u64>(), 15);
}

#[test]
fn disjoint_labels_score_zero() {
    let gt = LabelMap::new(2, 2, vec![0, 0, 1, 1]).unwrap();
    let pred = LabelMap::new(2, 2, vec![1, 1, 0, 0]).unwrap();
    assert_eq!(multiclass_miou(&pred, &gt, 2, None).unwrap(), 0.0);
}

#[test]
fn out_of_range_labels_are_rejected() {
    let gt = LabelMap::new(2, 1, vec![0, 3]).unwrap();
    let pred = LabelMap::new(2, 1, vec![0, 0]).unwrap();
    assert!(multiclass_miou(&pred, &gt, 3, Some(255)).is_err());
}

proptest! {
    #[test]
    fn miou_ignores_class_names(
        data in prop::collection::vec((0u32..4, 0u32..4), 36),
        perm in Just(vec![0u32, 1, 2, 3]).prop_shuffle(),
    ) {
        let (p, g): (Vec<u32>, Vec<u32>) = data.into_iter().unzip();
        let pred = LabelMap::new(6, 6, p.clone()).unwrap();
        let gt = LabelMap::new(6, 6, g.clone()).unwrap();
        let pred2 = LabelMap::new(6, 6, p.iter().map(|&l| perm[l as usize]).collect()).unwrap();
        let gt2 = LabelMap::new(6, 6, g.iter().map(|&l| perm[l as usize]).collect()).unwrap();
        let a = multiclass_miou(&pred, &gt, 4, None).unwrap();
        let b = multiclass_miou(&pred2, &gt2, 4, None).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn f1_and_iou_agree(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let (p, g): (Vec<bool>, Vec<bool>) = bits.iter().cloned().unzip();
        let n = p.len();
        let s = binary_seg_stats(&BinaryMask::new(n, 1, p).unwrap(), &BinaryMask::new(n, 1, g).unwrap()).unwrap();
        prop_assert_eq!(s.tp + s.fp + s.fn_ + s.tn, n as u64);
        prop_assert!((s.f1 - 2.0 * s.iou / (1.0 + s.iou)).abs() < 1e-12);
    }
}
