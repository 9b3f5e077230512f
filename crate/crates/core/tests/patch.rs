use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tripatch_core::image::{psnr, RgbImage};
use tripatch_core::patch::{
    aug_angle_bound, crop_real_patch, perspective_augment, sample_scale, sample_valid_window, sample_window,
    scale_bounds, warp_yaw, AugSchedule, PatchSource, PatchSpec, ScaleSchedule, ValidRegion,
};
use tripatch_core::Error;

/// Low-frequency test image.
fn smooth_image(n: usize) -> RgbImage {
    RgbImage::from_fn(n, n, |x, y| {
        let (u, v) = (x as f64 / n as f64, y as f64 / n as f64);
        [
            0.5 + 0.3 * (6.0 * u).sin() * (4.0 * v).cos(),
            0.5 + 0.25 * (5.0 * (u + v)).cos(),
            0.4 + 0.3 * u * v,
        ]
    })
}

/// Independent bilinear resampler: pixel (col, row) of an h×h patch samples
/// the source at image-plane point u0 + s·g, where g is the pixel centre.
fn oracle_crop(img: &RgbImage, s: f64, u0: [f64; 2], h: usize) -> RgbImage {
    let (w, hh) = (img.width() as f64, img.height() as f64);
    RgbImage::from_fn(h, h, |col, row| {
        let gx = (col as f64 + 0.5) / h as f64 * 2.0 - 1.0;
        let gy = (row as f64 + 0.5) / h as f64 * 2.0 - 1.0;
        let ux = u0[0] + s * gx;
        let uy = u0[1] - s * gy;
        let px = ((ux + 1.0) / 2.0 * w - 0.5).clamp(0.0, w - 1.0);
        let py = ((1.0 - uy) / 2.0 * hh - 0.5).clamp(0.0, hh - 1.0);
        let mut out = [0.0; 3];
        for yy in 0..img.height() {
            for xx in 0..img.width() {
                let wgt = (1.0 - (px - xx as f64).abs()).max(0.0) * (1.0 - (py - yy as f64).abs()).max(0.0);
                if wgt > 0.0 {
                    let c = img.get(xx, yy);
                    for k in 0..3 {
                        out[k] += wgt * c[k];
                    }
                }
            }
        }
        out
    })
}

#[test]
fn schedules_hit_their_endpoints_exactly() {
    assert_eq!(scale_bounds(0.0), (0.6, 0.8));
    assert_eq!(scale_bounds(100.0), (0.25, 0.55));
    for t in [100.5, 150.0, 1e6] {
        assert_eq!(scale_bounds(t), (0.25, 0.55));
    }
    assert_eq!(aug_angle_bound(0.0), 0.0);
    assert_eq!(aug_angle_bound(100.0), 15.0);
    assert_eq!(aug_angle_bound(150.0), 15.0);
    assert!((aug_angle_bound(50.0) - 7.5).abs() < 1e-12);
}

#[test]
fn scale_draws_at_epoch_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let sched = ScaleSchedule::default();
    let n = 100_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let s = sample_scale(&sched, 0.0, &mut rng);
        assert!((0.6..=0.8).contains(&s));
        sum += s;
    }
    assert!((sum / n as f64 - 0.7).abs() < 0.002);
}

#[test]
fn window_draws_for_half_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..10_000 {
        let u = sample_window(0.5, &mut rng).unwrap();
        assert!(u[0].abs() <= 0.5 && u[1].abs() <= 0.5);
    }
    assert!(sample_window(0.0, &mut rng).is_err());
    assert!(matches!(
        PatchSpec::new(0.5, [0.6, 0.0], PatchSource::Real(0)),
        Err(Error::InvalidWindow { .. })
    ));
}

#[test]
fn full_window_crop_is_a_resize() {
    let img = smooth_image(40);
    let got = crop_real_patch(&img, 1.0, [0.0, 0.0], 16).unwrap();
    assert!(got.max_abs_diff(&oracle_crop(&img, 1.0, [0.0, 0.0], 16)) < 1e-12);
}

#[test]
fn eighth_scale_crop_of_512_image_is_pixel_exact() {
    let img = RgbImage::from_fn(512, 512, |x, y| [(x % 7) as f64 / 7.0, (y % 5) as f64 / 5.0, ((x + y) % 3) as f64 / 3.0]);
    // window covering pixels [64·3, 64·4) × [64·5, 64·6)
    let s = 64.0 / 512.0;
    let u0 = [-1.0 + (3.0 * 64.0 + 32.0) / 256.0, 1.0 - (5.0 * 64.0 + 32.0) / 256.0];
    let p = crop_real_patch(&img, s, u0, 64).unwrap();
    for i in 0..64 {
        for j in 0..64 {
            assert_eq!(p.get(j, i), img.get(192 + j, 320 + i));
        }
    }
}

#[test]
fn augmentation_respects_its_bound() {
    let img = smooth_image(16);
    assert!(matches!(
        perspective_augment(&img, 65.0, 7.6, aug_angle_bound(50.0)),
        Err(Error::ContractViolation(_))
    ));
    let w = perspective_augment(&img, 65.0, 0.0, aug_angle_bound(0.0)).unwrap();
    assert_eq!(w.image, img);
    assert!(w.mask.iter().all(|m| *m));
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let sched = AugSchedule::default();
    for t in [0.0, 20.0, 100.0, 300.0] {
        for _ in 0..200 {
            assert!(sched.sample(t, &mut rng).abs() <= sched.bound(t));
        }
    }
}

#[test]
fn warp_round_trip_psnr() {
    let img = smooth_image(128);
    for phi in [5.0, 10.0, 15.0] {
        let fwd = warp_yaw(&img, None, 65.0, phi).unwrap();
        let back = warp_yaw(&fwd.image, Some(&fwd.mask), 65.0, -phi).unwrap();
        let valid = back.mask.iter().filter(|m| **m).count();
        assert!(valid > 128 * 128 / 2);
        let p = psnr(&back.image, &img, Some(&back.mask));
        assert!(p >= 40.0, "phi {phi}: {p} dB");
    }
}

#[test]
fn warped_lines_stay_straight() {
    let n = 128;
    // a soft diagonal band through the image
    let (a, b) = (0.35, 30.0);
    let img = RgbImage::from_fn(n, n, |x, y| {
        let d = (x as f64 - (a * y as f64 + b)) / (1.0 + a * a).sqrt();
        let v = (-d * d / (2.0 * 1.5 * 1.5)).exp();
        [v; 3]
    });
    let w = warp_yaw(&img, None, 65.0, 12.0).unwrap();
    // sub-pixel centroid of the band per row
    let mut pts = Vec::new();
    for y in 8..n - 8 {
        let row: Vec<(usize, f64)> = (0..n)
            .filter(|&x| w.mask[y * n + x])
            .map(|x| (x, w.image.get(x, y)[0]))
            .collect();
        let (peak, _) = row.iter().copied().fold((0, 0.0), |acc, (x, v)| if v > acc.1 { (x, v) } else { acc });
        if peak < 6 || peak + 6 >= n || !(peak - 6..=peak + 6).all(|x| w.mask[y * n + x]) {
            continue;
        }
        let (mut m0, mut m1) = (0.0, 0.0);
        for x in peak - 6..=peak + 6 {
            let v = w.image.get(x, y)[0];
            m0 += v;
            m1 += v * x as f64;
        }
        pts.push((y as f64, m1 / m0));
    }
    assert!(pts.len() > 60);
    let k = pts.len() as f64;
    let (sy, sx) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (my, mx) = (sy / k, sx / k);
    let slope = pts.iter().map(|p| (p.0 - my) * (p.1 - mx)).sum::<f64>() / pts.iter().map(|p| (p.0 - my).powi(2)).sum::<f64>();
    let worst = pts.iter().map(|p| (p.1 - (mx + slope * (p.0 - my))).abs()).fold(0.0, f64::max);
    assert!(worst <= 0.25, "line-fit residual {worst}");
}

#[test]
fn valid_windows_avoid_masked_pixels() {
    let img = smooth_image(64);
    let w = warp_yaw(&img, None, 65.0, 15.0).unwrap();
    let region = ValidRegion::new(&w.mask, 64, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..200 {
        let s = rng.gen_range(0.25..0.55);
        let u0 = sample_valid_window(&region, s, &mut rng, 1000).unwrap();
        let (lo_x, hi_x) = (((u0[0] - s + 1.0) * 32.0 - 0.5).floor(), ((u0[0] + s + 1.0) * 32.0 - 0.5).ceil());
        let (lo_y, hi_y) = (((1.0 - u0[1] - s) * 32.0 - 0.5).floor(), ((1.0 - u0[1] + s) * 32.0 - 0.5).ceil());
        for y in lo_y.max(0.0) as usize..=(hi_y as usize).min(63) {
            for x in lo_x.max(0.0) as usize..=(hi_x as usize).min(63) {
                assert!(w.mask[y * 64 + x]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crop_matches_direct_loop_oracle(
        s in 0.05f64..=1.0,
        fx in -1.0f64..=1.0,
        fy in -1.0f64..=1.0,
        h in 1usize..12,
    ) {
        let img = smooth_image(24);
        let u0 = [fx * (1.0 - s), fy * (1.0 - s)];
        let got = crop_real_patch(&img, s, u0, h).unwrap();
        prop_assert!(got.max_abs_diff(&oracle_crop(&img, s, u0, h)) <= 1e-6);
    }

    #[test]
    fn windows_are_feasible(s in 1e-3f64..=1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = sample_window(s, &mut rng).unwrap();
        prop_assert!(u[0].abs() + s <= 1.0 + 1e-12 && u[1].abs() + s <= 1.0 + 1e-12);
        prop_assert!(PatchSpec::new(s, u, PatchSource::Generated(0)).is_ok());
    }

    #[test]
    fn schedule_bounds_are_ordered_and_monotone(t in 0.0f64..300.0, dt in 0.0f64..50.0) {
        let (lo, hi) = scale_bounds(t);
        let (lo2, hi2) = scale_bounds(t + dt);
        prop_assert!(0.0 < lo && lo <= hi && hi <= 1.0);
        prop_assert!(lo2 <= lo && hi2 <= hi);
        let a = aug_angle_bound(t);
        prop_assert!((0.0..=15.0).contains(&a) && aug_angle_bound(t + dt) >= a);
    }
}
