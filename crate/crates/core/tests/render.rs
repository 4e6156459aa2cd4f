use droplens::dropfield::{DropField, Droplet, FieldConfig};
use droplens::protodrop::{generate_protodrop, ProtoDropTexture, ProtoParams};
use droplens::render::{apply_rain, composite, droplet_mask, refraction_source, render_frame, RenderParams, Renderer};
use droplens::ImageBuffer;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PPM: f64 = 5.0;

fn proto(gain: f64) -> ProtoDropTexture {
    generate_protodrop(ProtoParams { radius_px: 10.0, cap_ratio: 0.7, refraction_gain: gain, resolution: 21 }).unwrap()
}

fn field(drops: &[(f64, f64, f64)]) -> DropField {
    let mut f = DropField::new(FieldConfig { pixels_per_mm: PPM, ..FieldConfig::default() }).unwrap();
    for &(u, v, d) in drops {
        f.push(Droplet { id: 0, u, v, diameter_mm: d, sx: 1.0, sy: 1.0, age: 0 });
    }
    f
}

fn noise(w: usize, h: usize, c: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_vec(w, h, c, (0..w * h * c).map(|_| rng.random::<f32>()).collect()).unwrap()
}

#[test]
fn empty_field_composites_to_zero() {
    let comp = composite(&field(&[]), &proto(5.0), 33, 17).unwrap();
    assert!(comp.is_empty());
    assert_eq!(comp.coverage(), 0);
    for ch in [&comp.r, &comp.g, &comp.b] {
        assert!(ch.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn worked_source_position() {
    assert_eq!(refraction_source(100.0, 40.0, 12.0, 11.0, 0.5), (106.0, 45.5));
}

#[test]
fn lone_drop_at_texture_scale_reproduces_the_texture() {
    // 4 mm at 5 px/mm: footprint radius 10 px, same as the texture.
    let tex = proto(5.0);
    let comp = composite(&field(&[(20.0, 20.0, 4.0)]), &tex, 41, 41).unwrap();
    let mut checked = 0;
    for y in 0..41 {
        for x in 0..41 {
            let i = y * 41 + x;
            if comp.alpha[i] == 0.0 {
                continue;
            }
            let [r, g, b, a] = tex.texel(x - 10, y - 10);
            if a == 0.0 {
                // Only the outline itself lies off the texture support.
                assert_eq!((x as f64 - 20.0).hypot(y as f64 - 20.0), 10.0);
                continue;
            }
            assert!((comp.r[i] - r).abs() < 1e-3 && (comp.g[i] - g).abs() < 1e-3 && (comp.b[i] - b).abs() < 1e-3);
            checked += 1;
        }
    }
    // Isolated footprint is the disk of radius 10.
    assert!(checked > 250, "{checked}");
}

#[test]
fn two_drop_support_is_the_field_superlevel_set() {
    let f = field(&[(18.0, 20.0, 3.0), (31.0, 24.0, 4.0)]);
    let t = f.config().metaball_threshold;
    let comp = composite(&f, &proto(5.0), 50, 40).unwrap();
    for y in 0..40 {
        for x in 0..50 {
            let v = f.field_function(x as f64, y as f64);
            if (v - t).abs() < 1e-9 {
                continue;
            }
            assert_eq!(comp.alpha[y * 50 + x] > 0.0, v >= t, "({x}, {y}) field {v}");
        }
    }
}

#[test]
fn mask_is_binary_and_tracks_coverage() {
    let f = field(&[(10.0, 12.0, 2.5), (12.0, 30.0, 6.0)]);
    let img = noise(30, 40, 3, 1);
    let (_, mask, comp) = render_frame(&f, &proto(5.0), &img, &RenderParams::default()).unwrap();
    assert_eq!((mask.width(), mask.height(), mask.channels()), (30, 40, 1));
    for (m, a) in mask.as_slice().iter().zip(&comp.alpha) {
        assert!(*m == 0.0 || *m == 1.0);
        assert_eq!(*m == 1.0, *a > 0.0);
    }
    assert_eq!(droplet_mask(&comp), mask);
}

#[test]
fn renderer_handles_changing_frame_sizes() {
    let tex = proto(5.0);
    let f = field(&[(8.0, 8.0, 3.0)]);
    let mut renderer = Renderer::new();
    let mut out = ImageBuffer::new(1, 1, 1).unwrap();
    for (w, h, c) in [(20, 16, 3), (48, 9, 1), (20, 16, 3)] {
        let img = noise(w, h, c, w as u64);
        renderer.render(&f, &tex, &img, &RenderParams::default(), &mut out).unwrap();
        let (expected, _, comp) = render_frame(&f, &tex, &img, &RenderParams::default()).unwrap();
        assert_eq!(out, expected);
        assert_eq!(renderer.composite_map(), &comp);
    }
}

#[test]
fn invalid_defocus_is_rejected() {
    let comp = composite(&field(&[]), &proto(5.0), 4, 4).unwrap();
    let img = noise(4, 4, 1, 0);
    for sigma in [-1.0, f64::NAN, f64::INFINITY] {
        let err = apply_rain(&img, &comp, &RenderParams { defocus_sigma: sigma, dark_band: false }).unwrap_err();
        assert!(err.to_string().contains("defocus_sigma"), "{err}");
    }
}

fn drops() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-5.0f64..45.0, -5.0f64..45.0, 1.0f64..8.0), 0..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adding_a_drop_never_shrinks_the_mask(existing in drops(), extra in (0.0f64..40.0, 0.0f64..40.0, 1.0f64..8.0)) {
        let tex = proto(5.0);
        let before = composite(&field(&existing), &tex, 40, 40).unwrap();
        let mut more = existing.clone();
        more.push(extra);
        let after = composite(&field(&more), &tex, 40, 40).unwrap();
        for (a, b) in before.alpha.iter().zip(&after.alpha) {
            prop_assert!(*a == 0.0 || *b > 0.0);
        }
    }

    #[test]
    fn lone_drop_mask_is_its_ellipse(u in 5.0f64..35.0, v in 5.0f64..35.0, d in 1.0f64..8.0, sx in 0.8f64..1.25, sy in 0.8f64..1.25) {
        let mut f = field(&[]);
        f.push(Droplet { id: 0, u, v, diameter_mm: d, sx, sy, age: 0 });
        let comp = composite(&f, &proto(5.0), 40, 40).unwrap();
        let t = f.config().metaball_threshold;
        let (rx, ry) = (d * PPM / 2.0 * sx, d * PPM / 2.0 * sy);
        for y in 0..40 {
            for x in 0..40 {
                let q2 = ((x as f64 - u) / (1.5 * rx)).powi(2) + ((y as f64 - v) / (1.5 * ry)).powi(2);
                let k = if q2 < 1.0 { (1.0 - q2).powi(2) } else { 0.0 };
                if (k - t).abs() < 1e-9 {
                    continue;
                }
                prop_assert_eq!(comp.alpha[y * 40 + x] > 0.0, k >= t, "({}, {})", x, y);
            }
        }
    }

    #[test]
    fn rendered_values_stay_in_range(
        ds in drops(),
        gain in -300.0f64..300.0,
        sigma in 0.0f64..3.0,
        dark_band in any::<bool>(),
        channels in prop_oneof![Just(1usize), Just(3)],
        seed in any::<u64>(),
    ) {
        let img = noise(40, 40, channels, seed);
        let params = RenderParams { defocus_sigma: sigma, dark_band };
        let (out, _, comp) = render_frame(&field(&ds), &proto(gain), &img, &params).unwrap();
        for (i, (&o, &p)) in out.as_slice().iter().zip(img.as_slice()).enumerate() {
            prop_assert!((0.0..=1.0).contains(&o));
            if comp.alpha[i / channels] == 0.0 {
                prop_assert_eq!(o.to_bits(), p.to_bits());
            }
        }
        for &a in &comp.alpha {
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
