use droplens::image::ImageBuffer;
use droplens::protodrop::{generate_protodrop, ProtoDropTexture, ProtoParams};
use droplens::Error;
use proptest::prelude::*;

fn params(radius_px: f64, cap_ratio: f64, refraction_gain: f64, resolution: usize) -> ProtoParams {
    ProtoParams { radius_px, cap_ratio, refraction_gain, resolution }
}

/// Cap height above the footprint plane and its gradient, straight from the
/// sphere equation.
fn cap(p: &ProtoParams, dx: f64, dy: f64) -> Option<(f64, f64, f64)> {
    let a = p.radius_px;
    let h0 = p.cap_ratio * a;
    let rs = (a * a + h0 * h0) / (2.0 * h0);
    let rho2 = dx * dx + dy * dy;
    if rho2 >= a * a {
        return None;
    }
    let z = (rs * rs - rho2).sqrt();
    Some((z - (rs - h0), -dx / z, -dy / z))
}

#[test]
fn offsets_match_the_cap_gradient() {
    for cap_ratio in [0.25, 0.6, 1.0] {
        let p = params(32.0, cap_ratio, -7.5, 65);
        let tex = generate_protodrop(p).unwrap();
        let c = 32.0;
        for y in 0..65 {
            for x in 0..65 {
                let [r, g, b, alpha] = tex.texel(x, y);
                let (dx, dy) = (x as f64 - c, y as f64 - c);
                match cap(&p, dx, dy) {
                    Some((_, hx, hy)) => {
                        // Normal (-hx, -hy, 1): offsets are gain * n_x / n_z.
                        assert!((r - p.refraction_gain * -hx).abs() < 1e-6, "r at ({x}, {y})");
                        assert!((g - p.refraction_gain * -hy).abs() < 1e-6, "g at ({x}, {y})");
                        assert_eq!(alpha, 1.0);
                    }
                    None => assert_eq!([r, g, b, alpha], [0.0; 4], "({x}, {y})"),
                }
            }
        }
    }
}

#[test]
fn gradient_agrees_with_finite_differences() {
    let p = params(32.0, 0.6, 1.0, 65);
    let tex = generate_protodrop(p).unwrap();
    let eps = 1e-5;
    for (x, y) in [(40, 32), (32, 20), (50, 45), (10, 30)] {
        let (dx, dy) = (x as f64 - 32.0, y as f64 - 32.0);
        let h = |dx: f64, dy: f64| cap(&p, dx, dy).unwrap().0;
        let hx = (h(dx + eps, dy) - h(dx - eps, dy)) / (2.0 * eps);
        let hy = (h(dx, dy + eps) - h(dx, dy - eps)) / (2.0 * eps);
        let [r, g, _, _] = tex.texel(x, y);
        assert!((r + hx).abs() < 1e-6, "({x}, {y}): {r} vs {}", -hx);
        assert!((g + hy).abs() < 1e-6, "({x}, {y}): {g} vs {}", -hy);
    }
}

#[test]
fn thickness_is_normalized_cap_height() {
    let p = params(20.0, 0.5, 3.0, 41);
    let tex = generate_protodrop(p).unwrap();
    let apex = cap(&p, 0.0, 0.0).unwrap().0;
    for y in 0..41 {
        for x in 0..41 {
            let b = tex.texel(x, y)[2];
            if let Some((h, _, _)) = cap(&p, x as f64 - 20.0, y as f64 - 20.0) {
                assert!((b - h / apex).abs() < 1e-12);
            }
        }
    }
    assert_eq!(tex.texel(20, 20)[2], 1.0);
}

#[test]
fn wrong_channel_count_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.png");
    generate_protodrop(params(8.0, 0.5, 2.0, 17)).unwrap().save(&path).unwrap();
    ImageBuffer::new(17, 17, 3).unwrap().save_png(&path).unwrap();
    let err = ProtoDropTexture::load(&path).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");
    assert!(err.to_string().contains("4 channels"));
}

#[test]
fn missing_sidecar_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.png");
    generate_protodrop(params(8.0, 0.5, 2.0, 17)).unwrap().save(&path).unwrap();
    std::fs::remove_file(ProtoDropTexture::sidecar_path(&path)).unwrap();
    assert!(matches!(ProtoDropTexture::load(&path), Err(Error::Io { .. })));
}

#[test]
fn zero_alpha_texture_round_trips_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.png");
    let n = 9 * 9;
    let tex = ProtoDropTexture::from_channels(9, 9, [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]], params(4.0, 0.5, 1.0, 9))
        .unwrap();
    tex.save(&path).unwrap();
    let back = ProtoDropTexture::load(&path).unwrap();
    for ch in [back.r(), back.g(), back.b(), back.alpha()] {
        assert!(ch.iter().all(|&v| v == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn save_load_equals_quantized(
        radius in 2.0f64..24.0,
        cap_ratio in 0.05f64..=1.0,
        gain in -200.0f64..200.0,
        extra in 0usize..6,
    ) {
        let resolution = (2.0 * radius).ceil() as usize + extra;
        let tex = generate_protodrop(params(radius, cap_ratio, gain, resolution)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        tex.save(&path).unwrap();
        let back = ProtoDropTexture::load(&path).unwrap();
        prop_assert_eq!(back, tex.quantized());
    }

    #[test]
    fn invariants_hold(radius in 2.0f64..24.0, cap_ratio in 0.05f64..=1.0, gain in -200.0f64..200.0, extra in 0usize..6) {
        let resolution = (2.0 * radius).ceil() as usize + extra;
        let tex = generate_protodrop(params(radius, cap_ratio, gain, resolution)).unwrap();
        let (w, h) = (tex.width(), tex.height());
        let (cx, cy) = tex.center();
        for y in 0..h {
            for x in 0..w {
                let [r, g, b, a] = tex.texel(x, y);
                let rho = (x as f64 - cx).hypot(y as f64 - cy);
                prop_assert_eq!(a > 0.0, rho < radius);
                if a == 0.0 {
                    prop_assert_eq!([r, g, b], [0.0; 3]);
                }
                prop_assert!((0.0..=1.0).contains(&b));
                let [rm, ..] = tex.texel(w - 1 - x, y);
                let [_, gm, ..] = tex.texel(x, h - 1 - y);
                prop_assert!((r + rm).abs() < 1e-9 * gain.abs().max(1.0));
                prop_assert!((g + gm).abs() < 1e-9 * gain.abs().max(1.0));
            }
        }
        // Thickness does not increase moving outward along the +x axis.
        let row = cy.round() as usize;
        let mut prev = f64::INFINITY;
        for x in cx.ceil() as usize..w {
            let b = tex.texel(x, row)[2];
            prop_assert!(b <= prev);
            prev = b;
        }
        let peak = tex.b().iter().cloned().fold(0.0, f64::max);
        prop_assert_eq!(peak, 1.0);
    }
}
