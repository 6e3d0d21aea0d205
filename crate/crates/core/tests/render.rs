use granulab_core::physics::Vec3;
use granulab_core::render::{background_value, RenderError};
use granulab_core::{read_png, render, write_png, BodyState, Image, ParticleRecord, RenderConfig, SceneMetadata, SimResult};

fn scene(spheres: &[(f64, f64, f64, f64)], table_size: f64) -> (SimResult, SceneMetadata) {
    let bodies = spheres
        .iter()
        .map(|&(x, y, z, d)| BodyState { center: Vec3::new(x, y, z), velocity: Vec3::ZERO, radius: d / 2.0, asleep: true })
        .collect();
    let particles = spheres.iter().map(|&(x, y, _, d)| ParticleRecord { size: d, x, y }).collect();
    let meta = SceneMetadata {
        shape_type: "crushed_rock".into(),
        size_mean: 10.0,
        size_sigma: 7.0,
        table_size,
        samplesize: spheres.len() as u64,
        particles,
    };
    let result = SimResult { bodies, steps_taken: 1, converged: true, penetration_tolerance: 0.01 };
    (result, meta)
}

/// White silhouettes on black: summed intensity is antialiased area.
fn silhouette_config() -> RenderConfig {
    RenderConfig {
        viewport: Some(320.0),
        ambient: 1.0,
        background_base_albedo: 0.0,
        background_noise_amplitude: 0.0,
        antialias_samples: 16,
        ..RenderConfig::default()
    }
}

#[test]
fn single_sphere_projects_to_analytic_disk() {
    let (result, meta) = scene(&[(0.0, 0.0, 10.0, 20.0)], 300.0);
    let img = render(&result, &meta, &silhouette_config(), 1).unwrap();
    let (mut area, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for row in 0..img.height {
        for col in 0..img.width {
            let w = f64::from(img.pixel(col, row)[0]) / 255.0;
            area += w;
            sx += w * (f64::from(col) + 0.5);
            sy += w * (f64::from(row) + 0.5);
        }
    }
    // 512 px over 320 mm is 1.6 px/mm, so a 10 mm radius is 16 px.
    let radius = (area / std::f64::consts::PI).sqrt();
    assert!((radius - 16.0).abs() < 0.25, "radius {radius}");
    assert!((sx / area - 256.0).abs() < 0.05 && (sy / area - 256.0).abs() < 0.05);

    // Every pixel whose center lies farther than 1 px outside the circle is background.
    for row in 0..img.height {
        for col in 0..img.width {
            let r = ((f64::from(col) + 0.5 - 256.0).powi(2) + (f64::from(row) + 0.5 - 256.0).powi(2)).sqrt();
            let v = img.pixel(col, row)[0];
            if r > 17.0 {
                assert_eq!(v, 0);
            }
            if r < 15.0 {
                assert_eq!(v, 255);
            }
        }
    }
}

#[test]
fn projected_radius_scales_with_size() {
    let cfg = silhouette_config();
    for d in [1.0, 4.0, 9.5, 17.3, 20.0] {
        let (result, meta) = scene(&[(12.3, -40.1, d / 2.0, d)], 300.0);
        let img = render(&result, &meta, &cfg, 3).unwrap();
        let area: f64 = img.pixels.iter().step_by(3).map(|&v| f64::from(v) / 255.0).sum();
        let radius = (area / std::f64::consts::PI).sqrt();
        assert!((radius - d / 2.0 * 1.6).abs() < 1.0, "d {d}: radius {radius}");
    }
}

/// Independent per-pixel oracle for a single center sample and no jitter.
fn oracle_pixel(spheres: &[(f64, f64, f64, f64)], cfg: &RenderConfig, col: u32, row: u32) -> Option<u8> {
    let s = f64::from(cfg.width) / cfg.viewport.unwrap();
    let x = (f64::from(col) + 0.5 - f64::from(cfg.width) / 2.0) / s;
    let y = (f64::from(cfg.height) / 2.0 - (f64::from(row) + 0.5)) / s;
    let [lx, ly, lz] = cfg.light_direction;
    let ln = (lx * lx + ly * ly + lz * lz).sqrt();
    let mut top: Option<(f64, f64)> = None;
    for &(cx, cy, cz, d) in spheres {
        let r = d / 2.0;
        let rho2 = (x - cx).powi(2) + (y - cy).powi(2);
        if rho2 > r * r {
            continue;
        }
        let surface = cz + (r * r - rho2).sqrt();
        let normal = [(x - cx) / r, (y - cy) / r, (surface - cz) / r];
        let lambert = ((normal[0] * lx + normal[1] * ly + normal[2] * lz) / ln).max(0.0);
        let value = (lambert * cfg.particle_base_albedo + cfg.ambient).min(1.0);
        if top.is_none_or(|(z, _)| surface > z) {
            top = Some((surface, value));
        }
    }
    top.map(|(_, v)| (v * 255.0).round() as u8)
}

#[test]
fn occlusion_shows_the_higher_surface() {
    let cfg = RenderConfig {
        width: 128,
        height: 128,
        viewport: Some(64.0),
        albedo_jitter: 0.0,
        antialias_samples: 1,
        ..RenderConfig::default()
    };
    // A small sphere resting on top of a large one, and a large one partly
    // covering a small one lying lower on the floor.
    let spheres = [(0.0, 0.0, 8.0, 16.0), (5.0, 3.0, 18.0, 6.0), (-12.0, -12.0, 3.0, 6.0), (-16.0, -8.0, 6.0, 12.0)];
    let (result, meta) = scene(&spheres, 40.0);
    let img = render(&result, &meta, &cfg, 9).unwrap();
    let mut contested = 0;
    for row in 0..img.height {
        for col in 0..img.width {
            let got = img.pixel(col, row)[0];
            match oracle_pixel(&spheres, &cfg, col, row) {
                Some(expect) => assert!(got.abs_diff(expect) <= 1, "({col},{row}): {got} vs {expect}"),
                None => {
                    let bg = (background_value(&cfg, 9, col, row) * 255.0).round() as u8;
                    assert_eq!(got, bg, "({col},{row})");
                }
            }
            let s = 2.0;
            let x = (f64::from(col) + 0.5 - 64.0) / s;
            let y = (64.0 - (f64::from(row) + 0.5)) / s;
            let hits = spheres.iter().filter(|(cx, cy, _, d)| (x - cx).powi(2) + (y - cy).powi(2) <= (d / 2.0).powi(2)).count();
            if hits > 1 {
                contested += 1;
            }
        }
    }
    assert!(contested > 50, "fixture should have contested pixels, got {contested}");
}

#[test]
fn order_of_bodies_does_not_change_the_image() {
    let cfg = RenderConfig { width: 96, height: 96, albedo_jitter: 0.0, ..RenderConfig::default() };
    let a = [(0.0, 0.0, 8.0, 16.0), (5.0, 3.0, 18.0, 6.0)];
    let b = [a[1], a[0]];
    let (ra, ma) = scene(&a, 40.0);
    let (rb, mb) = scene(&b, 40.0);
    assert_eq!(render(&ra, &ma, &cfg, 4).unwrap(), render(&rb, &mb, &cfg, 4).unwrap());
}

fn busy_scene() -> (SimResult, SceneMetadata) {
    let mut spheres = Vec::new();
    for i in 0..200 {
        let t = f64::from(i);
        let d = 4.0 + (t * 0.37).sin().abs() * 14.0;
        spheres.push(((t * 7.3) % 260.0 - 130.0, (t * 13.1) % 260.0 - 130.0, d / 2.0 + (i % 3) as f64, d));
    }
    scene(&spheres, 300.0)
}

#[test]
fn renders_are_byte_identical() {
    let (result, meta) = busy_scene();
    let cfg = RenderConfig::default();
    let a = render(&result, &meta, &cfg, 77).unwrap();
    let b = render(&result, &meta, &cfg, 77).unwrap();
    assert_eq!(a.pixels.len(), 512 * 512 * 3);
    assert!(a.pixels == b.pixels);
    let c = render(&result, &meta, &cfg, 78).unwrap();
    assert!(a.pixels != c.pixels, "scene seed must drive texture and albedo");
}

#[test]
fn particle_pixels_respect_shading_bound() {
    let (result, meta) = busy_scene();
    let cfg = RenderConfig::default();
    let img = render(&result, &meta, &cfg, 5).unwrap();
    let floor = (cfg.ambient * cfg.particle_base_albedo * (1.0 - cfg.albedo_jitter) * 255.0 - 1.0).floor() as u8;
    let scale = 512.0 / cfg.viewport_for(meta.table_size);
    let mut checked = 0;
    for row in 0..img.height {
        for col in 0..img.width {
            let x = (f64::from(col) + 0.5) / scale - 160.0;
            let y = 160.0 - (f64::from(row) + 0.5) / scale;
            // Only pixels fully inside some silhouette.
            let inside = result.bodies.iter().any(|b| {
                ((x - b.center.x).powi(2) + (y - b.center.y).powi(2)).sqrt() < b.radius - 1.0 / scale
            });
            if inside {
                checked += 1;
                let v = img.pixel(col, row);
                assert!(v[0] >= floor && v[0] == v[1] && v[1] == v[2]);
            }
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn png_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gradient.png");
    let mut img = Image::new(64, 64);
    for row in 0..64u32 {
        for col in 0..64u32 {
            let i = ((row * 64 + col) * 3) as usize;
            img.pixels[i..i + 3].copy_from_slice(&[(col * 4) as u8, (row * 4) as u8, ((col + row) * 2) as u8]);
        }
    }
    write_png(&img, &path).unwrap();
    assert_eq!(read_png(&path).unwrap(), img);
}

#[test]
fn png_decodes_with_independent_reader() {
    let (result, meta) = busy_scene();
    let img = render(&result, &meta, &RenderConfig::default(), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene_000001.png");
    write_png(&img, &path).unwrap();
    let decoded = image::open(&path).unwrap();
    assert_eq!(decoded.color(), image::ColorType::Rgb8);
    let rgb = decoded.to_rgb8();
    assert_eq!(rgb.dimensions(), (512, 512));
    assert_eq!(rgb.as_raw(), &img.pixels);
}

#[test]
fn unwritable_path_is_io_failure() {
    let img = Image::new(64, 64);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no").join("such").join("dir.png");
    assert!(matches!(write_png(&img, &missing), Err(RenderError::Io(_))));
    assert!(matches!(write_png(&img, std::path::Path::new("")), Err(RenderError::Io(_))));
}
