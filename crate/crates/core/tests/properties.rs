use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use thermopatch::imaging::{BBox, GrayImage};
use thermopatch::oracle::{Oracle, ToyOracle};
use thermopatch::rng::stream;
use thermopatch::scene::{dataset_scene, SceneConfig};

/// Warm pixels in the torso band of the box, as `(x, y)`.
fn torso_pixels(img: &GrayImage, b: &BBox, threshold: f64) -> Vec<(usize, usize)> {
    let (top, bottom) = ((b.y + 0.12 * b.h).ceil() as usize, (b.y + 0.55 * b.h) as usize);
    let mut out = Vec::new();
    for y in top..bottom {
        for x in b.x as usize..b.right() as usize {
            if img.get(x, y) > threshold {
                out.push((x, y));
            }
        }
    }
    out
}

#[test]
fn blacking_out_the_torso_lowers_the_score() {
    let cfg = SceneConfig::default();
    let oracle = ToyOracle::default();
    let threshold = 0.5 * (cfg.bg_level + cfg.body_level - cfg.body_gradient);
    let mut rng = stream(91, &[]);
    for i in 0..100 {
        let s = dataset_scene(5, i, &cfg).unwrap();
        let b = s.boxes[0];
        let clean = oracle.score(&s.image, &[b]).unwrap()[0];
        let mut torso = torso_pixels(&s.image, &b, threshold);
        assert!(torso.len() > 100, "scene {i}: {} torso pixels", torso.len());
        torso.shuffle(&mut rng);
        let keep = torso.len() - (torso.len() as f64 * rng.random_range(0.5..=1.0)).ceil() as usize;
        let dark: std::collections::HashSet<_> = torso[keep..].iter().copied().collect();
        let damaged = GrayImage::from_fn(s.image.width(), s.image.height(), |x, y| {
            if dark.contains(&(x, y)) {
                0.0
            } else {
                s.image.get(x, y)
            }
        });
        let hit = oracle.score(&damaged, &[b]).unwrap()[0];
        assert!(hit < clean, "scene {i}: {hit} !< {clean}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn toy_scores_stay_in_unit_interval(
        seed in any::<u64>(),
        w in 8usize..80,
        h in 8usize..80,
        fx in 0.0f64..1.0, fy in 0.0f64..1.0, fw in 0.05f64..1.0, fh in 0.05f64..1.0,
    ) {
        let mut rng = stream(seed, &[]);
        let img = GrayImage::from_fn(w, h, |_, _| rng.random::<f64>());
        let bw = (fw * w as f64).max(1.0);
        let bh = (fh * h as f64).max(1.0);
        let b = BBox::new(fx * (w as f64 - bw), fy * (h as f64 - bh), bw, bh);
        let s = ToyOracle::default().score(&img, &[b]).unwrap()[0];
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn flat_frames_score_at_the_floor(level in 0.0f64..=1.0) {
        let img = GrayImage::filled(40, 80, level);
        let s = ToyOracle::default().score(&img, &[BBox::new(0.0, 0.0, 40.0, 80.0)]).unwrap()[0];
        // zero variance gives zero correlation
        let floor = 1.0 / (1.0 + (2.2f64).exp());
        prop_assert!((s - floor).abs() < 1e-12);
    }
}
