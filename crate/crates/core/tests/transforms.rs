use seistex::clbp::ClbpConfig;
use seistex::curvelet::{self, num_orientations, num_scales, CurveletConfig, CurveletPlan};
use seistex::lri::LriConfig;
use seistex::steerable::{build_pyramid, reconstruct, SteerableConfig};
use seistex::synth::Rng;
use seistex::GrayImage;

fn random_image(h: usize, w: usize, rng: &mut Rng) -> GrayImage {
    GrayImage::from_fn(h, w, |_, _| rng.uniform(0.0, 255.0))
}

fn relative_error(a: &GrayImage, b: &GrayImage) -> f64 {
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    (diff / a.energy()).sqrt()
}

#[test]
fn steerable_round_trip_on_random_images() {
    let cfg = SteerableConfig::default();
    let mut rng = Rng::new(11);
    for _ in 0..20 {
        let img = random_image(64, 64, &mut rng);
        let pyr = build_pyramid(&img, &cfg).unwrap();
        let back = reconstruct(&pyr, &cfg).unwrap();
        assert!(relative_error(&img, &back) <= 1e-4);
    }
}

#[test]
fn curvelet_round_trip_on_random_images() {
    let plan = CurveletPlan::new(64, 64, CurveletConfig::default()).unwrap();
    let mut rng = Rng::new(12);
    for _ in 0..20 {
        let img = random_image(64, 64, &mut rng);
        let back = plan.inverse(&plan.forward(&img).unwrap()).unwrap();
        assert!(relative_error(&img, &back) <= 1e-6);
    }
}

#[test]
fn curvelet_windows_partition_unity() {
    for (h, w) in [(64, 64), (150, 300), (37, 53)] {
        for finest_as_wavelet in [false, true] {
            let plan = CurveletPlan::new(h, w, CurveletConfig { finest_as_wavelet }).unwrap();
            for s in plan.window_energy() {
                assert!((s - 1.0).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn distinct_wedges_hold_all_energy_once() {
    let mut rng = Rng::new(3);
    let img = random_image(64, 96, &mut rng);
    let plan = CurveletPlan::new(64, 96, CurveletConfig::default()).unwrap();
    let full = plan.forward(&img).unwrap();
    let distinct = plan.forward_distinct(&img).unwrap();
    assert_eq!(distinct.len(), 1 + 8 + 16 + 16);
    for b in &distinct {
        let same = full
            .subbands
            .iter()
            .find(|f| f.scale == b.scale && f.wedge == b.wedge)
            .unwrap();
        assert_eq!(same.data, b.data);
    }
}

#[test]
fn formula_checks() {
    assert_eq!(num_scales(150, 300).unwrap(), 5);
    let k: Vec<usize> = (1..=4).map(num_orientations).collect();
    assert_eq!(k, [16, 32, 32, 64]);
    let img = GrayImage::zeros(150, 300);
    let pyr = build_pyramid(&img, &SteerableConfig::default()).unwrap();
    assert_eq!(pyr.subband_count(), 34);
    assert_eq!(ClbpConfig::default().descriptor_len(), 46);
    assert_eq!(LriConfig::default().descriptor_len(), 112);
    let coeffs = curvelet::forward(&img, CurveletConfig::default()).unwrap();
    assert_eq!(coeffs.wedges_per_scale(), [1, 16, 32, 32, 64, 64]);
}
