mod oracles;

use nftscope_core::features::{
    extract_features, extract_features_from_bytes, match_features, match_features_with, ChannelDescriptorSet,
    ChannelTag, Descriptor, Keypoint, MatchParams, MatchStrategy, ScaleSpaceParams, DESCRIPTOR_LEN,
};
use nftscope_core::fixtures::{self, generate, Scenario, DEFAULT_SEED};

fn all_fixture_sets() -> Vec<ChannelDescriptorSet> {
    let p = ScaleSpaceParams::default();
    let mut out = Vec::new();
    for sc in Scenario::ALL {
        for bytes in generate(sc, DEFAULT_SEED).images.values() {
            out.push(extract_features_from_bytes(bytes, &p).unwrap());
        }
    }
    for img in [
        fixtures::textured_image(1),
        fixtures::shifted(&fixtures::textured_image(1), 4, 4),
        fixtures::noise_image(1),
        fixtures::checkerboard_noise(1),
    ] {
        out.push(extract_features(&img, &p).unwrap());
    }
    out
}

#[test]
fn every_descriptor_is_unit_length_128() {
    let sets = all_fixture_sets();
    let total: usize = sets.iter().map(|s| s.total()).sum();
    assert!(total > 100, "fixtures produced only {total} descriptors");
    for d in sets.iter().flat_map(|s| s.iter()) {
        assert_eq!(d.vector.len(), DESCRIPTOR_LEN);
        let norm = d.vector.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-6, "norm {norm}");
    }
}

#[test]
fn extraction_is_deterministic() {
    let p = ScaleSpaceParams::default();
    let img = fixtures::checkerboard_noise(1);
    assert_eq!(extract_features(&img, &p).unwrap(), extract_features(&img, &p).unwrap());
}

#[test]
fn checkerboard_golden_count() {
    let set = extract_features(&fixtures::checkerboard_noise(1), &ScaleSpaceParams::default()).unwrap();
    let counts = [set.r.len(), set.g.len(), set.b.len()];
    assert!(counts.iter().all(|&c| c > 0));
    assert_eq!(counts, GOLDEN_CHECKERBOARD);
}

/// Descriptor counts (R, G, B) for `checkerboard_noise(1)` at default parameters.
const GOLDEN_CHECKERBOARD: [usize; 3] = [146, 111, 113];

fn unit(i: usize, scale: f32) -> Vec<f32> {
    let mut v = vec![0.0; DESCRIPTOR_LEN];
    v[i] = scale;
    v
}

fn desc(vector: Vec<f32>) -> Descriptor {
    Descriptor {
        vector,
        origin: Keypoint {
            x: 0,
            y: 0,
            octave: 0,
            scale_index: 1,
            sigma: 1.6,
            orientation: 0.0,
            response: 0.0,
        },
    }
}

#[test]
fn ratio_test_boundary() {
    let mp = MatchParams::default();
    let q = desc(unit(0, 0.0));
    for (ratio, expect) in [(0.79f32, 1), (0.81, 0)] {
        let target = vec![desc(unit(0, ratio)), desc(unit(1, 1.0))];
        let r = match_features(&[q.clone()], &target, &mp);
        assert_eq!(r.matched, expect, "ratio {ratio}");
    }
}

#[test]
fn shifted_content_matches_better_than_noise() {
    let p = ScaleSpaceParams::default();
    let mp = MatchParams::default();
    let base = fixtures::textured_image(1);
    let a = extract_features(&base, &p).unwrap();
    let b = extract_features(&fixtures::shifted(&base, 4, 4), &p).unwrap();
    let noise = extract_features(&fixtures::noise_image(1), &p).unwrap();
    for tag in ChannelTag::ALL {
        let shifted = match_features(a.get(tag), b.get(tag), &mp).no_match_ratio;
        let random = match_features(a.get(tag), noise.get(tag), &mp).no_match_ratio;
        assert!(shifted <= 0.3, "{tag:?} shifted ratio {shifted}");
        assert!(shifted < random, "{tag:?}: {shifted} !< {random}");
    }
}

#[test]
fn bbf_tracks_exact_scan() {
    let p = ScaleSpaceParams::default();
    let mp = MatchParams::default();
    let f = generate(Scenario::Basic, DEFAULT_SEED);
    let sets: Vec<ChannelDescriptorSet> = f
        .images
        .values()
        .map(|b| extract_features_from_bytes(b, &p).unwrap())
        .collect();
    let (mut close, mut total) = (0, 0);
    for (i, a) in sets.iter().enumerate() {
        for (j, b) in sets.iter().enumerate() {
            if i == j {
                continue;
            }
            for tag in ChannelTag::ALL {
                let bbf = match_features_with(a.get(tag), b.get(tag), &mp, MatchStrategy::Bbf).no_match_ratio;
                let exact = oracles::no_match_ratio(a.get(tag), b.get(tag), mp.ratio_threshold);
                total += 1;
                if (bbf - exact).abs() <= 0.05 {
                    close += 1;
                }
            }
        }
    }
    assert!(close as f64 >= 0.95 * total as f64, "{close}/{total} within 0.05");
}
