use hepacut_core::metrics::{border_voxels, evaluate, mask_volume_ml, surface_distances, voe, volume_stats};
use hepacut_core::volume::{make_phantom, Ellipsoid, PhantomSpec};
use hepacut_core::{Grid, LabelMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sphere(n: usize, r: f64) -> LabelMask {
    let c = (n as f64 - 1.0) / 2.0;
    Grid::from_fn([n; 3], [1.0; 3], |x, y, z| {
        let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2);
        (d2 <= r * r) as u8
    })
    .unwrap()
}

#[test]
fn concentric_spheres() {
    let d = surface_distances(&sphere(60, 20.0), &sphere(60, 23.0)).unwrap();
    assert!((d.asd - 3.0).abs() <= 0.5, "ASD {}", d.asd);
    assert!((d.msd - 3.0).abs() <= 1.0, "MSD {}", d.msd);
}

/// Directed border distances by exhaustive search.
fn quadratic_distances(a: &LabelMask, b: &LabelMask) -> Vec<f64> {
    let (ba, bb) = (border_voxels(a), border_voxels(b));
    let pts = |m: &LabelMask| -> Vec<[f64; 3]> {
        let s = m.spacing();
        (0..m.len())
            .filter(|&i| m.data()[i] != 0)
            .map(|i| {
                let c = m.coords(i);
                [c[0] as f64 * s[0], c[1] as f64 * s[1], c[2] as f64 * s[2]]
            })
            .collect()
    };
    let (pa, pb) = (pts(&ba), pts(&bb));
    let nearest = |p: &[f64; 3], set: &[[f64; 3]]| {
        set.iter()
            .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let mut d: Vec<f64> = pa.iter().map(|p| nearest(p, &pb)).collect();
    d.extend(pb.iter().map(|p| nearest(p, &pa)));
    d
}

fn random_mask(rng: &mut ChaCha8Rng, dims: [usize; 3], spacing: [f64; 3]) -> LabelMask {
    loop {
        let p = rng.random_range(0.05..0.7);
        let m = Grid::from_fn(dims, spacing, |_, _, _| rng.random_bool(p) as u8).unwrap();
        if m.count() > 0 {
            return m;
        }
    }
}

#[test]
fn surface_distances_match_quadratic_search_and_are_ordered() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..500 {
        let dims = [rng.random_range(1..9), rng.random_range(1..9), rng.random_range(1..7)];
        let spacing = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.5..3.0)];
        let a = random_mask(&mut rng, dims, spacing);
        let b = random_mask(&mut rng, dims, spacing);
        let d = surface_distances(&a, &b).unwrap();
        assert!(d.asd <= d.rmsd + 1e-12 && d.rmsd <= d.msd + 1e-12, "{d:?}");
        let s = surface_distances(&b, &a).unwrap();
        assert!((s.asd - d.asd).abs() < 1e-12 && (s.msd - d.msd).abs() < 1e-12);
        if k < 100 {
            let q = quadratic_distances(&a, &b);
            let n = q.len() as f64;
            let asd = q.iter().sum::<f64>() / n;
            let msd = q.iter().cloned().fold(0.0, f64::max);
            assert!((asd - d.asd).abs() < 1e-9 && (msd - d.msd).abs() < 1e-9);
        }
    }
}

#[test]
fn padding_with_background_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inner = |rng: &mut ChaCha8Rng| Grid::from_fn([6, 5, 4], [1.0; 3], |_, _, _| rng.random_bool(0.6) as u8).unwrap();
    let (a, b) = (inner(&mut rng), inner(&mut rng));
    // keep the masks off the volume edge so the border definition is unaffected
    let pad = |m: &LabelMask| {
        Grid::from_fn([10, 9, 8], [1.0; 3], |x, y, z| {
            if (2..8).contains(&x) && (2..7).contains(&y) && (2..6).contains(&z) {
                m.get(x - 2, y - 2, z - 2)
            } else {
                0
            }
        })
        .unwrap()
    };
    let pad2 = |m: &LabelMask| {
        Grid::from_fn([14, 13, 12], [1.0; 3], |x, y, z| {
            if (4..10).contains(&x) && (4..9).contains(&y) && (4..8).contains(&z) {
                m.get(x - 4, y - 4, z - 4)
            } else {
                0
            }
        })
        .unwrap()
    };
    let r1 = evaluate(&pad(&a), &pad(&b)).unwrap();
    let r2 = evaluate(&pad2(&a), &pad2(&b)).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(voe(&pad(&a), &pad(&b)).unwrap(), voe(&a, &b).unwrap());
}

#[test]
fn phantom_liver_volume_matches_ellipsoid() {
    let spec = PhantomSpec {
        dims: [96, 80, 72],
        spacing: [0.8, 0.8, 1.5],
        liver: Ellipsoid {
            center: [48.0, 40.0, 36.0],
            radii: [30.0, 25.0, 20.0],
        },
        confounder: None,
        ..PhantomSpec::default()
    };
    let ph = make_phantom(&spec).unwrap();
    let analytic = 4.0 / 3.0 * std::f64::consts::PI * 30.0 * 25.0 * 20.0 * 0.8 * 0.8 * 1.5 / 1000.0;
    let ml = mask_volume_ml(&ph.truth);
    assert!((ml - analytic).abs() <= 0.01 * analytic, "{ml} vs {analytic}");
}

#[test]
fn volume_stats_match_textbook_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pairs: Vec<(f64, f64)> = (0..25)
        .map(|_| {
            let m = rng.random_range(900.0..2500.0);
            (0.97 * m + 40.0 + rng.random_range(-60.0..60.0), m)
        })
        .collect();
    let s = volume_stats(&pairs).unwrap();

    let n = pairs.len() as f64;
    let (sx, sy) = (pairs.iter().map(|p| p.1).sum::<f64>(), pairs.iter().map(|p| p.0).sum::<f64>());
    let sxx = pairs.iter().map(|p| p.1 * p.1).sum::<f64>();
    let syy = pairs.iter().map(|p| p.0 * p.0).sum::<f64>();
    let sxy = pairs.iter().map(|p| p.0 * p.1).sum::<f64>();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    assert!((s.slope - slope).abs() < 1e-9);
    assert!((s.intercept - intercept).abs() < 1e-9 * intercept.abs().max(1.0));
    assert!((s.r - r).abs() < 1e-9);
    let (lo, hi) = s.limits_of_agreement;
    assert!(((lo + hi) / 2.0 - s.mean_difference).abs() < 1e-9);
    assert!(((hi - lo) / 2.0 - 1.96 * s.sd_difference).abs() < 1e-9);
}
