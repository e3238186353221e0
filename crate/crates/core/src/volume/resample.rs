use crate::error::{Error, Result};
use crate::volume::{Dims, Grid, Volume};

/// Windowed intensities are mapped onto `[-WINDOW_HALF_RANGE, WINDOW_HALF_RANGE]`.
pub const WINDOW_HALF_RANGE: f64 = 128.0;

/// Trilinear resampling to `target` dims.
///
/// Voxel centres are aligned so the physical extent `dims * spacing` is kept:
/// output voxel `i` samples input coordinate `(i + 0.5) * n_in / n_out - 0.5`,
/// clamped to the grid.
pub fn resample(vol: &Volume, target: Dims) -> Result<Volume> {
    let dims = vol.dims();
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidDims(dims));
    }
    if target.iter().any(|&d| d < 2) {
        return Err(Error::param(format!("target dims must be >= 2, got {target:?}")));
    }
    let scale: [f64; 3] = std::array::from_fn(|a| dims[a] as f64 / target[a] as f64);
    let spacing: [f64; 3] = std::array::from_fn(|a| vol.spacing()[a] * scale[a]);
    let coord = |a: usize, i: usize| (i as f64 + 0.5) * scale[a] - 0.5;
    Grid::from_fn(target, spacing, |x, y, z| {
        vol.sample_trilinear([coord(0, x), coord(1, y), coord(2, z)]) as f32
    })
}

/// Centre-crop or pad (with `fill`) along one axis to exactly `target` voxels.
/// Spacing is unchanged. Stands in for appending or deleting slices.
pub fn pad_crop_axis(vol: &Volume, axis: usize, target: usize, fill: f32) -> Result<Volume> {
    if axis > 2 || target == 0 {
        return Err(Error::param(format!("bad pad/crop request axis={axis} target={target}")));
    }
    let dims = vol.dims();
    let mut out_dims = dims;
    out_dims[axis] = target;
    // shift maps output index to input index along `axis`
    let shift = (dims[axis] as isize - target as isize).div_euclid(2);
    Grid::from_fn(out_dims, vol.spacing(), |x, y, z| {
        let mut c = [x as isize, y as isize, z as isize];
        c[axis] += shift;
        if c[axis] < 0 || c[axis] >= dims[axis] as isize {
            fill
        } else {
            vol.get(c[0] as usize, c[1] as usize, c[2] as usize)
        }
    })
}

/// Affine map of `[level - width/2, level + width/2]` onto `[-128, 128]`, clamped.
pub fn window_normalize(vol: &Volume, level: f64, width: f64) -> Result<Volume> {
    if !(width > 0.0 && width.is_finite()) || !level.is_finite() {
        return Err(Error::param(format!("window width must be positive, got {width}")));
    }
    let gain = 2.0 * WINDOW_HALF_RANGE / width;
    Ok(vol.map(|&v| {
        ((v as f64 - level) * gain).clamp(-WINDOW_HALF_RANGE, WINDOW_HALF_RANGE) as f32
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_is_preserved() {
        let v = Grid::filled([5, 6, 7], [0.7, 0.7, 2.5], -42.5f32).unwrap();
        let r = resample(&v, [11, 3, 9]).unwrap();
        assert_eq!(r.dims(), [11, 3, 9]);
        assert!(r.data().iter().all(|&x| x == -42.5));
    }

    #[test]
    fn halved_target_doubles_in_plane_spacing() {
        // geometry only; a 512x512x300 volume would be large, the arithmetic is the same
        let v = Grid::filled([64, 64, 30], [0.7, 0.7, 1.0], 0.0f32).unwrap();
        let r = resample(&v, [32, 32, 30]).unwrap();
        assert_eq!(r.spacing(), [1.4, 1.4, 1.0]);
        let extent = |g: &Volume| -> Vec<f64> { (0..3).map(|a| g.dims()[a] as f64 * g.spacing()[a]).collect() };
        for (a, b) in extent(&v).iter().zip(extent(&r)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ramp_downsample_matches_analytic_line() {
        let slope = 0.37;
        let v = Grid::from_fn([16, 3, 3], [1.0; 3], |x, _, _| (slope * x as f64) as f32).unwrap();
        let r = resample(&v, [8, 3, 3]).unwrap();
        for x in 0..8 {
            // output voxel x sits at input coordinate 2x + 0.5
            let expected = slope * (2.0 * x as f64 + 0.5);
            let got = r.get(x, 1, 1) as f64;
            assert!((got - expected).abs() < 1e-6, "x={x}: {got} vs {expected}");
        }
    }

    #[test]
    fn degenerate_input_rejected() {
        let v = Grid::filled([1, 4, 4], [1.0; 3], 0.0f32).unwrap();
        assert!(matches!(resample(&v, [4, 4, 4]), Err(Error::InvalidDims(_))));
    }

    #[test]
    fn window_examples() {
        let v = Grid::new([5, 1, 1], [1.0; 3], vec![40.0f32, -160.0, 240.0, 140.0, -1000.0]).unwrap();
        let w = window_normalize(&v, 40.0, 400.0).unwrap();
        assert_eq!(w.data(), &[0.0, -128.0, 128.0, 64.0, -128.0]);
        assert!(window_normalize(&v, 40.0, 0.0).is_err());
    }

    #[test]
    fn pad_and_crop_are_centred() {
        let v = Grid::from_fn([1, 1, 4], [1.0; 3], |_, _, z| z as f32).unwrap();
        let p = pad_crop_axis(&v, 2, 6, -1.0).unwrap();
        assert_eq!(p.data(), &[-1.0, 0.0, 1.0, 2.0, 3.0, -1.0]);
        let c = pad_crop_axis(&v, 2, 2, -1.0).unwrap();
        assert_eq!(c.data(), &[1.0, 2.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn resample_stays_within_input_range(
            data in proptest::collection::vec(-1000f32..1000.0, 4 * 5 * 3),
            tx in 2usize..9, ty in 2usize..9, tz in 2usize..9,
        ) {
            let v = Grid::new([4, 5, 3], [1.0, 1.0, 2.0], data).unwrap();
            let (lo, hi) = v.min_max();
            let r = resample(&v, [tx, ty, tz]).unwrap();
            prop_assert!(r.data().iter().all(|&x| x >= lo && x <= hi));
        }

        #[test]
        fn window_is_bounded_and_monotone(a in -5000f32..5000.0, b in -5000f32..5000.0, level in -200f64..200.0, width in 1f64..2000.0) {
            let v = Grid::new([2, 1, 1], [1.0; 3], vec![a.min(b), a.max(b)]).unwrap();
            let w = window_normalize(&v, level, width).unwrap();
            prop_assert!(w.data().iter().all(|x| (-128.0..=128.0).contains(x)));
            prop_assert!(w.data()[0] <= w.data()[1]);
        }
    }
}
