use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{LabelMask, RealGrid, FACE_OFFSETS};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceDistances {
    pub asd: f64,
    pub rmsd: f64,
    pub msd: f64,
}

/// Foreground voxels with at least one background 6-neighbour. Neighbours
/// outside the volume count as background.
pub fn border_voxels(mask: &LabelMask) -> LabelMask {
    let data = (0..mask.len())
        .map(|i| {
            let fg = mask.data()[i] != 0;
            let exposed = FACE_OFFSETS
                .iter()
                .any(|&o| mask.offset_index(i, o).is_none_or(|j| mask.data()[j] == 0));
            (fg && exposed) as u8
        })
        .collect();
    mask.with_data(data).expect("same length")
}

/// One pass of the 1D squared distance transform along a line with sample
/// spacing `h`: `out[q] = min_p (h (q − p))² + f[p]`. Infinite entries mark
/// empty samples.
fn dt_line(f: &[f64], h: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    let pos = |p: usize| p as f64 * h;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        while let Some(&p) = v.last() {
            let s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                z.push(s);
                break;
            }
        }
        if v.is_empty() {
            z.push(f64::NEG_INFINITY);
        }
        v.push(q);
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    // z[k] is where parabola k starts to win; treat the end as +inf
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate().take(n) {
        while k + 1 < v.len() && z[k + 1] < pos(q) {
            k += 1;
        }
        let d = pos(q) - pos(v[k]);
        *o = d * d + f[v[k]];
    }
}

/// Euclidean distance in mm from every voxel to the nearest voxel of `set`
/// (exact separable transform honouring the grid spacing). All infinite when
/// `set` is empty.
pub fn distance_to_set(set: &LabelMask) -> RealGrid {
    let [nx, ny, nz] = set.dims();
    let h = set.spacing();
    let mut g: Vec<f64> = set
        .data()
        .iter()
        .map(|&v| if v != 0 { 0.0 } else { f64::INFINITY })
        .collect();

    // x lines are contiguous
    g.par_chunks_mut(nx).for_each_init(
        || (vec![0.0; nx], Vec::new(), Vec::new()),
        |(out, v, z), line| {
            dt_line(line, h[0], out, v, z);
            line.copy_from_slice(out);
        },
    );
    // y lines: one z-slice per task
    g.par_chunks_mut(nx * ny).for_each_init(
        || (vec![0.0; ny], vec![0.0; ny], Vec::new(), Vec::new()),
        |(buf, out, v, z), slice| {
            for x in 0..nx {
                for y in 0..ny {
                    buf[y] = slice[x + nx * y];
                }
                dt_line(buf, h[1], out, v, z);
                for y in 0..ny {
                    slice[x + nx * y] = out[y];
                }
            }
        },
    );
    // z lines: gather per (x, y) column
    let plane = nx * ny;
    let cols: Vec<Vec<f64>> = (0..plane)
        .into_par_iter()
        .map_init(
            || (vec![0.0; nz], Vec::new(), Vec::new()),
            |(out, v, z), c| {
                let buf: Vec<f64> = (0..nz).map(|k| g[c + plane * k]).collect();
                dt_line(&buf, h[2], out, v, z);
                out.clone()
            },
        )
        .collect();
    for (c, col) in cols.iter().enumerate() {
        for k in 0..nz {
            g[c + plane * k] = col[k].sqrt();
        }
    }
    set.with_data(g).expect("same length")
}

fn directed(from: &LabelMask, to_dist: &RealGrid) -> Vec<f64> {
    from.data()
        .iter()
        .zip(to_dist.data())
        .filter(|(&b, _)| b != 0)
        .map(|(_, &d)| d)
        .collect()
}

/// Mean, root-mean-square and maximum of the border-to-border distances
/// measured in both directions.
pub fn surface_distances(a: &LabelMask, b: &LabelMask) -> Result<SurfaceDistances> {
    a.ensure_same_shape(b, "masks")?;
    if a.count() == 0 || b.count() == 0 {
        return Err(Error::EmptyRegion("surface distances need two non-empty masks".into()));
    }
    let (ba, bb) = (border_voxels(a), border_voxels(b));
    let mut d = directed(&ba, &distance_to_set(&bb));
    d.extend(directed(&bb, &distance_to_set(&ba)));
    let n = d.len() as f64;
    let asd = d.iter().sum::<f64>() / n;
    let rmsd = (d.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let msd = d.iter().cloned().fold(0.0, f64::max);
    Ok(SurfaceDistances { asd, rmsd, msd })
}
