//! Separable bicubic resampling with the Catmull-Rom kernel.

use super::{Heatmap, Scale};
use crate::error::{Error, Result};

const A: f64 = -0.5;

fn cubic(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Four-tap weights for every output coordinate along one axis.
#[derive(Debug, Clone)]
struct AxisTable {
    taps: Vec<([usize; 4], [f64; 4])>,
}

impl AxisTable {
    fn new(src: usize, dst: usize) -> Self {
        let scale = src as f64 / dst as f64;
        let last = src as isize - 1;
        let taps = (0..dst)
            .map(|d| {
                let s = (d as f64 + 0.5) * scale - 0.5;
                let base = s.floor();
                let t = s - base;
                let base = base as isize;
                let mut idx = [0usize; 4];
                let mut w = [0.0; 4];
                for k in 0..4 {
                    let offset = k as isize - 1;
                    idx[k] = (base + offset).clamp(0, last) as usize;
                    w[k] = cubic(t - offset as f64);
                }
                (idx, w)
            })
            .collect();
        AxisTable { taps }
    }
}

#[inline(always)]
fn combine_rows(rows: [&[f64]; 4], w: &[f64; 4], ceiling: f64, out: &mut [f64]) {
    let taps = rows[0].iter().zip(rows[1]).zip(rows[2]).zip(rows[3]);
    for (o, (((a, b), c), d)) in out.iter_mut().zip(taps) {
        let v = w[0] * a + w[1] * b + w[2] * c + w[3] * d;
        *o = v.max(0.0).min(ceiling);
    }
}

// Same operations in the same order (no fused multiply-add), so results are
// bit-identical to the baseline path; only the vector width changes.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn combine_rows_avx(rows: [&[f64]; 4], w: &[f64; 4], ceiling: f64, out: &mut [f64]) {
    combine_rows(rows, w, ceiling, out)
}

/// Precomputed bicubic resampler between two fixed grid sizes, reusable
/// across many maps of the same shape.
#[derive(Debug, Clone)]
pub struct Resampler {
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
    cols: AxisTable,
    rows: AxisTable,
}

impl Resampler {
    pub fn new(src_w: usize, src_h: usize, dst_w: usize, dst_h: usize) -> Result<Self> {
        if dst_w < 1 || dst_h < 1 {
            return Err(Error::invalid(format!(
                "resize target {dst_w}x{dst_h} must be at least 1x1"
            )));
        }
        if src_w < 2 || src_h < 2 {
            return Err(Error::invalid(format!(
                "bicubic source {src_w}x{src_h} must be at least 2x2"
            )));
        }
        Ok(Resampler {
            src_w,
            src_h,
            dst_w,
            dst_h,
            cols: AxisTable::new(src_w, dst_w),
            rows: AxisTable::new(src_h, dst_h),
        })
    }

    pub fn output_size(&self) -> (usize, usize) {
        (self.dst_w, self.dst_h)
    }

    fn horizontal(&self, src: &[f64], tmp: &mut Vec<f64>) {
        debug_assert_eq!(src.len(), self.src_w * self.src_h);
        tmp.clear();
        tmp.resize(self.src_h * self.dst_w, 0.0);
        for (row, tmp_row) in src.chunks_exact(self.src_w).zip(tmp.chunks_exact_mut(self.dst_w)) {
            for ((idx, w), t) in self.cols.taps.iter().zip(tmp_row.iter_mut()) {
                *t = w[0] * row[idx[0]] + w[1] * row[idx[1]] + w[2] * row[idx[2]] + w[3] * row[idx[3]];
            }
        }
    }

    fn vertical_row(&self, tmp: &[f64], y: usize, ceiling: f64, out_row: &mut [f64]) {
        let (idx, w) = &self.rows.taps[y];
        let r = |k: usize| &tmp[idx[k] * self.dst_w..(idx[k] + 1) * self.dst_w];
        let rows = [r(0), r(1), r(2), r(3)];
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx") {
            // SAFETY: the CPU supports AVX, checked just above.
            unsafe { combine_rows_avx(rows, w, ceiling, out_row) };
            return;
        }
        combine_rows(rows, w, ceiling, out_row);
    }

    /// Resamples row-major `src` into `out` (resized to `dst_w * dst_h`).
    /// Results are clamped to `[0, ceiling]`.
    pub fn apply_into(&self, src: &[f64], ceiling: f64, out: &mut Vec<f64>) {
        let mut tmp = Vec::new();
        self.horizontal(src, &mut tmp);
        out.clear();
        out.resize(self.dst_w * self.dst_h, 0.0);
        for (y, out_row) in out.chunks_exact_mut(self.dst_w).enumerate() {
            self.vertical_row(&tmp, y, ceiling, out_row);
        }
    }

    /// Same values as [`Resampler::apply_into`], handed to `f` one output row
    /// at a time without materializing the whole map.
    pub fn for_each_row(
        &self,
        src: &[f64],
        ceiling: f64,
        scratch: &mut (Vec<f64>, Vec<f64>),
        mut f: impl FnMut(usize, &[f64]),
    ) {
        let (tmp, row) = scratch;
        self.horizontal(src, tmp);
        row.clear();
        row.resize(self.dst_w, 0.0);
        for y in 0..self.dst_h {
            self.vertical_row(tmp, y, ceiling, row);
            f(y, row);
        }
    }

    pub fn apply(&self, src: &Heatmap) -> Result<Heatmap> {
        if src.width() != self.src_w || src.height() != self.src_h {
            return Err(Error::invalid(format!(
                "resampler built for {}x{}, got {}x{}",
                self.src_w,
                self.src_h,
                src.width(),
                src.height()
            )));
        }
        let ceiling = match src.scale() {
            Scale::Raw => f64::INFINITY,
            Scale::Byte => 255.0,
        };
        let mut out = Vec::new();
        self.apply_into(src.values(), ceiling, &mut out);
        Ok(Heatmap::from_parts(self.dst_w, self.dst_h, out, src.scale()))
    }
}

/// Bicubic (Catmull-Rom, a = -0.5) resize with edge clamping; negative
/// overshoot is clamped to zero.
pub fn resize_bicubic(src: &Heatmap, target_w: usize, target_h: usize) -> Result<Heatmap> {
    Resampler::new(src.width(), src.height(), target_w, target_h)?.apply(src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_interpolates_samples() {
        assert_eq!(cubic(0.0), 1.0);
        assert_abs_diff_eq!(cubic(1.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cubic(2.0), 0.0, epsilon = 1e-15);
        // partition of unity
        for t in [0.1, 0.25, 0.5, 0.9] {
            let s = cubic(t + 1.0) + cubic(t) + cubic(t - 1.0) + cubic(t - 2.0);
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_map_stays_constant() {
        let src = Heatmap::filled(13, 13, 42.5, Scale::Raw);
        let out = resize_bicubic(&src, 227, 227).unwrap();
        assert_eq!((out.width(), out.height()), (227, 227));
        assert!(out.values().iter().all(|&v| (v - 42.5).abs() < 1e-9));
    }

    #[test]
    fn upsample_reads_back_source_samples() {
        // 13 -> 39: output pixel 3k+1 sits exactly on source sample k
        let src = Heatmap::from_fn(13, 13, Scale::Raw, |x, y| ((x * 7 + y * 3) % 11) as f64);
        let out = resize_bicubic(&src, 39, 39).unwrap();
        for ky in 1..12 {
            for kx in 1..12 {
                assert_abs_diff_eq!(out.get(3 * kx + 1, 3 * ky + 1), src.get(kx, ky), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn overshoot_is_clamped() {
        let src = Heatmap::from_fn(6, 6, Scale::Raw, |x, _| if x < 3 { 0.0 } else { 100.0 });
        let out = resize_bicubic(&src, 60, 60).unwrap();
        assert!(out.values().iter().all(|&v| v >= 0.0));
        let byte = Heatmap::from_fn(6, 6, Scale::Byte, |x, _| if x < 3 { 0.0 } else { 255.0 });
        let out = resize_bicubic(&byte, 60, 60).unwrap();
        assert!(out.values().iter().all(|&v| (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn row_walk_matches_full_map() {
        let src = Heatmap::from_fn(5, 4, Scale::Raw, |x, y| ((x * 13 + y * 7) % 9) as f64);
        let r = Resampler::new(5, 4, 17, 11).unwrap();
        let full = r.apply(&src).unwrap();
        let mut seen = 0;
        r.for_each_row(src.values(), f64::INFINITY, &mut Default::default(), |y, row| {
            assert_eq!(row, &full.values()[y * 17..(y + 1) * 17]);
            seen += 1;
        });
        assert_eq!(seen, 11);
    }

    #[cfg(target_arch = "x86_64")]
    #[test]
    fn avx_path_is_bit_identical() {
        if !std::arch::is_x86_feature_detected!("avx") {
            return;
        }
        let row = |k: u64| (0..37).map(|i| ((i * 31 + k * 17) % 23) as f64 * 0.37 - 1.0).collect::<Vec<_>>();
        let rows = [row(0), row(1), row(2), row(3)];
        let rows = [&rows[0][..], &rows[1][..], &rows[2][..], &rows[3][..]];
        let w = [-0.0703125, 0.8671875, 0.2265625, -0.0234375];
        let (mut a, mut b) = (vec![0.0; 37], vec![0.0; 37]);
        combine_rows(rows, &w, 5.0, &mut a);
        unsafe { combine_rows_avx(rows, &w, 5.0, &mut b) };
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn rejects_bad_sizes() {
        let src = Heatmap::filled(4, 4, 1.0, Scale::Raw);
        assert!(resize_bicubic(&src, 0, 10).is_err());
        let tiny = Heatmap::filled(1, 4, 1.0, Scale::Raw);
        assert!(resize_bicubic(&tiny, 10, 10).is_err());
    }
}
