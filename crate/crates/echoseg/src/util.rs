//! Small shared helpers: deterministic seed derivation and image resampling.

use ndarray::Array2;

/// splitmix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed from a base seed and a list of stream
/// coordinates (purpose tag, epoch, sample index, ...). Used everywhere a
/// reproducible per-item rng stream is needed.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &c in coords {
        s = splitmix64(s ^ c.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    s
}

/// Bilinear resize of a single-channel real image (pixel-center convention).
/// Out-of-range samples clamp to the border.
pub fn resize_bilinear(src: &Array2<f32>, out_h: usize, out_w: usize) -> Array2<f32> {
    let (h, w) = src.dim();
    if h == out_h && w == out_w {
        return src.clone();
    }
    let sy = h as f32 / out_h as f32;
    let sx = w as f32 / out_w as f32;
    let mut out = Array2::<f32>::zeros((out_h, out_w));
    for oy in 0..out_h {
        let fy = (oy as f32 + 0.5) * sy - 0.5;
        let y0 = fy.floor();
        let wy = fy - y0;
        let y0i = (y0 as isize).clamp(0, h as isize - 1) as usize;
        let y1i = ((y0 as isize) + 1).clamp(0, h as isize - 1) as usize;
        for ox in 0..out_w {
            let fx = (ox as f32 + 0.5) * sx - 0.5;
            let x0 = fx.floor();
            let wx = fx - x0;
            let x0i = (x0 as isize).clamp(0, w as isize - 1) as usize;
            let x1i = ((x0 as isize) + 1).clamp(0, w as isize - 1) as usize;
            let top = src[[y0i, x0i]] * (1.0 - wx) + src[[y0i, x1i]] * wx;
            let bot = src[[y1i, x0i]] * (1.0 - wx) + src[[y1i, x1i]] * wx;
            out[[oy, ox]] = top * (1.0 - wy) + bot * wy;
        }
    }
    out
}

/// Nearest-neighbor resize of an integer label map (pixel-center convention).
/// Never introduces label values that were not present in the source.
pub fn resize_nearest(src: &Array2<u8>, out_h: usize, out_w: usize) -> Array2<u8> {
    let (h, w) = src.dim();
    if h == out_h && w == out_w {
        return src.clone();
    }
    let sy = h as f32 / out_h as f32;
    let sx = w as f32 / out_w as f32;
    let mut out = Array2::<u8>::zeros((out_h, out_w));
    for oy in 0..out_h {
        let fy = (oy as f32 + 0.5) * sy - 0.5;
        let yi = (fy.round() as isize).clamp(0, h as isize - 1) as usize;
        for ox in 0..out_w {
            let fx = (ox as f32 + 0.5) * sx - 0.5;
            let xi = (fx.round() as isize).clamp(0, w as isize - 1) as usize;
            out[[oy, ox]] = src[[yi, xi]];
        }
    }
    out
}
