use super::raster::RasterImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Bilinear,
    /// Keeps binary masks binary.
    Nearest,
}

fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    (i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5
}

/// Resamples to `new_w` x `new_h` with pixel centers at `(i + 0.5) / n`.
pub fn resize(image: &RasterImage, new_w: usize, new_h: usize, interp: Interp) -> Result<RasterImage> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::InvalidArgument(format!("resize target {new_w}x{new_h} must be positive")));
    }
    let (w, h) = (image.width(), image.height());
    if (w, h) == (new_w, new_h) {
        return Ok(image.clone());
    }
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|i| match interp {
                Interp::Nearest => {
                    let s = ((i as f64 + 0.5) * n_in as f64 / n_out as f64).floor() as usize;
                    (s.min(n_in - 1), s.min(n_in - 1), 0.0)
                }
                Interp::Bilinear => {
                    let s = source_coord(i, n_in, n_out).clamp(0.0, (n_in - 1) as f64);
                    let i0 = s.floor() as usize;
                    (i0, (i0 + 1).min(n_in - 1), s - i0 as f64)
                }
            })
            .collect()
    };
    let (xs, ys) = (axis(w, new_w), axis(h, new_h));
    RasterImage::from_fn(new_w, new_h, image.channels(), |c, y, x| {
        let (y0, y1, fy) = ys[y];
        let (x0, x1, fx) = xs[x];
        let top = image.get(c, y0, x0) * (1.0 - fx) + image.get(c, y0, x1) * fx;
        let bottom = image.get(c, y1, x0) * (1.0 - fx) + image.get(c, y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Mirrors `v` into `[0, n - 1]` about the outermost pixel centers.
fn reflect(v: f64, n: usize) -> f64 {
    if n == 1 {
        return 0.0;
    }
    let period = 2.0 * (n - 1) as f64;
    let m = v.rem_euclid(period);
    if m > (n - 1) as f64 {
        period - m
    } else {
        m
    }
}

fn right_angle_turns(angle_deg: f64) -> Option<usize> {
    let q = angle_deg / 90.0;
    (q.fract() == 0.0).then(|| q.rem_euclid(4.0) as usize)
}

/// Rotates a point counter-clockwise (as displayed, y down) by `angle_deg`
/// about the image center. Quarter turns swap the canvas dimensions.
pub fn rotate_point(x: f64, y: f64, width: usize, height: usize, angle_deg: f64) -> (f64, f64) {
    let (w1, h1) = ((width - 1) as f64, (height - 1) as f64);
    match right_angle_turns(angle_deg) {
        Some(0) => (x, y),
        Some(1) => (y, w1 - x),
        Some(2) => (w1 - x, h1 - y),
        Some(3) => (h1 - y, x),
        _ => {
            let (cx, cy) = (w1 / 2.0, h1 / 2.0);
            let (s, c) = angle_deg.to_radians().sin_cos();
            let (dx, dy) = (x - cx, y - cy);
            (cx + dx * c + dy * s, cy - dx * s + dy * c)
        }
    }
}

/// Counter-clockwise rotation about the center. Multiples of 90 degrees are
/// exact index permutations; other angles keep the canvas, sample with
/// `interp` and fill from the reflected image.
pub fn rotate(image: &RasterImage, angle_deg: f64, interp: Interp) -> Result<RasterImage> {
    let (w, h) = (image.width(), image.height());
    match right_angle_turns(angle_deg) {
        Some(0) => Ok(image.clone()),
        Some(1) => RasterImage::from_fn(h, w, image.channels(), |c, y, x| image.get(c, x, w - 1 - y)),
        Some(2) => RasterImage::from_fn(w, h, image.channels(), |c, y, x| image.get(c, h - 1 - y, w - 1 - x)),
        Some(3) => RasterImage::from_fn(h, w, image.channels(), |c, y, x| image.get(c, h - 1 - x, y)),
        _ => {
            let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
            let (s, co) = angle_deg.to_radians().sin_cos();
            RasterImage::from_fn(w, h, image.channels(), |c, y, x| {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let sx = reflect(cx + dx * co - dy * s, w);
                let sy = reflect(cy + dx * s + dy * co, h);
                match interp {
                    Interp::Nearest => image.get(c, sy.round() as usize, sx.round() as usize),
                    Interp::Bilinear => {
                        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                        let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
                        let top = image.get(c, y0, x0) * (1.0 - fx) + image.get(c, y0, x1) * fx;
                        let bottom = image.get(c, y1, x0) * (1.0 - fx) + image.get(c, y1, x1) * fx;
                        top * (1.0 - fy) + bottom * fy
                    }
                }
            })
        }
    }
}
