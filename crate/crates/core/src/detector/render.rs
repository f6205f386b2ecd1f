use super::DetectorError;
use crate::features::FeatureProviderConfig;
use crate::metrics::ScoreMap;

/// Upsamples a grid of patch scores to image resolution and smooths it.
///
/// Patch `(r, c)` is anchored at pixel `(r·stride + (patch_size−1)/2,
/// c·stride + (patch_size−1)/2)`. Pixels between anchors are interpolated
/// bilinearly and pixels outside them take the nearest anchor's value.
/// Smoothing is a separable Gaussian truncated at `4·sigma` with weights
/// renormalized at the borders; `sigma = 0` disables it.
pub fn render_anomaly_map(
    patch_map: &[f64],
    grid_h: usize,
    grid_w: usize,
    geometry: &FeatureProviderConfig,
    image_h: usize,
    image_w: usize,
    sigma: f64,
) -> Result<ScoreMap, DetectorError> {
    if grid_h == 0 || grid_w == 0 || patch_map.len() != grid_h * grid_w {
        return Err(DetectorError::BadGeometry(format!(
            "{} scores for a {grid_h}x{grid_w} grid",
            patch_map.len()
        )));
    }
    if image_h == 0 || image_w == 0 || geometry.stride == 0 || geometry.patch_size == 0 {
        return Err(DetectorError::BadGeometry(format!(
            "image {image_h}x{image_w}, patch {} stride {}",
            geometry.patch_size, geometry.stride
        )));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(DetectorError::BadGeometry(format!("sigma {sigma}")));
    }
    if patch_map.iter().any(|v| !v.is_finite()) {
        return Err(DetectorError::BadGeometry("non-finite patch score".into()));
    }

    let offset = (geometry.patch_size as f64 - 1.0) / 2.0;
    let stride = geometry.stride as f64;
    let rows: Vec<(usize, usize, f64)> = (0..image_h)
        .map(|y| locate(y, offset, stride, grid_h))
        .collect();
    let cols: Vec<(usize, usize, f64)> = (0..image_w)
        .map(|x| locate(x, offset, stride, grid_w))
        .collect();

    let mut out = Vec::with_capacity(image_h * image_w);
    for &(r0, r1, fy) in &rows {
        for &(c0, c1, fx) in &cols {
            let at = |r: usize, c: usize| patch_map[r * grid_w + c];
            let top = at(r0, c0) * (1.0 - fx) + at(r0, c1) * fx;
            let bottom = at(r1, c0) * (1.0 - fx) + at(r1, c1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    if sigma > 0.0 {
        out = gaussian_blur(&out, image_h, image_w, sigma);
    }
    ScoreMap::new(image_h, image_w, out).map_err(|e| DetectorError::BadGeometry(e.to_string()))
}

/// Bracketing anchors and interpolation weight for pixel coordinate `p`.
fn locate(p: usize, offset: f64, stride: f64, n: usize) -> (usize, usize, f64) {
    let g = (p as f64 - offset) / stride;
    if g <= 0.0 {
        return (0, 0, 0.0);
    }
    let last = (n - 1) as f64;
    if g >= last {
        return (n - 1, n - 1, 0.0);
    }
    let i = g.floor() as usize;
    (i, i + 1, g - i as f64)
}

fn kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect()
}

fn gaussian_blur(values: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let k = kernel(sigma);
    let radius = (k.len() / 2) as isize;
    let pass = |src: &[f64], len: usize, count: usize, idx: &dyn Fn(usize, usize) -> usize| {
        let mut dst = vec![0.0; src.len()];
        for line in 0..count {
            for i in 0..len {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (t, wgt) in k.iter().enumerate() {
                    let j = i as isize + t as isize - radius;
                    if j >= 0 && (j as usize) < len {
                        acc += wgt * src[idx(line, j as usize)];
                        norm += wgt;
                    }
                }
                dst[idx(line, i)] = acc / norm;
            }
        }
        dst
    };
    let horizontal = pass(values, w, h, &|row, col| row * w + col);
    pass(&horizontal, h, w, &|col, row| row * w + col)
}
