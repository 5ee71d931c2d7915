//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numeric code paths.

#![allow(dead_code)]

/// Catmull-Rom cubic convolution kernel with a = -0.5.
pub fn catmull_rom(x: f64) -> f64 {
    let a = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Direct 4x4 bicubic upscale of an interleaved RGB buffer: half-pixel
/// centers, clamped edges, round-half-away-from-zero, clamped to [0, 255].
pub fn bicubic_reference(src: &[u8], w: usize, h: usize, factor: f64) -> (Vec<u8>, usize, usize) {
    let ow = (w as f64 * factor).round() as usize;
    let oh = (h as f64 * factor).round() as usize;
    let mut out = vec![0u8; ow * oh * 3];
    for oy in 0..oh {
        let sy = (oy as f64 + 0.5) / factor - 0.5;
        let y0 = sy.floor();
        for ox in 0..ow {
            let sx = (ox as f64 + 0.5) / factor - 0.5;
            let x0 = sx.floor();
            for c in 0..3 {
                let mut acc = 0.0f64;
                for m in -1i64..=2 {
                    let yy = ((y0 as i64 + m).clamp(0, h as i64 - 1)) as usize;
                    let wy = catmull_rom(sy - (y0 + m as f64));
                    for n in -1i64..=2 {
                        let xx = ((x0 as i64 + n).clamp(0, w as i64 - 1)) as usize;
                        let wx = catmull_rom(sx - (x0 + n as f64));
                        acc += wy * wx * f64::from(src[(yy * w + xx) * 3 + c]);
                    }
                }
                out[(oy * ow + ox) * 3 + c] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    (out, ow, oh)
}

/// Naive double-loop window sums over a row-major map.
pub fn window_sums_naive(map: &[f32], rows: usize, cols: usize, hz: usize, wz: usize) -> Vec<f64> {
    let fr = rows - hz + 1;
    let fc = cols - wz + 1;
    let mut out = vec![0.0; fr * fc];
    for u in 0..fr {
        for v in 0..fc {
            let mut s = 0.0f64;
            for i in 0..hz {
                for j in 0..wz {
                    s += f64::from(map[(u + i) * cols + v + j]);
                }
            }
            out[u * fc + v] = s;
        }
    }
    out
}

/// Row-major first arg-max.
pub fn argmax_naive(field: &[f64], cols: usize) -> (usize, usize) {
    let mut best = 0;
    for (k, &v) in field.iter().enumerate() {
        if v > field[best] {
            best = k;
        }
    }
    (best / cols, best % cols)
}

/// Log-softmax scoring of a fixed token sequence under the toy softmax
/// model: logits_t = W_t * mean(v) + b_t.
pub fn toy_softmax_objective(
    weights: &[Vec<Vec<f64>>],
    biases: &[Vec<f64>],
    tokens: &[usize],
    v: &[f64],
    n: usize,
    d: usize,
) -> f64 {
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            mean[k] += v[i * d + k] / n as f64;
        }
    }
    let mut total = 0.0;
    for (t, &tok) in tokens.iter().enumerate() {
        let logits: Vec<f64> = weights[t]
            .iter()
            .zip(&biases[t])
            .map(|(row, b)| row.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>() + b)
            .collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
        total += logits[tok] - lse;
    }
    total / tokens.len() as f64
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
