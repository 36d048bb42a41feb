use ndarray::Array2;

/// Standard sinusoidal encoding: `sin(pos / 10000^(2i/d))` on even columns,
/// `cos` on odd columns.
pub fn sinusoidal_encoding(positions: &[f64], dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((positions.len(), dim), |(r, c)| {
        let i = (c / 2) as f64;
        let freq = 1.0 / 10000f64.powf(2.0 * i / dim as f64);
        let angle = positions[r] * freq;
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Multi-frequency sine/cosine embedding of a handful of scalars into `dim`
/// columns. Column `c` uses scalar `c % n` at octave `(c / 2n) mod octaves`.
pub fn scalar_embedding(values: &[f64], dim: usize, base_freq: f64, octaves: usize) -> Vec<f64> {
    let n = values.len();
    (0..dim)
        .map(|c| {
            let slot = c / n;
            let octave = ((slot / 2) % octaves.max(1)) as i32;
            let x = values[c % n] * base_freq * 2f64.powi(octave);
            if slot % 2 == 0 {
                x.sin()
            } else {
                x.cos()
            }
        })
        .collect()
}
