//! Coloured MNIST: binary digit labels with a colour channel that agrees
//! with the label at a per-environment rate.

use crate::data::{EnvDataset, Environment};
use crate::error::{invalid, Result};
use crate::numerics::{Matrix, Rng};

/// Builds one environment per entry of `strengths`. Image `i` goes to
/// environment `i % strengths.len()`.
///
/// Label: 0 for digits 0-4, 1 for digits 5-9, then flipped with probability
/// `label_noise`. Colour: equal to the (noisy) label with probability
/// `strength`, else the other colour. The output is two 784-pixel planes
/// (red, green) with the non-selected plane zeroed.
pub fn make_cmnist(
    images: &Matrix<f64>,
    digits: &[u8],
    strengths: &[f64],
    label_noise: f64,
    rng: &mut Rng,
) -> Result<EnvDataset> {
    if images.rows() == 0 {
        return Err(invalid("empty image set"));
    }
    if digits.len() != images.rows() {
        return Err(invalid(format!("{} labels for {} images", digits.len(), images.rows())));
    }
    if strengths.is_empty() {
        return Err(invalid("need at least one environment strength"));
    }
    if let Some(s) = strengths.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(invalid(format!("spurious strength {s} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&label_noise) {
        return Err(invalid(format!("label noise {label_noise} outside [0, 1]")));
    }
    if let Some(d) = digits.iter().find(|&&d| d > 9) {
        return Err(invalid(format!("digit label {d} out of range")));
    }
    let plane = images.cols();
    let envs = strengths.len();
    let mut per_env: Vec<(Vec<f64>, Vec<usize>, Vec<u8>)> = vec![Default::default(); envs];
    for i in 0..images.rows() {
        let e = i % envs;
        let mut y = usize::from(digits[i] >= 5);
        if rng.bernoulli(label_noise) {
            y = 1 - y;
        }
        let color = if rng.bernoulli(strengths[e]) { y } else { 1 - y };
        let (xs, ys, ss) = &mut per_env[e];
        let start = xs.len();
        xs.resize(start + 2 * plane, 0.0);
        xs[start + color * plane..start + (color + 1) * plane].copy_from_slice(images.row(i));
        ys.push(y);
        ss.push(color as u8);
    }
    let environments = per_env
        .into_iter()
        .zip(strengths)
        .enumerate()
        .map(|(domain_id, ((xs, y, spurious), &strength))| {
            Ok(Environment {
                domain_id,
                x: Matrix::new(y.len(), 2 * plane, xs)?,
                y,
                spurious,
                spurious_strength: strength,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = EnvDataset {
        environments,
        classes: 2,
        generator: "cmnist".into(),
        seed: rng.seed_value(),
        label_noise,
    };
    ds.validate()?;
    Ok(ds)
}
