//! Monte Carlo certification of the Gaussian-smoothed classifier, with noise
//! added either to the latent code (then divided by the encoder's Lipschitz
//! bound) or to the raw input.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nets::{Compiled, Model};
use crate::numerics::{binomial_test_half, clopper_pearson_lower, std_normal_inv_cdf, Matrix, Rng};
use crate::scalar::Scalar;
use crate::training::NoiseSpace;

/// Upper clamp applied to the probability bound before inverting the normal
/// CDF, so `k = n` with a tiny `alpha` never yields an infinite radius.
pub const PA_CLAMP: f64 = 1.0 - 1e-12;

/// Noise draws per batched classifier evaluation.
const CHUNK: usize = 1000;

const PHASE_SELECT: u64 = 0;
const PHASE_ESTIMATE: u64 = 1;
const PHASE_PREDICT: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    pub sigma: f64,
    pub n0: u64,
    pub n: u64,
    pub alpha: f64,
    pub space: NoiseSpace,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            sigma: 0.12,
            n0: 100,
            n: 10_000,
            alpha: 0.001,
            space: NoiseSpace::Latent,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.n0 == 0 || self.n == 0 {
            return Err(invalid("n0 and n must both be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Largest latent radius any certificate can report: the `k = n` case.
    pub fn radius_ceiling(&self) -> Result<f64> {
        radius_from_pa(self.sigma, self.alpha.powf(1.0 / self.n as f64))
    }
}

/// Base classifier seen by the smoother: an encoder into a latent space and
/// a hard decision on latent codes.
pub trait Smoothable: Sync {
    fn input_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn classes(&self) -> usize;
    /// Lipschitz bound of the encoder, used to map latent radii to inputs.
    fn lipschitz(&self) -> f64;
    fn encode(&self, x: &Matrix<f64>) -> Result<Matrix<f64>>;
    /// Predicted class per row of `z`.
    fn decide(&self, z: &Matrix<f64>) -> Result<Vec<usize>>;
}

/// A [`Model`] with its encoder weights and Lipschitz bound computed once.
#[derive(Clone, Debug)]
pub struct Certifiable<T> {
    model: Model<T>,
    compiled: Compiled<T>,
    lipschitz: f64,
}

impl<T: Scalar> Certifiable<T> {
    pub fn new(model: &Model<T>) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            model: model.clone(),
            compiled: model.compile()?,
            lipschitz: model.lipschitz_bound()?,
        })
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }
}

impl<T: Scalar> Smoothable for Certifiable<T> {
    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn latent_dim(&self) -> usize {
        self.model.latent_dim()
    }

    fn classes(&self) -> usize {
        self.model.classes()
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn encode(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        Ok(self.model.encode_compiled(&self.compiled, &x.cast())?.cast())
    }

    fn decide(&self, z: &Matrix<f64>) -> Result<Vec<usize>> {
        Ok(self.model.classify(&z.cast())?.argmax_rows())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificationRecord {
    pub index: usize,
    pub label: usize,
    /// `None` means abstain.
    pub prediction: Option<usize>,
    pub pa_lower: f64,
    pub cr_latent: f64,
    pub cr_input: f64,
    pub correct: bool,
    pub time_ms: u64,
}

/// Counts of the base decision over `m` noisy copies of `center`, which is a
/// latent code in latent mode and a raw input in input mode.
fn counts_around(
    base: &dyn Smoothable,
    center: &[f64],
    m: u64,
    sigma: f64,
    space: NoiseSpace,
    rng: &mut Rng,
) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; base.classes()];
    let center_row = Matrix::row_vector(center.to_vec());
    let mut left = m as usize;
    while left > 0 {
        let rows = left.min(CHUNK);
        let noisy = rng.gauss_sample(rows, center.len(), sigma)?.add_row(&center_row)?;
        let decisions = match space {
            NoiseSpace::Latent => base.decide(&noisy)?,
            NoiseSpace::Input => base.decide(&base.encode(&noisy)?)?,
        };
        for c in decisions {
            counts[c] += 1;
        }
        left -= rows;
    }
    Ok(counts)
}

/// The centre the noise is added to: `z = Psi(x)` (computed once) in latent
/// mode, `x` itself in input mode.
fn smoothing_center(base: &dyn Smoothable, x: &[f64], space: NoiseSpace) -> Result<Vec<f64>> {
    if x.len() != base.input_dim() {
        return Err(Error::Shape {
            op: "certify",
            left: (1, base.input_dim()),
            right: (1, x.len()),
        });
    }
    match space {
        NoiseSpace::Latent => Ok(base.encode(&Matrix::row_vector(x.to_vec()))?.into_data()),
        NoiseSpace::Input => Ok(x.to_vec()),
    }
}

/// Per-class counts of `m` evaluations of the base classifier under noise.
pub fn sample_counts(
    base: &dyn Smoothable,
    point: &[f64],
    m: u64,
    config: &SmoothingConfig,
    rng: &mut Rng,
) -> Result<Vec<u64>> {
    config.validate()?;
    if m == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    let center = smoothing_center(base, point, config.space)?;
    counts_around(base, &center, m, config.sigma, config.space, rng)
}

/// `sigma * Phi^-1(pa)` for `pa > 1/2` (clamped below 1), else 0.
pub fn radius_from_pa(sigma: f64, pa_lower: f64) -> Result<f64> {
    if pa_lower > 0.5 {
        Ok(sigma * std_normal_inv_cdf(pa_lower.min(PA_CLAMP))?)
    } else {
        Ok(0.0)
    }
}

/// Input-space radius from a latent radius and the encoder bound `L`.
pub fn map_radius(cr_latent: f64, lipschitz: f64) -> Result<f64> {
    if !(lipschitz > 0.0) || !lipschitz.is_finite() {
        return Err(invalid(format!("Lipschitz bound must be positive, got {lipschitz}")));
    }
    if !(cr_latent >= 0.0) {
        return Err(invalid(format!("latent radius must be nonnegative, got {cr_latent}")));
    }
    Ok(cr_latent / lipschitz)
}

/// Index of the largest count; ties go to the lowest class.
fn top(counts: &[u64]) -> usize {
    let mut best = 0;
    for (c, &k) in counts.iter().enumerate() {
        if k > counts[best] {
            best = c;
        }
    }
    best
}

/// Certification outcome from the estimation count of the selected class.
pub fn certificate(
    selected: usize,
    count: u64,
    config: &SmoothingConfig,
    lipschitz: f64,
) -> Result<(Option<usize>, f64, f64, f64)> {
    let pa_lower = clopper_pearson_lower(count, config.n, config.alpha)?;
    let cr_latent = radius_from_pa(config.sigma, pa_lower)?;
    if cr_latent <= 0.0 {
        return Ok((None, pa_lower, 0.0, 0.0));
    }
    let cr_input = match config.space {
        NoiseSpace::Latent => map_radius(cr_latent, lipschitz)?,
        NoiseSpace::Input => cr_latent,
    };
    Ok((Some(selected), pa_lower, cr_latent, cr_input))
}

/// Certifies one point. `stream` identifies the point; the selection and
/// estimation phases draw from independent children of it.
pub fn certify(
    base: &dyn Smoothable,
    x: &[f64],
    y: usize,
    config: &SmoothingConfig,
    stream: &Rng,
) -> Result<CertificationRecord> {
    config.validate()?;
    let center = smoothing_center(base, x, config.space)?;
    let selection = counts_around(
        base,
        &center,
        config.n0,
        config.sigma,
        config.space,
        &mut stream.fork(PHASE_SELECT),
    )?;
    let selected = top(&selection);
    let estimate = counts_around(
        base,
        &center,
        config.n,
        config.sigma,
        config.space,
        &mut stream.fork(PHASE_ESTIMATE),
    )?;
    let (prediction, pa_lower, cr_latent, cr_input) =
        certificate(selected, estimate[selected], config, base.lipschitz())?;
    Ok(CertificationRecord {
        index: 0,
        label: y,
        prediction,
        pa_lower,
        cr_latent,
        cr_input,
        correct: prediction == Some(y),
        time_ms: 0,
    })
}

/// Decision from raw counts: the top class when a two-sided binomial test of
/// the top two counts rejects equality at level `alpha`.
pub fn predict_from_counts(counts: &[u64], alpha: f64) -> Result<Option<usize>> {
    let first = top(counts);
    let second = counts
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != first)
        .map(|(_, &k)| k)
        .max()
        .unwrap_or(0);
    let p_value = binomial_test_half(counts[first], counts[first] + second)?;
    Ok((p_value <= alpha).then_some(first))
}

/// Smoothed prediction with abstention, from `n` fresh samples.
pub fn predict(base: &dyn Smoothable, x: &[f64], config: &SmoothingConfig, stream: &Rng) -> Result<Option<usize>> {
    config.validate()?;
    let center = smoothing_center(base, x, config.space)?;
    let counts = counts_around(
        base,
        &center,
        config.n,
        config.sigma,
        config.space,
        &mut stream.fork(PHASE_PREDICT),
    )?;
    predict_from_counts(&counts, config.alpha)
}

/// How a batch of points is certified. Records depend only on `seed`, never
/// on `workers`.
#[derive(Clone, Debug, PartialEq)]
pub struct CertifyOptions {
    pub seed: u64,
    pub workers: usize,
    /// Fill `time_ms`; off by default so outputs are byte-reproducible.
    pub record_time: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            record_time: false,
        }
    }
}

/// Certifies every row of `xs`; point `i` uses the stream `(seed, i)`.
/// `progress` is called with (done, total) after each point.
pub fn certify_points(
    base: &dyn Smoothable,
    xs: &Matrix<f64>,
    ys: &[usize],
    indices: &[usize],
    config: &SmoothingConfig,
    options: &CertifyOptions,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<Vec<CertificationRecord>> {
    config.validate()?;
    if xs.rows() != ys.len() || ys.len() != indices.len() {
        return Err(invalid(format!(
            "{} points, {} labels and {} indices",
            xs.rows(),
            ys.len(),
            indices.len()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    let master = Rng::seed(options.seed);
    let done = AtomicUsize::new(0);
    let total = ys.len();
    pool.install(|| {
        (0..total)
            .into_par_iter()
            .map(|i| {
                let start = Instant::now();
                let stream = master.fork(indices[i] as u64);
                let mut rec = certify(base, xs.row(i), ys[i], config, &stream)?;
                rec.index = indices[i];
                if options.record_time {
                    rec.time_ms = start.elapsed().as_millis() as u64;
                }
                let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
                if let Some(report) = progress {
                    report(finished, total);
                }
                Ok(rec)
            })
            .collect()
    })
}

pub const RECORD_HEADER: [&str; 8] = [
    "index",
    "label",
    "prediction",
    "pa_lower",
    "cr_latent",
    "cr_input",
    "correct",
    "time_ms",
];

pub fn write_records<W: Write>(w: W, records: &[CertificationRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RECORD_HEADER)?;
    for r in records {
        out.write_record([
            r.index.to_string(),
            r.label.to_string(),
            r.prediction.map_or_else(|| "abstain".to_string(), |p| p.to_string()),
            r.pa_lower.to_string(),
            r.cr_latent.to_string(),
            r.cr_input.to_string(),
            u8::from(r.correct).to_string(),
            r.time_ms.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Parses records written by [`write_records`]; errors carry the line number.
pub fn read_records<R: Read>(r: R) -> Result<Vec<CertificationRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = reader.headers()?.clone();
    if header.iter().ne(RECORD_HEADER) {
        return Err(Error::Format(format!(
            "line 1: expected header {}",
            RECORD_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Format(format!("line {line}: {e}")))?;
        let bad = |field: &str| Error::Format(format!("line {line}: malformed {field}"));
        let field = |k: usize| row.get(k).unwrap_or("");
        let num = |k: usize, name: &str| field(k).parse::<f64>().map_err(|_| bad(name));
        let prediction = match field(2) {
            "abstain" => None,
            p => Some(p.parse().map_err(|_| bad("prediction"))?),
        };
        let correct = match field(6) {
            "1" => true,
            "0" => false,
            _ => return Err(bad("correct")),
        };
        let rec = CertificationRecord {
            index: field(0).parse().map_err(|_| bad("index"))?,
            label: field(1).parse().map_err(|_| bad("label"))?,
            prediction,
            pa_lower: num(3, "pa_lower")?,
            cr_latent: num(4, "cr_latent")?,
            cr_input: num(5, "cr_input")?,
            correct,
            time_ms: field(7).parse().map_err(|_| bad("time_ms"))?,
        };
        if !(rec.cr_input >= 0.0 && rec.cr_latent >= 0.0) || !(0.0..=1.0).contains(&rec.pa_lower) {
            return Err(Error::Format(format!(
                "line {line}: radius or probability out of range"
            )));
        }
        if rec.correct != (rec.prediction == Some(rec.label)) {
            return Err(Error::Format(format!(
                "line {line}: correct flag disagrees with prediction"
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{LayerKind, ModelSpec};
    use crate::numerics::std_normal_cdf;

    /// Identity encoder, decision `argmax{w.z + b, 0}` as classes (1, 0).
    struct Linear {
        w: Vec<f64>,
        b: f64,
        lipschitz: f64,
    }

    impl Smoothable for Linear {
        fn input_dim(&self) -> usize {
            self.w.len()
        }
        fn latent_dim(&self) -> usize {
            self.w.len()
        }
        fn classes(&self) -> usize {
            2
        }
        fn lipschitz(&self) -> f64 {
            self.lipschitz
        }
        fn encode(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
            Ok(x.clone())
        }
        fn decide(&self, z: &Matrix<f64>) -> Result<Vec<usize>> {
            Ok((0..z.rows())
                .map(|r| {
                    let s: f64 = z.row(r).iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>() + self.b;
                    usize::from(s <= 0.0)
                })
                .collect())
        }
    }

    fn unit_linear() -> Linear {
        Linear {
            w: vec![0.6, 0.8],
            b: 0.0,
            lipschitz: 1.0,
        }
    }

    fn cfg(sigma: f64, n: u64) -> SmoothingConfig {
        SmoothingConfig {
            sigma,
            n0: 100,
            n,
            alpha: 0.001,
            space: NoiseSpace::Latent,
        }
    }

    #[test]
    fn vanishing_noise_counts_the_clean_class() {
        let base = unit_linear();
        let counts = sample_counts(&base, &[1.0, 1.0], 500, &cfg(1e-9, 500), &mut Rng::seed(1)).unwrap();
        assert_eq!(counts, vec![500, 0]);
    }

    #[test]
    fn boundary_point_splits_evenly() {
        let base = unit_linear();
        let m = 10_000u64;
        let counts = sample_counts(&base, &[0.8, -0.6], m, &cfg(0.5, m), &mut Rng::seed(2)).unwrap();
        let tol = 4.0 * (m as f64).sqrt();
        assert!((counts[0] as f64 - m as f64 / 2.0).abs() <= tol, "{counts:?}");
        assert_eq!(counts[0] + counts[1], m);
    }

    #[test]
    fn counts_are_deterministic_per_stream() {
        let base = unit_linear();
        let a = sample_counts(&base, &[0.1, 0.0], 3000, &cfg(0.5, 3000), &mut Rng::seed(3)).unwrap();
        let b = sample_counts(&base, &[0.1, 0.0], 3000, &cfg(0.5, 3000), &mut Rng::seed(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unanimous_counts_give_the_closed_form_radius() {
        let c = cfg(0.12, 100);
        let (pred, pa, cr, cr_in) = certificate(0, 100, &c, 1.0).unwrap();
        assert_eq!(pred, Some(0));
        let closed = 0.001f64.powf(0.01);
        assert!((pa - closed).abs() < 1e-15);
        assert!((pa - 0.93325).abs() < 1e-5);
        assert!((cr - 0.12 * std_normal_inv_cdf(closed).unwrap()).abs() < 1e-15);
        // quoted as 0.12 * 1.4995 ~ 0.1799; the exact chain gives 0.180057
        assert!((cr - 0.1800570028944763).abs() < 1e-9);
        assert!((cr - 0.1799).abs() < 2e-4);
        assert_eq!(cr, cr_in);
        assert!((cr - c.radius_ceiling().unwrap()).abs() < 1e-15);
    }

    #[test]
    fn weak_majority_abstains() {
        let (pred, pa, cr, cr_in) = certificate(0, 55, &cfg(0.12, 100), 1.0).unwrap();
        assert!(pa < 0.5);
        assert_eq!((pred, cr, cr_in), (None, 0.0, 0.0));
    }

    #[test]
    fn radius_is_monotone_in_count() {
        let c = cfg(0.25, 400);
        let mut last = 0.0;
        for k in 0..=400 {
            let (_, _, cr, _) = certificate(0, k, &c, 1.0).unwrap();
            assert!(cr >= last);
            last = cr;
        }
    }

    #[test]
    fn latent_radius_maps_through_lipschitz_bound() {
        assert_eq!(map_radius(0.3, 1.0).unwrap(), 0.3);
        assert_eq!(map_radius(0.3, 2.0).unwrap(), 0.15);
        assert!(map_radius(0.3, 0.0).is_err());
        assert!(map_radius(0.3, -1.0).is_err());
        let mut base = unit_linear();
        base.lipschitz = 2.0;
        let rec = certify(&base, &[0.6, 0.8], 0, &cfg(0.12, 2000), &Rng::seed(4)).unwrap();
        assert!(rec.cr_latent > 0.0);
        assert_eq!(rec.cr_input, rec.cr_latent / 2.0);
    }

    #[test]
    fn linear_oracle_radius_is_below_the_margin() {
        // w.z = 0.3 at sigma 0.12: exact pA = Phi(2.5), exact radius 0.3.
        let base = unit_linear();
        let z = [0.18, 0.24];
        assert!((std_normal_cdf(0.3 / 0.12) - 0.99379).abs() < 1e-5);
        let mut small = Vec::new();
        for seed in 0..20 {
            let rec = certify(&base, &z, 0, &cfg(0.12, 2000), &Rng::seed(seed)).unwrap();
            assert!(rec.cr_latent <= 0.3);
            small.push(rec.cr_latent);
        }
        let big = certify(&base, &z, 0, &cfg(0.12, 200_000), &Rng::seed(99)).unwrap();
        let mean_small = small.iter().sum::<f64>() / small.len() as f64;
        assert!(big.cr_latent > mean_small && big.cr_latent <= 0.3);
        assert!(big.cr_latent > 0.28, "{}", big.cr_latent);
    }

    #[test]
    fn predict_cases() {
        assert_eq!(predict_from_counts(&[100, 0], 0.001).unwrap(), Some(0));
        assert_eq!(predict_from_counts(&[0, 100], 0.001).unwrap(), Some(1));
        assert_eq!(predict_from_counts(&[51, 49], 0.001).unwrap(), None);
        let base = unit_linear();
        assert_eq!(
            predict(&base, &[1.0, 1.0], &cfg(1e-9, 100), &Rng::seed(5)).unwrap(),
            Some(0)
        );
        assert_eq!(
            predict(&base, &[-1.0, -1.0], &cfg(1e-9, 100), &Rng::seed(5)).unwrap(),
            Some(1)
        );
    }

    #[test]
    fn same_latent_code_same_certificate() {
        // Two inputs that differ only where the input map truncates share z.
        let spec = ModelSpec {
            input_map: crate::nets::InputMap::PadTruncate { in_dim: 6, out_dim: 4 },
            widths: vec![4, 4],
            classes: 2,
            group_size: 2,
            layer_kind: LayerKind::Orthogonal,
        };
        let model: Model<f64> = Model::init(&spec, &mut Rng::seed(6)).unwrap();
        let base = Certifiable::new(&model).unwrap();
        let a = [0.3, -0.2, 0.5, 0.1, 9.0, -4.0];
        let b = [0.3, -0.2, 0.5, 0.1, -1.0, 2.0];
        let stream = Rng::seed(7);
        let ra = certify(&base, &a, 1, &cfg(0.12, 5000), &stream).unwrap();
        let rb = certify(&base, &b, 1, &cfg(0.12, 5000), &stream).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn worker_count_does_not_change_records() {
        let spec = ModelSpec::square(10, 2, 2, LayerKind::Orthogonal);
        let model: Model<f64> = Model::init(&spec, &mut Rng::seed(8)).unwrap();
        let base = Certifiable::new(&model).unwrap();
        let xs: Matrix<f64> = Rng::seed(9).gauss_sample(12, 10, 1.0).unwrap();
        let ys: Vec<usize> = (0..12).map(|i| i % 2).collect();
        let idx: Vec<usize> = (0..12).collect();
        let run = |workers| {
            let opts = CertifyOptions {
                seed: 10,
                workers,
                record_time: false,
            };
            certify_points(&base, &xs, &ys, &idx, &cfg(0.12, 1000), &opts, None).unwrap()
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one.iter().map(|r| r.index).collect::<Vec<_>>(), idx);
    }

    #[test]
    fn records_round_trip_and_reject_garbage() {
        let recs = vec![
            CertificationRecord {
                index: 3,
                label: 1,
                prediction: Some(1),
                pa_lower: 0.9912345678901234,
                cr_latent: 0.2871,
                cr_input: 0.2871,
                correct: true,
                time_ms: 0,
            },
            CertificationRecord {
                index: 4,
                label: 0,
                prediction: None,
                pa_lower: 0.31,
                cr_latent: 0.0,
                cr_input: 0.0,
                correct: false,
                time_ms: 12,
            },
        ];
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        assert_eq!(read_records(buf.as_slice()).unwrap(), recs);
        let text = String::from_utf8(buf).unwrap();
        let broken = text.replace("0.2871,0.2871", "0.2871,oops");
        let err = read_records(broken.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let wrong_flag = text.replace(",0,12", ",1,12");
        assert!(read_records(wrong_flag.as_bytes())
            .unwrap_err()
            .to_string()
            .contains("line 3"));
    }
}
