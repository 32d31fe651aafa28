//! Certified accuracy over a radius grid, average certified radius, and the
//! comparative experiments built from training and certification.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::certify::{certify_points, Certifiable, CertificationRecord, CertifyOptions, SmoothingConfig};
use crate::data::{split, EnvDataset};
use crate::error::{invalid, Result};
use crate::nets::{Model, ModelSpec};
use crate::numerics::Rng;
use crate::training::{init_model, train, TrainConfig, TrainReport, Variant};

const SUBSAMPLE_STREAM: u64 = 0x5355_4253;
const CERTIFY_STREAM: u64 = 0x4345_5254;

/// Radii at which certified accuracy is reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RadiusGrid {
    radii: Vec<f64>,
}

impl RadiusGrid {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.first() != Some(&0.0) {
            return Err(invalid("radius grid must start at 0"));
        }
        if radii.windows(2).any(|w| !(w[1] > w[0])) || radii.iter().any(|r| !r.is_finite()) {
            return Err(invalid("radius grid must be finite and strictly increasing"));
        }
        Ok(Self { radii })
    }

    /// 0.00, 0.05, ..., 0.45.
    pub fn standard() -> Self {
        Self {
            radii: (0..10).map(|i| (5 * i) as f64 / 100.0).collect(),
        }
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.radii.clone()).map(|_| ())
    }
}

impl Default for RadiusGrid {
    fn default() -> Self {
        Self::standard()
    }
}

fn nonempty(records: &[CertificationRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(invalid("no certification records"));
    }
    Ok(())
}

/// Fraction of records that are correct with `cr_input >= r`, per grid
/// radius. Abstentions are never correct.
pub fn certified_accuracy(records: &[CertificationRecord], grid: &RadiusGrid) -> Result<Vec<f64>> {
    nonempty(records)?;
    let n = records.len() as f64;
    Ok(grid
        .radii
        .iter()
        .map(|&r| records.iter().filter(|rec| rec.correct && rec.cr_input >= r).count() as f64 / n)
        .collect())
}

/// Mean of `cr_input * [correct]`.
pub fn acr(records: &[CertificationRecord]) -> Result<f64> {
    nonempty(records)?;
    let total: f64 = records.iter().filter(|r| r.correct).map(|r| r.cr_input).sum();
    Ok(total / records.len() as f64)
}

/// Left Riemann sum of the accuracy curve over the grid; approaches the
/// average certified radius only as the grid becomes dense.
pub fn curve_area(grid: &RadiusGrid, accuracy: &[f64]) -> f64 {
    grid.radii
        .windows(2)
        .zip(accuracy)
        .map(|(w, a)| a * (w[1] - w[0]))
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub variant: String,
    pub sigma: f64,
    pub lambda: f64,
    pub seed: u64,
    pub points: usize,
    pub acr: f64,
    pub curve_area: f64,
    pub clean_accuracy: f64,
    pub abstain_rate: f64,
    pub grid: RadiusGrid,
    pub certified_accuracy: Vec<f64>,
}

/// Run metadata attached to a summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub variant: String,
    pub sigma: f64,
    pub lambda: f64,
    pub seed: u64,
}

pub fn summarize(records: &[CertificationRecord], grid: &RadiusGrid, meta: &RunMeta) -> Result<EvalSummary> {
    let certified_accuracy = certified_accuracy(records, grid)?;
    let n = records.len() as f64;
    Ok(EvalSummary {
        variant: meta.variant.clone(),
        sigma: meta.sigma,
        lambda: meta.lambda,
        seed: meta.seed,
        points: records.len(),
        acr: acr(records)?,
        curve_area: curve_area(grid, &certified_accuracy),
        clean_accuracy: certified_accuracy[0],
        abstain_rate: records.iter().filter(|r| r.prediction.is_none()).count() as f64 / n,
        grid: grid.clone(),
        certified_accuracy,
    })
}

/// `summary.csv`: one row per summary; every summary must share a grid.
pub fn write_summary_csv<W: Write>(w: W, summaries: &[EvalSummary]) -> Result<()> {
    let Some(first) = summaries.first() else {
        return Err(invalid("no summaries to write"));
    };
    if summaries.iter().any(|s| s.grid != first.grid) {
        return Err(invalid("summaries use different radius grids"));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = [
        "variant",
        "sigma",
        "lambda",
        "seed",
        "points",
        "acr",
        "curve_area",
        "clean_acc",
        "abstain_rate",
    ]
    .map(String::from)
    .to_vec();
    header.extend(first.grid.radii.iter().map(|r| format!("acc@{r:.2}")));
    out.write_record(&header)?;
    for s in summaries {
        let mut row = vec![
            s.variant.clone(),
            s.sigma.to_string(),
            s.lambda.to_string(),
            s.seed.to_string(),
            s.points.to_string(),
            s.acr.to_string(),
            s.curve_area.to_string(),
            s.clean_accuracy.to_string(),
            s.abstain_rate.to_string(),
        ];
        row.extend(s.certified_accuracy.iter().map(f64::to_string));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Certified accuracy per radius for one labelled curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub label: String,
    pub radii: Vec<f64>,
    pub accuracy: Vec<f64>,
}

/// Per-label mean curves across seeds, in first-seen label order.
pub fn mean_curves(summaries: &[EvalSummary]) -> Vec<Curve> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&EvalSummary>> = BTreeMap::new();
    for s in summaries {
        if !groups.contains_key(&s.variant) {
            order.push(s.variant.clone());
        }
        groups.entry(s.variant.clone()).or_default().push(s);
    }
    order
        .into_iter()
        .map(|label| {
            let members = &groups[&label];
            let radii = members[0].grid.radii.clone();
            let accuracy = (0..radii.len())
                .map(|i| members.iter().map(|s| s.certified_accuracy[i]).sum::<f64>() / members.len() as f64)
                .collect();
            Curve { label, radii, accuracy }
        })
        .collect()
}

/// `curve.csv`: `variant,radius,certified_accuracy`.
pub fn write_curve_csv<W: Write>(w: W, curves: &[Curve]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["variant", "radius", "certified_accuracy"])?;
    for c in curves {
        for (r, a) in c.radii.iter().zip(&c.accuracy) {
            out.write_record([c.label.clone(), r.to_string(), a.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Standalone SVG line chart of certified accuracy against radius.
pub fn render_svg(curves: &[Curve]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (64.0, 180.0, 24.0, 56.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let max_r = curves
        .iter()
        .flat_map(|c| c.radii.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let px = |r: f64| left + pw * r / max_r;
    let py = |a: f64| top + ph * (1.0 - a);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for i in 0..=5 {
        let a = i as f64 / 5.0;
        let y = py(a);
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##,
            left + pw
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{a:.1}</text>"#,
            left - 6.0,
            y + 4.0
        );
    }
    for i in 0..=5 {
        let r = max_r * i as f64 / 5.0;
        let x = px(r);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/>"##,
            top + ph,
            top + ph + 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{r:.2}</text>"#,
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">radius</text>"#,
        left + pw / 2.0,
        h - 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">certified accuracy</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = c
            .radii
            .iter()
            .zip(&c.accuracy)
            .map(|(&r, &a)| format!("{:.2},{:.2}", px(r), py(a)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 12.0 + 20.0 * i as f64;
        let lx = left + pw + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            xml_escape(&c.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Everything one comparative run needs besides the data.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Architecture; the layer kind is chosen per variant.
    pub model: ModelSpec,
    /// Training settings; variant and seed are filled in per run.
    pub train: TrainConfig,
    /// Smoothing settings; the noise space is chosen per variant.
    pub smoothing: SmoothingConfig,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub train_envs: Vec<usize>,
    pub test_env: usize,
    /// Certify a seeded random subset of this many test points.
    pub subsample: Option<usize>,
    pub grid: RadiusGrid,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.smoothing.validate()?;
        self.grid.validate()?;
        if self.variants.is_empty() || self.seeds.is_empty() {
            return Err(invalid("need at least one variant and one seed"));
        }
        if self.subsample == Some(0) {
            return Err(invalid("subsample must be positive"));
        }
        Ok(())
    }
}

/// One trained and certified (variant, seed) cell.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub variant: Variant,
    pub seed: u64,
    pub model: Model<f64>,
    pub report: TrainReport,
    pub records: Vec<CertificationRecord>,
    pub summary: EvalSummary,
}

/// Seeded subset of `0..len` of size `k`, returned in increasing order.
pub fn subsample_indices(len: usize, k: Option<usize>, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    match k {
        Some(k) if k < len => {
            Rng::seed(seed).fork(SUBSAMPLE_STREAM).shuffle(&mut idx);
            idx.truncate(k);
            idx.sort_unstable();
            idx
        }
        _ => idx,
    }
}

/// Smoothing settings actually used for `variant`.
pub fn smoothing_for(variant: Variant, base: &SmoothingConfig) -> SmoothingConfig {
    SmoothingConfig {
        space: variant.noise_space(),
        ..base.clone()
    }
}

/// Trains `variant` with `seed` on the training environments and certifies
/// the test environment.
pub fn run_one(dataset: &EnvDataset, config: &ExperimentConfig, variant: Variant, seed: u64) -> Result<RunOutcome> {
    let (train_set, test_set) = split(dataset, &config.train_envs, config.test_env)?;
    let train_cfg = TrainConfig {
        variant,
        seed,
        ..config.train.clone()
    };
    let init = init_model::<f64>(&config.model, variant, seed)?;
    let (model, report) = train(&init, &train_set, &train_cfg)?;
    let smoothing = smoothing_for(variant, &config.smoothing);
    let test = &test_set.environments[0];
    let indices = subsample_indices(test.len(), config.subsample, seed);
    let points = test.subset(&indices);
    let options = CertifyOptions {
        seed: Rng::seed(seed).fork(CERTIFY_STREAM).seed_value(),
        workers: config.workers,
        record_time: false,
    };
    let base = Certifiable::new(&model)?;
    let records = certify_points(&base, &points.x, &points.y, &indices, &smoothing, &options, None)?;
    let meta = RunMeta {
        variant: variant.name().to_string(),
        sigma: smoothing.sigma,
        lambda: if variant.uses_penalty() { train_cfg.lambda } else { 0.0 },
        seed,
    };
    let summary = summarize(&records, &config.grid, &meta)?;
    Ok(RunOutcome {
        variant,
        seed,
        model,
        report,
        records,
        summary,
    })
}

/// Every configured variant for every seed; variants run sequentially, seeds
/// in the outer loop.
pub fn run_experiment(dataset: &EnvDataset, config: &ExperimentConfig) -> Result<Vec<RunOutcome>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.seeds.len() * config.variants.len());
    for &seed in &config.seeds {
        for &variant in &config.variants {
            out.push(run_one(dataset, config, variant, seed)?);
        }
    }
    Ok(out)
}

/// Mean ACR per variant across the outcomes.
pub fn mean_acr(outcomes: &[RunOutcome], variant: Variant) -> Option<f64> {
    let values: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.variant == variant)
        .map(|o| o.summary.acr)
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Axis of a one-dimensional sweep of the full variant.
#[derive(Clone, Debug, PartialEq)]
pub enum SweepAxis {
    Lambda(Vec<f64>),
    /// Sets both the certification level and the training augmentation level.
    Sigma(Vec<f64>),
}

/// Runs the full variant once per axis value (and per configured seed);
/// summaries are labelled `lambda=<v>` or `sigma=<v>`.
pub fn sweep(dataset: &EnvDataset, config: &ExperimentConfig, axis: &SweepAxis) -> Result<Vec<RunOutcome>> {
    config.validate()?;
    let values = match axis {
        SweepAxis::Lambda(v) | SweepAxis::Sigma(v) => v,
    };
    if values.is_empty() {
        return Err(invalid("sweep needs at least one value"));
    }
    let mut out = Vec::new();
    for &v in values {
        let mut cfg = config.clone();
        let label = match axis {
            SweepAxis::Lambda(_) => {
                cfg.train.lambda = v;
                format!("lambda={v}")
            }
            SweepAxis::Sigma(_) => {
                cfg.smoothing.sigma = v;
                cfg.train.sigma_train = v;
                format!("sigma={v}")
            }
        };
        cfg.validate()?;
        for &seed in &cfg.seeds {
            let mut outcome = run_one(dataset, &cfg, Variant::Full, seed)?;
            outcome.summary.variant = label.clone();
            out.push(outcome);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(correct: bool, cr: f64) -> CertificationRecord {
        CertificationRecord {
            index: 0,
            label: 0,
            prediction: if correct {
                Some(0)
            } else if cr > 0.0 {
                Some(1)
            } else {
                None
            },
            pa_lower: 0.9,
            cr_latent: cr,
            cr_input: cr,
            correct,
            time_ms: 0,
        }
    }

    fn synthetic(n: usize, seed: u64) -> Vec<CertificationRecord> {
        let mut rng = Rng::seed(seed);
        (0..n)
            .map(|i| {
                let abstain = rng.bernoulli(0.1);
                let cr = if abstain {
                    0.0
                } else {
                    (rng.uniform() * 0.5 * 20.0).round() / 20.0
                };
                let correct = !abstain && rng.bernoulli(0.7);
                CertificationRecord {
                    index: i,
                    label: 0,
                    prediction: if abstain { None } else { Some(usize::from(!correct)) },
                    pa_lower: 0.5,
                    cr_latent: cr,
                    cr_input: cr,
                    correct,
                    time_ms: 0,
                }
            })
            .collect()
    }

    #[test]
    fn grid_cases() {
        let g = RadiusGrid::standard();
        assert_eq!(g.radii().len(), 10);
        assert_eq!(g.radii()[3], 0.15);
        assert_eq!(g.radii()[9], 0.45);
        assert!(RadiusGrid::new(vec![0.1, 0.2]).is_err());
        assert!(RadiusGrid::new(vec![0.0, 0.2, 0.2]).is_err());
        assert!(RadiusGrid::new(vec![0.0]).is_ok());
    }

    #[test]
    fn single_record_curve() {
        let grid = RadiusGrid::new(vec![0.0, 0.25, 0.5]).unwrap();
        assert_eq!(
            certified_accuracy(&[rec(true, 0.3)], &grid).unwrap(),
            vec![1.0, 1.0, 0.0]
        );
        let abstains = vec![rec(false, 0.0); 4];
        assert_eq!(certified_accuracy(&abstains, &grid).unwrap(), vec![0.0; 3]);
        assert!(certified_accuracy(&[], &grid).is_err());
    }

    #[test]
    fn acr_cases() {
        assert!((acr(&[rec(true, 0.2), rec(false, 0.5)]).unwrap() - 0.1).abs() < 1e-15);
        assert!((acr(&vec![rec(true, 0.37); 9]).unwrap() - 0.37).abs() < 1e-15);
        assert!(acr(&[]).is_err());
    }

    #[test]
    fn metrics_match_loop_oracles() {
        let records = synthetic(1000, 1);
        let grid = RadiusGrid::standard();
        let acc = certified_accuracy(&records, &grid).unwrap();
        for (i, &r) in grid.radii().iter().enumerate() {
            let mut hits = 0usize;
            for rec in &records {
                if rec.prediction == Some(rec.label) && rec.cr_input >= r {
                    hits += 1;
                }
            }
            assert_eq!(acc[i], hits as f64 / records.len() as f64);
        }
        let mut total = 0.0;
        for rec in &records {
            if rec.correct {
                total += rec.cr_input;
            }
        }
        assert_eq!(acr(&records).unwrap(), total / records.len() as f64);
        assert!(acc.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn summary_and_outputs() {
        let grid = RadiusGrid::standard();
        let meta = |v: &str, seed| RunMeta {
            variant: v.into(),
            sigma: 0.12,
            lambda: 1e4,
            seed,
        };
        let a = summarize(&synthetic(200, 2), &grid, &meta("full", 0)).unwrap();
        let b = summarize(&synthetic(200, 3), &grid, &meta("full", 1)).unwrap();
        let c = summarize(&synthetic(200, 4), &grid, &meta("gaussian_baseline", 0)).unwrap();
        assert_eq!(a.clean_accuracy, a.certified_accuracy[0]);
        assert!(a.abstain_rate > 0.0 && a.abstain_rate < 0.2);
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &[a.clone(), b.clone(), c.clone()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .starts_with("variant,sigma,lambda,seed,points,acr,curve_area,clean_acc,abstain_rate,acc@0.00,acc@0.05"));
        assert_eq!(text.lines().count(), 4);

        let curves = mean_curves(&[a.clone(), b.clone(), c]);
        assert_eq!(curves.len(), 2);
        assert_eq!(curves[0].label, "full");
        assert_eq!(
            curves[0].accuracy[0],
            (a.certified_accuracy[0] + b.certified_accuracy[0]) / 2.0
        );
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &curves).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 20);
        let svg = render_svg(&curves);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">full</text>") && svg.contains(">gaussian_baseline</text>"));
    }

    #[test]
    fn subsample_is_seeded_and_sorted() {
        let a = subsample_indices(100, Some(10), 5);
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, subsample_indices(100, Some(10), 5));
        assert_ne!(a, subsample_indices(100, Some(10), 6));
        assert_eq!(subsample_indices(5, Some(10), 1), vec![0, 1, 2, 3, 4]);
    }
}
