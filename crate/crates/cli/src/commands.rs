use std::path::Path;

use circembed::analysis::{
    calibrate_constants, continuous_eigenvalue, decay_report, default_fit_range,
    gaussian_ell_bound, matern_ell_bound, pd_criterion, qmc_criterion_sum, sampling_theorem_check,
    BoundConstants, SweepPoint,
};
use circembed::covariance::{MaternKernel, Smoothness, StationaryKernel};
use circembed::embedding::{
    compute_spectrum, covariance_matrix, linear_index, minimal_embedding_with, Embedding, GridSpec,
    SearchOptions, SearchResult, Spectrum,
};
use circembed::io::{
    export_spectrum, read_field_csv, read_samples, write_field_csv_file, write_json, FieldBinWriter,
};
use circembed::sampler::{draw_normal, FieldSample, Mean, Sampler};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::args::*;
use crate::error::{usage, CliError};
use crate::run::Run;

/// Default cap on `s` when `--m-max` is not given.
const DEFAULT_MAX_POINTS: usize = 1 << 25;
/// Samples generated in parallel before being written.
const SAMPLE_BATCH: usize = 256;
/// Fewest samples `validate` accepts.
const MIN_VALIDATION_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
struct KernelParams {
    d: usize,
    nu: Smoothness,
    lambda: f64,
    sigma2: f64,
}

impl KernelParams {
    fn resolve(k: &KernelArgs) -> Result<Self, CliError> {
        Ok(KernelParams {
            d: k.d.ok_or_else(|| usage("--d is required"))?,
            nu: k.nu.ok_or_else(|| usage("--nu is required"))?,
            lambda: k.lambda.ok_or_else(|| usage("--lambda is required"))?,
            sigma2: k.sigma2.unwrap_or(1.0),
        })
    }

    fn kernel(&self) -> Result<MaternKernel, CliError> {
        Ok(MaternKernel::new(
            self.sigma2,
            self.lambda,
            self.nu,
            self.d,
        )?)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SearchParams {
    m0: usize,
    tol: f64,
    m_max: usize,
    schedule: ScheduleArg,
    roundoff_guard: bool,
}

impl SearchParams {
    fn resolve(s: &SearchArgs, kernel: &KernelParams) -> Result<Self, CliError> {
        let m0 = s.m0.ok_or_else(|| usage("--m0 is required"))?;
        let tol = s
            .tol
            .unwrap_or(if kernel.nu.is_infinite() { 1e-13 } else { 0.0 });
        let m_max = s.m_max.unwrap_or_else(|| default_m_max(kernel.d, m0));
        Ok(SearchParams {
            m0,
            tol,
            m_max,
            schedule: s.schedule.unwrap_or(ScheduleArg::Increment),
            roundoff_guard: s.roundoff_guard.unwrap_or(false),
        })
    }

    fn grid(&self, d: usize) -> Result<GridSpec, CliError> {
        Ok(GridSpec::new(d, self.m0)?)
    }

    fn options(&self) -> SearchOptions {
        SearchOptions {
            schedule: self.schedule.into(),
            roundoff_guard: self.roundoff_guard,
            ..SearchOptions::new(self.tol, self.m_max)
        }
    }
}

/// `16·m0`, reduced so that `(2m)^d` stays below [`DEFAULT_MAX_POINTS`].
fn default_m_max(d: usize, m0: usize) -> usize {
    let mut cap = m0;
    while (2 * (cap + 1)).pow(d as u32) <= DEFAULT_MAX_POINTS && cap < 16 * m0 {
        cap += 1;
    }
    cap
}

/// Merges serializable parameter groups into one object.
fn params(parts: &[Value]) -> Value {
    let mut out = Map::new();
    for p in parts {
        if let Value::Object(m) = p {
            out.extend(m.clone());
        }
    }
    Value::Object(out)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("parameters serialize")
}

fn search(
    kernel: &MaternKernel,
    grid: GridSpec,
    sp: &SearchParams,
) -> Result<SearchResult, CliError> {
    Ok(minimal_embedding_with(kernel, grid, &sp.options())?)
}

#[derive(Serialize)]
struct EmbeddingReport {
    m: usize,
    ell: f64,
    s: usize,
    min_eig: f64,
    steps: usize,
    wall_time: f64,
}

impl EmbeddingReport {
    fn of(r: &SearchResult) -> Self {
        EmbeddingReport {
            m: r.embedding.m(),
            ell: r.embedding.ell(),
            s: r.embedding.s(),
            min_eig: r.spectrum.min_value(),
            steps: r.steps,
            wall_time: r.seconds,
        }
    }
}

pub fn min_ell(a: &MinEllArgs, run: &mut Run) -> Result<Value, CliError> {
    let kp = KernelParams::resolve(&a.kernel)?;
    let sp = SearchParams::resolve(&a.search, &kp)?;
    run.record_parameters(&params(&[to_value(&kp), to_value(&sp)]))?;
    let kernel = kp.kernel()?;
    let grid = sp.grid(kp.d)?;
    run.create_out_dir()?;
    let r = search(&kernel, grid, &sp)?;
    let report = to_value(&EmbeddingReport::of(&r));
    let path = run.path("min-ell.json");
    write_json(&path, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SweepParams {
    d: Vec<usize>,
    nu: Vec<Smoothness>,
    lambda: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m0: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_m0_product: Option<f64>,
    sigma2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m_max: Option<usize>,
    schedule: ScheduleArg,
    roundoff_guard: bool,
    calibrate: bool,
}

#[derive(Debug, Clone, Copy)]
struct SweepSpec {
    d: usize,
    nu: Smoothness,
    lambda: f64,
    m0: usize,
}

struct SweepRow {
    spec: SweepSpec,
    outcome: Result<SearchResult, String>,
}

fn sweep_specs(p: &SweepParams) -> Result<Vec<SweepSpec>, CliError> {
    let mut specs = Vec::new();
    for &d in &p.d {
        for &nu in &p.nu {
            for &lambda in &p.lambda {
                let m0s: Vec<usize> = match (p.lambda_m0_product, &p.m0) {
                    (Some(prod), _) => {
                        let m0 = prod / lambda;
                        if !(m0 >= 1.0 && (m0 - m0.round()).abs() < 1e-9) {
                            return Err(usage(format!(
                                "lambda-m0-product {prod} / lambda {lambda} is not a positive integer"
                            )));
                        }
                        vec![m0.round() as usize]
                    }
                    (None, Some(m0s)) => m0s.clone(),
                    (None, None) => return Err(usage("--m0 or --lambda-m0-product is required")),
                };
                specs.extend(m0s.into_iter().map(|m0| SweepSpec { d, nu, lambda, m0 }));
            }
        }
    }
    Ok(specs)
}

pub fn sweep(a: &SweepArgs, run: &mut Run) -> Result<Value, CliError> {
    let p = SweepParams {
        d: a.d.clone().ok_or_else(|| usage("--d is required"))?,
        nu: a.nu.clone().ok_or_else(|| usage("--nu is required"))?,
        lambda: a
            .lambda
            .clone()
            .ok_or_else(|| usage("--lambda is required"))?,
        m0: a.m0.clone(),
        lambda_m0_product: a.lambda_m0_product,
        sigma2: a.sigma2.unwrap_or(1.0),
        tol: a.tol,
        m_max: a.m_max,
        schedule: a.schedule.unwrap_or(ScheduleArg::Increment),
        roundoff_guard: a.roundoff_guard.unwrap_or(false),
        calibrate: a.calibrate.unwrap_or(false),
    };
    run.record_parameters(&p)?;
    let specs = sweep_specs(&p)?;
    run.create_out_dir()?;

    let rows: Vec<SweepRow> = specs
        .par_iter()
        .map(|&spec| {
            let outcome = (|| -> Result<SearchResult, CliError> {
                let kp = KernelParams {
                    d: spec.d,
                    nu: spec.nu,
                    lambda: spec.lambda,
                    sigma2: p.sigma2,
                };
                let sp = SearchParams::resolve(
                    &SearchArgs {
                        m0: Some(spec.m0),
                        tol: p.tol,
                        m_max: p.m_max,
                        schedule: Some(p.schedule),
                        roundoff_guard: Some(p.roundoff_guard),
                    },
                    &kp,
                )?;
                search(&kp.kernel()?, sp.grid(spec.d)?, &sp)
            })()
            .map_err(|e| e.to_string());
            SweepRow { spec, outcome }
        })
        .collect();

    let main_path = run.path("sweep.csv");
    let mut w = csv::Writer::from_path(&main_path)?;
    w.write_record([
        "d", "nu", "lambda", "m0", "ell_min", "m", "s", "seconds", "status",
    ])?;
    let derived_path = run.path("sweep-derived.csv");
    let mut dw = csv::Writer::from_path(&derived_path)?;
    dw.write_record(["d", "nu", "lambda", "m0", "log2_m0", "log_nu", "log_ell"])?;
    let mut ok = 0;
    for row in &rows {
        let s = row.spec;
        let key = [
            s.d.to_string(),
            s.nu.to_string(),
            s.lambda.to_string(),
            s.m0.to_string(),
        ];
        let log_nu =
            s.nu.finite()
                .map(|v| v.ln().to_string())
                .unwrap_or_default();
        match &row.outcome {
            Ok(r) => {
                ok += 1;
                let e = r.embedding;
                w.write_record(key.iter().cloned().chain([
                    e.ell().to_string(),
                    e.m().to_string(),
                    e.s().to_string(),
                    r.seconds.to_string(),
                    "ok".into(),
                ]))?;
                dw.write_record(key.iter().cloned().chain([
                    (s.m0 as f64).log2().to_string(),
                    log_nu,
                    e.ell().ln().to_string(),
                ]))?;
            }
            Err(msg) => {
                w.write_record(key.iter().cloned().chain([
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    msg.clone(),
                ]))?;
            }
        }
    }
    w.flush()?;
    dw.flush()?;

    let mut result = json!({ "points": rows.len(), "ok": ok, "failed": rows.len() - ok });
    if p.calibrate {
        let points: Vec<SweepPoint> = rows
            .iter()
            .filter_map(|r| {
                r.outcome.as_ref().ok().map(|res| SweepPoint {
                    d: r.spec.d,
                    nu: r.spec.nu,
                    lambda: r.spec.lambda,
                    h0: 1.0 / r.spec.m0 as f64,
                    ell: res.embedding.ell(),
                })
            })
            .collect();
        let cal = calibrate_constants(&points)?;
        let path = run.path("calibration.json");
        write_json(&path, &cal)?;
        result["calibration"] = to_value(&cal);
    }
    Ok(result)
}

#[derive(Serialize)]
struct DecaySummary {
    m: usize,
    s: usize,
    js: (usize, usize),
    slope: f64,
    expected_slope: f64,
    rel_tol: f64,
    pass: bool,
    degenerate: bool,
}

pub fn eig_decay(a: &EigDecayArgs, run: &mut Run) -> Result<Value, CliError> {
    let kp = KernelParams::resolve(&a.kernel)?;
    let sp = SearchParams::resolve(&a.search, &kp)?;
    let rel_tol = a.rel_tol.unwrap_or(0.15);
    run.record_parameters(&params(&[
        to_value(&kp),
        to_value(&sp),
        json!({ "fit-lo": a.fit_lo, "fit-hi": a.fit_hi, "rel-tol": rel_tol }),
    ]))?;
    if kp.nu.is_infinite() {
        return Err(usage("eigenvalue decay needs finite --nu"));
    }
    let kernel = kp.kernel()?;
    run.create_out_dir()?;
    let r = search(&kernel, sp.grid(kp.d)?, &sp)?;
    let range = match (a.fit_lo, a.fit_hi) {
        (None, None) => None,
        (lo, hi) => {
            let (dlo, dhi) = default_fit_range(r.embedding.s());
            Some((lo.unwrap_or(dlo), hi.unwrap_or(dhi)))
        }
    };
    let report = decay_report(&r.spectrum, kp.nu, range, rel_tol)?;

    let path = run.path("decay.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["j", "sqrt_lambda_over_s"])?;
    for (j, v) in &report.points {
        w.write_record([j.to_string(), v.to_string()])?;
    }
    w.flush()?;
    let summary = to_value(&DecaySummary {
        m: r.embedding.m(),
        s: r.embedding.s(),
        js: report.js,
        slope: report.slope,
        expected_slope: -report.expected_beta,
        rel_tol,
        pass: report.pass,
        degenerate: report.degenerate,
    });
    let json_path = run.path("decay.json");
    write_json(&json_path, &summary)?;
    Ok(summary)
}

fn parse_mean(spec: &str, grid: GridSpec) -> Result<Mean, CliError> {
    if let Some(v) = spec.strip_prefix("const:") {
        let c: f64 = v
            .parse()
            .map_err(|_| usage(format!("--mean const:{v} is not a number")))?;
        return Ok(Mean::Constant(c));
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let (g, values) = read_field_csv(Path::new(path))?;
        if g != grid {
            return Err(usage(format!(
                "mean file {path} is on a d={} m0={} grid, expected d={} m0={}",
                g.d(),
                g.m0(),
                grid.d(),
                grid.m0()
            )));
        }
        return Ok(Mean::Field(values));
    }
    Err(usage(format!(
        "--mean must be const:<v> or file:<path>, got {spec:?}"
    )))
}

#[derive(Serialize)]
struct SampleSidecar<'a> {
    kernel: KernelParams,
    d: usize,
    m0: usize,
    m: usize,
    ell: f64,
    s: usize,
    min_eig: f64,
    n: usize,
    seed: u64,
    /// Sample `i` is driven by ChaCha20 stream `i`.
    streams: &'static str,
    mean: &'a str,
    lognormal: bool,
    format: Format,
}

pub fn sample(a: &SampleArgs, run: &mut Run) -> Result<Value, CliError> {
    let kp = KernelParams::resolve(&a.kernel)?;
    let sp = SearchParams::resolve(&a.search, &kp)?;
    let n = a.n.unwrap_or(1);
    let seed = a.seed.unwrap_or(0);
    let mean_spec = a.mean.clone().unwrap_or_else(|| "const:0".into());
    let lognormal = a.lognormal.unwrap_or(false);
    let format = a.format.unwrap_or(Format::Csv);
    run.record_parameters(&params(&[
        to_value(&kp),
        to_value(&sp),
        json!({ "n": n, "seed": seed, "mean": mean_spec, "lognormal": lognormal, "format": format }),
    ]))?;
    let kernel = kp.kernel()?;
    let grid = sp.grid(kp.d)?;
    let mean = parse_mean(&mean_spec, grid)?;
    run.create_out_dir()?;
    let r = search(&kernel, grid, &sp)?;
    let sampler = Sampler::new(&r.spectrum)?;
    let s = r.embedding.s();

    let draw = |i: usize| -> Result<FieldSample, CliError> {
        Ok(sampler.sample(&draw_normal(s, seed, i as u64), &mean, lognormal)?)
    };
    match format {
        Format::Csv => {
            let dir = run.path("samples");
            std::fs::create_dir_all(&dir)?;
            for start in (0..n).step_by(SAMPLE_BATCH) {
                let end = (start + SAMPLE_BATCH).min(n);
                let batch: Vec<FieldSample> = (start..end)
                    .into_par_iter()
                    .map(draw)
                    .collect::<Result<_, _>>()?;
                for (i, f) in (start..end).zip(&batch) {
                    write_field_csv_file(&dir.join(format!("sample_{i:06}.csv")), grid, &f.values)?;
                }
            }
        }
        Format::Bin => {
            let path = run.path("samples.bin");
            let mut w = FieldBinWriter::create(&path, grid, n as u64)?;
            for start in (0..n).step_by(SAMPLE_BATCH) {
                let end = (start + SAMPLE_BATCH).min(n);
                let batch: Vec<FieldSample> = (start..end)
                    .into_par_iter()
                    .map(draw)
                    .collect::<Result<_, _>>()?;
                for f in &batch {
                    w.write_sample(&f.values)?;
                }
            }
            w.finish()?;
        }
    }
    let sidecar = SampleSidecar {
        kernel: kp,
        d: kp.d,
        m0: grid.m0(),
        m: r.embedding.m(),
        ell: r.embedding.ell(),
        s,
        min_eig: r.spectrum.min_value(),
        n,
        seed,
        streams: "sample i uses stream i",
        mean: &mean_spec,
        lognormal,
        format,
    };
    let path = run.path("samples.json");
    write_json(&path, &sidecar)?;
    Ok(json!({ "n": n, "m": r.embedding.m(), "ell": r.embedding.ell(), "s": s }))
}

#[derive(Serialize)]
struct ValidationReport {
    n: usize,
    points: usize,
    max_mean_error: f64,
    mean_tolerance: f64,
    max_cov_error: f64,
    cov_tolerance: f64,
    pass: bool,
    message: String,
}

pub fn validate(a: &ValidateArgs, run: &mut Run) -> Result<Value, CliError> {
    let kp = KernelParams::resolve(&a.kernel)?;
    let path = a
        .samples
        .clone()
        .ok_or_else(|| usage("--samples is required"))?;
    let mean_spec = a.mean.clone().unwrap_or_else(|| "const:0".into());
    run.record_parameters(&params(&[
        to_value(&kp),
        json!({ "samples": path, "mean": mean_spec }),
    ]))?;
    let kernel = kp.kernel()?;
    if !path.exists() {
        return Err(CliError::Io(format!("{} does not exist", path.display())));
    }
    let set = read_samples(&path)?;
    let grid = set.grid;
    if grid.d() != kp.d {
        return Err(usage(format!(
            "samples are {}-dimensional but --d is {}",
            grid.d(),
            kp.d
        )));
    }
    let n = set.len();
    if n < MIN_VALIDATION_SAMPLES {
        return Err(usage(format!(
            "validation needs at least {MIN_VALIDATION_SAMPLES} samples, found {n}"
        )));
    }
    let target_mean = parse_mean(&mean_spec, grid)?;
    run.create_out_dir()?;

    let p = grid.points();
    let mut mean = vec![0.0; p];
    for x in set.samples() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let cov: Vec<f64> = (0..p * p)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / p, ij % p);
            set.samples()
                .map(|x| (x[i] - mean[i]) * (x[j] - mean[j]))
                .sum::<f64>()
                / (n - 1) as f64
        })
        .collect();
    let r = covariance_matrix(&kernel, grid);

    let target = |i: usize| match &target_mean {
        Mean::Constant(c) => *c,
        Mean::Field(v) => v[i],
    };
    let max_mean_error = (0..p)
        .map(|i| (mean[i] - target(i)).abs())
        .fold(0.0, f64::max);
    let max_cov_error = cov
        .iter()
        .zip(&r)
        .map(|(c, r)| (c - r).abs())
        .fold(0.0, f64::max);
    let max_r = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let sqrt_n = (n as f64).sqrt();
    let mean_tolerance = 4.0 * kernel.variance().sqrt() / sqrt_n;
    let cov_tolerance = 7.0 * (1.0 + max_r) / sqrt_n;
    let zero_variance = (0..p).all(|i| cov[i * p + i] == 0.0);

    let (pass, message) = if zero_variance {
        (
            false,
            "samples have zero variance (all samples identical); they cannot come from the kernel"
                .to_string(),
        )
    } else {
        let mean_ok = max_mean_error <= mean_tolerance;
        let cov_ok = max_cov_error <= cov_tolerance;
        let msg = match (mean_ok, cov_ok) {
            (true, true) => "mean and covariance within tolerance".to_string(),
            (false, _) => format!("mean error {max_mean_error:e} exceeds {mean_tolerance:e}"),
            (true, false) => {
                format!("covariance error {max_cov_error:e} exceeds {cov_tolerance:e}")
            }
        };
        (mean_ok && cov_ok, msg)
    };
    let report = ValidationReport {
        n,
        points: p,
        max_mean_error,
        mean_tolerance,
        max_cov_error,
        cov_tolerance,
        pass,
        message: message.clone(),
    };
    let out = run.path("validate.json");
    write_json(&out, &report)?;
    if !pass {
        return Err(CliError::Numerical(format!("validation failed: {message}")));
    }
    Ok(to_value(&report))
}

pub fn spectrum(a: &SpectrumArgs, run: &mut Run) -> Result<Value, CliError> {
    let kp = KernelParams::resolve(&a.kernel)?;
    let sp = SearchParams::resolve(&a.search, &kp)?;
    run.record_parameters(&params(&[
        to_value(&kp),
        to_value(&sp),
        json!({ "m": a.m }),
    ]))?;
    let kernel = kp.kernel()?;
    let grid = sp.grid(kp.d)?;
    run.create_out_dir()?;
    let spectrum: Spectrum = match a.m {
        Some(m) => compute_spectrum(&kernel, &Embedding::new(grid, m)?)?,
        None => search(&kernel, grid, &sp)?.spectrum,
    };
    let (csv_path, json_path) = export_spectrum(&run.out, "spectrum", &spectrum)?;
    run.outputs.push(csv_path);
    run.outputs.push(json_path);
    let e = spectrum.embedding();
    Ok(json!({ "m": e.m(), "ell": e.ell(), "s": e.s(), "min_eig": spectrum.min_value() }))
}

pub fn theory(t: &TheoryCommand, run: &mut Run) -> Result<Value, CliError> {
    match t {
        TheoryCommand::PdCriterion(a) => theory_pd(a, run),
        TheoryCommand::Bounds(a) => theory_bounds(a, run),
        TheoryCommand::ContinuousEigs(a) => theory_continuous(a, run),
        TheoryCommand::SamplingTheorem(a) => theory_sampling(a, run),
        TheoryCommand::QmcSum(a) => theory_qmc(a, run),
    }
}

fn write_result(run: &mut Run, name: &str, value: &Value) -> Result<(), CliError> {
    let path = run.path(name);
    write_json(&path, value)?;
    Ok(())
}

fn theory_pd(a: &PdCriterionArgs, run: &mut Run) -> Result<Value, CliError> {
    let kp = KernelParams::resolve(&a.kernel)?;
    let sp = SearchParams::resolve(&a.search, &kp)?;
    let verify = a.verify.unwrap_or(false);
    run.record_parameters(&params(&[
        to_value(&kp),
        to_value(&sp),
        json!({ "ell": a.ell, "m": a.m, "verify": verify }),
    ]))?;
    let kernel = kp.kernel()?;
    let grid = sp.grid(kp.d)?;
    let m0 = grid.m0() as f64;
    run.create_out_dir()?;

    let (ell, crit) = match (a.ell, a.m) {
        (Some(_), Some(_)) => return Err(usage("give at most one of --ell and --m")),
        (Some(ell), None) => (ell, pd_criterion(&kernel, grid, ell)?),
        (None, Some(m)) => {
            let ell = m as f64 / m0;
            (ell, pd_criterion(&kernel, grid, ell)?)
        }
        (None, None) => {
            let mut found = None;
            for m in grid.m0()..=sp.m_max {
                let ell = m as f64 / m0;
                let c = pd_criterion(&kernel, grid, ell)?;
                if c.satisfied {
                    found = Some((ell, c));
                    break;
                }
            }
            found.ok_or_else(|| {
                CliError::Numerical(format!("criterion not satisfied for any m <= {}", sp.m_max))
            })?
        }
    };
    let mut result = json!({
        "ell": ell,
        "lhs": crit.lhs,
        "rhs": crit.rhs,
        "satisfied": crit.satisfied,
    });
    if verify {
        let m = ell * m0;
        if (m - m.round()).abs() > 1e-9 {
            return Err(usage(format!(
                "--verify needs ell*m0 to be an integer, got {m}"
            )));
        }
        let spectrum = compute_spectrum(&kernel, &Embedding::new(grid, m.round() as usize)?)?;
        result["min_eig"] = json!(spectrum.min_value());
    }
    write_result(run, "pd-criterion.json", &result)?;
    Ok(result)
}

fn theory_bounds(a: &BoundsArgs, run: &mut Run) -> Result<Value, CliError> {
    let nu = a.nu.ok_or_else(|| usage("--nu is required"))?;
    let lambda = a.lambda.ok_or_else(|| usage("--lambda is required"))?;
    let m0 = a.m0.ok_or_else(|| usage("--m0 is required"))?;
    let mut consts = match &a.calibration {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let v: Value = serde_json::from_str(&text)?;
            serde_json::from_value::<BoundConstants>(v["constants"].clone())
                .map_err(|e| usage(format!("{}: no constants: {e}", path.display())))?
        }
        None => BoundConstants::default(),
    };
    consts.c1 = a.c1.or(consts.c1);
    consts.c2 = a.c2.or(consts.c2);
    consts.b = a.b.or(consts.b);
    run.record_parameters(&json!({
        "nu": nu, "lambda": lambda, "m0": m0,
        "c1": consts.c1, "c2": consts.c2, "b": consts.b, "calibration": a.calibration,
    }))?;
    run.create_out_dir()?;
    let h0 = 1.0 / m0 as f64;
    let (value, violations) = if nu.is_infinite() {
        let b = consts
            .b
            .ok_or_else(|| usage("the Gaussian bound needs --b or --calibration"))?;
        (gaussian_ell_bound(lambda, h0, b), Vec::new())
    } else {
        let bound = matern_ell_bound(nu, lambda, h0, &consts)?;
        (bound.value, bound.violations)
    };
    let result = json!({
        "ell_bound": value,
        "m_bound": (value * m0 as f64).ceil(),
        "hypotheses_hold": violations.is_empty(),
        "violations": violations,
        "constants": consts,
        "note": "constants are empirical fits or user input, not known values",
    });
    write_result(run, "bounds.json", &result)?;
    Ok(result)
}

fn parse_index(s: &str, d: usize) -> Result<Vec<i64>, CliError> {
    let k: Vec<i64> = s
        .split(',')
        .map(|t| t.trim().parse::<i64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--k {s:?} is not a comma-separated integer list")))?;
    if k.len() != d {
        return Err(usage(format!(
            "--k {s:?} has {} components, need {d}",
            k.len()
        )));
    }
    Ok(k)
}

fn theory_continuous(a: &ContinuousEigsArgs, run: &mut Run) -> Result<Value, CliError> {
    let kp = KernelParams::resolve(&a.kernel)?;
    let ell = a.ell.ok_or_else(|| usage("--ell is required"))?;
    let quad_n = a.quad_n.unwrap_or(64);
    let ks: Vec<String> =
        a.k.clone()
            .unwrap_or_else(|| vec![vec!["0"; kp.d].join(",")]);
    let compare = a.compare_m0.clone().unwrap_or_default();
    run.record_parameters(&params(&[
        to_value(&kp),
        json!({ "ell": ell, "k": ks, "quad-n": quad_n, "compare-m0": compare }),
    ]))?;
    let kernel = kp.kernel()?;
    let indices: Vec<Vec<i64>> = ks
        .iter()
        .map(|s| parse_index(s, kp.d))
        .collect::<Result<_, _>>()?;
    run.create_out_dir()?;

    let spectra: Vec<(usize, Spectrum)> = compare
        .iter()
        .map(|&m0| {
            let m = ell * m0 as f64;
            if (m - m.round()).abs() > 1e-9 {
                return Err(usage(format!(
                    "ell*m0 = {m} is not an integer for m0 = {m0}"
                )));
            }
            let emb = Embedding::new(GridSpec::new(kp.d, m0)?, m.round() as usize)?;
            Ok((m0, compute_spectrum(&kernel, &emb)?))
        })
        .collect::<Result<_, CliError>>()?;

    let path = run.path("continuous-eigs.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header: Vec<String> = (1..=kp.d).map(|i| format!("k{i}")).collect();
    header.extend(["continuous", "m0", "matrix_scaled", "abs_diff"].map(String::from));
    w.write_record(&header)?;
    let mut rows = Vec::new();
    for k in &indices {
        let exact = continuous_eigenvalue(&kernel, ell, k, quad_n)?;
        let kcols: Vec<String> = k.iter().map(|v| v.to_string()).collect();
        let mut comparisons = Vec::new();
        if spectra.is_empty() {
            w.write_record(kcols.iter().cloned().chain([
                exact.to_string(),
                String::new(),
                String::new(),
                String::new(),
            ]))?;
        }
        for (m0, sp) in &spectra {
            let n = sp.embedding().n();
            let idx: Vec<usize> = k.iter().map(|&v| v.rem_euclid(n as i64) as usize).collect();
            let scaled = sp.values()[linear_index(&idx, n)] / (*m0 as f64).powi(kp.d as i32);
            let diff = (scaled - exact).abs();
            w.write_record(kcols.iter().cloned().chain([
                exact.to_string(),
                m0.to_string(),
                scaled.to_string(),
                diff.to_string(),
            ]))?;
            comparisons.push(json!({ "m0": m0, "matrix_scaled": scaled, "abs_diff": diff }));
        }
        rows.push(json!({ "k": k, "continuous": exact, "comparisons": comparisons }));
    }
    w.flush()?;
    let result = json!({ "eigenvalues": rows });
    write_result(run, "continuous-eigs.json", &result)?;
    Ok(result)
}

fn theory_sampling(a: &SamplingTheoremArgs, run: &mut Run) -> Result<Value, CliError> {
    let kp = KernelParams::resolve(&a.kernel)?;
    let h = a.h.ok_or_else(|| usage("--h is required"))?;
    let xi = a.xi.clone().ok_or_else(|| usage("--xi is required"))?;
    let k_trunc = a.k_trunc.unwrap_or(60);
    let r_trunc = a.r_trunc.unwrap_or(4);
    let target = a.target.unwrap_or(1e-12);
    run.record_parameters(&params(&[
        to_value(&kp),
        json!({ "h": h, "xi": xi, "k-trunc": k_trunc, "r-trunc": r_trunc, "target": target }),
    ]))?;
    let kernel = kp.kernel()?;
    run.create_out_dir()?;
    let check = sampling_theorem_check(&kernel, h, &xi, k_trunc, r_trunc, target)?;
    let result = to_value(&check);
    write_result(run, "sampling-theorem.json", &result)?;
    Ok(result)
}

fn theory_qmc(a: &QmcSumArgs, run: &mut Run) -> Result<Value, CliError> {
    let kp = KernelParams::resolve(&a.kernel)?;
    let sp = SearchParams::resolve(&a.search, &kp)?;
    let p = a.p.ok_or_else(|| usage("--p is required"))?;
    run.record_parameters(&params(&[to_value(&kp), to_value(&sp), json!({ "p": p })]))?;
    let kernel = kp.kernel()?;
    run.create_out_dir()?;
    let r = search(&kernel, sp.grid(kp.d)?, &sp)?;
    let sum = qmc_criterion_sum(&r.spectrum, p)?;
    let result = json!({ "m": r.embedding.m(), "s": r.embedding.s(), "p": p, "sum": sum });
    write_result(run, "qmc-sum.json", &result)?;
    Ok(result)
}
