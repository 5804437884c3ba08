use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, FilterKind, StateSpace};
use super::metrics::{compute_metrics, write_metrics_csv, MetricsRow, RunStatus, METRICS_SCHEMA_VERSION};
use crate::dynamics::{sample_noise, simulate_observations, simulate_truth, write_stream_csv, ObservationStream};
use crate::error::{Error, Result};
use crate::filters::{
    adf_step, bpf_step, ekspf_step, ppfpf_step, AdfIntensity, GaussianBelief, HomotopyConfig, OuParams,
    ParticleEnsemble,
};
use crate::manifold::Point;
use crate::oracle::{grid_event_update, grid_predict_correct, GridDensity};

/// RNG stream identifiers. Each run seeds ChaCha8 with its seed and selects
/// one of these streams, so no two consumers share random numbers.
pub mod streams {
    pub const TRUTH: u64 = 1;
    pub const OBSERVATIONS: u64 = 2;
    pub const BPF: u64 = 10;
    pub const EKSPF: u64 = 20;
    pub const PPFPF: u64 = 30;
    /// Offsets added to a filter's base stream.
    pub const INIT: u64 = 0;
    pub const NOISE: u64 = 1;
    pub const RESAMPLE: u64 = 2;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Estimate and reported variance at steps `0..=steps` (chart coordinate).
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Trace {
    pub estimates: Vec<f64>,
    pub variances: Vec<f64>,
}

impl Trace {
    fn with_capacity(n: usize) -> Trace {
        Trace {
            estimates: Vec::with_capacity(n),
            variances: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, estimate: f64, variance: f64) -> Result<()> {
        if !estimate.is_finite() || !variance.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite estimate ({estimate}, {variance}) at step {}",
                self.estimates.len()
            )));
        }
        self.estimates.push(estimate);
        self.variances.push(variance);
        Ok(())
    }

    fn push_ensemble(&mut self, ens: &ParticleEnsemble) -> Result<()> {
        let (center, spread) = ens.estimate()?;
        self.push(center.x(), spread)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FilterDiagnostics {
    /// BPF resampling events.
    pub resamples: usize,
    /// ADF variance clamps.
    pub clamps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub kind: FilterKind,
    pub trace: std::result::Result<Trace, String>,
    pub diagnostics: FilterDiagnostics,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub truth: Vec<Point>,
    pub stream: ObservationStream,
    pub oracle: Option<Trace>,
    pub filters: Vec<FilterRun>,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
}

impl ExperimentReport {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.runs.iter().flat_map(|r| r.rows.iter().cloned()).collect()
    }
}

fn initial_positions(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
    let m = &cfg.model;
    (0..n)
        .map(|_| match m.state_space {
            StateSpace::Real => {
                let z: f64 = rng.sample(StandardNormal);
                Point::real(m.initial_mean + m.initial_var.sqrt() * z)
            }
            StateSpace::Circle => Point::angle(rng.gen_range(0.0..std::f64::consts::TAU)),
        })
        .collect()
}

/// Truth trajectory (`steps + 1` points) and observation stream for one seed.
pub fn simulate_run(cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<Point>, ObservationStream)> {
    let model = cfg.model.hidden_model();
    let channels = cfg.model.channels();
    let mut rng = stream_rng(seed, streams::TRUTH);
    let x0 = initial_positions(cfg, &mut rng, 1).remove(0);
    let truth = simulate_truth(&model, &x0, cfg.dt, cfg.steps, &mut rng)?;
    let stream = simulate_observations(&channels, &truth, cfg.dt, &mut stream_rng(seed, streams::OBSERVATIONS))?;
    Ok((truth, stream))
}

/// Run one filter over a materialized stream.
pub fn run_filter(
    cfg: &ExperimentConfig,
    kind: FilterKind,
    seed: u64,
    stream: &ObservationStream,
) -> Result<(Trace, FilterDiagnostics)> {
    let model = cfg.model.hidden_model();
    let channels = cfg.model.channels();
    let n = cfg.particles;
    let r = model.noise_dim();
    let mut trace = Trace::with_capacity(stream.steps() + 1);
    let mut diag = FilterDiagnostics::default();
    match kind {
        FilterKind::Bpf => {
            let base = streams::BPF;
            let mut init = stream_rng(seed, base + streams::INIT);
            let mut noise_rng = stream_rng(seed, base + streams::NOISE);
            let mut resample_rng = stream_rng(seed, base + streams::RESAMPLE);
            let mut ens = ParticleEnsemble::uniform_weighted(initial_positions(cfg, &mut init, n))?;
            trace.push_ensemble(&ens)?;
            for counts in &stream.counts {
                let noise = sample_noise(&mut noise_rng, n * r, cfg.dt);
                let step = bpf_step(
                    &ens,
                    &model,
                    &channels,
                    counts,
                    cfg.dt,
                    &noise,
                    cfg.bpf.threshold,
                    &mut resample_rng,
                )?;
                diag.resamples += usize::from(step.resampled);
                ens = step.ensemble;
                trace.push_ensemble(&ens)?;
            }
        }
        FilterKind::Ekspf => {
            let base = streams::EKSPF;
            let mut init = stream_rng(seed, base + streams::INIT);
            let mut noise_rng = stream_rng(seed, base + streams::NOISE);
            let mut ens = ParticleEnsemble::new(initial_positions(cfg, &mut init, n))?;
            trace.push_ensemble(&ens)?;
            for counts in &stream.counts {
                let noise = sample_noise(&mut noise_rng, n * r, cfg.dt);
                ens = ekspf_step(&ens, &model, &channels, counts, cfg.dt, &noise)?;
                trace.push_ensemble(&ens)?;
            }
        }
        FilterKind::Ppfpf => {
            let base = streams::PPFPF;
            let mut init = stream_rng(seed, base + streams::INIT);
            let mut noise_rng = stream_rng(seed, base + streams::NOISE);
            let drift_gain = cfg.drift_gain()?;
            let homotopy = HomotopyConfig {
                n_steps: cfg.ppfpf.n_steps,
                gain: cfg.homotopy_gain()?,
                adaptive: cfg.ppfpf.adaptive,
            };
            let mut ens = ParticleEnsemble::new(initial_positions(cfg, &mut init, n))?;
            trace.push_ensemble(&ens)?;
            for counts in &stream.counts {
                let noise = sample_noise(&mut noise_rng, n * r, cfg.dt);
                ens = ppfpf_step(&ens, &model, &channels, counts, cfg.dt, &drift_gain, &homotopy, &noise)?;
                trace.push_ensemble(&ens)?;
            }
        }
        FilterKind::Adf => {
            if cfg.model.state_space != StateSpace::Real {
                return Err(Error::UnsupportedManifold {
                    manifold: cfg.manifold(),
                    reason: "the ADF is defined on ℝ only".into(),
                });
            }
            let ou = OuParams {
                a: cfg.model.drift,
                sigma2: cfg.model.sigma2,
            };
            let intensities: Vec<AdfIntensity> = channels.iter().map(AdfIntensity::from).collect();
            let mut belief = GaussianBelief::new(cfg.model.initial_mean, cfg.model.initial_var)?;
            trace.push(belief.mean, belief.var)?;
            for counts in &stream.counts {
                let (next, clamped) = adf_step(belief, ou, &intensities, counts, cfg.dt)?;
                diag.clamps += usize::from(clamped);
                belief = next;
                trace.push(belief.mean, belief.var)?;
            }
        }
    }
    Ok((trace, diag))
}

/// Dense-grid posterior summaries along a stream: mean and variance on ℝ,
/// Fréchet mean and mean squared distance on the circle.
pub fn run_oracle(cfg: &ExperimentConfig, stream: &ObservationStream) -> Result<Trace> {
    let model = cfg.model.hidden_model();
    let channels = cfg.model.channels();
    let o = &cfg.oracle;
    let mut gd = match cfg.model.state_space {
        StateSpace::Real => GridDensity::gaussian(o.lo, o.hi, o.points, cfg.model.initial_mean, cfg.model.initial_var)?,
        StateSpace::Circle => GridDensity::periodic(o.points, |_| 1.0)?,
    };
    let mut trace = Trace::with_capacity(stream.steps() + 1);
    let (m, v) = gd.frechet_summary()?;
    trace.push(m, v)?;
    for counts in &stream.counts {
        gd = grid_predict_correct(&gd, &model, &channels, cfg.dt)?;
        for (ch, &k) in channels.iter().zip(counts) {
            for _ in 0..k {
                gd = grid_event_update(&gd, &|p| ch.eval(p))?;
            }
        }
        let (m, v) = gd.frechet_summary()?;
        trace.push(m, v)?;
    }
    Ok(trace)
}

fn metrics_row(
    cfg: &ExperimentConfig,
    run: usize,
    seed: u64,
    truth: &[f64],
    events: u64,
    oracle: Option<&Trace>,
    fr: &FilterRun,
) -> MetricsRow {
    let computed = fr.trace.as_ref().map_err(Clone::clone).and_then(|t| {
        // The initial prior is not an estimate; average over steps 1..=steps.
        compute_metrics(
            &truth[1..],
            &t.estimates[1..],
            &t.variances[1..],
            oracle.map(|o| (&o.estimates[1..], &o.variances[1..])),
            cfg.manifold(),
        )
        .map_err(|e| e.to_string())
    });
    let (status, metrics, error) = match computed {
        Ok(m) => (RunStatus::Ok, Some(m), None),
        Err(e) => (RunStatus::Failed, None, Some(e)),
    };
    MetricsRow {
        run,
        seed,
        filter: fr.kind.label().to_string(),
        status,
        metrics,
        wall_seconds: fr.wall_seconds,
        events,
        error,
    }
}

fn execute_run(cfg: &ExperimentConfig, run: usize, with_filters: bool) -> Result<RunResult> {
    let seed = cfg.seed.wrapping_add(run as u64);
    let (truth, stream) = simulate_run(cfg, seed)?;
    log::info!("run {run} (seed {seed}): {} events", stream.total_events());
    let oracle = if cfg.oracle.enabled {
        Some(run_oracle(cfg, &stream)?)
    } else {
        None
    };
    let mut filters = Vec::new();
    if with_filters {
        for &kind in &cfg.filters {
            let start = Instant::now();
            let result = run_filter(cfg, kind, seed, &stream);
            let wall_seconds = start.elapsed().as_secs_f64();
            if let Err(e) = &result {
                log::warn!("run {run}: {} failed: {e}", kind.label());
            }
            let (trace, diagnostics) = match result {
                Ok((t, d)) => (Ok(t), d),
                Err(e) => (Err(e.to_string()), FilterDiagnostics::default()),
            };
            filters.push(FilterRun {
                kind,
                trace,
                diagnostics,
                wall_seconds,
            });
        }
    }
    let xs: Vec<f64> = truth.iter().map(Point::x).collect();
    let events = stream.total_events();
    let rows = filters
        .iter()
        .map(|fr| metrics_row(cfg, run, seed, &xs, events, oracle.as_ref(), fr))
        .collect();
    Ok(RunResult {
        run,
        seed,
        truth,
        stream,
        oracle,
        filters,
        rows,
    })
}

/// Simulate each repeat once and run every configured filter (and the
/// oracle, when enabled) on the shared stream. Repeats run in parallel.
/// Filter failures are recorded in the rows; simulation and oracle
/// failures abort the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let runs = (0..cfg.repeat)
        .into_par_iter()
        .map(|run| execute_run(cfg, run, true))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        runs,
    })
}

/// Like [`run_experiment`] but runs only the oracle.
pub fn run_oracle_only(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.oracle.enabled = true;
    let runs = (0..cfg.repeat)
        .into_par_iter()
        .map(|run| execute_run(&cfg, run, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport { config: cfg, runs })
}

fn write_trace_csv(path: &Path, runs: &[(usize, &Trace)], dt: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    w.write_record(["run", "step", "time", "estimate", "variance"])?;
    for (run, trace) in runs {
        for (k, (e, v)) in trace.estimates.iter().zip(&trace.variances).enumerate() {
            w.write_record([
                run.to_string(),
                k.to_string(),
                format!("{}", k as f64 * dt),
                format!("{e:e}"),
                format!("{v:e}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of everything that determines the outputs: the resolved config
/// without its output location.
pub fn input_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.out_dir = None;
    sha256_hex(c.to_toml().as_bytes())
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    generator: String,
    input_hash: String,
    seeds: Vec<u64>,
    config: &'a ExperimentConfig,
    diagnostics: Vec<BTreeMap<String, serde_json::Value>>,
    files: BTreeMap<String, String>,
}

/// Write `metrics.csv`, `trajectories/*.csv`, `streams/run<r>.csv` and
/// `manifest.json` under `dir`.
pub fn write_artifacts(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let cfg = &report.config;
    fs::create_dir_all(dir.join("trajectories"))?;
    fs::create_dir_all(dir.join("streams"))?;
    let mut files = Vec::new();

    let metrics = dir.join("metrics.csv");
    write_metrics_csv(BufWriter::new(fs::File::create(&metrics)?), &report.rows())?;
    files.push("metrics.csv".to_string());

    for &kind in &cfg.filters {
        let traces: Vec<(usize, &Trace)> = report
            .runs
            .iter()
            .filter_map(|r| {
                r.filters
                    .iter()
                    .find(|f| f.kind == kind)
                    .and_then(|f| f.trace.as_ref().ok())
                    .map(|t| (r.run, t))
            })
            .collect();
        if report.runs.iter().any(|r| !r.filters.is_empty()) {
            let name = format!("trajectories/{}.csv", kind.name());
            write_trace_csv(&dir.join(&name), &traces, cfg.dt)?;
            files.push(name);
        }
    }
    let oracle: Vec<(usize, &Trace)> = report
        .runs
        .iter()
        .filter_map(|r| r.oracle.as_ref().map(|t| (r.run, t)))
        .collect();
    if !oracle.is_empty() {
        write_trace_csv(&dir.join("trajectories/oracle.csv"), &oracle, cfg.dt)?;
        files.push("trajectories/oracle.csv".to_string());
    }
    let truth: Vec<(usize, Trace)> = report
        .runs
        .iter()
        .map(|r| {
            let xs: Vec<f64> = r.truth.iter().map(Point::x).collect();
            (r.run, Trace { variances: vec![0.0; xs.len()], estimates: xs })
        })
        .collect();
    let truth_refs: Vec<(usize, &Trace)> = truth.iter().map(|(r, t)| (*r, t)).collect();
    write_trace_csv(&dir.join("trajectories/truth.csv"), &truth_refs, cfg.dt)?;
    files.push("trajectories/truth.csv".to_string());

    let labels: Vec<String> = cfg.model.channels().iter().map(|c| c.label.clone()).collect();
    for r in &report.runs {
        let name = format!("streams/run{}.csv", r.run);
        write_stream_csv(BufWriter::new(fs::File::create(dir.join(&name))?), &r.truth, &r.stream, &labels)?;
        files.push(name);
    }

    let mut hashes = BTreeMap::new();
    for f in files {
        let bytes = fs::read(dir.join(&f))?;
        hashes.insert(f, sha256_hex(&bytes));
    }
    let diagnostics = report
        .runs
        .iter()
        .flat_map(|r| {
            r.filters.iter().map(move |f| {
                let mut m = BTreeMap::new();
                m.insert("run".to_string(), serde_json::json!(r.run));
                m.insert("filter".to_string(), serde_json::json!(f.kind.label()));
                m.insert("resamples".to_string(), serde_json::json!(f.diagnostics.resamples));
                m.insert("variance_clamps".to_string(), serde_json::json!(f.diagnostics.clamps));
                m
            })
        })
        .collect();
    let manifest = Manifest {
        schema_version: METRICS_SCHEMA_VERSION,
        generator: format!("ppfpf {}", env!("CARGO_PKG_VERSION")),
        input_hash: format!("sha256:{}", input_hash(cfg)),
        seeds: report.runs.iter().map(|r| r.seed).collect(),
        config: cfg,
        diagnostics,
        files: hashes,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Preset;

    fn small(preset: Preset) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset(preset, 5);
        cfg.steps = 60;
        cfg.particles = 40;
        cfg.oracle.points = 201;
        cfg.ppfpf.gain.max_centers = Some(20);
        cfg
    }

    #[test]
    fn rng_streams_are_independent() {
        let a: u64 = stream_rng(1, streams::TRUTH).gen();
        let b: u64 = stream_rng(1, streams::OBSERVATIONS).gen();
        let c: u64 = stream_rng(1, streams::TRUTH).gen();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn fig2_run_has_one_row_per_filter() {
        let report = run_experiment(&small(Preset::Fig2Ou)).unwrap();
        let rows = report.rows();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert_eq!(row.status, RunStatus::Ok, "{row:?}");
            let m = row.metrics.unwrap();
            assert!(m.mse >= 0.0 && m.mean_variance > 0.0);
            assert!(m.oracle_mean_error.unwrap() >= 0.0);
        }
        let run = &report.runs[0];
        assert_eq!(run.truth.len(), 61);
        assert_eq!(run.oracle.as_ref().unwrap().estimates.len(), 61);
    }

    #[test]
    fn filter_settings_do_not_perturb_other_filters() {
        let cfg = small(Preset::Fig2Ou);
        let mut other = cfg.clone();
        other.ppfpf.n_steps = 3;
        other.bpf.threshold = 0.9;
        let (_, stream) = simulate_run(&cfg, 5).unwrap();
        let a = run_filter(&cfg, FilterKind::Ekspf, 5, &stream).unwrap();
        let b = run_filter(&other, FilterKind::Ekspf, 5, &stream).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn repeats_use_consecutive_seeds_and_are_reproducible() {
        let mut cfg = small(Preset::Fig3Circle);
        cfg.repeat = 3;
        cfg.seed = 1;
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(a.rows().len(), 9);
        for (x, y) in a.rows().iter().zip(b.rows()) {
            assert_eq!(x.metrics, y.metrics);
        }
    }

    #[test]
    fn failures_are_recorded_per_row() {
        let mut cfg = small(Preset::Fig2Ou);
        // Bypasses validation, so only the ppFPF fails at run time.
        cfg.ppfpf.gain.epsilon = Some(-1.0);
        let (_, stream) = simulate_run(&cfg, 5).unwrap();
        assert!(run_filter(&cfg, FilterKind::Ppfpf, 5, &stream).is_err());
        let report = ExperimentReport {
            runs: vec![execute_run(&cfg, 0, true).unwrap()],
            config: cfg,
        };
        let rows = report.rows();
        let ppfpf = rows.iter().find(|r| r.filter == "ppFPF").unwrap();
        assert_eq!(ppfpf.status, RunStatus::Failed);
        assert!(ppfpf.error.as_ref().unwrap().contains("bandwidth"));
        assert!(rows.iter().filter(|r| r.status == RunStatus::Ok).count() == 3);
    }

    #[test]
    fn artifacts_are_written_and_deterministic() {
        let cfg = small(Preset::Fig2Ou);
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&cfg).unwrap();
        write_artifacts(&report, dir.path()).unwrap();
        for f in ["metrics.csv", "manifest.json", "trajectories/ppfpf.csv", "trajectories/oracle.csv", "streams/run0.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let traj = fs::read_to_string(dir.path().join("trajectories/bpf.csv")).unwrap();
        assert!(traj.starts_with("run,step,time,estimate,variance\n"));
        assert_eq!(traj.lines().count(), 62);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seeds"], serde_json::json!([5]));
        assert!(manifest["input_hash"].as_str().unwrap().starts_with("sha256:"));

        let again = tempfile::tempdir().unwrap();
        write_artifacts(&run_experiment(&cfg).unwrap(), again.path()).unwrap();
        assert_eq!(
            fs::read(dir.path().join("trajectories/ppfpf.csv")).unwrap(),
            fs::read(again.path().join("trajectories/ppfpf.csv")).unwrap()
        );
    }

    #[test]
    fn oracle_only_has_no_rows() {
        let report = run_oracle_only(&small(Preset::Fig3Circle)).unwrap();
        assert!(report.rows().is_empty());
        assert!(report.runs[0].oracle.is_some());
    }
}
