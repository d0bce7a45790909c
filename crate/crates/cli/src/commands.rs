use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use gengroth::analytic_bounds::{
    gamma_ratio_series, kg_lower_bound, log1p_bounds, log_gamma_half_step, monotonicity_check,
    robbins_margins,
};
use gengroth::embedding_opt::{seesaw_maximize, Kernel, KernelMatrix, SeesawOptions};
use gengroth::quantum::{correlation, tsirelson_strategy, vectorize};
use gengroth::rng::{seeded, streams};
use gengroth::sphere::{build_eps_net, norm, NetOptions, SphereSampler};
use gengroth::witness::{run_witness, Verdict, WitnessConfig};
use gengroth::Error;
use rand::Rng;
use serde::Serialize;

use crate::manifest::{Output, RunManifest};
use crate::Command;

/// Exit status for the tripwire: a computed quantity contradicts a theorem.
const THEORY_VIOLATION: u8 = 4;

/// Largest `|correlation − a·b|` accepted by `tsirelson`.
const TSIRELSON_TOL: f64 = 1e-10;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Resource { .. } => 3,
        Error::NumericalIntegrity(_) => THEORY_VIOLATION,
        _ => 2,
    }
}

fn print_json<T: Serialize>(manifest: &RunManifest, result: &T) -> Result<(), Error> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, &Output { manifest, result })?;
    writeln!(lock)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, manifest: &RunManifest, result: &T) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &Output { manifest, result })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn run(command: Command, manifest: RunManifest, started: Instant) -> Result<ExitCode, Error> {
    match command {
        Command::Bound { n, m, json } => {
            let report = kg_lower_bound(n, m)?;
            if json {
                print_json(&manifest.finish(started), &report)?;
            } else {
                println!("{}", report.bound);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Net {
            dim,
            eps,
            seed,
            out,
            max_points,
            max_candidates,
            probes,
        } => {
            let net = build_eps_net(
                dim,
                eps,
                seed,
                NetOptions {
                    max_candidates,
                    max_points,
                },
            )?;
            let covering = net.covering_probe(probes, seed);
            let summary = NetSummary {
                header: net.header(),
                min_pairwise_distance: net.min_pairwise_distance(),
                size_bound: (3.0 / eps).powi(dim as i32),
                covering,
            };
            let manifest = manifest.seed("net", seed).finish(started);
            if let Some(prefix) = out {
                let mut w = BufWriter::new(File::create(with_extension(&prefix, "csv"))?);
                net.write_csv(&mut w)?;
                w.flush()?;
                write_json(&with_extension(&prefix, "json"), &manifest, &summary)?;
            }
            print_json(&manifest, &summary)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Seesaw {
            matrix,
            m,
            restarts,
            seed,
            max_iters,
            tol,
            trace,
        } => {
            let kernel =
                KernelMatrix::read_csv(File::open(&matrix)?, matrix.display().to_string())?;
            let options = SeesawOptions {
                restarts,
                max_iters,
                tol,
                seed,
            };
            let mut result = seesaw_maximize(&Kernel::Dense(kernel), m, &options)?;
            if !trace {
                result.value_trace.clear();
            }
            let manifest = manifest.seed("seesaw", seed).finish(started);
            if trace {
                print_json(&manifest, &result)?;
            } else {
                print_json(
                    &manifest,
                    &SeesawSummary {
                        value: result.value,
                        iterations: result.iterations,
                        converged: result.converged,
                        start_index: result.start_index,
                        stationarity: result.stationarity,
                    },
                )?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Tsirelson { n, pairs, seed } => {
            let report = tsirelson_check(n, pairs, seed)?;
            let passes = report.passes;
            print_json(&manifest.seed("pairs", seed).finish(started), &report)?;
            Ok(if passes {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(THEORY_VIOLATION)
            })
        }
        Command::Witness {
            n,
            d,
            eps,
            deep,
            seed,
            out,
            allow_small_n,
            samples_per_region,
            restarts,
        } => {
            let mut config = WitnessConfig::new(n, d, eps, seed);
            if deep {
                config = config.deep();
            }
            config.allow_small_n = allow_small_n;
            if let Some(s) = samples_per_region {
                config.samples_per_region = s;
            }
            if let Some(r) = restarts {
                config.seesaw.restarts = r;
            }
            let report = run_witness(&config)?;
            let manifest = manifest.seed("witness", seed).finish(started);
            if let Some(path) = out {
                write_json(&path, &manifest, &report)?;
            }
            print_json(&manifest, &report)?;
            Ok(if report.verdict == Verdict::ViolationOfTheory {
                ExitCode::from(THEORY_VIOLATION)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::AppendixCheck { nmax, seed, json } => {
            let rows = appendix_checks(nmax, seed)?;
            let all = rows.iter().all(|r| r.passes);
            if json {
                print_json(&manifest.seed("points", seed).finish(started), &rows)?;
            } else {
                for r in &rows {
                    println!(
                        "{:<6} {:<34} {}",
                        if r.passes { "PASS" } else { "FAIL" },
                        r.check,
                        r.detail
                    );
                }
            }
            Ok(if all {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(THEORY_VIOLATION)
            })
        }
    }
}

#[derive(Debug, Serialize)]
struct NetSummary {
    header: gengroth::sphere::NetHeader,
    min_pairwise_distance: f64,
    size_bound: f64,
    covering: gengroth::sphere::CoveringReport,
}

#[derive(Debug, Serialize)]
struct SeesawSummary {
    value: f64,
    iterations: usize,
    converged: bool,
    start_index: usize,
    stationarity: f64,
}

#[derive(Debug, Serialize)]
struct TsirelsonReport {
    n: usize,
    d: usize,
    pairs: usize,
    max_deviation: f64,
    max_vectorization_deviation: f64,
    max_norm_defect: f64,
    passes: bool,
}

fn tsirelson_check(n: usize, pairs: usize, seed: u64) -> Result<TsirelsonReport, Error> {
    let strategy = tsirelson_strategy(n)?;
    let mut sampler = SphereSampler::new(n, seed, streams::TSIRELSON_PAIRS);
    let (mut dev, mut vec_dev, mut norm_defect) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..pairs {
        let (a, b) = (sampler.sample(), sampler.sample());
        let c = correlation(&strategy, a.as_slice(), b.as_slice())?;
        dev = dev.max((c - a.dot(&b)).abs());
        let v = vectorize(&strategy, a.as_slice(), b.as_slice())?;
        vec_dev = vec_dev.max((v.dot() - c).abs());
        norm_defect = norm_defect
            .max((norm(&v.alice_vector) - 1.0).abs())
            .max((norm(&v.bob_vector) - 1.0).abs());
    }
    Ok(TsirelsonReport {
        n,
        d: strategy.d(),
        pairs,
        max_deviation: dev,
        max_vectorization_deviation: vec_dev,
        max_norm_defect: norm_defect,
        passes: dev <= TSIRELSON_TOL && vec_dev <= TSIRELSON_TOL,
    })
}

#[derive(Debug, Serialize)]
struct CheckRow {
    check: String,
    passes: bool,
    detail: String,
}

fn appendix_checks(nmax: u64, seed: u64) -> Result<Vec<CheckRow>, Error> {
    let mut rows = Vec::new();
    let mono = monotonicity_check(nmax)?;
    rows.push(CheckRow {
        check: format!("f strictly increasing on [1, {nmax}]"),
        passes: mono.holds,
        detail: format!("min log increment {:e}", mono.min_log_increment),
    });

    let mut rng = seeded(seed, streams::APPENDIX_POINTS);
    let (lo_x, hi_x) = (2f64, 1e4f64);
    let mut worst = f64::INFINITY;
    let mut robbins_ok = true;
    for _ in 0..200 {
        let x = lo_x * (hi_x / lo_x).powf(rng.random::<f64>());
        let r = robbins_margins(x)?;
        robbins_ok &= r.holds();
        worst = worst.min(r.above_lo.min(r.below_hi));
    }
    rows.push(CheckRow {
        check: "Robbins bracket at 200 points".into(),
        passes: robbins_ok,
        detail: format!("smallest margin {worst:e}"),
    });

    let mut log1p_ok = true;
    let mut points = vec![1u64, 1_000_000];
    points.extend((0..200).map(|_| 10f64.powf(6.0 * rng.random::<f64>()).round().max(1.0) as u64));
    for &n in &points {
        log1p_ok &= log1p_bounds(n)?.holds();
    }
    rows.push(CheckRow {
        check: "ln(1+1/n) bracket on [1, 1e6]".into(),
        passes: log1p_ok,
        detail: format!("{} points", points.len()),
    });

    for k in [10u32, 100, 1000] {
        let kf = k as f64;
        let exact = log_gamma_half_step(kf)?.exp();
        let err = (gamma_ratio_series(kf, 3)? - exact).abs();
        let allowed = 5e-3 * kf.sqrt() / kf.powi(3);
        rows.push(CheckRow {
            check: format!("Gamma ratio series at k = {k}"),
            passes: err <= allowed,
            detail: format!("error {err:e}, allowed {allowed:e}"),
        });
    }
    Ok(rows)
}
