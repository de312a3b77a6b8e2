use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use myoseg::model::{Network, NetworkConfig};
use myoseg::optim::predict_slices;
use myoseg::phantom::{generate_phantom, PhantomConfig};
use myoseg::rng::RngStream;
use myoseg::tensor::Tensor;

use super::open_checkpoint;
use crate::{with_threads, CliError, CliResult};

/// Single-core time allowed for one 128x128x13 volume.
pub const BUDGET_SECONDS: f64 = 22.0;

#[derive(Debug, Clone, Serialize)]
pub struct TimingSummary {
    pub threads: usize,
    pub runs_seconds: Vec<f64>,
    pub median_seconds: f64,
    pub per_slice_seconds: f64,
    /// `(max - min) / median` over the runs.
    pub spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub cpu: String,
    pub logical_cores: usize,
    pub network: NetworkConfig,
    pub slices: usize,
    pub single_thread: TimingSummary,
    pub multi_thread: TimingSummary,
    pub budget_seconds: f64,
    pub within_budget: bool,
}

fn cpu_model() -> String {
    fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|v| v.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn summarize(threads: usize, runs: Vec<f64>, slices: usize) -> TimingSummary {
    let m = median(&runs);
    let (lo, hi) = runs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    TimingSummary {
        threads,
        median_seconds: m,
        per_slice_seconds: m / slices as f64,
        spread: if m > 0.0 { (hi - lo) / m } else { 0.0 },
        runs_seconds: runs,
    }
}

pub fn bench(
    checkpoint: Option<&Path>,
    repeats: usize,
    slices: usize,
    threads: usize,
    json: Option<&Path>,
) -> CliResult<BenchReport> {
    if repeats < 3 {
        return Err(CliError::Usage("--repeats must be >= 3".into()));
    }
    if slices == 0 {
        return Err(CliError::Usage("--slices must be >= 1".into()));
    }
    let net = match checkpoint {
        Some(p) => open_checkpoint(p)?.network,
        None => Network::<f32>::build(&NetworkConfig::default(), &mut RngStream::new(0)).map_err(CliError::runtime)?,
    };
    let (h, w) = net.config().input_size;
    if h != w {
        return Err(CliError::Usage("bench needs a square input size".into()));
    }
    let phantom = PhantomConfig {
        image_size: h,
        ..Default::default()
    };
    let mut rng = RngStream::new(1);
    let volume: Vec<Tensor<f32>> = (0..slices).map(|_| generate_phantom(&mut rng, &phantom).0).collect();
    let refs: Vec<&Tensor<f32>> = volume.iter().collect();

    let time_volume = || -> CliResult<f64> {
        let start = Instant::now();
        predict_slices(&net, &refs).map_err(CliError::runtime)?;
        Ok(start.elapsed().as_secs_f64())
    };
    let mut single = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        single.push(with_threads(1, time_volume)??);
    }
    let mut multi = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        multi.push(with_threads(threads, time_volume)??);
    }
    let single_thread = summarize(1, single, slices);
    let multi_thread = summarize(threads, multi, slices);
    // scale to the 13-slice reference volume
    let within_budget = single_thread.per_slice_seconds * 13.0 < BUDGET_SECONDS;
    let report = BenchReport {
        cpu: cpu_model(),
        logical_cores: std::thread::available_parallelism().map_or(1, |n| n.get()),
        network: net.config().clone(),
        slices,
        single_thread,
        multi_thread,
        budget_seconds: BUDGET_SECONDS,
        within_budget,
    };
    println!("cpu: {} ({} logical cores)", report.cpu, report.logical_cores);
    for t in [&report.single_thread, &report.multi_thread] {
        println!(
            "{} thread(s): median {:.3} s per volume, {:.3} s per slice, spread {:.1}%",
            t.threads,
            t.median_seconds,
            t.per_slice_seconds,
            100.0 * t.spread
        );
    }
    println!(
        "single-thread budget {:.0} s for 13 slices: {}",
        BUDGET_SECONDS,
        if report.within_budget { "pass" } else { "FAIL" }
    );
    if let Some(p) = json {
        let text = serde_json::to_string_pretty(&report).map_err(CliError::runtime)?;
        fs::write(p, text + "\n").map_err(CliError::runtime)?;
    }
    Ok(report)
}
