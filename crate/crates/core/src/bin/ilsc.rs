use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ilsc::beamformer::{evaluate_scheme, BeamformingScheme};
use ilsc::channel::{write_matrices_csv, ChannelTensor, LinkDirection};
use ilsc::dictionary::PolarDictionary;
use ilsc::error::{Error, Result};
use ilsc::estimator::{amp_em_estimate, omp_estimate, sensing_matrices, AmpOptions};
use ilsc::harness::{load_config, run_pipeline, run_trial, stage_seed, EstimatorScheme, ExperimentSpec, TrialContext};
use ilsc::locator::{locate, LocationReport};
use ilsc::pilot::{build_pilot_frame, simulate_uplink};
use ilsc::scenario::Profile;

#[derive(Parser)]
#[command(name = "ilsc", version, about = "Location sensing and squint-robust beamforming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// System configuration (TOML/JSON); for `sweep`, an experiment spec.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value = "desk")]
    profile: Profile,
    /// Comma-separated estimator and/or beamforming scheme names.
    #[arg(long, global = true, value_delimiter = ',')]
    schemes: Vec<String>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads for `sweep`; all cores when absent.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and dump every intermediate.
    Simulate,
    /// Run an experiment spec and write CSV/JSON outputs.
    Sweep,
    /// Estimate and locate from an uplink channel dump.
    Locate {
        #[arg(long)]
        channel: PathBuf,
    },
    /// Evaluate beamforming schemes on a location report and channel dump.
    Beamform {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        channel: PathBuf,
        /// The dump holds the downlink channel rather than the uplink.
        #[arg(long)]
        downlink: bool,
    },
}

fn split_schemes(names: &[String]) -> Result<(Vec<EstimatorScheme>, Vec<BeamformingScheme>)> {
    let mut est = Vec::new();
    let mut bf = Vec::new();
    for n in names.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        if let Ok(e) = n.parse::<EstimatorScheme>() {
            est.push(e);
        } else {
            bf.push(n.parse::<BeamformingScheme>().map_err(|_| {
                Error::InvalidArgument(format!("'{n}' is neither an estimator nor a beamforming scheme"))
            })?);
        }
    }
    Ok((est, bf))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

fn read_channel(path: &Path, direction: LinkDirection) -> Result<ChannelTensor> {
    ChannelTensor::read_csv(BufReader::new(File::open(path)?), direction)
}

fn simulate(cli: &Cli) -> Result<serde_json::Value> {
    let cfg = load_config(cli.config.as_deref(), cli.profile)?;
    let (mut est, mut bf) = split_schemes(&cli.schemes)?;
    if est.is_empty() && bf.is_empty() {
        est = EstimatorScheme::ALL.to_vec();
        bf = BeamformingScheme::ALL.to_vec();
    }
    let seed = cli.seed.unwrap_or(cfg.rng_seed);
    let ctx = TrialContext::new(cfg.clone(), &est, &bf)?;
    let art = run_trial(&ctx, seed)?;
    let out = &cli.out;
    std::fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), &cfg)?;
    write_json(&out.join("scenario.json"), &art.scenario)?;
    art.uplink.write_csv(BufWriter::new(File::create(out.join("channel_uplink.csv"))?))?;
    write_matrices_csv(&art.measurements.y, BufWriter::new(File::create(out.join("measurements.csv"))?))?;
    write_matrices_csv(&[art.frame.w_ul.clone()], BufWriter::new(File::create(out.join("combiner.csv"))?))?;
    for (scheme, e) in &art.estimates {
        write_matrices_csv(&e.hp, BufWriter::new(File::create(out.join(format!("estimate_{scheme}.csv")))?))?;
        write_json(&out.join(format!("estimate_{scheme}.json")), &e.sidecar())?;
    }
    if let Some(r) = &art.report {
        write_json(&out.join("report.json"), r)?;
    }
    write_json(&out.join("summary.json"), &art.summary)?;
    Ok(serde_json::to_value(&art.summary)?)
}

fn sweep(cli: &Cli) -> Result<serde_json::Value> {
    let mut spec = match &cli.config {
        Some(p) => ExperimentSpec::from_path(p)?,
        None => ExperimentSpec {
            profile: cli.profile,
            ..Default::default()
        },
    };
    if let Some(t) = cli.trials {
        spec.trials = t;
    }
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if !cli.schemes.is_empty() {
        let (est, bf) = split_schemes(&cli.schemes)?;
        spec.estimators = est;
        spec.beamformers = bf;
    }
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = run_pipeline(&spec, workers)?;
    let files = result.write(&cli.out)?;
    Ok(json!({
        "config_hash": spec.hash(),
        "failures": result.failures.len(),
        "files": files,
    }))
}

fn locate_cmd(cli: &Cli, channel: &Path) -> Result<serde_json::Value> {
    let cfg = load_config(cli.config.as_deref(), cli.profile)?;
    let seed = cli.seed.unwrap_or(cfg.rng_seed);
    let (est, _) = split_schemes(&cli.schemes)?;
    let scheme = match est.as_slice() {
        [] => EstimatorScheme::AmpPolarFd,
        [e] if *e != EstimatorScheme::OmpDft => *e,
        _ => return Err(Error::InvalidArgument("locate takes one polar-lattice estimator".into())),
    };
    let uplink = read_channel(channel, LinkDirection::Uplink)?;
    if uplink.m() != cfg.m_subcarriers || uplink.mats[0].shape() != (cfg.n_bs, cfg.n_ut) {
        return Err(Error::Shape(format!(
            "channel dump is {}x{}x{}, configuration expects {}x{}x{}",
            uplink.m(),
            uplink.mats[0].nrows(),
            uplink.mats[0].ncols(),
            cfg.m_subcarriers,
            cfg.n_bs,
            cfg.n_ut
        )));
    }
    let frame = build_pilot_frame(&cfg, stage_seed(seed, 1));
    let meas = simulate_uplink(&uplink, &frame, &cfg, stage_seed(seed, 2))?;
    let dict = PolarDictionary::new(&cfg, scheme.variant());
    let sensing = sensing_matrices(&frame, &dict);
    let estimate = match scheme {
        EstimatorScheme::AmpPolarFd => amp_em_estimate(&meas, &sensing, &AmpOptions::from_config(&cfg))?,
        _ => omp_estimate(&meas, &sensing, (cfg.l_max + cfg.g_los).min(cfg.n_meas()))?,
    };
    let report = locate(&meas, &estimate, &dict.lattice, &cfg, stage_seed(seed, 3))?;
    std::fs::create_dir_all(&cli.out)?;
    write_json(&cli.out.join("report.json"), &report)?;
    Ok(serde_json::to_value(&report)?)
}

fn beamform_cmd(cli: &Cli, report: &Path, channel: &Path, downlink: bool) -> Result<serde_json::Value> {
    let cfg = load_config(cli.config.as_deref(), cli.profile)?;
    let report: LocationReport = serde_json::from_reader(BufReader::new(File::open(report)?))?;
    let h = if downlink {
        read_channel(channel, LinkDirection::Downlink)?
    } else {
        read_channel(channel, LinkDirection::Uplink)?.reciprocal()
    };
    let (_, mut schemes) = split_schemes(&cli.schemes)?;
    if schemes.is_empty() {
        schemes = BeamformingScheme::ALL
            .into_iter()
            .filter(|s| *s != BeamformingScheme::IdealCenter)
            .collect();
    }
    let freqs = cfg.subcarrier_freqs();
    let mut table = String::from("scheme,m,f_m,se\n");
    let mut summary = Vec::new();
    for s in schemes {
        let o = evaluate_scheme(s, &h, &report, None, &cfg)?;
        for (m, se) in o.se.per_subcarrier.iter().enumerate() {
            table.push_str(&format!("{s},{m},{},{se}\n", freqs[m]));
        }
        summary.push(json!({
            "scheme": s,
            "se_mean": o.se.mean(),
            "se_spread": o.se.spread(),
            "se_edge": o.se.edge(),
            "flags": o.flags,
        }));
    }
    std::fs::create_dir_all(&cli.out)?;
    std::fs::write(cli.out.join("se.csv"), table)?;
    Ok(json!(summary))
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    match &cli.command {
        Command::Simulate => simulate(cli),
        Command::Sweep => sweep(cli),
        Command::Locate { channel } => locate_cmd(cli, channel),
        Command::Beamform {
            report,
            channel,
            downlink,
        } => beamform_cmd(cli, report, channel, *downlink),
    }
}

fn error_record(command: &str, kind: &str, message: &str) -> String {
    json!({ "error": { "command": command, "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_record("", "usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    let name = match cli.command {
        Command::Simulate => "simulate",
        Command::Sweep => "sweep",
        Command::Locate { .. } => "locate",
        Command::Beamform { .. } => "beamform",
    };
    match run(&cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(name, e.kind(), &e.to_string()));
            ExitCode::from(1)
        }
    }
}
