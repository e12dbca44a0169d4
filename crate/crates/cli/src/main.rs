use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cassist_core::assist::generate_mask_traced;
use cassist_core::edge::{multi_res_forward, single_res_forward, ClassScores};
use cassist_core::link::{adr_step, rx_energy, time_on_air, tx_energy, AdrState, LoRaParams};
use cassist_core::scheduler::{choose_resolution, round_breakdown, ResolutionOption, ScheduleProblem};
use cassist_core::sim::{
    init_model_weights, load_clip_dir, load_trace, serve, synthetic_clips, AssistServer, ScenarioConfig, Simulator,
    UdpTransport,
};
use cassist_core::tensor::{load_weights, save_weights, WeightStore};
use cassist_core::wavelet::{
    dequantize, load_wav, low_resolution, quantize, refine_bands, time_avg_pool, wpt_decompose, Wavelet,
};

#[derive(Parser)]
#[command(
    name = "cassist",
    version,
    about = "Cloud-assisted sound recognition over LoRa: tools and co-simulator"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); defaults to the built-in 100 mF scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for weight initialisation and synthetic clips; defaults to the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    /// OWT1 weight file; seeded weights are generated when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args)]
struct ClipArgs {
    /// Directory of 16-bit mono WAV files, used in file-name order.
    #[arg(long)]
    clips: Option<PathBuf>,
    /// Number of synthetic clips when no directory is given.
    #[arg(long, default_value_t = 8)]
    synthetic: usize,
    /// Samples per synthetic clip.
    #[arg(long, default_value_t = 16_384)]
    clip_samples: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Wavelet packet spectrogram of a WAV file, as CSV (bands × frames).
    Wpt {
        input: PathBuf,
        #[arg(long, default_value_t = 6)]
        depth: u32,
        #[arg(long, default_value = "db4")]
        wavelet: Wavelet,
    },
    /// Band mask for one clip, with importance and classifier scores.
    Assist {
        input: PathBuf,
        #[arg(long, default_value_t = 8)]
        r_a: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Airtime and energy of one uplink.
    Toa {
        #[arg(long)]
        payload: usize,
        #[arg(long, default_value_t = 7)]
        sf: u8,
        #[arg(long, default_value_t = 17)]
        ptx: i8,
    },
    /// ADR recommendation from a list of uplink SNRs.
    Adr {
        #[arg(long, default_value_t = 12)]
        sf: u8,
        #[arg(long, default_value_t = 17)]
        ptx: i8,
        /// SNR samples in dB, oldest first.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        snr: Vec<f64>,
    },
    /// Resolution choice for one power cycle.
    Schedule {
        #[arg(long, default_value_t = 7)]
        sf: u8,
        #[arg(long, default_value_t = 17)]
        ptx: i8,
    },
    /// Replays a trace in-process and writes the report.
    Simulate {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        clips: ClipArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Runs the assistance server on a UDP socket.
    Serve {
        #[arg(long, default_value = "127.0.0.1:47000")]
        bind: SocketAddr,
        /// Exit after this many requests.
        #[arg(long)]
        max_requests: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Replays a trace against a remote server and writes the report.
    Edge {
        #[arg(long, default_value = "127.0.0.1:47000")]
        server: SocketAddr,
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        clips: ClipArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Writes seeded weights for the scenario as an OWT1 file.
    InitWeights,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let scenario = match &cli.common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::from_toml(&text).with_context(|| format!("loading {}", p.display()))?
        }
        None => ScenarioConfig::default(),
    };
    let seed = cli.common.seed.unwrap_or(scenario.seed);
    let out = cli.common.out.as_deref();
    match &cli.command {
        Command::Wpt { input, depth, wavelet } => {
            let clip = read_wav(input)?;
            let spec = wpt_decompose(&clip, *depth, *wavelet)?;
            let csv = spec
                .matrix()
                .data()
                .chunks_exact(spec.frames())
                .map(join_row)
                .collect::<String>();
            emit(out, "wpt.csv", &csv)
        }
        Command::Assist { input, r_a, model } => assist(&scenario, seed, out, input, *r_a, model),
        Command::Toa { payload, sf, ptx } => {
            let params = LoRaParams::new(*sf, *ptx)?;
            let toa = time_on_air(*payload, params, &scenario.link)?;
            let json = serde_json::json!({
                "payload_bytes": payload,
                "sf": sf,
                "ptx_dbm": ptx,
                "time_on_air_s": toa,
                "tx_energy_j": tx_energy(params, toa, &scenario.link),
                "rx_energy_j": rx_energy(&scenario.link),
            });
            emit(out, "toa.json", &pretty(&json)?)
        }
        Command::Adr { sf, ptx, snr } => {
            let mut state = AdrState::new(scenario.adr.clone())?;
            snr.iter().for_each(|&s| state.record(s));
            let next = adr_step(&state, LoRaParams::new(*sf, *ptx)?)?;
            let json = serde_json::json!({ "sf": next.sf(), "ptx_dbm": next.ptx_dbm() });
            emit(out, "adr.json", &pretty(&json)?)
        }
        Command::Schedule { sf, ptx } => {
            let params = LoRaParams::new(*sf, *ptx)?;
            let problem = ScheduleProblem {
                options: scenario.options(),
                params,
                link: scenario.link.clone(),
                constants: scenario.constants,
                budget_j: scenario.budget_j(),
            };
            let decision = choose_resolution(&problem)?;
            let options: Vec<_> = problem
                .options
                .iter()
                .zip(&decision.feasible)
                .map(|(o, f)| option_json(o, params, &scenario, *f))
                .collect();
            let json = serde_json::json!({
                "budget_j": problem.budget_j,
                "decision": decision,
                "options": options,
            });
            emit(out, "schedule.json", &pretty(&json)?)
        }
        Command::Simulate { trace, clips, model } => {
            let trace = read_trace(trace)?;
            let clips = read_clips(clips, seed)?;
            let weights = read_weights(&scenario, seed, model)?;
            let report = Simulator::in_process(&scenario, &weights)?.run(&trace, &clips)?;
            write_report(out, &report)
        }
        Command::Serve {
            bind,
            max_requests,
            model,
        } => {
            let weights = read_weights(&scenario, seed, model)?;
            let mut server = AssistServer::for_scenario(&scenario, &weights)?;
            let socket = UdpSocket::bind(bind).with_context(|| format!("binding {bind}"))?;
            log::info!("serving on {}", socket.local_addr()?);
            eprintln!("listening on {}", socket.local_addr()?);
            let n = serve(&socket, &mut server, &AtomicBool::new(false), *max_requests)?;
            log::info!("handled {n} requests");
            Ok(())
        }
        Command::Edge {
            server,
            trace,
            clips,
            model,
        } => {
            let trace = read_trace(trace)?;
            let clips = read_clips(clips, seed)?;
            let weights = read_weights(&scenario, seed, model)?;
            let timeout = Duration::from_secs_f64(scenario.link.rx_window_s);
            let transport = UdpTransport::connect(*server, timeout)?;
            let report = Simulator::new(&scenario, &weights, transport)?.run(&trace, &clips)?;
            write_report(out, &report)
        }
        Command::InitWeights => {
            let weights = init_model_weights(&scenario, seed)?;
            let Some(dir) = out else {
                bail!("init-weights needs --out");
            };
            std::fs::create_dir_all(dir)?;
            let path = dir.join("weights.owt");
            std::fs::write(&path, save_weights(&weights))?;
            eprintln!("wrote {} tensors to {}", weights.len(), path.display());
            Ok(())
        }
    }
}

fn assist(
    scenario: &ScenarioConfig,
    seed: u64,
    out: Option<&Path>,
    input: &Path,
    r_a: usize,
    model: &ModelArgs,
) -> Result<()> {
    if r_a == 0 || !r_a.is_power_of_two() {
        bail!("R_a must be a positive power of two, got {r_a}");
    }
    let clip = read_wav(input)?;
    let weights = read_weights(scenario, seed, model)?;
    let sa = time_avg_pool(&wpt_decompose(&clip, r_a.trailing_zeros(), scenario.wavelet)?)?;
    let received = dequantize(&quantize(&sa))?;
    let trace = generate_mask_traced(&received, &weights, &scenario.vit, scenario.edge.k)?;
    let e = &scenario.edge;
    let input = refine_bands(&clip, &trace.mask, e.r_l, e.r_h, e.t_l, e.t_h, scenario.wavelet)?;
    let multi = multi_res_forward(&input, &weights, e)?;
    let single = single_res_forward(&low_resolution(&clip, e.r_l, e.t_l, scenario.wavelet)?, &weights, e)?;
    let scores = format!(
        "head,{}\n{}{}",
        class_header(e.classes),
        score_row("multi", &multi),
        score_row("single", &single)
    );
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("importance.csv"), trace.importance.to_csv())?;
            std::fs::write(dir.join("scores.csv"), &scores)?;
            std::fs::write(dir.join("mask.txt"), format!("{}\n", trace.mask))?;
        }
        None => {
            println!("mask {} (start {})", trace.mask, trace.mask.window_start());
            print!("{scores}");
        }
    }
    Ok(())
}

fn class_header(classes: usize) -> String {
    (0..classes).map(|c| format!("class_{c}")).collect::<Vec<_>>().join(",")
}

fn score_row(head: &str, scores: &ClassScores) -> String {
    format!("{head},{}", join_row(&scores.probs))
}

fn join_row(values: &[f32]) -> String {
    let cells: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    format!("{}\n", cells.join(","))
}

fn option_json(o: &ResolutionOption, params: LoRaParams, s: &ScenarioConfig, feasible: bool) -> serde_json::Value {
    let energy = round_breakdown(o, params, &s.link, &s.constants)
        .ok()
        .map(|b| b.total());
    serde_json::json!({
        "r_a": o.r_a,
        "payload_bytes": o.payload_bytes,
        "est_accuracy": o.est_accuracy,
        "round_energy_j": energy,
        "feasible": feasible,
    })
}

fn pretty(v: &serde_json::Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn write_report(out: Option<&Path>, report: &cassist_core::sim::SimulationReport) -> Result<()> {
    match out {
        Some(dir) => report.write_to(dir)?,
        None => println!("{}", report.summary_json()?),
    }
    Ok(())
}

fn read_wav(path: &Path) -> Result<cassist_core::wavelet::AudioClip> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_wav(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn read_trace(path: &Path) -> Result<Vec<cassist_core::sim::ChannelTraceRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_trace(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_clips(args: &ClipArgs, seed: u64) -> Result<Vec<cassist_core::wavelet::AudioClip>> {
    Ok(match &args.clips {
        Some(dir) => load_clip_dir(dir)?,
        None => synthetic_clips(args.synthetic, args.clip_samples, seed)?,
    })
}

fn read_weights(scenario: &ScenarioConfig, seed: u64, model: &ModelArgs) -> Result<WeightStore> {
    Ok(match &model.weights {
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            load_weights(&bytes).with_context(|| format!("decoding {}", p.display()))?
        }
        None => init_model_weights(scenario, seed)?,
    })
}
