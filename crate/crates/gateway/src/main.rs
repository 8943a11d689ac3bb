use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use marvin_core::config::MarvinConfig;
use marvin_core::nav::mapfile::{read_map, save_grid, MAGIC as MAP_MAGIC};
use marvin_core::worldsim::{format_world, parse_world, WORLD_MAGIC};
use marvin_gateway::record::{read_log, replay};
use marvin_gateway::scenario::{Scenario, ScenarioRunner};
use marvin_gateway::server::serve;
use marvin_gateway::GatewayError;

#[derive(Parser)]
#[command(name = "marvin", version, about = "Marvin assistive robot simulator and gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and evaluate its assertions.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run as fast as possible without serving clients.
        #[arg(long)]
        headless: bool,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        /// Simulation speed relative to wall time when serving.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        /// Write the JSON-lines event log here.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Serve a recorded log to clients with its original stamps.
    Replay {
        file: PathBuf,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        /// Replay speed relative to wall time.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// Convert between world files and map files.
    MapConvert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = MapFormat::Map)]
        to: MapFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MapFormat {
    /// Binary MARVINMAP raster.
    Map,
    /// ASCII world file.
    World,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            scenario,
            seed,
            headless,
            port,
            rate,
            record,
        } => run(&scenario, seed, headless, port, rate, record.as_deref()),
        Command::Replay { file, port, speed } => replay_log(&file, port, speed),
        Command::MapConvert { input, output, to } => map_convert(&input, &output, to).map(|_| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<GatewayError>()
                .map(GatewayError::exit_code)
                .unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}

fn run(path: &Path, seed: u64, headless: bool, port: u16, rate: f64, record: Option<&Path>) -> Result<i32> {
    let config = MarvinConfig::from_env().map_err(|e| GatewayError::Parse {
        line: 0,
        msg: format!("config: {e}"),
    })?;
    let scenario = Scenario::load(path)?;
    let mut runner = ScenarioRunner::new(scenario, seed, config)?;
    if headless {
        runner.run_to_end()?;
    } else {
        if !(rate > 0.0) {
            bail!(GatewayError::Parse {
                line: 0,
                msg: "--rate must be positive".into()
            });
        }
        let rt = tokio::runtime::Runtime::new()?;
        let gateway = rt.block_on(serve(runner.stack.bus.clone(), port))?;
        eprintln!("serving ws://{}", gateway.local_addr());
        let dt = runner.stack.config.rates.dt();
        let start = Instant::now();
        while !runner.done() {
            runner.step()?;
            let due = Duration::from_secs_f64(runner.stack.now() / rate);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        // let clients drain the final frames
        std::thread::sleep(Duration::from_secs_f64((dt * 10.0).max(0.2)));
        rt.block_on(gateway.shutdown());
    }
    let result = runner.finish()?;
    if let Some(p) = record {
        std::fs::write(p, &result.log).with_context(|| format!("writing {}", p.display()))?;
    }
    println!("scenario {} (seed {})", result.name, result.seed);
    for o in &result.outcomes {
        println!(
            "  [{}] {} ({})",
            if o.passed { "PASS" } else { "FAIL" },
            o.label,
            o.detail
        );
    }
    println!(
        "{} in {:.1} s simulated, {:.2} s wall",
        if result.passed() { "PASS" } else { "FAIL" },
        result.sim_time,
        result.wall_time.as_secs_f64()
    );
    Ok(result.exit_code())
}

fn replay_log(path: &Path, port: u16, speed: f64) -> Result<i32> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let log = read_log(BufReader::new(file))?;
    if log.truncated {
        eprintln!("log is truncated; replaying {} complete lines", log.messages.len());
    }
    let bus = marvin_core::messages::marvin_bus();
    let rt = tokio::runtime::Runtime::new()?;
    let gateway = rt.block_on(serve(bus.clone(), port))?;
    eprintln!("serving ws://{}", gateway.local_addr());
    let report = replay(&log, &bus, Some(speed))?;
    std::thread::sleep(Duration::from_millis(200));
    rt.block_on(gateway.shutdown());
    println!("replayed {} messages", report.published);
    Ok(0)
}

fn map_convert(input: &Path, output: &Path, to: MapFormat) -> Result<()> {
    let bytes = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let grid = if bytes.starts_with(MAP_MAGIC.as_bytes()) {
        read_map(bytes.as_slice())?
    } else if bytes.starts_with(WORLD_MAGIC.as_bytes()) {
        parse_world(std::str::from_utf8(&bytes).context("world file is not UTF-8")?)?
    } else {
        bail!(GatewayError::Parse {
            line: 1,
            msg: format!("expected `{MAP_MAGIC}` or `{WORLD_MAGIC}`"),
        });
    };
    match to {
        MapFormat::Map => save_grid(&grid, output)?,
        MapFormat::World => {
            let mut out = BufWriter::new(File::create(output)?);
            out.write_all(format_world(&grid).as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}
