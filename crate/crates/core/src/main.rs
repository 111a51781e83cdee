use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hermes_noc::harness::{
    build_network, dynamic_fault_experiment, parse_config, run_trace, saturation_per_seed,
    stabilization_cycles, sweep_and_emit, write_event_trace, DynamicConfig, ExperimentConfig, STEADY_HOLD_BINS,
    STEADY_TAIL_BINS, STEADY_TOLERANCE,
};
use hermes_noc::routing::cdg::{build_cdg, check_acyclic};
use hermes_noc::traffic::TrafficPattern;
use hermes_noc::{Error, Result};

#[derive(Parser)]
#[command(name = "hermes-noc", version, about = "Fault-tolerant 2D-mesh NoC simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep injection rates and seeds, writing one CSV row per point.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        /// Write the boot-time reconfiguration report of the first seed.
        #[arg(long, value_name = "PATH")]
        dump_reconfig: Option<PathBuf>,
        /// Write the channel dependency graph of the first seed as DOT.
        #[arg(long, value_name = "PATH")]
        dump_cdg: Option<PathBuf>,
        /// Write a per-cycle event trace for the first rate and seed.
        #[arg(long, value_name = "PATH")]
        event_trace: Option<PathBuf>,
    },
    /// Saturation throughput per seed and its median.
    Saturation {
        #[command(flatten)]
        common: Common,
    },
    /// Runtime fault injection with binned latency over time.
    Dynamic {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 25)]
        new_faults: usize,
        #[arg(long, default_value_t = 20_000)]
        fault_cycle: u64,
        #[arg(long, default_value_t = 100_000)]
        cycles: u64,
        #[arg(long, default_value_t = 1_000)]
        bin: u64,
        #[arg(long, default_value = "dynamic.csv")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh size, e.g. 8x8.
    #[arg(long)]
    mesh: Option<String>,
    /// h-xy, h-o1turn or pure-ud.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    vcs: Option<String>,
    /// Unidirectional fault count.
    #[arg(long)]
    faults: Option<String>,
    /// random or hotspot.
    #[arg(long)]
    placement: Option<String>,
    #[arg(long)]
    faults_file: Option<String>,
    /// uniform, transpose or trace:PATH.
    #[arg(long, alias = "traffic")]
    pattern: Option<String>,
    #[arg(long)]
    trace_file: Option<String>,
    #[arg(long, alias = "rate")]
    rates: Option<String>,
    /// A count n (seeds 0..n) or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    warmup: Option<String>,
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    drain: Option<String>,
    #[arg(long)]
    packet_size: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => parse_config(&std::fs::read_to_string(p)?, p)?,
            None => ExperimentConfig::default(),
        };
        let overrides = [
            ("mesh", &self.mesh),
            ("variant", &self.variant),
            ("vcs", &self.vcs),
            ("faults", &self.faults),
            ("placement", &self.placement),
            ("faults_file", &self.faults_file),
            ("pattern", &self.pattern),
            ("trace_file", &self.trace_file),
            ("rates", &self.rates),
            ("seeds", &self.seeds),
            ("warmup", &self.warmup),
            ("measure", &self.measure),
            ("drain", &self.drain),
            ("packet_size", &self.packet_size),
        ];
        for (k, v) in overrides {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(
    cfg: &ExperimentConfig,
    out: &Path,
    dump_reconfig: Option<&Path>,
    dump_cdg: Option<&Path>,
    event_trace: Option<&Path>,
) -> Result<()> {
    let seed = cfg.seeds[0];
    if dump_reconfig.is_some() || dump_cdg.is_some() {
        let net = build_network(cfg, seed)?;
        if let Some(p) = dump_reconfig {
            let boot = &net.reconfigurations()[0];
            std::fs::write(p, boot.report(net.topology()))?;
        }
        if let Some(p) = dump_cdg {
            let cdg = build_cdg(net.topology(), net.tables(), net.config().routing);
            std::fs::write(p, cdg.to_dot())?;
            match check_acyclic(&cdg) {
                Ok(()) => eprintln!("cdg: {} channels, acyclic", cdg.channel_count()),
                Err(cycle) => eprintln!("cdg: cycle through {} channels", cycle.len()),
            }
        }
    }
    if let Some(p) = event_trace {
        let mut w = create(p)?;
        write_event_trace(cfg, cfg.rates[0], seed, cfg.warmup + cfg.measure, &mut w)?;
        w.flush()?;
    }
    if matches!(cfg.pattern, TrafficPattern::Trace(_)) {
        let mut w = create(out)?;
        writeln!(w, "seed,delivered,discarded,avg_latency,finish_cycle")?;
        for &s in &cfg.seeds {
            let r = run_trace(cfg, s, cfg.warmup + cfg.measure + cfg.drain)?;
            writeln!(
                w,
                "{s},{},{},{},{}",
                r.delivered, r.discarded, r.avg_latency, r.finish_cycle
            )?;
        }
        w.flush()?;
        return Ok(());
    }
    let rows = sweep_and_emit(cfg, out)?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn saturation(cfg: &ExperimentConfig) -> Result<()> {
    let res = saturation_per_seed(cfg)?;
    println!("seed,zero_load,saturation");
    for r in &res {
        println!("{},{},{}", r.seed, r.zero_load, r.saturation);
    }
    let s: Vec<f64> = res.iter().map(|r| r.saturation).collect();
    println!("median,,{}", hermes_noc::harness::median(&s));
    Ok(())
}

fn dynamic(cfg: &ExperimentConfig, mut d: DynamicConfig, out: &Path) -> Result<()> {
    let mut w = create(out)?;
    writeln!(w, "seed,bin_start,count,mean,median")?;
    for &seed in &cfg.seeds {
        d.seed = seed;
        let r = dynamic_fault_experiment(&d)?;
        for b in &r.bins {
            writeln!(w, "{seed},{},{},{},{}", b.start, b.count, b.mean, b.median)?;
        }
        let settle = stabilization_cycles(&r, STEADY_TAIL_BINS, STEADY_HOLD_BINS, STEADY_TOLERANCE);
        eprintln!(
            "seed {seed}: resume {} (observed {:?}), dropped {}, settles after {:?} cycles",
            r.scheduled_resume, r.observed_resume, r.dropped, settle
        );
    }
    w.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Run {
            common,
            out,
            dump_reconfig,
            dump_cdg,
            event_trace,
        } => run(
            &common.resolve()?,
            &out,
            dump_reconfig.as_deref(),
            dump_cdg.as_deref(),
            event_trace.as_deref(),
        ),
        Command::Saturation { common } => saturation(&common.resolve()?),
        Command::Dynamic {
            common,
            new_faults,
            fault_cycle,
            cycles,
            bin,
            out,
        } => {
            let cfg = common.resolve()?;
            let mut d = DynamicConfig::new(cfg.clone(), cfg.rates[0], cfg.seeds[0]);
            d.fault_count = new_faults;
            d.fault_cycle = fault_cycle;
            d.total_cycles = cycles;
            d.bin = bin;
            dynamic(&cfg, d, &out)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Deadlock(report)) => {
            eprintln!("deadlock: {report}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
