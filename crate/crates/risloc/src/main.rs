//! Thin CLI over the library: distance sweeps, beam cuts, the optimal
//! design with time sharing, and the baseline generators.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use risloc::config::{load_config, Scenario, ScenarioConfig};
use risloc::design::{build_beam_basis, solve_lambda_sdp, SdpSettings};
use risloc::error::Result;
use risloc::fim;
use risloc::profiles::{make_schedule, Pipeline, ProjectionParams};
use risloc::report;
use risloc::sweep::{
    run_beam_cuts, run_peb_sweep, CutCoordinate, DesignSpec, GridSpec, SweepOptions,
};

#[derive(Parser)]
#[command(name = "risloc", version, about = "Near-field RIS localization design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Scenario JSON; omit for the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArg {
    fn scenario(&self) -> Result<Scenario> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Scenario::from_config(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// PEB of several designs over the RIS-UE distance sweep.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated designs: optimal-full, optimal-diag, pipeline-a,
        /// pipeline-b, timediv=T, random=T[:q], directional=R[:T].
        #[arg(long)]
        designs: Option<String>,
        /// Comma-separated distances in meters (default 1..=15).
        #[arg(long)]
        distances: Option<String>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Emit measured wall times (off keeps output byte-identical).
        #[arg(long)]
        timing: bool,
        /// Also write a tidy long-format file for plotting.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Gains of the four orthonormalized beams along one coordinate cut.
    Beams {
        #[command(flatten)]
        config: ConfigArg,
        /// Cut coordinate: rho, theta, or phi.
        #[arg(long)]
        coordinate: String,
        #[arg(long)]
        grid_min: f64,
        #[arg(long)]
        grid_max: f64,
        #[arg(long, default_value_t = 201)]
        grid_steps: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Solve the allocation, project the beams, print weights and schedule.
    Optimize {
        #[command(flatten)]
        config: ConfigArg,
        /// A: optimize then constrain; B: constrain then optimize.
        #[arg(long, value_parser = parse_pipeline, default_value = "B")]
        pipeline: Pipeline,
        /// Optional CSV with the scheduled beam phases (one row per element).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one baseline design at the configured UE position.
    Baseline {
        #[command(flatten)]
        config: ConfigArg,
        /// random or directional.
        #[arg(long)]
        kind: String,
        /// Uncertainty ball radius for the directional codebook (m).
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        /// Transmissions; defaults to the scenario's T.
        #[arg(long)]
        t: Option<u32>,
        /// Draw random profiles from the quantized four-symbol set.
        #[arg(long)]
        quantized: bool,
        /// Optional one-row CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_pipeline(s: &str) -> std::result::Result<Pipeline, String> {
    match s {
        "A" | "a" => Ok(Pipeline::OptimizeThenConstrain),
        "B" | "b" => Ok(Pipeline::ConstrainThenOptimize),
        _ => Err(format!("expected A or B, got `{s}`")),
    }
}

fn parse_distances(arg: &Option<String>) -> Result<Vec<f64>> {
    match arg {
        None => Ok((1..=15).map(|d| d as f64).collect()),
        Some(s) => s
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| risloc::Error::Config {
                    field: "distances".into(),
                    message: format!("bad distance `{tok}`"),
                })
            })
            .collect(),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep {
            config,
            designs,
            distances,
            out,
            timing,
            plot_data,
        } => {
            let scen = config.scenario()?;
            let t = scen.config().t;
            let designs = match designs {
                None => DesignSpec::default_set(t),
                Some(s) => s
                    .split(',')
                    .map(|tok| DesignSpec::parse(tok.trim(), t))
                    .collect::<Result<Vec<_>>>()?,
            };
            let distances = parse_distances(&distances)?;
            let result = run_peb_sweep(&scen, &designs, &distances, &SweepOptions::default());
            report::emit_sweep_csv(&result, scen.config().seed, timing, &out)?;
            if let Some(plot) = plot_data {
                report::emit_sweep_plot_data(&result, plot)?;
            }
            eprintln!("wrote {} rows to {}", result.rows.len(), out.display());
        }
        Command::Beams {
            config,
            coordinate,
            grid_min,
            grid_max,
            grid_steps,
            out,
            plot_data,
        } => {
            let scen = config.scenario()?;
            let coordinate = CutCoordinate::parse(&coordinate)?;
            let result = run_beam_cuts(
                &scen,
                &scen.config().ue_position(),
                coordinate,
                &GridSpec {
                    min: grid_min,
                    max: grid_max,
                    steps: grid_steps,
                },
            )?;
            report::emit_cuts_csv(&result, &out)?;
            if let Some(plot) = plot_data {
                report::emit_cuts_plot_data(&result, plot)?;
            }
            eprintln!("wrote {} rows to {}", result.rows.len(), out.display());
        }
        Command::Optimize {
            config,
            pipeline,
            out,
        } => {
            let scen = config.scenario()?;
            let ctx = scen.context()?;
            let settings = SdpSettings::default();
            let basis = build_beam_basis(ctx.bundle(), true)?;
            let budget = scen.config().t as f64;
            let sol = solve_lambda_sdp(&basis, &ctx, budget, true, &settings)?;
            println!("status: {:?}", sol.status);
            println!("lambda: {:?}", sol.allocation.diagonal());
            println!("objective (m^2): {:.6e}", sol.objective);
            println!("peb at optimum (m): {:.6e}", sol.peb_at_optimum);
            let schedule = make_schedule(
                &sol,
                &basis,
                &ctx,
                &ProjectionParams::default(),
                scen.config().t,
                pipeline,
                &settings,
            )?;
            println!("time allocations: {:?}", schedule.allocations());
            let scheduled = fim::fim_from_schedule(
                &schedule,
                ctx.bundle(),
                ctx.beta(),
                ctx.snr(),
                ctx.jacobian(),
            )?;
            println!("scheduled peb (m): {:.6e}", scheduled.peb);
            if let Some(path) = out {
                let header: Vec<String> = (1..=4)
                    .flat_map(|i| [format!("beam{i}_re"), format!("beam{i}_im")])
                    .collect();
                let mut text = header.join(",") + "\n";
                for m in 0..scen.array().len() {
                    let mut fields = Vec::with_capacity(8);
                    for beam in schedule.beams() {
                        fields.push(report::format_float(beam[m].re));
                        fields.push(report::format_float(beam[m].im));
                    }
                    text.push_str(&fields.join(","));
                    text.push('\n');
                }
                std::fs::write(&path, text)?;
                eprintln!("wrote beam phases to {}", path.display());
            }
        }
        Command::Baseline {
            config,
            kind,
            radius,
            t,
            quantized,
            out,
        } => {
            let scen = config.scenario()?;
            let t = t.unwrap_or(scen.config().t);
            let seed = scen.config().seed;
            let p = scen.config().ue_position();
            let ctx = scen.context_at(&p)?;
            let (name, f) = match kind.as_str() {
                "random" => {
                    let spec = DesignSpec::Random { t, quantized };
                    let cfg = risloc::baselines::RandomProfileConfig { seed, quantized };
                    (spec.name(), risloc::baselines::random_profiles(scen.array(), t, &cfg))
                }
                "directional" => {
                    let spec = DesignSpec::Directional { radius, t };
                    let cfg = risloc::baselines::DirectionalConfig { radius, seed };
                    (
                        spec.name(),
                        risloc::baselines::directional_codebook(scen.array(), &p, t, &cfg)?,
                    )
                }
                other => {
                    return Err(risloc::Error::Config {
                        field: "kind".into(),
                        message: format!("expected random|directional, got `{other}`"),
                    })
                }
            };
            let j_sph = fim::fim_from_profiles(ctx.bundle(), ctx.beta(), &f, ctx.snr())?;
            let peb = fim::peb(&fim::fim_cartesian(&j_sph, ctx.jacobian()))?;
            println!("design: {name}");
            println!("peb (m): {}", report::format_float(peb));
            if let Some(path) = out {
                let result = risloc::sweep::SweepResult {
                    rows: vec![risloc::sweep::SweepRow {
                        distance_m: p.y,
                        range_m: p.norm(),
                        design: name,
                        peb_m: peb,
                        lambda: [0.0; 4],
                        wall_time_s: 0.0,
                        status: "ok".into(),
                    }],
                };
                report::emit_sweep_csv(&result, seed, false, path)?;
            }
        }
    }
    Ok(())
}
