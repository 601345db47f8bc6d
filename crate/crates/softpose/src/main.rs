use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use softpose::commands::{self, RunOptions};
use softpose::RunConfig;

#[derive(Parser)]
#[command(name = "softpose", version, about = "Render-and-compare 6D pose refinement on a soft rasterizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render color, depth and mask at the configured pose.
    Render(Common),
    /// Refine poses on synthesized or stored frames.
    Refine(Common),
    /// Score predicted poses against ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Predicted poses, one JSON object per line.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth poses, one JSON object per line.
        #[arg(long)]
        gt: PathBuf,
    },
    /// Compare analytic loss gradients with finite differences.
    Gradcheck(Common),
    /// Write a synthetic frame directory.
    Synth(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rgb_only: bool,
    /// Worker threads across independent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the rendering of every iteration as numbered PNGs.
    #[arg(long)]
    debug_renders: bool,
}

impl Common {
    fn load(&self) -> Result<(RunConfig, RunOptions)> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.rgb_only |= self.rgb_only;
        cfg.validate()?;
        Ok((cfg, RunOptions { jobs: self.jobs.max(1), debug_renders: self.debug_renders }))
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Render(c) => commands::cmd_render(&c.load()?.0).map(|_| 0),
        Command::Synth(c) => commands::cmd_synth(&c.load()?.0).map(|_| 0),
        Command::Refine(c) => {
            let (cfg, opts) = c.load()?;
            let outcome = commands::cmd_refine(&cfg, &opts)?;
            for r in &outcome.runs {
                let s = &r.summary;
                let err = s.errors.as_ref().map_or(String::new(), |e| {
                    format!(" rot {:.3} deg, trans {:.5} m", e.best.rot_deg, e.best.trans_m)
                });
                println!("frame {} trial {}: {:?} after {} iterations, loss {:.6}{err}", s.frame, s.trial, s.status, s.iterations, s.best_loss);
            }
            Ok(outcome.exit_code())
        }
        Command::Evaluate { common, pred, gt } => {
            let (cfg, _) = common.load()?;
            let s = commands::cmd_evaluate(&cfg, &pred, &gt)?;
            println!(
                "{} poses: recall@0.1d {:.2}, AUC(ADD-S) {:.2}, AUC(ADD(-S)) {:.2}, mean rotation error {:.3} deg",
                s.count, s.recall_add_0_1d, s.auc_add_s, s.auc_add_or_s, s.mean_rot_err_deg
            );
            Ok(0)
        }
        Command::Gradcheck(c) => {
            let (cfg, _) = c.load()?;
            let report = commands::cmd_gradcheck(&cfg)?;
            for t in &report.terms {
                let verdict = if t.passed { "ok" } else { "FAIL" };
                println!("{:<12} median {:.2e} max {:.2e} over {} components  {verdict}", t.term.name(), t.median_rel_err, t.max_rel_err, t.components);
            }
            Ok(if report.passed() { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
