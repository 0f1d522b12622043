//! `kpconf` command line: `map`, `run`, `compare`, `export`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::conformal::{read_map_csv, solve_strip_map, StripMap};
use crate::scenario::{
    crest_position, read_manifest, read_snapshot, run_scenario, write_atomic, MapReport,
    RunManifest, ScenarioConfig, ScenarioError,
};
use crate::spectral::PeriodicGrid;

#[derive(Debug, Parser)]
#[command(
    name = "kpconf",
    version,
    about = "Conformal-map KP/KdV/Boussinesq solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the strip map of a scenario and write `strip_map.csv`.
    Map {
        config: PathBuf,
        /// Defaults to the scenario's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and write snapshots plus `manifest.json`.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// L2 / Linf differences and crest positions of two runs, per snapshot.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Snapshot variable to compare.
        #[arg(long, default_value = "eta_physical")]
        variable: String,
    },
    /// Long-format CSV `xi,x,y,eta` of one conformal snapshot.
    Export {
        run: PathBuf,
        /// Snapshot time; the last one when omitted.
        #[arg(long)]
        time: Option<f64>,
        /// Keep every `stride`-th node along each axis.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 ok, 2 bad input, 3 solver or I/O failure.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), ScenarioError> {
    match cmd {
        Command::Map { config, out } => map_command(&config, out),
        Command::Run { config, out } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            let dir = cfg.output_dir.clone();
            let manifest = run_scenario(cfg)?;
            println!(
                "wrote {} snapshot files and manifest.json to {} ({} steps, {} rejected)",
                manifest.files.len(),
                dir.display(),
                manifest.accepted_steps,
                manifest.rejected_steps
            );
            Ok(())
        }
        Command::Compare {
            run_a,
            run_b,
            variable,
        } => {
            print!("{}", compare_runs(&run_a, &run_b, &variable)?);
            Ok(())
        }
        Command::Export {
            run,
            time,
            stride,
            out,
        } => {
            let out = out.unwrap_or_else(|| run.join("export.csv"));
            let rows = export_run(&run, time, stride, &out)?;
            println!("wrote {rows} rows to {}", out.display());
            Ok(())
        }
    }
}

fn map_command(config: &Path, out: Option<PathBuf>) -> Result<(), ScenarioError> {
    let cfg = ScenarioConfig::load(config)?;
    let grid = cfg.grid()?;
    let topo = cfg.topography()?;
    if !(cfg.mu > 0.0) {
        return Err(ScenarioError::Config(format!("mu = {}", cfg.mu)));
    }
    let map = if topo.is_flat() {
        StripMap::flat(&grid, cfg.mu)
    } else {
        solve_strip_map(&topo, cfg.mu, &grid, cfg.strip_map.into())?
    };
    let dir = out.unwrap_or(cfg.output_dir.clone());
    fs::create_dir_all(&dir).map_err(|e| ScenarioError::io(&dir, e))?;
    let mut csv = Vec::new();
    let path = dir.join("strip_map.csv");
    map.write_csv(&mut csv)
        .map_err(|e| ScenarioError::io(&path, e))?;
    write_atomic(&path, &csv)?;
    let report = MapReport::new(&map, cfg.eps);
    let text = serde_json::to_string_pretty(&report).expect("report is serializable");
    write_atomic(&dir.join("map_report.json"), text.as_bytes())?;
    println!(
        "strip map: {} iterations, residual {:.3e}, M in [{:.6}, {:.6}], max |eps m| = {:.4}{}",
        report.iterations,
        report.residual,
        report.min_m,
        report.max_m,
        report.max_abs_eps_m,
        if report.small_amplitude_warning {
            " (outside the small-amplitude regime)"
        } else {
            ""
        }
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn manifest_grid(m: &RunManifest) -> Result<PeriodicGrid, ScenarioError> {
    m.config.grid()
}

/// One line per snapshot time present in both runs:
/// `time l2 linf crest_a amp_a crest_b amp_b`.
pub fn compare_runs(run_a: &Path, run_b: &Path, variable: &str) -> Result<String, ScenarioError> {
    let (ma, mb) = (read_manifest(run_a)?, read_manifest(run_b)?);
    let (ga, gb) = (manifest_grid(&ma)?, manifest_grid(&mb)?);
    if ga != gb {
        return Err(ScenarioError::Config("runs use different grids".into()));
    }
    let mut text = String::from("time,l2_diff,linf_diff,crest_a,amp_a,crest_b,amp_b\n");
    let mut matched = 0;
    for ea in ma.entries(variable) {
        let Some(eb) = mb.entries(variable).find(|e| e.time == ea.time) else {
            continue;
        };
        matched += 1;
        let a = read_snapshot(&run_a.join(&ea.file), &ga, variable)?;
        let b = read_snapshot(&run_b.join(&eb.file), &gb, variable)?;
        for (rec, entry, dir) in [(&a, ea, run_a), (&b, eb, run_b)] {
            if rec.checksum != entry.checksum {
                return Err(ScenarioError::Format {
                    path: dir.join(&entry.file),
                    reason: "checksum does not match the manifest".into(),
                });
            }
        }
        let diff = a.field.zip_with(&b.field, |x, y| x - y)?;
        let crest = |f| {
            crest_position(f)
                .map(|c| (c.x_peak, c.amplitude))
                .unwrap_or((f64::NAN, 0.0))
        };
        let (xa, aa) = crest(&a.field);
        let (xb, ab) = crest(&b.field);
        let _ = writeln!(
            text,
            "{},{:.6e},{:.6e},{:.6},{:.6},{:.6},{:.6}",
            ea.time,
            diff.l2_norm(),
            diff.max_abs(),
            xa,
            aa,
            xb,
            ab
        );
    }
    if matched == 0 {
        return Err(ScenarioError::Config(format!(
            "no common {variable} snapshot times between the two runs"
        )));
    }
    Ok(text)
}

/// Writes `xi,x,y,eta` for a conformal snapshot, where `x = x(ξ)` comes
/// from the run's strip-map table. Returns the number of data rows.
pub fn export_run(
    run: &Path,
    time: Option<f64>,
    stride: usize,
    out: &Path,
) -> Result<usize, ScenarioError> {
    if stride == 0 {
        return Err(ScenarioError::Config("stride must be positive".into()));
    }
    let manifest = read_manifest(run)?;
    let grid = manifest_grid(&manifest)?;
    let entries: Vec<_> = manifest.entries("eta_conformal").collect();
    let entry = match time {
        Some(t) => entries.iter().find(|e| e.time == t).copied(),
        None => entries.last().copied(),
    }
    .ok_or_else(|| ScenarioError::Config(format!("no eta_conformal snapshot at {time:?}")))?;
    let rec = read_snapshot(&run.join(&entry.file), &grid, "eta_conformal")?;
    let map_path = run.join(&manifest.strip_map_csv);
    let file = fs::File::open(&map_path).map_err(|e| ScenarioError::io(&map_path, e))?;
    let table = read_map_csv(BufReader::new(file)).map_err(|e| ScenarioError::io(&map_path, e))?;
    if table.xi.len() != grid.n_x() {
        return Err(ScenarioError::Format {
            path: map_path,
            reason: format!("{} rows for {} nodes", table.xi.len(), grid.n_x()),
        });
    }
    let mut text = String::from("xi,x,y,eta\n");
    let mut rows = 0;
    for i in (0..grid.n_x()).step_by(stride) {
        for j in (0..grid.n_y()).step_by(stride) {
            let _ = writeln!(
                text,
                "{:.10e},{:.10e},{:.10e},{:.10e}",
                table.xi[i],
                table.x_surface[i],
                grid.y_node(j),
                rec.field.at(i, j)
            );
            rows += 1;
        }
    }
    write_atomic(out, text.as_bytes())?;
    Ok(rows)
}
