//! latgamma: long-range lattice spin energies at surface scaling.
//!
//! Subcommands: energy, coarse-grain, phi, halfspace, polytope,
//! counterexample, field gen, field info. Configuration comes from a flat
//! key-value file (`--config`) with flag overrides; reports land in the
//! output directory as CSV + JSON.

mod config;

use anyhow::{anyhow, bail, Context, Result};
use config::RunConfig;
use latgamma::coarsegrain::{classify, CoarseGrainParams};
use latgamma::energy::{energy_direct, energy_fft, EnergyParams, EnergyValue};
use latgamma::field::SpinField;
use latgamma::gammalab::{
    halfspace_experiment, perforation_counterexample, polytope_experiment, HalfspaceOptions,
};
use latgamma::kernel::{unit_directions, QuadratureSpec};
use latgamma::spin1::{read_spin1_file, write_spin1_file};
use latgamma::util::fmt_g17;
use latgamma::Error as LatError;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

const USAGE: &str = "\
usage: latgamma <command> [flags]

commands:
  energy            evaluate the scaled energy of a SPIN1 field
  coarse-grain      classify a SPIN1 field into phase/mixed cubes (JSON)
  phi               tabulate the surface tension over sampled directions (CSV)
  halfspace         half-space convergence experiment (CSV + JSON)
  polytope          polytope recovery experiment (CSV + JSON)
  counterexample    perforated-coefficient counterexample (CSV + JSON)
  field gen         sample a target set and write a SPIN1 file
  field info        print a SPIN1 header summary

flags:
  --config PATH     flat key-value config file ([section] / key = value)
  --out DIR         output directory (default: out)
  --threads N       worker pool size (0 = available parallelism)
  --seed U64        seed for Monte Carlo diagnostics
  --eps X --eta X   field scaling overrides
  --delta X         coarse-graining threshold
  --nu x,y[,z]      half-space direction
  --offset X        half-space offset
  --N K             perforation period
  --dim D           dimension (1, 2 or 3)
  --kernel SPEC     ball:r | exp:rate:cutoff | table:path
";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Err(e) = run(&args) {
        let code = exit_code(&e);
        eprintln!("error: code={} message={:?}", code, e.to_string());
        std::process::exit(code);
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if let Some(le) = cause.downcast_ref::<LatError>() {
            return match le {
                LatError::FftRounding { .. } => 3,
                LatError::Io(_) => 4,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    2
}

fn run(args: &[String]) -> Result<()> {
    let (positional, flags) = split_flags(args)?;
    if positional.is_empty() {
        bail!("missing command\n{USAGE}");
    }
    let command = match positional[0].as_str() {
        "field" => {
            let sub = positional
                .get(1)
                .ok_or_else(|| anyhow!("'field' needs a subcommand: gen | info"))?;
            format!("field {sub}")
        }
        other => other.to_string(),
    };

    let mut cfg = match flags.get("config") {
        Some(path) => RunConfig::load(Path::new(path))?,
        None => RunConfig::default(),
    };
    apply_flags(&mut cfg, &flags)?;

    let threads = cfg.threads()?;
    if threads > 0 {
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }

    match command.as_str() {
        "energy" => cmd_energy(&cfg),
        "coarse-grain" => cmd_coarse_grain(&cfg),
        "phi" => cmd_phi(&cfg),
        "halfspace" => cmd_halfspace(&cfg),
        "polytope" => cmd_polytope(&cfg),
        "counterexample" => cmd_counterexample(&cfg),
        "field gen" => cmd_field_gen(&cfg),
        "field info" => cmd_field_info(&cfg),
        other => bail!("unknown command '{other}'\n{USAGE}"),
    }
}

fn split_flags(args: &[String]) -> Result<(Vec<String>, BTreeMap<String, String>)> {
    let mut positional = Vec::new();
    let mut flags = BTreeMap::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        if let Some(name) = arg.strip_prefix("--") {
            let (key, value) = match name.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it
                        .next()
                        .ok_or_else(|| anyhow!("flag --{name} needs a value"))?
                        .to_string();
                    (name.to_string(), v)
                }
            };
            flags.insert(key, value);
        } else {
            positional.push(arg.clone());
        }
    }
    Ok((positional, flags))
}

fn apply_flags(cfg: &mut RunConfig, flags: &BTreeMap<String, String>) -> Result<()> {
    for (key, value) in flags {
        match key.as_str() {
            "config" => {}
            "out" => cfg.set("output", "dir", value),
            "threads" => cfg.set("run", "threads", value),
            "seed" => cfg.set("run", "seed", value),
            "eps" => cfg.set("field", "eps", value),
            "eta" => cfg.set("field", "eta", value),
            "delta" => cfg.set("coarsegrain", "delta", value),
            "nu" => cfg.set("target", "nu", value),
            "offset" => cfg.set("target", "offset", value),
            "N" | "n" => cfg.set("target", "n", value),
            "dim" => cfg.set("kernel", "dim", value),
            "field" => cfg.set("field", "path", value),
            "kernel" => {
                let mut parts = value.split(':');
                let kind = parts.next().unwrap_or_default();
                match kind {
                    "ball" => {
                        cfg.set("kernel", "kind", "ball");
                        if let Some(r) = parts.next() {
                            cfg.set("kernel", "radius", r);
                        }
                    }
                    "exp" => {
                        cfg.set("kernel", "kind", "exp");
                        let rate =
                            parts.next().ok_or_else(|| anyhow!("--kernel exp:rate:cutoff"))?;
                        let cutoff =
                            parts.next().ok_or_else(|| anyhow!("--kernel exp:rate:cutoff"))?;
                        cfg.set("kernel", "rate", rate);
                        cfg.set("kernel", "cutoff", cutoff);
                    }
                    "table" => {
                        cfg.set("kernel", "kind", "table");
                        let path = parts.next().ok_or_else(|| anyhow!("--kernel table:path"))?;
                        cfg.set("kernel", "table", path);
                    }
                    other => bail!("unknown kernel spec '{other}'"),
                }
            }
            other => bail!("unknown flag --{other}\n{USAGE}"),
        }
    }
    Ok(())
}

fn ensure_out(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn report_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn evaluate_energy(field: &SpinField, params: &EnergyParams) -> Result<EnergyValue> {
    match energy_fft(field, params) {
        Ok(v) => Ok(v),
        Err(LatError::Unsupported(_)) => Ok(energy_direct(field, params)?),
        Err(e) => Err(e.into()),
    }
}

fn load_field(cfg: &RunConfig) -> Result<SpinField> {
    let path = cfg.require("field", "path")?;
    Ok(read_spin1_file(Path::new(path))?)
}

fn cmd_energy(cfg: &RunConfig) -> Result<()> {
    let field = load_field(cfg)?;
    let kernel = cfg.kernel()?;
    let eta = cfg.require_f64("field", "eta")?;
    let params = EnergyParams::new(field.eps(), eta, kernel)?;
    let ev = evaluate_energy(&field, &params)?;
    report_warnings(&ev.warnings);
    println!("{}", fmt_g17(ev.value));
    Ok(())
}

fn cmd_coarse_grain(cfg: &RunConfig) -> Result<()> {
    let field = load_field(cfg)?;
    let eta = cfg.require_f64("field", "eta")?;
    let (params, warnings) = CoarseGrainParams::new(field.eps(), eta, cfg.delta()?)?;
    report_warnings(&warnings);
    let mut result = classify(&field, &params)?;
    result.warnings = warnings;
    let out = ensure_out(cfg)?;
    let path = out.join("coarsegrain.json");
    std::fs::write(&path, result.to_json())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_phi(cfg: &RunConfig) -> Result<()> {
    let kernel = cfg.kernel()?;
    let count = cfg.get_usize("phi", "directions")?.unwrap_or(16);
    let q = match cfg.get_f64("phi", "h")? {
        Some(h) => QuadratureSpec::new(h, kernel.support_radius()),
        None => QuadratureSpec::default_for(&kernel),
    };
    let d = kernel.dim();
    let mut csv = String::new();
    for a in 0..d {
        csv.push_str(&format!("nu_{a},"));
    }
    csv.push_str("phi\n");
    for nu in unit_directions(d, count) {
        let v = kernel.phi(&nu, &q)?;
        for c in &nu {
            csv.push_str(&fmt_g17(*c));
            csv.push(',');
        }
        csv.push_str(&fmt_g17(v));
        csv.push('\n');
    }
    let out = ensure_out(cfg)?;
    let path = out.join("phi.csv");
    std::fs::write(&path, csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_halfspace(cfg: &RunConfig) -> Result<()> {
    let kernel = cfg.kernel()?;
    let (normal, offset) = cfg.halfspace_direction()?;
    let schedule = cfg.schedule()?;
    let opts = HalfspaceOptions {
        delta: cfg.delta()?,
        offset,
        compute_energy: cfg.get("halfspace", "energy").map_or(true, |v| v != "false"),
        jump_bound: cfg.get("halfspace", "jump_bound").is_some_and(|v| v == "true"),
    };
    let report = halfspace_experiment(&kernel, &normal, &schedule, &opts)?;
    report_warnings(&report.warnings);
    let out = ensure_out(cfg)?;
    let csv = out.join("halfspace.csv");
    let json = out.join("halfspace.json");
    std::fs::write(&csv, report.to_csv())?;
    std::fs::write(&json, report.to_json())?;
    println!("wrote {}", csv.display());
    println!("wrote {}", json.display());
    Ok(())
}

fn cmd_polytope(cfg: &RunConfig) -> Result<()> {
    let kernel = cfg.kernel()?;
    let target = cfg.target()?;
    let schedule = cfg.schedule()?;
    let report = polytope_experiment(&kernel, &target, &schedule)?;
    report_warnings(&report.warnings);
    let out = ensure_out(cfg)?;
    let csv = out.join("polytope.csv");
    let json = out.join("polytope.json");
    std::fs::write(&csv, report.to_csv())?;
    std::fs::write(&json, report.to_json())?;
    println!("wrote {}", csv.display());
    println!("wrote {}", json.display());
    Ok(())
}

fn cmd_counterexample(cfg: &RunConfig) -> Result<()> {
    let n = cfg.get_u64("target", "n")?.unwrap_or(2) as u32;
    let dim = cfg.dim()?;
    let schedule = cfg.schedule()?;
    let report = perforation_counterexample(n, dim, &schedule)?;
    let out = ensure_out(cfg)?;
    let csv = out.join("counterexample.csv");
    let json = out.join("counterexample.json");
    std::fs::write(&csv, report.to_csv())?;
    std::fs::write(&json, report.to_json())?;
    println!("wrote {}", csv.display());
    println!("wrote {}", json.display());
    Ok(())
}

fn cmd_field_gen(cfg: &RunConfig) -> Result<()> {
    let target = cfg.target()?;
    let lattice = cfg.lattice()?;
    let eps = cfg.require_f64("field", "eps")?;
    let extents = cfg.window_extents()?;
    let boundary = cfg.boundary()?;
    let field = SpinField::sample(&target, lattice, eps, &extents, &boundary)?;
    let path = match cfg.get("field", "path") {
        Some(p) => PathBuf::from(p),
        None => ensure_out(cfg)?.join("field.spin"),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_spin1_file(&field, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_field_info(cfg: &RunConfig) -> Result<()> {
    let field = load_field(cfg)?;
    println!("d {}", field.dim());
    println!(
        "window {}",
        field.extents().iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ")
    );
    println!("eps {}", fmt_g17(field.eps()));
    println!("sites {}", field.site_count());
    println!("ones {}", field.ones_count());
    let lat = field.lattice();
    println!("offsets {}", lat.n_offsets());
    if lat.n_offsets() > 1 {
        let seed = cfg.seed()?;
        for oi in 0..lat.n_offsets() {
            let (v, se) = lat.voronoi_volume_estimate(oi, 20_000, seed.wrapping_add(oi as u64))?;
            println!("voronoi_{oi} {} {}", fmt_g17(v), fmt_g17(se));
        }
    }
    Ok(())
}
