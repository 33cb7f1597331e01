use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::ArgMatches;
use expstable::bbm::{simulate_traced, BbmParams};
use expstable::functional::compare_cumulants;
use expstable::model::{DpppModel, GaussianIntensityPoisson, Model};
use expstable::normalize::{canonicalize, verify_equivalence};
use expstable::rng::{derive_seed, stream};
use expstable::sampler::{intensity_estimate, intensity_scan, RandomMeasureSample};
use expstable::stability::{check_stability, check_superposition_shift, StabilityReport, Verdict};
use expstable::test_function::standard_battery;
use expstable::{DecorationLaw, DecorationSpec, DpppSpec, Execution, Window};
use serde_json::json;

use crate::config::{FileConfig, WindowConfig};
use crate::{Cli, Command, Common, DecorationArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_REJECTED: u8 = 1;

type Res<T> = std::result::Result<T, String>;

fn core<T>(r: expstable::Result<T>) -> Res<T> {
    r.map_err(|e| e.to_string())
}

/// Flag values win when given on the command line or through the
/// environment; otherwise the config field, then the flag default.
struct Merge<'a> {
    m: &'a ArgMatches,
    file: &'a FileConfig,
}

impl Merge<'_> {
    fn given(&self, id: &str) -> bool {
        matches!(
            self.m.value_source(id),
            Some(ValueSource::CommandLine | ValueSource::EnvVariable)
        )
    }

    fn pick<T>(&self, id: &str, flag: T, file: Option<T>) -> T {
        if self.given(id) {
            flag
        } else {
            file.unwrap_or(flag)
        }
    }

    fn seed(&self, flag: Option<u64>) -> Res<u64> {
        flag.or(self.file.seed).ok_or_else(|| {
            "a seed is required: pass --seed or set `seed` in the config".to_string()
        })
    }

    fn window(&self, c: &Common) -> Res<Window> {
        let w = self.file.window.clone().unwrap_or_default();
        let lo = self.pick("window_lo", c.window_lo, w.lo);
        let hi = self.pick("window_hi", c.window_hi, w.hi);
        checked_window("window", lo, hi)
    }

    fn area(&self, lo: f64, hi: f64) -> Res<Window> {
        let a = self.file.area.clone().unwrap_or(WindowConfig::default());
        checked_window(
            "area",
            self.pick("area_lo", lo, a.lo),
            self.pick("area_hi", hi, a.hi),
        )
    }

    fn decoration(&self, d: &DecorationArgs) -> Res<(DecorationSpec, DecorationLaw)> {
        let mut spec = self
            .file
            .decoration
            .clone()
            .unwrap_or_else(|| DecorationSpec::named(&d.decoration));
        if self.given("decoration") {
            spec.name = d.decoration.clone();
            spec.params.clear();
        }
        for (k, v) in &d.params {
            spec.params.insert(k.clone(), *v);
        }
        if let Some(f) = &d.decoration_file {
            spec.file = Some(f.clone());
        }
        let law = core(spec.build()).map_err(|e| format!("decoration: {e}"))?;
        Ok((spec, law))
    }

    fn density(&self, d: &DecorationArgs) -> Res<f64> {
        let c = self.pick("density_coeff", d.density_coeff, self.file.density_coeff);
        if !(c >= 0.0 && c.is_finite()) {
            return Err(format!("invalid `density_coeff` = {c}: must be finite and >= 0"));
        }
        Ok(c)
    }

    fn replicas(&self, flag: u64) -> Res<u64> {
        let n = self.pick("replicas", flag, self.file.replicas);
        if n == 0 {
            return Err("invalid `replicas` = 0: must be at least 1".to_string());
        }
        Ok(n)
    }
}

fn checked_window(field: &str, lo: f64, hi: f64) -> Res<Window> {
    if lo.is_nan() || hi.is_nan() || !(lo < hi) {
        return Err(format!(
            "invalid {field}: `{field}.lo` = {lo} must be below `{field}.hi` = {hi}"
        ));
    }
    if !lo.is_finite() {
        return Err(format!("invalid {field}: `{field}.lo` must be finite"));
    }
    core(Window::new(lo, hi))
}

fn name(c: &Command) -> &'static str {
    match c {
        Command::Ppp { .. } => "ppp",
        Command::Dppp { .. } => "dppp",
        Command::Cumulant { .. } => "cumulant",
        Command::Stability { .. } => "stability",
        Command::Canonicalize { .. } => "canonicalize",
        Command::Bbm { .. } => "bbm",
        Command::Intensity { .. } => "intensity",
    }
}

fn write(dir: &Path, file: &str, contents: &str) -> Res<()> {
    let path = dir.join(file);
    std::fs::write(&path, contents).map_err(|e| format!("cannot write `{}`: {e}", path.display()))
}

fn window_json(w: Window) -> serde_json::Value {
    json!([w.lo(), if w.hi().is_finite() { json!(w.hi()) } else { json!(null) }])
}

fn replicas_csv(samples: &[RandomMeasureSample]) -> String {
    let mut s = String::from("replica,position,mass\n");
    for (i, z) in samples.iter().enumerate() {
        for a in z.config.atoms() {
            writeln!(s, "{i},{},{}", a.position, a.mass).unwrap();
        }
    }
    s
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn summary_line(label: &str, r: &StabilityReport) -> String {
    format!(
        "{label}: {} (min p = {:.3e}, threshold {:.3e}, {} tests, {} replicas)",
        match r.verdict {
            Verdict::Consistent => "consistent",
            Verdict::Rejected => "rejected",
        },
        r.min_pvalue,
        r.level / r.tests as f64,
        r.tests,
        r.replicas
    )
}

fn set_workers(n: Option<usize>) -> Res<()> {
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err("invalid `workers` = 0: must be at least 1".to_string());
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    Ok(())
}

pub fn run(cli: &Cli, matches: &ArgMatches) -> Res<u8> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cmd = name(&cli.command);
    if let Some(s) = &file.subcommand {
        if s != cmd {
            return Err(format!(
                "config field `subcommand` = \"{s}\" does not match `{cmd}`"
            ));
        }
    }
    set_workers(cli.workers)?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let out: PathBuf = match matches.value_source("output_dir") {
        Some(ValueSource::CommandLine) => cli.output_dir.clone(),
        _ => file.output_dir.clone().unwrap_or_else(|| cli.output_dir.clone()),
    };
    std::fs::create_dir_all(&out)
        .map_err(|e| format!("cannot create `{}`: {e}", out.display()))?;
    let sub = matches.subcommand().expect("subcommand required").1;
    let mg = Merge { m: sub, file: &file };

    match &cli.command {
        Command::Ppp { common } => {
            let d = DecorationArgs {
                decoration: "dirac0".into(),
                params: vec![],
                decoration_file: None,
                density_coeff: 0.0,
            };
            sample_cmd(&mg, cmd, common, Some(&d), exec, &out)
        }
        Command::Dppp { common, decoration } => sample_cmd(&mg, cmd, common, Some(decoration), exec, &out),
        Command::Cumulant {
            common,
            decoration,
            mc_inner,
            sigmas,
            agree_fraction,
        } => {
            let seed = mg.seed(common.seed)?;
            let replicas = mg.replicas(common.replicas)?;
            let (dspec, law) = mg.decoration(decoration)?;
            let spec = core(DpppSpec::new(law, mg.density(decoration)?, mg.window(common)?, seed))?;
            let mc_inner = mg.pick("mc_inner", *mc_inner, file.mc_inner);
            let sigmas = mg.pick("sigmas", *sigmas, file.tolerance("sigmas"));
            let frac = mg.pick("agree_fraction", *agree_fraction, file.tolerance("agree_fraction"));
            let rows = core(compare_cumulants(&spec, &standard_battery(), replicas, mc_inner, exec))?;
            let mut csv = String::from("f_id,mc,mc_se,formula,formula_se,z\n");
            let mut agree = 0;
            for r in &rows {
                writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    r.f_id, r.mc.value, r.mc.se, r.formula.value, r.formula.se, r.z
                )
                .unwrap();
                let ok = r.agrees(sigmas);
                agree += ok as usize;
                println!(
                    "cumulant {}: mc {:.5} ± {:.5}, formula {:.5} ± {:.5}, z = {:.2} {}",
                    r.f_id,
                    r.mc.value,
                    r.mc.se,
                    r.formula.value,
                    r.formula.se,
                    r.z,
                    if ok { "agree" } else { "DISAGREE" }
                );
            }
            let pass = agree as f64 >= frac * rows.len() as f64;
            write(&out, "cumulant.csv", &csv)?;
            write(
                &out,
                "cumulant.json",
                &pretty(&json!({
                    "decoration": dspec,
                    "seed": seed,
                    "replicas": replicas,
                    "mc_inner": mc_inner,
                    "sigmas": sigmas,
                    "agree_fraction": frac,
                    "agree": agree,
                    "rows": rows,
                    "consistent": pass,
                })),
            )?;
            println!(
                "cumulant: {agree}/{} within {sigmas} sigma ({})",
                rows.len(),
                if pass { "consistent" } else { "rejected" }
            );
            Ok(if pass { EXIT_OK } else { EXIT_REJECTED })
        }
        Command::Stability {
            common,
            decoration,
            alpha,
            superposition,
            negative_control,
        } => {
            let seed = mg.seed(common.seed)?;
            let replicas = mg.replicas(common.replicas)?;
            let window = mg.window(common)?;
            let alphas = mg.pick("alpha", alpha.clone(), file.alpha.clone());
            let model: Box<dyn Model> = if *negative_control {
                Box::new(GaussianIntensityPoisson)
            } else {
                let (_, law) = mg.decoration(decoration)?;
                Box::new(DpppModel::new(law, mg.density(decoration)?))
            };
            let mut reports = Vec::new();
            for (j, &a) in alphas.iter().enumerate() {
                let r = core(check_stability(
                    &model,
                    window,
                    a,
                    replicas,
                    derive_seed(seed, stream::SECONDARY, j as u64),
                    exec,
                ))?;
                println!("{}", summary_line(&format!("stability alpha={a:.6}"), &r));
                reports.push(r);
            }
            if *superposition {
                let r = core(check_superposition_shift(
                    &model,
                    window,
                    replicas,
                    derive_seed(seed, stream::SECONDARY, alphas.len() as u64),
                    exec,
                ))?;
                println!("{}", summary_line("stability Z+Z' vs T_log2 Z", &r));
                reports.push(r);
            }
            write(&out, "stability.json", &pretty(&reports))?;
            let rejected = reports.iter().any(|r| r.verdict == Verdict::Rejected);
            Ok(if rejected { EXIT_REJECTED } else { EXIT_OK })
        }
        Command::Canonicalize {
            common,
            decoration,
            pool,
            verify,
        } => {
            let seed = mg.seed(common.seed)?;
            let pool = mg.pick("pool", *pool, file.pool);
            let (dspec, law) = mg.decoration(decoration)?;
            let pair = core(canonicalize(&law, pool, seed, exec))?;
            core(pair.write(&out, "canonical", &dspec.name))?;
            println!(
                "canonicalize {}: m = {:.6}, ess = {:.0} of {}",
                dspec.name, pair.m, pair.ess, pool
            );
            if !*verify {
                return Ok(EXIT_OK);
            }
            let replicas = mg.replicas(common.replicas)?;
            let r = core(verify_equivalence(
                &law,
                mg.density(decoration)?,
                &pair,
                mg.window(common)?,
                replicas,
                derive_seed(seed, stream::SECONDARY, 0),
                exec,
            ))?;
            println!("{}", summary_line("canonicalize equivalence", &r));
            write(&out, "canonical_verify.json", &pretty(&r))?;
            Ok(if r.verdict == Verdict::Rejected {
                EXIT_REJECTED
            } else {
                EXIT_OK
            })
        }
        Command::Bbm {
            seed,
            t,
            replicas,
            checkpoints,
        } => {
            let seed = mg.seed(*seed)?;
            let t = mg.pick("t", *t, file.t);
            let replicas = mg.replicas(*replicas)?;
            let checkpoints = mg.pick("checkpoints", checkpoints.clone(), file.checkpoints.clone());
            bbm_cmd(seed, t, replicas, &checkpoints, exec, &out)
        }
        Command::Intensity {
            common,
            decoration,
            area_lo,
            area_hi,
            depths,
        } => {
            let seed = mg.seed(common.seed)?;
            let replicas = mg.replicas(common.replicas)?;
            let (dspec, law) = mg.decoration(decoration)?;
            let area = mg.area(*area_lo, *area_hi)?;
            let depths = mg.pick("depths", depths.clone(), file.depths.clone());
            let spec = core(DpppSpec::new(law, mg.density(decoration)?, mg.window(common)?, seed))?;
            let e = core(intensity_estimate(&spec, area, replicas, exec))?;
            println!(
                "intensity E Z([{}, {})) = {:.5} ± {:.5}{}",
                area.lo(),
                area.hi(),
                e.mean,
                e.half_width,
                e.prediction
                    .map_or(String::new(), |p| format!(" (prediction {p:.5})"))
            );
            let scan = if depths.is_empty() {
                None
            } else {
                let s = core(intensity_scan(&spec, &depths, replicas, exec))?;
                println!(
                    "intensity scan over k = {:?}: normalized {:?}, infinite intensity flagged = {}",
                    depths,
                    s.normalized
                        .iter()
                        .map(|v| format!("{v:.3}"))
                        .collect::<Vec<_>>(),
                    s.infinite_intensity
                );
                Some(s)
            };
            write(
                &out,
                "intensity.json",
                &pretty(&json!({
                    "decoration": dspec,
                    "seed": seed,
                    "replicas": replicas,
                    "estimate": e,
                    "scan": scan,
                })),
            )?;
            Ok(match e.covers_prediction() {
                Some(false) => EXIT_REJECTED,
                _ => EXIT_OK,
            })
        }
    }
}

fn sample_cmd(
    mg: &Merge,
    cmd: &str,
    common: &Common,
    decoration: Option<&DecorationArgs>,
    exec: Execution,
    out: &Path,
) -> Res<u8> {
    let seed = mg.seed(common.seed)?;
    let replicas = mg.replicas(common.replicas)?;
    let window = mg.window(common)?;
    let (dspec, law, c) = match (cmd, decoration) {
        ("dppp", Some(d)) => {
            let (s, l) = mg.decoration(d)?;
            (s, l, mg.density(d)?)
        }
        _ => (DecorationSpec::named("dirac0"), DecorationLaw::dirac0(), 0.0),
    };
    let spec = core(DpppSpec::new(law, c, window, seed))?;
    let samples = core(spec.sample_replicas(replicas, exec))?;
    let atoms: usize = samples.iter().map(|z| z.config.len()).sum();
    let maxima: Vec<f64> = samples
        .iter()
        .filter_map(|z| z.config.atoms().last().map(|a| a.position))
        .collect();
    let mean_max = maxima.iter().sum::<f64>() / maxima.len().max(1) as f64;
    write(out, &format!("{cmd}.csv"), &replicas_csv(&samples))?;
    write(
        out,
        &format!("{cmd}.json"),
        &pretty(&json!({
            "decoration": dspec,
            "density_coeff": c,
            "window": window_json(window),
            "seed": seed,
            "replicas": replicas,
            "mean_atoms": atoms as f64 / replicas as f64,
            "mean_max": mean_max,
        })),
    )?;
    println!(
        "{cmd}: {replicas} replicas on [{}, {}), mean atoms {:.3}, mean max {:.4}",
        window.lo(),
        window.hi(),
        atoms as f64 / replicas as f64,
        mean_max
    );
    Ok(EXIT_OK)
}

fn bbm_cmd(seed: u64, t: f64, replicas: u64, checkpoints: &[f64], exec: Execution, out: &Path) -> Res<u8> {
    let params = BbmParams::new(t, seed);
    core(params.validate())?;
    let runs = core(exec.try_map(replicas, |i| {
        simulate_traced(
            &params.with_seed(derive_seed(seed, stream::PRIMARY, i)),
            checkpoints,
        )
    }))?;
    let mut snap_csv = String::from("replica,position,mass\n");
    let mut trace_csv = String::from("replica,t,w_t,n_t,additive\n");
    let mut paths = Vec::new();
    let mut nonpositive = 0u64;
    for (i, (snap, trace)) in runs.iter().enumerate() {
        for a in snap.particles.atoms() {
            writeln!(snap_csv, "{i},{},{}", a.position, a.mass).unwrap();
        }
        for p in trace {
            writeln!(trace_csv, "{i},{},{},{},{}", p.t, p.w_t, p.n_t, p.additive).unwrap();
        }
        if snap.w_t <= 0.0 {
            nonpositive += 1;
        }
        paths.push(json!({"replica": i, "w_t": snap.w_t, "n_t": snap.count()}));
    }
    let discarded_rate = nonpositive as f64 / replicas as f64;
    write(out, "bbm_snapshots.csv", &snap_csv)?;
    if !checkpoints.is_empty() {
        write(out, "bbm_trace.csv", &trace_csv)?;
    }
    write(
        out,
        "bbm.json",
        &pretty(&json!({
            "t": t,
            "seed": seed,
            "replicas": replicas,
            "paths": paths,
            "discarded_rate": discarded_rate,
        })),
    )?;
    let mean_n = runs.iter().map(|r| r.0.count() as f64).sum::<f64>() / replicas as f64;
    let mean_add = runs.iter().map(|r| r.0.additive()).sum::<f64>() / replicas as f64;
    println!(
        "bbm t={t}: {replicas} paths, mean N_t {mean_n:.3} (e^(t/2) = {:.3}), mean additive {mean_add:.4}, W_t <= 0 rate {discarded_rate:.4}",
        (t / 2.0).exp()
    );
    Ok(EXIT_OK)
}
