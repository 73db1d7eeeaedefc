//! Batch driver for the localization experiments. Every subcommand reads an
//! optional TOML config, writes CSV into `--out` and prints a short summary.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use phaseloc::channel::{observe, observe_noiseless};
use phaseloc::harness::{
    coverage_cdf, coverage_fraction, peb_map, render_heatmap, resolve_estimator, rmse_map, rmse_vs_power,
    spearman, tradeoff_study, write_cdf_csv, write_power_csv, write_tradeoff_csv, ColorScale, MapResult,
    Method, PebVariant, SelectionSettings, TradeoffMethod, TradeoffSettings,
};
use phaseloc::pipeline::{Estimator, PipelineConfig};
use phaseloc::scenario::{ApLayoutConfig, Config, Pos, Scenario, SeededRng};
use phaseloc::selection::{
    score_polo2, score_strategy1, score_strategy2, write_quad_scores, write_triplet_scores, QuadChoice,
    TripletChoice,
};
use phaseloc::{exec, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "phaseloc", version, about = "Carrier-phase localization experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed (AP layout and noise).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One estimate at a given UE position.
    #[command(alias = "estimate")]
    Simulate {
        /// polo1 (Strategy 2 triplet), polo1-s1, polo2 or egs.
        #[arg(long, default_value = "polo2")]
        method: String,
        /// UE position `x,y` in meters; the config UE when omitted.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        ue: Option<Pos>,
        /// Noise stream index.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[arg(long)]
        noiseless: bool,
    },
    /// RMSE at every cell of a UE grid.
    RmseMap {
        #[arg(long, default_value = "polo2")]
        method: String,
        /// Cell size in meters; config value when omitted.
        #[arg(long)]
        grid_res: Option<f64>,
        /// Noise draws per cell; config value when omitted.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        noiseless: bool,
    },
    /// PEB at every cell of a UE grid.
    PebMap {
        #[arg(long, value_enum, default_value_t = PebKind::Full)]
        variant: PebKind,
        /// AP indices, comma separated; the selected subset when omitted.
        /// Triplets are `reference,s1,s2`; pairs and quads are `a1,b1,a2,b2`.
        #[arg(long, value_delimiter = ',')]
        subset: Option<Vec<usize>>,
        #[arg(long)]
        grid_res: Option<f64>,
    },
    /// RMSE against transmit power at a fixed UE.
    RmseVsPower {
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',', default_value = "polo1,polo2,egs")]
        methods: Vec<String>,
        /// Comma-separated powers in dBm; config values when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        powers: Option<Vec<f64>>,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        ue: Option<Pos>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// AP subset selection.
    SelectAps {
        #[arg(long, value_enum, default_value_t = SelectKind::S2)]
        method: SelectKind,
        /// Also write the score of every candidate subset.
        #[arg(long)]
        scores: bool,
    },
    /// Coverage against complexity over all subsets of a grid of AP sites.
    Tradeoff {
        #[arg(long, value_enum, default_value_t = TradeoffKind::Polo1)]
        method: TradeoffKind,
    },
    /// Heatmap image of a map CSV; PNG or SVG by extension.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = ScaleKind::Log)]
        scale: ScaleKind,
        #[arg(long, default_value_t = 8)]
        cell_px: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PebKind {
    Triplet,
    TwoPairs,
    QuadRef,
    Full,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SelectKind {
    S1,
    S2,
    Polo2,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TradeoffKind {
    Polo1,
    Polo2,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScaleKind {
    Log,
    Linear,
}

fn parse_point(s: &str) -> std::result::Result<Pos, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected x,y but got {s:?}"));
    }
    let x = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let y = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok(Pos::new(x, y))
}

struct Context {
    cfg: Config,
    sc: Scenario,
    solver: PipelineConfig,
    sel: SelectionSettings,
    out: PathBuf,
}

impl Context {
    fn load(common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(p) => Config::from_path(p)?,
            None => Config::default(),
        };
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        let sc = cfg.build_scenario()?;
        let solver = PipelineConfig::from_config(&cfg, &sc)?;
        let sel = SelectionSettings::from_config(&cfg, &sc);
        std::fs::create_dir_all(&common.out)?;
        Ok(Self { cfg, sc, solver, sel, out: common.out.clone() })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn estimator(&self, method: &str) -> Result<(Method, Estimator)> {
        let m = Method::parse(method)?;
        Ok((m, resolve_estimator(m, &self.sc, &self.sel)?))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.common.threads {
        exec::set_threads(t);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::Render { input, output, scale, cell_px } = &cli.cmd {
        return render(input, output, *scale, *cell_px);
    }
    let ctx = Context::load(&cli.common)?;
    match &cli.cmd {
        Command::Simulate { method, ue, trial, noiseless } => simulate(&ctx, method, *ue, *trial, *noiseless),
        Command::RmseMap { method, grid_res, trials, noiseless } => {
            let res = grid_res.unwrap_or(ctx.cfg.harness.map_grid_res_m);
            let trials = trials.unwrap_or(ctx.cfg.harness.map_trials);
            let (m, est) = ctx.estimator(method)?;
            let map = rmse_map(&ctx.sc, &est, res, trials, ctx.cfg.seed, &ctx.solver, *noiseless, m.as_str())?;
            write_map(&ctx, &map, &format!("rmse_map_{}", m.as_str()))?;
            println!(
                "{}: {} cells, coverage below one wavelength {:.4}",
                m.as_str(),
                map.len(),
                coverage_fraction(&map, ctx.sc.wavelength())
            );
            Ok(())
        }
        Command::PebMap { variant, subset, grid_res } => {
            let res = grid_res.unwrap_or(ctx.cfg.harness.map_grid_res_m);
            let v = peb_variant(&ctx, *variant, subset.as_deref())?;
            let map = peb_map(&ctx.sc, v, res)?;
            write_map(&ctx, &map, &format!("peb_map_{}", v.name()))?;
            println!(
                "{}: {} cells, coverage below one wavelength {:.4}",
                v.name(),
                map.len(),
                coverage_fraction(&map, ctx.sc.wavelength())
            );
            Ok(())
        }
        Command::RmseVsPower { methods, powers, ue, trials } => {
            let ue = ue.unwrap_or_else(|| Pos::new(ctx.cfg.harness.ue[0], ctx.cfg.harness.ue[1]));
            let powers = powers.clone().unwrap_or_else(|| ctx.cfg.harness.powers_dbm.clone());
            let trials = trials.unwrap_or(ctx.cfg.harness.curve_trials);
            let mut ests = Vec::new();
            for name in methods {
                let (m, est) = ctx.estimator(name)?;
                ests.push((m.as_str().to_string(), est));
            }
            let rows = rmse_vs_power(&ctx.sc, &ests, &powers, &ue, trials, ctx.cfg.seed, &ctx.solver)?;
            write_power_csv(&rows, ctx.create("rmse_vs_power.csv")?)?;
            for r in &rows {
                println!("{:>9} {:>7.1} dBm  rmse {:.3e} m  peb {:.3e} m", r.method, r.power_dbm, r.rmse_m, r.peb_m);
            }
            Ok(())
        }
        Command::SelectAps { method, scores } => select_aps(&ctx, *method, *scores),
        Command::Tradeoff { method } => tradeoff(&ctx, *method),
        Command::Render { .. } => unreachable!("handled above"),
    }
}

fn simulate(ctx: &Context, method: &str, ue: Option<Pos>, trial: u64, noiseless: bool) -> Result<()> {
    let ue = ue.unwrap_or_else(|| Pos::new(ctx.cfg.harness.ue[0], ctx.cfg.harness.ue[1]));
    let (m, est) = ctx.estimator(method)?;
    let obs = if noiseless {
        observe_noiseless(&ue, &ctx.sc)?
    } else {
        observe(&ue, &ctx.sc, &mut SeededRng::for_task(ctx.cfg.seed, &[trial]))?
    };
    let rep = est.estimate(&obs, &ctx.sc, &ctx.solver)?;
    let header = [
        "method",
        "ue_x_m",
        "ue_y_m",
        "est_x_m",
        "est_y_m",
        "error_m",
        "initial_x_m",
        "initial_y_m",
        "ml_evals",
        "intersection_calls",
        "refined_candidates",
        "fallback",
        "wall_time_s",
    ];
    let row = [
        m.as_str().to_string(),
        ue.x.to_string(),
        ue.y.to_string(),
        rep.estimate.x.to_string(),
        rep.estimate.y.to_string(),
        (rep.estimate - ue).norm().to_string(),
        rep.initial.x.to_string(),
        rep.initial.y.to_string(),
        rep.ml_evals.to_string(),
        rep.intersection_calls.to_string(),
        rep.refined_candidates.to_string(),
        rep.fallback.to_string(),
        rep.wall_time.to_string(),
    ];
    let mut w = csv::Writer::from_writer(ctx.create("estimate.csv")?);
    w.write_record(header)?;
    w.write_record(&row)?;
    w.flush()?;
    let mut stdout = csv::Writer::from_writer(io::stdout().lock());
    stdout.write_record(header)?;
    stdout.write_record(&row)?;
    stdout.flush()?;
    Ok(())
}

fn write_map(ctx: &Context, map: &MapResult, stem: &str) -> Result<()> {
    map.write_csv(ctx.create(&format!("{stem}.csv"))?)?;
    map.write_meta(ctx.create(&format!("{stem}.meta.toml"))?)?;
    let cdf = coverage_cdf(map)?;
    write_cdf_csv(&cdf, &map.value_name, ctx.create(&format!("{stem}_cdf.csv"))?)?;
    Ok(())
}

fn peb_variant(ctx: &Context, kind: PebKind, subset: Option<&[usize]>) -> Result<PebVariant> {
    let sc = &ctx.sc;
    let need = |n: usize| -> Result<Option<&[usize]>> {
        match subset {
            Some(s) if s.len() != n => Err(Error::Config(format!("this variant needs {n} AP indices"))),
            other => Ok(other),
        }
    };
    Ok(match kind {
        PebKind::Full => PebVariant::Full,
        PebKind::Triplet => match need(3)? {
            Some(s) => PebVariant::Triplet(TripletChoice::new(s[0], s[1], s[2])?.indices()),
            None => PebVariant::Triplet(phaseloc::selection::select_strategy2(sc, &ctx.sel.strategy2)?.indices()),
        },
        PebKind::TwoPairs | PebKind::QuadRef => {
            let q = match need(4)? {
                Some(s) => QuadChoice::new((s[0], s[1]), (s[2], s[3]), sc)?,
                None => phaseloc::selection::select_polo2(sc, ctx.sel.polo2_gamma)?,
            };
            if matches!(kind, PebKind::TwoPairs) {
                PebVariant::TwoPairs(q.pairs())
            } else {
                PebVariant::QuadRef(q.indices())
            }
        }
    })
}

fn select_aps(ctx: &Context, kind: SelectKind, with_scores: bool) -> Result<()> {
    let sc = &ctx.sc;
    let (name, est) = match kind {
        SelectKind::S1 => ("s1", Method::Polo1S1),
        SelectKind::S2 => ("s2", Method::Polo1S2),
        SelectKind::Polo2 => ("polo2", Method::Polo2),
    };
    let chosen = resolve_estimator(est, sc, &ctx.sel)?;
    let (aps, coverage) = match chosen {
        Estimator::Polo1(t) => (t.indices().to_vec(), t.coverage),
        Estimator::Polo2(q) => (q.indices().to_vec(), None),
        Estimator::Egs(_) => unreachable!("selection never yields EGS"),
    };
    let aps_str = aps.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-");
    let mut w = csv::Writer::from_writer(ctx.create(&format!("selection_{name}.csv"))?);
    w.write_record(["method", "aps", "coverage"])?;
    w.write_record([name.to_string(), aps_str.clone(), coverage.map(|c| c.to_string()).unwrap_or_default()])?;
    w.flush()?;
    if with_scores {
        let out = ctx.create(&format!("selection_scores_{name}.csv"))?;
        match kind {
            SelectKind::S1 => write_triplet_scores(&score_strategy1(sc), out)?,
            SelectKind::S2 => write_triplet_scores(&score_strategy2(sc, &ctx.sel.strategy2)?, out)?,
            SelectKind::Polo2 => write_quad_scores(&score_polo2(sc, ctx.sel.polo2_gamma)?, out)?,
        }
    }
    let positions: Vec<String> = aps.iter().map(|&i| format!("({:.2}, {:.2})", sc.ap(i).x, sc.ap(i).y)).collect();
    println!("{name}: APs {aps_str} at {}", positions.join(" "));
    Ok(())
}

fn tradeoff(ctx: &Context, kind: TradeoffKind) -> Result<()> {
    let h = &ctx.cfg.harness;
    // the study replaces the configured layout with a grid of candidate sites
    let mut grid_cfg = ctx.cfg.clone();
    grid_cfg.scenario.aps = ApLayoutConfig::Grid { spacing_m: h.ap_site_spacing_m };
    let sc = grid_cfg.build_scenario()?;
    let settings = TradeoffSettings {
        gamma: ctx.sel.polo2_gamma,
        coverage_res: h.tradeoff_grid_res_m,
        ue_res: h.tradeoff_ue_res_m,
        egs_k: ctx.solver.egs_k,
    };
    let (method, name) = match kind {
        TradeoffKind::Polo1 => (TradeoffMethod::Polo1, "polo1"),
        TradeoffKind::Polo2 => (TradeoffMethod::Polo2, "polo2"),
    };
    let study = tradeoff_study(&sc, method, &settings, ctx.cfg.seed, &ctx.solver)?;
    write_tradeoff_csv(&study.points, ctx.create(&format!("tradeoff_{name}.csv"))?)?;
    let cov: Vec<f64> = study.points.iter().map(|p| p.coverage).collect();
    let intra: Vec<f64> = study.points.iter().map(|p| p.mean_intra).collect();
    let evals: Vec<f64> = study.points.iter().map(|p| p.norm_evals).collect();
    let fmt = |r: Option<f64>| r.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
    println!(
        "{name}: {} subsets, {} sites, spearman(coverage, mean intra) {}, spearman(evals, mean intra) {}, max norm evals {:.4}",
        study.points.len(),
        sc.num_aps(),
        fmt(spearman(&cov, &intra)),
        fmt(spearman(&evals, &intra)),
        evals.iter().copied().fold(0.0, f64::max)
    );
    Ok(())
}

fn render(input: &Path, output: &Path, scale: ScaleKind, cell_px: usize) -> Result<()> {
    let map = MapResult::read_csv(File::open(input)?)?;
    let scale = match scale {
        ScaleKind::Log => ColorScale::Log,
        ScaleKind::Linear => ColorScale::Linear,
    };
    render_heatmap(&map, output, scale, cell_px)?;
    writeln!(io::stdout(), "wrote {}", output.display())?;
    Ok(())
}
