use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sli_core::energy::{energy, lambda_star, LikelihoodTerms, DEFAULT_NLL_MAX_N};
use sli_core::geometry::PointSet;
use sli_core::inference::{fit, stability_scan, OptimizerConfig, StabilityRow, DEFAULT_STABILITY_MAX_N};
use sli_core::io::{read_dataset, read_points, write_dataset, write_key_values, write_pairs, write_predictions, ModelCard};
use sli_core::metrics::{compute_metrics, MetricReport};
use sli_core::predictor::{GridSpec, PredictionResult, SliModel};
use sli_core::simulate::{make_dataset, DatasetKind, MaternSpec, Noise, Sampling, TestFunctionSpec, GENERATOR_NAME};
use sli_core::{KernelSpec, SliError};

use crate::config::{Config, Triple};
use crate::{Cli, Command, FitArgs, NllArgs, OptimizerArgs, PredictArgs, SimulateArgs, StabilityArgs, ValidateArgs};

/// Options shared by every subcommand after merging flags and config.
struct Common {
    cfg: Config,
    seed: u64,
    kernel: KernelSpec,
    k: Option<usize>,
    out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    if let Some(t) = cfg.pick(cli.threads, "threads")? {
        if t == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let kernel: KernelSpec = match cfg.pick(cli.kernel, "kernel")? {
        Some(name) => name.parse()?,
        None => KernelSpec::default(),
    };
    let common = Common {
        seed: cfg.or(cli.seed, "seed", 0)?,
        k: cfg.pick(cli.k, "k")?,
        out: cfg.pick(cli.out, "out")?,
        kernel,
        cfg,
    };
    match cli.command {
        Command::Simulate(a) => simulate(&common, a),
        Command::Fit(a) => fit_cmd(&common, a),
        Command::Predict(a) => predict(&common, a),
        Command::Validate(a) => validate(&common, a),
        Command::Stability(a) => stability(&common, a),
        Command::NllCheck(a) => nll_check(&common, a),
    }
}

/// Buffered writer to a file, or to stdout for `-`.
fn sink(path: &Path) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn load_dataset(path: &Path) -> Result<(PointSet<f64>, Vec<f64>)> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_dataset(f).with_context(|| format!("reading {}", path.display()))
}

fn load_model(c: &Common, model: Option<PathBuf>, data: Option<PathBuf>) -> Result<(ModelCard<f64>, SliModel<f64>, PathBuf)> {
    let model_path: PathBuf = c.cfg.require(model, "model")?;
    let data_path: PathBuf = c.cfg.require(data, "data")?;
    let card = ModelCard::load(&model_path).with_context(|| format!("reading model card {}", model_path.display()))?;
    let (points, values) = load_dataset(&data_path)?;
    if points.dim() != card.d {
        bail!(
            "dimension mismatch: model card {} has d = {} but {} has d = {}",
            model_path.display(),
            card.d,
            data_path.display(),
            points.dim()
        );
    }
    if points.len() != card.n {
        bail!(
            "model card {} was fitted on N = {} samples but {} has {}",
            model_path.display(),
            card.n,
            data_path.display(),
            points.len()
        );
    }
    let model = SliModel::new(points, values, card.params())?;
    Ok((card, model, data_path))
}

fn optimizer(c: &Common, a: &OptimizerArgs) -> Result<OptimizerConfig<f64>> {
    let base = OptimizerConfig::<f64>::default();
    let cfg = &c.cfg;
    let o = OptimizerConfig {
        init: cfg.or(a.init, "init", Triple(base.init))?.0,
        lower: cfg.or(a.lower, "lower", Triple(base.lower))?.0,
        upper: cfg.or(a.upper, "upper", Triple(base.upper))?.0,
        max_iters: cfg.or(a.max_iters, "max_iters", base.max_iters)?,
        rel_tol: cfg.or(a.rel_tol, "rel_tol", base.rel_tol)?,
        multistart: cfg.or(a.multistart, "multistart", base.multistart)?,
        seed: c.seed,
    };
    o.validate()?;
    Ok(o)
}

fn report_failures(what: &str, r: &PredictionResult<f64>) {
    if !r.failures.is_empty() {
        eprintln!(
            "warning: {} of {} {what} fell back to the sample mean (first: #{} {})",
            r.failures.len(),
            r.len(),
            r.failures[0].0,
            r.failures[0].1
        );
    }
}

fn simulate(c: &Common, a: SimulateArgs) -> Result<()> {
    let cfg = &c.cfg;
    let kind_name: String = cfg.or(a.kind, "kind", "matern".into())?;
    let (kind, n_train, n_valid) = match kind_name.to_ascii_lowercase().as_str() {
        "matern" => {
            let n: usize = cfg.or(a.n, "n", 300)?;
            let n_train: usize = cfg.or(a.train, "train", 60)?;
            if n_train > n {
                bail!("--train {n_train} exceeds the series length {n}");
            }
            let n_valid = cfg.or(a.valid, "valid", n - n_train)?;
            let spec = MaternSpec {
                sigma: cfg.or(a.sigma, "sigma", 10.0)?,
                nu: cfg.or(a.nu, "nu", 3.5)?,
                xi: cfg.or(a.xi, "xi", 10.0)?,
                n,
                seed: c.seed,
            };
            (DatasetKind::Matern(spec), n_train, n_valid)
        }
        "testfn" => (
            DatasetKind::TestFunction(TestFunctionSpec::default()),
            cfg.or(a.train, "train", 1000)?,
            cfg.or(a.valid, "valid", 1000)?,
        ),
        other => bail!("unknown --kind {other:?}; expected matern or testfn"),
    };
    let noise = match (cfg.pick(a.noise, "noise")?, cfg.pick(a.noise_abs, "noise_abs")?) {
        (Some(_), Some(_)) => bail!("give either noise or noise_abs, not both"),
        (Some(r), None) => Noise::RelativeToMax(r),
        (None, Some(s)) => Noise::Absolute(s),
        (None, None) => Noise::None,
    };
    let sampling = Sampling {
        n_train,
        n_valid,
        seed: c.seed,
    };
    let ds = make_dataset(&kind, &sampling, noise)?;
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let train = dir.join("train.csv");
    let valid = dir.join("valid.csv");
    let meta = dir.join("dataset.txt");
    write_dataset(sink(&train)?, &ds.train.points, &ds.train.values)?;
    write_dataset(sink(&valid)?, &ds.valid.points, &ds.valid.values)?;
    write_key_values(sink(&meta)?, &ds.metadata)?;
    println!(
        "wrote {} ({} rows), {} ({} rows), {}",
        train.display(),
        ds.train.values.len(),
        valid.display(),
        ds.valid.values.len(),
        meta.display()
    );
    Ok(())
}

fn fit_cmd(c: &Common, a: FitArgs) -> Result<()> {
    let data: PathBuf = c.cfg.require(a.data, "data")?;
    let (points, values) = load_dataset(&data)?;
    let k = c.k.unwrap_or_else(|| c.kernel.default_k());
    let opt = optimizer(c, &a.opt)?;
    let rep = fit(&values, &points, c.kernel, k, &opt).with_context(|| format!("fitting {}", data.display()))?;
    let p = rep.params_star;
    let card = ModelCard {
        kernel: c.kernel,
        k,
        mu: p.mu,
        alpha1: p.alpha1,
        alpha2: p.alpha2,
        lambda: p.lambda,
        m_x: p.m_x,
        n: points.len(),
        d: points.dim(),
        cost: rep.cost,
        converged: rep.converged,
        seed: c.seed,
        generator: GENERATOR_NAME.into(),
    };
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("model.txt"));
    card.write(sink(&out)?)?;
    if let Some(loo) = c.cfg.pick(a.loo, "loo")? {
        write_pairs(sink(&loo)?, &rep.loo_predictions, &values)?;
    }
    if !rep.converged {
        eprintln!("warning: simplex search stopped at the iteration limit");
    }
    if !rep.flagged.is_empty() {
        eprintln!(
            "warning: {} held-out points used the mean fallback at the optimum",
            rep.flagged.len()
        );
    }
    println!("kernel    {}  k = {k}", c.kernel);
    println!("alpha1    {:.6}", p.alpha1);
    println!("alpha2    {:.6}", p.alpha2);
    println!("mu        {:.6}", p.mu);
    println!("lambda    {:.6e}", p.lambda);
    println!("cost      {:.6e}  ({} evaluations, {} starts)", rep.cost, rep.evaluations, rep.starts.len());
    println!("leave-one-out metrics:\n{}", rep.metrics);
    Ok(())
}

fn predict(c: &Common, a: PredictArgs) -> Result<()> {
    let query_path: Option<PathBuf> = c.cfg.pick(a.query, "query")?;
    let grid: Option<usize> = c.cfg.pick(a.grid, "grid")?;
    let (card, model, _) = load_model(c, a.model, a.data)?;
    let (points, result) = match (query_path, grid) {
        (Some(q), None) => {
            let f = File::open(&q).with_context(|| format!("opening {}", q.display()))?;
            let pts: PointSet<f64> = read_points(f).with_context(|| format!("reading {}", q.display()))?;
            if pts.dim() != card.d {
                bail!(
                    "dimension mismatch: model has d = {} but {} has d = {}",
                    card.d,
                    q.display(),
                    pts.dim()
                );
            }
            let r = model.predict(pts.clone())?;
            (pts, r)
        }
        (None, Some(nodes)) => model.predict_grid(&GridSpec::bounding(&model.samples, nodes)?)?,
        (Some(_), Some(_)) => bail!("give either query or grid, not both"),
        (None, None) => bail!("missing --query or --grid"),
    };
    report_failures("queries", &result);
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("-"));
    write_predictions(sink(&out)?, &points, &result)?;
    Ok(())
}

fn validate(c: &Common, a: ValidateArgs) -> Result<()> {
    let valid_path: PathBuf = c.cfg.require(a.valid, "valid")?;
    let (card, model, _) = load_model(c, a.model, a.data)?;
    let (vp, vv) = load_dataset(&valid_path)?;
    if vp.dim() != card.d {
        bail!(
            "dimension mismatch: model has d = {} but {} has d = {}",
            card.d,
            valid_path.display(),
            vp.dim()
        );
    }
    let r = model.predict(vp)?;
    report_failures("validation points", &r);
    let m = compute_metrics(&r.predictions, &vv)?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("validation.csv"));
    write_pairs(sink(&out)?, &r.predictions, &vv)?;
    println!("{m}");
    println!("{}", MetricReport::<f64>::CSV_HEADER);
    println!("{}", m.csv_row());
    Ok(())
}

fn stability(c: &Common, a: StabilityArgs) -> Result<()> {
    let data: PathBuf = c.cfg.require(a.data, "data")?;
    let (points, values) = load_dataset(&data)?;
    let k = c.k.unwrap_or_else(|| c.kernel.default_k());
    let opt = optimizer(c, &a.opt)?;
    let max_n = c.cfg.or(a.max_n, "max_n", DEFAULT_STABILITY_MAX_N)?;
    let rows = stability_scan(&values, &points, c.kernel, k, &opt, max_n)?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("stability.csv"));
    let mut w = sink(&out)?;
    writeln!(w, "{}", StabilityRow::<f64>::CSV_HEADER)?;
    for r in &rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    w.flush()?;
    let spread = |f: fn(&StabilityRow<f64>) -> f64| {
        let v: Vec<f64> = rows.iter().map(f).collect();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    for (name, f) in [
        ("alpha1", (|r: &StabilityRow<f64>| r.alpha1) as fn(&StabilityRow<f64>) -> f64),
        ("alpha2", |r| r.alpha2),
        ("mu", |r| r.mu),
    ] {
        let (lo, hi) = spread(f);
        println!("{name:<8} [{lo:.6}, {hi:.6}]");
    }
    Ok(())
}

fn nll_check(c: &Common, a: NllArgs) -> Result<()> {
    let (card, model, _) = load_model(c, a.model, a.data)?;
    let max_n = c.cfg.or(a.max_n, "max_n", DEFAULT_NLL_MAX_N)?;
    let n = model.values.len();
    let d = card.d;
    if n > max_n {
        bail!("N = {n} exceeds the likelihood size limit {max_n}");
    }
    let unit = model.params.with_lambda(1.0);
    let h_tilde = energy(&model.values, &unit, &model.weights, d)?.h_tilde;
    let ls = lambda_star(h_tilde, n)?;
    let h = energy(&model.values, &model.params.with_lambda(ls), &model.weights, d)?.h_total;
    let half = n as f64 / 2.0;
    let rel_h = ((h - half) / half).abs();
    println!("lambda*          {ls:.16e}");
    println!("lambda (card)    {:.16e}", card.lambda);
    println!("H(lambda*)       {h:.16e}");
    println!("N/2              {half:.16e}");
    println!("|H - N/2|/(N/2)  {rel_h:.3e}");
    let mut ok = rel_h <= 1e-12;
    match LikelihoodTerms::new(&model.values, &model.params, &model.weights, d, max_n) {
        Ok(terms) => {
            let step = 1e-4 * ls;
            let nll = terms.nll_at(ls);
            let slope = (terms.nll_at(ls + step) - terms.nll_at(ls - step)) / (2.0 * step);
            let rel_slope = (slope / nll).abs();
            println!("NLL(lambda*)     {nll:.16e}");
            println!("profiled NLL     {:.16e}", terms.profiled()?);
            println!("dNLL/dlambda     {slope:.6e}");
            println!("|dNLL|/|NLL|     {rel_slope:.3e}");
            ok &= rel_slope <= 1e-6;
        }
        Err(e @ SliError::NotPermissible { .. }) => {
            eprintln!("warning: likelihood undefined at these parameters: {e}");
        }
        Err(e) => return Err(e.into()),
    }
    if !ok {
        return Err(anyhow!("likelihood check failed"));
    }
    Ok(())
}
