use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use extremo::dataset::{read_sites, validate_edges};
use extremo::dependence::{self, MadogramMargin};
use extremo::discordance::{self, Partition};
use extremo::extremogram::{self, TailSide};
use extremo::margins::{self, GevParams};
use extremo::sim::{self, SimKind, SimSpec};
use extremo::taildep::{self, TailDepMode};
use extremo::{bin_pairs, load_dataset, CopulaModel, CurvePoint, DistanceBins, SpatialDataset};
use serde::{Deserialize, Serialize};

use crate::output::{sink, write_jsonl, write_observations};
use crate::{
    Command, CrossArgs, DataArgs, DiscordanceArgs, ExtremogramArgs, FitMarginsArgs, Kind, MadogramArgs,
    MarginMode, Mode, Scale, Side, SimulateArgs, TaildepArgs, ThetaCopulaArgs, TransformArgs, TransformTarget,
};

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::FitMargins(a) => fit_margins(a),
        Command::Transform(a) => transform(a),
        Command::Madogram(a) => madogram(a, false),
        Command::ExtremalCoeff(a) => madogram(a, true),
        Command::Extremogram(a) => extremogram(a),
        Command::CrossExtremogram(a) => cross_extremogram(a),
        Command::Taildep(a) => taildep(a),
        Command::Discordance(a) => discordance(a),
        Command::Simulate(a) => simulate(a),
        Command::ThetaCopula(a) => theta_copula(a),
    }
}

fn load(data: &DataArgs) -> Result<SpatialDataset> {
    load_paths(&data.sites, &data.obs)
}

fn load_paths(sites: &Path, obs: &Path) -> Result<SpatialDataset> {
    let open = |p: &Path| File::open(p).with_context(|| format!("cannot open {}", p.display()));
    Ok(load_dataset(open(sites)?, open(obs)?)?)
}

fn bins_for(dataset: &SpatialDataset, edges: &[f64]) -> Result<DistanceBins> {
    validate_edges(edges)?;
    let bins = bin_pairs(dataset, edges)?;
    eprintln!("{} site pairs outside the bin range discarded", bins.discarded());
    Ok(bins)
}

fn to_frechet(dataset: &SpatialDataset, mode: MarginMode) -> Result<SpatialDataset> {
    match mode {
        MarginMode::Fit => {
            let fits = margins::fit_margins(dataset)?;
            for (k, f) in fits.iter().enumerate() {
                if f.clamped {
                    log::warn!("site {}: GEV shape clamped to {}", dataset.sites()[k / dataset.n_vars()].id, f.params.xi);
                }
            }
            let params: Vec<GevParams> = fits.iter().map(|f| f.params).collect();
            Ok(margins::to_unit_frechet(dataset, &params)?)
        }
        MarginMode::Frechet => {
            let positive = (0..dataset.n_reps()).all(|r| {
                (0..dataset.n_sites())
                    .all(|s| (0..dataset.n_vars()).all(|v| dataset.get_var(r, s, v).is_none_or(|z| z > 0.0)))
            });
            if !positive {
                bail!("--margins frechet requires strictly positive observations");
            }
            Ok(dataset.clone())
        }
    }
}

#[derive(Serialize)]
struct MarginRecord<'a> {
    site_id: &'a str,
    mu: f64,
    sigma: f64,
    xi: f64,
    clamped: bool,
}

fn fit_margins(a: &FitMarginsArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let fits = margins::fit_margins(&ds)?;
    let records: Vec<MarginRecord> = fits
        .iter()
        .zip(ds.sites())
        .map(|(f, s)| MarginRecord {
            site_id: &s.id,
            mu: f.params.mu,
            sigma: f.params.sigma,
            xi: f.params.xi,
            clamped: f.clamped,
        })
        .collect();
    write_jsonl(&mut *sink(a.out.out.as_deref())?, &records)
}

fn transform(a: &TransformArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let out = match a.to {
        TransformTarget::Pseudo => margins::pseudo_observations(&ds)?,
        target => {
            let z = to_frechet(&ds, MarginMode::Fit)?;
            match target {
                TransformTarget::Frechet => z,
                TransformTarget::Gumbel => margins::frechet_to_gumbel(&z),
                TransformTarget::Weibull => margins::frechet_to_weibull(&z),
                TransformTarget::Uniform => margins::frechet_to_uniform(&z),
                TransformTarget::Pseudo => unreachable!(),
            }
        }
    };
    write_observations(&mut *sink(a.out.out.as_deref())?, &out)
}

fn madogram(a: &MadogramArgs, theta: bool) -> Result<()> {
    let ds = load(&a.data)?;
    let bins = bins_for(&ds, &a.bins)?;
    let (data, margin) = match a.scale {
        Scale::Raw => {
            let g = a.gev.as_deref().ok_or_else(|| anyhow!("--scale raw requires --gev mu,sigma,xi"))?;
            (ds, MadogramMargin::Gev(GevParams::new(g[0], g[1], g[2])?))
        }
        Scale::Gumbel => (margins::frechet_to_gumbel(&to_frechet(&ds, a.margins)?), MadogramMargin::StandardGumbel),
        Scale::Weibull => (margins::frechet_to_weibull(&to_frechet(&ds, a.margins)?), MadogramMargin::StandardWeibull),
    };
    let mut curve = dependence::empirical_madogram(&data, &bins)?;
    if theta {
        curve = dependence::theta_curve(&curve, margin)?;
    }
    write_jsonl(&mut *sink(a.out.out.as_deref())?, &curve.points())
}

fn side(s: Side) -> TailSide {
    match s {
        Side::Upper => TailSide::Upper,
        Side::Lower => TailSide::Lower,
    }
}

fn extremogram(a: &ExtremogramArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let bins = bins_for(&ds, &a.bins)?;
    let curve = extremogram::empirical_extremogram(&ds, &bins, a.q, side(a.side))?;
    write_jsonl(&mut *sink(a.out.out.as_deref())?, &curve.points())
}

#[derive(Serialize)]
struct MatrixRecord {
    component: &'static str,
    #[serde(flatten)]
    point: CurvePoint,
}

fn cross_extremogram(a: &CrossArgs) -> Result<()> {
    let first = load(&a.data)?;
    let second = load_paths(&a.data.sites, &a.obs2)?;
    let ds = SpatialDataset::stack_variables(&first, &second)?;
    let bins = bins_for(&ds, &a.bins)?;
    let m = extremogram::extremogram_matrix(&ds, &bins, a.q)?;
    let mut records = Vec::new();
    for (name, curve) in [("rho11", &m.rho11), ("rho22", &m.rho22), ("rho12", &m.rho12), ("rho21", &m.rho21)] {
        records.extend(curve.points().into_iter().map(|point| MatrixRecord { component: name, point }));
    }
    write_jsonl(&mut *sink(a.out.out.as_deref())?, &records)
}

#[derive(Serialize)]
struct TaildepRecord {
    bin_center: f64,
    n_pairs: usize,
    eta_hat: Option<f64>,
    c_hat: Option<f64>,
    gamma_e: Option<f64>,
    u_h: Option<f64>,
    n_exceed: Option<usize>,
    n_total: Option<usize>,
    clamped: Option<bool>,
    mode: TailDepMode,
}

fn taildep(a: &TaildepArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let bins = bins_for(&ds, &a.bins)?;
    let mode = match a.mode {
        Mode::Standard => TailDepMode::Standard,
        Mode::ExcessRatio => TailDepMode::ExcessRatio,
    };
    let z = to_frechet(&ds, a.margins)?;
    let fits = taildep::taildep_curve(&z, &bins, a.threshold_q, mode)?;
    let records: Vec<TaildepRecord> = fits
        .iter()
        .map(|b| TaildepRecord {
            bin_center: b.bin_center,
            n_pairs: b.n_pairs,
            eta_hat: b.fit.map(|f| f.eta_hat),
            c_hat: b.fit.map(|f| f.c_hat),
            gamma_e: b.fit.map(|f| f.gamma_e()),
            u_h: b.fit.map(|f| f.u_h),
            n_exceed: b.fit.map(|f| f.n_exceed),
            n_total: b.fit.map(|f| f.n_total),
            clamped: b.fit.map(|f| f.clamped),
            mode,
        })
        .collect();
    write_jsonl(&mut *sink(a.out.out.as_deref())?, &records)
}

#[derive(Deserialize)]
struct ThresholdRow {
    site_id: String,
    threshold: f64,
}

fn read_thresholds(path: &Path, dataset: &SpatialDataset) -> Result<Vec<f64>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut by_site = HashMap::new();
    for row in csv::Reader::from_reader(file).deserialize() {
        let row: ThresholdRow = row.with_context(|| format!("malformed threshold table {}", path.display()))?;
        if by_site.insert(row.site_id.clone(), row.threshold).is_some() {
            bail!("duplicate threshold for site '{}'", row.site_id);
        }
    }
    dataset
        .sites()
        .iter()
        .map(|s| by_site.get(&s.id).copied().ok_or_else(|| anyhow!("no threshold for site '{}'", s.id)))
        .collect()
}

#[derive(Serialize)]
struct DiscordanceRecord<'a> {
    subset: &'a [String],
    direction: TailSide,
    thresholds: &'static str,
    degree: f64,
    n_condition: usize,
    n_joint: usize,
}

fn discordance(a: &DiscordanceArgs) -> Result<()> {
    let ds = load(&a.data)?;
    let part = Partition::from_ids(&ds, &a.subset)?;
    let direction = side(a.direction);
    let (thresholds, source) = match &a.thresholds {
        Some(p) => (read_thresholds(p, &ds)?, "file"),
        None => (discordance::site_medians(&ds)?, "median"),
    };
    let d = discordance::discordance_degree(&ds, &part, &thresholds, direction)?;
    let record = DiscordanceRecord {
        subset: &a.subset,
        direction,
        thresholds: source,
        degree: d.degree,
        n_condition: d.n_condition,
        n_joint: d.n_joint,
    };
    write_jsonl(&mut *sink(a.out.out.as_deref())?, &[record])
}

fn require(v: Option<f64>, flag: &str, kind: &str) -> Result<f64> {
    v.ok_or_else(|| anyhow!("--kind {kind} requires --{flag}"))
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let file = File::open(&a.sites).with_context(|| format!("cannot open {}", a.sites.display()))?;
    let sites = read_sites(file)?;
    let kind = match a.kind {
        Kind::Iid => SimKind::IidFrechet,
        Kind::Gaussian => SimKind::GaussianCopulaField { range: require(a.range, "range", "gaussian")? },
        Kind::Smith => {
            let sigma = require(a.sigma, "sigma", "smith")?;
            SimKind::SmithStorm { sigma, radius: a.radius.unwrap_or(sim::DEFAULT_RADIUS_SCALES * sigma) }
        }
        Kind::Logistic => SimKind::LogisticPairs { alpha: require(a.alpha, "alpha", "logistic")? },
    };
    let out = sim::simulate(&SimSpec { kind, n_reps: a.reps, seed: a.seed }, &sites)?;
    write_observations(&mut *sink(a.out.out.as_deref())?, &out.dataset)
}

#[derive(Serialize)]
struct ThetaRecord {
    copula: String,
    theta: f64,
    spread: f64,
    extremal: bool,
    chi_upper: f64,
    chi_lower: f64,
}

fn theta_copula(a: &ThetaCopulaArgs) -> Result<()> {
    let model: CopulaModel = a.copula.parse()?;
    let t = dependence::theta_from_copula(&model, &a.probes)?;
    let up = extremogram::extremogram_copula(&model, TailSide::Upper, &extremogram::default_probes(TailSide::Upper))?;
    let lo = extremogram::extremogram_copula(&model, TailSide::Lower, &extremogram::default_probes(TailSide::Lower))?;
    let record = ThetaRecord {
        copula: model.to_string(),
        theta: t.theta,
        spread: t.spread,
        extremal: t.extremal,
        chi_upper: up.value,
        chi_lower: lo.value,
    };
    write_jsonl(&mut *sink(a.out.out.as_deref())?, &[record])
}
