//! Commands behind the `t3s2s` binary. Each writes an output bundle into a directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use t3s2s_core::error::{Error, ErrorClass, Result};
use t3s2s_core::linalg::l2_norm;
use t3s2s_core::pipeline::{
    execute, prepare, topk_probe, PreparedScene, RunReport, SceneSpec, Variant,
};
use t3s2s_core::prompt::{cosine_profile, embed_word, energy_profile, TokenKind};
use t3s2s_core::viz::{csv_field, fmt_f64, profile_csv, render_heatmap};

pub const THREADS_ENV: &str = "T3S2S_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Module {
    Pb,
    Cp,
    Dt,
}

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct Options {
    pub scene: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub disable: Vec<Module>,
}

impl Options {
    pub fn new(scene: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self { scene: scene.into(), out: out.into(), seed: None, disable: Vec::new() }
    }

    pub fn variant(&self) -> Variant {
        Variant {
            pb: !self.disable.contains(&Module::Pb),
            cp: !self.disable.contains(&Module::Cp),
            dt: !self.disable.contains(&Module::Dt),
        }
    }

    fn load_scene(&self) -> Result<SceneSpec> {
        let mut scene = SceneSpec::load(&self.scene)?;
        if let Some(seed) = self.seed {
            scene.seed = seed;
        }
        Ok(scene)
    }
}

/// Files written by a command, relative to its output directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutputBundle {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

impl OutputBundle {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), ..Default::default() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn heatmap(&mut self, name: String, values: &[f64], dims: (usize, usize)) -> Result<()> {
        render_heatmap(values, dims, &self.path(&name))?;
        self.files.push(name);
        Ok(())
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Config => 1,
        ErrorClass::Io => 2,
        ErrorClass::Numeric => 3,
    }
}

/// Energy and cosine profiles of the global, standalone and balanced encodings.
pub fn cmd_analyze_prompt(opts: &Options) -> Result<OutputBundle> {
    let scene = opts.load_scene()?;
    let prepared = prepare(&scene)?;
    let provider = scene.provider()?;
    let tokens = &prepared.tokens;
    let mut bundle = OutputBundle::new(&opts.out)?;
    bundle.warnings = prepared.warnings.iter().map(ToString::to_string).collect();

    let global = energy_profile(&prepared.global);
    bundle.write("energy.csv", profile_csv(global.iter().map(|&(i, v)| (i, tokens.label(i), v))))?;

    let mut single = Vec::new();
    for i in 0..=tokens.i_end() {
        let v = match tokens.kind(i) {
            TokenKind::Word => l2_norm(&embed_word(tokens.label(i), &provider)?),
            _ => l2_norm(prepared.global.row(i)),
        };
        single.push((i, tokens.label(i), v));
    }
    bundle.write("energy_single.csv", profile_csv(single))?;

    let balanced = energy_profile(&prepared.balanced);
    bundle.write(
        "energy_balanced.csv",
        profile_csv(balanced.iter().map(|&(i, v)| (i, tokens.label(i), v))),
    )?;

    let cosine = cosine_profile(&prepared.global, &prepared.keywords, &provider)?;
    bundle.write("cosine.csv", profile_csv(cosine.iter().map(|&(i, v)| (i, tokens.label(i), v))))?;
    Ok(bundle)
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    #[serde(flatten)]
    report: &'a RunReport,
    heatmaps: &'a [String],
}

fn histogram_csv(report: &RunReport) -> String {
    let h = &report.histogram;
    let mut out = String::from("rank,index,token,count\n");
    for (rank, row) in h.counts.iter().enumerate() {
        for (index, count) in row.iter().enumerate() {
            let _ = writeln!(out, "{},{index},{},{count}", rank + 1, csv_field(&h.tokens[index]));
        }
    }
    out
}

fn write_run_bundle(report: &RunReport, dir: &Path, heatmaps: bool) -> Result<OutputBundle> {
    let mut bundle = OutputBundle::new(dir)?;
    bundle.warnings = report.warnings.iter().map(ToString::to_string).collect();
    if heatmaps {
        for a in &report.final_attention {
            for (tok, map) in a.maps.iter().enumerate() {
                let name = format!("attn_L{}_t{}_tok{}.pgm", a.layer, a.step, tok);
                bundle.heatmap(name, map, (a.height, a.width))?;
            }
        }
        for p in &report.previews {
            let stem = format!("L{}_t{}_h{}_c{}", p.layer, p.step, p.head, p.channel);
            bundle.heatmap(format!("hmask_{stem}.pgm"), &p.mask, (p.height, p.width))?;
            bundle.heatmap(format!("feat_{stem}.pgm"), &p.features, (p.height, p.width))?;
        }
    }
    bundle.write("topk_hist.csv", histogram_csv(report))?;
    let heatmap_names: Vec<String> = bundle.files.iter().filter(|f| f.ends_with(".pgm")).cloned().collect();
    let doc = ReportDocument { report, heatmaps: &heatmap_names };
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::NonFinite(format!("report serialization: {e}")))?;
    bundle.write("report.json", json + "\n")?;
    Ok(bundle)
}

pub fn cmd_run(opts: &Options) -> Result<(RunReport, OutputBundle)> {
    let scene = opts.load_scene()?;
    let prepared = prepare(&scene)?;
    let report = execute(&prepared, opts.variant())?;
    let bundle = write_run_bundle(&report, &opts.out, true)?;
    Ok((report, bundle))
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::InvalidScene(vec![format!("{THREADS_ENV}: {raw:?} is not a positive integer")]))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::InvalidScene(vec![format!("thread pool: {e}")]))
}

/// Run every variant of `variants` in parallel; results keep the input order.
pub fn run_variants(prepared: &PreparedScene, variants: &[Variant]) -> Result<Vec<RunReport>> {
    thread_pool()?.install(|| variants.par_iter().map(|v| execute(prepared, *v)).collect())
}

pub fn ablation_csv(reports: &[RunReport]) -> String {
    let mut out = String::from("variant,instance,word,area_ratio,in_mask,out_mask\n");
    for r in reports {
        for s in r.instance_summary() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.variant.name(),
                s.instance,
                csv_field(&s.word),
                fmt_f64(s.area_ratio),
                fmt_f64(s.in_mask),
                fmt_f64(s.out_mask)
            );
        }
    }
    out
}

/// The six-variant ablation; one subdirectory per variant plus `ablation.csv`.
pub fn cmd_ablate(opts: &Options) -> Result<(Vec<RunReport>, OutputBundle)> {
    let scene = opts.load_scene()?;
    let prepared = prepare(&scene)?;
    let variants = Variant::ablation_set();
    let reports = run_variants(&prepared, &variants)?;
    let mut bundle = OutputBundle::new(&opts.out)?;
    bundle.warnings = prepared.warnings.iter().map(ToString::to_string).collect();
    let written: Vec<OutputBundle> = thread_pool()?.install(|| {
        reports
            .par_iter()
            .map(|r| write_run_bundle(r, &opts.out.join(r.variant.name()), false))
            .collect::<Result<_>>()
    })?;
    for (r, sub) in reports.iter().zip(written) {
        bundle.files.extend(sub.files.iter().map(|f| format!("{}/{f}", r.variant.name())));
    }
    bundle.write("ablation.csv", ablation_csv(&reports))?;
    Ok((reports, bundle))
}

pub fn cmd_probe_topk(opts: &Options, ks: &[usize], factor: f64) -> Result<OutputBundle> {
    let scene = opts.load_scene()?;
    let prepared = prepare(&scene)?;
    let table = topk_probe(&prepared, ks, factor, opts.variant())?;
    let mut csv = String::from("instance,word,area_ratio");
    for k in &table.ks {
        let _ = write!(csv, ",k{k}");
    }
    csv.push('\n');
    for row in &table.rows {
        let _ = write!(csv, "{},{},{}", row.instance, csv_field(&row.word), fmt_f64(row.area_ratio));
        for v in &row.responses {
            let _ = write!(csv, ",{}", fmt_f64(*v));
        }
        csv.push('\n');
    }
    let mut bundle = OutputBundle::new(&opts.out)?;
    bundle.warnings = prepared.warnings.iter().map(ToString::to_string).collect();
    bundle.write("probe.csv", csv)?;
    Ok(bundle)
}
