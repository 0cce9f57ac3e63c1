//! Pipeline stages and their artifacts.
//!
//! Each stage reads its inputs from the output directory (the event stream
//! may live elsewhere), writes its artifacts there, and records a
//! `<stage>.manifest.json` with the config, input and output digests, counts
//! and condition numbers. Nothing time-dependent is recorded, so a rerun with
//! the same config and inputs reproduces every file byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use impact_core::compare::{compare_diffusion, ComparisonReport};
use impact_core::estimators::{check_identities, estimate_all, EventStats, IdentityReport, LagGrid};
use impact_core::event::{classify_updates, validate};
use impact_core::hdim::{calibrate_hdim, constant_gap_curve, delta_g_star, predict_d_hdim, refine_scale, HdimKernels, RefineOptions};
use impact_core::io::{self, CurveFile};
use impact_core::linalg::SolveOptions;
use impact_core::sim::{generate_synthetic, measure, simulate_hdim, simulate_tim, GapLaw, HdimSimOptions, SignLaw, SyntheticConfig, TypeLaw};
use impact_core::tim::{calibrate_tim, predict_d_tim, CalibrationOptions, DiffusionCurve, NoiseAttach, Provenance, TimKernels};
use impact_core::{EventStream, Tape};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Model, RunConfig};

pub const EVENTS: &str = "events.csv";
pub const CURVES: &str = "curves.csv";
pub const ESTIMATE: &str = "estimate.json";
pub const VALIDATION: &str = "validation.json";
pub const DIFFUSION_EMPIRICAL: &str = "diffusion_empirical.csv";
pub const TIM_KERNELS: &str = "tim_kernels.csv";
pub const KAPPA: &str = "kappa.csv";
pub const DGSTAR: &str = "dgstar.csv";
pub const HDIM_FIT: &str = "hdim_fit.json";
pub const SCALE_FIT: &str = "scale_fit.json";
pub const DIFFUSION_TIM: &str = "diffusion_tim.csv";
pub const DIFFUSION_HDIM: &str = "diffusion_hdim.csv";
pub const DIFFUSION_CONSTANT_GAP: &str = "diffusion_constant_gap.csv";
pub const COMPARISON: &str = "comparison.json";

/// Pipeline stages in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Generate,
    Classify,
    Validate,
    Estimate,
    CalibrateTim,
    CalibrateHdim,
    RefineScale,
    PredictD,
    Simulate,
    Compare,
    Roundtrip,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Generate,
        Stage::Classify,
        Stage::Validate,
        Stage::Estimate,
        Stage::CalibrateTim,
        Stage::CalibrateHdim,
        Stage::RefineScale,
        Stage::PredictD,
        Stage::Simulate,
        Stage::Compare,
        Stage::Roundtrip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Classify => "classify",
            Stage::Validate => "validate",
            Stage::Estimate => "estimate",
            Stage::CalibrateTim => "calibrate-tim",
            Stage::CalibrateHdim => "calibrate-hdim",
            Stage::RefineScale => "refine-scale",
            Stage::PredictD => "predict-d",
            Stage::Simulate => "simulate",
            Stage::Compare => "compare",
            Stage::Roundtrip => "roundtrip",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| anyhow!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

/// Provenance record written next to every stage's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config_digest: String,
    pub config: RunConfig,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub counts: BTreeMap<String, u64>,
    pub condition_numbers: BTreeMap<String, f64>,
    pub identity: Option<IdentityReport>,
    pub notes: BTreeMap<String, Value>,
}

/// Summary of `estimate`, read back by later stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub ell_max: usize,
    pub correlation_max_lag: usize,
    pub stats: EventStats,
    pub identity: IdentityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdimFit {
    pub len: usize,
    pub delta_r: [f64; 3],
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFitSummary {
    pub scale: f64,
    pub objective: f64,
    pub initial_objective: f64,
    pub at_bound: bool,
    pub identifiable: bool,
    pub evaluations: usize,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Runs stages against one config, tracking the files each stage touches.
pub struct Pipeline {
    pub config: RunConfig,
    pub log: Vec<String>,
}

struct StageRecord {
    stage: Stage,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    counts: BTreeMap<String, u64>,
    condition_numbers: BTreeMap<String, f64>,
    identity: Option<IdentityReport>,
    notes: BTreeMap<String, Value>,
}

impl StageRecord {
    fn new(stage: Stage) -> Self {
        StageRecord {
            stage,
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
            condition_numbers: BTreeMap::new(),
            identity: None,
            notes: BTreeMap::new(),
        }
    }

    fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.notes.insert(key.into(), value.into());
    }
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Self {
        Pipeline { config, log: Vec::new() }
    }

    pub fn out(&self, file: &str) -> PathBuf {
        self.config.paths.out_dir.join(file)
    }

    /// Path of an artifact that an earlier stage must have produced.
    fn require(&self, stage: Stage, file: &str, producer: Stage) -> Result<PathBuf> {
        let path = self.out(file);
        if !path.is_file() {
            bail!("{stage} needs {} (run `{producer}` first)", path.display());
        }
        Ok(path)
    }

    fn require_events(&self, stage: Stage) -> Result<PathBuf> {
        let path = self.config.events_path();
        if !path.is_file() {
            bail!(
                "{stage} needs the event stream {} (run `generate` or `classify` first)",
                path.display()
            );
        }
        Ok(path)
    }

    fn display_name(&self, path: &Path) -> String {
        path.strip_prefix(&self.config.paths.out_dir)
            .unwrap_or(path)
            .display()
            .to_string()
    }

    fn finish(&mut self, rec: StageRecord) -> Result<()> {
        let digest = |paths: &[PathBuf]| -> Result<Vec<FileDigest>> {
            paths
                .iter()
                .map(|p| {
                    Ok(FileDigest {
                        file: self.display_name(p),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect()
        };
        let manifest = Manifest {
            stage: rec.stage.name().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_digest: self.config.digest(),
            config: self.config.clone(),
            seed: self.config.seed,
            inputs: digest(&rec.inputs)?,
            outputs: digest(&rec.outputs)?,
            counts: rec.counts,
            condition_numbers: rec.condition_numbers,
            identity: rec.identity,
            notes: rec.notes,
        };
        write_json(&self.out(&format!("{}.manifest.json", rec.stage)), &manifest)?;
        let (verb, files) = if manifest.outputs.is_empty() {
            ("checked", &manifest.inputs)
        } else {
            ("wrote", &manifest.outputs)
        };
        let names: Vec<&str> = files.iter().map(|f| f.file.as_str()).collect();
        self.log.push(format!("{}: {verb} {}", rec.stage, names.join(", ")));
        Ok(())
    }

    fn read_events(&self, path: &Path) -> Result<EventStream> {
        io::read_events(open(path)?, self.config.tick_size).with_context(|| format!("reading {}", path.display()))
    }

    fn read_curves(&self, path: &Path) -> Result<CurveFile> {
        io::read_curves(open(path)?).with_context(|| format!("reading {}", path.display()))
    }

    fn create(&self, path: &Path) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        ))
    }

    fn calibration_options(&self) -> CalibrationOptions {
        CalibrationOptions {
            solve: SolveOptions {
                ridge: self.config.tolerances.ridge,
                max_condition: self.config.tolerances.max_condition,
            },
            allow_absent_types: self.config.allow_absent_types,
        }
    }

    /// Runs the given stages in dependency order.
    pub fn run(&mut self, stages: &[Stage]) -> Result<()> {
        let mut ordered = stages.to_vec();
        ordered.sort();
        ordered.dedup();
        fs::create_dir_all(&self.config.paths.out_dir)
            .with_context(|| format!("creating {}", self.config.paths.out_dir.display()))?;
        for stage in ordered {
            self.run_stage(stage).with_context(|| format!("stage `{stage}` failed"))?;
        }
        Ok(())
    }

    fn run_stage(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Generate => self.generate(),
            Stage::Classify => self.classify(),
            Stage::Validate => self.validate(),
            Stage::Estimate => self.estimate(),
            Stage::CalibrateTim => self.calibrate_tim(),
            Stage::CalibrateHdim => self.calibrate_hdim(),
            Stage::RefineScale => self.refine_scale(),
            Stage::PredictD => self.predict_d(),
            Stage::Simulate => self.simulate(),
            Stage::Compare => self.compare(),
            Stage::Roundtrip => self.roundtrip(),
        }
    }

    fn generate(&mut self) -> Result<()> {
        let mut rec = StageRecord::new(Stage::Generate);
        let g = self
            .config
            .generate
            .clone()
            .ok_or_else(|| anyhow!("generate needs a [generate] section in the config"))?;
        let type_law = match (g.type_transitions, g.type_probabilities) {
            (Some(t), _) => TypeLaw::Markov(t),
            (None, Some(p)) => TypeLaw::Iid(p),
            (None, None) => TypeLaw::Iid([1.0 / 6.0; 6]),
        };
        let gap_law = match &g.kappa {
            Some(path) => {
                rec.inputs.push(path.clone());
                let kernels = io::read_kappa(open(path)?, g.gaps, 1.0)?;
                GapLaw::Dynamic {
                    kernels,
                    noise_sd: g.gap_noise_sd,
                    floor: g.gap_floor,
                }
            }
            None => GapLaw::Constant(g.gaps),
        };
        let syn = generate_synthetic(&SyntheticConfig {
            instrument: self.config.instrument.clone(),
            tick_size: self.config.tick_size,
            n_events: g.n_events,
            n_sessions: g.n_sessions,
            initial_mid: g.initial_mid,
            type_law,
            sign_law: g.sign_gamma.map_or(SignLaw::Iid, |gamma| SignLaw::LongMemory { gamma }),
            gap_law,
            seed: self.config.seed,
        })?;
        let path = self.config.events_path();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        io::write_events(self.create(&path)?, &syn.stream)?;
        rec.outputs.push(path);
        rec.counts.insert("events".into(), syn.stream.n_events() as u64);
        rec.counts.insert("floored_gaps".into(), syn.floored);
        if syn.flooring_flagged() {
            rec.note("warning", format!("{:.2}% of gaps hit the floor", 100.0 * syn.floor_rate()));
        }
        self.finish(rec)
    }

    fn classify(&mut self) -> Result<()> {
        let mut rec = StageRecord::new(Stage::Classify);
        let input = self
            .config
            .paths
            .updates
            .clone()
            .ok_or_else(|| anyhow!("classify needs `paths.updates` (a book-update CSV)"))?;
        let updates = io::read_book_updates(open(&input)?).with_context(|| format!("reading {}", input.display()))?;
        let stream = classify_updates(&updates, &self.config.instrument, self.config.tick_size, self.config.trim)?;
        let path = self.config.events_path();
        io::write_events(self.create(&path)?, &stream)?;
        rec.inputs.push(input);
        rec.outputs.push(path);
        rec.counts.insert("updates".into(), updates.len() as u64);
        rec.counts.insert("events".into(), stream.n_events() as u64);
        rec.counts.insert("sessions".into(), stream.sessions.len() as u64);
        self.finish(rec)
    }

    fn validate(&mut self) -> Result<()> {
        let mut rec = StageRecord::new(Stage::Validate);
        let input = self.require_events(Stage::Validate)?;
        let stream = self.read_events(&input)?;
        let report = validate(&stream);
        let violations: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        let path = self.out(VALIDATION);
        write_json(&path, &json!({ "violations": violations }))?;
        rec.inputs.push(input);
        rec.outputs.push(path);
        rec.counts.insert("events".into(), stream.n_events() as u64);
        rec.counts.insert("violations".into(), violations.len() as u64);
        self.finish(rec)?;
        if !report.is_ok() {
            bail!(
                "{} invariant violations, first: {}",
                violations.len(),
                violations[0]
            );
        }
        Ok(())
    }

    fn estimate(&mut self) -> Result<()> {
        let mut rec = StageRecord::new(Stage::Estimate);
        let input = self.require_events(Stage::Estimate)?;
        let stream = self.read_events(&input)?;
        let tape = Tape::from(&stream);
        let est = estimate_all(&tape, LagGrid::new(self.config.ell_max)?)?;
        let identity = check_identities(&est.response, &est.returns, Some(&est.correlations))?;

        let curves = self.out(CURVES);
        io::write_curves(self.create(&curves)?, &est.stats, &est.correlations, &est.response, &est.returns)?;
        let diffusion = self.out(DIFFUSION_EMPIRICAL);
        let measured = impact_core::sim::measure_diffusion(&tape, self.config.ell_max, Provenance::Empirical)?;
        io::write_diffusion(self.create(&diffusion)?, &measured)?;
        let summary = self.out(ESTIMATE);
        write_json(
            &summary,
            &EstimateSummary {
                ell_max: self.config.ell_max,
                correlation_max_lag: est.correlations.max_lag,
                stats: est.stats.clone(),
                identity: identity.clone(),
            },
        )?;
        rec.inputs.push(input);
        rec.outputs.extend([curves, diffusion, summary]);
        rec.counts.insert("events".into(), stream.n_events() as u64);
        rec.counts.insert("sessions".into(), stream.sessions.len() as u64);
        for pi in impact_core::EventType::ALL {
            rec.counts.insert(format!("type_{pi}"), est.stats.counts[pi.index()]);
        }
        rec.identity = Some(identity.clone());
        self.finish(rec)?;
        if !identity.passes(self.config.tolerances.identity) {
            bail!(
                "estimator identities violated beyond {}: {:?}",
                self.config.tolerances.identity,
                identity
            );
        }
        Ok(())
    }

    fn load_estimate(&self, stage: Stage) -> Result<(PathBuf, EstimateSummary)> {
        let path = self.require(stage, ESTIMATE, Stage::Estimate)?;
        let summary = read_json(&path)?;
        Ok((path, summary))
    }

    fn calibrate_tim(&mut self) -> Result<()> {
        let mut rec = StageRecord::new(Stage::CalibrateTim);
        let input = self.require(Stage::CalibrateTim, CURVES, Stage::Estimate)?;
        let curves = self.read_curves(&input)?;
        let kernels = calibrate_tim(
            &curves.correlations,
            &curves.response,
            self.config.kernel_len(),
            self.calibration_options(),
        )?;
        let path = self.out(TIM_KERNELS);
        io::write_tim_kernels(self.create(&path)?, &kernels)?;
        rec.inputs.push(input);
        rec.outputs.push(path);
        rec.counts.insert("kernel_len".into(), kernels.len as u64);
        rec.condition_numbers.insert("tim".into(), kernels.condition);
        self.finish(rec)
    }

    fn calibrate_hdim(&mut self) -> Result<()> {
        let mut rec = StageRecord::new(Stage::CalibrateHdim);
        let input = self.require(Stage::CalibrateHdim, CURVES, Stage::Estimate)?;
        let (summary_path, summary) = self.load_estimate(Stage::CalibrateHdim)?;
        let curves = self.read_curves(&input)?;
        let kernels = calibrate_hdim(
            &curves.correlations,
            &curves.returns,
            &summary.stats,
            self.config.kernel_len(),
            self.calibration_options(),
        )?;
        let kappa = self.out(KAPPA);
        io::write_kappa(self.create(&kappa)?, &kernels)?;
        let dg = self.out(DGSTAR);
        io::write_dgstar(self.create(&dg)?, &delta_g_star(&kernels, &summary.stats.p))?;
        let fit = self.out(HDIM_FIT);
        write_json(
            &fit,
            &HdimFit {
                len: kernels.len,
                delta_r: kernels.delta_r,
                condition: kernels.condition,
            },
        )?;
        rec.inputs.extend([input, summary_path]);
        rec.outputs.extend([kappa, dg, fit]);
        rec.counts.insert("kernel_len".into(), kernels.len as u64);
        rec.condition_numbers.insert("hdim".into(), kernels.condition);
        self.finish(rec)
    }

    /// Calibrated kernels with the refined scale when `refine-scale` has run.
    fn load_hdim(&self, stage: Stage, rec: &mut StageRecord) -> Result<HdimKernels> {
        let kappa = self.require(stage, KAPPA, Stage::CalibrateHdim)?;
        let fit_path = self.require(stage, HDIM_FIT, Stage::CalibrateHdim)?;
        let fit: HdimFit = read_json(&fit_path)?;
        let scale_path = self.out(SCALE_FIT);
        let scale = if stage != Stage::RefineScale && scale_path.is_file() {
            let s: ScaleFitSummary = read_json(&scale_path)?;
            rec.inputs.push(scale_path);
            s.scale
        } else {
            1.0
        };
        let kernels = io::read_kappa(open(&kappa)?, fit.delta_r, scale)?;
        rec.inputs.extend([kappa, fit_path]);
        rec.note("kappa_scale", scale);
        Ok(kernels)
    }

    fn load_tim(&self, stage: Stage, rec: &mut StageRecord) -> Result<TimKernels> {
        let path = self.require(stage, TIM_KERNELS, Stage::CalibrateTim)?;
        let kernels = io::read_tim_kernels(open(&path)?)?;
        rec.inputs.push(path);
        Ok(kernels)
    }

    fn refine_scale(&mut self) -> Result<()> {
        let mut rec = StageRecord::new(Stage::RefineScale);
        let events = self.require_events(Stage::RefineScale)?;
        let curves_path = self.require(Stage::RefineScale, CURVES, Stage::Estimate)?;
        let kernels = self.load_hdim(Stage::RefineScale, &mut rec)?;
        let tape = Tape::from(&self.read_events(&events)?);
        let target = self.read_curves(&curves_path)?.response;
        let bounds = &self.config.scale;
        let fit = refine_scale(
            &kernels,
            &tape,
            &target,
            RefineOptions {
                lower: bounds.lower,
                upper: bounds.upper,
                tolerance: bounds.tolerance,
                sim: HdimSimOptions {
                    gap_floor: self.config.simulate.gap_floor,
                },
            },
        )?;
        let path = self.out(SCALE_FIT);
        write_json(
            &path,
            &ScaleFitSummary {
                scale: fit.scale,
                objective: fit.objective,
                initial_objective: fit.initial_objective,
                at_bound: fit.at_bound,
                identifiable: fit.identifiable,
                evaluations: fit.evaluations,
            },
        )?;
        if fit.at_bound {
            rec.note("warning", "fitted scale sits on a search bound");
        }
        if !fit.identifiable {
            rec.note("warning", "response does not depend on the kernel scale");
        }
        rec.inputs.extend([events, curves_path]);
        rec.outputs.push(path);
        rec.counts.insert("evaluations".into(), fit.evaluations as u64);
        self.finish(rec)
    }

    fn predict_d(&mut self) -> Result<()> {
        let mut rec = StageRecord::new(Stage::PredictD);
        let curves_path = self.require(Stage::PredictD, CURVES, Stage::Estimate)?;
        let (summary_path, summary) = self.load_estimate(Stage::PredictD)?;
        let corr = self.read_curves(&curves_path)?.correlations;
        let noise = self.config.noise()?;
        let max_lag = self.config.ell_max;
        rec.inputs.extend([curves_path, summary_path]);

        let path = self.out(DIFFUSION_CONSTANT_GAP);
        io::write_diffusion(self.create(&path)?, &constant_gap_curve(&summary.stats, &corr, noise, max_lag)?)?;
        rec.outputs.push(path);
        if self.out(TIM_KERNELS).is_file() {
            let kernels = self.load_tim(Stage::PredictD, &mut rec)?;
            let path = self.out(DIFFUSION_TIM);
            io::write_diffusion(self.create(&path)?, &predict_d_tim(&kernels, &corr, noise, max_lag)?)?;
            rec.outputs.push(path);
        }
        if self.out(KAPPA).is_file() {
            let kernels = self.load_hdim(Stage::PredictD, &mut rec)?;
            let path = self.out(DIFFUSION_HDIM);
            io::write_diffusion(self.create(&path)?, &predict_d_hdim(&kernels, &corr, noise, max_lag)?)?;
            rec.outputs.push(path);
        }
        self.finish(rec)
    }

    fn simulate(&mut self) -> Result<()> {
        let mut rec = StageRecord::new(Stage::Simulate);
        let events = self.require_events(Stage::Simulate)?;
        let noise = self.config.noise()?;
        let model = self.config.simulate.model;
        let path = match model {
            Model::Hdim => {
                let kernels = self.load_hdim(Stage::Simulate, &mut rec)?;
                let tape = Tape::from(&self.read_events(&events)?);
                let opts = HdimSimOptions {
                    gap_floor: self.config.simulate.gap_floor,
                };
                simulate_hdim(&tape, &kernels, noise, self.config.seed, opts)?
            }
            Model::Tim => {
                let kernels = self.load_tim(Stage::Simulate, &mut rec)?;
                let tape = Tape::from(&self.read_events(&events)?);
                simulate_tim(&tape, &kernels, noise, self.config.seed)?
            }
        };
        let name = match model {
            Model::Hdim => "hdim",
            Model::Tim => "tim",
        };
        let measured = measure(&path, self.config.ell_max, 0)?;
        let path_file = self.out(&format!("path_{name}.csv"));
        io::write_path(self.create(&path_file)?, &path)?;
        let diffusion_file = self.out(&format!("diffusion_simulated_{name}.csv"));
        io::write_diffusion(self.create(&diffusion_file)?, &measured.diffusion)?;
        rec.inputs.push(events);
        rec.outputs.extend([path_file, diffusion_file]);
        rec.counts.insert("floored_gaps".into(), path.floored);
        if model == Model::Hdim && noise.attach == NoiseAttach::AllEvents {
            rec.note("noise_attach", "all_events");
        }
        self.finish(rec)
    }

    fn compare(&mut self) -> Result<()> {
        let mut rec = StageRecord::new(Stage::Compare);
        let reference = self.require(Stage::Compare, DIFFUSION_EMPIRICAL, Stage::Estimate)?;
        let measured = io::read_diffusion(open(&reference)?)?;
        let candidates = [
            DIFFUSION_CONSTANT_GAP,
            DIFFUSION_TIM,
            DIFFUSION_HDIM,
            "diffusion_simulated_tim.csv",
            "diffusion_simulated_hdim.csv",
        ];
        let mut reports: BTreeMap<String, ComparisonReport> = BTreeMap::new();
        for name in candidates {
            let path = self.out(name);
            if !path.is_file() {
                continue;
            }
            let curve = io::read_diffusion(open(&path)?)?;
            reports.insert(name.into(), compare_diffusion(&curve, &measured, None)?);
            rec.inputs.push(path);
        }
        if reports.is_empty() {
            bail!("compare needs at least one predicted or simulated diffusion curve (run `predict-d` or `simulate` first)");
        }
        rec.inputs.insert(0, reference);
        let path = self.out(COMPARISON);
        write_json(&path, &reports)?;
        rec.outputs.push(path);
        self.finish(rec)
    }

    /// Re-encodes every artifact present and checks it is byte-identical.
    fn roundtrip(&mut self) -> Result<()> {
        let mut rec = StageRecord::new(Stage::Roundtrip);
        let mut checked = Vec::new();
        let mut check = |path: PathBuf, encoded: Vec<u8>| -> Result<()> {
            let original = fs::read(&path)?;
            if original != encoded {
                bail!("{} does not survive a read/write round trip", path.display());
            }
            checked.push(path);
            Ok(())
        };
        let events = self.config.events_path();
        if events.is_file() {
            let mut buf = Vec::new();
            io::write_events(&mut buf, &self.read_events(&events)?)?;
            check(events, buf)?;
        }
        let curves = self.out(CURVES);
        if curves.is_file() {
            let c = self.read_curves(&curves)?;
            let stats = EventStats {
                counts: c.response.counts,
                p: c.correlations.p,
                delta_r: [None; 3],
            };
            let mut buf = Vec::new();
            io::write_curves(&mut buf, &stats, &c.correlations, &c.response, &c.returns)?;
            check(curves, buf)?;
        }
        let tim = self.out(TIM_KERNELS);
        if tim.is_file() {
            let mut buf = Vec::new();
            io::write_tim_kernels(&mut buf, &io::read_tim_kernels(open(&tim)?)?)?;
            check(tim, buf)?;
        }
        let kappa = self.out(KAPPA);
        if kappa.is_file() {
            let mut buf = Vec::new();
            io::write_kappa(&mut buf, &io::read_kappa(open(&kappa)?, [1.0; 3], 1.0)?)?;
            check(kappa, buf)?;
        }
        let dg = self.out(DGSTAR);
        if dg.is_file() {
            let mut buf = Vec::new();
            io::write_dgstar(&mut buf, &io::read_dgstar(open(&dg)?)?)?;
            check(dg, buf)?;
        }
        let mut diffusion: Vec<PathBuf> = fs::read_dir(&self.config.paths.out_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("diffusion_") && n.ends_with(".csv"))
            })
            .collect();
        diffusion.sort();
        for path in diffusion {
            let mut buf = Vec::new();
            io::write_diffusion(&mut buf, &io::read_diffusion(open(&path)?)?)?;
            check(path, buf)?;
        }
        if checked.is_empty() {
            bail!("roundtrip found no artifacts in {}", self.config.paths.out_dir.display());
        }
        rec.counts.insert("files".into(), checked.len() as u64);
        rec.inputs = checked;
        self.finish(rec)
    }
}

/// Which kind of curve file a path holds, judged by its header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Diffusion,
    Curves,
}

pub fn sniff(path: &Path) -> Result<CurveKind> {
    let mut header = String::new();
    std::io::BufRead::read_line(&mut open(path)?, &mut header)?;
    match header.trim_end() {
        h if h.starts_with("lag,D,") => Ok(CurveKind::Diffusion),
        h if h.starts_with("kind,pi1,pi2,lag,value") => Ok(CurveKind::Curves),
        h => bail!("{}: unrecognised header `{h}`", path.display()),
    }
}

/// Compares two curve files of the same kind; `b` is the reference.
pub fn compare_files(a: &Path, b: &Path, weights: Option<&[f64]>) -> Result<ComparisonReport> {
    let (ka, kb) = (sniff(a)?, sniff(b)?);
    if ka != kb {
        bail!("cannot compare a {ka:?} file with a {kb:?} file");
    }
    Ok(match ka {
        CurveKind::Diffusion => {
            let load = |p: &Path| -> Result<DiffusionCurve> { Ok(io::read_diffusion(open(p)?)?) };
            compare_diffusion(&load(a)?, &load(b)?, weights)?
        }
        CurveKind::Curves => {
            let load = |p: &Path| -> Result<CurveFile> { Ok(io::read_curves(open(p)?)?) };
            impact_core::compare::compare_response(&load(a)?.response, &load(b)?.response, weights)?
        }
    })
}

/// Reads a single-column weight file, one value per lag.
pub fn read_weights(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, l)| l.parse::<f64>().with_context(|| format!("{}: line {}", path.display(), i + 1)))
        .collect()
}

pub fn write_report(out: &mut impl Write, report: &ComparisonReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, report)?;
    writeln!(out)?;
    Ok(())
}
