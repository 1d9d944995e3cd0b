//! Subcommand implementations.
//!
//! Every stage reads its prerequisites from the run directory (failing with
//! a message that names the producing subcommand), computes over the core
//! pipeline, and writes its artifacts back through the digest manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use prefcal::calibration::{self, HybridConfig};
use prefcal::config::{BackendKind, RunConfig};
use prefcal::dataio::{
    self, Category, ComparisonRecord, DatasetSplit, ImageRecord, PCA_DIM,
};
use prefcal::mining::DimensionSet;
use prefcal::pipeline::{self, CalibrationRecord, PipelineError};
use prefcal::ratings::{self, Rating};
use prefcal::rundir::{layout, RunDir};
use prefcal::scoring::{
    ChatBackend, HttpBackend, PairScores, ScoreCache, Scorer, ScoringError, ScoringMode,
    VlmClient,
};
use prefcal::search::{self, SearchContext, TrialRecord};
use prefcal::synth::{SynthConfig, SyntheticBackend, SyntheticWorld};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
    Backend(String),
}

impl From<PipelineError> for CliError {
    fn from(error: PipelineError) -> Self {
        match error {
            PipelineError::Scoring(ScoringError::Transport { .. })
            | PipelineError::Scoring(ScoringError::Credential(_)) => {
                CliError::Backend(error.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<ScoringError> for CliError {
    fn from(error: ScoringError) -> Self {
        match error {
            ScoringError::Transport { .. } | ScoringError::Credential(_) => {
                CliError::Backend(error.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(error: std::io::Error) -> Self {
        CliError::Runtime(error.to_string())
    }
}

impl From<calibration::CalibrationError> for CliError {
    fn from(error: calibration::CalibrationError) -> Self {
        CliError::Runtime(error.to_string())
    }
}

fn json_error(what: &str, error: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("cannot parse {what}: {error}"))
}

pub struct Context {
    pub config: RunConfig,
    pub run: RunDir,
}

impl Context {
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        let run = RunDir::create(&config.paths.out_dir)?;
        Ok(Self { config, run })
    }

    fn require(&self, relative: &str, producer: &str) -> Result<(), CliError> {
        if self.run.exists(relative) {
            Ok(())
        } else {
            Err(CliError::Runtime(format!(
                "missing artifact '{relative}'; run `prefcal {producer}` first"
            )))
        }
    }

    fn load_embeddings(&self) -> Result<BTreeMap<String, ImageRecord>, CliError> {
        let file = std::fs::File::open(&self.config.paths.embeddings).map_err(|e| {
            CliError::Runtime(format!(
                "cannot open embeddings file {}: {e}",
                self.config.paths.embeddings.display()
            ))
        })?;
        dataio::read_embeddings(file, self.config.paths.embeddings_format)
            .map_err(|e| CliError::Runtime(e.to_string()))
    }

    fn load_split(&self, category: Category) -> Result<DatasetSplit, CliError> {
        let relative = layout::split(category);
        self.require(&relative, "ingest")?;
        serde_json::from_str(&self.run.read_string(&relative)?)
            .map_err(|e| json_error(&relative, e))
    }

    fn load_ratings(&self, category: Category) -> Result<BTreeMap<String, Rating>, CliError> {
        let relative = layout::ratings(category);
        self.require(&relative, "rate")?;
        ratings::ratings_from_csv(&self.run.read_string(&relative)?)
            .map_err(|e| CliError::Runtime(e.to_string()))
    }

    fn load_dimensions(&self, category: Category) -> Result<DimensionSet, CliError> {
        let relative = layout::dimensions(category);
        self.require(&relative, "mine")?;
        serde_json::from_str(&self.run.read_string(&relative)?)
            .map_err(|e| json_error(&relative, e))
    }

    fn load_scores(
        &self,
        category: Category,
    ) -> Result<BTreeMap<String, PairScores>, CliError> {
        let relative = layout::scores(category);
        self.require(&relative, "score")?;
        serde_json::from_str(&self.run.read_string(&relative)?)
            .map_err(|e| json_error(&relative, e))
    }

    fn load_calibration(
        &self,
        category: Category,
    ) -> Result<Vec<CalibrationRecord>, CliError> {
        let relative = layout::calibration_report(category);
        self.require(&relative, "calibrate")?;
        self.run
            .read_string(&relative)?
            .lines()
            .filter(|line| !line.trim().is_empty())
            .map(|line| serde_json::from_str(line).map_err(|e| json_error(&relative, e)))
            .collect()
    }

    fn build_backend(
        &self,
        backend_kind: BackendKind,
    ) -> Result<Arc<dyn ChatBackend>, CliError> {
        match backend_kind {
            BackendKind::Http => {
                let backend = HttpBackend::new(self.config.scoring.http.clone())
                    .map_err(|e| CliError::Backend(e.to_string()))?;
                Ok(Arc::new(backend))
            }
            BackendKind::Mock => {
                let synth_config = match &self.config.scoring.mock_world {
                    Some(path) => {
                        let text = std::fs::read_to_string(path).map_err(|e| {
                            CliError::Runtime(format!(
                                "cannot read mock world {}: {e}",
                                path.display()
                            ))
                        })?;
                        serde_json::from_str(&text)
                            .map_err(|e| json_error("mock world file", e))?
                    }
                    None => SynthConfig {
                        seed: self.config.seed,
                        categories: self.config.categories.clone(),
                        ..Default::default()
                    },
                };
                Ok(Arc::new(SyntheticBackend::from_config(&synth_config)))
            }
        }
    }

    fn build_scorer(
        &self,
        category: Category,
        mode_override: Option<u8>,
        backend_override: Option<BackendKind>,
    ) -> Result<(Scorer, ScoringMode), CliError> {
        let mode_number = mode_override.unwrap_or(self.config.scoring.mode);
        let mode = ScoringMode::from_number(mode_number).ok_or_else(|| {
            CliError::Validation(format!("scoring mode must be 1-4, got {mode_number}"))
        })?;
        let backend =
            self.build_backend(backend_override.unwrap_or(self.config.scoring.backend))?;
        let client = Arc::new(VlmClient::new(
            backend,
            self.config.scoring.retry,
            self.config.scoring.rates,
        ));
        let cache = Arc::new(
            ScoreCache::open(&self.run.path(&layout::score_cache(category)))
                .map_err(|e| CliError::Runtime(e.to_string()))?,
        );
        let mut scorer = Scorer::new(client, cache);
        scorer.temperatures = self.config.scoring.temperatures;
        scorer.sigma_i = self.config.scoring.sigma_i;
        scorer.parallelism = self.config.scoring.parallelism;
        Ok((scorer, mode))
    }

    fn write_json<T: Serialize>(&self, relative: &str, value: &T) -> Result<(), CliError> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| json_error(relative, e))?;
        text.push('\n');
        self.run.write(relative, text.as_bytes())?;
        Ok(())
    }
}

// ---- ingest -----------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct IngestSummary {
    rejected_rows: usize,
    per_category: BTreeMap<Category, CategoryIngest>,
    embedding_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CategoryIngest {
    aggregated: usize,
    filtered: usize,
    sampled: usize,
    reference: usize,
    pool: usize,
}

pub fn cmd_ingest(context: &Context) -> Result<(), CliError> {
    let config = &context.config;
    let file = std::fs::File::open(&config.paths.comparisons).map_err(|e| {
        CliError::Runtime(format!(
            "cannot open comparisons file {}: {e}",
            config.paths.comparisons.display()
        ))
    })?;
    let outcome = dataio::parse_comparisons(file, &config.ingest.schema)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    context
        .run
        .write(&layout::rejects(), outcome.rejects_report().as_bytes())?;

    let embeddings = context.load_embeddings()?;
    let filtered = dataio::consensus_filter(
        &outcome.records,
        config.ingest.min_votes,
        config.ingest.min_agreement,
    );

    let mut summary = IngestSummary {
        rejected_rows: outcome.rejects.len(),
        per_category: BTreeMap::new(),
        embedding_count: embeddings.len(),
    };
    for &category in &config.categories {
        let aggregated = outcome
            .records
            .iter()
            .filter(|r| r.category == category)
            .count();
        let of_category: Vec<ComparisonRecord> = filtered
            .iter()
            .filter(|r| r.category == category)
            .cloned()
            .collect();
        let split = pipeline::split_category(
            &filtered,
            category,
            config.ingest.sample_size,
            config.ingest.reference_ratio,
            config.seed,
        )?;
        for record in split.reference.iter().chain(&split.pool) {
            for id in [&record.left_id, &record.right_id] {
                if !embeddings.contains_key(id) {
                    return Err(CliError::Runtime(format!(
                        "no embedding for image '{id}' referenced by pair {}",
                        record.pair_key()
                    )));
                }
            }
        }
        summary.per_category.insert(
            category,
            CategoryIngest {
                aggregated,
                filtered: of_category.len(),
                sampled: split.reference.len() + split.pool.len(),
                reference: split.reference.len(),
                pool: split.pool.len(),
            },
        );
        context.write_json(&layout::records(category), &of_category)?;
        context.write_json(&layout::split(category), &split)?;
    }
    context.write_json(&layout::ingest_summary(), &summary)?;
    println!(
        "ingest: {} rejected rows, {} embeddings",
        summary.rejected_rows, summary.embedding_count
    );
    for (category, stats) in &summary.per_category {
        println!(
            "  {category}: {} aggregated -> {} filtered -> {} sampled ({} reference / {} pool)",
            stats.aggregated, stats.filtered, stats.sampled, stats.reference, stats.pool
        );
    }
    Ok(())
}

// ---- rate --------------------------------------------------------------------

pub fn cmd_rate(context: &Context) -> Result<(), CliError> {
    for &category in &context.config.categories {
        let split = context.load_split(category)?;
        let ratings = pipeline::rate_reference(&split, &context.config.rating)?;
        context.run.write(
            &layout::ratings(category),
            ratings::ratings_to_csv(&ratings).as_bytes(),
        )?;
        println!("rate: {category}: {} images rated", ratings.len());
    }
    Ok(())
}

// ---- mine --------------------------------------------------------------------

pub fn cmd_mine(context: &Context) -> Result<(), CliError> {
    for &category in &context.config.categories {
        let ratings = context.load_ratings(category)?;
        let embeddings = context.load_embeddings()?;
        let (scorer, _) = context.build_scorer(category, None, None)?;
        let dims = pipeline::mine_dimensions(
            &scorer,
            &ratings,
            &embeddings,
            category,
            &context.config.consensus,
            context.config.scoring.temperatures.miner,
            None,
            "manual",
        )?;
        context.write_json(&layout::dimensions(category), &dims)?;
        println!(
            "mine: {category}: {} dimensions ({})",
            dims.len(),
            dims.names().join(", ")
        );
    }
    Ok(())
}

// ---- score -------------------------------------------------------------------

pub fn cmd_score(
    context: &Context,
    mode_override: Option<u8>,
    backend_override: Option<String>,
) -> Result<(), CliError> {
    let backend_kind = match backend_override {
        Some(text) => Some(text.parse::<BackendKind>().map_err(CliError::Validation)?),
        None => None,
    };
    for &category in &context.config.categories {
        let split = context.load_split(category)?;
        let dims = context.load_dimensions(category)?;
        let (scorer, mode) = context.build_scorer(category, mode_override, backend_kind)?;
        let mut all_records = split.reference.clone();
        all_records.extend(split.pool.clone());
        let scored = pipeline::score_records(&scorer, &all_records, &dims, mode)?;
        let by_key = pipeline::scored_by_key(scored);
        context.write_json(&layout::scores(category), &by_key)?;
        context.run.record_external(&layout::score_cache(category))?;
        let cost = scorer.client.cost_snapshot();
        println!(
            "score: {category}: {} pairs in mode {} ({} calls, {} input + {} output tokens, ${:.4})",
            by_key.len(),
            mode.number(),
            cost.calls,
            cost.input_tokens,
            cost.output_tokens,
            cost.cost_usd
        );
    }
    Ok(())
}

// ---- calibrate ---------------------------------------------------------------

pub fn cmd_calibrate(context: &Context) -> Result<(), CliError> {
    let embeddings = context.load_embeddings()?;
    for &category in &context.config.categories {
        let split = context.load_split(category)?;
        let ratings = context.load_ratings(category)?;
        let scores = context.load_scores(category)?;
        let inputs = pipeline::assemble_reference_inputs(
            &split.reference,
            &scores,
            &embeddings,
            &ratings,
        )?;
        let manifold = calibration::build_reference_manifold(&inputs, &context.config.hybrid)?;
        let records = pipeline::calibrate_pool(
            &split.pool,
            &scores,
            &manifold,
            &embeddings,
            &context.config.hybrid,
        )?;
        let mut report = String::new();
        for record in &records {
            report.push_str(
                &serde_json::to_string(record).map_err(|e| json_error("report line", e))?,
            );
            report.push('\n');
        }
        context
            .run
            .write(&layout::calibration_report(category), report.as_bytes())?;
        if records.len() >= 2 {
            let results: Vec<calibration::CalibrationResult> =
                records.iter().map(|r| r.result.clone()).collect();
            let stats = calibration::weight_statistics(&results)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let dims = context.load_dimensions(category)?;
            let named: Vec<serde_json::Value> = stats
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "dimension": dims
                            .dimensions
                            .get(s.dimension_index)
                            .map(|d| d.name.clone())
                            .unwrap_or_else(|| format!("dim{}", s.dimension_index)),
                        "mean": s.mean,
                        "std": s.std,
                        "cv": s.cv,
                    })
                })
                .collect();
            context.write_json(&layout::weight_stats(category), &named)?;
        } else {
            println!(
                "calibrate: {category}: fewer than 2 calibrated pairs; weight statistics skipped"
            );
        }
        println!(
            "calibrate: {category}: {} of {} pool pairs retained (selection ratio {})",
            records.len(),
            split.pool.len(),
            context.config.hybrid.selection_ratio
        );
    }
    Ok(())
}

// ---- evaluate ------------------------------------------------------------------

pub fn cmd_evaluate(context: &Context) -> Result<(), CliError> {
    let mut calibrated_accuracies = Vec::new();
    let mut raw_accuracies = Vec::new();
    for &category in &context.config.categories {
        let records = context.load_calibration(category)?;
        let scores = context.load_scores(category)?;
        let dims = context.load_dimensions(category)?;
        let evaluation = pipeline::evaluate_records(&records, &scores, &dims)?;
        context.write_json(&layout::evaluation(category), &evaluation)?;
        print!(
            "{}",
            prefcal::evaluation::render_report_table(
                &format!("{category} (calibrated)"),
                &evaluation.calibrated
            )
        );
        print!(
            "{}",
            prefcal::evaluation::render_report_table(
                &format!("{category} (raw intensity winner)"),
                &evaluation.raw
            )
        );
        calibrated_accuracies.push(evaluation.calibrated.acc_excl);
        raw_accuracies.push(evaluation.raw.acc_excl);
    }
    if !calibrated_accuracies.is_empty() {
        let mean = |values: &[f64]| values.iter().sum::<f64>() / values.len() as f64;
        println!(
            "average over {} categories: calibrated acc_excl {:.4}, raw acc_excl {:.4}",
            calibrated_accuracies.len(),
            mean(&calibrated_accuracies),
            mean(&raw_accuracies)
        );
    }
    Ok(())
}

// ---- optimize -------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct AssemblyEntry {
    dimension_file: String,
    accuracy: f64,
    kappa: Option<f64>,
    source_trial: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Assembly {
    best: BTreeMap<Category, AssemblyEntry>,
    unresolved: Vec<Category>,
    stopped_early: bool,
    trials_run: usize,
}

pub fn cmd_optimize(context: &Context, resume: Option<PathBuf>) -> Result<(), CliError> {
    let embeddings = context.load_embeddings()?;
    let mut splits = BTreeMap::new();
    let mut all_ratings = BTreeMap::new();
    for &category in &context.config.categories {
        splits.insert(category, context.load_split(category)?);
        all_ratings.insert(category, context.load_ratings(category)?);
    }
    let (scorer, mode) = context.build_scorer(context.config.categories[0], None, None)?;

    let preload_dir = resume.as_deref().unwrap_or_else(|| context.run.root());
    let preloaded = load_trials(preload_dir)?;
    if !preloaded.is_empty() {
        println!("optimize: resuming after {} recorded trials", preloaded.len());
    }

    let search_context = SearchContext {
        scorer: &scorer,
        categories: context.config.categories.clone(),
        splits: &splits,
        embeddings: &embeddings,
        ratings: &all_ratings,
        consensus: context.config.consensus,
        hybrid: context.config.hybrid,
        mode,
    };
    let outcome = search::optimize(
        &context.config.search,
        &search_context,
        preloaded,
        |record| {
            let relative = layout::trial(record.trial_index);
            if let Err(e) = context.write_json(&relative, record) {
                eprintln!("warning: could not persist {relative}: {e:?}");
            }
            println!(
                "optimize: trial {} ({:?}, tau={:.2}) complete",
                record.trial_index, record.phase, record.tau_gen
            );
        },
    )
    .map_err(|e| match e {
        search::SearchError::Parameter(m) => CliError::Validation(m),
        search::SearchError::State(m) => CliError::Runtime(m),
        search::SearchError::Pipeline(p) => CliError::from(p),
    })?;

    let mut assembly = Assembly {
        best: BTreeMap::new(),
        unresolved: outcome.unresolved.clone(),
        stopped_early: outcome.stopped_early,
        trials_run: outcome.trials.len(),
    };
    for (category, best) in &outcome.best {
        let dimension_file = format!("optimize/best_{category}.json");
        context.write_json(&dimension_file, &best.dimension_set)?;
        assembly.best.insert(
            *category,
            AssemblyEntry {
                dimension_file,
                accuracy: best.accuracy,
                kappa: best.kappa,
                source_trial: best.source_trial,
            },
        );
    }
    context.write_json(&layout::assembly(), &assembly)?;
    println!(
        "optimize: {} trials, stopped_early={}, {} categories resolved",
        outcome.trials.len(),
        outcome.stopped_early,
        outcome.best.len()
    );
    for (category, best) in &outcome.best {
        println!(
            "  {category}: accuracy {:.4} from trial {}",
            best.accuracy, best.source_trial
        );
    }
    for category in &outcome.unresolved {
        println!("  {category}: unresolved (every trial failed)");
    }
    Ok(())
}

fn load_trials(dir: &Path) -> Result<Vec<TrialRecord>, CliError> {
    let optimize_dir = dir.join("optimize");
    if !optimize_dir.exists() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&optimize_dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("trial_") && n.ends_with(".json"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    let mut trials = Vec::with_capacity(paths.len());
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        trials.push(
            serde_json::from_str(&text)
                .map_err(|e| json_error(&path.display().to_string(), e))?,
        );
    }
    Ok(trials)
}

// ---- sweep -----------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct SweepRow {
    value: f64,
    per_category: BTreeMap<Category, f64>,
    average: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepTable {
    parameter: String,
    rows: Vec<SweepRow>,
}

fn apply_parameter(base: &HybridConfig, name: &str, value: f64) -> Result<HybridConfig, CliError> {
    let mut cfg = *base;
    match name {
        "K" | "k" => cfg.k = value as usize,
        "alpha" => cfg.alpha = value,
        "tau_kernel" => cfg.tau_kernel = value,
        "lambda" => cfg.lambda = value,
        "epsilon" => cfg.epsilon = value,
        "theta" => cfg.theta = value,
        "selection_ratio" => cfg.selection_ratio = value,
        other => {
            return Err(CliError::Validation(format!(
                "unknown sweep parameter '{other}' (expected K, alpha, tau_kernel, lambda, \
                 epsilon, theta, or selection_ratio)"
            )))
        }
    }
    let violations = cfg.violations();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Validation(format!(
            "sweep value {value} for {name}: {}",
            violations.join("; ")
        )))
    }
}

pub fn cmd_sweep(context: &Context, parameter: &str, values: &str) -> Result<(), CliError> {
    let parsed: Result<Vec<f64>, _> = values
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect();
    let parsed = parsed
        .map_err(|e| CliError::Validation(format!("cannot parse sweep values: {e}")))?;
    if parsed.is_empty() {
        return Err(CliError::Validation("sweep needs at least one value".to_string()));
    }

    let embeddings = context.load_embeddings()?;
    let mut table = SweepTable {
        parameter: parameter.to_string(),
        rows: Vec::new(),
    };
    for &value in &parsed {
        let hybrid = apply_parameter(&context.config.hybrid, parameter, value)?;
        let mut per_category = BTreeMap::new();
        for &category in &context.config.categories {
            let split = context.load_split(category)?;
            let ratings = context.load_ratings(category)?;
            let scores = context.load_scores(category)?;
            let dims = context.load_dimensions(category)?;
            let inputs = pipeline::assemble_reference_inputs(
                &split.reference,
                &scores,
                &embeddings,
                &ratings,
            )?;
            let manifold = calibration::build_reference_manifold(&inputs, &hybrid)?;
            let records =
                pipeline::calibrate_pool(&split.pool, &scores, &manifold, &embeddings, &hybrid)?;
            let evaluation = pipeline::evaluate_records(&records, &scores, &dims)?;
            per_category.insert(category, evaluation.calibrated.acc_excl);
        }
        let average = per_category.values().sum::<f64>() / per_category.len() as f64;
        table.rows.push(SweepRow {
            value,
            per_category,
            average,
        });
    }
    context.write_json(&layout::sweep(parameter), &table)?;

    // Aligned table: one row per swept value, one column per category.
    let mut header = format!("{:>14}", parameter);
    for category in &context.config.categories {
        header.push_str(&format!(" {:>11}", category.to_string()));
    }
    header.push_str(&format!(" {:>11}", "avg"));
    println!("{header}");
    for row in &table.rows {
        let mut line = format!("{:>14}", row.value);
        for category in &context.config.categories {
            line.push_str(&format!(" {:>11.4}", row.per_category[category]));
        }
        line.push_str(&format!(" {:>11.4}", row.average));
        println!("{line}");
    }
    Ok(())
}

// ---- synth -----------------------------------------------------------------------

pub fn cmd_synth(
    out: &Path,
    pairs: usize,
    images: usize,
    world_seed: u64,
    categories: Option<&str>,
) -> Result<(), CliError> {
    let categories = match categories {
        Some(text) => text
            .split(',')
            .map(|c| c.trim().parse::<Category>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::Validation)?,
        None => vec![Category::Wealthy],
    };
    let synth_config = SynthConfig {
        seed: world_seed,
        categories: categories.clone(),
        images_per_category: images,
        pairs_per_category: pairs,
        ..Default::default()
    };
    let world = SyntheticWorld::generate(&synth_config);
    world.write_fixture(out)?;

    // A ready-to-run config pointing at the fixture (fixture-scale
    // consensus settings; everything else at defaults).
    let mut run_config = RunConfig::standard();
    run_config.categories = categories;
    run_config.seed = world_seed;
    run_config.search.seed = world_seed;
    run_config.paths.comparisons = out.join("comparisons.csv");
    run_config.paths.embeddings = out.join("embeddings.txt");
    run_config.paths.out_dir = out.join("run");
    run_config.consensus = SynthConfig::fixture_consensus();
    run_config.ingest.sample_size = None;
    run_config.scoring.backend = BackendKind::Mock;
    run_config.scoring.mock_world = Some(out.join("world.json"));
    let mut text = serde_json::to_string_pretty(&run_config)
        .map_err(|e| json_error("generated config", e))?;
    text.push('\n');
    std::fs::write(out.join("config.json"), text)?;
    println!(
        "synth: fixture written to {} ({} categories, {pairs} pairs each, {PCA_DIM}-dim prompt \
         compression); config at {}",
        out.display(),
        run_config.categories.len(),
        out.join("config.json").display()
    );
    Ok(())
}
