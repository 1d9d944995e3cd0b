//! Synthetic fixture world and the mock VLM backend that understands it.
//!
//! The world plants a known structure: every image carries a latent trait
//! vector over a fixed catalog of true dimensions plus a region bit; human
//! votes follow region-specific weight vectors over those traits (the two
//! regions weight traits in opposite directions), and visual embeddings
//! embed the traits through a region-specific random projection, so the
//! region is recoverable only from the visual block. The mock backend
//! answers scoring prompts with the planted traits plus seeded noise and
//! answers mining prompts with candidate dimension sets drawn from the
//! true/decoy catalogs.
//!
//! Everything is derived deterministically from one seed, so a world can be
//! reconstructed from its config alone.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Category, ImageRecord, Label, CLIP_DIM};
use crate::mining::Dimension;
use crate::scoring::backend::{BackendError, BackendResponse, ChatBackend};
use crate::scoring::mock::{default_mock_usage, image_ids_from_request};
use crate::scoring::{AgentRole, VlmRequest};
use crate::seed;

/// Names of the planted (informative) dimensions.
pub const TRUE_DIMENSION_NAMES: [&str; 8] = [
    "Facade Upkeep",
    "Greenery Care",
    "Road Surface",
    "Vehicle Condition",
    "Building Age",
    "Utility Condition",
    "Litter Level",
    "Light Coverage",
];

/// Names of uninformative decoy dimensions the miner may propose.
pub const DECOY_DIMENSION_NAMES: [&str; 8] = [
    "Sky Visibility",
    "Signage Clutter",
    "Fence Height",
    "Window Tint",
    "Crosswalk Paint",
    "Antenna Density",
    "Curb Color",
    "Awning Style",
];

/// Region-specific human weighting of the true dimensions. The second
/// region is the exact negation, so a single global linear model carries no
/// signal while local fits recover each regime.
const REGION_WEIGHTS: [f64; 8] = [2.0, 1.5, 1.0, -1.0, -1.5, -2.0, 0.4, -0.4];

/// Generation parameters for one synthetic world.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub categories: Vec<Category>,
    pub images_per_category: usize,
    pub pairs_per_category: usize,
    pub votes_per_pair: u32,
    /// Margin band inside which a vote becomes `equal`.
    pub equal_band: f64,
    /// Standard deviation of per-vote margin noise.
    pub vote_noise: f64,
    /// Standard deviation of mock per-agent score noise.
    pub score_noise: f64,
    /// Probability that one mining call emits the full true dimension set.
    pub p_optimal: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            categories: vec![Category::Wealthy],
            images_per_category: 30,
            pairs_per_category: 40,
            votes_per_pair: 5,
            equal_band: 1.2,
            vote_noise: 1.5,
            score_noise: 0.6,
            p_optimal: 0.35,
        }
    }
}

impl SynthConfig {
    /// Consensus-sampling settings sized for fixture worlds: a 40-pair
    /// world rates too few images to qualify 5 exemplars per group under
    /// the production 75/25 percentile filter, so fixtures widen the bands
    /// and take 3 per group.
    pub fn fixture_consensus() -> crate::mining::ConsensusConfig {
        crate::mining::ConsensusConfig {
            pct_high: 60.0,
            pct_low: 40.0,
            n_per_group: 3,
        }
    }
}

/// One synthetic image with its planted state.
#[derive(Debug, Clone)]
pub struct SynthImage {
    pub id: String,
    pub traits: Vec<f64>,
    pub region: usize,
    pub clip: Vec<f64>,
}

/// Fully generated world.
pub struct SyntheticWorld {
    pub config: SynthConfig,
    images: BTreeMap<String, SynthImage>,
    /// Ordered pair ids per category: (left, right).
    pairs: BTreeMap<Category, Vec<(String, String)>>,
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl SyntheticWorld {
    pub fn generate(config: &SynthConfig) -> Self {
        let mut images = BTreeMap::new();
        let mut pairs = BTreeMap::new();
        for (category_index, &category) in config.categories.iter().enumerate() {
            let ci = category_index as u64;
            // Region-specific projections of the trait space into the
            // visual embedding space.
            let projections: Vec<Vec<Vec<f64>>> = (0..2)
                .map(|region| {
                    let mut rng = seed::derive_rng(
                        config.seed,
                        "synth.projection",
                        &[ci, region as u64],
                    );
                    (0..TRUE_DIMENSION_NAMES.len())
                        .map(|_| {
                            (0..CLIP_DIM)
                                .map(|_| standard_normal(&mut rng) / (CLIP_DIM as f64).sqrt())
                                .collect()
                        })
                        .collect()
                })
                .collect();

            let mut category_images = Vec::new();
            for i in 0..config.images_per_category {
                let mut rng =
                    seed::derive_rng(config.seed, "synth.image", &[ci, i as u64]);
                let traits: Vec<f64> = (0..TRUE_DIMENSION_NAMES.len())
                    .map(|_| rng.random_range(2.0..9.0))
                    .collect();
                let region = i % 2;
                let mut clip = vec![0.0f64; CLIP_DIM];
                for (j, axis) in projections[region].iter().enumerate() {
                    let coord = (traits[j] - 5.5) / 3.0;
                    for (c, a) in clip.iter_mut().zip(axis) {
                        *c += coord * a;
                    }
                }
                for c in clip.iter_mut() {
                    *c += 0.005 * standard_normal(&mut rng);
                }
                let id = format!("{category}_img{i:03}");
                category_images.push(id.clone());
                images.insert(
                    id.clone(),
                    SynthImage {
                        id,
                        traits,
                        region,
                        clip,
                    },
                );
            }

            // Within-region ordered pairs, alternating regions.
            let mut rng = seed::derive_rng(config.seed, "synth.pairs", &[ci]);
            let by_region: [Vec<&String>; 2] = [
                category_images.iter().step_by(2).collect(),
                category_images.iter().skip(1).step_by(2).collect(),
            ];
            let pick = |rng: &mut rand_chacha::ChaCha8Rng, pool: &[&String]| -> String {
                pool[rng.random_range(0..pool.len())].clone()
            };
            let mut category_pairs = Vec::with_capacity(config.pairs_per_category);
            let mut seen = std::collections::BTreeSet::new();
            for p in 0..config.pairs_per_category {
                let pool = &by_region[p % 2];
                loop {
                    let a = pick(&mut rng, pool);
                    let b = pick(&mut rng, pool);
                    if a != b && seen.insert((a.clone(), b.clone())) {
                        category_pairs.push((a, b));
                        break;
                    }
                }
            }
            pairs.insert(category, category_pairs);
        }
        Self {
            config: config.clone(),
            images,
            pairs,
        }
    }

    pub fn image(&self, id: &str) -> Option<&SynthImage> {
        self.images.get(id)
    }

    pub fn pairs(&self, category: Category) -> &[(String, String)] {
        self.pairs.get(&category).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Human preference margin for a pair: the region weight vector applied
    /// to the trait difference.
    pub fn margin(&self, left: &SynthImage, right: &SynthImage) -> f64 {
        let weights = self.region_weights(left.region);
        left.traits
            .iter()
            .zip(&right.traits)
            .zip(weights)
            .map(|((a, b), w)| w * (a - b))
            .sum()
    }

    fn region_weights(&self, region: usize) -> Vec<f64> {
        REGION_WEIGHTS
            .iter()
            .map(|w| if region == 0 { *w } else { -*w })
            .collect()
    }

    /// Ground-truth label for a pair under the planted weights.
    pub fn true_label(&self, left_id: &str, right_id: &str) -> Label {
        let left = &self.images[left_id];
        let right = &self.images[right_id];
        let margin = self.margin(left, right);
        if margin.abs() < self.config.equal_band {
            Label::Equal
        } else if margin > 0.0 {
            Label::Left
        } else {
            Label::Right
        }
    }

    /// Renders the raw vote table (CSV with header) for all categories.
    pub fn comparisons_csv(&self) -> String {
        let mut out = String::from("left_id,right_id,category,choice\n");
        for (&category, pairs) in &self.pairs {
            for (pair_index, (left_id, right_id)) in pairs.iter().enumerate() {
                let left = &self.images[left_id];
                let right = &self.images[right_id];
                let margin = self.margin(left, right);
                let mut rng = seed::derive_rng(
                    self.config.seed,
                    "synth.votes",
                    &[category as u64, pair_index as u64],
                );
                for _ in 0..self.config.votes_per_pair {
                    let noisy = margin + self.config.vote_noise * standard_normal(&mut rng);
                    let choice = if noisy.abs() < self.config.equal_band {
                        "equal"
                    } else if noisy > 0.0 {
                        "left"
                    } else {
                        "right"
                    };
                    out.push_str(&format!("{left_id},{right_id},{category},{choice}\n"));
                }
            }
        }
        out
    }

    /// All image records with their embeddings.
    pub fn image_records(&self) -> BTreeMap<String, ImageRecord> {
        self.images
            .iter()
            .map(|(id, image)| {
                (
                    id.clone(),
                    ImageRecord {
                        image_id: id.clone(),
                        clip_embedding: image.clip.clone(),
                        pca_embedding: None,
                    },
                )
            })
            .collect()
    }

    /// The planted optimal dimension set for any category.
    pub fn true_dimensions() -> Vec<Dimension> {
        TRUE_DIMENSION_NAMES
            .iter()
            .map(|name| Dimension {
                name: name.to_string(),
                description: format!("Planted trait: {name}"),
                high_indicator: "clearly well kept".to_string(),
                low_indicator: "clearly degraded".to_string(),
            })
            .collect()
    }

    fn decoy_dimensions() -> Vec<Dimension> {
        DECOY_DIMENSION_NAMES
            .iter()
            .map(|name| Dimension {
                name: name.to_string(),
                description: format!("Decoy attribute: {name}"),
                high_indicator: "prominent".to_string(),
                low_indicator: "absent".to_string(),
            })
            .collect()
    }

    /// Writes the fixture files (vote table, embeddings, world config) into
    /// a directory.
    pub fn write_fixture(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("comparisons.csv"), self.comparisons_csv())?;
        let mut embeddings = Vec::new();
        crate::dataio::write_embeddings(
            &mut embeddings,
            &self.image_records(),
            crate::dataio::EmbeddingFormat::Text,
        )
        .map_err(|e| std::io::Error::other(e.to_string()))?;
        std::fs::write(dir.join("embeddings.txt"), embeddings)?;
        let mut world = std::fs::File::create(dir.join("world.json"))?;
        writeln!(
            world,
            "{}",
            serde_json::to_string_pretty(&self.config).expect("config serializes")
        )?;
        Ok(())
    }
}

/// Mock backend that answers from a [`SyntheticWorld`].
///
/// Responses are derived from a digest of the request (prompt, temperature,
/// role, images), so identical requests replay identically regardless of
/// call order or thread interleaving.
pub struct SyntheticBackend {
    world: SyntheticWorld,
    calls: AtomicU64,
}

impl SyntheticBackend {
    pub fn new(world: SyntheticWorld) -> Self {
        Self {
            world,
            calls: AtomicU64::new(0),
        }
    }

    pub fn from_config(config: &SynthConfig) -> Self {
        Self::new(SyntheticWorld::generate(config))
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn request_fingerprint(&self, request: &VlmRequest) -> u64 {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(request.prompt.as_bytes());
        hasher.update(request.temperature.to_le_bytes());
        hasher.update([request.role_tag as u8]);
        for image in &request.images {
            hasher.update(image.as_url().as_bytes());
        }
        u64::from_le_bytes(hasher.finalize()[..8].try_into().expect("32-byte digest"))
    }

    /// Noisy per-agent read of one image on one dimension. True dimensions
    /// reveal the planted trait; decoys return uninformative noise around
    /// the midpoint.
    fn agent_score(&self, image_id: &str, dimension: &str, role: AgentRole) -> f64 {
        let Some(image) = self.world.image(image_id) else {
            return 5.0;
        };
        let role_index = match role {
            AgentRole::Observer => 0u64,
            AgentRole::Debater => 1,
            AgentRole::Judge => 2,
            _ => 3,
        };
        let dim_hash = seed::derive_seed(0, dimension, &[]);
        let id_hash = seed::derive_seed(0, image_id, &[]);
        let mut rng = seed::derive_rng(
            self.world.config.seed,
            "synth.score",
            &[id_hash, dim_hash, role_index],
        );
        let noise = self.world.config.score_noise * standard_normal(&mut rng);
        let base = TRUE_DIMENSION_NAMES
            .iter()
            .position(|&n| n == dimension)
            .map(|j| image.traits[j])
            .unwrap_or_else(|| 5.5 + standard_normal(&mut rng));
        (base + noise).clamp(1.0, 10.0)
    }

    /// Final per-dimension score: single-shot roles use their own read,
    /// the judge averages the three chain reads.
    fn final_score(&self, image_id: &str, dimension: &str, role: AgentRole) -> f64 {
        match role {
            AgentRole::Judge => {
                let sum: f64 = [AgentRole::Observer, AgentRole::Debater, AgentRole::Judge]
                    .iter()
                    .map(|&r| self.agent_score(image_id, dimension, r))
                    .sum();
                sum / 3.0
            }
            other => self.agent_score(image_id, dimension, other),
        }
    }

    fn score_reply(&self, request: &VlmRequest, dims: &[String]) -> Result<String, BackendError> {
        let ids = image_ids_from_request(request);
        let render_map = |id: &str, role: AgentRole| -> String {
            let entries: Vec<String> = dims
                .iter()
                .map(|d| format!("\"{d}\":{:.6}", self.final_score(id, d, role)))
                .collect();
            format!("{{{}}}", entries.join(","))
        };
        match ids.len() {
            1 => Ok(format!(
                "{{\"image_scores\":{}}}",
                render_map(&ids[0], request.role_tag)
            )),
            2 => Ok(format!(
                "{{\"image_a_scores\":{},\"image_b_scores\":{},\"winner\":\"equal\"}}",
                render_map(&ids[0], request.role_tag),
                render_map(&ids[1], request.role_tag)
            )),
            n => Err(BackendError::Content(format!(
                "synthetic backend expects 1 or 2 images, got {n}"
            ))),
        }
    }

    /// Candidate dimension set for mining and mutation prompts.
    fn mining_reply(&self, request: &VlmRequest) -> String {
        let fingerprint = self.request_fingerprint(request);
        let mut rng = seed::derive_rng(self.world.config.seed, "synth.mine", &[fingerprint]);
        let truths = SyntheticWorld::true_dimensions();
        let decoys = SyntheticWorld::decoy_dimensions();

        // Mutation prompts ask for a fixed number of replacements and list
        // the kept dimensions; avoid reusing their names.
        if let Some(count) = parse_replacement_count(&request.prompt) {
            let kept = kept_names_from_prompt(&request.prompt);
            let mut pool: Vec<Dimension> = truths
                .into_iter()
                .chain(decoys)
                .filter(|d| !kept.iter().any(|k| k.eq_ignore_ascii_case(&d.name)))
                .collect();
            pool.shuffle(&mut rng);
            pool.truncate(count);
            return dimensions_json(&pool);
        }

        if rng.random_range(0.0..1.0) < self.world.config.p_optimal {
            return dimensions_json(&truths);
        }
        // Mixed candidate: some true dimensions, some decoys, 5-8 total.
        let total = rng.random_range(5..=8usize);
        let n_true = rng.random_range(2..=total.min(6));
        let mut chosen: Vec<Dimension> = Vec::new();
        let mut true_pool = truths;
        true_pool.shuffle(&mut rng);
        chosen.extend(true_pool.into_iter().take(n_true));
        let mut decoy_pool = decoys;
        decoy_pool.shuffle(&mut rng);
        chosen.extend(decoy_pool.into_iter().take(total - n_true));
        chosen.shuffle(&mut rng);
        dimensions_json(&chosen)
    }
}

fn dimensions_json(dimensions: &[Dimension]) -> String {
    let entries: Vec<String> = dimensions
        .iter()
        .map(|d| {
            format!(
                "{{\"name\":{},\"description\":{},\"high_indicator\":{},\"low_indicator\":{}}}",
                serde_json::to_string(&d.name).expect("string"),
                serde_json::to_string(&d.description).expect("string"),
                serde_json::to_string(&d.high_indicator).expect("string"),
                serde_json::to_string(&d.low_indicator).expect("string"),
            )
        })
        .collect();
    format!("{{\"dimensions\":[{}]}}", entries.join(","))
}

fn parse_replacement_count(prompt: &str) -> Option<usize> {
    let marker = "Propose exactly ";
    let start = prompt.find(marker)? + marker.len();
    prompt[start..]
        .split_whitespace()
        .next()?
        .parse::<usize>()
        .ok()
}

fn kept_names_from_prompt(prompt: &str) -> Vec<String> {
    prompt
        .lines()
        .filter_map(|line| {
            let rest = line.strip_prefix("- ")?;
            let colon = rest.find(':')?;
            Some(rest[..colon].to_string())
        })
        .collect()
}

impl ChatBackend for SyntheticBackend {
    fn complete(&self, request: &VlmRequest) -> Result<BackendResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let dims = crate::scoring::mock::dimension_names_from_prompt(&request.prompt);
        let text = match request.role_tag {
            AgentRole::Miner => self.mining_reply(request),
            AgentRole::Observer => {
                let body: Vec<String> = dims
                    .iter()
                    .map(|d| format!("\"{d}\":{{\"image_a\":\"seen\",\"image_b\":\"seen\"}}"))
                    .collect();
                format!("{{\"observations\":{{{}}}}}", body.join(","))
            }
            AgentRole::Debater => {
                let body: Vec<String> = dims
                    .iter()
                    .map(|d| {
                        format!(
                            "\"{d}\":{{\"argument_for_a\":\"a\",\"argument_for_b\":\"b\",\
                             \"uncertainties\":\"u\"}}"
                        )
                    })
                    .collect();
                format!("{{\"debates\":{{{}}}}}", body.join(","))
            }
            AgentRole::Judge | AgentRole::Single => self.score_reply(request, &dims)?,
        };
        Ok(BackendResponse {
            text,
            usage: default_mock_usage(),
            truncated: false,
        })
    }

    fn name(&self) -> &'static str {
        "mock"
    }
}
