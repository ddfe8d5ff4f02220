//! Synthetic trade panels with planted capability structure.
//!
//! A world assigns each country a set of latent capabilities and each
//! product a set of required capabilities. A country exports a product
//! competitively once it owns the full requirement set; partial owners
//! export a small volume proportional to the fraction they own. Because
//! the requirements are known, relatedness and activations have exact
//! ground truth, which the acceptance checks use as their oracle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::seed;
use crate::trade::ExportPanel;

/// Latent structure behind a synthetic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityWorld {
    pub n_countries: usize,
    pub n_products: usize,
    pub n_capabilities: usize,
    /// Countries x capabilities ownership at the first year.
    pub country_endowments: Grid<u8>,
    /// Products x capabilities requirement sets; every product requires
    /// at least one capability.
    pub product_requirements: Grid<u8>,
    /// Relative amplitude of the yearly multiplicative volume noise,
    /// in `[0, 1)`.
    pub noise: f64,
    /// Yearly probability that a country acquires a missing capability.
    pub acquisition_rate: f64,
    pub seed: u64,
}

/// Knobs for [`random_world`]. The defaults are tuned so that the
/// resulting presence matrices sit near 10% density with a 5-year
/// persistence around 0.64.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub n_countries: usize,
    pub n_products: usize,
    pub n_capabilities: usize,
    /// Probability a country starts out owning a capability.
    pub endowment_prob: f64,
    pub min_requirements: usize,
    pub max_requirements: usize,
    /// When positive, countries are noisy copies of this many shared
    /// capability profiles instead of independent draws.
    pub archetypes: usize,
    /// Per-bit flip probability applied to an archetype copy.
    pub archetype_flip: f64,
    pub noise: f64,
    pub acquisition_rate: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            n_countries: 60,
            n_products: 250,
            n_capabilities: 24,
            endowment_prob: 0.5,
            min_requirements: 2,
            max_requirements: 5,
            archetypes: 0,
            archetype_flip: 0.1,
            noise: 0.45,
            acquisition_rate: 0.025,
        }
    }
}

/// Volume of a fully-owned cell before multipliers.
const COMPETITIVE_VOLUME: f64 = 100.0;
/// Scale of partial-ownership volumes (times the owned fraction); small
/// enough that partial cells stay under the usual 0.25 inactivity
/// threshold.
const PARTIAL_VOLUME: f64 = 2.0;
/// The three channels of volume heterogeneity, all scaled by the
/// world's `noise` so a single knob controls how far competitive RCA
/// values spread around the threshold and how fast they churn:
/// a fixed per-cell multiplier `exp(SPREAD * noise * z)`, a yearly
/// random-walk step `exp(DRIFT * noise * z)` on that multiplier, and an
/// iid yearly wobble `exp(WOBBLE * noise * z)`.
const SPREAD_PER_NOISE: f64 = 3.6;
const DRIFT_PER_NOISE: f64 = 0.8;
const WOBBLE_PER_NOISE: f64 = 0.5;
/// Partial volumes wobble much harder than competitive ones: dabbling
/// export values are erratic, so a single cell is a poor capability
/// readout while the basket as a whole stays informative.
const PARTIAL_WOBBLE_PER_NOISE: f64 = 1.8;

impl CapabilityWorld {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::validation(format!(
                "noise must be in [0, 1), got {}",
                self.noise
            )));
        }
        if !(0.0..=1.0).contains(&self.acquisition_rate) {
            return Err(Error::validation(format!(
                "acquisition_rate must be in [0, 1], got {}",
                self.acquisition_rate
            )));
        }
        if self.country_endowments.rows() != self.n_countries
            || self.country_endowments.cols() != self.n_capabilities
            || self.product_requirements.rows() != self.n_products
            || self.product_requirements.cols() != self.n_capabilities
        {
            return Err(Error::validation(
                "endowment/requirement matrices disagree with declared sizes".to_string(),
            ));
        }
        for p in 0..self.n_products {
            if self.product_requirements.row(p).iter().all(|&b| b == 0) {
                return Err(Error::validation(format!(
                    "product {p} requires no capability"
                )));
            }
        }
        Ok(())
    }

    pub fn requirement_size(&self, product: usize) -> usize {
        self.product_requirements
            .row(product)
            .iter()
            .filter(|&&b| b == 1)
            .count()
    }
}

/// Draws a world with random endowments and requirement sets.
pub fn random_world(params: &WorldParams, seed_value: u64) -> Result<CapabilityWorld> {
    if params.min_requirements == 0 || params.min_requirements > params.max_requirements {
        return Err(Error::validation(
            "requirement size range must be non-empty and start at 1 or more".to_string(),
        ));
    }
    if params.max_requirements > params.n_capabilities {
        return Err(Error::validation(
            "products cannot require more capabilities than exist".to_string(),
        ));
    }
    let mut rng = seed::rng(seed::derive(seed_value, &[0x301d]));
    let country_endowments = if params.archetypes > 0 {
        let profiles: Vec<Vec<u8>> = (0..params.archetypes)
            .map(|_| {
                (0..params.n_capabilities)
                    .map(|_| u8::from(rng.gen_bool(params.endowment_prob)))
                    .collect()
            })
            .collect();
        Grid::from_fn(params.n_countries, params.n_capabilities, |c, k| {
            let base = profiles[c % params.archetypes][k];
            if rng.gen_bool(params.archetype_flip) {
                1 - base
            } else {
                base
            }
        })
    } else {
        Grid::from_fn(params.n_countries, params.n_capabilities, |_, _| {
            u8::from(rng.gen_bool(params.endowment_prob))
        })
    };
    let mut product_requirements = Grid::filled(params.n_products, params.n_capabilities, 0u8);
    for p in 0..params.n_products {
        let size = rng.gen_range(params.min_requirements..=params.max_requirements);
        // Partial Fisher-Yates over capability indices.
        let mut caps: Vec<usize> = (0..params.n_capabilities).collect();
        for i in 0..size {
            let j = rng.gen_range(i..caps.len());
            caps.swap(i, j);
            product_requirements.set(p, caps[i], 1);
        }
    }
    let world = CapabilityWorld {
        n_countries: params.n_countries,
        n_products: params.n_products,
        n_capabilities: params.n_capabilities,
        country_endowments,
        product_requirements,
        noise: params.noise,
        acquisition_rate: params.acquisition_rate,
        seed: seed_value,
    };
    world.validate()?;
    Ok(world)
}

/// A country acquiring one capability in one year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionEvent {
    pub country: usize,
    pub capability: usize,
    pub year: i32,
}

/// Sentinel for cells that never complete their requirement set.
pub const NEVER_COMPLETED: i32 = i32::MIN;

/// Everything the generator knows that a model must infer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub product_requirements: Grid<u8>,
    pub initial_endowments: Grid<u8>,
    pub final_endowments: Grid<u8>,
    /// First year each (country, product) owned the full requirement
    /// set, or [`NEVER_COMPLETED`].
    pub completion_year: Grid<i32>,
    pub acquisitions: Vec<AcquisitionEvent>,
}

/// A generated panel together with its ground truth sidecar.
#[derive(Debug, Clone)]
pub struct SynthPanel {
    pub panel: ExportPanel,
    pub truth: GroundTruth,
}

/// Simulates `n_years` of exports starting at `first_year`.
///
/// Per year each country exports each product at a volume proportional
/// to the owned fraction of the product's requirements, jumping to the
/// competitive level on full ownership, everything perturbed by
/// multiplicative noise. Missing capabilities are acquired independently
/// with probability `acquisition_rate` per year. Deterministic given the
/// world's seed.
pub fn generate_panel(world: &CapabilityWorld, n_years: usize, first_year: i32) -> Result<SynthPanel> {
    world.validate()?;
    if n_years < 2 {
        return Err(Error::validation(format!(
            "need at least 2 years, got {n_years}"
        )));
    }
    let n_c = world.n_countries;
    let n_p = world.n_products;
    let n_k = world.n_capabilities;

    // Approximate standard normal with range +-3; keeps multipliers
    // bounded.
    fn z(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0)
    }

    // Fixed per-cell competitive multiplier; stream 1.
    let mut rng_base = seed::rng(seed::derive(world.seed, &[1]));
    let spread = SPREAD_PER_NOISE * world.noise;
    let mut competitive_base = Grid::from_fn(n_c, n_p, |_, _| (spread * z(&mut rng_base)).exp());
    // Yearly wobble and drift; stream 2. Acquisitions; stream 3.
    let mut rng_noise = seed::rng(seed::derive(world.seed, &[2]));
    let mut rng_acquire = seed::rng(seed::derive(world.seed, &[3]));
    let drift = DRIFT_PER_NOISE * world.noise;
    let wobble = WOBBLE_PER_NOISE * world.noise;

    let requirement_sizes: Vec<usize> = (0..n_p).map(|p| world.requirement_size(p)).collect();
    let mut endowments = world.country_endowments.clone();
    let mut completion_year = Grid::filled(n_c, n_p, NEVER_COMPLETED);
    let mut acquisitions = Vec::new();
    let mut years = Vec::with_capacity(n_years);
    let mut grids = Vec::with_capacity(n_years);

    for step in 0..n_years {
        let year = first_year + step as i32;
        if step > 0 {
            for c in 0..n_c {
                for k in 0..n_k {
                    if endowments.at(c, k) == 0 && rng_acquire.gen_bool(world.acquisition_rate) {
                        endowments.set(c, k, 1);
                        acquisitions.push(AcquisitionEvent {
                            country: c,
                            capability: k,
                            year,
                        });
                    }
                }
            }
            // Market shares drift slowly, so presence churns over the
            // years even for long-standing exporters.
            for c in 0..n_c {
                for p in 0..n_p {
                    let step_factor = (drift * z(&mut rng_noise)).exp();
                    competitive_base.set(c, p, competitive_base.at(c, p) * step_factor);
                }
            }
        }
        // Competitive volumes first; partial volumes then scale with the
        // country's competitive mass so that a poorly diversified
        // country's dabbling does not inflate its RCA.
        let mut grid = Grid::filled(n_c, n_p, 0.0);
        let mut owned_frac = Grid::filled(n_c, n_p, 0.0);
        let mut comp_total = vec![0.0; n_c];
        for c in 0..n_c {
            for p in 0..n_p {
                let owned = (0..n_k)
                    .filter(|&k| world.product_requirements.at(p, k) == 1 && endowments.at(c, k) == 1)
                    .count();
                let required = requirement_sizes[p];
                if owned == required {
                    if completion_year.at(c, p) == NEVER_COMPLETED {
                        completion_year.set(c, p, year);
                    }
                    let volume = COMPETITIVE_VOLUME
                        * competitive_base.at(c, p)
                        * (wobble * z(&mut rng_noise)).exp();
                    grid.set(c, p, volume);
                    comp_total[c] += volume;
                } else {
                    owned_frac.set(c, p, owned as f64 / required as f64);
                }
            }
        }
        let mean_comp = comp_total.iter().sum::<f64>() / n_c as f64;
        for c in 0..n_c {
            let scale = if mean_comp > 0.0 {
                comp_total[c] / mean_comp
            } else {
                1.0
            };
            for p in 0..n_p {
                let frac = owned_frac.at(c, p);
                if frac > 0.0 {
                    let partial_wobble = PARTIAL_WOBBLE_PER_NOISE * world.noise;
                    let volume = PARTIAL_VOLUME
                        * frac
                        * scale
                        * (partial_wobble * z(&mut rng_noise)).exp();
                    grid.set(c, p, volume);
                }
            }
        }
        years.push(year);
        grids.push(grid);
    }

    let panel = ExportPanel::new(
        years,
        (0..n_c).map(|c| format!("C{c:03}")).collect(),
        (0..n_p).map(|p| format!("P{p:04}")).collect(),
        grids,
    )?;
    Ok(SynthPanel {
        panel,
        truth: GroundTruth {
            product_requirements: world.product_requirements.clone(),
            initial_endowments: world.country_endowments.clone(),
            final_endowments: endowments,
            completion_year,
            acquisitions,
        },
    })
}

/// Shared-capability counts between product pairs; the planted notion of
/// relatedness. Symmetric, with requirement-set sizes on the diagonal.
pub fn oracle_relatedness(world: &CapabilityWorld) -> Grid<usize> {
    let n_p = world.n_products;
    let n_k = world.n_capabilities;
    Grid::from_fn(n_p, n_p, |a, b| {
        (0..n_k)
            .filter(|&k| {
                world.product_requirements.at(a, k) == 1 && world.product_requirements.at(b, k) == 1
            })
            .count()
    })
}
