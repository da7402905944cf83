//! Decision-independent coefficients of the subset expansion of the disc
//! coverage, and their on-disk cache.
//!
//! For serving BS `b`, SP `s` and interferer subset `J ⊆ B∖{b}`, the coverage
//! term `δ_bs (πq_b²/A) Pr{covered | leased}` expands as
//! `Σ_J coef_bs(J) · δ_bs · Π_{j∈J} x_j`. With `G(K)` the weighted coverage
//! when exactly `K` interferes, `coef(J) = Σ_{K⊆J} (-1)^{|J∖K|} G(K)`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coverage::{ActiveSet, CoverageEngine, QuadratureConfig};
use crate::error::{CoverageError, Error};
use crate::scenario::Scenario;

pub const CACHE_FORMAT_VERSION: u32 = 1;

/// Coefficients for one (serving BS, SP) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub bs: usize,
    pub sp: usize,
    /// Area weight `πq_b²/A`.
    pub weight: f64,
    /// Interferer BS indices; bit `i` of a local mask refers to `others[i]`.
    pub others: Vec<usize>,
    /// `coef(J)` indexed by local mask.
    pub coef: Vec<f64>,
}

impl CoefficientTable {
    pub fn local_mask(&self, set: ActiveSet) -> usize {
        self.others
            .iter()
            .enumerate()
            .filter(|(_, &j)| set.contains(j))
            .fold(0, |m, (i, _)| m | (1 << i))
    }

    pub fn global_set(&self, local: usize) -> ActiveSet {
        ActiveSet::from_indices(
            self.others
                .iter()
                .enumerate()
                .filter(|(i, _)| local >> i & 1 == 1)
                .map(|(_, &j)| j),
        )
    }

    /// Coefficient of `δ_bs Π_{j∈J} x_j`.
    pub fn coefficient(&self, subset: ActiveSet) -> f64 {
        self.coef[self.local_mask(subset)]
    }

    /// `Σ_{J ⊆ leased∖b} coef(J)`: the weighted coverage when `leased` is
    /// the lease set.
    pub fn expansion_sum(&self, leased: ActiveSet) -> f64 {
        let full = self.local_mask(leased);
        let mut sub = full;
        let mut total = 0.0;
        loop {
            total += self.coef[sub];
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & full;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCoefficients {
    pub num_bs: usize,
    pub num_sp: usize,
    /// Tables in `bs * num_sp + sp` order.
    pub tables: Vec<CoefficientTable>,
}

impl CoverageCoefficients {
    pub fn table(&self, b: usize, s: usize) -> &CoefficientTable {
        &self.tables[b * self.num_sp + s]
    }
}

/// In-place Möbius transform over the subset lattice.
pub fn mobius_transform(values: &mut [f64]) {
    let n = values.len();
    debug_assert!(n.is_power_of_two());
    let mut bit = 1;
    while bit < n {
        for mask in 0..n {
            if mask & bit != 0 {
                values[mask] -= values[mask ^ bit];
            }
        }
        bit <<= 1;
    }
}

/// Computes every coefficient of the scenario held by `engine`.
pub fn precompute_coefficients(
    engine: &CoverageEngine,
) -> Result<CoverageCoefficients, CoverageError> {
    let sc = engine.scenario();
    let (nb, ns) = (sc.num_bs(), sc.num_sp());
    let mut tables = Vec::with_capacity(nb * ns);
    for b in 0..nb {
        let (others, g) = engine.subset_coverages(b)?;
        for (s, mut coef) in g.into_iter().enumerate() {
            mobius_transform(&mut coef);
            tables.push(CoefficientTable {
                bs: b,
                sp: s,
                weight: sc.disc_weight(b),
                others: others.clone(),
                coef,
            });
        }
    }
    Ok(CoverageCoefficients {
        num_bs: nb,
        num_sp: ns,
        tables,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    key: String,
    coefficients: CoverageCoefficients,
}

/// Cache key: hash of the canonical scenario text, the quadrature settings
/// and the cache format version.
pub fn cache_key(scenario: &Scenario, cfg: &QuadratureConfig) -> String {
    let mut h = Sha256::new();
    h.update(CACHE_FORMAT_VERSION.to_le_bytes());
    h.update(scenario.to_toml_string().as_bytes());
    h.update(
        serde_json::to_string(cfg)
            .expect("config serializes")
            .as_bytes(),
    );
    hex::encode(h.finalize())
}

/// Loads coefficients from `path` when its key matches, otherwise computes
/// them and rewrites the file. Returns the coefficients and whether the
/// cache was hit.
pub fn load_or_compute(
    engine: &CoverageEngine,
    path: impl AsRef<Path>,
) -> Result<(CoverageCoefficients, bool), Error> {
    let path = path.as_ref();
    let key = cache_key(engine.scenario(), engine.config());
    if let Ok(text) = std::fs::read_to_string(path) {
        match serde_json::from_str::<CacheFile>(&text) {
            Ok(f) if f.version == CACHE_FORMAT_VERSION && f.key == key => {
                return Ok((f.coefficients, true));
            }
            Ok(_) => log::info!("coefficient cache {} is stale", path.display()),
            Err(e) => log::warn!(
                "ignoring unreadable coefficient cache {}: {e}",
                path.display()
            ),
        }
    }
    let coefficients = precompute_coefficients(engine)?;
    let file = CacheFile {
        version: CACHE_FORMAT_VERSION,
        key,
        coefficients,
    };
    let text = serde_json::to_string(&file).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok((file.coefficients, false))
}
