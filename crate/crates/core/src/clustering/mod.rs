//! Client clustering: similarity clustering (k-means under the symmetrized KL
//! divergence), repulsive clustering (maximally diverse, mutually similar
//! groups) and the adjusted Rand index used to score either against a
//! reference partition.

mod ari;
mod assignment;
mod diversity;
mod simclust;

pub use ari::{adjusted_rand_index, ari_from_labels, nearest_stratified_reference};
pub use assignment::ClusterAssignment;
pub use diversity::{
    brute_force_diverse_grouping, diversity_objective, repclust, BruteForceOutcome,
    DiversityObjective, RepClustConfig, RepClustOutcome, BRUTE_FORCE_LIMIT,
};
pub use simclust::{simclust, SimClustOutcome, SIMCLUST_MAX_ITERS};
