//! Phenotype features: pathway enrichment scores and principal component
//! scores of intensity densities.

mod density;
mod gsva;
mod pca;
mod sphere;

pub use density::{inv_srt, make_density, srt, BandwidthRule, DensitySample, Grid, SrtPoint, DEFAULT_GRID_SIZE, DENSITY_FLOOR};
pub use gsva::{descending_average_ranks, gsva_scores, kernel_cdf, ks_enrichment, ExpressionMatrix, GeneSetCollection, GsvaParams};
pub use pca::{density_pca, DensityPcaResult, DEFAULT_VARIANCE_THRESHOLD};
pub use sphere::{exp_map, geodesic_distance, inv_exp_map, karcher_mean, karcher_variance, KarcherParams, KarcherResult};
