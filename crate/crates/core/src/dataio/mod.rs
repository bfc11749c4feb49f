//! Expression, pathway and clinical data ingestion and normalization.

mod clinical;
mod delimited;
mod expression;
mod normalize;
mod pathways;

pub use clinical::{align_labels, load_labels, load_survival, LabelTable, SurvivalRecord, SurvivalTable};
pub use delimited::delimiter_for;
pub(crate) use delimited::{read_records, render_rows, write_text};
pub use expression::{
    fpkm_to_tpm_log, intensity_to_ipm_log, intersect_genes, load_expression_tsv, load_gene_mapping, map_gene_ids,
    merge_duplicate_genes, per_million, ExpressionTable, GeneMapping, Orientation, Scale,
};
pub use normalize::{fit_normalizer, percentile_rank, Normalizer, NormalizerKind};
pub use pathways::{
    parse_gmt, parse_gmt_str, parse_msigdb_json, parse_msigdb_json_str, resolve_pathways, Pathway, PathwayResolution,
    PathwaySet, ResolveReport,
};
