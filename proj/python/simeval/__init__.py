"""Session-log ingestion and simulator evaluation."""

from ._simeval import (  # noqa: F401
    EMBED_DIM,
    EMBED_LAYOUT_ID,
    SCHEMA_VERSION,
    Corpus,
    Error,
    canonical_json,
    config_hash,
    derive_seed,
    embed_corpus,
    embed_session,
    frechet_distance,
    generate_graded_log,
    generate_synthetic_log,
    ingest_weblog_tsv,
    js_divergence,
    kendall_tau,
    ks_statistic,
    mmd2_rbf,
    ndcg_at_k,
    normalized_levenshtein,
    pairwise_concordance,
    parse_qrels,
    pearson_p_two_sided,
    pearson_r,
    run_b1,
    run_b1_job,
    run_b2_job,
    run_b3_job,
    sha256_hex,
    simulate,
    spearman_rho,
    tau_ap,
    token_jaccard,
    validate_session,
    wasserstein1,
)
from ._simeval import __version__  # noqa: F401
