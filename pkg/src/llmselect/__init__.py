"""llmselect: pick the most effective unlabeled instructions from a corpus.

The pipeline clusters sentence embeddings into diverse candidate batches,
prompts a chat LLM to choose within each batch, and records everything in
reproducible manifests. Baseline selectors, Rouge-L/cosine evaluation, and
cost accounting round out the toolkit.
"""

from .cluster import (
    ClusterModel,
    QueryPlan,
    budget_per_query,
    build_diverse_queries,
    build_similar_queries,
    distance_matrix,
    kmeans,
)
from .corpus import Corpus, InstructionRecord, load_jsonl, render_block, save_jsonl, split
from .embedding import (
    EmbeddingMatrix,
    cosine_similarity,
    fetch_embeddings,
    import_embeddings,
    knn_diversity,
    l2_distance,
    write_embd,
)
from .llm import ChatExchange, CostRates, LlmClient, LlmConfig, count_tokens, estimate_cost, mock_oracle
from .metrics import (
    EvalReport,
    evaluate_responses,
    judge_tally,
    lcs_length,
    rouge_l_f1,
    selection_stats,
    unique_bigrams,
)
from .prompts import (
    RenderedPrompt,
    parse_judge,
    parse_ranking,
    parse_score,
    parse_selection,
    render_grader_prompt,
    render_judge_prompt,
    render_ranking_prompt,
    render_rationale_prompt,
    render_selection_prompt,
)
from .selectors import (
    SelectionManifest,
    grade_alpagasus,
    rank_instructions,
    select_cbs,
    select_coreset,
    select_diversity,
    select_length,
    select_llm,
    select_openend,
    select_perplexity,
    select_random,
)

__version__ = "0.1.0"
