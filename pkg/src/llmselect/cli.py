"""Command-line pipeline orchestration.

One job per process. Settings come from an optional JSON config file with
flag overrides (flags win); every artifact embeds a digest of the
effective settings so reruns are auditable and `select` will not silently
overwrite a manifest produced by a different job. Exit codes: 0 ok,
1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import cluster, corpus as corpus_mod, embedding, llm, metrics, prompts, selectors
from .errors import ConfigError, LlmSelectError

DEFAULT_CONFIG: dict = {
    "paths": {
        "corpus": None,
        "embeddings": None,
        "scores": None,
        "generations": None,
        "cache_dir": None,
        "output_dir": ".",
    },
    "selector": {
        "method": None,
        "n": None,
        "clusters": None,
        "seed": 0,
        "n_ref": None,
        "threshold": 4.5,
        "n_cap": None,
        "mode": "long",
        "query_size": None,
        "kind": "diverse",
    },
    "llm": {
        "endpoint": None,
        "model": "gpt-3.5-turbo-0125",
        "temperature": 0.0,
        "max_tokens": 512,
        "timeout_s": 60.0,
        "attempts": 5,
        "backoff_ms": 500.0,
        "api_key_env": None,
    },
    "rates": None,
    "parallel": 4,
    "aliases": None,
}


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str | None) -> dict:
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG))
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} does not exist")
    with open(p, encoding="utf-8") as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return _deep_merge(DEFAULT_CONFIG, user)


def config_digest(effective: dict) -> str:
    payload = json.dumps(effective, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _override(config: dict, section: str, key: str, value) -> None:
    if value is not None:
        config[section][key] = value


def _require_path(value: str | None, what: str) -> Path:
    if value is None:
        raise ConfigError(f"{what} path is required")
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"{what} path {value} does not exist")
    return path


def _load_corpus(config: dict) -> corpus_mod.Corpus:
    path = _require_path(config["paths"]["corpus"], "corpus")
    aliases = config.get("aliases")
    if aliases is not None:
        aliases = {k: tuple(v) for k, v in aliases.items()}
    return corpus_mod.load_jsonl(path, aliases=aliases)


def _load_embeddings(config: dict, corp: corpus_mod.Corpus) -> embedding.EmbeddingMatrix:
    path = _require_path(config["paths"]["embeddings"], "embeddings")
    return embedding.import_embeddings(path, corp)


def _load_id_map(path: Path) -> dict:
    """Accept either one JSON object mapping id -> value, or JSONL rows."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
        # a bare {"id": ..., ...} is a single JSONL row, not a mapping
        if isinstance(obj, dict) and "id" not in obj:
            return obj
    except json.JSONDecodeError:
        pass
    out: dict = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        rid = str(row["id"])
        if "score" in row:
            out[rid] = row["score"]
        elif "generations" in row:
            out[rid] = row["generations"]
        elif "vector" in row:
            out[rid] = row["vector"]
        elif "prediction" in row:
            out[rid] = row["prediction"]
        elif "reference" in row:
            out[rid] = row["reference"]
        else:
            raise ConfigError(f"unrecognized row keys {sorted(row)} in {path}")
    return out


def _build_client(config: dict, use_cache: bool) -> llm.LlmClient:
    section = config["llm"]
    if not section.get("endpoint"):
        raise ConfigError("llm.endpoint is required for this command")
    cfg = llm.LlmConfig(
        endpoint=section["endpoint"],
        model=section["model"],
        temperature=section["temperature"],
        max_tokens=section["max_tokens"],
        timeout_s=section["timeout_s"],
        retry=llm.RetryPolicy(attempts=section["attempts"], base_backoff_ms=section["backoff_ms"]),
        api_key_env=section.get("api_key_env"),
    )
    cache_dir = config["paths"]["cache_dir"]
    if cache_dir is None:
        cache_dir = str(Path(config["paths"]["output_dir"]) / "cache")
    return llm.LlmClient(cfg, cache_dir=cache_dir, use_cache=use_cache)


def _rates(config: dict) -> llm.CostRates:
    section = config.get("rates")
    if not section:
        raise ConfigError("rates are required (config rates or --rates file)")
    return llm.CostRates(
        input_rate=float(section["input_rate"]), output_rate=float(section["output_rate"])
    )


def _write_artifact(path: Path, command: str, digest: str, payload: dict, force: bool = True) -> None:
    if path.exists() and not force:
        with open(path, encoding="utf-8") as fh:
            try:
                previous = json.load(fh)
            except json.JSONDecodeError:
                previous = {}
        if previous.get("config_digest") != digest:
            raise ConfigError(
                f"{path} was produced by a different config digest; pass --force to overwrite"
            )
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"command": command, "config_digest": digest, **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")


def _log_run(config: dict, command: str, digest: str, artifact: str, status: str) -> None:
    out_dir = Path(config["paths"]["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    entry = {
        "ts": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "command": command,
        "config_digest": digest,
        "artifact": artifact,
        "status": status,
    }
    with open(out_dir / "run_log.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _out_path(args, config: dict, default_name: str) -> Path:
    if getattr(args, "output", None):
        return Path(args.output)
    return Path(config["paths"]["output_dir"]) / default_name


def _effective(config: dict, command: str, extra: dict | None = None) -> tuple[dict, str]:
    effective = {"command": command, "settings": config, "extra": extra or {}}
    return effective, config_digest(effective)


# ---------------------------------------------------------------- commands


def _apply_common(config: dict, args) -> None:
    _override(config, "paths", "output_dir", getattr(args, "output_dir", None))
    _override(config, "paths", "cache_dir", getattr(args, "cache_dir", None))
    _override(config, "llm", "endpoint", getattr(args, "endpoint", None))


def cmd_split(args) -> int:
    config = load_config(args.config)
    _apply_common(config, args)
    _override(config, "paths", "corpus", args.corpus)
    if args.seed is not None:
        config["selector"]["seed"] = args.seed
    _, digest = _effective(config, "split", {"test_size": args.test_size})
    corp = _load_corpus(config)
    train, test = corpus_mod.split(corp, args.test_size, config["selector"]["seed"])
    out_dir = Path(config["paths"]["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus_mod.save_jsonl(train, out_dir / "train.jsonl")
    corpus_mod.save_jsonl(test, out_dir / "test.jsonl")
    report = _out_path(args, config, "split.json")
    _write_artifact(
        report,
        "split",
        digest,
        {
            "train": {"path": str(out_dir / "train.jsonl"), "n": len(train)},
            "test": {"path": str(out_dir / "test.jsonl"), "n": len(test)},
            "seed": config["selector"]["seed"],
        },
    )
    _log_run(config, "split", digest, str(report), "ok")
    print(f"train={len(train)} test={len(test)}")
    return 0


def cmd_embed_import(args) -> int:
    config = load_config(args.config)
    _apply_common(config, args)
    _override(config, "paths", "corpus", args.corpus)
    _override(config, "paths", "embeddings", args.embeddings)
    _, digest = _effective(config, "embed-import")
    corp = _load_corpus(config)
    E = _load_embeddings(config, corp)
    report = _out_path(args, config, "embed_report.json")
    _write_artifact(
        report,
        "embed-import",
        digest,
        {"n": E.n, "dim": E.dim, "aligned": True, "source": str(config["paths"]["embeddings"])},
    )
    _log_run(config, "embed-import", digest, str(report), "ok")
    print(f"n={E.n} dim={E.dim} aligned=true")
    return 0


def cmd_plan(args) -> int:
    config = load_config(args.config)
    _apply_common(config, args)
    _override(config, "paths", "corpus", args.corpus)
    _override(config, "paths", "embeddings", args.embeddings)
    _override(config, "selector", "clusters", args.clusters)
    _override(config, "selector", "kind", args.kind)
    _override(config, "selector", "query_size", args.query_size)
    if args.seed is not None:
        config["selector"]["seed"] = args.seed
    _, digest = _effective(config, "plan")
    corp = _load_corpus(config)
    E = _load_embeddings(config, corp)
    sel = config["selector"]
    if sel["clusters"] is None:
        raise ConfigError("clusters is required for plan")
    if sel["kind"] == "diverse":
        plan = cluster.build_diverse_queries(E, sel["clusters"], sel["seed"])
    elif sel["kind"] == "similar":
        if sel["query_size"] is None:
            raise ConfigError("query_size is required for similar plans")
        plan = cluster.build_similar_queries(E, sel["clusters"], sel["query_size"], sel["seed"])
    else:
        raise ConfigError(f"unknown plan kind {sel['kind']!r}")
    out = _out_path(args, config, "plan.json")
    _write_artifact(out, "plan", digest, {"plan": plan.to_json_dict()})
    _log_run(config, "plan", digest, str(out), "ok")
    print(f"kind={plan.kind} T={plan.T} C={plan.C}")
    return 0


def _dry_run_select(config: dict, corp, E) -> int:
    sel = config["selector"]
    plan = cluster.build_diverse_queries(E, sel["clusters"], sel["seed"])
    budgets = cluster.allocate_budgets(sel["n"], [len(q) for q in plan.queries])
    prompt_tokens = 0
    completion_tokens = 0
    for t, query in enumerate(plan.queries):
        if budgets[t] == 0:
            continue
        records = [corp.get(rid) for rid in query]
        rendered = prompts.render_selection_prompt(records, budgets[t])
        prompt_tokens += llm.count_tokens(rendered.text)
        completion_tokens += llm.count_tokens("[" + ",".join("0" * budgets[t]) + "]")
    summary = {
        "T": plan.T,
        "budgets": budgets,
        "estimated_prompt_tokens": prompt_tokens,
        "estimated_completion_tokens": completion_tokens,
    }
    if config.get("rates"):
        summary["estimated_cost"] = llm.estimate_cost(prompt_tokens, completion_tokens, _rates(config))
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_select(args) -> int:
    config = load_config(args.config)
    _apply_common(config, args)
    _override(config, "paths", "corpus", args.corpus)
    _override(config, "paths", "embeddings", args.embeddings)
    _override(config, "paths", "scores", args.scores)
    _override(config, "paths", "generations", args.generations)
    _override(config, "selector", "method", args.method)
    _override(config, "selector", "n", args.n)
    _override(config, "selector", "clusters", args.clusters)
    _override(config, "selector", "n_ref", args.n_ref)
    _override(config, "selector", "threshold", args.threshold)
    _override(config, "selector", "n_cap", args.n_cap)
    _override(config, "selector", "mode", args.mode)
    _override(config, "llm", "model", args.model)
    if args.seed is not None:
        config["selector"]["seed"] = args.seed
    if args.parallel is not None:
        config["parallel"] = args.parallel
    _, digest = _effective(config, "select")

    sel = config["selector"]
    method = sel["method"]
    if method not in selectors.METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(selectors.METHODS)}")
    if sel["n"] is None:
        raise ConfigError("n is required for select")
    corp = _load_corpus(config)
    seed = sel["seed"]
    n = sel["n"]

    if method in ("selectllm", "coreset", "cbs"):
        E = _load_embeddings(config, corp)
    if method in ("selectllm", "cbs") and sel["clusters"] is None:
        raise ConfigError(f"clusters is required for {method}")

    if args.dry_run:
        if method != "selectllm":
            raise ConfigError("dry-run is only meaningful for selectllm")
        return _dry_run_select(config, corp, E)

    if method == "selectllm":
        client = _build_client(config, use_cache=not args.no_cache)
        manifest = selectors.select_llm(
            corp, E, sel["clusters"], n, client, seed, parallel=config["parallel"]
        )
    elif method == "random":
        manifest = selectors.select_random(corp, n, seed)
    elif method == "length":
        manifest = selectors.select_length(corp, n, sel["mode"])
    elif method == "perplexity":
        scores_path = _require_path(config["paths"]["scores"], "scores")
        scores = {str(k): float(v) for k, v in _load_id_map(scores_path).items()}
        manifest = selectors.select_perplexity(corp, scores, n)
    elif method == "diversity":
        n_ref = sel["n_ref"] or selectors.default_n_ref(len(corp))
        manifest = selectors.select_diversity(corp, n, n_ref, seed)
    elif method == "openend":
        if config["paths"]["generations"] is not None:
            gen_path = _require_path(config["paths"]["generations"], "generations")
            generations = {str(k): list(v) for k, v in _load_id_map(gen_path).items()}
        elif config["llm"].get("endpoint"):
            client = _build_client(config, use_cache=not args.no_cache)
            generations = selectors.generate_openend_samples(corp, client)
        else:
            raise ConfigError("openend needs a generations file or an llm endpoint")
        manifest = selectors.select_openend(corp, generations, n)
    elif method == "coreset":
        manifest = selectors.select_coreset(E, n, seed)
    else:  # cbs
        manifest = selectors.select_cbs(corp, E, n, sel["clusters"], seed)

    out = _out_path(args, config, "manifest.json")
    _write_artifact(out, "select", digest, {"manifest": manifest.to_json_dict()}, force=args.force)
    _log_run(config, "select", digest, str(out), "ok")
    print(f"method={manifest.method} selected={len(manifest.selected)}")
    return 0


def cmd_rank(args) -> int:
    config = load_config(args.config)
    _apply_common(config, args)
    _override(config, "paths", "corpus", args.corpus)
    _, digest = _effective(config, "rank", {"ids": args.ids})
    corp = _load_corpus(config)
    if args.ids:
        wanted = args.ids.split(",")
        missing = [rid for rid in wanted if rid not in corp.by_id]
        if missing:
            raise ConfigError(f"ids not in corpus: {', '.join(missing)}")
        records = [corp.get(rid) for rid in wanted]
    else:
        records = list(corp.records)
    client = _build_client(config, use_cache=not args.no_cache)
    result = selectors.rank_instructions(records, client)
    out = _out_path(args, config, "ranking.json")
    _write_artifact(
        out,
        "rank",
        digest,
        {
            "order": list(result.order),
            "appended": list(result.appended),
            "usage": result.usage,
        },
    )
    _log_run(config, "rank", digest, str(out), "ok")
    print(" > ".join(result.order))
    return 0


def cmd_grade(args) -> int:
    config = load_config(args.config)
    _apply_common(config, args)
    _override(config, "paths", "corpus", args.corpus)
    _override(config, "selector", "threshold", args.threshold)
    _override(config, "selector", "n_cap", args.n_cap)
    if args.parallel is not None:
        config["parallel"] = args.parallel
    _, digest = _effective(config, "grade")
    corp = _load_corpus(config)
    client = _build_client(config, use_cache=not args.no_cache)
    manifest = selectors.grade_alpagasus(
        corp,
        client,
        threshold=config["selector"]["threshold"],
        n_cap=config["selector"]["n_cap"],
        parallel=config["parallel"],
    )
    out = _out_path(args, config, "graded_manifest.json")
    _write_artifact(out, "grade", digest, {"manifest": manifest.to_json_dict()}, force=args.force)
    _log_run(config, "grade", digest, str(out), "ok")
    print(f"kept={len(manifest.selected)} of {len(corp)}")
    return 0


def cmd_estimate_cost(args) -> int:
    config = load_config(args.config)
    _apply_common(config, args)
    if args.rates:
        with open(_require_path(args.rates, "rates"), encoding="utf-8") as fh:
            config["rates"] = json.load(fh)
    _, digest = _effective(config, "estimate-cost", {"manifest": str(args.manifest)})
    manifest_path = _require_path(args.manifest, "manifest")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)["manifest"]
    rates = _rates(config)
    usage = manifest["usage"]
    dollars = llm.estimate_cost(usage["prompt_tokens"], usage["completion_tokens"], rates)
    out = _out_path(args, config, "cost.json")
    _write_artifact(
        out,
        "estimate-cost",
        digest,
        {
            "dollars": dollars,
            "prompt_tokens": usage["prompt_tokens"],
            "completion_tokens": usage["completion_tokens"],
            "rates": {"input_rate": rates.input_rate, "output_rate": rates.output_rate},
        },
    )
    _log_run(config, "estimate-cost", digest, str(out), "ok")
    print(f"${dollars:.2f}")
    return 0


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    _apply_common(config, args)
    _override(config, "paths", "corpus", args.corpus)
    _, digest = _effective(config, "evaluate", {"predictions": str(args.predictions), "references": str(args.references)})
    predictions = {
        str(k): str(v) for k, v in _load_id_map(_require_path(args.predictions, "predictions")).items()
    }
    if args.references:
        references = {
            str(k): str(v) for k, v in _load_id_map(_require_path(args.references, "references")).items()
        }
    else:
        corp = _load_corpus(config)
        references = {r.id: r.response for r in corp if r.response is not None}
    vectors = None
    if args.pred_vectors and args.ref_vectors:
        pred_v = embedding.load_vectors(_require_path(args.pred_vectors, "pred-vectors"))
        ref_v = embedding.load_vectors(_require_path(args.ref_vectors, "ref-vectors"))
        vectors = {rid: (pred_v[rid], ref_v[rid]) for rid in predictions}
    report = metrics.evaluate_responses(predictions, references, vectors)
    out = _out_path(args, config, "eval_report.json")
    _write_artifact(out, "evaluate", digest, {"report": report.to_json_dict()})
    _log_run(config, "evaluate", digest, str(out), "ok")
    cosine = f"{report.mean_cosine:.4f}" if report.mean_cosine is not None else "n/a"
    print(f"n={report.n_pairs} rouge_l_f1={report.mean_rouge_l_f1:.4f} cosine={cosine}")
    return 0


def cmd_judge(args) -> int:
    config = load_config(args.config)
    _apply_common(config, args)
    _, digest = _effective(config, "judge", {"pairs": str(args.pairs)})
    pairs_path = _require_path(args.pairs, "pairs")
    rows = []
    with open(pairs_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    client = _build_client(config, use_cache=not args.no_cache)
    verdict_pairs = []
    detailed = []
    for row in rows:
        forward = prompts.render_judge_prompt(row["response1"], row["response2"], row["question"])
        swapped = prompts.render_judge_prompt(row["response2"], row["response1"], row["question"])
        fwd_verdict = prompts.parse_judge(client.complete(forward).reply)
        rev_verdict = prompts.parse_judge(client.complete(swapped).reply)
        verdict_pairs.append({"forward": fwd_verdict, "reversed": rev_verdict})
        detailed.append({"id": row.get("id"), "forward": fwd_verdict, "reversed": rev_verdict})
    tally = metrics.judge_tally(verdict_pairs)
    out = _out_path(args, config, "judge_tally.json")
    _write_artifact(out, "judge", digest, {"tally": tally, "pairs": detailed})
    _log_run(config, "judge", digest, str(out), "ok")
    print(f"win={tally['win']:.1f}% tie={tally['tie']:.1f}% lose={tally['lose']:.1f}% n={tally['n']}")
    return 0


def cmd_stats(args) -> int:
    config = load_config(args.config)
    _apply_common(config, args)
    _override(config, "paths", "corpus", args.corpus)
    _override(config, "paths", "embeddings", args.embeddings)
    _override(config, "paths", "scores", args.scores)
    _, digest = _effective(config, "stats", {"manifest": str(args.manifest)})
    corp = _load_corpus(config)
    E = _load_embeddings(config, corp)
    with open(_require_path(args.manifest, "manifest"), encoding="utf-8") as fh:
        manifest = selectors.SelectionManifest.from_json_dict(json.load(fh)["manifest"])
    scores = None
    if config["paths"]["scores"]:
        scores_path = _require_path(config["paths"]["scores"], "scores")
        scores = {str(k): float(v) for k, v in _load_id_map(scores_path).items()}
    stats = metrics.selection_stats(corp, list(manifest.selected), E, perplexity_scores=scores)
    out = _out_path(args, config, "stats.json")
    _write_artifact(out, "stats", digest, {"stats": stats, "method": manifest.method})
    _log_run(config, "stats", digest, str(out), "ok")
    print(json.dumps(stats, sort_keys=True))
    return 0


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llmselect",
        description="Select effective unlabeled instructions via clustered LLM prompting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, cache=False, llm_flags=False):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--output", help="artifact path (default under output dir)")
        p.add_argument("--output-dir")
        if cache:
            p.add_argument("--cache-dir")
            p.add_argument("--no-cache", action="store_true")
        if llm_flags:
            p.add_argument("--endpoint", help="chat endpoint URL, or mock:<scores.json> / static:<reply>")

    p = sub.add_parser("split", help="seeded train/test split of a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--test-size", type=int, required=True)
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser("embed-import", help="validate and align an embedding file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    common(p)
    p.set_defaults(handler=cmd_embed_import)

    p = sub.add_parser("plan", help="build a diverse or similar query plan")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--clusters", type=int)
    p.add_argument("--kind", choices=("diverse", "similar"))
    p.add_argument("--query-size", type=int)
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(handler=cmd_plan)

    p = sub.add_parser("select", help="run a selection method end to end")
    p.add_argument("--method")
    p.add_argument("--n", type=int)
    p.add_argument("--corpus")
    p.add_argument("--embeddings")
    p.add_argument("--scores")
    p.add_argument("--generations")
    p.add_argument("--clusters", type=int)
    p.add_argument("--n-ref", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--n-cap", type=int)
    p.add_argument("--mode", choices=("long", "short"))
    p.add_argument("--model")
    p.add_argument("--seed", type=int)
    p.add_argument("--parallel", type=int)
    p.add_argument("--force", action="store_true")
    p.add_argument("--dry-run", action="store_true")
    common(p, cache=True, llm_flags=True)
    p.set_defaults(handler=cmd_select)

    p = sub.add_parser("rank", help="rank a small record subset by impactfulness")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ids", help="comma-separated record ids (default: whole corpus)")
    common(p, cache=True, llm_flags=True)
    p.set_defaults(handler=cmd_rank)

    p = sub.add_parser("grade", help="auto-grade labeled records, keep high scorers")
    p.add_argument("--corpus", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--n-cap", type=int)
    p.add_argument("--parallel", type=int)
    p.add_argument("--force", action="store_true")
    common(p, cache=True, llm_flags=True)
    p.set_defaults(handler=cmd_grade)

    p = sub.add_parser("estimate-cost", help="price a manifest's token usage")
    p.add_argument("--manifest", required=True)
    p.add_argument("--rates", help="JSON file with input_rate/output_rate per 1k tokens")
    common(p)
    p.set_defaults(handler=cmd_estimate_cost)

    p = sub.add_parser("evaluate", help="Rouge-L/cosine of predictions vs references")
    p.add_argument("--predictions", required=True)
    p.add_argument("--references")
    p.add_argument("--corpus")
    p.add_argument("--pred-vectors")
    p.add_argument("--ref-vectors")
    common(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("judge", help="pairwise LLM judging with order swap")
    p.add_argument("--pairs", required=True, help="JSONL of {id, question, response1, response2}")
    common(p, cache=True, llm_flags=True)
    p.set_defaults(handler=cmd_judge)

    p = sub.add_parser("stats", help="diversity/perplexity/length stats of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--scores")
    common(p)
    p.set_defaults(handler=cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        _print_error(exc)
        return 2
    except LlmSelectError as exc:
        _print_error(exc)
        return 1
    except FileNotFoundError as exc:
        _print_error(exc)
        return 2


def _print_error(exc: Exception) -> None:
    module = type(exc).__module__.rsplit(".", 1)[-1]
    body = {"error": type(exc).__name__, "module": module, "message": str(exc)}
    print(json.dumps(body, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
