"""Experiment matrix: methods x models x topics x variants, one evaluated cell each."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from . import version_stamp
from .baselines.runner import TrainPlan, run_baseline
from .baselines.wordvec import load_word_vectors
from .config import LR_METHODS, MethodSpec, ProviderSpec, RunConfig
from .corpus import FramingCorpus
from .logprob import FramingLabel
from .metrics import BiasResult, ConfusionMatrix, CostLedger, MetricWithCI, bias, bootstrap_ci, f1, replicate_ci
from .paired import PairingPlan, TargetBatch, estimate_calls, run_paired
from .prompting import PromptTemplate, classify_by_prompt, render_prompt, resolve_label_tokens
from .providers.base import CapabilityError, Provider, ProviderError
from .providers.cache import ResponseCache
from .providers.ngram import NGramProvider, SpeakerMixtureProvider
from .providers.remote import OpenAICompatibleProvider
from .providers.scripted import ScriptedProvider

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("method", "model", "topic", "variant", "f1", "ci_low", "ci_high", "bias", "bias_significant", "cost")


class EmptyReportError(RuntimeError):
    pass


@dataclass(frozen=True, order=True)
class CellKey:
    method: str
    model: str
    topic: str
    variant: str

    @property
    def slug(self) -> str:
        raw = "__".join((self.method, self.model, self.topic, self.variant))
        return re.sub(r"[^A-Za-z0-9_.=-]+", "-", raw)

    def to_dict(self) -> dict:
        return {"method": self.method, "model": self.model, "topic": self.topic, "variant": self.variant}


@dataclass
class ExperimentCell:
    key: CellKey
    status: str = "ok"
    error: str | None = None
    confusion: ConfusionMatrix | None = None
    f1: MetricWithCI | None = None
    f1_b: float | None = None
    bias: BiasResult | None = None
    ledger: CostLedger = field(default_factory=lambda: CostLedger(0, 0, 0))
    predictions: list[dict] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            **self.key.to_dict(),
            "status": self.status,
            "error": self.error,
            "confusion": self.confusion.to_dict() if self.confusion else None,
            "f1": self.f1.to_dict() if self.f1 else None,
            "f1_b": self.f1_b,
            "bias": self.bias._asdict() if self.bias else None,
            "ledger": self.ledger.to_dict(),
            "predictions": self.predictions,
            "details": self.details,
            "version": version_stamp(),
        }


class ProviderPool:
    """Builds providers from config specs. Remote/scripted ones are shared; n-gram mocks are fitted per topic."""

    def __init__(self, env: dict | None = None):
        self.env = env
        self._shared: dict[str, Provider] = {}
        self._per_topic: dict[tuple[str, str], Provider] = {}

    def get(self, spec: ProviderSpec, corpus: FramingCorpus) -> Provider:
        if spec.kind == "ngram":
            key = (spec.name, corpus.topic)
            if key not in self._per_topic:
                self._per_topic[key] = fit_mock_entity(corpus, spec.options, spec.name)
            return self._per_topic[key]
        if spec.name not in self._shared:
            if spec.kind == "scripted":
                self._shared[spec.name] = ScriptedProvider.from_file(spec.options["script"])
            else:
                cache = ResponseCache(spec.options["cache"]) if spec.options.get("cache") else None
                self._shared[spec.name] = OpenAICompatibleProvider(spec.provider_config(), cache=cache, env=self.env)
        return self._shared[spec.name]


def fit_mock_entity(corpus: FramingCorpus, options: dict, name: str = "ngram") -> SpeakerMixtureProvider:
    """Offline expressive entity: a two-speaker mixture of character n-grams fitted on each side's framing texts."""
    order = int(options.get("order", 3))
    alpha = float(options.get("alpha", 0.5))
    vocab = set(". ")
    for side in corpus.sides:
        for text in (side.summary, *side.seed_sentences, *side.distilled, *side.sentences):
            vocab.update(text)
    components = [
        NGramProvider([*s.seed_sentences, *s.distilled, s.summary], order=order, smoothing_alpha=alpha, vocabulary=vocab)
        for s in corpus.sides
    ]
    return SpeakerMixtureProvider(components, model_name=name)


def _targets(corpus: FramingCorpus, opts: dict) -> tuple[TargetBatch, dict[str, FramingLabel]]:
    batch, truth = corpus.target_batch()
    limit = opts.get("targets_per_side")
    if limit:
        counts = {FramingLabel.A: 0, FramingLabel.B: 0}
        keep = []
        for tid, text in batch.targets:
            lab = truth[tid]
            if counts[lab] < limit:
                counts[lab] += 1
                keep.append((tid, text))
        batch = TargetBatch(tuple(keep))
        truth = {tid: truth[tid] for tid, _ in keep}
    return batch, truth


def plan_cells(config: RunConfig, corpora: Iterable[FramingCorpus]) -> list[tuple[CellKey, MethodSpec, FramingCorpus]]:
    corpora = list(corpora)
    cells = []
    for m in config.methods:
        for model in m.models:
            for corpus in corpora:
                for variant in m.variants:
                    cells.append((CellKey(m.method, model, corpus.topic, variant), m, corpus))
    keys = [c[0] for c in cells]
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate experiment cells (same method, model, topic and variant configured twice)")
    return sorted(cells, key=lambda c: c[0])


def _usage_ledger(provider: Provider | None, before: dict | None) -> CostLedger:
    if provider is None or before is None:
        return CostLedger(0, 0, 0)
    after = provider.usage.snapshot()
    return CostLedger(
        after["input_tokens"] - before["input_tokens"],
        after["output_tokens"] - before["output_tokens"],
        after["calls"] - before["calls"],
        provider.price_per_1k_input,
        provider.price_per_1k_output,
    )


def _finish_classification(cell, config, truth_list, pred_list):
    cm = ConfusionMatrix.from_outcomes(truth_list, pred_list)
    cell.confusion = cm
    cell.f1 = bootstrap_ci(
        truth_list, pred_list, config.bootstrap_replicates, config.bootstrap_sample_size, seed=config.seed
    )
    cell.f1_b = f1(cm, FramingLabel.B)
    cell.bias = bias(cm, config.bootstrap_replicates, config.bootstrap_sample_size, seed=config.seed)


def _run_paired_cell(cell, m, corpus, provider, config):
    k = int(cell.key.variant.split("=")[1])
    batch, truth = _targets(corpus, m.options)
    priming = corpus.priming(m.options.get("conditioners", "distilled"))
    plan = PairingPlan(k=k, repetitions=int(m.options.get("repetitions", 3)), rng_seed=config.seed)
    run = run_paired(priming, batch, plan, provider)
    results = run.by_id()
    fails = {f.target_id: f.error for f in run.failures}
    preds = []
    for tid, _ in batch.targets:
        r = results.get(tid)
        preds.append(
            {
                "id": tid,
                "truth": truth[tid].value,
                "pred": r.label.value if r else None,
                "score": r.aggregate_delta if r else None,
                "tie": r.tie if r else False,
                "failure": fails.get(tid),
            }
        )
    cell.predictions = preds
    cell.details = {"k": k, "repetitions": plan.repetitions, "score_calls": run.score_calls, "failures": len(run.failures)}
    _finish_classification(
        cell,
        config,
        [truth[p["id"]] for p in preds],
        [None if p["pred"] is None else FramingLabel(p["pred"]) for p in preds],
    )


def _run_prompt_cell(cell, m, corpus, provider, config):
    variant = cell.key.variant
    template = PromptTemplate.load(m.options.get("template"), variant=variant)
    priming = corpus.priming(variant)
    label_map = resolve_label_tokens(provider, priming.label_a, priming.label_b)
    batch, truth = _targets(corpus, m.options)

    def one(item):
        tid, text = item
        try:
            return classify_by_prompt(template, priming, text, provider, label_map)
        except CapabilityError:
            raise
        except ProviderError as exc:
            return type(exc).__name__

    with ThreadPoolExecutor(max_workers=max(1, provider.max_parallel)) as pool:
        outcomes = list(pool.map(one, batch.targets))
    preds = []
    for (tid, _), out in zip(batch.targets, outcomes):
        if isinstance(out, str):
            preds.append({"id": tid, "truth": truth[tid].value, "pred": None, "score": None, "tie": False, "failure": out})
        else:
            preds.append(
                {
                    "id": tid,
                    "truth": truth[tid].value,
                    "pred": out.label.value if out.label else None,
                    "score": out.delta_equiv,
                    "tie": out.tie,
                    "failure": out.failure_mode,
                }
            )
    cell.predictions = preds
    cell.details = {
        "template_version": template.version,
        "label_tokens": [label_map.label_a_first_token, label_map.label_b_first_token],
        "failures": sum(p["pred"] is None for p in preds),
    }
    _finish_classification(
        cell,
        config,
        [truth[p["id"]] for p in preds],
        [None if p["pred"] is None else FramingLabel(p["pred"]) for p in preds],
    )


def _run_lr_cell(cell, m, corpus, provider, config, word_vectors):
    n = int(cell.key.variant.split("=")[1])
    plan = TrainPlan(
        n_train=n,
        replicates=int(m.options.get("replicates", 5)),
        seed=config.seed,
        test_per_class=int(m.options.get("test_per_class", 100)),
    )
    l2 = float(m.options.get("l2_lambda", 1e-2))
    reps = run_baseline(cell.key.method, corpus, plan, provider, word_vectors=word_vectors, l2_lambda=l2)
    per_rep = []
    truth_all, pred_all = [], []
    for r in reps:
        cm_r = ConfusionMatrix.from_outcomes(r.truth, r.predictions)
        per_rep.append(f1(cm_r) or 0.0)
        truth_all.extend(r.truth)
        pred_all.extend(r.predictions)
    cm = ConfusionMatrix.from_outcomes(truth_all, pred_all)
    cell.confusion = cm
    if len(per_rep) >= 2:
        cell.f1 = replicate_ci(per_rep)
    else:
        cell.f1 = bootstrap_ci(truth_all, pred_all, config.bootstrap_replicates, config.bootstrap_sample_size, config.seed)
    cell.f1_b = f1(cm, FramingLabel.B)
    cell.bias = bias(cm, config.bootstrap_replicates, config.bootstrap_sample_size, seed=config.seed)
    cell.predictions = [
        {"replicate": r.replicate, "id": tid, "truth": t.value, "pred": p.value}
        for r in reps
        for tid, t, p in zip(r.test_ids, r.truth, r.predictions)
    ]
    cell.details = {
        "n_train": n,
        "replicates": plan.replicates,
        "test_per_class": plan.test_per_class,
        "per_replicate_f1": per_rep,
        "l2_lambda": l2,
        "models": [r.model_meta for r in reps],
    }


ProviderFactory = Callable[[ProviderSpec, FramingCorpus], Provider]


@dataclass
class MatrixResult:
    cells: list[ExperimentCell]
    skipped: list[CellKey]

    @property
    def failed(self) -> list[ExperimentCell]:
        return [c for c in self.cells if c.status != "ok"]


def _write_json(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=1, sort_keys=True, default=str) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def run_matrix(
    config: RunConfig,
    provider_factory: ProviderFactory | None = None,
    *,
    corpora: list[FramingCorpus] | None = None,
    write: bool = True,
    progress: Callable[[str], None] | None = None,
) -> MatrixResult:
    corpora = corpora if corpora is not None else config.load_corpora()
    pool = ProviderPool()
    factory = provider_factory or pool.get
    cells_dir = config.output_dir / "cells"
    if write:
        cells_dir.mkdir(parents=True, exist_ok=True)
        _write_json(config.output_dir / "run.json", {"version": version_stamp(), "config": resolved_config(config)})
    word_vector_tables: dict[str, dict] = {}
    result = MatrixResult([], [])
    planned = plan_cells(config, corpora)
    for i, (key, m, corpus) in enumerate(planned, start=1):
        marker = cells_dir / f"{key.slug}.done"
        if write and marker.exists():
            result.skipped.append(key)
            if progress:
                progress(f"[{i}/{len(planned)}] {key.slug}: done earlier, skipped")
            continue
        cell = ExperimentCell(key)
        provider = None
        before = None
        try:
            if key.method not in ("tfidf", "wordvec"):
                provider = factory(config.providers[key.model], corpus)
                before = provider.usage.snapshot()
            if key.method == "paired":
                _run_paired_cell(cell, m, corpus, provider, config)
            elif key.method == "prompt":
                _run_prompt_cell(cell, m, corpus, provider, config)
            else:
                wv = None
                if key.method == "wordvec":
                    path = str(m.options["word_vectors"])
                    if path not in word_vector_tables:
                        word_vector_tables[path] = load_word_vectors(path)
                    wv = word_vector_tables[path]
                _run_lr_cell(cell, m, corpus, provider, config, wv)
        except (ProviderError, ValueError, OSError) as exc:
            log.error("cell %s failed: %s", key.slug, exc)
            cell.status = "failed"
            cell.error = f"{type(exc).__name__}: {exc}"
        cell.ledger = _usage_ledger(provider, before)
        result.cells.append(cell)
        if write:
            _write_json(cells_dir / f"{key.slug}.json", cell.to_dict())
            if cell.status == "ok":
                marker.write_text("", encoding="utf-8")
        if progress:
            f1_txt = f"f1={cell.f1.point:.3f}" if cell.f1 else cell.error
            progress(f"[{i}/{len(planned)}] {key.slug}: {f1_txt}")
    return result


def resolved_config(config: RunConfig) -> dict:
    return {
        "seed": config.seed,
        "output_dir": str(config.output_dir),
        "datasets": [str(p) for p in config.datasets],
        "providers": {n: {"kind": s.kind, **{k: str(v) if isinstance(v, Path) else v for k, v in s.options.items()}} for n, s in config.providers.items()},
        "methods": [
            {"method": m.method, "models": list(m.models), "variants": list(m.variants), **{k: str(v) if isinstance(v, Path) else v for k, v in m.options.items()}}
            for m in config.methods
        ],
        "evaluation": {"bootstrap_replicates": config.bootstrap_replicates, "bootstrap_sample_size": config.bootstrap_sample_size},
    }


@dataclass(frozen=True)
class CellEstimate:
    key: CellKey
    calls: int
    ledger: CostLedger


def _pricing(spec: ProviderSpec | None) -> tuple[float, float]:
    if spec is None:
        return 0.0, 0.0
    return float(spec.options.get("price_per_1k_input", 0.0)), float(spec.options.get("price_per_1k_output", 0.0))


def estimate_matrix(config: RunConfig, corpora: list[FramingCorpus] | None = None, token_inflation: float = 1.3) -> list[CellEstimate]:
    """Cold-cache call and token projections for every cell, without contacting any provider."""
    corpora = corpora if corpora is not None else config.load_corpora()
    out = []
    for key, m, corpus in plan_cells(config, corpora):
        spec = config.providers.get(key.model)
        price_in, price_out = _pricing(spec)
        calls = tokens_in = tokens_out = 0
        if key.method == "paired":
            batch, _ = _targets(corpus, m.options)
            plan = PairingPlan(k=int(key.variant.split("=")[1]), repetitions=int(m.options.get("repetitions", 3)), rng_seed=config.seed)
            est = estimate_calls(corpus.priming(m.options.get("conditioners", "distilled")), batch, plan, token_inflation)
            calls, tokens_in = est.num_score_calls, est.est_tokens
        elif key.method == "prompt":
            batch, _ = _targets(corpus, m.options)
            template = PromptTemplate.load(m.options.get("template"), variant=key.variant)
            priming = corpus.priming(key.variant)
            words = 0
            for _, text in batch.targets:
                words += sum(len(msg["content"].split()) for msg in render_prompt(template, priming, text))
            calls, tokens_in, tokens_out = len(batch.targets), math.ceil(words * token_inflation), 2 * len(batch.targets)
        elif key.method == "embed":
            n = int(key.variant.split("=")[1])
            reps = int(m.options.get("replicates", 5))
            test = 2 * int(m.options.get("test_per_class", 100))
            mean_words = sum(len(s.split()) for s, _ in corpus.labelled_sentences()) / max(1, len(corpus.labelled_sentences()))
            calls = reps
            tokens_in = math.ceil(reps * (n + test) * mean_words * token_inflation)
        out.append(CellEstimate(key, calls, CostLedger(tokens_in, tokens_out, calls, price_in, price_out)))
    return out


def _report_order(c: dict) -> tuple:
    # n=20 before n=100
    variant = tuple((0, int(t), "") if t.isdigit() else (1, 0, t) for t in re.split(r"(\d+)", c["variant"]))
    return c["method"], c["model"], c["topic"], variant


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def summary_rows(cells: Iterable[dict]) -> list[dict]:
    rows = []
    for c in sorted(cells, key=_report_order):
        f1v = c.get("f1") or {}
        b = c.get("bias") or {}
        sig = bool(b.get("significant"))
        rows.append(
            {
                "method": c["method"],
                "model": c["model"],
                "topic": c["topic"],
                "variant": c["variant"],
                "f1": _fmt(f1v.get("point")),
                "ci_low": _fmt(f1v.get("ci_low")),
                "ci_high": _fmt(f1v.get("ci_high")),
                "bias": _fmt(b.get("bias")) if sig else "",
                "bias_significant": "true" if sig else "false",
                "cost": _fmt(c["ledger"]["cost"]),
            }
        )
    return rows


def load_cells(cells_dir: str | Path) -> list[dict]:
    cells = []
    for path in sorted(Path(cells_dir).glob("*.json")):
        rec = json.loads(path.read_text(encoding="utf-8"))
        if rec.get("status") == "ok":
            cells.append(rec)
    return cells


def write_report(cells_dir: str | Path, out_dir: str | Path | None = None) -> tuple[Path, Path]:
    cells = load_cells(cells_dir)
    if not cells:
        raise EmptyReportError(f"no completed cells in {cells_dir}")
    out_dir = Path(out_dir) if out_dir is not None else Path(cells_dir).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = summary_rows(cells)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    csv_path = out_dir / "summary.csv"
    csv_path.write_text(buf.getvalue(), encoding="utf-8")

    ordered = sorted(cells, key=_report_order)
    plot = {
        "version": ordered[0].get("version"),
        "cost_vs_f1": [
            {
                "method": c["method"],
                "model": c["model"],
                "topic": c["topic"],
                "variant": c["variant"],
                "cost": c["ledger"]["cost"],
                "f1": c["f1"]["point"],
                "ci_low": c["f1"]["ci_low"],
                "ci_high": c["f1"]["ci_high"],
            }
            for c in ordered
            if c.get("f1")
        ],
        "bias": [
            {
                "method": c["method"],
                "model": c["model"],
                "topic": c["topic"],
                "variant": c["variant"],
                **c["bias"],
            }
            for c in ordered
            if c.get("bias")
        ],
    }
    json_path = out_dir / "plot_data.json"
    json_path.write_text(json.dumps(plot, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path
