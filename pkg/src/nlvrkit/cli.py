"""Command-line entry point: gen | pair | enumerate | execute | train | eval
| reward | ablation.

Every artifact-producing command writes a run manifest (command line, config
hash, seed, input/output digests, timestamps) next to its outputs; outputs
are a pure function of the manifest inputs.  Exit codes: 0 success, 1 usage
error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

from . import __version__
from .consistency import ConsistencyError, relevant_actions
from .evaluation import evaluate
from .executor import execute
from .generate import generate_corpus
from .language import Grammar, LanguageError, build_grammar, parse_text, pretty_print
from .model import ModelError, ScorerParams
from .pairing import PairingError, build_pairs, load_pairs, save_pairs
from .scene import CorpusError, load_corpus, save_corpus
from .search import SearchError, beam_search, enumerate_programs, filter_correct, harvest_programs, renormalize
from .training import TrainConfig, TrainingError, iterative_train, write_metrics_jsonl

log = logging.getLogger(__name__)

DATA_ERRORS = (
    CorpusError,
    LanguageError,
    PairingError,
    TrainingError,
    SearchError,
    ConsistencyError,
    ModelError,
    FileNotFoundError,
    json.JSONDecodeError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# ---------------------------------------------------------------------------
# Run manifests


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path, command, seed, config, inputs, outputs, started):
    manifest = {
        "command": command,
        "config_hash": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()
        ).hexdigest(),
        "seed": seed,
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    return manifest


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen(args) -> int:
    started = _now()
    corpus = generate_corpus(args.seed, args.n)
    save_corpus(corpus, args.out)
    write_manifest(
        str(args.out) + ".manifest.json",
        ["gen", "--seed", str(args.seed), "--n", str(args.n)],
        args.seed,
        {"n": args.n},
        inputs=[],
        outputs=[args.out],
        started=started,
    )
    print(f"wrote {len(corpus)} examples to {args.out}")
    return 0


def cmd_pair(args) -> int:
    started = _now()
    corpus = load_corpus(args.corpus)
    pairs = build_pairs(corpus, seed=args.seed)
    save_pairs(pairs, args.out)
    write_manifest(
        str(args.out) + ".manifest.json",
        ["pair", "--corpus", str(args.corpus), "--seed", str(args.seed)],
        args.seed,
        {},
        inputs=[args.corpus],
        outputs=[args.out],
        started=started,
    )
    matched = len({p.x_id for p in pairs})
    print(f"wrote {len(pairs)} pairs over {matched} utterances to {args.out}")
    return 0


def _flat_scenes(corpus):
    return [(scene, denot) for ex in corpus for scene, denot in ex.scenes]


def cmd_enumerate(args) -> int:
    grammar = build_grammar(args.grammar)
    scenes = _flat_scenes(load_corpus(args.scenes)) if args.scenes else None
    count = 0
    for program in enumerate_programs(grammar, args.max_actions):
        if scenes is not None and not all(
            execute(program, s) == d for s, d in scenes
        ):
            continue
        print(pretty_print(program))
        count += 1
        if args.limit and count >= args.limit:
            break
    return 0


def cmd_execute(args) -> int:
    grammar = build_grammar(args.grammar)
    program = parse_text(grammar, args.program)
    corpus = load_corpus(args.scenes)
    for scene, _denot in _flat_scenes(corpus):
        print("true" if execute(program, scene) else "false")
    return 0


def cmd_train(args) -> int:
    started = _now()
    corpus = load_corpus(args.corpus)
    pairs = load_pairs(args.pairs) if args.pairs else None
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            config = TrainConfig.from_json(json.load(f))
    else:
        config = TrainConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if pairs and not config.use_consistency:
        config = replace(config, use_consistency=True)
    os.makedirs(args.out, exist_ok=True)
    result = iterative_train(config, corpus, pairs)
    outputs = []
    for label, params in result.checkpoints:
        path = os.path.join(args.out, f"checkpoint-{label}.json")
        params.save(path)
        outputs.append(path)
    final = os.path.join(args.out, "checkpoint.json")
    result.params.save(final)
    outputs.append(final)
    metrics_path = os.path.join(args.out, "metrics.jsonl")
    write_metrics_jsonl(result.metrics, metrics_path)
    outputs.append(metrics_path)
    config_path = os.path.join(args.out, "config.json")
    with open(config_path, "w", encoding="utf-8") as f:
        json.dump(config.to_json(), f, indent=1, sort_keys=True)
        f.write("\n")
    outputs.append(config_path)
    inputs = [args.corpus] + ([args.pairs] if args.pairs else [])
    write_manifest(
        os.path.join(args.out, "manifest.json"),
        ["train"],
        config.seed,
        config.to_json(),
        inputs=inputs,
        outputs=outputs,
        started=started,
    )
    last = result.metrics[-1] if result.metrics else {}
    print(json.dumps({"final_accuracy": last.get("accuracy"),
                      "final_consistency": last.get("consistency"),
                      "out": args.out}))
    return 0


def cmd_eval(args) -> int:
    started = _now()
    corpus = load_corpus(args.corpus)
    params = ScorerParams.load(args.checkpoint)
    grammar = build_grammar(args.grammar)
    report = evaluate(params, corpus, grammar, k=args.k, jobs=args.jobs)
    payload = report.to_json(per_utterance=args.per_utterance)
    text = json.dumps(payload, indent=1)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
        write_manifest(
            str(args.out) + ".manifest.json",
            ["eval"],
            0,
            {"k": args.k, "grammar": args.grammar},
            inputs=[args.corpus, args.checkpoint],
            outputs=[args.out],
            started=started,
        )
    return 0


def cmd_reward(args) -> int:
    corpus = load_corpus(args.corpus)
    pairs = load_pairs(args.pairs)
    if not (0 <= args.pair < len(pairs)):
        raise UsageError(f"--pair must index into the {len(pairs)} pairs of {args.pairs}")
    pair = pairs[args.pair]
    by_id = {ex.id: ex for ex in corpus}
    x, xp = by_id[pair.x_id], by_id[pair.x_prime_id]
    params = ScorerParams.load(args.checkpoint)
    grammar = build_grammar(args.grammar)
    beam = beam_search(params, x.utterance, grammar, args.k)
    nbeam = beam_search(params, xp.utterance, grammar, args.k)
    ncorrect = filter_correct(nbeam, xp.scenes)
    weighted = renormalize(ncorrect) if len(ncorrect) else []
    neighbor_sets = [
        (sorted(relevant_actions(c.attention, c.program, pair.span_x_prime, args.tau)), w)
        for c, w in weighted
    ]
    from .consistency import pair_consistency

    rows = []
    for cand in beam:
        mine = relevant_actions(cand.attention, cand.program, pair.span_x, args.tau)
        per_neighbor = [
            pair_consistency(mine, frozenset(theirs)) for theirs, _w in neighbor_sets
        ]
        c_val = sum(w * s for (_t, w), s in zip(neighbor_sets, per_neighbor))
        rows.append(
            {
                "program": pretty_print(cand.program),
                "log_prob": cand.log_prob,
                "relevant_actions": sorted(mine),
                "per_neighbor_S": per_neighbor,
                "C": c_val,
            }
        )
    print(
        json.dumps(
            {
                "pair": {
                    "x": pair.x_id,
                    "x_prime": pair.x_prime_id,
                    "phrase": " ".join(pair.phrase),
                },
                "neighbors": [
                    {"relevant_actions": t, "weight": w} for t, w in neighbor_sets
                ],
                "candidates": rows,
            },
            indent=1,
        )
    )
    return 0


# ---------------------------------------------------------------------------
# Desk-scale ablation: {old, new} x {reward off, on}, several seeds


@dataclass(frozen=True)
class AblationConfig:
    out_dir: str | None = None
    train_n: int = 200
    eval_n: int = 120
    corpus_seed: int = 11
    n_seeds: int = 5
    jobs: int = max(1, os.cpu_count() or 1)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        beam_size=10,
        learning_rate=0.25,
        mml_epochs=2,
        rbm_epochs=2,
        iterations=3,
        search_budget=11,
        search_cap=20,
        search_max_candidates=150_000,
    ))


def _run_one(job):
    """One (grammar, reward, seed) training run; returns the summary row."""
    config, corpus, eval_corpus, pairs, initial = job
    result = iterative_train(config, corpus, pairs if config.use_consistency else None,
                             initial_programs=initial)
    grammar = build_grammar(config.grammar)
    report = evaluate(result.params, eval_corpus, grammar, config.beam_size)
    train_rows = [m for m in result.metrics if m["accuracy"] is not None]
    return {
        "grammar": config.grammar,
        "reward": config.use_consistency,
        "seed": config.seed,
        "eval_accuracy": report.accuracy,
        "eval_consistency": report.consistency,
        "train_accuracy": train_rows[-1]["accuracy"] if train_rows else None,
        "train_consistency": train_rows[-1]["consistency"] if train_rows else None,
    }


def experiment_consistency_ablation(config: AblationConfig) -> dict:
    """Train {old, new} x {reward off, on} over several seeds and tabulate.

    Returns {"rows": [...per-run...], "table": [...4 aggregated rows...],
    "corpus": {...stats...}}; also writes table + JSON when out_dir is set.
    """
    started = _now()
    corpus = generate_corpus(config.corpus_seed, config.train_n)
    eval_corpus = generate_corpus(config.corpus_seed + 1, config.eval_n)
    pairs = build_pairs(corpus, seed=config.corpus_seed)
    paired_utterances = len({p.x_id for p in pairs})

    # heuristic-search program sets depend only on the grammar, so compute
    # them once per variant and share across seeds
    initial = {}
    for variant in ("old", "new"):
        grammar = build_grammar(variant)
        initial[variant] = {
            ex.id: harvest_programs(
                grammar, ex.scenes, config.train.search_budget,
                max_programs=config.train.search_cap,
                max_candidates=config.train.search_max_candidates,
            )
            for ex in corpus
        }

    jobs = []
    for variant in ("old", "new"):
        for use_consistency in (False, True):
            for s in range(config.n_seeds):
                run_cfg = replace(
                    config.train,
                    grammar=variant,
                    use_consistency=use_consistency,
                    seed=config.corpus_seed * 1000 + s,
                )
                jobs.append((run_cfg, corpus, eval_corpus, pairs, initial[variant]))

    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_run_one, jobs))
    else:
        rows = [_run_one(j) for j in jobs]

    table = []
    for variant in ("old", "new"):
        for use_consistency in (False, True):
            sel = [r for r in rows if r["grammar"] == variant and r["reward"] == use_consistency]
            entry = {"config": f"{variant}{'+reward' if use_consistency else ''}"}
            for metric in ("eval_accuracy", "eval_consistency"):
                vals = [r[metric] for r in sel]
                entry[metric + "_mean"] = statistics.mean(vals)
                entry[metric + "_sd"] = statistics.pstdev(vals)
            table.append(entry)

    result = {
        "rows": rows,
        "table": table,
        "corpus": {
            "train_n": config.train_n,
            "eval_n": config.eval_n,
            "pairs": len(pairs),
            "paired_utterances": paired_utterances,
        },
    }
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        json_path = os.path.join(config.out_dir, "ablation.json")
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(result, f, indent=1)
            f.write("\n")
        table_path = os.path.join(config.out_dir, "table.txt")
        with open(table_path, "w", encoding="utf-8") as f:
            f.write(format_ablation_table(result) + "\n")
        write_manifest(
            os.path.join(config.out_dir, "manifest.json"),
            ["ablation"],
            config.corpus_seed,
            asdict(config),
            inputs=[],
            outputs=[json_path, table_path],
            started=started,
        )
    return result


def format_ablation_table(result: dict) -> str:
    lines = [
        f"{'config':<14} {'accuracy':>16} {'consistency':>16}",
        "-" * 48,
    ]
    for row in result["table"]:
        acc = f"{row['eval_accuracy_mean']:.3f}±{row['eval_accuracy_sd']:.3f}"
        con = f"{row['eval_consistency_mean']:.3f}±{row['eval_consistency_sd']:.3f}"
        lines.append(f"{row['config']:<14} {acc:>16} {con:>16}")
    c = result["corpus"]
    lines.append(
        f"(train {c['train_n']} utt, eval {c['eval_n']} utt, "
        f"{c['paired_utterances']} paired utterances / {c['pairs']} pairs)"
    )
    return "\n".join(lines)


def cmd_ablation(args) -> int:
    config = AblationConfig(
        out_dir=args.out,
        train_n=args.train_n,
        eval_n=args.eval_n,
        corpus_seed=args.seed,
        n_seeds=args.n_seeds,
        jobs=args.jobs,
    )
    if args.iterations or args.mml_epochs or args.rbm_epochs:
        train = config.train
        if args.iterations:
            train = replace(train, iterations=args.iterations)
        if args.mml_epochs:
            train = replace(train, mml_epochs=args.mml_epochs)
        if args.rbm_epochs:
            train = replace(train, rbm_epochs=args.rbm_epochs)
        config = replace(config, train=train)
    result = experiment_consistency_ablation(config)
    print(format_ablation_table(result))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="nlvrkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_gen)

    p = sub.add_parser("pair", help="build related-utterance pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_pair)

    p = sub.add_parser("enumerate", help="enumerate well-typed programs")
    p.add_argument("--grammar", choices=["new", "old"], default="new")
    p.add_argument("--max-actions", type=int, required=True, dest="max_actions")
    p.add_argument("--scenes", help="keep only programs correct on every scene in this corpus")
    p.add_argument("--limit", type=int, default=0)
    p.set_defaults(run=cmd_enumerate)

    p = sub.add_parser("execute", help="run one program over a corpus of scenes")
    p.add_argument("--grammar", choices=["new", "old"], default="new")
    p.add_argument("--program", required=True)
    p.add_argument("--scenes", required=True)
    p.set_defaults(run=cmd_execute)

    p = sub.add_parser("train", help="iterative MML/RBM training")
    p.add_argument("--corpus", required=True)
    p.add_argument("--pairs")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grammar", choices=["new", "old"], default="new")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--per-utterance", action="store_true", dest="per_utterance")
    p.add_argument("--out")
    p.set_defaults(run=cmd_eval)

    p = sub.add_parser("reward", help="inspect the consistency reward for one pair")
    p.add_argument("--corpus", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--pair", type=int, required=True, help="index into the pairs file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grammar", choices=["new", "old"], default="new")
    p.add_argument("--tau", type=float, default=0.6)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(run=cmd_reward)

    p = sub.add_parser("ablation", help="desk-scale {old,new} x {reward on,off} comparison")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--train-n", type=int, default=200, dest="train_n")
    p.add_argument("--eval-n", type=int, default=120, dest="eval_n")
    p.add_argument("--n-seeds", type=int, default=5, dest="n_seeds")
    p.add_argument("--jobs", type=int, default=max(1, os.cpu_count() or 1))
    p.add_argument("--iterations", type=int)
    p.add_argument("--mml-epochs", type=int, dest="mml_epochs")
    p.add_argument("--rbm-epochs", type=int, dest="rbm_epochs")
    p.set_defaults(run=cmd_ablation)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("NLVRKIT_LOGLEVEL", "WARNING"))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.run(args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
