"""Command-line interface.

Subcommands: train, encode, query, eval, pairgen, serve. File-based
workflows run the library in-process; `serve` starts the HTTP service.
Exit codes: 0 success, 1 usage error, 2 data/format error, 3 invariant
violation.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .ensemble import EnsembleTrainer
from .evaluation import (
    DEFAULT_NEIGHBOR_FRACTION,
    POLICY_CLASS,
    POLICY_METRIC,
    average_precision,
    pair_stream,
    rank_by_distance,
)
from .formats import FormatError, bundle_from_ensemble, read_codes, read_dataset, read_model, write_codes, write_model
from .trainer import TrainerConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INVARIANT = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this CLI reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_pair_flags(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="stream and model seed")
    p.add_argument("--pairs", type=int, default=10000, help="number of training pairs")
    p.add_argument("--balance", type=float, default=None,
                   help="target similar-pair fraction (rejection sampled)")
    p.add_argument("--policy", choices=[POLICY_CLASS, POLICY_METRIC], default=None,
                   help="pair labeling policy (default: class when labels exist)")
    p.add_argument("--percentile", type=float, default=100 * DEFAULT_NEIGHBOR_FRACTION,
                   help="metric-policy neighbor percentile (percent of dataset)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="streamhash", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[], help="train hash models on a dataset file")
    p.add_argument("dataset")
    p.add_argument("-o", "--out", default="model.ohmd", help="output model file")
    p.add_argument("--bits", type=int, default=48)
    p.add_argument("--alpha", type=int, default=0)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--C", dest="c", type=float, default=0.1)
    p.add_argument("--models", type=int, default=1)
    p.add_argument("--warmup", type=int, default=256)
    p.add_argument("--kernel", action="store_true", help="enable RBF anchor mapping")
    p.add_argument("--metrics-out", default=None, help="per-step metrics CSV path")
    _add_pair_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode a dataset into packed codes")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("out")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("query", help="rank stored codes against query vectors")
    p.add_argument("model")
    p.add_argument("codes")
    p.add_argument("queries", help="dataset file of query vectors")
    p.add_argument("-k", type=int, default=10)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="mean average precision of a model on a dataset")
    p.add_argument("model")
    p.add_argument("dataset", help="database dataset file")
    p.add_argument("queries", help="query dataset file")
    p.add_argument("--policy", choices=[POLICY_CLASS, POLICY_METRIC], default=POLICY_CLASS)
    p.add_argument("--percentile", type=float, default=100 * DEFAULT_NEIGHBOR_FRACTION)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pairgen", help="print a labeled pair stream")
    p.add_argument("dataset")
    _add_pair_flags(p)
    p.set_defaults(func=cmd_pairgen)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def _resolve_policy(args, labels) -> str:
    if args.policy is not None:
        if args.policy == POLICY_CLASS and labels is None:
            raise FormatError("class policy requires a labeled dataset")
        return args.policy
    return POLICY_CLASS if labels is not None else POLICY_METRIC


def cmd_train(args) -> int:
    features, labels = read_dataset(args.dataset)
    policy = _resolve_policy(args, labels)
    config = TrainerConfig(
        n_bits=args.bits,
        alpha=args.alpha,
        beta=args.beta,
        c=args.c,
        seed=args.seed,
        warmup=args.warmup,
        use_kernel=args.kernel,
    )
    ensemble = EnsembleTrainer(config, n_models=args.models)
    stream = pair_stream(
        features,
        policy=policy,
        labels=labels,
        seed=args.seed,
        n_pairs=args.pairs,
        balance=args.balance,
        neighbor_fraction=args.percentile / 100.0,
    )

    rows = []
    cum_r = 0.0
    for labeled in stream:
        report = ensemble.consume(labeled.sample)
        if report is None:
            continue
        r = sum(report.r_star)
        ell = sum(m.prediction_loss for m in report.reports if m is not None)
        tau = max((m.tau for m in report.reports if m is not None), default=0.0)
        cum_r += r
        rows.append(
            f"{ensemble.steps},{r!r},{ell!r},{tau!r},{cum_r!r},"
            f"{1 if report.any_updated else 0}"
        )
    if not ensemble.ready:
        raise ValueError(
            "stream ended during warmup; increase --pairs or lower --warmup"
        )

    write_model(args.out, bundle_from_ensemble(ensemble))
    if args.metrics_out:
        with open(args.metrics_out, "w") as f:
            f.write("step,R,ell,tau,cumR,updated\n")
            f.write("\n".join(rows))
            if rows:
                f.write("\n")
    print(
        f"trained {args.models} model(s), {ensemble.steps} rounds, "
        f"{sum(t.updates for t in ensemble.trainers)} updates -> {args.out}"
    )
    return EXIT_OK


def cmd_encode(args) -> int:
    bundle = read_model(args.model)
    features, _ = read_dataset(args.dataset)
    write_codes(args.out, bundle.encode_all(features))
    print(f"encoded {features.shape[0]} items x {bundle.n_models} model(s) -> {args.out}")
    return EXIT_OK


def cmd_query(args) -> int:
    bundle = read_model(args.model)
    databases = read_codes(args.codes)
    if len(databases) != bundle.n_models or databases[0].n_bits != bundle.n_bits:
        raise FormatError(
            f"codes file carries {len(databases)} x {databases[0].n_bits}-bit models, "
            f"model file expects {bundle.n_models} x {bundle.n_bits}"
        )
    queries, _ = read_dataset(args.queries)
    n = len(databases[0])
    k = args.k
    if k > n:
        print(f"warning: k={k} exceeds database size {n}; returning {n}", file=sys.stderr)
        k = n
    query_codes = bundle.encode_all(queries)
    for q in range(queries.shape[0]):
        dists = np.minimum.reduce(
            [db.hamming_to(qc.row(q)) for qc, db in zip(query_codes, databases)]
        )
        order = rank_by_distance(dists)[:k]
        for rank, idx in enumerate(order.tolist()):
            print(f"{q}\t{rank}\t{idx}\t{int(dists[idx])}")
    return EXIT_OK


def cmd_eval(args) -> int:
    bundle = read_model(args.model)
    db_features, db_labels = read_dataset(args.dataset)
    q_features, q_labels = read_dataset(args.queries)
    if args.policy == POLICY_CLASS and (db_labels is None or q_labels is None):
        raise FormatError("class policy requires labels in both dataset files")

    databases = bundle.encode_all(db_features)
    query_codes = bundle.encode_all(q_features)
    n_db = db_features.shape[0]
    k = max(1, int(args.percentile / 100.0 * n_db + 1e-9))

    print("query,ap")
    aps = []
    for q in range(q_features.shape[0]):
        if args.policy == POLICY_CLASS:
            relevant = set(np.flatnonzero(db_labels == q_labels[q]).tolist())
        else:
            d = np.linalg.norm(db_features - q_features[q], axis=1)
            relevant = set(rank_by_distance(d)[:k].tolist())
        if not relevant:
            print(f"warning: query {q} has no relevant items; excluded", file=sys.stderr)
            continue
        dists = np.minimum.reduce(
            [db.hamming_to(qc.row(q)) for qc, db in zip(query_codes, databases)]
        )
        ap = average_precision(rank_by_distance(dists), relevant)
        aps.append(ap)
        print(f"{q},{ap!r}")
    if not aps:
        raise ValueError("no query had a non-empty relevant set")
    print(f"mAP,{float(np.mean(aps))!r}")
    return EXIT_OK


def cmd_pairgen(args) -> int:
    features, labels = read_dataset(args.dataset)
    policy = _resolve_policy(args, labels)
    for labeled in pair_stream(
        features,
        policy=policy,
        labels=labels,
        seed=args.seed,
        n_pairs=args.pairs,
        balance=args.balance,
        neighbor_fraction=args.percentile / 100.0,
    ):
        print(f"{labeled.i}\t{labeled.j}\t{labeled.sample.s}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
