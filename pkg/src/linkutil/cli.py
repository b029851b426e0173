"""Subcommand front-end: synth, features, train, recommend, evaluate,
oracle-check. Every run writes its outputs atomically next to a manifest of
the fully resolved parameters."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import dataio
from .em import EmConfig, fit
from .errors import LinkUtilError
from .evaluate import ALL_METHODS, EvalConfig, run_experiment
from .features import CostConfig, ValueConfig
from .infer import recommend_topk
from .proximity import KatzConfig
from .training import LabelingConfig, build_training, candidate_features


def _write_manifest(out_dir: str, subcommand: str, params: dict, inputs: dict, outputs: dict):
    manifest = {
        "subcommand": subcommand,
        "parameters": params,
        "inputs": inputs,
        "outputs": outputs,
        "tool_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    path = os.path.join(out_dir, f"manifest-{subcommand}.json")
    dataio.atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _add_feature_flags(parser):
    parser.add_argument("--alpha", type=float, default=0.5, help="impact decay factor")
    parser.add_argument("--locality", type=int, default=4, help="farthest neighborhood ring X")
    parser.add_argument("--beta", type=float, default=0.05, help="walk-score decay")
    parser.add_argument("--kmax", type=int, default=4, help="walk-score truncation length")
    parser.add_argument("--rho", type=float, default=1.0, help="cost multiplier")


def _add_em_flags(parser):
    parser.add_argument("--epsilon", type=float, default=1e-6, help="convergence threshold")
    parser.add_argument("--max-iter", type=int, default=500)
    parser.add_argument("--restarts", type=int, default=3)
    parser.add_argument("--init-frac", type=float, default=1.0 / 3.0,
                        help="initialization subsample fraction")


def _parse_months(spec: str):
    if ":" in spec:
        lo, hi = spec.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in spec.split(",") if x]


def cmd_synth(args) -> int:
    cfg = dataio.SynthConfig(
        months=args.months,
        users_per_month=args.users_per_month,
        arrival_links=args.arrival_links,
        closure_fraction=args.closure_fraction,
        attachment_exponent=args.attachment,
        homophily_weight=args.homophily,
        vocab_size=args.vocab,
        terms_per_user=args.terms_per_user,
        seed=args.seed,
        max_closures_per_month=args.max_closures,
    )
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    graph, profiles = dataio.gen_network(cfg, rng)
    os.makedirs(args.out_dir, exist_ok=True)
    edges_path = os.path.join(args.out_dir, "edges.csv")
    users_path = os.path.join(args.out_dir, "users.csv")
    profiles_path = os.path.join(args.out_dir, "profiles.csv")
    dataio.save_graph(graph, edges_path, users_path)
    dataio.save_profiles(profiles, profiles_path)
    _write_manifest(
        args.out_dir, "synth",
        params={k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        inputs={},
        outputs={"edges": edges_path, "users": users_path, "profiles": profiles_path},
    )
    print(f"wrote {graph.n_users} users, {len(graph.edges)} edges to {args.out_dir}")
    return 0


def _load_inputs(args):
    graph = dataio.load_graph(args.edges, args.users)
    profiles = dataio.load_profiles(args.profiles)
    dataio.validate_profile_coverage(graph, profiles)
    return graph, profiles


def cmd_features(args) -> int:
    graph, profiles = _load_inputs(args)
    value_cfg = ValueConfig(alpha=args.alpha, locality=args.locality)
    cost_cfg = CostConfig(rho=args.rho)
    katz_cfg = KatzConfig(beta=args.beta, k_max=args.kmax)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    if args.candidates:
        records = candidate_features(graph, profiles, args.month, value_cfg, cost_cfg, katz_cfg)
    else:
        label_cfg = LabelingConfig(k_fraction=args.k_frac)
        records = build_training(
            graph, profiles, args.month, value_cfg, cost_cfg, katz_cfg, label_cfg
        )
    dataio.save_records(records, args.out)
    _write_manifest(
        out_dir, "features",
        params={
            "month": args.month, "alpha": args.alpha, "locality": args.locality,
            "beta": args.beta, "kmax": args.kmax, "k_frac": args.k_frac,
            "rho": args.rho, "candidates": args.candidates,
        },
        inputs={"edges": args.edges, "users": args.users, "profiles": args.profiles},
        outputs={"records": args.out},
    )
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def cmd_train(args) -> int:
    records = dataio.load_records(args.records)
    cfg = EmConfig(
        epsilon=args.epsilon, max_iter=args.max_iter, restarts=args.restarts,
        init_sample_fraction=args.init_frac, seed=args.seed,
    )
    result = fit(records, cfg)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    dataio.save_theta(result.theta, args.out)
    _write_manifest(
        out_dir, "train",
        params={
            "epsilon": args.epsilon, "max_iter": args.max_iter,
            "restarts": args.restarts, "init_frac": args.init_frac, "seed": args.seed,
        },
        inputs={"records": args.records},
        outputs={"theta": args.out},
    )
    print(
        f"fit converged: restart {result.restart}, {len(result.trace) - 1} iterations, "
        f"final log-likelihood {result.trace[-1]:.6f}"
    )
    return 0


def cmd_recommend(args) -> int:
    records = dataio.load_records(args.records)
    theta = dataio.load_theta(args.theta)
    ranked = recommend_topk(records, theta, args.topk)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    dataio.save_recommendations(ranked, args.out)
    _write_manifest(
        out_dir, "recommend",
        params={"topk": args.topk},
        inputs={"records": args.records, "theta": args.theta},
        outputs={"recommendations": args.out},
    )
    print(f"wrote top-{len(ranked)} recommendations to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    graph, profiles = _load_inputs(args)
    months = _parse_months(args.months)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    eval_cfg = EvalConfig(k_fraction=args.k_frac, rho=args.rho)
    value_cfg = ValueConfig(alpha=args.alpha, locality=args.locality)
    katz_cfg = KatzConfig(beta=args.beta, k_max=args.kmax)
    em_cfg = EmConfig(
        epsilon=args.epsilon, max_iter=args.max_iter, restarts=args.restarts,
        init_sample_fraction=args.init_frac, seed=args.seed,
    )
    rows = run_experiment(
        graph, profiles, months, methods, eval_cfg,
        value_cfg=value_cfg, katz_cfg=katz_cfg, em_cfg=em_cfg,
    )
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    dataio.save_metrics(rows, args.out)
    _write_manifest(
        out_dir, "evaluate",
        params={
            "months": months, "methods": methods, "alpha": args.alpha,
            "locality": args.locality, "beta": args.beta, "kmax": args.kmax,
            "k_frac": args.k_frac, "rho": args.rho, "epsilon": args.epsilon,
            "max_iter": args.max_iter, "restarts": args.restarts, "seed": args.seed,
            "threads": args.threads,
        },
        inputs={"edges": args.edges, "users": args.users, "profiles": args.profiles},
        outputs={"metrics": args.out},
    )
    print(f"wrote {len(rows)} metric rows to {args.out}")
    return 0


def cmd_oracle_check(args) -> int:
    from . import oracles
    from .dataio import sample_record
    from .model import Theta

    rng = np.random.Generator(np.random.Philox(key=args.seed))
    worst_norm = 0.0
    worst_gamma = 0.0
    worst_joint = 0.0
    for case in range(args.cases):
        raw = np.exp(rng.uniform(-1.2, 1.2, size=16))
        p1 = float(rng.uniform(0.2, 0.8))
        theta = Theta.from_array(np.concatenate([[1 - p1, p1], raw])).validate()
        from .features import FeatureRecord
        rec = FeatureRecord(
            V=float(rng.uniform(0.05, 4.0)), C=float(rng.uniform(0.05, 4.0)),
            S=float(rng.uniform(0.05, 4.0)), N=float(rng.uniform(0.05, 4.0)),
            label=int(rng.integers(0, 2)),
        )
        norm = oracles.posterior_normalization(rec, theta)
        worst_norm = max(worst_norm, abs(norm - 1.0))
        r = theta.rates(int(rec.label))
        from .model import gamma_moments
        closed = gamma_moments(rec.S, rec.N, r)
        means = oracles.piece_means(rec.S, rec.N, r)
        for k in range(4):
            cf = float(np.atleast_1d(closed[k])[0])
            if means[k] > 0:
                worst_gamma = max(worst_gamma, abs(cf - means[k]) / abs(means[k]))
        from .model import log_joint_integral
        for lab in (0, 1):
            li = float(log_joint_integral(rec.V, rec.C, rec.S, rec.N, theta.rates(lab)))
            lq = oracles.log_joint_integral_quad(rec, theta, lab)
            worst_joint = max(worst_joint, abs(li - lq))
    ok = worst_norm <= 1e-6 and worst_gamma <= 1e-8 and worst_joint <= 1e-8
    print(f"cases: {args.cases}")
    print(f"max |posterior integral - 1|: {worst_norm:.3e} (tolerance 1e-6)")
    print(f"max latent-mean closed-form rel err: {worst_gamma:.3e} (tolerance 1e-8)")
    print(f"max log-joint abs err: {worst_joint:.3e} (tolerance 1e-8)")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linkutil",
        description="Utility-based link recommendation pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic temporal network")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--months", type=int, default=12)
    p.add_argument("--users-per-month", type=int, default=100)
    p.add_argument("--arrival-links", type=int, default=2)
    p.add_argument("--closure-fraction", type=float, default=0.02)
    p.add_argument("--attachment", type=float, default=1.0)
    p.add_argument("--homophily", type=float, default=2.0)
    p.add_argument("--vocab", type=int, default=60)
    p.add_argument("--terms-per-user", type=int, default=4)
    p.add_argument("--max-closures", type=int, default=4000)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="emit training records or candidate features")
    p.add_argument("--edges", required=True)
    p.add_argument("--users", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--month", type=int, required=True,
                   help="training month t (features at t-1, outcomes at t); with "
                        "--candidates, the snapshot month itself")
    p.add_argument("--k-frac", type=float, default=0.005)
    p.add_argument("--candidates", action="store_true",
                   help="emit unlabeled candidate features at --month")
    p.add_argument("--out", required=True)
    _add_feature_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="learn the model from a records file")
    p.add_argument("--records", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_em_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recommend", help="rank candidates with a learned model")
    p.add_argument("--records", required=True)
    p.add_argument("--theta", required=True)
    p.add_argument("--topk", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("evaluate", help="month-by-month method comparison")
    p.add_argument("--edges", required=True)
    p.add_argument("--users", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--months", required=True, help="current months, e.g. 2:11 or 2,3,4")
    p.add_argument("--methods", default=",".join(ALL_METHODS))
    p.add_argument("--k-frac", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)
    _add_feature_flags(p)
    _add_em_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle-check", help="verify closed forms against quadrature")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=1000)
    p.set_defaults(func=cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LinkUtilError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
