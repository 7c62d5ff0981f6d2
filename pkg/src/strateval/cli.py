"""Command-line front end: calibrate -> plan -> annotate -> estimate, plus simulate.

Every subcommand writes into ``--out DIR`` with fixed file names, embeds
its full run config in each output (a ``config`` key in JSON files, a
leading ``#`` comment line in CSV files), and never writes timestamps —
rerunning a subcommand with identical arguments reproduces identical
bytes.

Exit codes: 0 success; 2 parse error (unreadable or malformed file or
config); 3 precondition error (valid inputs, invalid operation
parameters); 4 consistency error (inputs disagree with each other, or a
requested result assertion failed).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .allocate import (
    AllocationPlan,
    neyman,
    plugin_sd_accuracy,
    plugin_sd_general,
    proportional,
)
from .calibration import fit_isotonic, split_half
from .dataset import Population, ingest
from .errors import ConsistencyError, ParseError, PreconditionError
from .estimators import (
    EstimateReport,
    confidence_interval,
    difference_estimate,
    horvitz_thompson,
    plugin_se_ssrs,
)
from .losses import LossKind, conditional_moments
from .sampling import draw_ssrs, load_worksheet, worksheet_csv
from .simulate import (
    MIN_REPS,
    SuperpopSpec,
    efficiency_csv,
    efficiency_table,
    generate,
    run_mc,
)
from .stratify import StrataPartition, equal_width_bins, kmeans_1d, kmeans_embeddings
from .dataset import _check_loss_value

EXIT_PARSE = 2
EXIT_PRECONDITION = 3
EXIT_CONSISTENCY = 4

DEFAULT_SEED_SPLIT = 13
DEFAULT_SEED_SAMPLE = 37
DEFAULT_SEED_SIM = 101
DEFAULT_SEED_STRAT = 7
DEFAULT_STRATA = 10


def _config_dict(args: argparse.Namespace) -> dict:
    cfg = {"version": __version__}
    for key, value in sorted(vars(args).items()):
        if key == "func":
            continue
        cfg[key] = str(value) if isinstance(value, Path) else value
    return cfg


def _config_comment(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return f"# strateval {__version__} config={blob}\n"


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- calibrate ---------------------------------------------------------------


def cmd_calibrate(args) -> int:
    cfg = _config_dict(args)
    pop = ingest(args.input, args.loss_kind)
    cal, ev = split_half(pop, args.seed_split)
    if not cal.has_all_losses:
        missing = int(np.isnan(cal.loss).sum())
        raise ConsistencyError(
            f"calibration half has {missing} unit(s) without a loss; "
            "annotate them before calibrating"
        )
    iso = fit_isotonic(cal.proxy, cal.loss)
    out = _out_dir(args)
    map_doc = json.loads(iso.to_json())
    map_doc["config"] = cfg
    _write_json(out / "map.json", map_doc)
    ev = ev.with_proxy_cal(iso.apply(ev.proxy))
    (out / "calibrated.csv").write_text(_config_comment(cfg) + ev.canonical_csv())
    print(f"calibrate: fitted {iso.breakpoints.size} steps on {cal.size} units; "
          f"wrote {out / 'map.json'} and {out / 'calibrated.csv'}")
    return 0


# -- plan --------------------------------------------------------------------


def _build_partition(pop: Population, args) -> StrataPartition:
    if args.stratify_on == "proxy":
        return kmeans_1d(pop.get_proxy(args.proxy_col), args.strata)
    if args.stratify_on == "bins":
        return equal_width_bins(pop.get_proxy(args.proxy_col), args.strata)
    if pop.embeddings is None:
        raise PreconditionError(
            "--stratify-on embeddings needs emb_* columns in the dataset"
        )
    return kmeans_embeddings(pop.embeddings, args.strata, args.seed_strat)


def _plugin_sds(pop: Population, partition: StrataPartition, args, warnings: list) -> np.ndarray:
    proxy = pop.get_proxy(args.proxy_col)
    kind = LossKind(args.loss_kind)
    sds = np.empty(partition.n_strata)
    if kind is LossKind.ACCURACY:
        for h in range(partition.n_strata):
            sds[h] = plugin_sd_accuracy(float(np.mean(proxy[partition.members(h)])))
        return sds
    if pop.scores is None:
        raise PreconditionError(
            f"neyman planning for {kind.value} needs --scores to supply "
            "per-unit class scores"
        )
    zbar = np.empty(pop.size)
    z2bar = np.empty(pop.size)
    for i in range(pop.size):
        if pop.scores[i] is None:
            raise ConsistencyError(
                f"unit {pop.ids[i]!r} has no class scores in the sidecar"
            )
        zbar[i], z2bar[i] = conditional_moments(kind, pop.scores[i])
    for h in range(partition.n_strata):
        m = partition.members(h)
        sds[h] = plugin_sd_general(
            float(np.mean(zbar[m])), float(np.mean(z2bar[m])), warnings=warnings
        )
    return sds


def cmd_plan(args) -> int:
    cfg = _config_dict(args)
    pop = ingest(args.input, args.loss_kind, scores_path=args.scores)
    n = args.budget
    if not 1 <= n <= pop.size:
        raise PreconditionError(f"budget {n} outside [1, {pop.size}]")
    warnings: list[str] = []
    if args.strategy == "srs":
        if n < 2:
            raise PreconditionError("budget must be >= 2 for a variance estimate")
        # plain SRS is the single-stratum design, drawn through the same
        # stratified path so `--strata 1 --strategy prop` matches it byte
        # for byte
        partition = StrataPartition(np.zeros(pop.size, dtype=np.int64), 1)
        plan = AllocationPlan(strategy="srs", n_h=np.array([n]))
        draw = draw_ssrs(pop, partition, plan, args.seed_sample)
    else:
        partition = _build_partition(pop, args)
        warnings.extend(partition.warnings)
        if args.strategy == "prop":
            plan = proportional(partition.sizes, n)
        else:
            sds = _plugin_sds(pop, partition, args, warnings)
            plan = neyman(partition.sizes, sds, n)
        plan = AllocationPlan(
            strategy=plan.strategy, n_h=plan.n_h, warnings=warnings + plan.warnings
        )
        draw = draw_ssrs(pop, partition, plan, args.seed_sample)
    out = _out_dir(args)
    (out / "partition.csv").write_text(
        _config_comment(cfg)
        + "id,stratum\n"
        + "".join(f"{uid},{int(h)}\n" for uid, h in zip(pop.ids, partition.assignment))
    )
    plan_doc = json.loads(plan.to_json())
    plan_doc["config"] = cfg
    _write_json(out / "plan.json", plan_doc)
    (out / "worksheet.csv").write_text(_config_comment(cfg) + worksheet_csv(draw))
    print(
        f"plan: {partition.n_strata} strata, allocation "
        f"{plan.n_h.tolist()} (total {plan.total}); wrote partition.csv, "
        f"plan.json, worksheet.csv under {out}"
    )
    return 0


# -- estimate ------------------------------------------------------------------


def _design_from_worksheet(ws) -> tuple[np.ndarray, np.ndarray]:
    labels = np.unique(ws.strata)
    if labels[0] != 0 or labels[-1] != labels.size - 1:
        raise ParseError("worksheet strata must be labeled 0..H-1")
    sizes = np.empty(labels.size, dtype=np.int64)
    for h in labels:
        mask = ws.strata == h
        pis = np.unique(ws.pi[mask])
        if pis.size != 1:
            raise ConsistencyError(f"stratum {h} has inconsistent pi values")
        implied = mask.sum() / pis[0]
        if abs(implied - round(implied)) > 1e-6:
            raise ConsistencyError(
                f"stratum {h}: pi={pis[0]} and n_h={int(mask.sum())} imply "
                f"non-integer stratum size {implied}"
            )
        sizes[h] = round(implied)
    return labels, sizes


def cmd_estimate(args) -> int:
    cfg = _config_dict(args)
    pop = ingest(args.input, args.loss_kind)
    ws = load_worksheet(args.worksheet)
    sample_idx = np.array([pop.index_of(uid) for uid in ws.ids], dtype=np.int64)
    if np.any(np.isnan(ws.loss)):
        missing = [ws.ids[i] for i in np.flatnonzero(np.isnan(ws.loss))]
        raise ConsistencyError(
            f"sampled unit(s) missing a loss: {', '.join(missing[:5])}"
            + ("..." if len(missing) > 5 else "")
        )
    for uid, val in zip(ws.ids, ws.loss):
        _check_loss_value(pop.loss_kind, float(val), f"worksheet loss for {uid!r}")
    labels, sizes = _design_from_worksheet(ws)
    if int(sizes.sum()) != pop.size:
        raise ConsistencyError(
            f"worksheet design covers {int(sizes.sum())} units but the "
            f"dataset has {pop.size}"
        )
    out = _out_dir(args)
    n = ws.loss.size
    theta = horvitz_thompson(ws.loss, ws.pi, pop.size)
    se = plugin_se_ssrs(ws.loss, ws.strata, sizes)
    ht_report = EstimateReport(
        estimator="ht",
        design="srs" if labels.size == 1 else "ssrs",
        theta=theta,
        se=se,
        level=args.level,
        ci=confidence_interval(theta, se, args.level),
        n=n,
        pop_size=pop.size,
        diagnostics={
            "stratum_sizes": [int(s) for s in sizes],
            "stratum_n": [int((ws.strata == h).sum()) for h in labels],
            "stratum_loss_mean": [
                float(ws.loss[ws.strata == h].mean()) for h in labels
            ],
        },
    )
    payload = {"config": cfg, "ht": ht_report.to_dict(), "df": None}

    proxies = pop.get_proxy(args.proxy_col) if _has_proxy(pop, args.proxy_col) else None
    if proxies is not None and not np.any(np.isnan(proxies)):
        proxy_mean = float(np.mean(proxies))
        residuals = ws.loss - proxies[sample_idx]
        theta_df = difference_estimate(
            ws.loss, proxies[sample_idx], ws.pi, proxy_mean, pop.size
        )
        se_df = plugin_se_ssrs(residuals, ws.strata, sizes)
        df_report = EstimateReport(
            estimator="df",
            design=ht_report.design,
            theta=theta_df,
            se=se_df,
            level=args.level,
            ci=confidence_interval(theta_df, se_df, args.level),
            n=n,
            pop_size=pop.size,
            diagnostics={
                "proxy_pool_mean": proxy_mean,
                "residual_correction": theta_df - proxy_mean,
                "proxy_col": args.proxy_col,
            },
        )
        payload["df"] = df_report.to_dict()
    _write_json(out / "report.json", payload)
    df_note = "" if payload["df"] is None else f", df theta={payload['df']['theta']:.6g}"
    print(f"estimate: ht theta={theta:.6g} se={se:.6g}{df_note}; wrote {out / 'report.json'}")
    return 0


def _has_proxy(pop: Population, column: str) -> bool:
    return column == "proxy" or (column == "proxy_cal" and pop.proxy_cal is not None)


# -- simulate ------------------------------------------------------------------


def _load_sim_spec(path: Path) -> dict:
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON ({e.msg})") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: spec must be a JSON object")
    for req in ("population", "budget", "reps", "methods"):
        if req not in doc:
            raise ParseError(f"{path}: spec missing {req!r}")
    return doc


def cmd_simulate(args) -> int:
    cfg = _config_dict(args)
    doc = _load_sim_spec(Path(args.spec))
    pop_doc = doc["population"]
    try:
        spec = SuperpopSpec(
            family=pop_doc["family"],
            size=int(pop_doc["size"]),
            seed=int(pop_doc.get("seed", 0)),
            params=pop_doc.get("params", {}),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad population spec: {e}") from None
    pop = generate(spec)
    reps = int(doc["reps"])
    if MIN_REPS <= reps < 1000:
        print(
            f"warning: reps={reps} gives a Monte Carlo standard error too "
            "large for ordering assertions; use >= 1000",
            file=sys.stderr,
        )
    n = int(doc["budget"])
    strata = int(doc.get("strata", 2))
    level = float(doc.get("level", 0.95))
    sim_seed = int(doc.get("sim_seed", args.seed_sim))
    methods = doc["methods"]
    needs_partition = any(m.get("design") == "ssrs" for m in methods)
    partition = kmeans_1d(pop.proxy, strata) if needs_partition else None
    results = {}
    for m in methods:
        try:
            name = m["name"]
        except (KeyError, TypeError):
            raise ParseError("each method needs a 'name'") from None
        results[name] = run_mc(
            pop,
            design=m.get("design", "srs"),
            estimator=m.get("estimator", "ht"),
            n=n,
            reps=reps,
            seed=sim_seed,
            partition=partition,
            allocation=m.get("allocation", "prop"),
            sd_source=m.get("sd_source", "true"),
            level=level,
        )
    baseline = doc.get("baseline", next(iter(results)))
    table = efficiency_table(results, baseline)
    ordering_ok = None
    if "assert_ordering" in doc:
        chain = doc["assert_ordering"]
        ordering_ok = True
        for left, right in zip(chain, chain[1:]):
            a, b = results[left], results[right]
            slack = 3.0 * float(np.hypot(a.mse_mc_se, b.mse_mc_se))
            if a.empirical_mse > b.empirical_mse + slack:
                ordering_ok = False
                break
    out = _out_dir(args)
    payload = {
        "config": cfg,
        "spec": doc,
        "results": {name: r.to_dict() for name, r in results.items()},
        "efficiency": table,
        "baseline": baseline,
        "ordering_ok": ordering_ok,
    }
    _write_json(out / "results.json", payload)
    (out / "efficiency.csv").write_text(
        _config_comment(cfg) + efficiency_csv(table, row_label=spec.family)
    )
    for name, r in results.items():
        print(
            f"simulate[{name}]: mse={r.empirical_mse:.4e} (mc se {r.mse_mc_se:.1e}) "
            f"bias={r.bias:+.2e} coverage={r.coverage:.3f}"
        )
    if ordering_ok is False:
        raise ConsistencyError("requested MSE ordering violated beyond 3 mc_se")
    print(f"simulate: wrote {out / 'results.json'} and {out / 'efficiency.csv'}")
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="strateval",
        description=(
            "Stratify, sample, and estimate a model's mean loss on a "
            "labeling budget."
        ),
        epilog="Exit codes: 0 ok, 2 parse error, 3 precondition error, 4 consistency error.",
    )
    p.add_argument("--version", action="version", version=f"strateval {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument(
        "--loss-kind",
        default="accuracy",
        choices=[k.value for k in LossKind],
        help="loss the proxy/loss columns refer to",
    )

    pc = sub.add_parser(
        "calibrate",
        parents=[common],
        help="fit an isotonic proxy->loss map on a random half of the pool",
    )
    pc.add_argument("--input", required=True, help="dataset CSV/JSONL with losses")
    pc.add_argument("--seed-split", type=int, default=DEFAULT_SEED_SPLIT)
    pc.set_defaults(func=cmd_calibrate)

    pp = sub.add_parser(
        "plan",
        parents=[common],
        help="stratify the pool, split the budget, and draw the sample",
    )
    pp.add_argument("--input", required=True, help="dataset CSV/JSONL")
    pp.add_argument("--scores", default=None, help="class-score sidecar JSONL")
    pp.add_argument("--proxy-col", default="proxy", choices=["proxy", "proxy_cal"])
    pp.add_argument("--strata", type=int, default=DEFAULT_STRATA, metavar="H")
    pp.add_argument("--budget", type=int, required=True, metavar="N_LABELS")
    pp.add_argument("--strategy", default="prop", choices=["srs", "prop", "neyman"])
    pp.add_argument(
        "--stratify-on", default="proxy", choices=["proxy", "embeddings", "bins"]
    )
    pp.add_argument("--seed-sample", type=int, default=DEFAULT_SEED_SAMPLE)
    pp.add_argument("--seed-strat", type=int, default=DEFAULT_SEED_STRAT)
    pp.set_defaults(func=cmd_plan)

    pe = sub.add_parser(
        "estimate",
        parents=[common],
        help="turn an annotated worksheet into point estimates with CIs",
    )
    pe.add_argument("--input", required=True, help="dataset CSV/JSONL")
    pe.add_argument("--worksheet", required=True, help="worksheet CSV with losses filled")
    pe.add_argument("--proxy-col", default="proxy", choices=["proxy", "proxy_cal"])
    pe.add_argument("--level", type=float, default=0.95)
    pe.set_defaults(func=cmd_estimate)

    ps = sub.add_parser(
        "simulate",
        parents=[common],
        help="Monte Carlo comparison of designs/estimators on a synthetic pool",
    )
    ps.add_argument("--spec", required=True, help="simulation spec JSON")
    ps.add_argument("--seed-sim", type=int, default=DEFAULT_SEED_SIM)
    ps.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as e:
        print(f"error (parse): {e}", file=sys.stderr)
        return EXIT_PARSE
    except PreconditionError as e:
        print(f"error (precondition): {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ConsistencyError as e:
        print(f"error (consistency): {e}", file=sys.stderr)
        return EXIT_CONSISTENCY


if __name__ == "__main__":
    sys.exit(main())
