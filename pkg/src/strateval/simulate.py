"""Synthetic populations and Monte Carlo validation of the estimators.

The generator draws pools whose per-unit annotation outcome is Bernoulli
with a known conditional mean, so every closed-form design MSE has a
ground truth to be checked against.  Families:

* ``two_point`` — the conditional mean takes one of a few fixed values
  (``p_values``) with given mixing ``weights``.
* ``beta_conditional`` — the conditional mean is Beta(alpha, beta).
* ``miscalibrated`` — a ``two_point`` pool whose *stored* proxy is the
  distorted ``clip(slope * p + offset, 0, 1)`` while losses still follow
  the true ``p``; identity distortion reproduces ``two_point`` bit for
  bit at the same seed.

``run_mc`` replays a design/estimator pair over many replicated draws.
Replication ``r`` uses the substream derived from ``(seed, r)`` and draws
exactly what ``draw_srs`` / ``draw_ssrs`` would draw with that sub-seed,
so the harness validates the real sampling path.  Accumulation uses
numpy's pairwise summation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocate import neyman, plugin_sd_accuracy, proportional
from .dataset import Population
from .errors import ParseError, PreconditionError
from .estimators import normal_quantile
from .losses import LossKind
from .rng import derive_seed, generator, srs_indices
from .stratify import StrataPartition

FAMILIES = ("two_point", "beta_conditional", "miscalibrated")


@dataclass
class SuperpopSpec:
    """Recipe for one synthetic pool."""

    family: str
    size: int
    seed: int
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ParseError(
                f"unknown family {self.family!r}; expected one of {FAMILIES}"
            )
        if self.size < 2:
            raise PreconditionError("pool size must be at least 2")
        p = self.params
        if self.family in ("two_point", "miscalibrated"):
            values = np.asarray(p.get("p_values", ()), dtype=float)
            weights = np.asarray(p.get("weights", ()), dtype=float)
            if values.size == 0 or values.shape != weights.shape:
                raise ParseError("need aligned nonempty p_values and weights")
            if np.any(values < 0) or np.any(values > 1):
                raise ParseError("p_values must lie in [0,1]")
            if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
                raise ParseError("weights must be nonnegative and sum to 1")
        if self.family == "beta_conditional":
            a, b = p.get("alpha"), p.get("beta")
            if a is None or b is None or a <= 0 or b <= 0:
                raise ParseError("beta_conditional needs alpha > 0 and beta > 0")
        if self.family == "miscalibrated":
            for key in ("slope", "offset"):
                v = p.get(key)
                if v is None or not np.isfinite(v):
                    raise ParseError(f"miscalibrated needs finite {key!r}")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "size": self.size,
            "seed": self.seed,
            "params": dict(self.params),
        }


def generate(spec: SuperpopSpec) -> Population:
    """Materialize a pool: conditional means, Bernoulli losses, proxy column.

    The proxy column stores the conditional mean (distorted for the
    ``miscalibrated`` family); losses are the realized 0/1 outcomes.
    Deterministic per ``spec.seed``.
    """
    spec.validate()
    rng = generator(spec.seed)
    n = spec.size
    if spec.family == "beta_conditional":
        p = rng.beta(spec.params["alpha"], spec.params["beta"], size=n)
    else:
        p = rng.choice(
            np.asarray(spec.params["p_values"], dtype=float),
            size=n,
            p=np.asarray(spec.params["weights"], dtype=float),
        )
    loss = (rng.random(n) < p).astype(float)
    proxy = p
    if spec.family == "miscalibrated":
        proxy = np.clip(
            spec.params["slope"] * p + spec.params["offset"], 0.0, 1.0
        )
    width = len(str(n - 1))
    ids = tuple(f"u{i:0{width}d}" for i in range(n))
    return Population(
        ids=ids,
        proxy=np.asarray(proxy, dtype=float),
        loss=loss,
        loss_kind=LossKind.ACCURACY,
    )


@dataclass
class MCResult:
    """Summary of one design/estimator pair over replicated draws."""

    empirical_mse: float
    mse_mc_se: float  # MC standard error of empirical_mse
    bias: float
    bias_mc_se: float  # MC standard error of the mean estimate
    avg_plugin_se: float
    coverage: float
    reps: int
    target: float  # the fixed pool mean being estimated
    estimates: np.ndarray | None = None  # per-rep estimates, when requested

    def to_dict(self) -> dict:
        return {
            "empirical_mse": self.empirical_mse,
            "mse_mc_se": self.mse_mc_se,
            "bias": self.bias,
            "bias_mc_se": self.bias_mc_se,
            "avg_plugin_se": self.avg_plugin_se,
            "coverage": self.coverage,
            "reps": self.reps,
            "target": self.target,
        }


MIN_REPS = 100


def run_mc(
    pop: Population,
    *,
    design: str,
    estimator: str,
    n: int,
    reps: int,
    seed: int,
    partition: StrataPartition | None = None,
    allocation: str = "prop",
    sd_source: str = "true",
    proxy_col: str = "proxy",
    level: float = 0.95,
    keep_estimates: bool = False,
) -> MCResult:
    """Replicate a design/estimator pair and summarize its sampling error.

    Parameters
    ----------
    pop : Population
        Fully annotated pool (the target is its exact mean loss).
    design : {"srs", "ssrs"}
        Sampling design; ``ssrs`` requires ``partition``.
    estimator : {"ht", "df"}
        Weighted mean, or proxy-anchored difference estimate using
        ``proxy_col``.
    n : int
        Annotation budget per replication.
    reps : int
        Number of replicated draws (at least ``MIN_REPS``); replication
        ``r`` draws with sub-seed ``derive_seed(seed, r)``.
    allocation : {"prop", "neyman"}
        Budget split across strata (ssrs only).
    sd_source : {"true", "plugin"}
        Neyman inputs: realized within-stratum loss SDs, or the 0/1
        plug-in from the stratum's mean proxy.
    level : float
        Nominal confidence level for the coverage tally.

    Notes
    -----
    The per-replication confidence interval uses the design-matched
    plug-in standard error (for ``df``, computed from the residuals).
    """
    if reps < MIN_REPS:
        raise PreconditionError(
            f"reps={reps} below minimum {MIN_REPS}: Monte Carlo standard error "
            "too large for assertions"
        )
    if design not in ("srs", "ssrs"):
        raise PreconditionError(f"unknown design {design!r}")
    if estimator not in ("ht", "df"):
        raise PreconditionError(f"unknown estimator {estimator!r}")
    if not pop.has_all_losses:
        raise PreconditionError("Monte Carlo needs a fully annotated pool")
    losses = pop.loss
    target = pop.finite_mean()
    pool = pop.size
    proxies = pop.get_proxy(proxy_col) if estimator == "df" else None
    proxy_mean = float(np.mean(proxies)) if proxies is not None else 0.0

    if design == "srs":
        if not 1 <= n <= pool:
            raise PreconditionError(f"budget {n} outside [1, {pool}]")
        members = [np.arange(pool)]
        n_h = np.array([n], dtype=np.int64)
        sizes = np.array([pool], dtype=np.int64)
    else:
        if partition is None:
            raise PreconditionError("ssrs design needs a partition")
        if partition.assignment.size != pool:
            raise PreconditionError("partition does not cover the population")
        sizes = partition.sizes
        if allocation == "prop":
            plan = proportional(sizes, n)
        elif allocation == "neyman":
            if sd_source == "true":
                sds = np.array([
                    np.std(losses[partition.assignment == h], ddof=1)
                    if (partition.assignment == h).sum() >= 2 else 0.0
                    for h in range(partition.n_strata)
                ])
            elif sd_source == "plugin":
                if pop.loss_kind is not LossKind.ACCURACY:
                    raise PreconditionError(
                        "plugin SDs in run_mc are defined for 0/1 losses"
                    )
                ref = pop.get_proxy(proxy_col)
                sds = np.array([
                    plugin_sd_accuracy(float(np.mean(ref[partition.assignment == h])))
                    for h in range(partition.n_strata)
                ])
            else:
                raise PreconditionError(f"unknown sd_source {sd_source!r}")
            plan = neyman(sizes, sds, n)
        else:
            raise PreconditionError(f"unknown allocation {allocation!r}")
        members = [partition.members(h) for h in range(partition.n_strata)]
        n_h = plan.n_h

    weights = sizes / pool
    f_h = n_h / sizes
    inv_pi = sizes / n_h  # per-stratum expansion weight N_h/n_h
    n_strata = len(members)
    multi = n_strata > 1

    if np.any(n_h < 2):
        raise PreconditionError("every stratum needs n_h >= 2 for plug-in SEs")
    zcrit = normal_quantile(0.5 + level / 2.0)
    estimates = np.empty(reps)
    ses = np.empty(reps)
    covered = np.empty(reps, dtype=bool)
    for r in range(reps):
        rep_seed = derive_seed(seed, r)
        if multi:
            theta = 0.0
            var = 0.0
            for h in range(n_strata):
                sub = srs_indices(
                    generator(derive_seed(rep_seed, h)), members[h].size, int(n_h[h])
                )
                vals = losses[members[h][sub]]
                if proxies is not None:
                    vals = vals - proxies[members[h][sub]]
                theta += weights[h] * vals.mean()
                var += (
                    weights[h] ** 2
                    * (1.0 - f_h[h])
                    * float(np.var(vals, ddof=1))
                    / n_h[h]
                )
            se = float(np.sqrt(var))
        else:
            sub = srs_indices(generator(rep_seed), pool, int(n_h[0]))
            vals = losses[sub]
            if proxies is not None:
                vals = vals - proxies[sub]
            theta = float(vals.mean())
            se = float(np.sqrt(np.sum((vals - vals.mean()) ** 2))) / vals.size
        if proxies is not None:
            theta += proxy_mean
        estimates[r] = theta
        ses[r] = se
        covered[r] = abs(theta - target) <= zcrit * se

    sq = (estimates - target) ** 2
    return MCResult(
        empirical_mse=float(np.mean(sq)),
        mse_mc_se=float(np.std(sq, ddof=1) / np.sqrt(reps)),
        bias=float(np.mean(estimates) - target),
        bias_mc_se=float(np.std(estimates, ddof=1) / np.sqrt(reps)),
        avg_plugin_se=float(np.mean(ses)),
        coverage=float(np.mean(covered)),
        reps=reps,
        target=target,
        estimates=estimates if keep_estimates else None,
    )


def efficiency_table(results: dict, baseline: str) -> dict[str, float]:
    """Relative efficiencies ``mse_method / mse_baseline`` (< 1 is a gain)."""
    if baseline not in results:
        raise PreconditionError(f"baseline {baseline!r} not among results")
    base = results[baseline].empirical_mse
    if base == 0.0:
        raise PreconditionError("baseline MSE is zero; ratios undefined")
    return {name: res.empirical_mse / base for name, res in results.items()}


def efficiency_csv(table: dict[str, float], row_label: str = "pool") -> str:
    """One-row CSV, method names as columns (values < 1 = cheaper than baseline)."""
    import csv as _csv
    import io as _io

    buf = _io.StringIO()
    w = _csv.writer(buf, lineterminator="\n")
    w.writerow(["population", *table.keys()])
    w.writerow([row_label, *(repr(float(v)) for v in table.values())])
    return buf.getvalue()


def save_mc_results(path, results: dict, config: dict | None = None) -> None:
    payload = {name: res.to_dict() for name, res in results.items()}
    doc = {"results": payload}
    if config is not None:
        doc["config"] = config
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
