"""Drawing the units to annotate, and the worksheet that records them.

Draws operate on canonical (file) unit order.  A stratified draw gives
stratum ``h`` its own substream derived from ``(seed, h)``, so strata are
sampled independently and a single-stratum stratified draw reproduces a
simple random draw made with the same derived sub-seed.  Each sampled
unit carries its inclusion probability ``pi = n_h / N_h``, which is all
the estimators downstream need.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .allocate import AllocationPlan
from .dataset import Population
from .errors import ConsistencyError, ParseError, PreconditionError
from .rng import derive_seed, generator, srs_indices
from .stratify import StrataPartition


@dataclass
class SampleDraw:
    """Result of one sampling pass: who to annotate, with what weight."""

    indices: np.ndarray  # canonical-order unit positions, selection order
    ids: tuple[str, ...]
    strata: np.ndarray  # stratum label per sampled unit (0 for plain SRS)
    pi: np.ndarray  # inclusion probability per sampled unit
    stratum_sizes: np.ndarray  # N_h for every stratum in the design
    seed: int
    design: str  # "srs" | "ssrs"

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.strata = np.asarray(self.strata, dtype=np.int64)
        self.pi = np.asarray(self.pi, dtype=float)
        self.stratum_sizes = np.asarray(self.stratum_sizes, dtype=np.int64)
        if np.any(self.pi <= 0) or np.any(self.pi > 1):
            raise PreconditionError("inclusion probabilities must lie in (0, 1]")

    @property
    def size(self) -> int:
        return self.indices.size


def draw_srs(pop: Population, n: int, seed: int) -> SampleDraw:
    """Simple random sample of ``n`` units without replacement.

    Every size-``n`` subset of the pool is equally likely; each sampled
    unit gets ``pi = n/N``.  Identical ``(pop, n, seed)`` give identical
    draws.
    """
    if not 1 <= n <= pop.size:
        raise PreconditionError(f"sample size {n} outside [1, {pop.size}]")
    rng = generator(seed)
    idx = srs_indices(rng, pop.size, n)
    return SampleDraw(
        indices=idx,
        ids=tuple(pop.ids[i] for i in idx),
        strata=np.zeros(n, dtype=np.int64),
        pi=np.full(n, n / pop.size),
        stratum_sizes=np.array([pop.size], dtype=np.int64),
        seed=seed,
        design="srs",
    )


def draw_ssrs(
    pop: Population, partition: StrataPartition, plan: AllocationPlan, seed: int
) -> SampleDraw:
    """Stratified simple random sampling: independent SRS inside each stratum.

    Stratum ``h`` is drawn with the substream seeded by
    ``derive_seed(seed, h)`` over its members in canonical order, taking
    ``plan.n_h[h]`` units with ``pi = n_h / N_h``.  Sampled units are
    reported stratum by stratum, selection order within each.
    """
    if partition.assignment.size != pop.size:
        raise ConsistencyError("partition does not cover this population")
    sizes = partition.sizes
    if plan.n_h.size != partition.n_strata:
        raise ConsistencyError("allocation plan and partition disagree on strata count")
    if np.any(plan.n_h < 1) or np.any(plan.n_h > sizes):
        raise PreconditionError("need 1 <= n_h <= N_h in every stratum")
    chunks_idx, chunks_h, chunks_pi = [], [], []
    for h in range(partition.n_strata):
        members = partition.members(h)
        n_h = int(plan.n_h[h])
        sub = srs_indices(generator(derive_seed(seed, h)), members.size, n_h)
        chunks_idx.append(members[sub])
        chunks_h.append(np.full(n_h, h, dtype=np.int64))
        chunks_pi.append(np.full(n_h, n_h / members.size))
    idx = np.concatenate(chunks_idx)
    return SampleDraw(
        indices=idx,
        ids=tuple(pop.ids[i] for i in idx),
        strata=np.concatenate(chunks_h),
        pi=np.concatenate(chunks_pi),
        stratum_sizes=sizes,
        seed=seed,
        design="ssrs",
    )


# -- annotator worksheet -----------------------------------------------------


def worksheet_csv(draw: SampleDraw) -> str:
    """CSV listing the sampled units: ``id,stratum,pi``.

    The annotator appends a ``loss`` column (or adds values under one) and
    the filled file goes back in through :func:`load_worksheet`.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "stratum", "pi"])
    for i in range(draw.size):
        w.writerow([draw.ids[i], int(draw.strata[i]), repr(float(draw.pi[i]))])
    return buf.getvalue()


def save_worksheet(draw: SampleDraw, path) -> None:
    Path(path).write_text(worksheet_csv(draw))


@dataclass
class Worksheet:
    """Re-ingested worksheet, losses possibly filled in by the annotator."""

    ids: tuple[str, ...]
    strata: np.ndarray
    pi: np.ndarray
    loss: np.ndarray  # NaN where still unlabeled


def load_worksheet(path) -> Worksheet:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    ids: list[str] = []
    strata: list[int] = []
    pi: list[float] = []
    loss: list[float] = []
    with open(path, newline="") as f:
        lineno = 0
        header = None
        for raw in f:
            lineno += 1
            if raw.startswith("#") or not raw.strip():
                continue
            row = next(csv.reader([raw]))
            if header is None:
                header = [h.strip() for h in row]
                for req in ("id", "stratum", "pi"):
                    if req not in header:
                        raise ParseError(f"{path} line {lineno}: missing column {req!r}")
                col = {h: j for j, h in enumerate(header)}
                continue
            where = f"{path} line {lineno}"
            try:
                ids.append(row[col["id"]])
                strata.append(int(row[col["stratum"]]))
                pi.append(float(row[col["pi"]]))
            except (IndexError, ValueError):
                raise ParseError(f"{where}: malformed row") from None
            cell = row[col["loss"]].strip() if "loss" in col and len(row) > col["loss"] else ""
            if cell == "":
                loss.append(math.nan)
            else:
                try:
                    loss.append(float(cell))
                except ValueError:
                    raise ParseError(f"{where}: cannot parse loss {cell!r}") from None
    if not ids:
        raise ParseError(f"{path}: no data rows")
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate id in worksheet")
    ws = Worksheet(
        ids=tuple(ids),
        strata=np.asarray(strata, dtype=np.int64),
        pi=np.asarray(pi, dtype=float),
        loss=np.asarray(loss, dtype=float),
    )
    if np.any(ws.pi <= 0) or np.any(ws.pi > 1):
        raise ParseError(f"{path}: pi values must lie in (0, 1]")
    return ws
