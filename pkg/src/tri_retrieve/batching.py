"""Length-grouped batch scheduling with cross-worker gathering.

Documents are bucketed by token length so each batch pads to a similar
maximum, then every worker draws the same group at the same step and
contributes an equal slice of the batch. Gathered slices form the
shared in-batch negative pool.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np

from .errors import EmptyInput, InvalidPlan, LengthOutOfRange
from .toy_encoder import EncodedText, ToyEncoderParams, encode

__all__ = [
    "LengthGroupTable",
    "BatchPlan",
    "PaddingStats",
    "GatheredItem",
    "default_table",
    "assign_groups",
    "plan_epoch",
    "padding_stats",
    "random_plan_like",
    "split_batch",
    "encode_with_split",
    "gather_all",
    "negative_pool",
]

# Length boundaries are half-open [lo, hi); the last bucket ends at the
# 8192-token ceiling.
GROUP_BOUNDS: Tuple[Tuple[int, int], ...] = (
    (0, 500),
    (500, 1000),
    (1000, 2000),
    (2000, 3000),
    (3000, 4000),
    (4000, 5000),
    (5000, 6000),
    (6000, 7000),
    (7000, 8192),
)

# Total batch sizes per group, tuned for 8x A100-style memory; scale
# down with the divisor argument of default_table for small machines.
UNSUPERVISED_SIZES = (67200, 54720, 37248, 27648, 21504, 17280, 15072, 12288, 9984)
FINETUNE_SIZES = (1152, 768, 480, 432, 336, 336, 288, 240, 192)


@dataclass(frozen=True)
class LengthGroupTable:
    boundaries: Tuple[Tuple[int, int], ...]
    sizes: Tuple[int, ...]

    def __post_init__(self):
        if len(self.boundaries) != len(self.sizes) or not self.boundaries:
            raise ValueError("boundaries and sizes must align and be non-empty")
        prev_hi = None
        for lo, hi in self.boundaries:
            if lo >= hi:
                raise ValueError(f"empty group range [{lo}, {hi})")
            if prev_hi is not None and lo != prev_hi:
                raise ValueError("group ranges must be contiguous and ascending")
            prev_hi = hi
        if any(s < 1 for s in self.sizes):
            raise ValueError("every group batch size must be >= 1")

    @property
    def n_groups(self) -> int:
        return len(self.boundaries)


def default_table(stage: str = "unsupervised", divisor: int = 1) -> LengthGroupTable:
    """Built-in table for the given stage, batch sizes floor-divided."""
    if divisor < 1:
        raise ValueError(f"divisor must be >= 1, got {divisor}")
    if stage == "unsupervised":
        sizes = UNSUPERVISED_SIZES
    elif stage == "finetune":
        sizes = FINETUNE_SIZES
    else:
        raise ValueError(f"unknown stage {stage!r}")
    scaled = tuple(s // divisor for s in sizes)
    if any(s < 1 for s in scaled):
        raise ValueError(f"divisor {divisor} floors a group batch size to zero")
    return LengthGroupTable(boundaries=GROUP_BOUNDS, sizes=scaled)


def assign_groups(lengths: Dict[str, int], table: LengthGroupTable) -> Dict[str, int]:
    """Map doc id -> group index; lengths outside every range fail."""
    lows = [lo for lo, _ in table.boundaries]
    top = table.boundaries[-1][1]
    out = {}
    for doc_id, n in lengths.items():
        if n < table.boundaries[0][0] or n >= top:
            raise LengthOutOfRange(f"doc {doc_id!r} has length {n}, outside [{lows[0]}, {top})")
        g = int(np.searchsorted(lows, n, side="right")) - 1
        out[doc_id] = g
    return out


@dataclass(frozen=True)
class BatchPlan:
    """One worker's view of an epoch: (group, doc slice) per step."""

    worker_id: int
    seed: int
    batches: Tuple[Tuple[int, Tuple[str, ...]], ...]


def _rng(seed: int, *tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed & (2**64 - 1),) + tag))


def plan_epoch(
    groups: Dict[str, int],
    table: LengthGroupTable,
    seed: int,
    n_workers: int,
) -> List[BatchPlan]:
    """Deterministic epoch schedule, one BatchPlan per worker.

    Per group, doc ids are shuffled under a (seed, group) stream and cut
    into batches of the group's size; the trailing remainder is dropped.
    Workers receive equal contiguous shares of each batch, and all
    workers walk the same seeded interleaving of group steps, so step i
    uses one group everywhere.
    """
    if n_workers < 1:
        raise ValueError(f"n_workers must be >= 1, got {n_workers}")
    occupied = sorted({g for g in groups.values()})
    for g in occupied:
        if not 0 <= g < table.n_groups:
            raise ValueError(f"group index {g} outside table with {table.n_groups} groups")
        if table.sizes[g] < n_workers:
            raise InvalidPlan(
                f"group {g} batch size {table.sizes[g]} cannot be split over {n_workers} workers"
            )

    per_group_batches: Dict[int, List[Tuple[str, ...]]] = {}
    step_groups: List[int] = []
    for g in occupied:
        ids = sorted(d for d, gg in groups.items() if gg == g)
        order = _rng(seed, 0, g).permutation(len(ids))
        shuffled = [ids[i] for i in order]
        share = table.sizes[g] // n_workers
        span = share * n_workers
        n_batches = len(shuffled) // span
        per_group_batches[g] = [
            tuple(shuffled[b * span : (b + 1) * span]) for b in range(n_batches)
        ]
        step_groups.extend([g] * n_batches)

    step_order = _rng(seed, 1).permutation(len(step_groups))
    steps = [step_groups[i] for i in step_order]

    cursors = {g: 0 for g in occupied}
    plans = [[] for _ in range(n_workers)]
    for g in steps:
        batch = per_group_batches[g][cursors[g]]
        cursors[g] += 1
        share = table.sizes[g] // n_workers
        for w in range(n_workers):
            plans[w].append((g, batch[w * share : (w + 1) * share]))
    return [
        BatchPlan(worker_id=w, seed=seed, batches=tuple(plans[w]))
        for w in range(n_workers)
    ]


class PaddingStats(NamedTuple):
    total_cost: int
    padded: int
    padding_fraction: float


def padding_stats(batch_lengths: Sequence[Sequence[int]]) -> PaddingStats:
    """Padded-token accounting when each batch pads to its own maximum."""
    if not batch_lengths:
        raise EmptyInput("no batches")
    total = 0
    useful = 0
    for batch in batch_lengths:
        if not batch:
            raise EmptyInput("empty batch")
        total += max(batch) * len(batch)
        useful += sum(batch)
    padded = total - useful
    return PaddingStats(total_cost=total, padded=padded, padding_fraction=padded / total)


def random_plan_like(batches: Sequence[Sequence[str]], seed: int) -> List[List[str]]:
    """Baseline: same docs, same batch size sequence, no length grouping."""
    flat = [d for batch in batches for d in batch]
    order = _rng(seed, 2).permutation(len(flat))
    shuffled = [flat[i] for i in order]
    out = []
    pos = 0
    for batch in batches:
        out.append(shuffled[pos : pos + len(batch)])
        pos += len(batch)
    return out


def split_batch(batch: Sequence, sub_size: int) -> List[List]:
    """Cut a batch into sub-batches of at most sub_size, order kept."""
    if sub_size < 1:
        raise ValueError(f"sub_size must be >= 1, got {sub_size}")
    items = list(batch)
    return [items[i : i + sub_size] for i in range(0, len(items), sub_size)]


def encode_with_split(
    token_batch: Sequence[Sequence[int]],
    params: ToyEncoderParams,
    sub_size: int,
) -> List[EncodedText]:
    """Encode through sub-batches; output equals unsplit encoding."""
    out: List[EncodedText] = []
    for sub in split_batch(token_batch, sub_size):
        out.extend(encode(tokens, params) for tokens in sub)
    return out


class GatheredItem(NamedTuple):
    worker_id: int
    position: int
    value: object


def gather_all(per_worker: Sequence[Sequence]) -> List[GatheredItem]:
    """Flatten worker outputs in (worker, position) order."""
    return [
        GatheredItem(worker_id=w, position=i, value=v)
        for w, items in enumerate(per_worker)
        for i, v in enumerate(items)
    ]


def negative_pool(gathered: Sequence[GatheredItem], worker_id: int, position: int) -> List[GatheredItem]:
    """Everything gathered except the query's own positive."""
    return [g for g in gathered if not (g.worker_id == worker_id and g.position == position)]
