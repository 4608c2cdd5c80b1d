"""Shard construction and deterministic curriculum schedules.

A ranked candidate list plus the in-domain corpus becomes a ShardPlan:
shard 0 holds all in-domain sentences and the ranked candidates are split
rank-contiguously over the remaining shards. A schedule then runs in
phases of a fixed number of batches; each phase draws batches only from
the shards unlocked so far, so more similar data is seen earlier and in
more phases. Within a phase, sentences are bucketed by length and batches
greedily fill a token budget from a single shard and bucket.

Schedules are a pure function of (plan, parameters, seed): the same seed
reproduces a byte-identical schedule file.
"""

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

from datasel.corpus import Corpus
from datasel.errors import DataError
from datasel.selection import SelectionResult

logger = logging.getLogger(__name__)

MODES = ("standard", "reverse", "scrambled", "noshuffle")

DEFAULT_NUM_SHARDS = 40
DEFAULT_PHASE_LEN = 1000
DEFAULT_BATCH_BUDGET = 4096
DEFAULT_BUCKET_WIDTH = 10
EXTRA_PHASES_DEFAULT = 20


@dataclass(frozen=True)
class ShardPlan:
    """Disjoint shards over combined sentence ids.

    Combined ids: in-domain sentence i keeps id i; the candidate with
    corpus index j gets id in_domain_count + j. Shard 0 is the in-domain
    shard; shards 1.. hold candidates in rank order.
    """

    num_shards: int
    shards: tuple[tuple[int, ...], ...]
    in_domain_count: int

    def __post_init__(self):
        if self.num_shards != len(self.shards):
            raise DataError("num_shards does not match shard list")
        if self.num_shards < 1:
            raise DataError("a plan needs at least one shard")
        seen: set[int] = set()
        for k, shard in enumerate(self.shards):
            if not shard:
                raise DataError(f"shard {k} is empty")
            overlap = seen.intersection(shard)
            if overlap:
                raise DataError(f"shards are not disjoint: id {min(overlap)} repeated")
            seen.update(shard)

    def all_ids(self) -> set[int]:
        return {i for shard in self.shards for i in shard}

    def candidate_corpus_index(self, combined_id: int) -> int:
        if combined_id < self.in_domain_count:
            raise DataError(f"id {combined_id} is an in-domain sentence")
        return combined_id - self.in_domain_count


def build_shards(in_domain: Corpus, ranking: SelectionResult, cut: int,
                 num_shards: int = DEFAULT_NUM_SHARDS) -> ShardPlan:
    """Shard 0 = in-domain; the top-`cut` candidates split rank-contiguously
    into num_shards-1 near-equal shards (remainder to the earliest shards)."""
    if num_shards < 2:
        raise DataError(f"need at least 2 shards, got {num_shards}")
    if len(in_domain) == 0:
        raise DataError("in-domain corpus is empty")
    if cut > len(ranking.ranking):
        raise DataError(f"cut {cut} exceeds ranking length {len(ranking.ranking)}")
    n_candidate_shards = num_shards - 1
    if cut < n_candidate_shards:
        raise DataError(
            f"cut {cut} cannot populate {n_candidate_shards} candidate shards")
    offset = len(in_domain)
    ranked_ids = [offset + entry.index for entry in ranking.ranking[:cut]]
    base, rem = divmod(cut, n_candidate_shards)
    shards: list[tuple[int, ...]] = [tuple(range(offset))]
    pos = 0
    for k in range(n_candidate_shards):
        size = base + (1 if k < rem else 0)
        shards.append(tuple(ranked_ids[pos:pos + size]))
        pos += size
    return ShardPlan(num_shards=num_shards, shards=tuple(shards),
                     in_domain_count=offset)


@dataclass(frozen=True)
class BatchSpec:
    phase: int  # 1-indexed
    shard: int
    bucket: int
    indices: tuple[int, ...]


@dataclass
class CurriculumSchedule:
    mode: str
    num_shards: int
    phase_len: int
    batch_budget: int
    bucket_width: int
    num_phases: int
    seed: int
    batches: list[BatchSpec] = field(repr=False)

    def __iter__(self) -> Iterator[BatchSpec]:
        return iterate(self)


def available_shards(mode: str, num_shards: int, phase: int) -> list[int]:
    """Shards unlocked during a 1-indexed phase.

    Standard (and scrambled/noshuffle) unlock 0, 1, ... in rank order;
    reverse unlocks from the least similar shard down, with the in-domain
    shard last.
    """
    if phase < 1:
        raise DataError(f"phases are 1-indexed, got {phase}")
    k = min(phase, num_shards)
    if mode == "reverse":
        return list(range(num_shards - 1, num_shards - 1 - k, -1))
    return list(range(k))


def bucket_of(length: int, bucket_width: int) -> int:
    return (length - 1) // bucket_width


def make_schedule(plan: ShardPlan, lengths: Sequence[int], mode: str = "standard",
                  phase_len: int = DEFAULT_PHASE_LEN,
                  batch_budget: int = DEFAULT_BATCH_BUDGET,
                  bucket_width: int = DEFAULT_BUCKET_WIDTH,
                  num_phases: int | None = None, seed: int = 0) -> CurriculumSchedule:
    """Generate the full batch sequence for a training run.

    `lengths[i]` is the token count of combined sentence id i (source side).
    Every phase has exactly phase_len batches; each batch takes sentences
    from one shard and one length bucket, greedily filling the token budget.
    Sampling is without replacement per shard within a phase; a shard's
    pool replenishes when exhausted and at every phase boundary.
    """
    if mode not in MODES:
        raise DataError(f"unknown schedule mode {mode!r}; expected one of {MODES}")
    if phase_len < 1 or batch_budget < 1 or bucket_width < 1:
        raise DataError("phase_len, batch_budget, and bucket_width must be positive")
    if num_phases is None:
        num_phases = plan.num_shards + EXTRA_PHASES_DEFAULT
    if num_phases < plan.num_shards:
        logger.warning(
            "num_phases=%d is below num_shards=%d: the schedule will never "
            "unlock shards %d..%d",
            num_phases, plan.num_shards, num_phases, plan.num_shards - 1)

    for shard in plan.shards:
        for sid in shard:
            if sid >= len(lengths):
                raise DataError(f"no length for sentence id {sid}")
            if not 1 <= lengths[sid] <= batch_budget:
                raise DataError(
                    f"sentence id {sid} has length {lengths[sid]}, outside "
                    f"1..{batch_budget}")

    rng = random.Random(seed)

    shard_contents = [list(shard) for shard in plan.shards]
    if mode == "scrambled":
        # keep shard sizes, reassign the candidates uniformly at random
        pool = [sid for shard in shard_contents[1:] for sid in shard]
        rng.shuffle(pool)
        pos = 0
        for k in range(1, plan.num_shards):
            size = len(shard_contents[k])
            shard_contents[k] = pool[pos:pos + size]
            pos += size

    shard_bucket_members: list[dict[int, list[int]]] = []
    for contents in shard_contents:
        members: dict[int, list[int]] = {}
        for sid in contents:
            members.setdefault(bucket_of(lengths[sid], bucket_width), []).append(sid)
        shard_bucket_members.append(members)

    def fresh_pools(shard_id: int) -> dict[int, list[int]]:
        pools = {}
        for bucket_id, members in shard_bucket_members[shard_id].items():
            ids = list(members)
            rng.shuffle(ids)
            pools[bucket_id] = ids
        return pools

    def fill_batch(phase: int, shard_id: int,
                   pools: dict[int, list[int]]) -> BatchSpec:
        non_empty = sorted(b for b, ids in pools.items() if ids)
        if not non_empty:
            pools.update(fresh_pools(shard_id))
            non_empty = sorted(pools)
        bucket_id = rng.choice(non_empty)
        pool = pools[bucket_id]
        floor = bucket_id * bucket_width + 1
        taken: list[int] = []
        skipped: list[int] = []
        used = 0
        while pool and batch_budget - used >= floor:
            sid = pool.pop()
            if used + lengths[sid] <= batch_budget:
                taken.append(sid)
                used += lengths[sid]
            else:
                skipped.append(sid)
        pool.extend(skipped)
        return BatchSpec(phase=phase, shard=shard_id, bucket=bucket_id,
                         indices=tuple(taken))

    batches: list[BatchSpec] = []
    for phase in range(1, num_phases + 1):
        avail = available_shards(mode, plan.num_shards, phase)
        visit = list(avail)
        if mode != "noshuffle":
            rng.shuffle(visit)
        pools = {k: fresh_pools(k) for k in avail}
        for b in range(phase_len):
            shard_id = visit[b % len(visit)]
            batches.append(fill_batch(phase, shard_id, pools[shard_id]))

    return CurriculumSchedule(
        mode=mode, num_shards=plan.num_shards, phase_len=phase_len,
        batch_budget=batch_budget, bucket_width=bucket_width,
        num_phases=num_phases, seed=seed, batches=batches,
    )


def iterate(schedule: CurriculumSchedule) -> Iterator[BatchSpec]:
    """Stream batches, checking every one against the availability rule."""
    for batch in schedule.batches:
        avail = available_shards(schedule.mode, schedule.num_shards, batch.phase)
        if batch.shard not in avail:
            raise DataError(
                f"schedule violates availability: shard {batch.shard} in "
                f"phase {batch.phase}")
        yield batch


# ---------------------------------------------------------------------------
# Plan files
# ---------------------------------------------------------------------------

def save_plan(plan: ShardPlan, lengths: Sequence[int], path: str | Path) -> None:
    """Persist a plan with the sentence lengths the scheduler needs."""
    doc = {
        "num_shards": plan.num_shards,
        "in_domain_count": plan.in_domain_count,
        "shards": [list(shard) for shard in plan.shards],
        "lengths": list(lengths),
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_plan(path: str | Path) -> tuple[ShardPlan, list[int]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"plan file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed plan file {path}: {exc}") from exc
    missing = {"num_shards", "in_domain_count", "shards", "lengths"} - set(doc)
    if missing:
        raise DataError(f"plan file {path} missing {sorted(missing)}")
    plan = ShardPlan(
        num_shards=doc["num_shards"],
        shards=tuple(tuple(shard) for shard in doc["shards"]),
        in_domain_count=doc["in_domain_count"],
    )
    return plan, list(doc["lengths"])


# ---------------------------------------------------------------------------
# Schedule files (JSON lines: header, then one batch per line)
# ---------------------------------------------------------------------------

def _batch_line(batch: BatchSpec) -> str:
    return json.dumps(
        {"phase": batch.phase, "shard": batch.shard, "bucket": batch.bucket,
         "indices": list(batch.indices)},
        sort_keys=True, separators=(",", ":"))


def _batches_checksum(lines: list[str]) -> str:
    digest = hashlib.sha256()
    for line in lines:
        digest.update(line.encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


def emit_schedule(schedule: CurriculumSchedule, path: str | Path) -> None:
    lines = [_batch_line(b) for b in schedule.batches]
    header = {
        "mode": schedule.mode,
        "num_shards": schedule.num_shards,
        "phase_len": schedule.phase_len,
        "batch_budget": schedule.batch_budget,
        "bucket_width": schedule.bucket_width,
        "num_phases": schedule.num_phases,
        "seed": schedule.seed,
        "checksum": _batches_checksum(lines),
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for line in lines:
            fh.write(line + "\n")


def load_schedule(path: str | Path) -> CurriculumSchedule:
    path = Path(path)
    if not path.exists():
        raise DataError(f"schedule file not found: {path}")
    raw = path.read_text(encoding="utf-8").split("\n")
    if raw and raw[-1] == "":
        raw.pop()
    if not raw:
        raise DataError(f"empty schedule file: {path}")
    try:
        header = json.loads(raw[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed schedule header in {path}: {exc}") from exc
    required = {"mode", "num_shards", "phase_len", "batch_budget",
                "bucket_width", "num_phases", "seed", "checksum"}
    missing = required - set(header)
    if missing:
        raise DataError(f"schedule header missing {sorted(missing)} in {path}")
    if _batches_checksum(raw[1:]) != header["checksum"]:
        raise DataError(f"schedule checksum mismatch: {path} is corrupted or truncated")
    batches = []
    for line in raw[1:]:
        doc = json.loads(line)
        batches.append(BatchSpec(phase=doc["phase"], shard=doc["shard"],
                                 bucket=doc["bucket"], indices=tuple(doc["indices"])))
    return CurriculumSchedule(
        mode=header["mode"], num_shards=header["num_shards"],
        phase_len=header["phase_len"], batch_budget=header["batch_budget"],
        bucket_width=header["bucket_width"], num_phases=header["num_phases"],
        seed=header["seed"], batches=batches,
    )
