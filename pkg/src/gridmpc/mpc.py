"""BSP-style cluster simulator with word-level traffic accounting.

Model: m machines, each with local memory on the order of s words, running
synchronous rounds.  A round delivers the messages prepared by the previous
compute phase and then runs the next compute phase.  The cost of an algorithm
is the number of rounds; per-round, per-machine traffic is expected to stay
within ``budget_factor * s`` words and is flagged (never aborted) when it
does not.

Conventions used throughout the package:

* a record is a flat tuple of numbers; its size in words is ``len(record)``;
* machine stores are named sections (``dict[str, list[tuple]]``); section
  names are protocol metadata and are not counted;
* sending to yourself still counts as sent and received traffic;
* local computation between two communication rounds is free, matching the
  usual MPC accounting where cost is the round count.

The simulation driver may inspect machine stores between rounds to decide
control flow (loop exits, which machine coordinates which part).  All data
movement between machines goes through messages and is counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .util import derive_rng


class RoundCapExceeded(RuntimeError):
    pass


class SamplingFailure(RuntimeError):
    """All sampling attempts landed outside the accepted size window."""


def words(rec) -> int:
    return len(rec)


@dataclass(frozen=True)
class ClusterConfig:
    """Cluster geometry and budgets.

    s is the nominal local memory in words.  m defaults to ceil(n_total / s),
    the usual "just enough machines" layout.  budget_factor makes the
    constant hidden in Theta(s) explicit: traffic above budget_factor * s
    words per machine per round is recorded as a violation.
    """

    n_total: int
    s: int
    m: int | None = None
    budget_factor: float = 8.0
    rng_seed: int = 0
    max_round_cap: int = 5000

    def __post_init__(self):
        if self.s < 2:
            raise ValueError("s must be at least 2")
        if self.n_total < 0:
            raise ValueError("n_total must be non-negative")
        if self.budget_factor <= 0:
            raise ValueError("budget_factor must be positive")
        if self.m is None:
            object.__setattr__(self, "m", max(1, math.ceil(self.n_total / self.s)))
        if self.m < 1:
            raise ValueError("m must be at least 1")

    @property
    def alpha(self) -> float:
        """Memory exponent s = n^alpha (0 when n_total <= 1)."""
        if self.n_total <= 1:
            return 0.0
        return math.log(self.s) / math.log(self.n_total)

    @property
    def traffic_budget(self) -> int:
        return int(self.budget_factor * self.s)

    @classmethod
    def from_mapping(cls, mp) -> "ClusterConfig":
        mp = dict(mp)
        n = int(mp.pop("n"))
        if "alpha" in mp and "s" not in mp:
            s = max(2, round(n ** float(mp.pop("alpha"))))
        else:
            s = int(mp.pop("s"))
            mp.pop("alpha", None)
        kw = {}
        if "m" in mp:
            kw["m"] = int(mp.pop("m"))
        if "budget_factor" in mp:
            kw["budget_factor"] = float(mp.pop("budget_factor"))
        if "rng_seed" in mp:
            kw["rng_seed"] = int(mp.pop("rng_seed"))
        if "max_round_cap" in mp:
            kw["max_round_cap"] = int(mp.pop("max_round_cap"))
        if mp:
            raise ValueError(f"unknown config keys: {sorted(mp)}")
        return cls(n_total=n, s=s, **kw)

    @classmethod
    def from_file(cls, path) -> "ClusterConfig":
        """Parse a plain-text key=value config (# starts a comment)."""
        mp = {}
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"bad config line: {line!r}")
                k, v = line.split("=", 1)
                mp[k.strip()] = v.strip()
        return cls.from_mapping(mp)


@dataclass
class RoundStats:
    round: int
    sent: list
    received: list
    store: list
    cross: list
    phase: str | None = None

    def max_sent(self):
        return max(self.sent) if self.sent else 0

    def max_received(self):
        return max(self.received) if self.received else 0


class Machine:
    __slots__ = ("mid", "store", "_outbox", "_cluster")

    def __init__(self, mid, cluster):
        self.mid = mid
        self.store = {}
        self._outbox = []
        self._cluster = cluster

    @property
    def rng(self):
        # Stream keyed by (seed, machine, round): deterministic under reruns
        # and independent across machines and rounds.
        cl = self._cluster
        key = (cl.config.rng_seed, self.mid, cl.round)
        if cl._rng_cache_key.get(self.mid) != key:
            cl._rng_cache[self.mid] = derive_rng(*key)
            cl._rng_cache_key[self.mid] = key
        return cl._rng_cache[self.mid]

    def section(self, name) -> list:
        return self.store.setdefault(name, [])

    def clear(self, name):
        self.store.pop(name, None)

    def send(self, dest, section, rec):
        self._outbox.append((dest, section, rec))

    def send_many(self, dest, section, recs):
        out = self._outbox
        for rec in recs:
            out.append((dest, section, rec))

    def store_words(self) -> int:
        return sum(len(r) for sec in self.store.values() for r in sec)

    def __repr__(self):
        return f"Machine({self.mid}, {{{', '.join(f'{k}:{len(v)}' for k, v in self.store.items())}}})"


class Cluster:
    """Simulated cluster: machines, per-round stats, violation flags."""

    def __init__(self, config: ClusterConfig):
        self.config = config
        self.machines = [Machine(i, self) for i in range(config.m)]
        self.round = 0
        self.stats: list[RoundStats] = []
        self.violations: list[tuple] = []  # (round, machine, kind, words)
        self.phase_log: list[tuple] = []  # (name, first_round, last_round)
        self._phase = None
        self._phase_start = 0
        self._rng_cache = {}
        self._rng_cache_key = {}

    # -- control-plane helpers -------------------------------------------

    @property
    def m(self):
        return self.config.m

    def machine(self, mid) -> Machine:
        return self.machines[mid]

    def load(self, section, records):
        """Block-distribute records over machines in input order."""
        n = len(records)
        per = math.ceil(n / self.m) if n else 0
        for i, mch in enumerate(self.machines):
            mch.section(section).extend(tuple(r) for r in records[i * per:(i + 1) * per])

    def gather(self, section) -> list:
        """Control-plane read of a section across machines (tests, output)."""
        out = []
        for mch in self.machines:
            out.extend(mch.store.get(section, ()))
        return out

    def local(self, fn):
        """Run a pure-local compute pass (no communication, no round)."""
        for mch in self.machines:
            fn(mch)

    def begin_phase(self, name):
        self._flush_phase()
        self._phase = name
        self._phase_start = self.round

    def _flush_phase(self):
        if self._phase is not None and self.round > self._phase_start:
            self.phase_log.append((self._phase, self._phase_start, self.round - 1))
        self._phase = None

    def end_phase(self):
        self._flush_phase()

    def phase_rounds(self, name) -> int:
        return sum(hi - lo + 1 for nm, lo, hi in self.phase_log if nm == name)

    # -- the round engine --------------------------------------------------

    def exec_round(self, step=None):
        """One synchronous round: compute (prepare messages), then deliver."""
        if self.round >= self.config.max_round_cap:
            raise RoundCapExceeded(f"exceeded max_round_cap={self.config.max_round_cap}")
        if step is not None:
            for mch in self.machines:
                step(mch)
        self._deliver()

    def _deliver(self):
        m = self.m
        sent = [0] * m
        received = [0] * m
        cross = [0] * m
        inboxes = [[] for _ in range(m)]
        for mch in self.machines:
            for dest, section, rec in mch._outbox:
                w = len(rec)
                sent[mch.mid] += w
                received[dest] += w
                if dest != mch.mid:
                    cross[mch.mid] += w
                inboxes[dest].append((section, rec))
            mch._outbox.clear()
        for mch, inbox in zip(self.machines, inboxes):
            for section, rec in inbox:
                mch.section(section).append(rec)
        budget = self.config.traffic_budget
        for i in range(m):
            if sent[i] > budget:
                self.violations.append((self.round, i, "sent", sent[i]))
            if received[i] > budget:
                self.violations.append((self.round, i, "received", received[i]))
        self.stats.append(RoundStats(
            round=self.round,
            sent=sent,
            received=received,
            store=[mch.store_words() for mch in self.machines],
            cross=cross,
            phase=self._phase,
        ))
        self.round += 1

    # -- reporting ----------------------------------------------------------

    def stats_jsonl(self) -> str:
        """One JSON object per (round, machine)."""
        import json

        lines = []
        for st in self.stats:
            for i in range(self.m):
                lines.append(json.dumps({
                    "round": st.round,
                    "machine": i,
                    "sent_words": st.sent[i],
                    "received_words": st.received[i],
                    "store_peak": st.store[i],
                }, sort_keys=True))
        return "\n".join(lines)

    def traffic_summary(self) -> dict:
        return {
            "rounds": self.round,
            "max_sent_words": max((st.max_sent() for st in self.stats), default=0),
            "max_received_words": max((st.max_received() for st in self.stats), default=0),
            "max_store_words": max((max(st.store) for st in self.stats if st.store), default=0),
            "traffic_violations": len(self.violations),
        }


# -- generic driver ---------------------------------------------------------


def run_program(config: ClusterConfig, program, records=(), section="main"):
    """Run a round-step program until every machine reports it is done.

    ``program(machine, round_index)`` runs in the compute phase; it may call
    ``machine.send`` and returns True while the machine still wants a round.
    When all machines return falsy before any round, zero rounds execute.
    Returns (final stores, round stats).
    """
    cluster = Cluster(config)
    cluster.load(section, list(records))
    rnd = 0
    while True:
        active = False
        for mch in cluster.machines:
            if program(mch, rnd):
                active = True
        if not active:
            # nothing sent, nothing pending: the program has terminated
            for mch in cluster.machines:
                mch._outbox.clear()
            break
        if rnd >= config.max_round_cap:
            raise RoundCapExceeded(f"program ran past max_round_cap={config.max_round_cap}")
        cluster._deliver()
        rnd += 1
    stores = [dict(mch.store) for mch in cluster.machines]
    return stores, cluster.stats


# -- chunked exchange ---------------------------------------------------------


def exchange(cluster: Cluster, queues, ceiling=None):
    """Deliver per-machine queues, split over rounds to respect the budget.

    queues: dict[src_mid][dest_mid] -> list[(section, record)].
    The chunk count is derived from the largest per-machine send/receive
    volume, so no single round exceeds ``ceiling`` words (default 80% of the
    traffic budget).  Chunking is deterministic: every queue is cut into the
    same number of contiguous slices.
    """
    if ceiling is None:
        ceiling = int(0.8 * cluster.config.traffic_budget)
    ceiling = max(1, ceiling)
    out_words = {}
    in_words = {}
    for src, per_dest in queues.items():
        for dest, items in per_dest.items():
            w = sum(len(rec) for _, rec in items)
            out_words[src] = out_words.get(src, 0) + w
            in_words[dest] = in_words.get(dest, 0) + w
    heaviest = max(list(out_words.values()) + list(in_words.values()), default=0)
    chunks = max(1, math.ceil(heaviest / ceiling))

    for t in range(chunks):
        def step(mch, t=t):
            per_dest = queues.get(mch.mid)
            if not per_dest:
                return
            for dest, items in per_dest.items():
                k = len(items)
                lo = (t * k) // chunks
                hi = ((t + 1) * k) // chunks
                for section, rec in items[lo:hi]:
                    mch.send(dest, section, rec)
        cluster.exec_round(step)
    return chunks


# -- atomic operations --------------------------------------------------------


def count_records(cluster: Cluster, section, coordinator=0) -> int:
    """Distributed count: one aggregation round to the coordinator."""
    def step(mch):
        mch.send(coordinator, "_counts", (len(mch.store.get(section, ())),))
    cluster.exec_round(step)
    coord = cluster.machine(coordinator)
    total = sum(c for (c,) in coord.store.get("_counts", ()))
    coord.clear("_counts")
    return total


def broadcast(cluster: Cluster, source, records, dest_section, include_source=True):
    """Two-round broadcast: scatter m parts, then re-gossip every part.

    Requires m <= s so each machine can address every other machine.  The
    payload must fit in s words; larger payloads are rejected so callers are
    forced to split them (see broadcast_bulk).
    """
    records = [tuple(r) for r in records]
    payload_words = sum(len(r) for r in records)
    if payload_words > cluster.config.s:
        raise ValueError(f"broadcast payload of {payload_words} words exceeds s={cluster.config.s}")
    m = cluster.m
    if m > cluster.config.s:
        raise ValueError("broadcast requires m <= s")
    if m == 1:
        mch = cluster.machine(source)
        if include_source:
            mch.section(dest_section).extend(records)
        return 0

    per = math.ceil(len(records) / m) if records else 0

    def scatter(mch):
        if mch.mid != source:
            return
        for i in range(m):
            part = records[i * per:(i + 1) * per]
            for rec in part:
                mch.send(i, "_bcast_part", rec)
    cluster.exec_round(scatter)

    def gossip(mch):
        part = mch.store.get("_bcast_part", ())
        for dest in range(m):
            if dest == source and not include_source:
                continue
            for rec in part:
                mch.send(dest, dest_section, rec)
        mch.clear("_bcast_part")
    cluster.exec_round(gossip)
    return 2


def broadcast_bulk(cluster: Cluster, source, records, dest_section, include_source=True):
    """Broadcast payloads larger than s by splitting into s-word waves."""
    records = [tuple(r) for r in records]
    s = cluster.config.s
    wave, wave_words, rounds = [], 0, 0
    for rec in records:
        if wave and wave_words + len(rec) > s:
            rounds += broadcast(cluster, source, wave, dest_section, include_source)
            wave, wave_words = [], 0
        wave.append(rec)
        wave_words += len(rec)
    if wave or not records:
        rounds += broadcast(cluster, source, wave, dest_section, include_source)
    return rounds


def multi_broadcast(cluster: Cluster, payloads, dest_section):
    """Broadcast several sources' payloads in one shared two-round schedule.

    payloads: dict[source_mid] -> list of records.  Each source scatters its
    payload into m slots, then every machine re-gossips what it holds.  Used
    when all part coordinators publish their divider trees simultaneously.
    """
    m = cluster.m
    if m > cluster.config.s:
        raise ValueError("multi_broadcast requires m <= s")
    payloads = {src: [tuple(r) for r in recs] for src, recs in payloads.items()}
    if m == 1:
        mch = cluster.machine(0)
        for recs in payloads.values():
            mch.section(dest_section).extend(recs)
        return 0

    def scatter(mch):
        recs = payloads.get(mch.mid)
        if not recs:
            return
        per = math.ceil(len(recs) / m)
        for i in range(m):
            for rec in recs[i * per:(i + 1) * per]:
                mch.send(i, "_bcast_part", rec)
    cluster.exec_round(scatter)

    def gossip(mch):
        part = mch.store.get("_bcast_part", ())
        for dest in range(m):
            for rec in part:
                mch.send(dest, dest_section, rec)
        mch.clear("_bcast_part")
    cluster.exec_round(gossip)
    return 2


def mpc_sort(cluster: Cluster, section, key=None, coordinator=0):
    """Sample sort with deterministic splitters and balanced output blocks.

    Ties are broken by (original machine id, local offset), so the sort is a
    stable permutation of the input and reruns are bit-identical.  After the
    sort, machine i holds the i-th contiguous block of the global order,
    blocks of size ceil(n/m).
    """
    if key is None:
        key = lambda rec: rec
    m = cluster.m

    # local presort with provenance tags (free: compute phase)
    tagged = {}

    def norm_key(rec):
        kk = key(rec)
        return kk if isinstance(kk, tuple) else (kk,)

    def presort(mch):
        sec = mch.store.get(section, [])
        rows = sorted(((norm_key(rec), mch.mid, off, rec) for off, rec in enumerate(sec)))
        tagged[mch.mid] = rows
        mch.store[section] = [r[-1] for r in rows]
    cluster.local(presort)

    if m == 1:
        return

    # regular samples from every machine to the coordinator
    sample_queues = {src: {coordinator: []} for src in range(m)}
    for src in range(m):
        rows = tagged[src]
        k = len(rows)
        for i in range(m):
            if k == 0:
                break
            idx = min(k - 1, (i * k) // m)
            ek = rows[idx][:3]
            sample_queues[src][coordinator].append(("_sort_samples", _flatten_key(ek)))
    exchange(cluster, sample_queues)

    coord = cluster.machine(coordinator)
    samples = sorted(_unflatten_key(r) for r in coord.store.get("_sort_samples", ()))
    coord.clear("_sort_samples")
    splitters = []
    if samples:
        for j in range(1, m):
            idx = min(len(samples) - 1, (j * len(samples)) // m)
            splitters.append(samples[idx])
    broadcast_bulk(cluster, coordinator, [_flatten_key(sp) for sp in splitters], "_sort_splitters")

    # partition into buckets and exchange
    import bisect
    bucket_queues = {src: {} for src in range(m)}

    def partition(mch):
        sps = sorted(_unflatten_key(r) for r in mch.store.get("_sort_splitters", ()))
        mch.clear("_sort_splitters")
        q = bucket_queues[mch.mid]
        for ek3 in tagged[mch.mid]:
            dest = bisect.bisect_right(sps, ek3[:3])
            q.setdefault(dest, []).append(("_sort_bucket", _flatten_ekrec(ek3)))
        mch.store[section] = []
    cluster.local(partition)
    exchange(cluster, bucket_queues)

    widths = {}

    def bucket_sort(mch):
        rows = sorted(_unflatten_ekrec(r, widths) for r in mch.store.get("_sort_bucket", ()))
        mch.clear("_sort_bucket")
        tagged[mch.mid] = rows
    cluster.local(bucket_sort)

    # rebalance to exact blocks of the global order
    def send_counts(mch):
        mch.send(coordinator, "_sort_counts", (mch.mid, len(tagged[mch.mid])))
    cluster.exec_round(send_counts)
    counts = [0] * m
    for mid, c in coord.store.get("_sort_counts", ()):
        counts[mid] = c
    coord.clear("_sort_counts")
    total = sum(counts)
    starts = [0] * m
    for i in range(1, m):
        starts[i] = starts[i - 1] + counts[i - 1]
    broadcast(cluster, coordinator, [tuple(starts)], "_sort_starts")

    per = math.ceil(total / m) if total else 1
    rebalance_queues = {src: {} for src in range(m)}

    def plan_rebalance(mch):
        st = mch.store.get("_sort_starts", ())
        base = st[0][mch.mid] if st else 0
        mch.clear("_sort_starts")
        q = rebalance_queues[mch.mid]
        for off, row in enumerate(tagged[mch.mid]):
            dest = min(m - 1, (base + off) // per)
            q.setdefault(dest, []).append(("_sort_final", _flatten_ekrec(row)))
    cluster.local(plan_rebalance)
    exchange(cluster, rebalance_queues)

    def unpack(mch):
        rows = sorted(_unflatten_ekrec(r, widths) for r in mch.store.get("_sort_final", ()))
        mch.clear("_sort_final")
        mch.store[section] = [r[-1] for r in rows]
    cluster.local(unpack)


def _flatten_key(ek3):
    key, mid, off = ek3
    if not isinstance(key, tuple):
        key = (key,)
    return (len(key),) + key + (mid, off)


def _unflatten_key(rec):
    kl = rec[0]
    return (tuple(rec[1:1 + kl]), rec[1 + kl], rec[2 + kl])


def _flatten_ekrec(ek3):
    key, mid, off, rec = ek3
    if not isinstance(key, tuple):
        key = (key,)
    return (len(key),) + key + (mid, off, len(rec)) + rec


def _unflatten_ekrec(rec, _widths=None):
    kl = rec[0]
    key = tuple(rec[1:1 + kl])
    mid = rec[1 + kl]
    off = rec[2 + kl]
    payload = tuple(rec[4 + kl:])
    return (key, mid, off, payload)


def remove_duplicates(cluster: Cluster, section, sort_key=None, group_key=None):
    """Sort, then keep the globally first record of each equal-key group.

    With the default keys this deletes exact duplicate records.  Passing a
    coarser group_key (a prefix of sort_key) keeps, per group, the record
    that sorts first, which is how grid sketches pick representatives.
    """
    if sort_key is None:
        sort_key = lambda rec: rec
    if group_key is None:
        group_key = sort_key
    mpc_sort(cluster, section, key=sort_key)
    m = cluster.m

    def send_boundary(mch):
        sec = mch.store.get(section, ())
        if sec and mch.mid + 1 < m:
            gk = group_key(sec[-1])
            if not isinstance(gk, tuple):
                gk = (gk,)
            mch.send(mch.mid + 1, "_dedup_prev", gk)
    cluster.exec_round(send_boundary)

    def drop(mch):
        prev = mch.store.get("_dedup_prev", ())
        prev_key = tuple(prev[0]) if prev else None
        mch.clear("_dedup_prev")
        kept = []
        for rec in mch.store.get(section, ()):
            gk = group_key(rec)
            if not isinstance(gk, tuple):
                gk = (gk,)
            if gk != prev_key:
                kept.append(rec)
                prev_key = gk
        mch.store[section] = kept
    cluster.local(drop)


def sample_subset(cluster: Cluster, section, k, dest=0, dest_section="_sample",
                  total=None, retry_cap=64):
    """Collect a Bernoulli sample of k..3k records on one machine.

    Every record is marked with probability min(1, 2k/total); an attempt is
    accepted when the marked count lands in [k, 3k].  Marks are drawn from
    the per-round machine streams, so retries resample and reruns are
    deterministic.  Callers must skip sets smaller than k.
    """
    if total is None:
        total = count_records(cluster, section, coordinator=dest)
    if total < k:
        raise ValueError(f"sample_subset needs at least k={k} records, have {total}")
    p = min(1.0, 2.0 * k / total)
    coord = cluster.machine(dest)
    attempts = 0
    while True:
        if attempts >= retry_cap:
            raise SamplingFailure(f"no accepted sample in {retry_cap} attempts")
        attempts += 1

        def mark(mch):
            sec = mch.store.get(section, ())
            if sec:
                mask = mch.rng.random(len(sec)) < p
                cand = [rec for rec, keep in zip(sec, mask) if keep]
            else:
                cand = []
            mch.store["_sample_cand"] = cand
            mch.send(dest, "_sample_counts", (len(cand),))
        cluster.exec_round(mark)

        size = sum(c for (c,) in coord.store.get("_sample_counts", ()))
        coord.clear("_sample_counts")
        ok = k <= size <= 3 * k

        def ship(mch):
            cand = mch.store.pop("_sample_cand", ())
            if ok:
                for rec in cand:
                    mch.send(dest, dest_section, rec)
        cluster.exec_round(ship)
        if ok:
            return size, attempts
