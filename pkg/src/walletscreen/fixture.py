"""Synthetic wallets and transfers with planted laundering patterns.

Layout of a generated fixture:

* ``n_wallets`` record wallets ``w000000...``. Each is funded once by an
  exchange address during the first 60 days.
* Background traffic between record wallets: Poisson arrivals (uniform times)
  over the remaining days, log-normal values with a floor. Values inside the
  structuring band are redrawn.
* Planted wallets, each carrying exactly one pattern. Planted wallets only
  receive background traffic, so their own outgoing flow is the pattern.
  Burst wallets are kept silent between their two bursts.
* Exchanges (``x...``) and mixers (``m...``) are external: they appear in the
  transfer log but have no summary row and unlimited funds.

Summary rows are derived from the log: totals are sums, balance is
received minus sent, ``n_unredeemed`` counts receipts after the wallet's last
spend.
"""

from __future__ import annotations

import hashlib
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .ingest import TransferRecord, WalletRecord
from .rules import DAY, HOUR, RULES, RuleParams
from .seeding import rng_for

START = 1_600_000_000
FUNDING_DAYS = 60
MIN_BENIGN = 20_000
SMURF_VALUES = (1_000, 5_000)


@dataclass(frozen=True)
class FixtureParams:
    n_wallets: int = 1000
    # None -> 20 per wallet
    n_benign_transfers: int | None = None
    # None -> n_wallets // 25 for each rule
    planted: dict[str, int] | None = None
    seed: int = 0
    span_days: int = 365
    rules: RuleParams = field(default_factory=RuleParams)

    def planted_counts(self) -> dict[str, int]:
        base = dict.fromkeys(RULES, self.n_wallets // 25)
        if self.planted:
            unknown = set(self.planted) - set(RULES)
            if unknown:
                raise ValueError(f"unknown rules in planted counts: {sorted(unknown)}")
            base.update(self.planted)
        return base


@dataclass
class Fixture:
    wallets: list[WalletRecord]
    transfers: list[TransferRecord]
    labels: dict[str, int]
    planted: dict[str, tuple[str, ...]]
    mixers: tuple[str, ...]
    exchanges: tuple[str, ...]


def _hash160(address: str) -> str:
    return hashlib.sha256(address.encode()).hexdigest()[:40]


def _lognormal(rng, median: float, sigma: float, floor: int) -> int:
    return max(floor, int(rng.lognormal(math.log(median), sigma)))


def generate_fixture(params: FixtureParams | None = None) -> Fixture:
    params = params or FixtureParams()
    counts = params.planted_counts()
    n = params.n_wallets
    if n < 2:
        raise ValueError("infeasible fixture: need at least two wallets")
    if any(c < 0 for c in counts.values()):
        raise ValueError("planted counts must be nonnegative")
    total_planted = sum(counts.values())
    if total_planted > n:
        raise ValueError(f"infeasible fixture: {total_planted} planted wallets > {n} wallets")
    n_benign = n - total_planted
    need_counterparties = 15 if counts["fanout"] else (5 if counts["burst"] else 3)
    if total_planted and n_benign < need_counterparties:
        raise ValueError("infeasible fixture: too few benign wallets to act as counterparties")
    if params.span_days < FUNDING_DAYS + 60:
        raise ValueError(f"infeasible fixture: span_days must be >= {FUNDING_DAYS + 60}")
    n_background = 20 * n if params.n_benign_transfers is None else params.n_benign_transfers

    rng = rng_for(params.seed, "fixture")
    rp = params.rules
    structure_lo = rp.structuring.threshold * (1 - rp.structuring.band_fraction)
    wallets = [f"w{i:06d}" for i in range(n)]
    n_exchanges = max(1, math.ceil(n / 25))
    exchanges = tuple(f"x{i:04d}" for i in range(n_exchanges))
    mixers = tuple(f"m{i:03d}" for i in range(max(5, n // 200)))

    order = rng.permutation(n)
    planted: dict[str, tuple[str, ...]] = {}
    pos = 0
    for rule in RULES:
        planted[rule] = tuple(sorted(wallets[i] for i in order[pos:pos + counts[rule]]))
        pos += counts[rule]
    planted_set = {w for ws in planted.values() for w in ws}
    benign = [w for w in wallets if w not in planted_set]
    end = START + params.span_days * DAY
    active_start = START + FUNDING_DAYS * DAY

    # (timestamp, src, dst, value or None); None values are drawn later
    events: list[tuple[int, str, str, int | None]] = []

    def benign_value() -> int:
        while True:
            v = _lognormal(rng, 1e6, 1.0, MIN_BENIGN)
            if not structure_lo * 0.9 <= v < rp.structuring.threshold * 1.01:
                return v

    # -- planted patterns ------------------------------------------------------
    planned_spend: dict[str, int] = defaultdict(int)
    blackout: dict[str, tuple[int, int]] = {}
    fanout_plans: list[tuple[str, int]] = []

    def add(ts, src, dst, value):
        events.append((int(ts), src, dst, value))
        if src in planted_set:
            planned_spend[src] += value

    sp = rp.smurfing
    for w in planted["smurfing"]:
        t0 = rng.integers(active_start, end - DAY)
        targets = rng.choice(len(benign), 3, replace=False)
        k = max(2 * sp.min_count, 20)
        span = min(sp.window, HOUR) * 0.8
        for off in np.sort(rng.uniform(0, span, size=k)):
            dst = benign[targets[rng.integers(3)]]
            add(t0 + int(off), w, dst, int(rng.integers(*SMURF_VALUES)))

    st = rp.structuring
    for w in planted["structuring"]:
        k = st.min_count + 1
        times = np.sort(rng.integers(active_start, end - DAY, size=k))
        for ts in times:
            value = int(rng.uniform(structure_lo + 0.2 * (st.threshold - structure_lo),
                                    st.threshold - 0.1 * (st.threshold - structure_lo)))
            add(ts, w, benign[rng.integers(len(benign))], value)

    for w in planted["mixer"]:
        t1 = rng.integers(active_start, end - 10 * DAY)
        value = _lognormal(rng, 3e7, 0.3, 2 * rp.structuring.threshold)
        add(t1, w, mixers[rng.integers(len(mixers))], value)
        add(t1 + rng.integers(DAY, 5 * DAY), mixers[rng.integers(len(mixers))], w,
            int(value * 0.97))

    fo = rp.fanout
    for w in planted["fanout"]:
        fanout_plans.append((w, int(rng.integers(active_start, end - DAY))))

    bp = rp.burst
    for w in planted["burst"]:
        gap = bp.dormancy_min + 16 * DAY
        t0 = int(rng.integers(active_start, end - gap - 2 * DAY))
        t1 = t0 + gap
        partners = [benign[i] for i in rng.choice(len(benign), 5, replace=False)]
        k = bp.burst_count + 5
        span = bp.burst_window // 2
        for base in (t0, t1):
            for off in np.sort(rng.integers(0, span, size=k)):
                add(base + int(off), w, partners[rng.integers(5)], _lognormal(rng, 2e6, 0.5, 1_000_000))
        blackout[w] = (t0 - DAY, t1 + DAY)

    # -- background traffic ----------------------------------------------------
    def quiet(w: str, ts: int) -> bool:
        b = blackout.get(w)
        return b is not None and b[0] <= ts <= b[1]

    senders = benign
    for ts in np.sort(rng.integers(active_start, end, size=n_background)):
        ts = int(ts)
        src = senders[rng.integers(len(senders))]
        dst = wallets[rng.integers(n)]
        tries = 0
        while (dst == src or quiet(dst, ts)) and tries < 20:
            dst = wallets[rng.integers(n)]
            tries += 1
        if dst == src or quiet(dst, ts):
            continue
        events.append((ts, src, dst, None))

    # fanout recipients: benign wallets the planted wallet never meets otherwise
    met: dict[str, set[str]] = defaultdict(set)
    fanout_set = set(planted["fanout"])
    for _, s, d, _ in events:
        if s in fanout_set:
            met[s].add(d)
        if d in fanout_set:
            met[d].add(s)
    for w, t0 in fanout_plans:
        pool = [b for b in benign if b not in met[w]]
        k = fo.min_new + 5
        if len(pool) < k:
            raise ValueError("infeasible fixture: not enough fresh counterparties for fan-out")
        chosen = rng.choice(len(pool), k, replace=False)
        offs = np.sort(rng.integers(0, min(fo.window, DAY) // 4, size=k))
        for off, c in zip(offs, chosen):
            add(t0 + int(off), w, pool[c], _lognormal(rng, 2e6, 0.5, 1_000_000))

    # -- funding ---------------------------------------------------------------
    funding = []
    for i, w in enumerate(wallets):
        ts = START + int(rng.integers(0, FUNDING_DAYS * DAY))
        value = 100_000_000 + _lognormal(rng, 2e8, 0.5, 0) + 2 * planned_spend.get(w, 0)
        funding.append((ts, exchanges[i % n_exchanges], w, value))
    events.extend(funding)

    # -- values and balances, chronologically ----------------------------------
    events.sort(key=lambda e: (e[0], e[1], e[2], -1 if e[3] is None else e[3]))
    balance: dict[str, int] = defaultdict(int)
    records = set(wallets)
    transfers: list[TransferRecord] = []
    for ts, src, dst, value in events:
        if value is None:
            value = benign_value()
            if value > balance[src]:
                value = balance[src] // 2
                if value < MIN_BENIGN or structure_lo * 0.9 <= value < st.threshold * 1.01:
                    continue
        elif src in records and value > balance[src]:
            raise ValueError(f"fixture bookkeeping error: {src} overspends at {ts}")
        if src in records:
            balance[src] -= value
        if dst in records:
            balance[dst] += value
        transfers.append(TransferRecord(ts, src, dst, value))

    smurf_total = sum(1 for t in transfers if t.value < MIN_BENIGN)
    if planted["smurfing"] and smurf_total * 10 >= len(transfers):
        raise ValueError(
            "infeasible fixture: smurfing transfers exceed 10% of the log, so they would "
            "not sit below the default small-value percentile"
        )

    received: dict[str, int] = defaultdict(int)
    sent: dict[str, int] = defaultdict(int)
    n_tx: dict[str, int] = defaultdict(int)
    last_spend: dict[str, int] = {}
    receipts: dict[str, list[int]] = defaultdict(list)
    for t in transfers:
        sent[t.src] += t.value
        received[t.dst] += t.value
        n_tx[t.src] += 1
        n_tx[t.dst] += 1
        last_spend[t.src] = t.timestamp
        receipts[t.dst].append(t.timestamp)
    rows = []
    labels = {}
    for w in wallets:
        spent_at = last_spend.get(w)
        unredeemed = sum(1 for ts in receipts[w] if spent_at is None or ts > spent_at)
        label = 1 if w in planted_set else 0
        labels[w] = label
        rows.append(WalletRecord(
            w, _hash160(w), n_tx[w], unredeemed, received[w], sent[w],
            received[w] - sent[w], label,
        ))
    return Fixture(rows, transfers, labels, planted, mixers, exchanges)
