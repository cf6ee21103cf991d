"""Rule detectors for laundering patterns and a composite wallet risk score.

Every detector canonicalizes its input first (sorted by timestamp, src, dst,
value), so results do not depend on input order. Alert evidence lists are
indices into that canonical order, which is also the order produced by
:func:`walletscreen.ingest.parse_transfer_log` for logs without same-second
ties. Windows are closed on both ends.

Severity is ``min(1, evidence / (2 * trigger count))`` for the count-based
rules and the mixer-transfer share of a wallet's activity for mixer contact.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import TransferRecord
from .txgraph import TransactionGraph

HOUR = 3600
DAY = 24 * HOUR
RULES = ("smurfing", "structuring", "mixer", "fanout", "burst")


@dataclass(frozen=True)
class RuleAlert:
    wallet: str
    rule: str
    window: tuple[int, int]
    evidence: tuple[int, ...]
    severity: float

    def __post_init__(self):
        if not self.evidence:
            raise ValueError("alert without evidence")
        if self.window[0] > self.window[1]:
            raise ValueError("alert window ends before it starts")
        if not 0 < self.severity <= 1:
            raise ValueError("severity must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "wallet": self.wallet,
            "rule": self.rule,
            "window": list(self.window),
            "evidence": list(self.evidence),
            "severity": self.severity,
        }


@dataclass(frozen=True)
class SmurfingParams:
    min_count: int = 10
    # None -> 10th percentile of all transfer values in the log
    max_value: int | None = None
    window: int = HOUR


@dataclass(frozen=True)
class StructuringParams:
    threshold: int = 10_000_000
    band_fraction: float = 0.05
    min_count: int = 3


@dataclass(frozen=True)
class FanoutParams:
    min_new: int = 10
    window: int = DAY


@dataclass(frozen=True)
class BurstParams:
    burst_count: int = 20
    burst_window: int = DAY
    dormancy_min: int = 14 * DAY


@dataclass(frozen=True)
class RuleParams:
    smurfing: SmurfingParams = field(default_factory=SmurfingParams)
    structuring: StructuringParams = field(default_factory=StructuringParams)
    fanout: FanoutParams = field(default_factory=FanoutParams)
    burst: BurstParams = field(default_factory=BurstParams)

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "RuleParams":
        d = d or {}
        return cls(
            SmurfingParams(**d.get("smurfing", {})),
            StructuringParams(**d.get("structuring", {})),
            FanoutParams(**d.get("fanout", {})),
            BurstParams(**d.get("burst", {})),
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RiskProfile:
    wallet: str
    score: float
    alert_counts: dict[str, int]
    flagged_neighbor_count: int


def canonical_transfers(transfers: Iterable[TransferRecord]) -> list[TransferRecord]:
    return sorted(transfers, key=lambda t: (t.timestamp, t.src, t.dst, t.value))


def _severity(count: int, trigger: int) -> float:
    return min(1.0, count / (2.0 * max(1, trigger)))


def _dense_clusters(times: Sequence[int], min_count: int, window: int) -> list[tuple[int, int]]:
    """Maximal runs of events covered by overlapping qualifying windows.

    A window [t_i, t_i + window] qualifies when it holds >= ``min_count``
    events; qualifying windows that share an event are merged. Returns
    (first, last) positions into ``times`` (inclusive).
    """
    n = len(times)
    clusters: list[tuple[int, int]] = []
    if min_count < 1 or n < min_count:
        return clusters
    for i in range(n):
        j = bisect_right(times, times[i] + window) - 1
        if j - i + 1 < min_count:
            continue
        if clusters and i <= clusters[-1][1]:
            clusters[-1] = (clusters[-1][0], max(clusters[-1][1], j))
        else:
            clusters.append((i, j))
    return clusters


def _by_wallet_outgoing(canon: Sequence[TransferRecord]) -> dict[str, list[int]]:
    out: dict[str, list[int]] = defaultdict(list)
    for i, t in enumerate(canon):
        out[t.src].append(i)
    return out


def _sorted_alerts(alerts: Iterable[RuleAlert]) -> list[RuleAlert]:
    return sorted(alerts, key=lambda a: (a.wallet, a.rule, a.window[0]))


def default_small_value(transfers: Sequence[TransferRecord], pct: float = 10.0) -> float:
    if not transfers:
        return 0.0
    return float(np.percentile([t.value for t in transfers], pct, method="linear"))


def detect_smurfing(transfers: Iterable[TransferRecord], params: SmurfingParams | None = None) -> list[RuleAlert]:
    """Many small outgoing transfers from one wallet inside a short window."""
    params = params or SmurfingParams()
    canon = canonical_transfers(transfers)
    max_value = params.max_value
    if max_value is None:
        max_value = default_small_value(canon)
    alerts = []
    for wallet, idxs in _by_wallet_outgoing(canon).items():
        small = [i for i in idxs if canon[i].value <= max_value]
        times = [canon[i].timestamp for i in small]
        for a, b in _dense_clusters(times, params.min_count, params.window):
            ev = tuple(small[a:b + 1])
            alerts.append(RuleAlert(wallet, "smurfing", (times[a], times[b]), ev,
                                    _severity(len(ev), params.min_count)))
    return _sorted_alerts(alerts)


def structuring_band(params: StructuringParams) -> tuple[Fraction, int]:
    """Band ``[threshold * (1 - band_fraction), threshold)``, computed exactly."""
    if not 0 < params.band_fraction < 1:
        raise ValueError("band_fraction must lie in (0, 1)")
    frac = Fraction(str(params.band_fraction))
    return params.threshold * (1 - frac), params.threshold


def detect_structuring(transfers: Iterable[TransferRecord], params: StructuringParams | None = None) -> list[RuleAlert]:
    """Repeated outgoing values sitting just under a reporting threshold."""
    params = params or StructuringParams()
    lo, hi = structuring_band(params)
    canon = canonical_transfers(transfers)
    alerts = []
    for wallet, idxs in _by_wallet_outgoing(canon).items():
        ev = tuple(i for i in idxs if lo <= canon[i].value < hi)
        if len(ev) >= params.min_count:
            alerts.append(RuleAlert(
                wallet, "structuring", (canon[ev[0]].timestamp, canon[ev[-1]].timestamp), ev,
                _severity(len(ev), params.min_count),
            ))
    return _sorted_alerts(alerts)


def detect_mixer_contact(transfers: Iterable[TransferRecord], mixer_addresses: Iterable[str]) -> list[RuleAlert]:
    """Direct transfers to or from a listed mixing service.

    Listed mixers are never alerted themselves.
    """
    mixers = set(mixer_addresses)
    if not mixers:
        return []
    canon = canonical_transfers(transfers)
    involved: dict[str, list[int]] = defaultdict(list)
    for i, t in enumerate(canon):
        involved[t.src].append(i)
        if t.dst != t.src:
            involved[t.dst].append(i)
    alerts = []
    for wallet, idxs in involved.items():
        if wallet in mixers:
            continue
        ev = tuple(i for i in idxs if canon[i].src in mixers or canon[i].dst in mixers)
        if ev:
            alerts.append(RuleAlert(
                wallet, "mixer", (canon[ev[0]].timestamp, canon[ev[-1]].timestamp), ev,
                len(ev) / len(idxs),
            ))
    return _sorted_alerts(alerts)


def detect_fanout_new_addresses(transfers: Iterable[TransferRecord], params: FanoutParams | None = None) -> list[RuleAlert]:
    """Outgoing first contacts with many distinct counterparties in a short window.

    A counterparty is new when it appears in none of the wallet's earlier
    transfers, in either direction.
    """
    params = params or FanoutParams()
    canon = canonical_transfers(transfers)
    seen: dict[str, set[str]] = defaultdict(set)
    first_contacts: dict[str, list[int]] = defaultdict(list)
    for i, t in enumerate(canon):
        if t.src == t.dst:
            continue
        if t.dst not in seen[t.src]:
            first_contacts[t.src].append(i)
            seen[t.src].add(t.dst)
        seen[t.dst].add(t.src)
    alerts = []
    for wallet, idxs in first_contacts.items():
        times = [canon[i].timestamp for i in idxs]
        for a, b in _dense_clusters(times, params.min_new, params.window):
            ev = tuple(idxs[a:b + 1])
            alerts.append(RuleAlert(wallet, "fanout", (times[a], times[b]), ev,
                                    _severity(len(ev), params.min_new)))
    return _sorted_alerts(alerts)


def detect_burst_dormancy(transfers: Iterable[TransferRecord], params: BurstParams | None = None) -> list[RuleAlert]:
    """A burst of activity, a silent gap of at least ``dormancy_min``, then
    another burst. One alert per consecutive burst pair with such a gap."""
    params = params or BurstParams()
    canon = canonical_transfers(transfers)
    events: dict[str, list[int]] = defaultdict(list)
    for i, t in enumerate(canon):
        events[t.src].append(i)
        if t.dst != t.src:
            events[t.dst].append(i)
    alerts = []
    for wallet, idxs in events.items():
        times = [canon[i].timestamp for i in idxs]
        bursts = _dense_clusters(times, params.burst_count, params.burst_window)
        for (a0, a1), (b0, b1) in zip(bursts, bursts[1:]):
            longest_gap = max(times[k + 1] - times[k] for k in range(a1, b0))
            if longest_gap < params.dormancy_min:
                continue
            ev = tuple(idxs[a0:a1 + 1]) + tuple(idxs[b0:b1 + 1])
            alerts.append(RuleAlert(wallet, "burst", (times[a0], times[b1]), ev,
                                    _severity(min(a1 - a0, b1 - b0) + 1, params.burst_count)))
    return _sorted_alerts(alerts)


def scan(
    transfers: Sequence[TransferRecord],
    params: RuleParams | None = None,
    mixer_addresses: Iterable[str] = (),
) -> list[RuleAlert]:
    """Run all five detectors; alerts merged by (wallet, rule, window start)."""
    params = params or RuleParams()
    canon = canonical_transfers(transfers)
    alerts = (
        detect_smurfing(canon, params.smurfing)
        + detect_structuring(canon, params.structuring)
        + detect_mixer_contact(canon, mixer_addresses)
        + detect_fanout_new_addresses(canon, params.fanout)
        + detect_burst_dormancy(canon, params.burst)
    )
    return _sorted_alerts(alerts)


DEFAULT_WEIGHTS = {rule: 1.0 for rule in RULES}


def wallet_risk_score(
    wallet: str,
    alerts: Iterable[RuleAlert],
    graph: TransactionGraph | None = None,
    flagged: Iterable[str] = (),
    weights: Mapping[str, float] | None = None,
    neighbor_weight: float = 1.0,
) -> RiskProfile:
    """Weighted alert severities plus the flagged share of direct neighbours."""
    weights = DEFAULT_WEIGHTS if weights is None else weights
    if any(w < 0 for w in weights.values()) or neighbor_weight < 0:
        raise ValueError("weights must be nonnegative")
    counts = dict.fromkeys(RULES, 0)
    score = 0.0
    for a in alerts:
        if a.wallet != wallet:
            continue
        counts[a.rule] += 1
        score += weights.get(a.rule, 0.0) * a.severity
    flagged_n = 0
    if graph is not None:
        nb = graph.neighbors(wallet)
        flagged_n = len(nb & set(flagged))
        score += neighbor_weight * flagged_n / max(1, len(nb))
    return RiskProfile(wallet, score, counts, flagged_n)


def alert_labels(alerts: Iterable[RuleAlert], addresses: Sequence[str]) -> np.ndarray:
    """1 for every address with at least one alert, for use as training labels."""
    hit = {a.wallet for a in alerts}
    return np.array([1 if addr in hit else 0 for addr in addresses], dtype=np.int64)


def write_alerts_jsonl(alerts: Iterable[RuleAlert], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for a in alerts:
            fh.write(json.dumps(a.to_dict(), sort_keys=True) + "\n")
    return path


def read_alerts_jsonl(path) -> list[RuleAlert]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            out.append(RuleAlert(d["wallet"], d["rule"], tuple(d["window"]),
                                 tuple(d["evidence"]), d["severity"]))
    return out
