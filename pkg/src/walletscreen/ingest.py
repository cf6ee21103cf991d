"""Parsing, validation and cleaning of wallet summaries and transfer logs.

Two record kinds are understood:

* wallet summaries, one row per address:
  ``address,hash160,n_tx,n_unredeemed,total_received,total_sent,final_balance[,label]``
* transfer logs, one row per wallet-to-wallet value flow:
  ``timestamp,src,dst,value``

Both are accepted as CSV (header row, exact names) or JSONL (one object per
line, same keys). Amounts are integer satoshi throughout.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, fields
from typing import IO, Iterable, Iterator

logger = logging.getLogger(__name__)

WALLET_FIELDS = (
    "address",
    "hash160",
    "n_tx",
    "n_unredeemed",
    "total_received",
    "total_sent",
    "final_balance",
)
NUMERIC_FIELDS = WALLET_FIELDS[2:]
TRANSFER_FIELDS = ("timestamp", "src", "dst", "value")
FORMATS = ("csv", "jsonl")


class ParseError(ValueError):
    """A malformed input row. ``line`` is 1-based and counts the header."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


@dataclass(frozen=True)
class WalletRecord:
    address: str
    hash160: str
    n_tx: int
    n_unredeemed: int
    total_received: int
    total_sent: int
    final_balance: int
    label: int | None = None

    def balance_consistent(self) -> bool:
        return (
            self.final_balance == self.total_received - self.total_sent
            and self.total_sent <= self.total_received
        )


@dataclass(frozen=True)
class TransferRecord:
    timestamp: int
    src: str
    dst: str
    value: int

    @property
    def self_transfer(self) -> bool:
        return self.src == self.dst


@dataclass(frozen=True)
class CleanReport:
    rows_in: int
    rows_dropped_missing: int
    rows_dropped_duplicate: int
    rows_out: int
    soft_violations: int

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _read_text(source: IO | bytes | str) -> str:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif isinstance(source, str):
        return source
    else:
        data = source.read()
        if isinstance(data, str):
            return data
    return data.decode("utf-8-sig")


def _rows(text: str, fmt: str, required: Iterable[str]) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, row_dict)`` for every data row."""
    required = tuple(required)
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text, newline=""))
        header = next(reader, None)
        if header is None:
            return
        header = [h.strip() for h in header]
        missing = [name for name in required if name not in header]
        if missing:
            raise ParseError(1, f"header missing columns: {', '.join(missing)}")
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise ParseError(
                    reader.line_num, f"expected {len(header)} fields, got {len(row)}"
                )
            yield reader.line_num, dict(zip(header, row))
    elif fmt == "jsonl":
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(lineno, "expected a JSON object")
            missing = [name for name in required if name not in obj]
            if missing:
                raise ParseError(lineno, f"missing keys: {', '.join(missing)}")
            yield lineno, obj
    else:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def _as_int(raw, field: str, line: int, *, minimum: int) -> int:
    if isinstance(raw, bool):
        raise ParseError(line, f"field {field!r}: expected integer, got {raw!r}")
    if isinstance(raw, int):
        value = raw
    else:
        text = str(raw).strip()
        try:
            value = int(text)
        except ValueError:
            raise ParseError(line, f"field {field!r}: expected integer, got {raw!r}") from None
    if value < minimum:
        if minimum == 1:
            raise ParseError(line, f"field {field!r}: non-positive value {value}")
        raise ParseError(line, f"field {field!r}: negative value {value}")
    return value


def _as_label(raw, line: int) -> int | None:
    if raw is None:
        return None
    text = str(raw).strip()
    if text == "":
        return None
    if text not in ("0", "1"):
        raise ParseError(line, f"field 'label': expected 0 or 1, got {raw!r}")
    return int(text)


def _wallet_from_row(row: dict, line: int) -> WalletRecord:
    ident = {}
    for name in ("address", "hash160"):
        raw = row.get(name)
        ident[name] = "" if raw is None else str(raw)
    nums = {name: _as_int(row[name], name, line, minimum=0) for name in NUMERIC_FIELDS}
    return WalletRecord(**ident, **nums, label=_as_label(row.get("label"), line))


def _transfer_from_row(row: dict, line: int) -> TransferRecord:
    return TransferRecord(
        timestamp=_as_int(row["timestamp"], "timestamp", line, minimum=1),
        src=str(row["src"]).strip(),
        dst=str(row["dst"]).strip(),
        value=_as_int(row["value"], "value", line, minimum=1),
    )


def _parse(source, fmt, required, build, strict, errors):
    text = _read_text(source)
    out = []
    for line, row in _rows(text, fmt, required):
        try:
            out.append(build(row, line))
        except ParseError as exc:
            if strict:
                raise
            if errors is not None:
                errors.append(exc)
    return out


def parse_wallet_records(
    source: IO | bytes | str,
    fmt: str = "csv",
    *,
    strict: bool = True,
    errors: list[ParseError] | None = None,
) -> list[WalletRecord]:
    """Parse wallet summary rows.

    In strict mode (default) the first malformed row raises :class:`ParseError`.
    With ``strict=False`` malformed rows are skipped and appended to ``errors``.
    Identifiers are kept verbatim; trimming happens in :func:`clean_records`.
    """
    return _parse(source, fmt, WALLET_FIELDS, _wallet_from_row, strict, errors)


def parse_transfer_log(
    source: IO | bytes | str,
    fmt: str = "csv",
    *,
    strict: bool = True,
    errors: list[ParseError] | None = None,
) -> list[TransferRecord]:
    """Parse a transfer log and return it sorted by timestamp (stable on ties)."""
    records = _parse(source, fmt, TRANSFER_FIELDS, _transfer_from_row, strict, errors)
    return sorted(records, key=lambda t: t.timestamp)


def clean_records(records: Iterable[WalletRecord]) -> tuple[list[WalletRecord], CleanReport]:
    """Trim identifiers, drop rows missing an identifier, drop exact duplicates."""
    rows_in = 0
    dropped_missing = 0
    dropped_dup = 0
    soft = 0
    seen: set[WalletRecord] = set()
    out: list[WalletRecord] = []
    for rec in records:
        rows_in += 1
        address, hash160 = rec.address.strip(), rec.hash160.strip()
        if not address or not hash160:
            dropped_missing += 1
            continue
        if address != rec.address or hash160 != rec.hash160:
            rec = WalletRecord(
                address, hash160, rec.n_tx, rec.n_unredeemed, rec.total_received,
                rec.total_sent, rec.final_balance, rec.label,
            )
        if rec in seen:
            dropped_dup += 1
            continue
        seen.add(rec)
        if not rec.balance_consistent():
            soft += 1
            logger.warning(
                "wallet %s: balance %d != received %d - sent %d",
                rec.address, rec.final_balance, rec.total_received, rec.total_sent,
            )
        out.append(rec)
    report = CleanReport(rows_in, dropped_missing, dropped_dup, len(out), soft)
    return out, report


def _csv_text(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def serialize_wallet_records(records: Iterable[WalletRecord], fmt: str = "csv") -> str:
    records = list(records)
    with_label = any(r.label is not None for r in records)
    names = WALLET_FIELDS + (("label",) if with_label else ())
    if fmt == "csv":
        rows = []
        for r in records:
            row = [getattr(r, n) for n in WALLET_FIELDS]
            if with_label:
                row.append("" if r.label is None else r.label)
            rows.append(row)
        return _csv_text(names, rows)
    if fmt == "jsonl":
        lines = [json.dumps({n: getattr(r, n) for n in names}) for r in records]
        return "".join(line + "\n" for line in lines)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def serialize_transfer_log(transfers: Iterable[TransferRecord], fmt: str = "csv") -> str:
    if fmt == "csv":
        return _csv_text(
            TRANSFER_FIELDS, ([t.timestamp, t.src, t.dst, t.value] for t in transfers)
        )
    if fmt == "jsonl":
        return "".join(
            json.dumps({n: getattr(t, n) for n in TRANSFER_FIELDS}) + "\n" for t in transfers
        )
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def read_address_list(source: IO | bytes | str) -> set[str]:
    """One address per line; blank lines and ``#`` comments are ignored."""
    text = _read_text(source)
    out = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.add(line)
    return out


def format_for_path(path: str) -> str:
    return "jsonl" if str(path).lower().endswith((".jsonl", ".ndjson")) else "csv"
