"""Command-line pipeline.

    walletscreen COMMAND [--config run.json] [--set key=value ...] [--out DIR]
                         [--seed N] [--threads N]

Commands: fixture, ingest, profile, featurize, train, evaluate, compare,
scan, all. ``all`` runs ingest..scan in order, each stage reading the files
the previous one wrote, exactly as when the commands are run one by one.

Exit codes: 0 ok, 1 invalid config, 2 missing or unreadable input,
3 pipeline error. Errors go to stderr prefixed ``walletscreen: error:``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import ingest, profile, rules, txgraph
from .config import ConfigError, RunConfig
from .features import (
    GRAPH_COLUMNS,
    StandardizerStats,
    activity_intensity,
    apply_standardizer,
    assemble_features,
    fit_standardizer,
    rank_descending,
    read_feature_matrix,
    write_feature_matrix,
)
from .fixture import generate_fixture
from .learn import ForestConfig, decision_scores, load_model, predict_labels, save_model, train_model
from .seeding import derive_seed

log = logging.getLogger("walletscreen")

PREFIX = "walletscreen: error:"
MODEL_NAMES = {"logistic": "Logistic Regression", "forest": "Random Forest", "svm": "SVM"}
STAGES = ("ingest", "profile", "featurize", "train", "evaluate", "compare", "scan")
COMMANDS = ("fixture", *STAGES, "all")


class InputError(Exception):
    """A required input file is missing or unreadable (exit 2)."""


class PipelineError(Exception):
    """The data cannot be processed, e.g. degenerate labels (exit 3)."""


# -- helpers -------------------------------------------------------------------


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise InputError(f"no path configured for {what}")
    if not path.is_file():
        raise InputError(f"{what} not found: {path}")
    return path


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def _write_json(path: Path, obj) -> Path:
    return _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _dirs(cfg: RunConfig) -> dict[str, Path]:
    out = cfg.output_dir
    return {k: out / k for k in ("clean", "profile", "features", "models", "reports", "alerts")}


def _clean_wallets(cfg):
    path = _require(_dirs(cfg)["clean"] / "wallets.csv", "cleaned wallets (run ingest first)")
    return ingest.parse_wallet_records(_read_bytes(path))


def _clean_transfers(cfg, required: bool):
    path = _dirs(cfg)["clean"] / "transfers.csv"
    if not path.is_file():
        if required:
            raise InputError(f"cleaned transfers not found: {path} (run ingest first)")
        return None
    return ingest.parse_transfer_log(_read_bytes(path))


def _models_wanted(cfg) -> dict:
    return cfg.model_configs()


def _scaled(kind_config) -> bool:
    return not isinstance(kind_config, ForestConfig)


# -- stages --------------------------------------------------------------------


def cmd_fixture(cfg: RunConfig) -> list[Path]:
    paths = {name: cfg.input_path(name) for name in ("wallets", "transfers", "mixers")}
    for name, p in paths.items():
        if p is None:
            raise ConfigError(f"fixture needs inputs.{name} to be set")
    try:
        fx = generate_fixture(cfg.fixture_params())
    except ValueError as exc:
        raise PipelineError(str(exc)) from exc
    written = [
        _write_text(paths["wallets"], ingest.serialize_wallet_records(fx.wallets)),
        _write_text(paths["transfers"], ingest.serialize_transfer_log(fx.transfers)),
        _write_text(paths["mixers"], "".join(m + "\n" for m in fx.mixers)),
    ]
    truth = paths["wallets"].with_name(paths["wallets"].stem + ".planted.json")
    written.append(_write_json(truth, {k: list(v) for k, v in fx.planted.items()}))
    log.info("fixture: %d wallets, %d transfers, %d planted",
             len(fx.wallets), len(fx.transfers), sum(fx.labels.values()))
    return written


def cmd_ingest(cfg: RunConfig) -> list[Path]:
    d = _dirs(cfg)["clean"]
    wpath = _require(cfg.input_path("wallets"), "wallet file")
    tpath = cfg.input_path("transfers")
    if tpath is not None:
        _require(tpath, "transfer log")
    strict = bool(cfg.data["strict"])
    errors: list[ingest.ParseError] = []
    try:
        wallets = ingest.parse_wallet_records(
            _read_bytes(wpath), ingest.format_for_path(wpath), strict=strict, errors=errors)
        transfers = None
        if tpath is not None:
            transfers = ingest.parse_transfer_log(
                _read_bytes(tpath), ingest.format_for_path(tpath), strict=strict, errors=errors)
    except ingest.ParseError as exc:
        raise PipelineError(f"parse error: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"input is not UTF-8: {exc}") from exc
    cleaned, report = ingest.clean_records(wallets)
    written = [_write_text(d / "wallets.csv", ingest.serialize_wallet_records(cleaned))]
    if transfers is not None:
        written.append(_write_text(d / "transfers.csv", ingest.serialize_transfer_log(transfers)))
    summary = report.to_dict()
    summary["parse_errors"] = [str(e) for e in errors]
    written.append(_write_json(d / "clean_report.json", summary))
    log.info("ingest: %d rows in, %d out (%d missing, %d duplicate, %d soft violations)",
             report.rows_in, report.rows_out, report.rows_dropped_missing,
             report.rows_dropped_duplicate, report.soft_violations)
    return written


def cmd_profile(cfg: RunConfig) -> list[Path]:
    d = _dirs(cfg)["profile"]
    wallets = _clean_wallets(cfg)
    opts = cfg.data["profile"]
    written = []
    cols = {f: [getattr(w, f) for w in wallets] for f in ingest.NUMERIC_FIELDS}
    if len(wallets) >= 2:
        written.append(profile.emit_plot_data(profile.correlation_matrix(cols), d / "corr.csv"))
    for f in ("total_received", "total_sent"):
        ranked = profile.top_k_by_field(wallets, f, opts["top_k"])
        written.append(profile.emit_plot_data(ranked, d / f"topk_{f}.csv"))
    written.append(profile.emit_plot_data(profile.ScatterData.from_records(wallets), d / "scatter.csv"))
    summary_rows = []
    if wallets:
        for f in ingest.NUMERIC_FIELDS:
            s = profile.summary_stats(cols[f])
            skewed = profile.is_highly_skewed(cols[f], opts["skew_threshold"])
            summary_rows.append([f, *(s[k] for k in ("mean", "median", "variance", "skewness",
                                                     "min", "max")), int(skewed)])
        for f in ("total_received", "total_sent", "final_balance"):
            h = profile.histogram(profile.log1p_column(cols[f]), opts["bins"], f"log1p_{f}")
            written.append(profile.emit_plot_data(h, d / f"hist_log1p_{f}.csv"))
        x = np.asarray(cols["n_unredeemed"], dtype=float)
        if len(wallets) >= 2 and np.var(x) > 0:
            fit = profile.linear_fit(x, cols["final_balance"])
            written.append(profile.emit_plot_data(fit, d / "fit.csv"))
        else:
            log.warning("profile: n_unredeemed has no spread; fit.csv skipped")
        ai = activity_intensity(np.asarray(cols["n_tx"], float), np.asarray(cols["total_received"], float))
        ranks = rank_descending(ai)
        top = sorted(range(len(wallets)), key=lambda i: (ranks[i], wallets[i].address))[:opts["activity_top"]]
        written.append(profile.write_csv(d / "activity_intensity.csv",
                                      ["rank", "address", "activity_intensity"],
                                      [[ranks[i], wallets[i].address, ai[i]] for i in top]))
    written.append(profile.write_csv(
        d / "summary.csv",
        ["column", "mean", "median", "variance", "skewness", "min", "max", "highly_skewed"],
        summary_rows))
    log.info("profile: %d wallets, %d files", len(wallets), len(written))
    return written


def cmd_featurize(cfg: RunConfig) -> list[Path]:
    d = _dirs(cfg)["features"]
    wallets = _clean_wallets(cfg)
    toggles = cfg.data["features"]
    need_transfers = toggles["transfers"] or toggles["graph"]
    transfers = _clean_transfers(cfg, required=False) if need_transfers else None
    if need_transfers and transfers is None:
        log.warning("featurize: no transfer log; transfer and graph features disabled")
    written = []
    node_scores = None
    if toggles["graph"] and transfers is not None:
        graph = txgraph.build_graph(transfers)
        if graph.n_nodes >= 2:
            scores = txgraph.all_centralities(graph, threads=cfg.threads)
            node_scores = {k: scores[k].scores for k in GRAPH_COLUMNS}
            for k in GRAPH_COLUMNS:
                written.append(txgraph.write_node_scores(scores[k], d / f"centrality_{k}.csv"))
    try:
        matrix = assemble_features(
            wallets, transfers if toggles["transfers"] else None, node_scores, cfg.feature_config())
    except ValueError as exc:
        raise PipelineError(str(exc)) from exc
    written.extend(write_feature_matrix(matrix, d / "features.csv"))
    log.info("featurize: %d rows x %d columns", *matrix.shape)
    return written


def _load_features(cfg):
    path = _require(_dirs(cfg)["features"] / "features.csv", "feature matrix (run featurize first)")
    matrix = read_feature_matrix(path)
    if matrix.labels is None:
        raise PipelineError("feature matrix has no labels; supervised training needs a label column")
    return matrix


def cmd_train(cfg: RunConfig) -> list[Path]:
    d = _dirs(cfg)["models"]
    matrix = _load_features(cfg)
    try:
        train, val, test = ev.split_indices(matrix.labels, tuple(cfg.data["split_ratios"]),
                                            derive_seed(cfg.seed, "split"))
    except ValueError as exc:
        raise PipelineError(str(exc)) from exc
    written = [_write_json(d / "split.json", {
        "train": [matrix.row_ids[i] for i in train],
        "validation": [matrix.row_ids[i] for i in val],
        "test": [matrix.row_ids[i] for i in test],
    })]
    Xtr = matrix.take(train)
    stats = fit_standardizer(Xtr)
    written.append(_write_json(d / "standardizer.json",
                               {"columns": list(matrix.column_names), **stats.to_dict()}))
    for kind, mc in _models_wanted(cfg).items():
        X = apply_standardizer(Xtr, stats) if _scaled(mc) else Xtr
        try:
            model = train_model(X, Xtr.labels, mc, threads=cfg.threads)
        except ValueError as exc:
            raise PipelineError(f"{kind}: {exc}") from exc
        if not getattr(model, "converged", True):
            log.warning("train: %s stopped before convergence", kind)
        written.append(save_model(model, d / f"{kind}.json"))
        log.info("train: %s on %d rows", kind, len(train))
    return written


def _split_rows(cfg, matrix):
    path = _require(_dirs(cfg)["models"] / "split.json", "split (run train first)")
    split = json.loads(path.read_text(encoding="utf-8"))
    pos = {a: i for i, a in enumerate(matrix.row_ids)}
    try:
        return {k: np.array([pos[a] for a in v], dtype=np.int64) for k, v in split.items()}
    except KeyError as exc:
        raise PipelineError(f"split refers to unknown wallet {exc}") from exc


def cmd_evaluate(cfg: RunConfig) -> list[Path]:
    d = _dirs(cfg)["reports"]
    mdir = _dirs(cfg)["models"]
    matrix = _load_features(cfg)
    rows = _split_rows(cfg, matrix)
    st = json.loads(_require(mdir / "standardizer.json", "standardizer").read_text(encoding="utf-8"))
    stats = StandardizerStats.from_dict(st)
    written = []
    for kind, mc in _models_wanted(cfg).items():
        model = load_model(_require(mdir / f"{kind}.json", f"{kind} model (run train first)"))
        for part in ("validation", "test"):
            X = matrix.take(rows[part])
            if _scaled(mc):
                X = apply_standardizer(X, stats)
            report, auc = ev.evaluate_model(model, X, X.labels)
            suffix = "" if part == "test" else "_validation"
            written.append(ev.write_report_json(report, d / f"{kind}{suffix}.json",
                                                MODEL_NAMES[kind], auc))
            if part == "test":
                written.append(_write_text(d / f"{kind}.txt", report.format() + "\n"))
                pred = predict_labels(model, X)
                score = decision_scores(model, X)
                written.append(_write_predictions(d / f"predictions_{kind}.csv", X, pred, score))
        try:
            cv = ev.cross_validate(matrix.take(rows["train"]), matrix.labels[rows["train"]], mc,
                                   cfg.data["k"], derive_seed(cfg.seed, "cv"), cfg.threads)
        except ValueError as exc:
            raise PipelineError(f"{kind} cross-validation: {exc}") from exc
        written.append(_write_json(d / f"cv_{kind}.json", {"model": MODEL_NAMES[kind],
                                                            "k": cfg.data["k"], **cv.to_dict()}))
        log.info("evaluate: %s test f1 %.6f, cv f1 %.6f +/- %.6f", kind,
                 report.class1.f1, cv.mean["f1"], cv.std["f1"])
    return written


def _write_predictions(path: Path, X, pred, score) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["address", "y_true", "y_pred", "score"])
        for a, t, p, s in zip(X.row_ids, X.labels, pred, score):
            w.writerow([a, int(t), int(p), repr(float(s))])
    return path


def _read_predictions(path: Path):
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [r["address"] for r in rows], [int(r["y_true"]) for r in rows], [int(r["y_pred"]) for r in rows]


def cmd_compare(cfg: RunConfig) -> list[Path]:
    d = _dirs(cfg)["reports"]
    results = []
    reference = None
    for kind in _models_wanted(cfg):
        ids, y_true, y_pred = _read_predictions(
            _require(d / f"predictions_{kind}.csv", f"{kind} predictions (run evaluate first)"))
        if reference is None:
            reference = (ids, y_true)
        elif (ids, y_true) != reference:
            raise PipelineError(f"{kind} predictions cover a different test set")
        results.append((MODEL_NAMES[kind], y_true, y_pred))
    table = ev.compare_models(results)
    text = ev.format_comparison(table)
    written = [
        ev.write_comparison_csv(table, d / "comparison.csv"),
        _write_text(d / "comparison.txt", text + f"\n\nBest model by F1: {table[0].model}\n"),
    ]
    print(text)
    print(f"Best model by F1: {table[0].model}")
    log.info("compare: winner %s (f1 %.6f)", table[0].model, table[0].f1)
    return written


def cmd_scan(cfg: RunConfig) -> list[Path]:
    d = _dirs(cfg)["alerts"]
    transfers = _clean_transfers(cfg, required=True)
    mpath = cfg.input_path("mixers")
    mixers: set[str] = set()
    if mpath is not None:
        mixers = ingest.read_address_list(_read_bytes(_require(mpath, "mixer list")))
    alerts = rules.scan(transfers, cfg.rule_params(), mixers)
    written = [rules.write_alerts_jsonl(alerts, d / "alerts.jsonl")]
    wallets = _clean_wallets(cfg)
    graph = txgraph.build_graph(transfers)
    flagged = {a.wallet for a in alerts}
    by_wallet: dict[str, list] = {}
    for a in alerts:
        by_wallet.setdefault(a.wallet, []).append(a)
    path = d / "risk.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["address", "score", *(f"n_{r}" for r in rules.RULES), "flagged_neighbors",
                    "rule_label"])
        for rec in wallets:
            rp = rules.wallet_risk_score(rec.address, by_wallet.get(rec.address, ()), graph, flagged)
            w.writerow([rec.address, repr(rp.score), *(rp.alert_counts[r] for r in rules.RULES),
                        rp.flagged_neighbor_count, int(rec.address in flagged)])
    written.append(path)
    counts = {r: sum(1 for a in alerts if a.rule == r) for r in rules.RULES}
    log.info("scan: %d alerts %s", len(alerts), counts)
    return written


HANDLERS = {
    "fixture": cmd_fixture,
    "ingest": cmd_ingest,
    "profile": cmd_profile,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "scan": cmd_scan,
}


def write_manifest(cfg: RunConfig) -> Path:
    out = cfg.output_dir
    artifacts = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            artifacts[p.relative_to(out).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    return _write_json(out / "manifest.json", {
        "config_version": cfg.data["config_version"],
        "config_hash": cfg.hash(),
        "artifacts": artifacts,
    })


def check_inputs(command: str, cfg: RunConfig) -> None:
    """Fail before any work when a raw input the command reads is missing."""
    if command not in ("ingest", "all", "scan"):
        return
    if command != "scan":
        _require(cfg.input_path("wallets"), "wallet file")
        if cfg.input_path("transfers") is not None:
            _require(cfg.input_path("transfers"), "transfer log")
    if command != "ingest" and cfg.input_path("mixers") is not None:
        _require(cfg.input_path("mixers"), "mixer list")


def run(command: str, cfg: RunConfig) -> int:
    check_inputs(command, cfg)
    stages = STAGES if command == "all" else (command,)
    for stage in stages:
        HANDLERS[stage](cfg)
    if command != "fixture":
        write_manifest(cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="walletscreen", description="Wallet transaction screening pipeline.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", "-c", help="run configuration JSON")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (dotted path, JSON value); repeatable")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="master seed (overrides seed)")
    p.add_argument("--threads", type=int, help="worker cap; results do not depend on it")
    p.add_argument("--quiet", "-q", action="store_true", help="only log warnings and errors")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="walletscreen: %(message)s", stream=sys.stderr)
    overrides = list(args.overrides)
    if args.out is not None:
        overrides.append(f"output_dir={json.dumps(args.out)}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    try:
        cfg = RunConfig.load(args.config, overrides)
        return run(args.command, cfg)
    except ConfigError as exc:
        print(f"{PREFIX} invalid config: {exc}", file=sys.stderr)
        return 1
    except InputError as exc:
        print(f"{PREFIX} {exc}", file=sys.stderr)
        return 2
    except (PipelineError, ValueError, OSError) as exc:
        print(f"{PREFIX} {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
