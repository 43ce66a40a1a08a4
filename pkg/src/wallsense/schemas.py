"""Structural validation for emitted JSON documents and CSV headers.

Each validator raises SchemaError with the offending path; the report command
runs them before aggregating, and the test suite runs them on every artifact.
"""
from __future__ import annotations


class SchemaError(ValueError):
    pass


def _require(doc: dict, fields: dict, where: str) -> None:
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: expected an object")
    for name, kind in fields.items():
        if name not in doc:
            raise SchemaError(f"{where}: missing field {name!r}")
        if kind is not None and not isinstance(doc[name], kind):
            raise SchemaError(f"{where}.{name}: expected {kind}, got {type(doc[name])}")


def validate_metrics(doc: dict, where: str = "metrics") -> None:
    _require(doc, {"accuracy": (int, float), "macro_precision": (int, float),
                   "macro_recall": (int, float), "macro_f1": (int, float),
                   "per_class_recall": list, "confusion_matrix": list}, where)
    n = len(doc["confusion_matrix"])
    if any(len(row) != n for row in doc["confusion_matrix"]):
        raise SchemaError(f"{where}.confusion_matrix: must be square")


def validate_train_report(doc: dict) -> None:
    _require(doc, {"variant": str, "seed": int, "class_names": list,
                   "epochs": list, "best_epoch": int,
                   "best_val_accuracy": (int, float), "stopped_early": bool,
                   "test_metrics": dict}, "train_report")
    for i, e in enumerate(doc["epochs"]):
        _require(e, {"epoch": int, "train_loss": (int, float),
                     "val_loss": (int, float), "val_accuracy": (int, float)},
                 f"train_report.epochs[{i}]")
    validate_metrics(doc["test_metrics"], "train_report.test_metrics")


def validate_eval(doc: dict) -> None:
    _require(doc, {"split": str, "metrics": dict, "class_names": list}, "eval")
    validate_metrics(doc["metrics"], "eval.metrics")


def validate_gain_report(doc: dict) -> None:
    _require(doc, {"trials": int, "mean_db": (int, float), "median_db": (int, float),
                   "p10_db": (int, float), "p90_db": (int, float),
                   "floored_trials": list}, "gain_report")


def validate_ris_config(doc: dict) -> None:
    _require(doc, {"rows": int, "cols": int, "half_pi_multipliers": list}, "ris_config")
    mult = doc["half_pi_multipliers"]
    if len(mult) != doc["rows"] or any(len(r) != doc["cols"] for r in mult):
        raise SchemaError("ris_config.half_pi_multipliers: shape mismatch")
    if any(v not in (-1, 1) for row in mult for v in row):
        raise SchemaError("ris_config.half_pi_multipliers: entries must be -1 or +1")


def validate_provenance(doc: dict) -> None:
    _require(doc, {"seed": int, "config_hash": str, "created_unix": (int, float)},
             "provenance")


def validate_norm_stats(doc: dict) -> None:
    _require(doc, {"mode": str, "flagged_channels": list}, "norm_stats")
    if doc["mode"] == "zscore":
        _require(doc, {"mean": list, "std": list}, "norm_stats")
    elif doc["mode"] == "minmax":
        _require(doc, {"vmin": (int, float), "vmax": (int, float)}, "norm_stats")
    else:
        raise SchemaError(f"norm_stats.mode: unknown mode {doc['mode']!r}")


def validate_report_summary(doc: dict) -> None:
    _require(doc, {"runs": dict, "figures": list}, "report")
    for name, run in doc["runs"].items():
        _require(run, {"metrics": dict, "epoch_series": list,
                       "per_class_accuracy": list}, f"report.runs[{name}]")
        validate_metrics(run["metrics"], f"report.runs[{name}].metrics")


def validate_csv_header(first_line: str, expected: list[str], where: str) -> None:
    got = first_line.strip().split(",")
    if got != expected:
        raise SchemaError(f"{where}: header {got} != {expected}")
