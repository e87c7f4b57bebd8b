"""Command-line client for the quantile-forest service.

Commands: simulate | fit | predict | bench | plot. Each command builds a
request, sends it to the service (an in-process instance by default, or a
remote base URL via --server) and writes the returned payload to files.
Exit codes: 0 success, 1 usage error, 2 runtime failure.

Options may also come from a flat key=value config file (--config);
explicit flags override file values. Keys equal the option names with
dashes replaced by underscores.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import httpx

from .data import load_series_csv
from .evaluation import bias_samples_to_csv, coverage_to_csv, report_to_csv, report_to_json

__all__ = ["main", "build_parser"]


class UsageError(ValueError):
    """Raised for bad invocations; maps to exit code 1 (argparse catches
    ValueError from type callables and funnels it through parser.error)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse funnels all usage problems here
        raise UsageError(message)


def _tau_label(tau: float) -> str:
    return f"q_{repr(float(tau))}"


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(part) for part in str(text).split(",") if part.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _parse_names(text: str) -> list[str]:
    return [part.strip() for part in str(text).split(",") if part.strip()]


def _read_config(path: str) -> dict[str, str]:
    cfg: dict[str, str] = {}
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"bad config line {ln} in {path}: {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            cfg[key.strip()] = value.strip()
    return cfg


class _Options:
    """Merges CLI values over config-file values over defaults."""

    def __init__(self, args: argparse.Namespace, cfg: dict[str, str]):
        self.args = args
        self.cfg = cfg

    def get(self, name: str, default=None, conv=str):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.cfg:
            raw = self.cfg[name]
            try:
                return conv(raw)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad config value for {name}: {raw!r}") from exc
        return default

    def get_bool(self, name: str, default: bool = False) -> bool:
        value = getattr(self.args, name, None)
        if value:
            return True
        if name in self.cfg:
            raw = self.cfg[name].lower()
            if raw in ("1", "true", "yes", "on"):
                return True
            if raw in ("0", "false", "no", "off"):
                return False
            raise UsageError(f"bad boolean config value for {name}: {self.cfg[name]!r}")
        return default

    def require(self, name: str, conv=str):
        value = self.get(name, None, conv)
        if value is None:
            raise UsageError(f"missing required option --{name.replace('_', '-')}")
        return value


def _make_client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    import warnings

    with warnings.catch_warnings():
        # some starlette builds emit an import-time deprecation notice
        warnings.simplefilter("ignore", Warning)
        from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _post(client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise RuntimeError(f"service error on {path} ({resp.status_code}): {detail}")
    return resp.json()


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _read_table(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path} is empty")
        rows = [row for row in reader if row]
    return header, rows


def _forest_payload(opt: _Options) -> dict:
    payload = {
        "num_trees": opt.get("trees", 2000, int),
        "subsample_fraction": opt.get("subsample_fraction", 0.5, float),
        "omega": opt.get("omega", 0.05, float),
        "min_leaf_k": opt.get("min_leaf", 5, int),
        "tau_levels": opt.get("split_taus", [0.1, 0.5, 0.9], _parse_floats),
        "seed": opt.get("seed", 0, int),
        "threads": opt.get("threads", 1, int),
    }
    mtry = opt.get("mtry_mean", None, int)
    if mtry is not None:
        payload["mtry_mean"] = mtry
    return payload


def _wnw_payload(opt: _Options) -> dict:
    bandwidth = opt.get("bandwidth", "rule_of_thumb")
    if bandwidth not in ("rule_of_thumb", "cv"):
        bandwidth = _parse_floats(bandwidth)
        if not bandwidth:
            raise UsageError("bandwidth must be 'rule_of_thumb', 'cv' or comma-separated values")
    return {
        "bandwidth": bandwidth,
        "cv_taus": opt.get("cv_taus", [0.1, 0.5, 0.9], _parse_floats),
    }


def cmd_simulate(args, cfg, client) -> int:
    opt = _Options(args, cfg)
    taus = opt.get("taus", [], _parse_floats)
    out = opt.require("out")
    payload = {
        "model": opt.require("model"),
        "error": opt.get("error", "normal"),
        "length": opt.require("T", int),
        "burn_in": opt.get("burn_in", 200, int),
        "seed": opt.get("seed", 0, int),
        "taus": taus,
    }
    result = _post(client, "/simulate", payload)
    values = result["values"]
    lines = ["t,y"] + [f"{t},{repr(float(v))}" for t, v in enumerate(values, start=1)]
    _write(out, "\n".join(lines) + "\n")
    quantiles_out = opt.get("quantiles_out")
    if quantiles_out:
        if not taus:
            raise UsageError("--quantiles-out requires --taus")
        if not result["true_quantiles"]:
            raise RuntimeError("series too short for true quantiles at this lag order")
        cols = {float(k): v for k, v in result["true_quantiles"].items()}
        labels = [_tau_label(t) for t in taus]
        lines = ["t," + ",".join(labels)]
        first_t = result["first_t"]
        for i in range(len(values) - result["p"]):
            row = [str(first_t + i)] + [repr(float(cols[float(t)][i])) for t in taus]
            lines.append(",".join(row))
        _write(quantiles_out, "\n".join(lines) + "\n")
    print(f"wrote {out}" + (f" and {quantiles_out}" if quantiles_out else ""))
    return 0


def _load_input_series(opt: _Options) -> list[float]:
    path = opt.require("input")
    column = opt.get("column", "y")
    series = load_series_csv(path, column, drop_missing=opt.get_bool("drop_missing"))
    return series.values.tolist()


def cmd_fit(args, cfg, client) -> int:
    opt = _Options(args, cfg)
    out = opt.require("out")
    payload = {
        "series": _load_input_series(opt),
        "p": opt.require("p", int),
        "method": opt.get("method", "tsqrf"),
        "log_returns": opt.get_bool("log_returns"),
        "forest": _forest_payload(opt),
        "wnw": _wnw_payload(opt),
    }
    result = _post(client, "/fit", payload)
    _write(out, json.dumps(result["model"], sort_keys=True) + "\n")
    print(f"wrote {out}")
    return 0


def _read_queries(path: str) -> list[list[float]]:
    header, rows = _read_table(path)
    try:
        return [[float(v) for v in row] for row in rows]
    except ValueError as exc:
        raise ValueError(f"non-numeric value in query file {path}: {exc}") from exc


def cmd_predict(args, cfg, client) -> int:
    opt = _Options(args, cfg)
    out = opt.require("out")
    taus = opt.require("taus", _parse_floats)
    with open(opt.require("model"), encoding="utf-8") as fh:
        model_doc = json.load(fh)
    payload = {
        "model": model_doc,
        "queries": _read_queries(opt.require("queries")),
        "taus": taus,
    }
    result = _post(client, "/predict", payload)
    labels = [_tau_label(t) for t in taus]
    lines = ["t," + ",".join(labels)]
    for i, row in enumerate(result["predictions"], start=1):
        lines.append(",".join([str(i)] + [repr(float(v)) for v in row]))
    _write(out, "\n".join(lines) + "\n")
    print(f"wrote {out}")
    return 0


def cmd_bench(args, cfg, client) -> int:
    opt = _Options(args, cfg)
    out_dir = opt.require("out_dir")
    os.makedirs(out_dir, exist_ok=True)
    real = opt.get("real")
    if real:
        column = opt.get("column", "close")
        series = load_series_csv(real, column, drop_missing=True)
        payload = {
            "values": series.values.tolist(),
            "prices": not opt.get_bool("no_log_returns"),
            "p": opt.get("p", 2, int),
            "train_frac": opt.get("train_frac", 0.666, float),
            "taus": opt.get("taus", [0.025, 0.1, 0.5, 0.9, 0.975], _parse_floats),
            "methods": opt.get("methods", ["tsqrf", "wnw"], _parse_names),
            "forest": _forest_payload(opt),
            "wnw": _wnw_payload(opt),
        }
        n_train_override = opt.get("train_len", None, int)
        if n_train_override is not None:
            payload["n_train"] = n_train_override
        result = _post(client, "/coverage", payload)
        coverage_path = os.path.join(out_dir, "coverage.csv")
        _write(coverage_path, coverage_to_csv(result["rows"]))
        _write(os.path.join(out_dir, "coverage.json"), report_to_json(result["rows"], kind="coverage"))
        print(f"wrote {coverage_path} (train length {result['n_train']})")
        return 0

    forest = _forest_payload(opt)
    if opt.get("trees", None, int) is None:
        forest["num_trees"] = 200  # desk-scale bench default
    payload = {
        "models": opt.get("models", ["a", "b", "c", "d"], _parse_names),
        "errors": opt.get("errors", ["normal", "laplace"], _parse_names),
        "t_train": opt.get("T", [1000], lambda s: [int(v) for v in _parse_floats(s)]),
        "t_test": opt.get("t_test", 500, int),
        "replicates": opt.get("R", 20, int),
        "taus": opt.get("taus", [0.1, 0.5, 0.9], _parse_floats),
        "methods": opt.get("methods", ["tsqrf", "wnw"], _parse_names),
        "seed": opt.get("seed", 0, int),
        "burn_in": opt.get("burn_in", 200, int),
        "threads": opt.get("threads", 1, int),
        "forest": forest,
        "wnw": _wnw_payload(opt),
    }
    result = _post(client, "/bench", payload)
    paths = {
        "report_train.csv": report_to_csv(result["report_train"]),
        "report_train.json": report_to_json(result["report_train"]),
        "report_test.csv": report_to_csv(result["report_test"]),
        "report_test.json": report_to_json(result["report_test"]),
        "bias_samples.csv": bias_samples_to_csv(result["bias_samples"]),
    }
    for name, text in paths.items():
        _write(os.path.join(out_dir, name), text)
    print(f"wrote {len(paths)} report files to {out_dir}")
    return 0


def cmd_plot(args, cfg, client) -> int:
    opt = _Options(args, cfg)
    kind = opt.require("kind")
    out = opt.require("out")
    path = opt.require("input")
    header, rows = _read_table(path)
    if not rows:
        raise ValueError(f"no data rows in {path}")
    if kind == "bands":
        if "t" not in header:
            raise ValueError(f"{path} needs a 't' column for a band chart")
        t_col = header.index("t")
        q_cols = {}
        for ci, name in enumerate(header):
            if name.startswith("q_"):
                q_cols[float(name[2:])] = ci
        if not q_cols:
            raise ValueError(f"{path} has no q_<tau> columns")
        payload = {
            "t": [float(r[t_col]) for r in rows],
            "quantiles": {str(tau): [float(r[ci]) for r in rows] for tau, ci in q_cols.items()},
            "title": opt.get("title", ""),
        }
        series_path = opt.get("series")
        if series_path:
            s_header, s_rows = _read_table(series_path)
            column = opt.get("series_column", "y")
            if column not in s_header:
                raise ValueError(f"{series_path} has no column {column!r}")
            sci = s_header.index(column)
            series_vals = [float(r[sci]) for r in s_rows]
            if len(series_vals) != len(rows):
                # align on the shared t values when the series covers more history
                t_map = {}
                if "t" in s_header:
                    sti = s_header.index("t")
                    t_map = {float(r[sti]): float(r[sci]) for r in s_rows}
                try:
                    series_vals = [t_map[tv] for tv in payload["t"]]
                except KeyError:
                    raise ValueError("series rows do not cover the prediction time axis")
            payload["series"] = series_vals
        result = _post(client, "/plot/bands", payload)
    elif kind == "histogram":
        column = opt.get("value_column", "bias")
        if column not in header:
            raise ValueError(f"{path} has no column {column!r}")
        ci = header.index(column)
        payload = {
            "values": [float(r[ci]) for r in rows],
            "bins": opt.get("bins", 20, int),
            "title": opt.get("title", ""),
        }
        result = _post(client, "/plot/histogram", payload)
    else:
        raise UsageError(f"unknown plot kind {kind!r}; expected 'bands' or 'histogram'")
    _write(out, result["svg"])
    print(f"wrote {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="tsqrf", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", help="base URL of a running service; default runs in-process")
    common.add_argument("--config", help="flat key=value config file; flags override")

    p_sim = sub.add_parser("simulate", parents=[common], help="simulate a synthetic series")
    p_sim.add_argument("--model", choices=["a", "b", "c", "d"])
    p_sim.add_argument("--error", choices=["normal", "laplace"])
    p_sim.add_argument("--T", type=int, dest="T")
    p_sim.add_argument("--burn-in", type=int, dest="burn_in")
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--taus", type=_parse_floats)
    p_sim.add_argument("--out")
    p_sim.add_argument("--quantiles-out", dest="quantiles_out")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", parents=[common], help="fit a model and save it")
    p_fit.add_argument("--input")
    p_fit.add_argument("--column")
    p_fit.add_argument("--drop-missing", action="store_true", dest="drop_missing", default=None)
    p_fit.add_argument("--log-returns", action="store_true", dest="log_returns", default=None)
    p_fit.add_argument("--p", type=int)
    p_fit.add_argument("--method", choices=["tsqrf", "wnw"])
    p_fit.add_argument("--seed", type=int)
    p_fit.add_argument("--trees", type=int)
    p_fit.add_argument("--subsample-fraction", type=float, dest="subsample_fraction")
    p_fit.add_argument("--omega", type=float)
    p_fit.add_argument("--min-leaf", type=int, dest="min_leaf")
    p_fit.add_argument("--mtry-mean", type=int, dest="mtry_mean")
    p_fit.add_argument("--split-taus", type=_parse_floats, dest="split_taus")
    p_fit.add_argument("--bandwidth")
    p_fit.add_argument("--cv-taus", type=_parse_floats, dest="cv_taus")
    p_fit.add_argument("--threads", type=int)
    p_fit.add_argument("--out")
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", parents=[common], help="predict quantiles from a saved model")
    p_pred.add_argument("--model")
    p_pred.add_argument("--queries")
    p_pred.add_argument("--taus", type=_parse_floats)
    p_pred.add_argument("--out")
    p_pred.set_defaults(func=cmd_predict)

    p_bench = sub.add_parser("bench", parents=[common], help="run the simulation study or a real-data coverage pipeline")
    p_bench.add_argument("--models", type=_parse_names)
    p_bench.add_argument("--errors", type=_parse_names)
    p_bench.add_argument("--T", dest="T", type=lambda s: [int(v) for v in _parse_floats(s)])
    p_bench.add_argument("--t-test", type=int, dest="t_test")
    p_bench.add_argument("--R", type=int, dest="R")
    p_bench.add_argument("--trees", type=int)
    p_bench.add_argument("--subsample-fraction", type=float, dest="subsample_fraction")
    p_bench.add_argument("--omega", type=float)
    p_bench.add_argument("--min-leaf", type=int, dest="min_leaf")
    p_bench.add_argument("--mtry-mean", type=int, dest="mtry_mean")
    p_bench.add_argument("--split-taus", type=_parse_floats, dest="split_taus")
    p_bench.add_argument("--taus", type=_parse_floats)
    p_bench.add_argument("--methods", type=_parse_names)
    p_bench.add_argument("--seed", type=int)
    p_bench.add_argument("--burn-in", type=int, dest="burn_in")
    p_bench.add_argument("--threads", type=int)
    p_bench.add_argument("--bandwidth")
    p_bench.add_argument("--cv-taus", type=_parse_floats, dest="cv_taus")
    p_bench.add_argument("--real", help="price CSV; runs the coverage pipeline instead of the grid study")
    p_bench.add_argument("--column")
    p_bench.add_argument("--no-log-returns", action="store_true", dest="no_log_returns", default=None)
    p_bench.add_argument("--train-frac", type=float, dest="train_frac")
    p_bench.add_argument("--train-len", type=int, dest="train_len")
    p_bench.add_argument("--p", type=int)
    p_bench.add_argument("--out-dir", dest="out_dir")
    p_bench.set_defaults(func=cmd_bench)

    p_plot = sub.add_parser("plot", parents=[common], help="render prediction or bias files as SVG")
    p_plot.add_argument("--kind", choices=["bands", "histogram"])
    p_plot.add_argument("--input")
    p_plot.add_argument("--series")
    p_plot.add_argument("--series-column", dest="series_column")
    p_plot.add_argument("--value-column", dest="value_column")
    p_plot.add_argument("--bins", type=int)
    p_plot.add_argument("--title")
    p_plot.add_argument("--out")
    p_plot.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            raise UsageError("a command is required: simulate | fit | predict | bench | plot")
        cfg = _read_config(args.config) if getattr(args, "config", None) else {}
        client = _make_client(getattr(args, "server", None))
        try:
            return args.func(args, cfg, client)
        finally:
            client.close()
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
