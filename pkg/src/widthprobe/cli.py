"""Command-line front end.

The CLI is a thin client of the HTTP service: every pipeline command
builds a run request, submits it, polls until the run finishes, and
then downloads the artifacts.  With ``--server`` it talks to a remote
instance; without it the service runs in-process behind the same API,
so behavior is identical either way.  Only ``report`` and ``recipes``
work purely locally.
"""

import argparse
import json
import os
import sys
import time

from .errors import WidthProbeError
from .report import load_report, render_summary, render_sweep_tsv

POLL_SECONDS = 0.3

DEFAULT_DATA_DIR = os.environ.get("WIDTHPROBE_DATA_DIR", "data")


class CliError(Exception):
    """Fatal CLI problem; exit code 2 for usage/config, 1 for runtime."""

    def __init__(self, message, code=1):
        super().__init__(message)
        self.code = code


# -- bundled experiment recipes ---------------------------------------
#
# Each recipe reproduces one published experiment at its original
# scale.  Dataset files are user-supplied: place them under --data-dir
# (or WIDTHPROBE_DATA_DIR); nothing is ever downloaded.

RECIPES = {
    "mnist8x8": {
        "description": (
            "digit images pooled 28x28 -> 8x8, two 128-wide Abs hidden "
            "layers, C=3, Accuracy"
        ),
        "request": {
            "dataset": {
                "kind": "idx",
                "images": "{data_dir}/train-images-idx3-ubyte",
                "labels": "{data_dir}/train-labels-idx1-ubyte",
                "test_images": "{data_dir}/t10k-images-idx3-ubyte",
                "test_labels": "{data_dir}/t10k-labels-idx1-ubyte",
                "downscale_8x8": True,
            },
            "formula": "FCx10 (Softmax), FCx128 (Abs), FCx128 (Abs), BN",
            "folds": 3,
            "metric": "accuracy",
        },
        "widths": [40, 10],
    },
    "mnist28x28": {
        "description": "full-size digit images, two 300-wide ReLU hidden layers",
        "request": {
            "dataset": {
                "kind": "idx",
                "images": "{data_dir}/train-images-idx3-ubyte",
                "labels": "{data_dir}/train-labels-idx1-ubyte",
                "test_images": "{data_dir}/t10k-images-idx3-ubyte",
                "test_labels": "{data_dir}/t10k-labels-idx1-ubyte",
            },
            "formula": "FCx10 (Softmax), FCx300 (ReLU), FCx300 (ReLU), BN, FL",
            "folds": 3,
            "metric": "accuracy",
        },
        "widths": [68, 19],
    },
    "fashion": {
        "description": "clothing images, two 200-wide ReLU hidden layers",
        "request": {
            "dataset": {
                "kind": "idx",
                "images": "{data_dir}/fashion/train-images-idx3-ubyte",
                "labels": "{data_dir}/fashion/train-labels-idx1-ubyte",
                "test_images": "{data_dir}/fashion/t10k-images-idx3-ubyte",
                "test_labels": "{data_dir}/fashion/t10k-labels-idx1-ubyte",
            },
            "formula": "FCx10 (Softmax), FCx200 (ReLU), FCx200 (ReLU), BN, FL",
            "folds": 3,
            "metric": "accuracy",
        },
        "widths": [36, 25],
    },
    "california": {
        "description": "house-value regression, one 200-wide ReLU hidden layer",
        "request": {
            "dataset": {
                "kind": "csv",
                "path": "{data_dir}/california_housing.csv",
                "target_columns": ["MedHouseVal"],
                "standardize": True,
                "test_fraction": 0.25,
            },
            "formula": "FCx1 (linear), FCx200 (ReLU), BN",
            "folds": 3,
            "metric": "mse",
        },
        "widths": [5],
    },
    "wine": {
        "description": "wine-quality regression, one 200-wide ReLU hidden layer",
        "request": {
            "dataset": {
                "kind": "csv",
                "path": "{data_dir}/winequality-red.csv",
                "target_columns": ["quality"],
                "standardize": True,
                "delimiter": ";",
                "test_fraction": 0.25,
            },
            "formula": "FCx1 (linear), FCx200 (ReLU), BN",
            "folds": 3,
            "metric": "mse",
        },
        "widths": [6],
    },
}


# -- service client ----------------------------------------------------


class ServiceClient:
    """HTTP client for the run API; in-process unless a server is given."""

    def __init__(self, server=None, quiet=False):
        self.quiet = quiet
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app())

    def close(self):
        self._client.close()

    def _say(self, message):
        if not self.quiet:
            print(message, file=sys.stderr)

    def _check(self, response):
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise CliError(f"service error ({response.status_code}): {detail}")
        return response

    def get(self, path):
        return self._check(self._client.get(path))

    def post(self, path, payload):
        return self._check(self._client.post(path, json=payload))

    def run_to_completion(self, request):
        created = self.post("/runs", request).json()
        run_id = created["run_id"]
        self._say(f"run {run_id} submitted")
        while True:
            status = self.get(f"/runs/{run_id}").json()
            if status["state"] == "done":
                return run_id, status
            if status["state"] == "error":
                raise CliError(f"run {run_id} failed: {status['error']}")
            time.sleep(POLL_SECONDS)


# -- request assembly --------------------------------------------------

_BOOL_KEYS = {"downscale_8x8", "standardize"}
_FLOAT_KEYS = {"test_fraction"}
_INT_KEYS = {"split_seed"}
_KEY_ALIASES = {"downscale": "downscale_8x8", "targets": "target_columns"}


def parse_dataset_spec(spec):
    """Parse the compact --dataset form: comma-separated key=value pairs.

    Example: ``kind=idx,images=a,labels=b,downscale=1``.  Multiple
    target columns are '+'-separated: ``targets=quality+alcohol``.
    """
    out = {}
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise CliError(f"bad dataset field {chunk!r}, expected key=value", code=2)
        key, value = chunk.split("=", 1)
        key = _KEY_ALIASES.get(key.strip(), key.strip())
        value = value.strip()
        if key in _BOOL_KEYS:
            out[key] = value.lower() in ("1", "true", "yes", "on")
        elif key in _FLOAT_KEYS:
            out[key] = float(value)
        elif key in _INT_KEYS:
            out[key] = int(value)
        elif key == "target_columns":
            out[key] = value.split("+")
        else:
            out[key] = value
    return out


def _expand_data_dir(value, data_dir):
    if isinstance(value, str):
        return value.replace("{data_dir}", data_dir)
    if isinstance(value, list):
        return [_expand_data_dir(v, data_dir) for v in value]
    if isinstance(value, dict):
        return {k: _expand_data_dir(v, data_dir) for k, v in value.items()}
    return value


def _parse_int_list(text, flag):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"{flag} expects comma-separated integers, got {text!r}",
                       code=2) from None


def build_request(args, command):
    """Merge recipe, config file, and flags (in rising precedence)."""
    request = {}
    if args.recipe:
        if args.recipe not in RECIPES:
            raise CliError(
                f"unknown recipe {args.recipe!r}; try: {', '.join(sorted(RECIPES))}",
                code=2,
            )
        request.update(json.loads(json.dumps(RECIPES[args.recipe]["request"])))
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise CliError(f"cannot read config file: {exc}", code=2) from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"config file is not valid JSON: {exc}", code=2) from exc
        if not isinstance(loaded, dict):
            raise CliError("config file must hold a JSON object", code=2)
        request.update(loaded)

    if args.dataset:
        request["dataset"] = parse_dataset_spec(args.dataset)
    if args.formula is not None:
        request["formula"] = args.formula
    if args.folds is not None:
        request["folds"] = args.folds
    if args.metric is not None:
        request["metric"] = args.metric
    if args.seed is not None:
        request["seed"] = args.seed
    if args.bootstrap_n is not None:
        request["bootstrap_n"] = args.bootstrap_n
    if args.layers is not None:
        request["layers"] = _parse_int_list(args.layers, "--layers")
    if args.jobs is not None:
        request["jobs"] = args.jobs
    if getattr(args, "sweep_points", None) is not None:
        request["sweep_points"] = args.sweep_points

    if command == "verify":
        if getattr(args, "from_report", None):
            estimate = load_report(args.from_report)
            ordered = sorted(estimate.per_layer, key=lambda e: e.hidden_ordinal)
            request["layers"] = [e.hidden_ordinal for e in ordered]
            request["widths"] = [e.m_final for e in ordered]
        elif getattr(args, "widths", None):
            request["widths"] = _parse_int_list(args.widths, "--widths")
        elif args.recipe and "widths" in RECIPES[args.recipe]:
            request["widths"] = list(RECIPES[args.recipe]["widths"])

    request["command"] = command
    request = _expand_data_dir(request, args.data_dir)

    if "dataset" not in request:
        raise CliError("no dataset given: use --dataset, --config, or --recipe",
                       code=2)
    if not request.get("formula"):
        raise CliError("no architecture formula given: use --formula, "
                       "--config, or --recipe", code=2)
    _check_files_exist(request["dataset"])
    return request


def _check_files_exist(dataset):
    keys = ("images", "labels", "test_images", "test_labels", "path")
    missing = [
        dataset[k] for k in keys if dataset.get(k) and not os.path.isfile(dataset[k])
    ]
    if missing:
        raise CliError(
            "dataset files not found: " + ", ".join(missing)
            + " (supply the files; nothing is downloaded automatically)",
            code=2,
        )


# -- artifact writing --------------------------------------------------


def _write(path, content):
    mode = "wb" if isinstance(content, bytes) else "w"
    with open(path, mode) as fh:
        fh.write(content)


def fetch_artifacts(client, run_id, status, command, out_dir):
    """Download every artifact of a finished run into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    report = client.get(f"/runs/{run_id}/report").text
    path = os.path.join(out_dir, f"{command}-report.json")
    _write(path, report)
    written.append(path)
    summary = client.get(f"/runs/{run_id}/summary").text
    path = os.path.join(out_dir, f"{command}-summary.txt")
    _write(path, summary)
    written.append(path)
    if status.get("has_sweep"):
        sweep = client.get(f"/runs/{run_id}/sweep").text
        path = os.path.join(out_dir, f"{command}-sweep.tsv")
        _write(path, sweep)
        written.append(path)
    for k in range(status.get("network_count", 0)):
        blob = client.get(f"/runs/{run_id}/networks/{k}").content
        path = os.path.join(out_dir, f"network-{k}.npz")
        _write(path, blob)
        written.append(path)
    return summary, written


# -- commands ----------------------------------------------------------


def cmd_pipeline(args, command):
    request = build_request(args, command)
    client = ServiceClient(server=args.server, quiet=args.quiet)
    try:
        run_id, status = client.run_to_completion(request)
        summary, written = fetch_artifacts(
            client, run_id, status, command, args.out
        )
    finally:
        client.close()
    print(summary, end="")
    if not args.quiet:
        for path in written:
            print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_report(args):
    report = load_report(args.input)
    summary = render_summary(report)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write(os.path.join(args.out, "summary.txt"), summary)
        if report.kind == "estimate":
            _write(os.path.join(args.out, "sweep.tsv"), render_sweep_tsv(report))
    print(summary, end="")
    return 0


def cmd_recipes(args):
    if args.name:
        if args.name not in RECIPES:
            raise CliError(f"unknown recipe {args.name!r}", code=2)
        recipe = _expand_data_dir(RECIPES[args.name], args.data_dir)
        print(json.dumps(recipe, indent=2, sort_keys=True))
    else:
        for name in sorted(RECIPES):
            print(f"{name}: {RECIPES[name]['description']}")
    return 0


# -- argument parsing --------------------------------------------------


def _add_common(parser):
    parser.add_argument("--dataset", help="compact dataset spec, key=value pairs "
                        "(e.g. kind=idx,images=...,labels=...,downscale=1)")
    parser.add_argument("--formula", help="architecture formula, output-first "
                        '(e.g. "FCx10 (Softmax), FCx128 (Abs), BN")')
    parser.add_argument("--folds", type=int, help="cross-validation fold count")
    parser.add_argument("--metric", choices=["accuracy", "mse"])
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--bootstrap-n", type=int, dest="bootstrap_n",
                        help="bootstrap resample count")
    parser.add_argument("--layers", help="hidden layers to probe, 1-based "
                        "comma list (default: all)")
    parser.add_argument("--jobs", type=int, help="worker threads")
    parser.add_argument("--out", default="widthprobe-out",
                        help="artifact output directory")
    parser.add_argument("--config", help="JSON file with run request fields; "
                        "flags override it")
    parser.add_argument("--server", help="service URL; omitted = run in-process")
    parser.add_argument("--recipe", help="start from a bundled experiment recipe")
    parser.add_argument("--data-dir", default=DEFAULT_DATA_DIR,
                        help="directory substituted for {data_dir} in recipes")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress progress messages")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="widthprobe",
        description="Estimate the minimum width of trained fully "
        "connected layers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="run the width search")
    _add_common(p)
    p.add_argument("--sweep-points", type=int, dest="sweep_points",
                   help="diagnostic Q(m) sweep resolution (0 disables)")

    p = sub.add_parser("train", help="cross-validated training only")
    _add_common(p)

    p = sub.add_parser("verify", help="retrain at found widths and compare")
    _add_common(p)
    p.add_argument("--widths", help="comma list of widths for the probed "
                   "hidden layers (e.g. 40,10)")
    p.add_argument("--from-report", dest="from_report",
                   help="take layers and widths from an estimate report")

    p = sub.add_parser("report", help="render an existing report JSON")
    p.add_argument("--in", dest="input", required=True, help="report JSON path")
    p.add_argument("--out", help="directory for rendered files")

    p = sub.add_parser("recipes", help="list bundled experiment recipes")
    p.add_argument("name", nargs="?", help="show one recipe in full")
    p.add_argument("--data-dir", default=DEFAULT_DATA_DIR)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "report":
            return cmd_report(args)
        if args.command == "recipes":
            return cmd_recipes(args)
        return cmd_pipeline(args, args.command)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except WidthProbeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
