"""Command-line pipeline: synth, ingest, fit, generate, risk, eval, serve.

Every run writes a <out>.meta.json with the seeds, resolved configuration,
package version, and PRNG identity needed to reproduce its outputs
bit-exactly.  Option precedence: command-line flag, then SALESRISK_<NAME>
environment variable, then --config file entry, then the built-in default.

Exit codes: 0 ok, 2 usage, 3 data error, 4 fit failure, 5 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__, datagen, deepfm, evaluate, quantreg, risk
from .artifacts import ModelRegistry, load_model, model_id, save_model
from .errors import DataError, DomainError, FitError, ParameterError, SalesRiskError, SchemaError
from .generator import ConditionalSampler, PRNG_NAME, export_samples

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_FIT = 4
EXIT_INTERNAL = 5


def _resolve(args, name, config, default=None):
    val = getattr(args, name, None)
    if val is not None:
        return val
    env = os.environ.get(f"SALESRISK_{name.upper()}")
    if env is not None:
        return env
    if config and name in config:
        return config[name]
    return default


def _load_config(args):
    path = getattr(args, "config", None)
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _write_meta(out_path, command, payload):
    meta = {
        "command": command,
        "package_version": __version__,
        "prng": PRNG_NAME,
        "created_at": time.time(),
        **payload,
    }
    with open(f"{out_path}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, default=str)


def _schema_from_args(args, config):
    path = _resolve(args, "schema", config)
    if not path:
        raise SchemaError("a schema config file is required (--schema)")
    with open(path) as fh:
        spec = json.load(fh)
    return spec


def cmd_synth(args):
    config = _load_config(args)
    spec = _schema_from_args(args, config)
    schema = datagen.FieldSchema.from_dict(spec)
    seed = int(_resolve(args, "seed", config, 0))
    if args.params:
        with open(args.params) as fh:
            params = datagen.FmLocationScaleParams.from_dict(json.load(fh))
    else:
        params = datagen.random_params(schema, seed=seed)
    ds = datagen.synth_generate(params, schema, args.n, seed)
    datagen.csv_export(ds, args.out, response_column=args.response_column)
    _write_meta(args.out, "synth", {"n": args.n, "seed": seed,
                                    "params": params.to_dict(), "schema": schema.to_dict()})
    print(f"wrote {args.n} rows to {args.out}")
    return EXIT_OK


def cmd_ingest(args):
    config = _load_config(args)
    spec = _schema_from_args(args, config)
    schema = datagen.infer_levels(args.csv, spec["fields"], delimiter=args.delimiter)
    ds = datagen.csv_ingest(args.csv, schema, args.response_column, delimiter=args.delimiter)
    np.savez(args.out, rows=ds.rows, response=ds.response,
             schema=np.frombuffer(json.dumps(schema.to_dict()).encode(), dtype=np.uint8))
    _write_meta(args.out, "ingest", {
        "csv": args.csv, "n": ds.n, "p": ds.p,
        "rejected_rows": getattr(ds, "diagnostics", []), "schema": schema.to_dict()})
    print(f"ingested {ds.n} rows ({ds.p} one-hot columns) from {args.csv}")
    return EXIT_OK


def _load_dataset(path):
    with np.load(path) as z:
        schema = datagen.FieldSchema.from_dict(json.loads(bytes(z["schema"].tobytes()).decode()))
        return datagen.Dataset(schema=schema, rows=z["rows"], response=z["response"])


def _ingest_for_fit(args, config):
    if args.data.endswith(".npz"):
        return _load_dataset(args.data)
    spec = _schema_from_args(args, config)
    schema = datagen.infer_levels(args.data, spec["fields"], delimiter=args.delimiter)
    return datagen.csv_ingest(args.data, schema, args.response_column, delimiter=args.delimiter)


def cmd_fit(args):
    config = _load_config(args)
    data = _ingest_for_fit(args, config)
    m = args.m or quantreg.default_m(data.n)
    grid = quantreg.QuantileGrid(m)
    seed = int(_resolve(args, "seed", config, 0))
    if args.kind == "linear":
        model = quantreg.fit_grid(data, grid)
        report = {"loss": model.fit_report.loss.tolist(),
                  "iterations": model.fit_report.iterations.tolist(),
                  "messages": model.fit_report.messages}
    else:
        cfg_kwargs = config.get("deepfm", {})
        cfg = deepfm.DeepFmConfig(seed=seed, **cfg_kwargs)
        model = deepfm.train(data, grid, cfg)
        report = {"epoch_loss": model.train_report.epoch_loss,
                  "monotone_fraction": model.train_report.monotone_fraction}
    save_model(model, args.out)
    mid = model_id(model)
    if args.registry:
        ModelRegistry(args.registry).insert(model, created_at=time.time())
    _write_meta(args.out, "fit", {"model_id": mid, "kind": args.kind, "m": m,
                                  "n": data.n, "p": data.p, "seed": seed,
                                  "fit_report": report})
    print(f"fitted {args.kind} model m={m} on n={data.n}; model_id={mid}")
    return EXIT_OK


def _parse_covariates(raw):
    out = {}
    for pair in raw:
        if "=" not in pair:
            raise DomainError(f"covariate {pair!r} is not name=value")
        k, v = pair.split("=", 1)
        out[k] = v
    return out


def cmd_generate(args):
    config = _load_config(args)
    model = load_model(args.model)
    x = model.schema.encode_row(_parse_covariates(args.x))
    seed = int(_resolve(args, "seed", config, 0))
    sampler = ConditionalSampler(model)
    draws = sampler.sample(x, args.K, seed)
    mid = model_id(model)
    export_samples(args.out, draws, mid, x, seed, args.K)
    _write_meta(args.out, "generate", {"model_id": mid, "K": args.K, "seed": seed,
                                       "covariates": _parse_covariates(args.x)})
    print(f"wrote {args.K} draws to {args.out}")
    return EXIT_OK


def cmd_risk(args):
    config = _load_config(args)
    model = load_model(args.model)
    x = model.schema.encode_row(_parse_covariates(args.x))
    seed = int(_resolve(args, "seed", config, 0))
    sampler = ConditionalSampler(model)
    cdf = sampler.cdf(x)
    spec = risk.RiskSpec(r=args.r, l_bar=args.l_bar, l_min=args.l_min,
                         n_grid=args.points, xi=args.xi)
    gl = risk.LOSS_PLUGINS[args.loss_plugin](spec) if args.loss_plugin else None
    curve = risk.risk_curve(cdf, spec, estimator=args.estimator, gl=gl,
                            K=args.K, seed=seed)
    curve.to_csv(args.out)
    curve.to_json(args.out + ".json")
    _write_meta(args.out, "risk", {"model_id": model_id(model), "r": args.r,
                                   "estimator": args.estimator, "seed": seed,
                                   "K": args.K, "loss_plugin": args.loss_plugin,
                                   "covariates": _parse_covariates(args.x)})
    print(f"wrote {curve.levels.size}-point risk curve to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    config = _load_config(args)
    seed = int(_resolve(args, "seed", config, 0))
    plan = evaluate.ReplicationPlan(replications=args.replications, split=args.split,
                                    base_seed=seed, model_kind=args.kind)
    data = _load_dataset(args.data) if args.data.endswith(".npz") else None
    if data is None:
        spec = _schema_from_args(args, config)
        schema = datagen.infer_levels(args.data, spec["fields"], delimiter=args.delimiter)
        data = datagen.csv_ingest(args.data, schema, args.response_column,
                                  delimiter=args.delimiter)

    def fit_fn(train, rep_seed):
        m = args.m or quantreg.default_m(train.n)
        grid = quantreg.QuantileGrid(m)
        if args.kind == "linear":
            return quantreg.fit_grid(train, grid)
        return deepfm.train(train, grid, deepfm.DeepFmConfig(seed=rep_seed,
                                                             **config.get("deepfm", {})))

    uncond, _ = evaluate.replication_sweep(data, plan, fit_fn)
    uncond.to_csv(args.out)
    uncond.to_json(args.out + ".json")
    _write_meta(args.out, "eval", {"replications": args.replications, "seed": seed,
                                   "kind": args.kind, "aggregates": uncond.aggregates})
    print(f"wrote evaluation table ({args.replications} replications) to {args.out}")
    return EXIT_OK


def cmd_serve(args):
    config = _load_config(args)
    import uvicorn

    from .service import create_app

    registry = _resolve(args, "registry", config, "./registry")
    host = _resolve(args, "host", config, "127.0.0.1")
    port = int(_resolve(args, "port", config, 8000))
    app = create_app(registry, static_dir=args.static)
    uvicorn.run(app, host=host, port=port)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="salesrisk", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (lowest precedence)")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    common(p)
    p.add_argument("--schema", help="schema config JSON")
    p.add_argument("--params", help="ground-truth parameter JSON (default: random draw)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--response-column", default="y")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("ingest", help="ingest a CSV into the one-hot dataset form")
    common(p)
    p.add_argument("--schema", help="schema config JSON")
    p.add_argument("--csv", required=True)
    p.add_argument("--response-column", required=True)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--out", required=True, help="output .npz dataset")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("fit", help="fit a quantile-grid model")
    common(p)
    p.add_argument("--data", required=True, help="ingested .npz or raw CSV")
    p.add_argument("--schema", help="schema config JSON (for raw CSV)")
    p.add_argument("--response-column", default="y")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--kind", choices=("linear", "deepfm"), default="linear")
    p.add_argument("--m", type=int, default=None, help="grid size (default sqrt rule)")
    p.add_argument("--registry", help="also insert into this registry directory")
    p.add_argument("--out", required=True, help="model artifact path (.npz)")
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("generate", help="draw samples at a covariate profile")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("-x", action="append", default=[], help="field=value (repeat)")
    p.add_argument("--K", type=int, default=10000)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("risk", help="evaluate the risk curve at a covariate profile")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("-x", action="append", default=[], help="field=value (repeat)")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--l-bar", type=float, default=None)
    p.add_argument("--l-min", type=float, default=0.0)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--xi", type=float, default=None)
    p.add_argument("--estimator", choices=("closed", "mc"), default="closed")
    p.add_argument("--K", type=int, default=10000)
    p.add_argument("--loss-plugin", choices=sorted(risk.LOSS_PLUGINS), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_risk)

    p = sub.add_parser("eval", help="replication sweep with table-style summary")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--response-column", default="y")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--kind", choices=("linear", "deepfm"), default="linear")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    common(p)
    p.add_argument("--registry", default=None)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--static", default=None, help="serve a UI bundle from this directory")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (DataError, SchemaError, ParameterError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FitError as exc:
        print(f"fit failure: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (DomainError, SalesRiskError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
