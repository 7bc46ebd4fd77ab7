"""Command-line surface: fit, decompose, synth, sample, logz, classify, info.

Models and reports are JSON, row-shaped data is CSV. Every output file is
written to a temporary name and renamed into place, so a failing command
never leaves a partial artifact. Exit codes: 2 for argument or input
problems, 3 for capacity refusals, 4 for convergence failures.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
import os
import sys
import tempfile

import click
import numpy as np

from . import data as data_mod
from .core import (
    InteractionCollection,
    ProbTensor,
    Shape,
    VarSubset,
    check_enum_cap,
    enum_cap,
)
from .errors import (
    CapacityError,
    ConvergenceError,
    DomainError,
    MahgentaError,
    ParseError,
)
from .info import (
    Chain,
    canonical_ri,
    decompose_chain,
    entropy,
    greedy_chain,
    j_value,
    mmi,
)
from .loglinear import ThetaModel, exact_log_partition
from .sampling import ais_log_partition, draw_samples
from .selection import SelectionConfig, mahgenta_fit

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# atomic file helpers


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2) + "\n")


def _csv_line(fields) -> str:
    out = []
    for f in fields:
        s = str(f)
        if any(c in s for c in ",\"\n"):
            s = '"' + s.replace('"', '""') + '"'
        out.append(s)
    return ",".join(out)


def _write_csv(path: str, header, rows) -> None:
    lines = [_csv_line(header)] + [_csv_line(r) for r in rows]
    _atomic_write(path, "\n".join(lines) + "\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# model and tensor files


def save_model(model: ThetaModel, path: str, column_names=None, category_labels=None,
               provenance: dict | None = None) -> None:
    """Serialize a model; loading reproduces its energies bit-exactly."""
    subsets = sorted(model.params, key=VarSubset.sort_key)
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "model",
        "cardinalities": list(model.shape.cardinalities),
        "column_names": list(column_names) if column_names else
        [f"x{k}" for k in range(1, model.shape.d + 1)],
        "category_labels": [list(c) for c in category_labels] if category_labels else
        [[str(v) for v in range(c)] for c in model.shape],
        "interactions": [list(s.members) for s in subsets],
        "parameters": [
            {"subset": list(s.members), "values": model.params[s].reshape(-1).tolist()}
            for s in subsets
        ],
        "log_normalizer": model.log_z,
        "log_normalizer_state": model.log_z_state,
        "log_normalizer_stderr": model.log_z_stderr,
        "provenance": provenance or {},
    }
    _write_json(path, payload)


def load_model(path: str) -> tuple[ThetaModel, dict]:
    """Load a model file; returns the model and the raw payload."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if payload.get("kind") != "model":
        raise ParseError(f"{path}: expected a model file, got kind={payload.get('kind')!r}")
    if payload.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported format version {payload.get('format_version')!r}")
    shape = Shape(tuple(payload["cardinalities"]))
    subsets = [VarSubset(tuple(m)) for m in payload["interactions"]]
    collection = InteractionCollection(subsets)
    params = {}
    for entry in payload["parameters"]:
        s = VarSubset(tuple(entry["subset"]))
        params[s] = np.asarray(entry["values"], dtype=np.float64).reshape(shape.restrict(s))
    model = ThetaModel(shape, collection, params)
    model.log_z = payload.get("log_normalizer")
    model.log_z_state = payload.get("log_normalizer_state", "stale")
    model.log_z_stderr = payload.get("log_normalizer_stderr", 0.0) or 0.0
    return model, payload


def save_distribution(p: ProbTensor, path: str) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "distribution",
        "cardinalities": list(p.shape),
        "values": p.values.reshape(-1).tolist(),
    }
    _write_json(path, payload)


def load_distribution(path: str) -> ProbTensor:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if payload.get("kind") != "distribution":
        raise ParseError(f"{path}: expected a distribution file, got kind={payload.get('kind')!r}")
    cards = tuple(payload["cardinalities"])
    values = np.asarray(payload["values"], dtype=np.float64).reshape(cards)
    d = len(cards)
    return ProbTensor(VarSubset(tuple(range(1, d + 1))), values)


def _load_chain_file(path: str) -> Chain:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    subsets = [VarSubset(tuple(m)) for m in payload["subsets"]]
    return Chain.from_added(subsets)


def _load_collection_file(path: str) -> InteractionCollection:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    return InteractionCollection(VarSubset(tuple(m)) for m in payload["subsets"])


# ---------------------------------------------------------------------------
# shared command plumbing


def _stage(name):
    """Map library errors to stable exit codes, naming the failing stage."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except CapacityError as exc:
                click.echo(f"{name}: capacity error: {exc}", err=True)
                sys.exit(3)
            except ConvergenceError as exc:
                click.echo(f"{name}: convergence error: {exc}", err=True)
                sys.exit(4)
            except (ParseError, DomainError) as exc:
                click.echo(f"{name}: {exc}", err=True)
                sys.exit(2)
            except MahgentaError as exc:
                click.echo(f"{name}: {exc}", err=True)
                sys.exit(2)

        return run

    return wrap


def _empirical_joint(ds: data_mod.Dataset) -> ProbTensor:
    check_enum_cap(ds.shape.n_events(), "the empirical joint distribution")
    return data_mod.empirical_marginal(ds, ds.shape.all_variables())


def _parse_subset(text: str) -> VarSubset:
    try:
        members = tuple(sorted({int(x) for x in text.split(",") if x.strip()}))
    except ValueError:
        raise DomainError(f"cannot parse subset {text!r}; expected e.g. '1,2,3'") from None
    if not members:
        raise DomainError("the subset must name at least one variable")
    return VarSubset(members)


@click.group()
def main():
    """Hierarchical log-linear density modeling over finite discrete spaces."""


# ---------------------------------------------------------------------------
# fit


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--tau", default=0.30, show_default=True, help="Heredity strength in [0, 1].")
@click.option("--k", default=10, show_default=True, help="Interactions added per round.")
@click.option("--epochs", default=10, show_default=True, help="Gradient epochs per round.")
@click.option("--lr", default=0.50, show_default=True, help="Learning rate.")
@click.option("--seed", default=0, show_default=True)
@click.option("--max-order", default=4, show_default=True, help="Largest interaction size considered.")
@click.option("--renorm/--no-renorm", default=True, show_default=True,
              help="Divide scores by free-parameter count.")
@click.option("--error-mode", type=click.Choice(["exact", "ais"]), default="exact",
              show_default=True)
@click.option("--no-header", is_flag=True, help="Treat the first CSV line as data.")
@click.option("--out", default="model.json", show_default=True, type=click.Path(dir_okay=False))
@click.option("--history", "history_path", default=None,
              help="History CSV path [default: <out>_history.csv].")
@_stage("fit")
def fit(data_path, tau, k, epochs, lr, seed, max_order, renorm, error_mode,
        no_header, out, history_path):
    """Learn a model from a CSV by greedy interaction selection."""
    ds = data_mod.load_csv(data_path, header=not no_header)
    tagged = data_mod.split(ds, seed=seed)
    config = SelectionConfig(
        tau=tau, k=k, epochs_per_round=epochs, lr=lr, max_order=max_order,
        renormalize_score=renorm,
        error_mode="exact_kl" if error_mode == "exact" else "estimated_nll",
    )
    model, history = mahgenta_fit(tagged.subset("train"), tagged.subset("val"),
                                  config, seed=seed)
    if history_path is None:
        stem = out[:-5] if out.endswith(".json") else out
        history_path = f"{stem}_history.csv"
    provenance = {
        "command": "fit",
        "seed": seed,
        "dataset": os.path.basename(data_path),
        "dataset_sha256": _sha256(data_path),
        "config": {
            "tau": tau, "k": k, "epochs_per_round": epochs, "lr": lr,
            "max_order": max_order, "renormalize_score": renorm,
            "error_mode": config.error_mode,
        },
    }
    save_model(model, out, ds.column_names, ds.category_labels, provenance)
    history.to_csv(history_path)
    best = history.best_round()
    click.echo(
        f"best round {best.round}: collection size {best.collection_size}, "
        f"train error {best.train_error:.6f}, val error {best.val_error:.6f}"
    )
    click.echo(f"model -> {out}")
    click.echo(f"history -> {history_path}")


# ---------------------------------------------------------------------------
# decompose


@main.command()
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--dist", "dist_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--chain", "chain_spec", default="greedy", show_default=True,
              help="'greedy' or a path to a chain JSON file.")
@click.option("--tol", default=1e-9, show_default=True, help="Projection tolerance.")
@click.option("--no-header", is_flag=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@_stage("decompose")
def decompose(data_path, dist_path, chain_spec, tol, no_header, out):
    """Decompose KL(p; uniform) into per-interaction refined information."""
    if (data_path is None) == (dist_path is None):
        raise DomainError("provide exactly one of --data or --dist")
    if data_path is not None:
        p = _empirical_joint(data_mod.load_csv(data_path, header=not no_header))
    else:
        p = load_distribution(dist_path)
    if chain_spec == "greedy":
        chain = greedy_chain(p, tol=tol)
    else:
        if not os.path.exists(chain_spec):
            raise DomainError(f"--chain must be 'greedy' or an existing file, got {chain_spec!r}")
        chain = _load_chain_file(chain_spec)
    report = decompose_chain(p, chain, tol=tol)
    payload = report.to_json_dict()
    if out:
        _write_json(out, payload)
        click.echo(f"report -> {out}")
    else:
        click.echo(json.dumps(payload, indent=2))
    click.echo(f"total KL {report.total_kl:.9f} nats; telescoping residual "
               f"{report.residual():.3e}")


# ---------------------------------------------------------------------------
# synth


@main.command()
@click.option("--complexity", type=click.Choice(sorted(data_mod.COMPLEXITY_PRESETS)),
              default=None)
@click.option("--collection", "collection_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON file with a 'subsets' list.")
@click.option("--shape", "shape_spec", default=None,
              help="Comma-separated cardinalities for --collection mode [default: 5,5,5,5].")
@click.option("--n", default=1000, show_default=True)
@click.option("--sigma", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out-truth", default="truth.json", show_default=True)
@click.option("--out-samples", default="samples.csv", show_default=True)
@_stage("synth")
def synth(complexity, collection_path, shape_spec, n, sigma, seed, out_truth, out_samples):
    """Draw a ground-truth distribution with known structure and sample rows."""
    if (complexity is None) == (collection_path is None):
        raise DomainError("provide exactly one of --complexity or --collection")
    if complexity is not None:
        shape, collection = data_mod.complexity_preset(complexity)
    else:
        collection = _load_collection_file(collection_path)
        cards = tuple(int(c) for c in (shape_spec or "5,5,5,5").split(","))
        shape = Shape(cards)
    spec = data_mod.SyntheticSpec(shape, collection, sigma=sigma, seed=seed)
    truth, ds = data_mod.synth_generate(spec, n)
    save_distribution(truth, out_truth)
    rows = [
        [ds.category_labels[j][code] for j, code in enumerate(row)] for row in ds.rows
    ]
    _write_csv(out_samples, ds.column_names, rows)
    uniform = ProbTensor.uniform(truth.subset, shape)
    from .info import kl_divergence  # local import keeps the module graph flat

    click.echo(f"KL(truth; uniform) = {kl_divergence(truth, uniform):.6f} nats")
    click.echo(f"truth -> {out_truth}")
    click.echo(f"samples -> {out_samples}")


# ---------------------------------------------------------------------------
# sample


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--n", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--burn-in", default=100, show_default=True)
@click.option("--out", default="samples.csv", show_default=True)
@_stage("sample")
def sample(model_path, n, seed, burn_in, out):
    """Draw block-Gibbs samples from a fitted model."""
    model, payload = load_model(model_path)
    rows = draw_samples(model, n, seed=seed, burn_in=burn_in)
    labels = payload["category_labels"]
    names = payload["column_names"]
    decoded = [[labels[j][code] for j, code in enumerate(row)] for row in rows]
    _write_csv(out, names, decoded)
    click.echo(f"{n} samples (seed {seed}) -> {out}")


# ---------------------------------------------------------------------------
# logz


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["auto", "exact", "ais"]), default="auto",
              show_default=True)
@click.option("--chains", default=256, show_default=True)
@click.option("--temps", default=200, show_default=True)
@click.option("--sweeps", default=1, show_default=True)
@click.option("--schedule", type=click.Choice(["uniform", "geometric"]), default="uniform",
              show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@_stage("logz")
def logz(model_path, method, chains, temps, sweeps, schedule, seed, out):
    """Estimate (or compute) the model's log-partition function."""
    model, _ = load_model(model_path)
    if method == "auto":
        method = "exact" if model.shape.n_events() <= enum_cap() else "ais"
    if method == "exact":
        value = exact_log_partition(model)
        payload = {"format_version": FORMAT_VERSION, "method": "exact", "log_z": value}
    else:
        est = ais_log_partition(model, n_chains=chains, n_temps=temps,
                                sweeps_per_temp=sweeps, seed=seed, schedule=schedule)
        payload = {"method": "ais", **est.to_json_dict()}
    if out:
        _write_json(out, payload)
        click.echo(f"logz -> {out}")
    click.echo(json.dumps(payload if method == "exact" else
                          {k: payload[k] for k in ("method", "log_z", "stderr", "ess", "reliable")},
                          indent=2))


# ---------------------------------------------------------------------------
# classify


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--target", default="all", show_default=True,
              help="Column name, 1-based index, or 'all'.")
@click.option("--no-header", is_flag=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False),
              help="Predictions CSV (single target only).")
@_stage("classify")
def classify_cmd(model_path, data_path, target, no_header, out):
    """Per-column accuracy of the model conditionals on a dataset."""
    model, payload = load_model(model_path)
    ds = data_mod.load_csv(data_path, header=not no_header)
    if ds.shape.cardinalities != tuple(payload["cardinalities"]):
        raise DomainError(
            "dataset cardinalities do not match the model; make sure the data "
            "file matches the one the model was fitted on"
        )
    targets = (
        list(range(1, ds.shape.d + 1)) if target == "all" else [ds.column_index(target)]
    )
    click.echo("column,accuracy")
    results = []
    for k in targets:
        res = data_mod.classify(model, ds, k)
        results.append(res)
        click.echo(f"{ds.column_names[k - 1]},{res.accuracy:.4f}")
    if out:
        if len(targets) != 1:
            raise DomainError("--out needs a single --target column")
        res = results[0]
        k = targets[0]
        labels = ds.category_labels[k - 1]
        header = ["row", "true", "predicted"] + [f"p_{lab}" for lab in labels]
        rows = []
        for i in range(ds.n):
            rows.append(
                [i, labels[res.truth[i]], labels[res.predictions[i]]]
                + [repr(float(v)) for v in res.probabilities[i]]
            )
        _write_csv(out, header, rows)
        click.echo(f"predictions -> {out}")


# ---------------------------------------------------------------------------
# info


@main.command(name="info")
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--dist", "dist_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--subset", "subset_text", required=True, help="e.g. '1,2,3'.")
@click.option("--measure", type=click.Choice(["H", "I", "J", "RI-marg", "RI-cond"]),
              required=True)
@click.option("--unit", type=click.Choice(["bits", "nats"]), default="bits", show_default=True)
@click.option("--no-header", is_flag=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@_stage("info")
def info_cmd(data_path, dist_path, subset_text, measure, unit, no_header, out):
    """Information measures of a subset under an empirical or explicit distribution."""
    if (data_path is None) == (dist_path is None):
        raise DomainError("provide exactly one of --data or --dist")
    if data_path is not None:
        p = _empirical_joint(data_mod.load_csv(data_path, header=not no_header))
    else:
        p = load_distribution(dist_path)
    s = _parse_subset(subset_text)
    if measure == "H":
        value = entropy(p, s, unit=unit)
    elif measure == "I":
        value = mmi(p, s, unit=unit)
    elif measure == "J":
        value = j_value(p, s, unit=unit)
    else:
        mode = "marginal" if measure == "RI-marg" else "conditional"
        nats = canonical_ri(p, s, mode=mode)
        value = nats if unit == "nats" else nats / math.log(2.0)
    payload = {
        "format_version": FORMAT_VERSION,
        "measure": measure,
        "subset": list(s.members),
        "unit": unit,
        "value": value,
    }
    if out:
        _write_json(out, payload)
    click.echo(f"{measure}({s}) = {value:.10g} {unit}")


if __name__ == "__main__":
    main()
