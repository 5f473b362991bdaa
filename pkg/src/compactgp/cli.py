"""Command-line interface: approx, fit, predict, sample, bench, rank.

Exit codes: 0 success, 1 bad flags or malformed input, 2 solver failure.
Every command writes a JSON manifest next to its primary output recording
the resolved configuration, seed, version, and per-phase timings.
"""

import csv
import io
import json
import os
import sys
import time

import click
import numpy as np
import scipy.linalg

from . import __version__
from .approx import QuadratureSpec, approximate_target
from .basis import make_basis
from .errors import (
    AllCutoffsFailed,
    CompactGPError,
    MaxIterationsExceeded,
    NotPositiveDefinite,
    OrderOutOfRange,
)
from .gp import (
    DENSE_LIMIT,
    FitConfig,
    GPDataset,
    build_pattern,
    dense_gram,
    fit_mle,
    posterior,
    sample_gp,
)
from .kernels import TargetKernel, kernel_to_json, load_kernel, save_kernel
from .phi import compute_phi, rank_dimension
from .sparse import assemble, conjugate_gradient

_SOLVER_ERRORS = (MaxIterationsExceeded, AllCutoffsFailed, NotPositiveDefinite)


def _atomic_write(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path, doc):
    _atomic_write(path, json.dumps(doc, indent=2) + "\n")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _manifest_path(out_path):
    return f"{out_path}.manifest.json"


def _write_manifest(out_path, command, config, seed, timings, outputs, extra=None):
    doc = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "timings_s": timings,
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    path = _manifest_path(out_path)
    _write_json(path, doc)
    return path


def _read_xy_csv(path):
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise click.UsageError(str(exc))
    with fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "x,y":
        raise click.UsageError(f"{path}: expected header 'x,y' on line 1")
    xs, ys = [], []
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            if len(parts) != 2:
                raise ValueError
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
        except ValueError:
            raise click.UsageError(f"{path}: malformed line {no}: {line!r}")
    if not xs:
        raise click.UsageError(f"{path}: no data rows")
    return np.array(xs), np.array(ys)


def _read_x_csv(path):
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise click.UsageError(str(exc))
    with fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "x":
        raise click.UsageError(f"{path}: expected header 'x' on line 1")
    xs = []
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            xs.append(float(line))
        except ValueError:
            raise click.UsageError(f"{path}: malformed line {no}: {line!r}")
    return np.array(xs)


def _parse_float_list(text, flag):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.UsageError(f"{flag}: expected a comma-separated list, got {text!r}")


@click.group()
def cli():
    """Gaussian processes with compactly-supported parametric kernels."""


@cli.command("approx")
@click.option("--target", required=True,
              type=click.Choice(["se", "ou", "matern52", "sinc",
                                 "wendland1", "wendland2", "wendland3", "wendland4"]))
@click.option("--amplitude", default=1.0, show_default=True)
@click.option("--lengthscale", default=1.0, show_default=True)
@click.option("--basis", "basis_name", required=True,
              type=click.Choice(["fourier", "polynomial"]))
@click.option("--order", required=True, type=int)
@click.option("--cutoff", required=True, type=float)
@click.option("--panels", default=64, show_default=True)
@click.option("--nodes", default=32, show_default=True)
@click.option("--peak-match/--no-peak-match", default=True, show_default=True)
@click.option("--out", required=True, type=click.Path())
def cmd_approx(target, amplitude, lengthscale, basis_name, order, cutoff,
               panels, nodes, peak_match, out):
    """Fit a compact kernel to a target kernel and write kernel JSON."""
    try:
        basis = make_basis(basis_name, order)
    except OrderOutOfRange as exc:
        raise click.UsageError(str(exc))
    tk = TargetKernel(target, amplitude, lengthscale)
    quad = QuadratureSpec(panels, nodes)
    t0 = time.monotonic()
    phi = compute_phi(basis)
    t_phi = time.monotonic() - t0
    t0 = time.monotonic()
    result = approximate_target(phi, tk, cutoff, quad, peak_match=peak_match)
    t_solve = time.monotonic() - t0

    from .kernels import make_compact_kernel

    kernel = make_compact_kernel(basis, result.A, cutoff, phi=phi)
    manifest = _write_manifest(
        out, "approx",
        {"target": target, "amplitude": amplitude, "lengthscale": lengthscale,
         "basis": basis_name, "order": order, "cutoff": cutoff,
         "panels": panels, "nodes": nodes, "peak_match": peak_match},
        None, {"phi": t_phi, "solve": t_solve},
        [out, f"{out}.error.json", f"{out}.curve.csv"],
    )
    save_kernel(out, kernel, noise=0.0)
    _write_json(f"{out}.error.json", {
        "l2_error": result.l2_error,
        "iterations": result.iterations,
        "residuals": [result.primal_residual, result.dual_residual],
        "manifest": manifest,
    })
    ts = np.linspace(-1.2 * cutoff, 1.2 * cutoff, 1001)
    _write_csv(f"{out}.curve.csv", ["t", "target", "compact"],
               [(f"{t:.10g}", f"{a:.10g}", f"{b:.10g}")
                for t, a, b in zip(ts, tk.at(ts), kernel.at(ts))])
    click.echo(f"l2_error={result.l2_error:.6g} iterations={result.iterations}")


@cli.command("fit")
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--basis", "basis_name", required=True,
              type=click.Choice(["fourier", "polynomial"]))
@click.option("--order", required=True, type=int)
@click.option("--cutoffs", required=True,
              help="Comma-separated cutoff candidates, e.g. '1,2,5'.")
@click.option("--learning-rate", default=0.05, show_default=True)
@click.option("--max-epochs", default=200, show_default=True)
@click.option("--tol", default=1e-5, show_default=True)
@click.option("--noise", default=None, type=float,
              help="Fixed sigma_n^2; omit to learn it.")
@click.option("--seed", default=0, show_default=True)
@click.option("--sparse", "sparse_mode", is_flag=True,
              help="Stochastic (Hutchinson) gradients; requires sorted x.")
@click.option("--probes", default=16, show_default=True)
@click.option("--out", required=True, type=click.Path())
def cmd_fit(data_path, basis_name, order, cutoffs, learning_rate, max_epochs,
            tol, noise, seed, sparse_mode, probes, out):
    """Maximum-likelihood kernel fit from a CSV of (x, y) samples."""
    try:
        basis = make_basis(basis_name, order)
    except OrderOutOfRange as exc:
        raise click.UsageError(str(exc))
    x, y = _read_xy_csv(data_path)
    if sparse_mode and np.any(np.diff(x) <= 0):
        raise click.UsageError(
            f"{data_path}: UnsortedInput: --sparse requires strictly ascending x"
        )
    cutoff_list = _parse_float_list(cutoffs, "--cutoffs")
    try:
        cfg = FitConfig(
            cutoffs=tuple(cutoff_list), learning_rate=learning_rate,
            max_epochs=max_epochs, tol=tol, probes=probes, noise=noise,
            seed=seed, stochastic=sparse_mode,
        )
        data = GPDataset(x, y)
    except (ValueError, CompactGPError) as exc:
        raise click.UsageError(str(exc))
    t0 = time.monotonic()
    report = fit_mle(data, basis, cfg)
    t_fit = time.monotonic() - t0
    kernel_path = f"{out}.kernel.json"
    manifest = _write_manifest(
        out, "fit",
        {"data": data_path, "basis": basis_name, "order": order,
         "cutoffs": cutoff_list, "learning_rate": learning_rate,
         "max_epochs": max_epochs, "tol": tol, "noise": noise,
         "sparse": sparse_mode, "probes": probes},
        seed, {"fit": t_fit}, [out, kernel_path],
    )
    save_kernel(kernel_path, report.kernel, noise=report.noise)
    _write_json(out, {
        "kernel": kernel_to_json(report.kernel, report.noise),
        "cutoff": report.cutoff,
        "nll_trace": report.nll_trace,
        "nll_per_point": report.nll_trace[-1] / data.n,
        "nll_convention": "negative log marginal likelihood; per-point value divides by n",
        "epochs": report.epochs,
        "all_cutoff_nll": report.all_cutoff_nll,
        "wall_time_s": report.wall_time,
        "cg_iterations": report.cg_iterations,
        "manifest": manifest,
    })
    click.echo(f"cutoff={report.cutoff} nll={report.nll_trace[-1]:.6f}")


@cli.command("predict")
@click.option("--kernel", "kernel_path", required=True, type=click.Path())
@click.option("--train", "train_path", required=True, type=click.Path())
@click.option("--query", "query_path", required=True, type=click.Path())
@click.option("--mode", default="dense", show_default=True,
              type=click.Choice(["dense", "sparse"]))
@click.option("--mean-only", is_flag=True)
@click.option("--out", required=True, type=click.Path())
def cmd_predict(kernel_path, train_path, query_path, mode, mean_only, out):
    """Posterior mean/variance at query points."""
    kernel, noise = load_kernel(kernel_path)
    x, y = _read_xy_csv(train_path)
    q = _read_x_csv(query_path)
    if mode == "sparse" and np.any(np.diff(x) <= 0):
        raise click.UsageError(
            f"{train_path}: UnsortedInput: sparse mode requires strictly ascending x"
        )
    t0 = time.monotonic()
    result = posterior(kernel, GPDataset(x, y), q, noise,
                       mode=mode, mean_only=mean_only)
    t_solve = time.monotonic() - t0
    if mode == "sparse" and not result.converged:
        raise CompactGPError("CG did not converge during prediction")
    var = result.variance if result.variance is not None else np.full(q.shape, np.nan)
    _write_csv(out, ["x", "mean", "variance"],
               [(f"{a:.10g}", f"{b:.10g}", f"{c:.10g}")
                for a, b, c in zip(q, result.mean, var)])
    _write_manifest(
        out, "predict",
        {"kernel": kernel_path, "train": train_path, "query": query_path,
         "mode": mode, "mean_only": mean_only},
        None, {"solve": t_solve}, [out],
        extra={"cg_iterations": result.cg_iterations},
    )
    click.echo(f"wrote {out}")


@cli.command("sample")
@click.option("--kernel", "kernel_path", required=True, type=click.Path())
@click.option("--n", required=True, type=int)
@click.option("--spacing", default="even", show_default=True,
              type=click.Choice(["even", "uniform"]))
@click.option("--range", "range_spec", default="0,10", show_default=True,
              help="Comma-separated low,high for x.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def cmd_sample(kernel_path, n, spacing, range_spec, seed, out):
    """Draw a GP sample and write a (x, y) CSV."""
    if n < 1:
        raise click.UsageError("--n must be >= 1")
    lohi = _parse_float_list(range_spec, "--range")
    if len(lohi) != 2 or not lohi[1] > lohi[0]:
        raise click.UsageError("--range must be 'low,high' with high > low")
    kernel, noise = load_kernel(kernel_path)
    lo, hi = lohi
    if spacing == "even":
        x = np.linspace(lo, hi, n)
    else:
        rng = np.random.default_rng(seed + 1)
        x = np.sort(rng.uniform(lo, hi, n))
    t0 = time.monotonic()
    y = sample_gp(kernel, x, noise, seed=seed)
    t_sample = time.monotonic() - t0
    _write_csv(out, ["x", "y"],
               [(f"{a:.10g}", f"{b:.10g}") for a, b in zip(x, y)])
    _write_manifest(
        out, "sample",
        {"kernel": kernel_path, "n": n, "spacing": spacing, "range": lohi},
        seed, {"sample": t_sample}, [out],
    )
    click.echo(f"wrote {out}")


def _bench_dense(K, Kq, y):
    cho = scipy.linalg.cho_factor(K, lower=True)
    alpha = scipy.linalg.cho_solve(cho, y)
    return Kq @ alpha, 0


def _bench_sparse(kernel, x, pattern, noise, y, cg_tol):
    matrix = assemble(kernel, x, pattern, noise=noise, check_pattern=False)
    alpha, stats = conjugate_gradient(matrix, y, tol=cg_tol, precond="jacobi")
    mean = matrix.apply(alpha) - noise * alpha  # noiseless cross-covariance at x
    return mean, stats.iterations


@cli.command("bench")
@click.option("--kernel", "kernel_path", required=True, type=click.Path())
@click.option("--sizes", required=True, help="Comma-separated ascending N values.")
@click.option("--reps", default=3, show_default=True)
@click.option("--spacing", default=0.1, show_default=True,
              help="Even spacing between points (fixed neighbor count).")
@click.option("--cg-tol", default=1e-10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def cmd_bench(kernel_path, sizes, reps, spacing, cg_tol, seed, out):
    """Time dense vs sparse posterior-mean inference across problem sizes."""
    n_list = [int(v) for v in _parse_float_list(sizes, "--sizes")]
    if n_list != sorted(n_list):
        raise click.UsageError("--sizes must be ascending")
    kernel, noise = load_kernel(kernel_path)
    if noise <= 0:
        noise = 1e-6 * kernel.k0()
    rows = []
    raw = {}
    skipped_dense = []
    for n in n_list:
        x = np.arange(n) * spacing
        rng = np.random.default_rng(seed + n)
        y = rng.standard_normal(n)
        pattern = build_pattern(kernel, x)  # excluded from timings
        nnz = pattern.nnz

        times = []
        iters = 0
        for rep in range(reps + 1):  # first rep is a discarded warm-up
            t0 = time.monotonic()
            _, iters = _bench_sparse(kernel, x, pattern, noise, y, cg_tol)
            dt = time.monotonic() - t0
            if rep > 0:
                times.append(dt)
        raw[f"sparse_{n}"] = times
        rows.append((n, "sparse", f"{min(times):.6g}", nnz, iters,
                     f"{nnz * iters / n:.6g}"))

        if n > DENSE_LIMIT:
            skipped_dense.append(n)
            continue
        K = dense_gram(kernel, x) + noise * np.eye(n)  # formation excluded
        Kq = K - noise * np.eye(n)
        times = []
        for rep in range(reps + 1):
            t0 = time.monotonic()
            _bench_dense(K, Kq, y)
            dt = time.monotonic() - t0
            if rep > 0:
                times.append(dt)
        raw[f"dense_{n}"] = times
        rows.append((n, "dense", f"{min(times):.6g}", n * n, 0, ""))
    _write_csv(out, ["N", "mode", "seconds", "nnz", "cg_iters", "predicted"], rows)
    _write_manifest(
        out, "bench",
        {"kernel": kernel_path, "sizes": n_list, "reps": reps,
         "spacing": spacing, "cg_tol": cg_tol},
        seed, {}, [out],
        extra={"raw_times": raw, "dense_skipped": skipped_dense,
               "dense_limit": DENSE_LIMIT},
    )
    click.echo(f"wrote {out}")


@cli.command("rank")
@click.option("--basis", "basis_name", required=True,
              type=click.Choice(["fourier", "polynomial"]))
@click.option("--order", required=True, type=int)
@click.option("--grid", default=512, show_default=True)
@click.option("--tol", default=1e-10, show_default=True)
def cmd_rank(basis_name, order, grid, tol):
    """Print the dimension of the kernel family for a basis."""
    try:
        basis = make_basis(basis_name, order)
        phi = compute_phi(basis)
        r = rank_dimension(phi, grid_size=grid, tol=tol)
    except (OrderOutOfRange, ValueError) as exc:
        raise click.UsageError(str(exc))
    click.echo(str(r))


def main(argv=None):
    threads = os.environ.get("COMPACT_GP_THREADS")
    if threads and threads != "0":
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"Error: {exc.format_message()}", err=True)
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except _SOLVER_ERRORS as exc:
        click.echo(f"Solver error: {exc}", err=True)
        return 2
    except CompactGPError as exc:
        click.echo(f"Error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
