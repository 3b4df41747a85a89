"""Command-line entry point: ``twophase <command> [options]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io as tio
from .dynamics import EpochRecord, aggregate_epoch, detect_transition
from .interactions import (
    DecompositionError,
    GammaSplit,
    SparsifierConfig,
    TauRule,
    check_stability_conditions,
    decompose,
    salient_flags,
    sparsify,
    top_interactions,
    verify_universal_matching,
)
from .lattice import mobius_transform, zeta_transform
from .metrics import expected_order_strength, fusiform_monte_carlo, order_profile, similarity_by_order
from .pipeline import GAMMA_MODES, ToyExperimentConfig, run_noisy_label_experiment, run_toy_experiment
from . import fixtures

OUT_ENV = "TWOPHASE_OUT"
DEFAULT_OUT = "twophase-out"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_MANIFEST = 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _out_dir(args):
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tau(text):
    try:
        return TauRule.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _read_tables(paths):
    tables, errors = [], []
    for p in paths:
        try:
            tables.append((p, tio.read_table(p)))
        except FileNotFoundError:
            errors.append(f"{p}: no such file")
        except (tio.FormatError, DecompositionError, OSError) as exc:
            errors.append(str(exc) if isinstance(exc, tio.FormatError) else f"{p}: {exc}")
    return tables, errors


def _read_spectra(paths):
    spectra = []
    for p in paths:
        try:
            spectra.append(tio.read_spectrum(p))
        except FileNotFoundError:
            raise CliError(f"{p}: no such file", EXIT_INPUT) from None
        except tio.FormatError as exc:
            raise CliError(str(exc), EXIT_INPUT) from None
    return spectra


def _spectrum(table, args):
    if args.gamma == "sparsify":
        return sparsify(table, SparsifierConfig(rho=args.rho, iters=args.iters, seed=args.seed, keep_trace=False))
    return decompose(table, GammaSplit.zeros(table.n, args.rho))


# --- commands ------------------------------------------------------------------


def cmd_extract(args):
    out = _out_dir(args)
    tables, errors = _read_tables(args.tables)

    def work(item):
        path, table = item
        spec = _spectrum(table, args)
        match = verify_universal_matching(spec, table)
        f_and, f_or = salient_flags(spec, args.tau)
        target = out / (Path(path).stem + ".spectrum")
        tio.write_spectrum(target, spec)
        return {
            "table": str(path),
            "spectrum": str(target),
            "salient_count": int(f_and.sum() + f_or.sum()),
            "matching_error": match.max_error,
            "objective": spec.l1(),
            "top": [{"branch": b, "set": list(s), "effect": v} for b, s, v in top_interactions(spec, 5)],
        }

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        summary = list(pool.map(work, tables))
    tio.atomic_write(out / "extract_summary.json", json.dumps({"spectra": summary, "errors": errors}, indent=1) + "\n")
    for row in summary:
        top = row["top"][0] if row["top"] else None
        lead = f"{top['branch']} {top['set']} {top['effect']:.4g}" if top else "-"
        print(f"{row['table']}: salient={row['salient_count']} match_err={row['matching_error']:.3g} top={lead}")
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_INPUT if errors else EXIT_OK


def cmd_orders(args):
    out = _out_dir(args)
    spectra = _read_spectra(args.spectra)
    profile = aggregate_epoch([order_profile(s, args.tau) for s in spectra])
    path = tio.atomic_write(out / "orders.csv", tio.orders_csv(profile))
    print(f"mean salient order {profile.mean_salient_order:.4f} over {len(spectra)} spectra -> {path}")
    return EXIT_OK


def _categories(spectra, paths):
    cats = []
    for s, p in zip(spectra, paths):
        c = s.source_meta.get("category")
        if c is None:
            raise CliError(f"{p}: spectrum carries no 'category' in its metadata", EXIT_INPUT)
        cats.append(int(c))
    return cats


def cmd_jaccard(args):
    out = _out_dir(args)
    train = _read_spectra(args.train)
    test = _read_spectra(args.test)
    curve = similarity_by_order(train, _categories(train, args.train), test, _categories(test, args.test), branch=args.branch)
    path = tio.atomic_write(out / "similarity.csv", tio.similarity_csv(curve))
    print(" ".join(f"k{k}={v:.3f}" for k, v in sorted(curve.items())), f"-> {path}")
    return EXIT_OK


def _records_from_manifest(path, args):
    if not Path(path).exists():
        raise CliError(f"{path}: manifest not found", EXIT_INPUT)
    try:
        manifest = tio.read_manifest(path)
    except tio.ManifestError as exc:
        raise CliError(str(exc), EXIT_MANIFEST) from None
    except tio.FormatError as exc:
        raise CliError(f"{path}: {exc}", EXIT_MANIFEST) from None
    base = Path(path).parent
    records = []
    for epoch in manifest.epochs:
        tables = [tio.read_table(base / e.file) for e in manifest.tables_at(epoch)]
        profiles = [order_profile(_spectrum(t, args), args.tau) for t in tables]
        tr, te = manifest.losses[epoch]
        records.append(EpochRecord(epoch, aggregate_epoch(profiles), tr, te))
    return records


def _write_phase(out, records, report, fus=None):
    doc = report.as_dict()
    if fus is not None:
        doc["initial_fusiform"] = {"passed": fus.passed, "peak_order": fus.peak_order}
    tio.atomic_write(out / "phase.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
    tio.atomic_write(out / "epochs.csv", tio.epochs_csv(records))


def cmd_dynamics(args):
    out = _out_dir(args)
    if args.fixture:
        records = fixtures.v_shaped_series()
    elif args.manifest:
        records = _records_from_manifest(args.manifest, args)
    else:
        raise CliError("dynamics needs a manifest path or --fixture", EXIT_USAGE)
    if len(records) < 3:
        raise CliError("dynamics needs at least three epochs", EXIT_INPUT)
    report = detect_transition(records, args.window)
    _write_phase(out, records, report)
    print(json.dumps(report.as_dict()))
    return EXIT_OK


def _verify_checks(args):
    """Yield (name, passed, detail) for every bundled self-check."""
    rng = np.random.default_rng(args.seed)
    cfg = SparsifierConfig(iters=args.iters, seed=args.seed, keep_trace=False)

    worst = 0.0
    for t in fixtures.random_tables(20, 8, args.seed):
        for spec in (decompose(t), sparsify(t, cfg)):
            r = verify_universal_matching(spec, t)
            worst = max(worst, r.max_error / r.scale)
    yield "universal matching", worst < 1e-9, f"max relative error {worst:.2e}"

    worst = 0.0
    for n in range(1, 9):
        f = rng.normal(size=1 << n)
        naive = np.zeros_like(f)
        for s in range(1 << n):
            t = s
            while True:
                naive[s] += (-1) ** (bin(s).count("1") - bin(t).count("1")) * f[t]
                if t == 0:
                    break
                t = (t - 1) & s
        worst = max(worst, float(np.abs(mobius_transform(f) - naive).max()))
    f = rng.normal(size=1 << 12)
    trip = float(np.abs(zeta_transform(mobius_transform(f)) - f).max())
    yield "transform round trip", worst < 1e-10 and trip < 1e-10, f"naive diff {worst:.2e}, round trip {trip:.2e}"

    lin = check_stability_conditions(fixtures.linear_positive_table(), 1)
    p = lin.polynomial_lower_bound.detail["p"]
    ok = lin.monotone_mean_output.passed and p is not None and 0.9 <= p <= 1.1
    yield "stability conditions (linear table)", bool(ok), f"p = {p}"
    dip = check_stability_conditions(fixtures.order_dip_table(), 1)
    w = dip.monotone_mean_output.detail["witness"]
    yield "stability conditions (dip table)", dip.monotone_mean_output.passed is False and w == (2, 3), f"witness {w}"

    for name, table, branch, floor, target in (
        ("planted AND", fixtures.planted_and_table(), "and", 5.0, (0, 1, 2)),
        ("planted OR", fixtures.planted_or_table(), "or", 3.0, (0, 1)),
    ):
        spec = sparsify(table, SparsifierConfig(iters=5000, keep_trace=False))
        b, s, _ = top_interactions(spec, 1)[0]
        rel = spec.l1() / floor - 1
        yield f"sparsifier {name}", rel <= 0.05 and b == branch and tuple(s) == target, f"objective {spec.l1():.5f}, top {b} {s}"

    n = 10
    mc = fusiform_monte_carlo(n, 1.0, args.trials, args.seed)
    exp = np.array([expected_order_strength(n, k, 1.0)[0] for k in range(1, n + 1)])
    rel = float(np.max(np.abs(mc.mean_pos - exp) / exp))
    peak = int(np.argmax(mc.mean_pos)) + 1
    yield "Gaussian order strengths", rel < 0.02 and peak == n // 2, f"max relative error {rel:.4f}, peak {peak}"


def cmd_verify(args):
    out = _out_dir(args)
    results = []
    for name, passed, detail in _verify_checks(args):
        results.append({"check": name, "passed": bool(passed), "detail": detail})
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    tables, errors = _read_tables(args.tables or [])
    for path, table in tables:
        r = verify_universal_matching(_spectrum(table, args), table)
        ok = r.passed()
        results.append({"check": f"matching {path}", "passed": ok, "detail": f"{r.max_error:.2e}"})
        print(f"{'PASS' if ok else 'FAIL'}  matching {path}: max error {r.max_error:.2e}")
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    tio.atomic_write(out / "verify.json", json.dumps({"checks": results, "errors": errors}, indent=1) + "\n")
    if errors:
        return EXIT_INPUT
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_CHECK_FAILED


def _toy_config(args):
    return ToyExperimentConfig(
        seed=args.seed,
        epochs=args.epochs,
        samples=args.samples,
        gamma=args.gamma,
        rho=args.rho,
        iters=args.iters,
        tau=args.tau,
        score=args.score,
        smooth_window=args.window,
        checkpoint_every=args.checkpoint_every or max(1, args.epochs // 32),
    )


def cmd_train_toy(args):
    out = _out_dir(args)
    cfg = _toy_config(args)
    table_dir = out / "tables"
    entries = []

    def keep(epoch, tables):
        for t in tables:
            name = f"e{epoch:04d}_s{t.meta['sample_id']:05d}.table"
            tio.write_table(table_dir / name, t)
            entries.append(tio.ManifestEntry(epoch, t.meta["sample_id"], f"tables/{name}"))

    run = run_toy_experiment(cfg, on_tables=keep)
    losses = {r.epoch: (r.train_loss, r.test_loss) for r in run.records}
    meta = {"seed": cfg.seed, "gamma": cfg.gamma, "score": cfg.score, "epochs": cfg.epochs}
    tio.write_manifest(out / "manifest.json", tio.SeriesManifest(tuple(entries), losses, meta))
    tio.write_checkpoint(out / "final.ckpt", run.final_network, {"epoch": cfg.epochs})
    _write_phase(out, run.records, run.report, run.fusiform)
    tio.atomic_write(out / "similarity.csv", tio.similarity_csv(run.similarity))
    if args.noisy_count:
        noisy = run_noisy_label_experiment(cfg, args.noisy_count)
        tio.atomic_write(out / "noisy_orders.csv", noisy_csv(noisy))
        print(f"noisy-label: relabeled {noisy.relabeled_mean:.3f} vs clean {noisy.clean_mean:.3f}")
    print(json.dumps(run.report.as_dict()), f"fusiform={run.fusiform.passed} peak={run.fusiform.peak_order}")
    return EXIT_OK


def noisy_csv(noisy):
    rows = [(int(i), "relabeled", o) for i, o in zip(noisy.relabeled_idx, noisy.relabeled_orders)]
    rows += [(int(i), "clean", o) for i, o in zip(noisy.clean_idx, noisy.clean_orders)]
    return tio.csv_text("noisy", ("sample_id", "group", "mean_order"), rows)


def cmd_emit_plots(args):
    """Merge per-run CSVs into one long-format file per figure panel."""
    out = _out_dir(args)
    runs = [Path(r) for r in args.runs]
    for r in runs:
        if not (r / "epochs.csv").exists():
            raise CliError(f"{r}: not a run directory (epochs.csv missing)", EXIT_INPUT)
    strengths, losses, sims, noisy = [], [], [], []
    for r in runs:
        for row in tio.read_csv(r / "epochs.csv"):
            losses.append((r.name, row["epoch"], row["train_loss"], row["test_loss"], row["gap"], row["mean_order"]))
            for key in row:
                if key.startswith("strength_k"):
                    strengths.append((r.name, row["epoch"], key[len("strength_k"):], row[key]))
        if (r / "similarity.csv").exists():
            sims += [(r.name, row["order"], row["similarity"]) for row in tio.read_csv(r / "similarity.csv")]
        if (r / "noisy_orders.csv").exists():
            noisy += [(r.name, row["sample_id"], row["group"], row["mean_order"]) for row in tio.read_csv(r / "noisy_orders.csv")]
    written = [
        tio.atomic_write(out / "plot_loss_gap.csv", tio.csv_text("plot_loss_gap", ("run", "epoch", "train_loss", "test_loss", "gap", "mean_order"), losses)),
        tio.atomic_write(out / "plot_order_strength.csv", tio.csv_text("plot_order_strength", ("run", "epoch", "order", "strength"), strengths)),
        tio.atomic_write(out / "plot_similarity.csv", tio.csv_text("plot_similarity", ("run", "order", "similarity"), sims)),
    ]
    if noisy:
        written.append(tio.atomic_write(out / "plot_noisy_orders.csv", tio.csv_text("plot_noisy_orders", ("run", "sample_id", "group", "mean_order"), noisy)))
    for w in written:
        print(w)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------


def _common(p, gamma_default):
    p.add_argument("--gamma", choices=GAMMA_MODES, default=gamma_default, help="AND/OR split: even (zero) or L1-sparsified")
    p.add_argument("--tau", type=_tau, default=TauRule(), help="saliency threshold, rel:<fraction> or abs:<value>")
    p.add_argument("--rho", type=float, default=0.5, help="box bound on the split as a fraction of the output span")
    p.add_argument("--iters", type=int, default=5000, help="sparsifier iterations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")


def build_parser():
    parser = argparse.ArgumentParser(prog="twophase", description="AND-OR interaction analysis of model outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="table files -> spectrum files and a summary")
    p.add_argument("tables", nargs="+")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    _common(p, "sparsify")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("orders", help="spectrum files -> mean per-order strength CSV")
    p.add_argument("spectra", nargs="+")
    _common(p, "sparsify")
    p.set_defaults(func=cmd_orders)

    p = sub.add_parser("jaccard", help="train/test spectra -> per-order similarity CSV")
    p.add_argument("--train", nargs="+", required=True)
    p.add_argument("--test", nargs="+", required=True)
    p.add_argument("--branch", choices=("and", "or", "sum", "both"), default="both")
    _common(p, "sparsify")
    p.set_defaults(func=cmd_jaccard)

    p = sub.add_parser("dynamics", help="series manifest -> phase report and epoch CSV")
    p.add_argument("manifest", nargs="?")
    p.add_argument("--fixture", action="store_true", help="use the bundled V-shaped series")
    p.add_argument("--window", type=int, default=3)
    _common(p, "zero")
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("verify", help="run the bundled self-checks (and matching on given tables)")
    p.add_argument("tables", nargs="*")
    p.add_argument("--trials", type=int, default=100_000)
    _common(p, "sparsify")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train-toy", help="train the toy model and write tables, manifest and reports")
    p.add_argument("--epochs", type=int, default=256)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--score", choices=("logit", "logodds"), default="logit")
    p.add_argument("--checkpoint-every", type=int, help="epochs between checkpoints (default epochs/32)")
    p.add_argument("--noisy-count", type=int, default=0, help="also run the relabeling experiment with this many samples per class")
    _common(p, "zero")
    p.set_defaults(func=cmd_train_toy, iters=1000)

    p = sub.add_parser("emit-plots", help="merge run directories into plot-ready CSVs")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_emit_plots)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        code = args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"[{args.command} done in {time.perf_counter() - start:.1f}s]", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
