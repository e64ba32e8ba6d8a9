"""Batch command-line interface.

Subcommands: simulate, fit, summarize, predict, crossval, export-maps,
selftest.  Every command echoes its resolved configuration and seed, is
deterministic given its flags, and exits nonzero on any failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as kio
from .errors import KronregError
from .gibbs import predict, run_chain
from .model import ResponseSpec
from .rng import RngStream
from .simulate import SimConfig, auc, blob_signal, evaluate, generate_tensors, kfold_split, rmse
from .tensor import BlockShape, unfold

__all__ = ["main"]


def _echo(args: argparse.Namespace, extra: dict | None = None) -> None:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    if extra:
        resolved.update(extra)
    print(f"[{args.command}] resolved config: {json.dumps(resolved, default=str)}")


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("dims must be D1,D2,D3")
    return tuple(parts)


def cmd_simulate(args: argparse.Namespace) -> int:
    _echo(args)
    dims = args.dims
    if args.signal == "blobs":
        signal = blob_signal(dims)
    else:
        img = kio.read_pgm(args.signal)
        if img.shape != dims[:2] or dims[2] != 1:
            raise KronregError(
                f"PGM signal is {img.shape}, flags ask for dims {dims}; "
                "pass --dims H,W,1 matching the image"
            )
        signal = img[:, :, None]
    config = SimConfig(
        n=args.n,
        dims=dims,
        signal=args.signal,
        noise_sd=args.noise_sd,
        signal_fraction=args.signal_fraction,
        seed=args.seed,
    )
    xs_raw, y, _ = generate_tensors(config, signal)
    specs = [
        ResponseSpec("signal_trace", "continuous"),
        ResponseSpec("signal_class", "binary"),
    ]
    out = Path(args.out)
    manifest = kio.write_manifest(out, xs_raw, y, specs, np.ones((1, args.n)))
    kio.write_tensor(out / "c_true.bten", signal)
    print(f"[simulate] wrote {manifest} (n={args.n}, dims={dims})")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    config = kio.FitConfig.from_json(args.config)
    _echo(args, {"fit_config": vars(config) | {"tpbn": config.tpbn}})
    data = kio.load_dataset(args.data, config)
    hyper = config.hyperparams(q=data.q, n=data.n)

    def progress(sweep: int, monitor: float) -> None:
        print(f"[fit] iteration {sweep}/{hyper.iterations}  log-post ~ {monitor:.2f}")

    output = run_chain(data, hyper, progress=progress)
    kio.save_chain(output, args.out)
    print(
        f"[fit] kept {output.kept} draws; clamp events: "
        f"{output.diagnostics['clamp_events']}; chain saved to {args.out}"
    )
    return 0


def cmd_summarize(args: argparse.Namespace) -> int:
    _echo(args)
    output = kio.load_chain(args.chain)
    print(f"kept draws: {output.kept}; dims {output.dims}")
    for k, name in enumerate(output.response_names):
        c = output.c_median[k]
        frac = float(np.mean(np.abs(c) > 1e-3 * max(np.abs(c).max(), 1e-300)))
        print(
            f"response {name!r} ({output.response_kinds[k]}): "
            f"|C|_F={np.linalg.norm(c):.4f}, active fraction={frac:.3f}"
        )
        gm = output.gamma_median[:, k]
        lo = output.gamma_q025[:, k]
        hi = output.gamma_q975[:, k]
        for j in range(gm.size):
            print(f"  gamma[{j}] = {gm[j]:+.4f}  [{lo[j]:+.4f}, {hi[j]:+.4f}]")
    print("sigma median:")
    for row in output.sigma_median:
        print("  " + "  ".join(f"{v:+.4f}" for v in row))
    print(f"diagnostics: {json.dumps(output.diagnostics)}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    _echo(args)
    output = kio.load_chain(args.chain)
    config = kio.FitConfig(
        p=output.block_shape.p, d=output.block_shape.d, standardize=False
    )
    data = kio.load_dataset(args.data, config)
    preds = predict(output, data)
    header = [f"pred_{name}" for name in output.response_names]
    with open(args.out, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in preds:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    print(f"[predict] wrote {preds.shape[0]} rows to {args.out}")
    return 0


def cmd_crossval(args: argparse.Namespace) -> int:
    config = kio.FitConfig.from_json(args.config)
    _echo(args)
    data = kio.load_dataset(args.data, config)
    folds = kfold_split(data.n, args.folds, args.seed)
    all_idx = np.arange(data.n)
    reports = []
    for fold_i, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(all_idx, test_idx)
        train, test = data.subset(train_idx), data.subset(test_idx)
        hyper = config.hyperparams(q=train.q, n=train.n)
        output = run_chain(train, hyper)
        preds = predict(output, test)
        report = evaluate(preds, test, fold=fold_i)
        reports.append(report)
        parts = "  ".join(report.lines())
        print(f"fold {fold_i}: {parts}")
    lines = []
    for metric_name, getter in (("mse", "rmse"), ("auc", "auc")):
        names = getattr(reports[0], getter).keys()
        for name in names:
            vals = np.array([getattr(r, getter)[name] for r in reports])
            if metric_name == "mse":
                vals = vals**2
            lines.append(
                f"{metric_name}[{name}] = {vals.mean():.4f} ± {vals.std(ddof=1):.4f}"
            )
    for line in lines:
        print(line)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            json.dump(
                {
                    "folds": [
                        {"fold": r.fold, "rmse": r.rmse, "auc": r.auc}
                        for r in reports
                    ],
                    "summary": lines,
                },
                fh,
                indent=2,
            )
            fh.write("\n")
        print(f"[crossval] report written to {args.out}")
    return 0


def cmd_export_maps(args: argparse.Namespace) -> int:
    _echo(args)
    output = kio.load_chain(args.chain)
    from .tensor import refold

    for k, name in enumerate(output.response_names):
        tensor = refold(output.c_median[k], output.block_shape)
        path = Path(args.out_prefix + f"_{name}.pgm")
        kio.export_map(tensor, args.axis, args.slice_index, path)
        print(f"[export-maps] wrote {path}")
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    _echo(args)
    import math

    from .distributions import sample_pg_ones
    from .geweke import geweke_test

    rng = RngStream(args.seed)
    failures = []
    for c in (0.0, 0.5, 1.0, 2.5, 5.0):
        draws = sample_pg_ones(rng.substream(int(c * 10)), np.full(100_000, c))
        target = 0.25 if c == 0 else math.tanh(c / 2.0) / (2.0 * c)
        z = (draws.mean() - target) / (draws.std(ddof=1) / math.sqrt(draws.size))
        status = "ok" if abs(z) < 3 else "FAIL"
        if status == "FAIL":
            failures.append(f"pg moment c={c}")
        print(f"pg(1,{c}): mean={draws.mean():.6f} target={target:.6f} z={z:+.2f} {status}")

    report = geweke_test(n_samples=args.samples, seed=args.seed)
    print(report)
    if report.max_abs_z >= 4:
        failures.append("geweke correct-kernel")
    print(f"geweke correct kernel: max|z|={report.max_abs_z:.2f} "
          f"{'ok' if report.max_abs_z < 4 else 'FAIL'}")
    corrupted = geweke_test(
        n_samples=args.samples, seed=args.seed, corrupt_sigma_dof=True
    )
    detected = corrupted.max_abs_z > 6
    print(f"geweke corrupted control: max|z|={corrupted.max_abs_z:.2f} "
          f"{'detected ok' if detected else 'FAIL (not detected)'}")
    if not detected:
        failures.append("geweke corrupted control")
    if failures:
        print("selftest FAILED:", ", ".join(failures))
        return 1
    print("selftest passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kronreg",
        description=(
            "Bayesian Kronecker-factored tensor regression with mixed "
            "continuous/binary responses"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--dims", type=_parse_dims, default=(64, 64, 1))
    p.add_argument("--signal", default="blobs", help="'blobs' or a P5 PGM path")
    p.add_argument("--noise-sd", dest="noise_sd", type=float, default=0.2682)
    p.add_argument(
        "--signal-fraction", dest="signal_fraction", type=float, default=0.5
    )
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler on a dataset")
    p.add_argument("--data", required=True, help="manifest.json path")
    p.add_argument("--config", required=True, help="fit config JSON path")
    p.add_argument("--out", required=True, help="chain output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="print chain summaries")
    p.add_argument("--chain", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("predict", help="plug-in predictions from a saved chain")
    p.add_argument("--chain", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("crossval", help="k-fold cross-validated fit/evaluate")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("export-maps", help="export |C| slices as PGM images")
    p.add_argument("--chain", required=True)
    p.add_argument("--axis", type=int, default=2)
    p.add_argument("--slice-index", dest="slice_index", type=int, default=0)
    p.add_argument("--out-prefix", dest="out_prefix", required=True)
    p.set_defaults(func=cmd_export_maps)

    p = sub.add_parser(
        "selftest", help="sampler moment checks plus the Geweke harness"
    )
    p.add_argument("--samples", type=int, default=4000)
    p.add_argument("--seed", type=int, default=20240)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KronregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
