"""Command-line interface.

Subcommands: gen | features | train | evaluate | sweep | report.
Options may come from a flat key-value config file (--config); explicit
command-line flags override file values. All paths are local; exit status
is 0 only when every requested artifact was written.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pomh import bundle, features, pipeline, reference, synth
from pomh.pipeline import ConfigError
from pomh.traces import load_manifest

DIST_BY_NAME = {v: k for k, v in pipeline.DIST_REPORT_NAMES.items()}
DIST_BY_NAME.update({k: k for k in pipeline.DIST_REPORT_NAMES})


def _parse_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected KEY = VALUE, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _dist_kind(name: str) -> str:
    try:
        return DIST_BY_NAME[name]
    except KeyError:
        raise ConfigError(f"unknown distance {name!r}; use L1/L2/Linf or dist1/dist2/distinf")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _merge(args: argparse.Namespace, file_cfg: dict[str, str], key: str, default=None):
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in file_cfg:
        return file_cfg[key]
    return default


def _load_children(manifest: str):
    if not manifest:
        raise ConfigError("a manifest path is required (flag --manifest or config key manifest)")
    return load_manifest(manifest)


def _build_run_config(args, file_cfg) -> pipeline.RunConfig:
    w_grid = _merge(args, file_cfg, "w_max_grid")
    if isinstance(w_grid, str):
        w_grid = _int_list(w_grid)
    alphas = _merge(args, file_cfg, "alphas")
    if isinstance(alphas, str):
        alphas = _float_list(alphas)
    dists = _merge(args, file_cfg, "distances")
    if isinstance(dists, str):
        dists = tuple(_dist_kind(d) for d in dists.replace(",", " ").split())
    return pipeline.RunConfig(
        first_layer=_merge(args, file_cfg, "first_layer", "RF"),
        second_layer=_merge(args, file_cfg, "second_layer", "Counting"),
        w_max_grid=tuple(w_grid) if w_grid else pipeline.DEFAULT_W_MAX_GRID,
        dist_kinds=tuple(dists) if dists else ("L1", "L2", "Linf"),
        alpha_grid=tuple(alphas) if alphas else pipeline.DEFAULT_ALPHA_GRID,
        folds=int(_merge(args, file_cfg, "folds", 5)),
        seed=int(_merge(args, file_cfg, "seed", 0)),
        jobs=int(_merge(args, file_cfg, "jobs", 1)),
        selection=_merge(args, file_cfg, "selection", "aic"),
    )


def cmd_gen(args, file_cfg) -> int:
    out_dir = Path(_merge(args, file_cfg, "out", "cohort"))
    spec = synth.GeneratorSpec(
        noise_sd=float(_merge(args, file_cfg, "noise_sd", 0.04)),
        perturbation=synth.Perturbation(
            extra_stops=int(_merge(args, file_cfg, "extra_stops", 3)),
            tremor_amp=float(_merge(args, file_cfg, "tremor_amp", 0.12)),
        ),
        seed=int(_merge(args, file_cfg, "seed", 0)),
    )
    cohort = synth.gen_cohort(
        spec,
        n_children=int(_merge(args, file_cfg, "children", 100)),
        dys_fraction=float(_merge(args, file_cfg, "dys_fraction", 0.12)),
        missing_rate_td=float(_merge(args, file_cfg, "missing_td", 0.0)),
        missing_rate_dys=float(_merge(args, file_cfg, "missing_dys", 0.0)),
    )
    manifest = synth.write_cohort(cohort, out_dir)
    n_pos = sum(c.dysgraphia for c in cohort.children)
    print(f"wrote {len(cohort.children)} children ({n_pos} dysgraphia) to {manifest}")
    return 0


def cmd_features(args, file_cfg) -> int:
    children = _load_children(_merge(args, file_cfg, "manifest"))
    w_max = int(_merge(args, file_cfg, "w_max", 35))
    dist = _dist_kind(_merge(args, file_cfg, "dist", "Linf"))
    out = Path(_merge(args, file_cfg, "out", "features.csv"))
    feats = pipeline.precompute_features(children, w_max)
    all_ids = frozenset(c.child_id for c in children)
    rows_all, table = pipeline.build_fold_rows(feats, all_ids, w_max)
    rows = [r for rows in rows_all[dist].values() for r in rows]
    rows.sort(key=lambda r: (r.child_id, r.symbol))
    out.write_text(features.feature_table_csv(rows))
    print(f"wrote {len(rows)} feature rows to {out}")
    ref_out = _merge(args, file_cfg, "reference_out")
    if ref_out:
        Path(ref_out).write_text(reference.reference_to_csv(table))
        print(f"wrote reference table to {ref_out}")
    return 0


def cmd_train(args, file_cfg) -> int:
    children = _load_children(_merge(args, file_cfg, "manifest"))
    alpha = _merge(args, file_cfg, "alpha", 0.89)
    second = _merge(args, file_cfg, "second_layer", "Counting")
    model = bundle.train_full(
        children,
        first_layer=_merge(args, file_cfg, "first_layer", "RF"),
        second_layer=second,
        w_max=int(_merge(args, file_cfg, "w_max", 35)),
        dist_kind=_dist_kind(_merge(args, file_cfg, "dist", "Linf")),
        alpha=float(alpha) if second == "Counting" else None,
        seed=int(_merge(args, file_cfg, "seed", 0)),
    )
    out = Path(_merge(args, file_cfg, "out", "model.npz"))
    bundle.save_bundle(out, model)
    print(f"wrote {model.first_layer}->{model.second_layer} bundle to {out}")
    return 0


def cmd_evaluate(args, file_cfg) -> int:
    children = _load_children(_merge(args, file_cfg, "manifest"))
    w_max = int(_merge(args, file_cfg, "w_max", 35))
    dist = _dist_kind(_merge(args, file_cfg, "dist", "Linf"))
    second = _merge(args, file_cfg, "second_layer", "Counting")
    alpha = float(_merge(args, file_cfg, "alpha", 0.89)) if second == "Counting" else None
    config = pipeline.RunConfig(
        first_layer=_merge(args, file_cfg, "first_layer", "RF"),
        second_layer=second,
        w_max_grid=(w_max,),
        dist_kinds=(dist,),
        alpha_grid=(alpha,) if alpha is not None else pipeline.DEFAULT_ALPHA_GRID,
        folds=int(_merge(args, file_cfg, "folds", 5)),
        seed=int(_merge(args, file_cfg, "seed", 0)),
        jobs=int(_merge(args, file_cfg, "jobs", 1)),
        selection=_merge(args, file_cfg, "selection", "aic"),
    )
    report = pipeline.run_sweep(children, config)
    out_dir = Path(_merge(args, file_cfg, "out", "evaluation"))
    out_dir.mkdir(parents=True, exist_ok=True)
    cell = report.cells[0]
    ops = []
    for r in report.fold_results:
        fpr, tpr, cutoff, acc = pipeline.operating_point(r.roc_test)
        ops.append({"fold": r.fold, "fpr": round(fpr, 6), "tpr": round(tpr, 6),
                    "cutoff": round(cutoff, 6), "accuracy": round(acc, 6)})
    payload = pipeline.report_json(report)
    payload["operating_points_test"] = ops
    (out_dir / "evaluation.json").write_text(json.dumps(payload, indent=1, sort_keys=True))
    (out_dir / "roc_test.csv").write_text(
        pipeline.roc_points_csv(report, w_max, dist, alpha, "test")
    )
    (out_dir / "roc_train.csv").write_text(
        pipeline.roc_points_csv(report, w_max, dist, alpha, "train")
    )
    print(f"test AUC (mean of {config.folds} folds): {cell.auc_test:.3f}")
    print(f"wrote evaluation.json, roc_test.csv, roc_train.csv to {out_dir}")
    return 0


def cmd_sweep(args, file_cfg) -> int:
    children = _load_children(_merge(args, file_cfg, "manifest"))
    config = _build_run_config(args, file_cfg)
    report = pipeline.run_sweep(children, config)
    out_dir = Path(_merge(args, file_cfg, "out", "sweep"))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.csv").write_text(pipeline.report_csv(report))
    (out_dir / "report.json").write_text(
        json.dumps(pipeline.report_json(report), indent=1, sort_keys=True)
    )
    for kind, cell in report.best_cells().items():
        name = pipeline.DIST_REPORT_NAMES[kind]
        (out_dir / f"roc_best_{name}.csv").write_text(
            pipeline.roc_points_csv(report, cell.w_max, kind, cell.alpha, "test")
        )
    (out_dir / "best.txt").write_text(pipeline.best_table(report))
    print(pipeline.best_table(report), end="")
    print(f"wrote report.csv, report.json, best.txt, roc_best_*.csv to {out_dir}")
    return 0


def cmd_report(args, file_cfg) -> int:
    path = _merge(args, file_cfg, "report", "sweep/report.json")
    payload = json.loads(Path(path).read_text())
    with_alpha = payload["second_layer"] == "Counting"
    print(f"{payload['first_layer']}->{payload['second_layer']} "
          f"(seed {payload['seed']}, {payload['folds']} folds)")
    header = "ty_dist w_max alpha auc_train auc_test" if with_alpha else "ty_dist w_max auc_train auc_test"
    print(header)
    for name in ("dist1", "dist2", "distinf"):
        cell = payload["best"].get(name)
        if cell is None:
            continue
        if with_alpha:
            print(f"{name} {cell['w_max']} {cell['alpha']:.3f} "
                  f"{cell['auc_train']:.3f} {cell['auc_test']:.3f}")
        else:
            print(f"{name} {cell['w_max']} {cell['auc_train']:.3f} {cell['auc_test']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pomh", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="flat KEY = VALUE config file; flags override")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output file or directory")

    g = sub.add_parser("gen", help="generate a synthetic cohort")
    add_common(g)
    g.add_argument("--children", type=int)
    g.add_argument("--dys-fraction", dest="dys_fraction", type=float)
    g.add_argument("--noise-sd", dest="noise_sd", type=float)
    g.add_argument("--extra-stops", dest="extra_stops", type=int)
    g.add_argument("--tremor-amp", dest="tremor_amp", type=float)
    g.add_argument("--missing-td", dest="missing_td", type=float)
    g.add_argument("--missing-dys", dest="missing_dys", type=float)

    f = sub.add_parser("features", help="write the per-(child, symbol) feature table")
    add_common(f)
    f.add_argument("--manifest")
    f.add_argument("--w-max", dest="w_max", type=int)
    f.add_argument("--dist")
    f.add_argument("--reference-out", dest="reference_out")

    t = sub.add_parser("train", help="fit a two-layer model on the full cohort")
    add_common(t)
    t.add_argument("--manifest")
    t.add_argument("--first-layer", dest="first_layer")
    t.add_argument("--second-layer", dest="second_layer")
    t.add_argument("--w-max", dest="w_max", type=int)
    t.add_argument("--dist")
    t.add_argument("--alpha", type=float)

    e = sub.add_parser("evaluate", help="cross-validate one (w_max, dist, alpha) cell")
    add_common(e)
    e.add_argument("--manifest")
    e.add_argument("--first-layer", dest="first_layer")
    e.add_argument("--second-layer", dest="second_layer")
    e.add_argument("--w-max", dest="w_max", type=int)
    e.add_argument("--dist")
    e.add_argument("--alpha", type=float)
    e.add_argument("--folds", type=int)
    e.add_argument("--jobs", type=int)
    e.add_argument("--selection")

    s = sub.add_parser("sweep", help="full (w_max, distance, alpha) grid evaluation")
    add_common(s)
    s.add_argument("--manifest")
    s.add_argument("--first-layer", dest="first_layer")
    s.add_argument("--second-layer", dest="second_layer")
    s.add_argument("--w-max-grid", dest="w_max_grid")
    s.add_argument("--distances")
    s.add_argument("--alphas")
    s.add_argument("--folds", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--selection")

    r = sub.add_parser("report", help="render best-parameter tables from a sweep report")
    add_common(r)
    r.add_argument("--report", help="path to report.json")
    return p


COMMANDS = {
    "gen": cmd_gen,
    "features": cmd_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    file_cfg = {}
    try:
        if args.config:
            file_cfg = _parse_config_file(args.config)
        return COMMANDS[args.command](args, file_cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
