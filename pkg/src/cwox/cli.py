"""Command-line entry point.

Subcommands mirror the workflow: ``extract-docs`` and ``cluster-build`` form
the offline phase, ``explain`` produces heatmap bundles for one image,
``evaluate`` scores bundles with the deletion metrics and ``render`` writes
overlay PNGs. All outputs are written atomically; rerunning a command with
the same inputs and seed produces byte-identical files. Exit status is 0 only
when no per-item failure occurred; otherwise a JSON error summary goes to
stderr and the status is 1.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import io as cwio
from .contrast import (
    ContrastConfig,
    EXPLAIN_METHODS,
    explain_cwox2s,
    load_bundle,
    save_bundle,
)
from .cooccur import Document, build_tree, cooccurrence_stats, export_tree, import_tree
from .core import CwoxError, select_top_k
from .metrics import MetricConfig, compare_methods, enumerate_pairs, report_csv, report_json
from .oracle import ENV_MODEL_URL, RemoteOracle, load_synthetic
from .render import overlay
from .rise import RiseConfig, RiseExplainer


def _fail_items(errors: list[dict]) -> None:
    """Report per-item failures machine-readably and exit nonzero."""
    if errors:
        click.echo(json.dumps({"errors": errors}), err=True)
        sys.exit(1)


def _make_oracle(spec: str | None):
    if not spec:
        raise click.UsageError("--oracle is required (synthetic:<json> or remote:<url>)")
    if spec.startswith("synthetic:"):
        return load_synthetic(spec.split(":", 1)[1])
    if spec.startswith("remote:"):
        return RemoteOracle(spec.split(":", 1)[1] or None)
    if spec == "remote":
        return RemoteOracle()  # falls back to CWOX_MODEL_URL
    if spec.startswith(("http://", "https://")):
        return RemoteOracle(spec)
    raise click.UsageError(f"unrecognized oracle spec {spec!r}")


def _parse_baseline(text: str):
    if text in ("zero", "mean"):
        return text
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise click.UsageError(f"baseline must be 'zero', 'mean' or comma-separated floats, got {text!r}")


@click.group()
@click.option("--oracle", "oracle_spec", envvar="CWOX_ORACLE", default=None,
              help="Classifier to query: synthetic:<model.json> or remote:<url> "
                   f"(default url from ${ENV_MODEL_URL}).")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Master seed; all subsystem randomness derives from it.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="Output file or directory (meaning depends on the command).")
@click.pass_context
def main(ctx: click.Context, oracle_spec: str | None, seed: int, out_path: Path | None):
    """Whole-output contrastive explanations for image classifiers."""
    ctx.obj = {"oracle_spec": oracle_spec, "seed": seed, "out": out_path}


def _out(ctx: click.Context, default: str) -> Path:
    return ctx.obj["out"] if ctx.obj["out"] is not None else Path(default)


def _rise_options(fn):
    fn = click.option("--rise-masks", type=int, default=4000, show_default=True)(fn)
    fn = click.option("--rise-grid", type=int, default=7, show_default=True)(fn)
    fn = click.option("--rise-keep-prob", type=float, default=0.5, show_default=True)(fn)
    fn = click.option("--rise-seed", type=int, default=None,
                      help="Defaults to the global --seed.")(fn)
    fn = click.option("--rise-score", type=click.Choice(["prob", "logit"]),
                      default="prob", show_default=True)(fn)
    fn = click.option("--rise-baseline", default="mean", show_default=True,
                      help="Masked-pixel fill: zero, mean or r,g,b.")(fn)
    return fn


def _rise_config(ctx, masks, grid, keep_prob, seed, score, baseline) -> RiseConfig:
    return RiseConfig(
        num_masks=masks,
        cell_grid=grid,
        keep_prob=keep_prob,
        seed=ctx.obj["seed"] if seed is None else seed,
        target_kind=score,
        baseline=_parse_baseline(baseline),
    )


@main.command("extract-docs")
@click.argument("images_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--k-cap", type=int, default=5, show_default=True)
@click.option("--mass", type=float, default=0.95, show_default=True)
@click.pass_context
def cmd_extract_docs(ctx, images_dir: Path, k_cap: int, mass: float):
    """Classify every image in IMAGES_DIR and write one document per line."""
    oracle = _make_oracle(ctx.obj["oracle_spec"])
    paths = sorted(p for p in images_dir.iterdir()
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not paths:
        raise click.UsageError(f"no images found in {images_dir}")
    lines: list[str] = []
    errors: list[dict] = []
    for path in paths:
        try:
            image = cwio.load_image(path)
            top = select_top_k(oracle.classify(image), k_cap=k_cap, mass=mass)
            lines.append(Document(image=path.stem, labels=frozenset(top.labels)).to_json())
        except Exception as exc:
            errors.append({"image": path.stem, "message": f"{type(exc).__name__}: {exc}"})
    out = _out(ctx, "documents.jsonl")
    cwio.atomic_write_text(out, "".join(line + "\n" for line in lines))
    click.echo(f"wrote {len(lines)} documents to {out}")
    _fail_items(errors)


@main.command("cluster-build")
@click.argument("docs_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--theta", type=float, default=0.2, show_default=True,
              help="Similarity needed for labels to share a level-1 node.")
@click.pass_context
def cmd_cluster_build(ctx, docs_path: Path, theta: float):
    """Build the label co-occurrence tree from a documents JSONL file."""
    docs = [Document.from_json(line)
            for line in docs_path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not docs:
        raise click.UsageError(f"{docs_path} contains no documents")
    tree = build_tree(cooccurrence_stats(docs), theta=theta)
    out = _out(ctx, "tree.json")
    cwio.atomic_write_text(out, json.dumps(export_tree(tree), indent=2, sort_keys=True))
    click.echo(f"wrote tree with {len(tree.nodes)} nodes to {out}")


@main.command("explain")
@click.argument("image_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--method", type=click.Choice(sorted(EXPLAIN_METHODS)), default="cwox2s",
              show_default=True)
@click.option("--tree", "tree_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="Label tree JSON (required for cwox2s).")
@click.option("--explainer", "explainer_spec", default="rise", show_default=True,
              help="rise or remote:gradcam.")
@click.option("--k-cap", type=int, default=5, show_default=True)
@click.option("--mass", type=float, default=0.95, show_default=True)
@click.option("--epsilon", type=float, default=0.0, show_default=True,
              help="Relative support threshold for cluster maps.")
@click.option("--normalize-base/--no-normalize-base", default=True, show_default=True,
              help="Min-max normalize base maps before contrasting.")
@_rise_options
@click.pass_context
def cmd_explain(ctx, image_path: Path, method: str, tree_path: Path | None,
                explainer_spec: str, k_cap: int, mass: float, epsilon: float,
                normalize_base: bool, rise_masks, rise_grid, rise_keep_prob,
                rise_seed, rise_score, rise_baseline):
    """Explain the whole top-K output for IMAGE_PATH and save a bundle."""
    oracle = _make_oracle(ctx.obj["oracle_spec"])
    image = cwio.load_image(image_path)
    if explainer_spec == "rise":
        explainer = RiseExplainer(oracle, _rise_config(
            ctx, rise_masks, rise_grid, rise_keep_prob, rise_seed, rise_score, rise_baseline))
    elif explainer_spec.startswith("remote:"):
        if not isinstance(oracle, RemoteOracle):
            raise click.UsageError("a remote explainer requires a remote oracle")
        explainer = _RemoteExplainer(oracle, explainer_spec.split(":", 1)[1])
    else:
        raise click.UsageError(f"unrecognized explainer {explainer_spec!r}")

    cfg = ContrastConfig(k_cap=k_cap, mass=mass, epsilon=epsilon,
                         normalize_base=normalize_base)
    if method == "cwox2s":
        if tree_path is None:
            raise click.UsageError("--tree is required for the cwox2s method")
        tree = import_tree(tree_path.read_text(encoding="utf-8"))
        bundle = explain_cwox2s(oracle, explainer, tree, image, cfg, image_id=image_path.stem)
    else:
        bundle = EXPLAIN_METHODS[method](oracle, explainer, image, cfg,
                                         image_id=image_path.stem)
    out = _out(ctx, f"{image_path.stem}_{method}")
    save_bundle(bundle, out)
    partition = [list(c) for c in bundle.partition.clusters]
    click.echo(f"wrote {method} bundle ({len(bundle.class_maps)} class maps, "
               f"partition {partition}) to {out}")


class _RemoteExplainer:
    """Server-side base explainer reached over the oracle protocol."""

    def __init__(self, oracle: RemoteOracle, explainer: str, params: dict | None = None):
        self._oracle = oracle
        self._explainer = explainer
        self._params = params or {}

    @property
    def name(self) -> str:
        return f"remote:{self._explainer}"

    @property
    def config(self) -> dict:
        return {"explainer": self._explainer, "params": self._params}

    def saliency(self, x, targets):
        return self._oracle.saliency(x, targets, explainer=self._explainer,
                                     params=self._params)


@main.command("evaluate")
@click.argument("bundle_dirs", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--image", "image_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="The input image the bundles explain.")
@click.option("--delta", type=float, default=0.5, show_default=True)
@click.option("--tau-frac", type=float, default=0.05, show_default=True)
@click.option("--baseline", default="mean", show_default=True,
              help="Deletion fill: zero, mean or r,g,b.")
@click.option("--batch", type=int, default=1, show_default=True)
@click.option("--include-curves", is_flag=True, help="Embed raw score curves in the report.")
@click.option("--csv", "csv_path", type=click.Path(path_type=Path), default=None,
              help="Also write a CSV summary here.")
@click.pass_context
def cmd_evaluate(ctx, bundle_dirs: tuple[Path, ...], image_path: Path, delta: float,
                 tau_frac: float, baseline: str, batch: int, include_curves: bool,
                 csv_path: Path | None):
    """Score bundles with deletion metrics over same-cluster (target, foil) pairs.

    Pairs come from the first bundle's partition; every bundle must contain a
    map for each pair target.
    """
    oracle = _make_oracle(ctx.obj["oracle_spec"])
    image = cwio.load_image(image_path)
    bundles = [load_bundle(d) for d in bundle_dirs]
    names = [d.name for d in bundle_dirs]
    cfg = MetricConfig(delta=delta, tau_frac=tau_frac,
                       baseline=_parse_baseline(baseline), batch=batch)
    pairs = enumerate_pairs(bundles[0].partition)
    if not pairs:
        click.echo("warning: all clusters are singletons, no pairs to evaluate", err=True)
    comparisons = [compare_methods(oracle, image, bundles, pair, cfg) for pair in pairs]
    report = report_json(comparisons, cfg, include_curves=include_curves, bundle_names=names)
    out = _out(ctx, "report.json")
    cwio.atomic_write_text(out, json.dumps(report, indent=2, sort_keys=True))
    if csv_path is not None:
        cwio.atomic_write_text(csv_path, report_csv(comparisons, bundle_names=names))
    click.echo(f"evaluated {len(pairs)} pairs across {len(bundles)} bundles -> {out}")


@main.command("render")
@click.argument("source", type=click.Path(exists=True, path_type=Path))
@click.option("--image", "image_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--cmap", default="viridis", show_default=True)
@click.pass_context
def cmd_render(ctx, source: Path, image_path: Path, alpha: float, cmap: str):
    """Write overlay PNGs for a bundle directory or a single NPY heatmap."""
    image = cwio.load_image(image_path)
    out_dir = _out(ctx, "overlays")
    out_dir.mkdir(parents=True, exist_ok=True)
    if source.is_dir():
        bundle = load_bundle(source)
        maps = {f"cluster_{i}": m for i, m in enumerate(bundle.cluster_maps)}
        for ci, cluster in enumerate(bundle.partition.clusters):
            for label in cluster:
                maps[f"class_{ci}_{label}"] = bundle.class_maps[label]
    else:
        maps = {source.stem: cwio.load_heatmap(source)}
    errors: list[dict] = []
    written = 0
    for name, map_ in sorted(maps.items()):
        try:
            cwio.save_image(out_dir / f"{name}.png", overlay(image, map_, alpha=alpha, cmap=cmap))
            written += 1
        except CwoxError as exc:
            errors.append({"map": name, "message": str(exc)})
    click.echo(f"wrote {written} overlays to {out_dir}")
    _fail_items(errors)


if __name__ == "__main__":
    main()
