"""Acceptance suite: one test per release criterion, one line per verdict.

Run with ``pytest tests/test_acceptance.py -s`` (or plain ``pytest``; the
verdict lines bypass capture). Every tolerance is pinned here.
"""

import json
import math
import time

import numpy as np
import pytest
from click.testing import CliRunner

from cwox.cli import main as cli_main
from cwox.contrast import (
    ContrastConfig,
    class_contrast,
    cluster_contrast,
    compound_logit,
    compound_prob,
    explain_cwox2s,
    explain_swox,
    support_mask,
)
from cwox.cooccur import import_tree
from cwox.core import ClassOutput, Image, SaliencyMap, TopKSelection, pixel_order, softmax
from cwox.metrics import (
    DeletionCurve,
    MetricConfig,
    cauc,
    cdrop,
    compare_methods,
    contrastive_curve,
    default_tau,
    delete_pixels,
    enumerate_pairs,
)
from cwox.oracle import SyntheticClassifier
from cwox.rise import RiseConfig, RiseExplainer, generate_masks, rise_saliency

from conftest import make_image
from test_cooccur import FIG_TREE, level1_groups, planted_block_documents


@pytest.fixture
def announce(capsys):
    def _announce(line: str) -> None:
        with capsys.disabled():
            print(line)
    return _announce


def test_algebraic_identity_suite(announce):
    start = time.perf_counter()
    rng = np.random.default_rng(0)

    # Stage-1 pass-through when there is a single cluster
    h = SaliencyMap(rng.random((6, 6)))
    assert cluster_contrast(h, None, 1) is h

    # ReLU non-negativity
    a = SaliencyMap(rng.normal(size=(6, 6)))
    b = SaliencyMap(rng.normal(size=(6, 6)))
    assert cluster_contrast(a, b, 2).data.min() >= 0.0

    # positive homogeneity of the rectified difference
    for lam in (0.25, 3.0, 17.5):
        scaled = cluster_contrast(SaliencyMap(lam * a.data), SaliencyMap(lam * b.data), 2)
        assert np.allclose(scaled.data, lam * cluster_contrast(a, b, 2).data, rtol=1e-12)

    # stage-2 maps are exactly zero outside the support mask
    support = support_mask(cluster_contrast(a, b, 2), 0.0)
    out = class_contrast(support, SaliencyMap(rng.random((6, 6))),
                         SaliencyMap(rng.random((6, 6))), 3)
    assert np.all(out.data[~support.data] == 0.0)

    # compound logit: exp-consistency within relative 1e-9
    logits = rng.normal(scale=3.0, size=8)
    out_cls = ClassOutput(tuple(f"c{i}" for i in range(8)), softmax(logits), logits)
    cluster = ["c1", "c4", "c7"]
    z = compound_logit(out_cls, cluster)
    assert math.exp(z) == pytest.approx(
        sum(math.exp(out_cls.logit(c)) for c in cluster), rel=1e-9)

    # compound probability of the full vocabulary is 1 within 1e-6
    assert compound_prob(out_cls, out_cls.labels) == pytest.approx(1.0, abs=1e-6)

    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    announce(f"[PASS] algebraic identity suite ({elapsed:.3f}s < 1s)")


def test_metric_arithmetic_exact(announce):
    # constant-1 curve: ten salient pixels over n=100 gives exactly 0.1
    curve = DeletionCurve(scores=np.ones(11), n_total=100, n_delta=10)
    assert cauc(curve) == 0.1

    # n_delta = 3 * tau makes the penalty denominator exactly 2
    scores = np.linspace(0.75, 0.25, 31)
    scores[0], scores[-1] = 0.75, 0.25  # dyadic endpoints subtract exactly
    curve = DeletionCurve(scores=scores, n_total=600, n_delta=30)
    assert math.log2(1 + max(30, 10) / 10) == 2.0
    assert cdrop(curve, tau=10) == (0.75 - 0.25) / 2.0
    assert cdrop(curve, tau=10) == 0.25

    # below tau the denominator is exactly log2(2) = 1
    small = DeletionCurve(scores=np.array([0.5, 0.375, 0.125]), n_total=100, n_delta=2)
    assert cdrop(small, tau=5) == 0.5 - 0.125
    announce("[PASS] metric arithmetic matches closed forms exactly")


def test_brute_force_oracle_equivalence(announce):
    start = time.perf_counter()
    rng = np.random.default_rng(21)
    oracle = SyntheticClassifier(
        class_labels=("c", "u", "v"),
        weights=rng.normal(size=(3, 8, 8, 1)),
        biases=np.zeros(3),
        temperature=2.0,
    )
    img = make_image(8, 8, seed=21)
    heat = SaliencyMap(np.abs(oracle.weights[0, :, :, 0]))
    cfg = MetricConfig(delta=0.5, baseline="zero", batch=1)
    curve = contrastive_curve(oracle, img, heat, "c", ["u", "v"], cfg)

    # bit-for-bit replay through delete_pixels + synthetic classify
    order = pixel_order(heat)
    replay = []
    for r in range(1, curve.n_delta + 2):
        out = oracle.classify(delete_pixels(img, order, r, "zero"))
        p_foil = out.probability("u") + out.probability("v")
        replay.append(out.probability("c") * (1.0 - min(1.0, max(0.0, p_foil))))
    assert np.array_equal(curve.scores, np.array(replay))

    # independent recomputation of both scores
    n = 64
    cauc_ref = sum(replay[: curve.n_delta]) / n
    assert abs(cauc(curve) - cauc_ref) < 1e-12
    tau = default_tau(n, 0.05)
    cdrop_ref = (replay[0] - replay[-1]) / math.log2(1 + max(curve.n_delta, tau) / tau)
    assert abs(cdrop(curve, tau) - cdrop_ref) < 1e-12

    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    announce(f"[PASS] brute-force oracle equivalence, bit-exact ({elapsed:.2f}s < 10s)")


class SaturatingQuadrantModel:
    """Two confusion clusters with redundant shared evidence per cluster.

    Classes a/b share saturating evidence on the left half (c/d on the
    right), while small disjoint corner patches carry the discriminative
    weight. Saturation mimics object-level redundancy: per-class saliency
    peaks on the shared region, yet deleting it barely moves the margin.
    """

    labels = ("a", "b", "c", "d")
    input_size = (8, 8, 1)

    def __init__(self, alpha=1.0, beta=0.5, sat_frac=0.6, temperature=2.0):
        self.alpha = alpha
        self.beta = beta
        self.sat = sat_frac * 16.0
        self.temperature = temperature

    def classify(self, image: Image) -> ClassOutput:
        x = image.data[:, :, 0]
        shared_left = x[2:6, 0:4].sum()
        shared_right = x[2:6, 4:8].sum()
        disjoint = {"a": x[0:2, 0:4].sum(), "b": x[6:8, 0:4].sum(),
                    "c": x[0:2, 4:8].sum(), "d": x[6:8, 4:8].sum()}
        shared = {"a": shared_left, "b": shared_left,
                  "c": shared_right, "d": shared_right}
        z = np.array([
            (self.alpha * min(shared[c], self.sat) + self.beta * disjoint[c])
            / self.temperature
            for c in self.labels
        ])
        return ClassOutput(self.labels, softmax(z), z)


TWO_CLUSTER_TREE = {"nodes": [
    {"id": "root", "level": 2, "parent": None},
    {"id": "L", "level": 1, "parent": "root"},
    {"id": "R", "level": 1, "parent": "root"},
    {"id": "a", "level": 0, "parent": "L", "label": "a"},
    {"id": "b", "level": 0, "parent": "L", "label": "b"},
    {"id": "c", "level": 0, "parent": "R", "label": "c"},
    {"id": "d", "level": 0, "parent": "R", "label": "d"},
]}


def test_directional_faithfulness_at_desk_scale(announce):
    start = time.perf_counter()
    oracle = SaturatingQuadrantModel()
    img = Image(np.ones((8, 8, 1)))
    tree = import_tree(TWO_CLUSTER_TREE)
    rise_cfg = RiseConfig(num_masks=2000, cell_grid=4, keep_prob=0.5, seed=17,
                          baseline="zero")
    ccfg = ContrastConfig(k_cap=4, mass=1.0)
    two_stage = explain_cwox2s(oracle, RiseExplainer(oracle, rise_cfg), tree, img, ccfg)
    swox = explain_swox(oracle, RiseExplainer(oracle, rise_cfg), img, ccfg)
    assert {frozenset(c) for c in two_stage.partition.clusters} == \
        {frozenset({"a", "b"}), frozenset({"c", "d"})}

    mcfg = MetricConfig(delta=0.5, tau_frac=0.05, baseline="zero", batch=1)
    pairs = enumerate_pairs(two_stage.partition)
    assert len(pairs) == 4
    for pair in pairs:
        comp = compare_methods(oracle, img, [two_stage, swox], pair, mcfg)
        score_2s, score_swox = comp.scores
        assert score_2s.cauc < score_swox.cauc, (
            f"pair {pair}: CAUC {score_2s.cauc} !< {score_swox.cauc}")
        assert score_2s.cdrop > score_swox.cdrop, (
            f"pair {pair}: CDROP {score_2s.cdrop} !> {score_swox.cdrop}")

    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    announce("[PASS] directional faithfulness: CAUC(cwox2s) < CAUC(swox) and "
             f"CDROP(cwox2s) > CDROP(swox) on all 4 pairs ({elapsed:.1f}s < 120s)")


def test_cluster_recovery_ten_seeds(announce):
    start = time.perf_counter()
    runner = CliRunner()
    target = {frozenset({"a", "b"}), frozenset({"c", "d", "e"}), frozenset({"f"})}
    import tempfile
    from pathlib import Path

    recovered = 0
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for seed in range(10):
            docs = planted_block_documents(np.random.default_rng(seed))
            docs_path = tmp / f"docs{seed}.jsonl"
            docs_path.write_text("".join(d.to_json() + "\n" for d in docs))
            tree_path = tmp / f"tree{seed}.json"
            result = runner.invoke(cli_main, ["--out", str(tree_path),
                                              "cluster-build", str(docs_path)])
            assert result.exit_code == 0, result.output
            tree = import_tree(json.loads(tree_path.read_text()))
            recovered += level1_groups(tree) == target
    assert recovered == 10
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    announce(f"[PASS] planted clusters recovered by cluster-build 10/10 seeds "
             f"({elapsed:.2f}s < 5s)")


def test_partition_replay_on_instrument_output(announce):
    tree = import_tree(FIG_TREE)
    # top labels in descending-probability order of the documented output
    top = TopKSelection(("cello", "acoustic-guitar", "banjo", "violin", "electric-guitar"))
    from cwox.cooccur import restrict_and_cut

    part = restrict_and_cut(tree, top)
    assert part.clusters == (
        ("cello", "violin"),
        ("acoustic-guitar", "banjo", "electric-guitar"),
    )
    announce("[PASS] partition replay: [{cello, violin}, "
             "{acoustic-guitar, banjo, electric-guitar}]")


def test_rise_statistical_checks(announce):
    # keep rate over 10^4 masks
    cfg = RiseConfig(num_masks=10_000, cell_grid=4, keep_prob=0.5, seed=0)
    masks = generate_masks(cfg, 8, 8)
    keep_rate = float(masks.mean())
    assert abs(keep_rate - 0.5) <= 0.02

    # bit-exact seed determinism for masks and full saliency runs
    assert np.array_equal(masks, generate_masks(cfg, 8, 8))
    oracle = SaturatingQuadrantModel()
    img = Image(np.ones((8, 8, 1)))
    run_cfg = RiseConfig(num_masks=400, cell_grid=4, keep_prob=0.5, seed=11,
                         baseline="zero")
    first = rise_saliency(oracle, img, ["a"], run_cfg)
    second = rise_saliency(oracle, img, ["a"], run_cfg)
    assert np.array_equal(first.data, second.data)

    # probability-scored compound additivity within 1e-6
    h_ab = rise_saliency(oracle, img, ["a", "b"], run_cfg)
    h_a = rise_saliency(oracle, img, ["a"], run_cfg)
    h_b = rise_saliency(oracle, img, ["b"], run_cfg)
    gap = float(np.max(np.abs(h_ab.data - (h_a.data + h_b.data))))
    assert gap <= 1e-6
    announce(f"[PASS] RISE checks: keep rate {keep_rate:.4f} within 0.5±0.02, "
             f"seed-deterministic, compound additivity gap {gap:.2e} <= 1e-6")
