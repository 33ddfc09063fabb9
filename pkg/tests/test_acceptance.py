"""Acceptance suite: one test per criterion, one printed line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s``. Criterion 5 trains all
five tiny families on a 200/100-per-class synthetic corpus and must finish
in under 10 minutes on a desktop CPU; everything else is instant.

All oracles here are self-contained: hand arithmetic, independent
enumeration, and brute-force recounts that never call the code paths they
are checking.
"""

import hashlib
import math
import time
from contextlib import contextmanager
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from pcos_ensemble.backbones import (
    BACKBONE_KINDS,
    RESIDUAL,
    BackboneSpec,
    build_model,
    forward_logits,
)
from pcos_ensemble.data_ingest import (
    INFECTED,
    ImageRecord,
    clean_dataset,
    scan_dataset,
    split_train_holdout,
)
from pcos_ensemble.fusion import (
    DENCONREST_MEMBERS,
    denconrest_spec,
    fuse,
    fusion_objective,
    normalize_weights,
    optimize_weights,
)
from pcos_ensemble.metrics import (
    ConfusionMatrix,
    compute_metrics,
    evaluate_ensemble,
    evaluate_model,
)
from pcos_ensemble.preprocess import (
    PreprocessConfig,
    channel_bounds,
    denormalize,
    load_and_resize,
    normalize,
    preprocess_image,
    to_unit_array,
)
from pcos_ensemble.synthetic import SynthesisConfig, generate_corpus
from pcos_ensemble.trainer import TrainConfig, load_records_as_tensors, train

DESK_SEED = 20250401
DESK_BUDGET_SECONDS = 600.0


@contextmanager
def criterion(number, description):
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {number}: {description}")
        raise
    print(f"[PASS] criterion {number}: {description}")


def _sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


# ---------------------------------------------------------------------------
# criterion 1: confusion-matrix oracle
# ---------------------------------------------------------------------------

def test_criterion_1_denconrest_row_f1_exact_2280_over_2314_not_0_9849():
    with criterion(1, "confusion-matrix oracle (0.9823/0.9719/0.9991, "
                      "f1 = 2280/2314 ~ 0.9853, not 0.9849)"):
        report = compute_metrics(ConfusionMatrix(tp=1140, fp=33, fn=1, tn=748))
        assert abs(report.accuracy - 0.9823) <= 1e-4
        assert abs(report.precision - 0.9719) <= 1e-4
        assert abs(report.recall - 0.9991) <= 1e-4
        assert report.f1 == 2280 / 2314
        assert abs(report.f1 - 0.9853) < 1e-4


# ---------------------------------------------------------------------------
# criterion 2: fused-score property suite
# ---------------------------------------------------------------------------

def test_criterion_2_fusion_property_suite():
    with criterion(2, "fusion properties over >=1000 randomized cases each"):
        rng = np.random.default_rng(100)

        assert fuse([0.0, 0.0], [0.5, 0.5]) == 0.5  # sigma(0) = 1/2

        for _ in range(1000):
            m = int(rng.integers(2, 6))
            scores = rng.normal(0, 3, size=m)
            w = rng.dirichlet(np.ones(m))

            # one-hot recovery
            k = int(rng.integers(0, m))
            onehot = np.zeros(m)
            onehot[k] = 1.0
            assert abs(fuse(scores, onehot) - _sigmoid(scores[k])) < 1e-12

            # permutation equivariance
            perm = rng.permutation(m)
            assert abs(fuse(scores[perm], w[perm]) - fuse(scores, w)) < 1e-12

            # weight-scale invariance of normalization
            raw = rng.uniform(0.01, 10, size=m)
            c = rng.uniform(0.001, 100)
            np.testing.assert_allclose(
                normalize_weights(raw * c), normalize_weights(raw), atol=1e-12
            )

            # strict output range
            p = fuse(scores, w)
            assert 0.0 < p < 1.0

            # monotonicity in each score under positive weights
            wpos = (w + 0.01) / (w + 0.01).sum()
            j = int(rng.integers(0, m))
            bumped = scores.copy()
            bumped[j] += rng.uniform(0.01, 1.0)
            assert fuse(bumped, wpos) > fuse(scores, wpos)


# ---------------------------------------------------------------------------
# criterion 3: mode-agreement theorem
# ---------------------------------------------------------------------------

def test_criterion_3_uniform_weight_mode_agreement_exact():
    with criterion(3, "sigmoid_weighted and logit_mean hard labels coincide "
                      "under uniform weights (1000 random batches, exact)"):
        from pcos_ensemble.fusion import EnsembleSpec, fuse_logits

        rng = np.random.default_rng(101)
        members = list("abcde")
        sw = EnsembleSpec(members=members, weights=[0.2] * 5)
        lm = EnsembleSpec(members=members, weights=[0.2] * 5,
                          mode="logit_mean")
        checked = 0
        while checked < 1000:
            values = [rng.normal(0, 2, size=(8, 2)) for _ in range(5)]
            margins = sum(v[:, 1] - v[:, 0] for v in values)
            if np.any(margins == 0.0):  # exact tie: regenerate
                continue
            a = [p.label for p in fuse_logits(sw, values)]
            b = [p.label for p in fuse_logits(lm, values)]
            assert a == b
            checked += 1


# ---------------------------------------------------------------------------
# criterion 4: weight-search oracle
# ---------------------------------------------------------------------------

def test_criterion_4_weight_search_matches_hand_enumeration():
    with criterion(4, "2-member step-0.25 search equals independent "
                      "enumeration; result dominates every one-hot vertex"):
        rng = np.random.default_rng(102)
        n = 60
        labels = ["infected" if rng.random() < 0.5 else "notinfected"
                  for _ in range(n)]
        if len(set(labels)) == 1:
            labels[0] = "infected"
        y = [lbl == "infected" for lbl in labels]
        members = [rng.normal(0, 1.5, size=(n, 2)) for _ in range(2)]

        def hand_f1(w):
            tp = fp = fn = 0
            for i in range(n):
                s = sum(
                    w[j] * (members[j][i][1] - members[j][i][0])
                    for j in range(2)
                )
                pred = _sigmoid(s) > 0.5
                if pred and y[i]:
                    tp += 1
                elif pred and not y[i]:
                    fp += 1
                elif not pred and y[i]:
                    fn += 1
            return 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0

        lattice = [(k / 4.0, 1.0 - k / 4.0) for k in range(5)]
        best = min(
            lattice,
            key=lambda w: (
                -hand_f1(w),
                (w[0] - 0.5) ** 2 + (w[1] - 0.5) ** 2,
                w,
            ),
        )
        result = optimize_weights(members, labels, objective="f1", step=0.25)
        np.testing.assert_allclose(result, best, atol=1e-12)

        # vertex dominance on fresh random instances
        for _ in range(10):
            mem3 = [rng.normal(0, 1, size=(n, 2)) for _ in range(3)]
            w = optimize_weights(mem3, labels, objective="f1", step=0.25)
            achieved = fusion_objective(mem3, labels, w, "f1")
            for k in range(3):
                assert achieved >= fusion_objective(
                    mem3, labels, np.eye(3)[k], "f1"
                ) - 1e-12


# ---------------------------------------------------------------------------
# criterion 5: end-to-end desk-scale run
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    started = time.perf_counter()
    root = tmp_path_factory.mktemp("desk") / "corpus"
    manifest = generate_corpus(
        SynthesisConfig(per_class_train=200, per_class_test=100,
                        seed=DESK_SEED),
        root,
    )

    models, test_reports, curves = {}, {}, {}
    ckpt_base = tmp_path_factory.mktemp("desk_ckpt")
    for kind in BACKBONE_KINDS:
        model = build_model(BackboneSpec(kind=kind), seed=1)
        config = TrainConfig(
            learning_rate=1e-3, epochs=10, seed=1,
            checkpoint_dir=ckpt_base / kind,
        )
        report = train(model, manifest, config)
        models[kind] = model
        curves[kind] = report.per_epoch_loss
        test_reports[kind] = evaluate_model(model, manifest, "test")

    _, holdout = split_train_holdout(manifest, fraction=0.1, seed=0)
    xh, _ = load_records_as_tensors(holdout)
    holdout_labels = [r.label for r in holdout]
    member_logits = [
        forward_logits(models[k], xh.numpy()) for k in DENCONREST_MEMBERS
    ]
    weights = optimize_weights(member_logits, holdout_labels,
                               objective="f1", step=0.05)
    spec = denconrest_spec(weights.tolist())
    ensemble_report = evaluate_ensemble(
        spec, models, manifest, "test", model_id="denconrest"
    )
    elapsed = time.perf_counter() - started
    return SimpleNamespace(
        manifest=manifest,
        models=models,
        curves=curves,
        test_reports=test_reports,
        member_logits=member_logits,
        holdout_labels=holdout_labels,
        weights=weights,
        ensemble_report=ensemble_report,
        elapsed=elapsed,
    )


def test_criterion_5_end_to_end_desk_scale(desk_run):
    with criterion(5, "five tiny families >=0.80 test accuracy in <=10 "
                      "epochs; optimized denconrest within 0.05 of the best "
                      "member's test F1 and >= best member on the "
                      "optimization split; under 10 minutes"):
        for kind, report in desk_run.test_reports.items():
            print(f"    {kind}: test accuracy {report.accuracy:.3f}, "
                  f"f1 {report.f1:.3f}")
            assert report.accuracy >= 0.80, kind

        best_f1 = max(r.f1 for r in desk_run.test_reports.values())
        ens = desk_run.ensemble_report
        print(f"    denconrest: test accuracy {ens.accuracy:.3f}, "
              f"f1 {ens.f1:.3f} (best member f1 {best_f1:.3f})")
        assert ens.f1 >= best_f1 - 0.05

        # vertex inclusion: optimized weights cannot lose to any member
        # on the optimization split itself
        opt_f1 = fusion_objective(
            desk_run.member_logits, desk_run.holdout_labels,
            desk_run.weights, "f1",
        )
        for k in range(len(DENCONREST_MEMBERS)):
            onehot = np.eye(len(DENCONREST_MEMBERS))[k]
            member_f1 = fusion_objective(
                desk_run.member_logits, desk_run.holdout_labels, onehot, "f1"
            )
            assert opt_f1 >= member_f1

        print(f"    elapsed: {desk_run.elapsed:.0f}s")
        assert desk_run.elapsed < DESK_BUDGET_SECONDS


def test_criterion_5a_training_loss_drops_twenty_percent(desk_run):
    """Residual family at 200/class: epoch-5 loss at least 20% below epoch 1."""
    curve = desk_run.curves[RESIDUAL]
    assert curve[4] <= 0.8 * curve[0]


# ---------------------------------------------------------------------------
# criterion 6: preprocessing suite
# ---------------------------------------------------------------------------

def test_criterion_6_preprocessing_suite(tmp_path):
    with criterion(6, "preprocess shape/bounds/centering/round-trip"):
        from PIL import Image

        cfg = PreprocessConfig()
        path = tmp_path / "img.png"
        rng = np.random.default_rng(103)
        Image.fromarray(
            rng.integers(0, 256, size=(300, 260), dtype=np.uint8), mode="L"
        ).save(path)

        pp = preprocess_image(path, cfg)
        assert pp.data.shape == (3, 224, 224)

        low, high = channel_bounds(cfg)
        assert (pp.data >= low).all() and (pp.data <= high).all()

        plane = np.zeros((3, 224, 224), dtype=np.float32)
        plane[0] = 0.485
        centered = normalize(plane, cfg)
        np.testing.assert_allclose(centered.data[0], 0.0, atol=1e-6)

        unit = to_unit_array(load_and_resize(path, cfg))
        round_trip = denormalize(normalize(unit, cfg).data, cfg)
        np.testing.assert_allclose(round_trip, unit, atol=1e-6)


# ---------------------------------------------------------------------------
# criterion 7: integrity filter
# ---------------------------------------------------------------------------

def test_criterion_7_integrity_filter_flags_exactly_k(tmp_path):
    with criterion(7, "planting k corrupted files flags exactly k and "
                      "cleaning shrinks the manifest by k"):
        k = 3
        root = tmp_path / "corpus"
        generate_corpus(
            SynthesisConfig(per_class_train=5, per_class_test=4,
                            image_size=64, follicle_radius_range=(4, 9),
                            seed=11),
            root,
        )
        victims = [
            sorted((root / "train" / "infected").glob("*.png"))[0],
            sorted((root / "train" / "notinfected").glob("*.png"))[1],
            sorted((root / "test" / "infected").glob("*.png"))[0],
        ]
        assert len(victims) == k
        for v in victims:
            data = v.read_bytes()
            v.write_bytes(data[: int(len(data) * 0.6)])

        total_files = (5 + 4) * 2  # 18 images across splits and classes
        manifest = scan_dataset(root)
        assert len(manifest.records) == total_files
        assert len(manifest.flagged_records()) == k
        valid_before = sum(sum(v.values()) for v in manifest.counts.values())
        assert valid_before == total_files - k

        report = clean_dataset(manifest, mode="quarantine")
        assert report.removed == k
        rescanned = scan_dataset(root)
        assert len(rescanned.records) == total_files - k
        assert not rescanned.flagged_records()
        valid_after = sum(sum(v.values()) for v in rescanned.counts.values())
        assert valid_after == total_files - k


# ---------------------------------------------------------------------------
# criterion 8: determinism
# ---------------------------------------------------------------------------

def test_criterion_8_determinism(tmp_path):
    with criterion(8, "seeded synthesis is byte-identical; seeded training "
                      "reproduces loss curves exactly"):
        cfg = SynthesisConfig(per_class_train=4, per_class_test=2,
                              image_size=64, follicle_radius_range=(4, 9),
                              seed=99)

        def tree_hash(root):
            digest = hashlib.sha256()
            for p in sorted(root.rglob("*")):
                if p.is_file():
                    digest.update(p.relative_to(root).as_posix().encode())
                    digest.update(p.read_bytes())
            return digest.hexdigest()

        a = tmp_path / "a"
        b = tmp_path / "b"
        generate_corpus(cfg, a)
        generate_corpus(cfg, b)
        assert tree_hash(a) == tree_hash(b)

        manifest = scan_dataset(a)
        curves = []
        for run in range(2):
            model = build_model(BackboneSpec(kind=RESIDUAL), seed=4)
            config = TrainConfig(
                learning_rate=1e-3, epochs=2, seed=4,
                checkpoint_dir=tmp_path / f"ck{run}", holdout_fraction=0.0,
            )
            curves.append(train(model, manifest, config).per_epoch_loss)
        assert curves[0] == curves[1]
