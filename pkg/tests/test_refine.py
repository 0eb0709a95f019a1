import hashlib
import json
import os
import shutil

import numpy as np
import pytest

import oracles
from dept import refine
from dept.fgpem import fgpem_generate
from dept.raster import read_raster, write_f32_raster
from dept.refine import (
    LabelRecord,
    SessionError,
    epoch_dir,
    load_config,
    open_session,
    plan_schedule,
    read_manifest,
    run_refinement,
    surrogate_feature_provider,
    update_labels,
)


# ---------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------
def test_schedule_default():
    assert plan_schedule(400, 50).update_epochs == (0, 50, 100, 150, 200, 250, 300, 350)


@pytest.mark.parametrize("n_total, n, expected", [(1, 1, (0,)), (10, 3, (0, 3, 6, 9)), (50, 50, (0,)), (51, 50, (0, 50))])
def test_schedule_examples(n_total, n, expected):
    assert plan_schedule(n_total, n).update_epochs == expected


@pytest.mark.parametrize("n_total, n", [(0, 1), (10, 0), (-5, 2)])
def test_schedule_rejects(n_total, n):
    with pytest.raises(ValueError):
        plan_schedule(n_total, n)


# ---------------------------------------------------------------------
# Label updates
# ---------------------------------------------------------------------
def _session(cfg_path):
    return open_session(load_config(cfg_path))


def test_epoch_zero_from_images(small_corpus):
    s = _session(small_corpus)
    res = update_labels(s, 0)
    assert res.version == 1 and not res.failures
    assert [r.image_id for r in res.records] == ["img00", "img01", "img02"]
    assert all(r.source == "image" for r in res.records)
    for r in res.records:
        assert (s.labels_dir / r.label_path).is_file()
        assert r.label_path == f"epoch_0000/{r.image_id}.png"


def test_feature_epoch_matches_direct_generation(small_corpus):
    s = _session(small_corpus)
    update_labels(s, 0)
    for i in s.image_ids:
        write_f32_raster(read_raster(s.images[i]), epoch_dir(s.features_dir, 50) / f"{i}.f32r")
    res = update_labels(s, 50)
    assert res.version == 2 and not res.failures
    for i in s.image_ids:
        # the f32 round trip is lossless for byte-grid images
        expected = fgpem_generate(read_raster(s.images[i]), s.points[i], s.options, apply_clahe=False)
        np.testing.assert_array_equal(read_raster(s.current_labels[i], "mask"), expected)


def test_missing_feature_is_per_image_failure(small_corpus):
    s = _session(small_corpus)
    update_labels(s, 0)
    before = dict(s.current_labels)
    for i in s.image_ids[:2]:
        write_f32_raster(read_raster(s.images[i]), epoch_dir(s.features_dir, 50) / f"{i}.f32r")
    res = update_labels(s, 50)
    assert len(res.records) == 2
    assert list(res.failures) == ["img02"]
    assert "missing feature" in res.failures["img02"]
    assert res.version == 2 and s.current_version == 2
    assert s.current_labels["img02"] == before["img02"]


def test_feature_dimension_mismatch(small_corpus):
    s = _session(small_corpus)
    update_labels(s, 0)
    for i in s.image_ids:
        write_f32_raster(np.zeros((5, 5)), epoch_dir(s.features_dir, 50) / f"{i}.f32r")
    res = update_labels(s, 50)
    assert res.fully_failed
    assert all("dimension mismatch" in m for m in res.failures.values())


def test_empty_feature_dir_keeps_previous_labels(small_corpus):
    s = _session(small_corpus)
    update_labels(s, 0)
    before = dict(s.current_labels)
    res = update_labels(s, 50)
    assert res.fully_failed and res.version == 2
    assert s.current_labels == before


def test_missing_points_is_session_error(small_corpus):
    (small_corpus.parent / "points" / "img01.json").unlink()
    with pytest.raises(SessionError, match="img01"):
        _session(small_corpus)


def test_epoch_zero_never_reads_features_and_later_epochs_skip_clahe(small_corpus, monkeypatch):
    s = _session(small_corpus)
    calls = {"f32": 0, "clahe": []}

    real_read = refine.read_f32_raster
    real_gen = refine.fgpem_generate

    def spy_read(p):
        calls["f32"] += 1
        return real_read(p)

    def spy_gen(src, pts, opts, apply_clahe=False):
        calls["clahe"].append(apply_clahe)
        return real_gen(src, pts, opts, apply_clahe=apply_clahe)

    monkeypatch.setattr(refine, "read_f32_raster", spy_read)
    monkeypatch.setattr(refine, "fgpem_generate", spy_gen)
    update_labels(s, 0)
    assert calls["f32"] == 0
    for i in s.image_ids:
        write_f32_raster(read_raster(s.images[i]), epoch_dir(s.features_dir, 50) / f"{i}.f32r")
    update_labels(s, 50)
    assert calls["f32"] == 3
    assert calls["clahe"] == [False, False, False]


# ---------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------
def test_manifest_checksums_and_dense_versions(small_corpus):
    s = _session(small_corpus)
    run_refinement(s, plan_schedule(150, 50), provider="surrogate")
    recs = read_manifest(s.manifest_path)
    assert len(recs) == 9
    assert sorted({r.version for r in recs}) == [1, 2, 3]
    for r in recs:
        assert hashlib.sha256((s.labels_dir / r.label_path).read_bytes()).hexdigest() == r.sha256
    for line in s.manifest_path.read_text().splitlines():
        doc = json.loads(line)
        assert list(doc) == sorted(doc)


def test_torn_manifest_line_is_tolerated(small_corpus):
    s = _session(small_corpus)
    update_labels(s, 0)
    with open(s.manifest_path, "a") as fh:
        fh.write('{"epoch": 50, "image_')
    recs = read_manifest(s.manifest_path)
    assert len(recs) == 3
    resumed = _session(small_corpus)
    assert resumed.current_version == 1


def test_corrupt_middle_line_is_error(tmp_path):
    rec = LabelRecord("a", 1, 0, "epoch_0000/a.png", "image", "0" * 64)
    (tmp_path / "m.jsonl").write_text("garbage\n" + rec.to_json_line())
    with pytest.raises(SessionError, match="line 1"):
        read_manifest(tmp_path / "m.jsonl")


def test_resume_from_manifest(small_corpus):
    s = _session(small_corpus)
    update_labels(s, 0)
    r = _session(small_corpus)
    assert r.current_version == 1
    assert r.current_labels == s.current_labels


def test_failed_atomic_write_leaves_no_partial_file(small_corpus, monkeypatch):
    s = _session(small_corpus)

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(SessionError, match="disk full"):
        update_labels(s, 0)
    out = epoch_dir(s.labels_dir, 0)
    assert list(out.iterdir()) == []
    assert not s.manifest_path.exists()


# ---------------------------------------------------------------------
# Surrogate
# ---------------------------------------------------------------------
def test_surrogate_of_empty_label_is_zero():
    assert not surrogate_feature_provider(np.zeros((8, 8), dtype=np.uint8), 2.0).any()


def test_surrogate_rejects_bad_sharpness():
    with pytest.raises(ValueError):
        surrogate_feature_provider(np.zeros((3, 3), dtype=np.uint8), 0.0)


def test_surrogate_gradient_peaks_on_boundary():
    m = np.zeros((40, 40), dtype=np.uint8)
    m[12:28, 12:28] = 1
    f = surrogate_feature_provider(m, 2.0)
    np.testing.assert_allclose(f, oracles.gaussian_blur_direct(m.astype(float), 2.0), atol=1e-6)
    gy, gx = np.gradient(f)
    mag = np.hypot(gx, gy)
    r, c = np.unravel_index(np.argmax(mag), mag.shape)
    # boundary lies between pixels 11|12 and 27|28
    dist = min(abs(r - 11.5), abs(r - 27.5), abs(c - 11.5), abs(c - 27.5))
    assert dist <= 1.0


def test_surrogate_small_sigma_is_nearly_identity():
    m = (np.random.default_rng(5).random((16, 16)) > 0.5).astype(np.uint8)
    np.testing.assert_allclose(surrogate_feature_provider(m, 0.1), m, atol=1e-3)


def test_surrogate_run_is_deterministic(tmp_path, small_corpus):
    twin = tmp_path.parent / (tmp_path.name + "_twin")
    shutil.copytree(small_corpus.parent, twin)
    a = _session(small_corpus)
    b = _session(twin / "session.json")
    ra = run_refinement(a, plan_schedule(150, 50), provider="surrogate")
    rb = run_refinement(b, plan_schedule(150, 50), provider="surrogate")
    assert ra.lines() == rb.lines()
    assert a.manifest_path.read_bytes() == b.manifest_path.read_bytes()
    for p in sorted(a.labels_dir.rglob("*.png")):
        assert p.read_bytes() == (b.labels_dir / p.relative_to(a.labels_dir)).read_bytes()
    shutil.rmtree(twin)


def test_surrogate_report_tracks_iou(small_corpus):
    s = _session(small_corpus)
    rep = run_refinement(s, plan_schedule(150, 50), provider="surrogate", sharpness=[4.0, 2.0])
    assert rep.ok
    assert [e.epoch for e in rep.events] == [0, 50, 100]
    assert all(0.8 < e.mean_iou <= 1.0 for e in rep.events)
    assert "mean_iou" in rep.lines()[0]


def test_files_provider_without_features_reports_failures(small_corpus):
    s = _session(small_corpus)
    rep = run_refinement(s, plan_schedule(100, 50))
    assert not rep.ok
    assert rep.events[1].fully_failed
    assert "FAILED" in rep.lines()[1]


def test_unknown_provider(small_corpus):
    with pytest.raises(ValueError):
        run_refinement(_session(small_corpus), plan_schedule(1, 1), provider="magic")


def test_config_errors(tmp_path):
    with pytest.raises(SessionError, match="cannot read"):
        load_config(tmp_path / "nope.json")
    (tmp_path / "c.json").write_text(json.dumps({"images_dir": "i"}))
    with pytest.raises(SessionError, match="missing key"):
        load_config(tmp_path / "c.json")
    (tmp_path / "c.json").write_text(
        json.dumps({"images_dir": "i", "points_dir": "p", "features_dir": "f", "labels_dir": "l", "scale": 3})
    )
    with pytest.raises(SessionError, match="invalid config"):
        load_config(tmp_path / "c.json")
