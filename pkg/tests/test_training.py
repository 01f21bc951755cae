import json

import jsonschema
import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from structstyle import images, synthetic, training
from structstyle.errors import TrainingError
from structstyle.losses import LossWeights
from structstyle.training import TrainingConfig, list_corpus, moving_average, resize_and_crop, train
from structstyle.transformer import load_checkpoint

from conftest import SMALL_MANIFEST


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    synthetic.write_corpus(root, n=4, size=40, seed=7)
    return root


@pytest.fixture(scope="module")
def style_path(tmp_path_factory):
    return images.write_image(tmp_path_factory.mktemp("style") / "muse.png", synthetic.style_image(1, 32))


def make_cfg(tmp_path, corpus, style_path, vgg_path, **kw):
    base = dict(style=str(style_path), corpus=str(corpus), vgg_weights=str(vgg_path), out_dir=str(tmp_path / "run"),
                crop_size=32, max_steps=4, max_seconds=None, checkpoint_every_steps=None,
                checkpoint_every_seconds=None, manifest=SMALL_MANIFEST, seed=0)
    base.update(kw)
    return TrainingConfig(**base)


def test_moving_average_matches_naive():
    v = np.random.default_rng(0).normal(size=120)
    ma = moving_average(v, 50)
    for t in (0, 1, 49, 50, 119):
        assert ma[t] == pytest.approx(v[max(0, t - 49) : t + 1].mean(), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(h=st.integers(16, 90), w=st.integers(16, 90), size=st.sampled_from([16, 32]))
def test_resize_and_crop_shape(h, w, size):
    out = resize_and_crop(np.random.default_rng(0).random((h, w, 3)).astype(np.float32), size,
                          np.random.default_rng(1))
    assert out.shape == (size, size, 3)


def test_config_validation(tmp_path, corpus, style_path, vgg_path):
    with pytest.raises(jsonschema.ValidationError):
        make_cfg(tmp_path, corpus, style_path, vgg_path, crop_size=30)
    with pytest.raises(jsonschema.ValidationError):
        make_cfg(tmp_path, corpus, style_path, vgg_path, batch_size=0)
    with pytest.raises(ValueError):
        make_cfg(tmp_path, corpus, style_path, vgg_path, weights={"texture": {"relu1_1": -1.0}})


def test_config_from_toml_with_overrides(tmp_path):
    p = tmp_path / "train.toml"
    p.write_text(
        'style = "s.png"\ncorpus = "c"\nvgg_weights = "v.bin"\nout_dir = "o"\ncrop_size = 64\n'
        "[weights]\ntv = 10.0\n[weights.structure]\n\"relu1_1,relu2_1\" = 3.0\n"
        "[manifest]\nwidths = [8, 16, 32]\nresidual_blocks = 2\n"
    )
    cfg = TrainingConfig.from_file(p, crop_size=32, seed=5)
    assert cfg.crop_size == 32 and cfg.seed == 5
    assert cfg.weights.tv == 10.0 and cfg.weights.structure == {("relu1_1", "relu2_1"): 3.0}
    assert cfg.manifest == SMALL_MANIFEST
    assert cfg.learning_rate == 1e-3 and cfg.batch_size == 1 and cfg.optimizer == "adam"
    p.write_text(p.read_text() + 'unknown_key = 1\n')
    with pytest.raises(jsonschema.ValidationError):
        TrainingConfig.from_file(p)


def test_default_config_values():
    cfg = TrainingConfig(style="s", corpus="c", vgg_weights="v", out_dir="o")
    assert cfg.crop_size == 256 and cfg.batch_size == 1 and cfg.learning_rate == 1e-3
    assert cfg.weights == LossWeights()


def test_missing_and_empty_corpus(tmp_path, style_path, vgg_path):
    with pytest.raises(TrainingError):
        list_corpus(tmp_path / "nope")
    (tmp_path / "empty").mkdir()
    (tmp_path / "empty" / "readme.txt").write_text("x")
    with pytest.raises(TrainingError):
        train(make_cfg(tmp_path, tmp_path / "empty", style_path, vgg_path))


def test_zero_steps(tmp_path, corpus, style_path, vgg_path):
    report = train(make_cfg(tmp_path, corpus, style_path, vgg_path, max_steps=0))
    assert report.steps == []
    assert [c["step"] for c in report.checkpoints] == [0]
    assert load_checkpoint(report.checkpoints[0]["path"]).step == 0
    assert (tmp_path / "run" / "report.json").exists()
    assert (tmp_path / "run" / "style_targets.bin").exists()


def test_run_outputs_and_cadence(tmp_path, corpus, style_path, vgg_path):
    cfg = make_cfg(tmp_path, corpus, style_path, vgg_path, max_steps=5, checkpoint_every_steps=2)
    seen = []
    report = train(cfg, progress=lambda step, rec: seen.append(step))
    assert seen == [1, 2, 3, 4, 5]
    assert [c["step"] for c in report.checkpoints] == [0, 2, 4, 5]
    lines = [json.loads(l) for l in (tmp_path / "run" / "train_log.jsonl").read_text().splitlines()]
    assert [l["step"] for l in lines] == [1, 2, 3, 4, 5]
    for l in lines:
        assert l["total"] == pytest.approx(l["content"] + l["texture"] + l["structure"] + l["tv"], rel=1e-5)
    ck = load_checkpoint(report.checkpoints[-1]["path"], expected_manifest=SMALL_MANIFEST)
    assert ck.step == 5 and ck.style_id == "muse" and ck.config_digest == cfg.digest()
    assert report.throughput["steps"] == 5 and report.throughput["steps_per_second"] > 0


def test_early_checkpoint(tmp_path, corpus, style_path, vgg_path):
    report = train(make_cfg(tmp_path, corpus, style_path, vgg_path, max_steps=2, first_checkpoint_seconds=1e-6))
    assert [c["step"] for c in report.checkpoints] == [0, 1, 2]
    assert all(c["elapsed"] <= 60 for c in report.checkpoints)


def test_wall_clock_budget(tmp_path, corpus, style_path, vgg_path):
    report = train(make_cfg(tmp_path, corpus, style_path, vgg_path, max_steps=None, max_seconds=0.0))
    assert report.steps == []


def test_deterministic_series(tmp_path, corpus, style_path, vgg_path):
    a = train(make_cfg(tmp_path / "a", corpus, style_path, vgg_path))
    b = train(make_cfg(tmp_path / "b", corpus, style_path, vgg_path))
    assert a.series() == b.series()
    assert [s["images"] for s in a.steps] == [s["images"] for s in b.steps]
    sa = load_checkpoint(a.checkpoints[-1]["path"]).model.state_dict()
    sb = load_checkpoint(b.checkpoints[-1]["path"]).model.state_dict()
    assert all(torch.equal(sa[k], sb[k]) for k in sa)
    c = train(make_cfg(tmp_path / "c", corpus, style_path, vgg_path, seed=1))
    assert c.series() != a.series()


def test_batch_size_two(tmp_path, corpus, style_path, vgg_path):
    report = train(make_cfg(tmp_path, corpus, style_path, vgg_path, max_steps=2, batch_size=2))
    assert all(len(s["images"]) == 2 for s in report.steps)


def test_prefetch_mode_runs(tmp_path, corpus, style_path, vgg_path):
    report = train(make_cfg(tmp_path, corpus, style_path, vgg_path, max_steps=3, prefetch=2, deterministic=False))
    assert len(report.steps) == 3


def test_unreadable_files_are_skipped(tmp_path, corpus, style_path, vgg_path):
    mixed = tmp_path / "mixed"
    mixed.mkdir()
    for p in sorted(corpus.iterdir())[:2]:
        (mixed / p.name).write_bytes(p.read_bytes())
    (mixed / "broken.png").write_bytes(b"not a png at all")
    report = train(make_cfg(tmp_path, mixed, style_path, vgg_path, max_steps=4))
    assert len(report.steps) == 4
    assert [s.endswith("broken.png") for s in report.skipped] == [True]
    assert not any(s["images"][0].endswith("broken.png") for s in report.steps)


def test_all_unreadable(tmp_path, style_path, vgg_path):
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "a.png").write_bytes(b"junk")
    with pytest.raises(TrainingError):
        train(make_cfg(tmp_path, bad, style_path, vgg_path))


def test_nonfinite_loss_dumps_diagnostics(tmp_path, corpus, style_path, vgg_path, monkeypatch):
    real = training.total_loss

    def poisoned(*a, **k):
        tot, parts = real(*a, **k)
        return tot * float("nan"), parts

    monkeypatch.setattr(training, "total_loss", poisoned)
    with pytest.raises(TrainingError, match="non-finite"):
        train(make_cfg(tmp_path, corpus, style_path, vgg_path))
    dump = json.loads((tmp_path / "run" / "nonfinite_step_0.json").read_text())
    assert set(dump["terms"]) == {"content", "texture", "structure", "tv"}


def test_float64_precision(tmp_path, corpus, style_path, vgg_path):
    report = train(make_cfg(tmp_path, corpus, style_path, vgg_path, max_steps=2, precision="float64"))
    assert len(report.steps) == 2 and all(np.isfinite(report.series()))
    assert load_checkpoint(report.checkpoints[-1]["path"]).model.encoder[0].conv.weight.dtype == torch.float32
