import time

import numpy as np
import pytest
import torch
from torch import nn

from ppsam.data import load_manifest
from ppsam.errors import ConfigError, InvalidPrompt, UnsupportedBackend
from ppsam.evaluate import evaluate_at_level
from ppsam.finetune import FreezePolicy, RunConfig, apply_freeze_policy, train
from ppsam.geometry import BoundingBox, PerturbationPolicy
from ppsam.segmenter import (
    GROUP_IDS,
    OracleSegmenter,
    SegmenterSpec,
    build_segmenter,
    build_surrogate,
    load_checkpoint,
    parameter_groups,
    predict,
)
from ppsam.segmenter.foundation import FoundationSegmenter, build_foundation


def test_oracle_predicts_box_interior():
    model = OracleSegmenter(SegmenterSpec("oracle", input_resolution=32))
    image = torch.zeros(3, 32, 32)
    box = BoundingBox(3, 5, 10, 20)
    probs = predict(model, image, box)
    expected = torch.from_numpy(box.to_mask((32, 32)).astype(np.float32))
    assert torch.equal(probs, expected)
    assert torch.equal(predict(model, image, BoundingBox(0, 0, 32, 32)), torch.ones(32, 32))


def test_predict_rejects_bad_prompts():
    model = OracleSegmenter(SegmenterSpec("oracle", input_resolution=32))
    with pytest.raises(InvalidPrompt):
        predict(model, torch.zeros(3, 32, 32), BoundingBox(0, 0, 33, 10))
    with pytest.raises(InvalidPrompt):
        predict(model, torch.zeros(3, 32, 32), [0, 0, 4, 4])


def test_oracle_has_no_parameter_groups():
    with pytest.raises(UnsupportedBackend):
        parameter_groups(OracleSegmenter(SegmenterSpec("oracle")))


def test_surrogate_deterministic_inference():
    model = build_surrogate(SegmenterSpec("surrogate", "B", 64), seed=3)
    image = torch.randn(3, 64, 64, generator=torch.Generator().manual_seed(0))
    box = BoundingBox(8, 8, 40, 50)
    a, b = predict(model, image, box), predict(model, image, box)
    assert torch.equal(a, b)
    assert ((a >= 0) & (a <= 1)).all()


def test_surrogate_seeded_init_is_reproducible_and_isolated():
    spec = SegmenterSpec("surrogate", "S", 32)
    torch.manual_seed(0)
    before = torch.rand(1)
    a, b = build_surrogate(spec, seed=1), build_surrogate(spec, seed=1)
    torch.manual_seed(0)
    assert torch.equal(before, torch.rand(1))
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    c = build_surrogate(spec, seed=2)
    assert not all(torch.equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters()))


def test_surrogate_all_zero_image_finite():
    model = build_surrogate(SegmenterSpec("surrogate", "B", 64))
    for box in (BoundingBox(0, 0, 64, 64), BoundingBox(10, 20, 11, 21), BoundingBox(60, 0, 64, 4)):
        probs = predict(model, torch.zeros(3, 64, 64), box)
        assert torch.isfinite(probs).all()


@pytest.mark.parametrize("variant", ["S", "B", "L"])
def test_surrogate_parameter_groups_partition(variant):
    model = build_surrogate(SegmenterSpec("surrogate", variant, 64))
    groups = parameter_groups(model)
    assert [g.group_id for g in groups] == list(GROUP_IDS)
    assert all(g.parameter_count > 0 and g.trainable for g in groups)
    total = sum(p.numel() for p in model.parameters())
    assert sum(g.parameter_count for g in groups) == total
    assert total <= 2_000_000
    assert parameter_groups(model) == groups


def test_freeze_reflected_in_groups():
    model = build_surrogate(SegmenterSpec("surrogate", "B", 64))
    apply_freeze_policy(model, FreezePolicy(True, True, False))
    flags = {g.group_id: g.trainable for g in parameter_groups(model)}
    assert flags == {"image_encoder": True, "prompt_encoder": True, "mask_decoder": False}


def test_surrogate_forward_speed():
    model = build_surrogate(SegmenterSpec("surrogate", "B", 256)).eval()
    image = torch.randn(1, 3, 256, 256)
    box = [BoundingBox(40, 40, 200, 180)]
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        with torch.no_grad():
            model.forward_logits(image, box)
            times = []
            for _ in range(10):
                start = time.perf_counter()
                model.forward_logits(image, box)
                times.append(time.perf_counter() - start)
    finally:
        torch.set_num_threads(threads)
    assert sorted(times)[len(times) // 2] < 0.050


def test_surrogate_trainability_smoke(rect_root):
    manifest = load_manifest(rect_root, "rects")
    assert len(manifest) == 12
    train_set = manifest
    model = build_surrogate(SegmenterSpec("surrogate", "B", 64), seed=0)
    config = RunConfig(
        train_perturbation=PerturbationPolicy("none", 0),
        epochs=17,  # 12 samples x 17 epochs = 204 steps
        input_resolution=64,
        learning_rate=1e-3,
        freeze=FreezePolicy(True, True, True),
    )
    best, log = train(model, train_set, config, train_set)
    model.load_state_dict(best.weights)
    assert evaluate_at_level(model, train_set, 0) > 90


def test_surrogate_rejects_bad_spec():
    with pytest.raises(ValueError):
        build_surrogate(SegmenterSpec("surrogate", "XL", 64))
    with pytest.raises(ValueError):
        build_surrogate(SegmenterSpec("surrogate", "B", 66))
    with pytest.raises(ValueError):
        SegmenterSpec("mystery")


class _FakePromptEncoder(nn.Module):
    def __init__(self):
        super().__init__()
        self.box_embed = nn.Linear(4, 8)
        self.pe = nn.Parameter(torch.zeros(1, 8, 4, 4))
        self.seen = []

    def forward(self, points, boxes, masks):
        self.seen.append(boxes.clone())
        sparse = self.box_embed(boxes / 64.0)[:, None, :]
        dense = torch.zeros(1, 8, 4, 4)
        return sparse, dense

    def get_dense_pe(self):
        return self.pe


class _FakeMaskDecoder(nn.Module):
    def __init__(self):
        super().__init__()
        self.mix = nn.Conv2d(8, 1, 1)

    def forward(self, image_embeddings, image_pe, sparse_prompt_embeddings, dense_prompt_embeddings, multimask_output):
        assert multimask_output is False
        x = image_embeddings + image_pe + dense_prompt_embeddings + sparse_prompt_embeddings.mean(1)[..., None, None]
        return self.mix(x), torch.zeros(1, 1)


class _FakeSam(nn.Module):
    """Same submodule names and call signatures as the upstream model."""

    def __init__(self):
        super().__init__()
        self.image_encoder = nn.Conv2d(3, 8, 16, stride=16)
        self.prompt_encoder = _FakePromptEncoder()
        self.mask_decoder = _FakeMaskDecoder()


def test_foundation_adapter_with_upstream_interface():
    sam = _FakeSam()
    model = FoundationSegmenter(SegmenterSpec("foundation", "B", 64, checkpoint="x"), sam)
    box = BoundingBox(4, 6, 30, 40)
    probs = predict(model, torch.randn(3, 64, 64), box)
    assert probs.shape == (64, 64)
    assert ((probs >= 0) & (probs <= 1)).all()
    assert sam.prompt_encoder.seen[-1].tolist() == [[4.0, 6.0, 30.0, 40.0]]
    groups = parameter_groups(model)
    assert [g.group_id for g in groups] == list(GROUP_IDS)
    assert sum(g.parameter_count for g in groups) == sum(p.numel() for p in sam.parameters())
    logits = model.forward_logits(torch.randn(2, 3, 64, 64), [box, BoundingBox(0, 0, 64, 64)])
    assert logits.shape == (2, 64, 64)


def test_foundation_needs_checkpoint():
    with pytest.raises(ConfigError):
        build_foundation(SegmenterSpec("foundation", "B", 1024))
    with pytest.raises(ConfigError):
        build_foundation(SegmenterSpec("foundation", "Q", 1024, checkpoint="x"))


def test_foundation_large_encoder_has_more_parameters():
    pytest.importorskip("segment_anything")
    counts = {}
    with torch.device("meta"):
        for variant in ("B", "L"):
            model = build_foundation(SegmenterSpec("foundation", variant, 1024), load_weights=False)
            counts[variant] = {g.group_id: g.parameter_count for g in parameter_groups(model)}
    assert counts["L"]["image_encoder"] > counts["B"]["image_encoder"]
    assert counts["L"]["mask_decoder"] == counts["B"]["mask_decoder"]


def test_checkpoint_round_trip(tmp_path, rect_root):
    manifest = load_manifest(rect_root, "rects")
    spec = SegmenterSpec("surrogate", "S", 64)
    model = build_segmenter(spec, seed=0)
    config = RunConfig(epochs=1, input_resolution=64, learning_rate=1e-3)
    best, _ = train(model, manifest, config, manifest)
    best.save(tmp_path / "c.pt")
    restored, ckpt = load_checkpoint(tmp_path / "c.pt")
    assert ckpt.fingerprint == config.fingerprint()
    assert ckpt.freeze_policy == {
        "image_encoder_trainable": True, "prompt_encoder_trainable": True, "mask_decoder_trainable": False,
    }
    for k, v in restored.state_dict().items():
        assert torch.equal(v, best.weights[k])
