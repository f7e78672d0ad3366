"""Model variants: shapes, sizes, structure, determinism."""

import pytest
import torch

from gradeharness.errors import ConfigError
from gradeharness.models import (BasicBlock3d, ResNet34_3d, build_model,
                                 parameter_count)


def test_toy_logits_shape():
    model = build_model(2, "toy")
    model.eval()
    with torch.no_grad():
        out = model(torch.zeros(1, 2, 32, 32, 8))
    assert out.shape == (1, 2)


def test_toy_parameter_budget():
    assert parameter_count(build_model(2, "toy")) < 1_000_000


def test_toy_survives_tiny_cubes():
    # pooling must not collapse a 1-deep axis to zero
    model = build_model(1, "toy")
    model.eval()
    with torch.no_grad():
        out = model(torch.zeros(2, 1, 8, 8, 4))
    assert out.shape == (2, 2)


def test_resnet34_3d_logits_shape_full_size():
    model = build_model(2, "resnet34-3d")
    model.eval()
    with torch.no_grad():
        out = model(torch.zeros(1, 2, 224, 224, 25))
    assert out.shape == (1, 2)


def test_resnet34_3d_structure():
    model = build_model(2, "resnet34-3d")
    blocks = [m for m in model.modules() if isinstance(m, BasicBlock3d)]
    assert len(blocks) == 16
    assert ResNet34_3d.STAGE_BLOCKS == (3, 4, 6, 3)
    # stem conv + 2 convs per block + linear head = the 34 weight layers
    assert 1 + 2 * len(blocks) + 1 == 34
    widths = [b.conv1.out_channels for b in blocks]
    assert widths == [64] * 3 + [128] * 4 + [256] * 6 + [512] * 3


def test_build_model_validation():
    with pytest.raises(ConfigError) as exc:
        build_model(0, "toy")
    assert exc.value.tag == "model.channels"
    with pytest.raises(ConfigError) as exc:
        build_model(2, "resnet50-3d")
    assert exc.value.tag == "model.variant"


def test_init_is_deterministic_given_seed():
    torch.manual_seed(11)
    a = build_model(2, "toy")
    torch.manual_seed(11)
    b = build_model(2, "toy")
    for (na, pa), (nb, pb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert na == nb
        assert torch.equal(pa, pb)
