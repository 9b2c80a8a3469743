import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

import numpy as np
import pytest
import torch
from PIL import Image


@pytest.fixture(scope="session")
def tiny_vit_dir(tmp_path_factory):
    """A small ViT with fixed seeded weights, saved and reloaded as a local model."""
    from transformers import ViTConfig, ViTImageProcessor, ViTModel

    path = tmp_path_factory.mktemp("tinyvit")
    config = ViTConfig(
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=37,
        image_size=32,
        patch_size=16,
    )
    torch.manual_seed(0)
    ViTModel(config).save_pretrained(path)
    ViTImageProcessor(do_resize=True, size={"height": 32, "width": 32}).save_pretrained(path)
    return path


@pytest.fixture()
def image_dir(tmp_path):
    """Four distinct images whose names are deliberately not written in order."""
    d = tmp_path / "imgs"
    d.mkdir()
    rng = np.random.default_rng(0)
    for name in ("c.png", "a.png", "d.png", "b.png"):
        arr = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        Image.fromarray(arr).save(d / name)
    return d
