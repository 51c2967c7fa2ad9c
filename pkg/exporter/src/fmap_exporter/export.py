"""Export VGG16 convolution activations for one image as an FMAP container.

The thirteen convolution outputs are captured before each in-place ReLU so
the stored maps are the raw filter responses. Maps keep the network's native
spatial grid; the container header records the original image size so
consumers can decide how to upsample.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torchvision.models import VGG16_Weights, vgg16

from .container import TensorRecord, write_container
from .errors import ImageReadError, WeightLoadError

# Standard ImageNet statistics applied after scaling pixels to [0, 1].
NORMALIZE_MEAN = (0.485, 0.456, 0.406)
NORMALIZE_STD = (0.229, 0.224, 0.225)

# Each entry is the VGG16 block a convolution belongs to, conv1 through conv13.
CONV_BLOCKS = (1, 1, 2, 2, 3, 3, 3, 4, 4, 4, 5, 5, 5)

# Five max-pools halve the grid; anything smaller than this collapses to
# nothing before the deepest convolutions run.
MIN_SIDE = 16


@dataclass(frozen=True)
class ExportManifest:
    """What was exported and exactly how the input was prepared."""

    image_path: str
    output_path: str
    source_id: str
    image_width: int
    image_height: int
    fed_width: int
    fed_height: int
    max_side: int | None
    resize_policy: str
    model: str
    weights: str
    weights_hash: str
    tensor_count: int
    normalization: dict = field(
        default_factory=lambda: {
            "divisor": 255.0,
            "mean": list(NORMALIZE_MEAN),
            "std": list(NORMALIZE_STD),
        }
    )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def _load_model(weights: str, seed: int) -> torch.nn.Module:
    if weights == "pretrained":
        try:
            model = vgg16(weights=VGG16_Weights.IMAGENET1K_V1)
        except Exception as exc:
            raise WeightLoadError(f"could not load pretrained weights: {exc}") from exc
    elif weights == "random":
        torch.manual_seed(seed)
        model = vgg16(weights=None)
    else:
        raise ValueError(f"weights must be 'pretrained' or 'random', got {weights!r}")
    features = model.features
    features.eval()
    return features


def _weights_digest(features: torch.nn.Module) -> str:
    digest = hashlib.sha256()
    for name, tensor in sorted(features.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def _read_image(image_path: str, max_side: int | None):
    try:
        with Image.open(image_path) as img:
            rgb = img.convert("RGB")
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise ImageReadError(f"cannot read image {image_path}: {exc}") from exc
    width, height = rgb.size
    if min(width, height) < MIN_SIDE:
        raise ImageReadError(
            f"image {image_path} is {width}x{height}; both sides must be "
            f"at least {MIN_SIDE} pixels"
        )
    fed = rgb
    policy = "none"
    if max_side is not None and max(width, height) > max_side:
        scale = max_side / max(width, height)
        new_w = max(MIN_SIDE, round(width * scale))
        new_h = max(MIN_SIDE, round(height * scale))
        fed = rgb.resize((new_w, new_h), Image.BILINEAR)
        policy = "pil-bilinear"
    return fed, (width, height), policy


def _prepare_tensor(image: Image.Image) -> torch.Tensor:
    arr = np.asarray(image, dtype=np.float32) / 255.0
    arr = (arr - np.array(NORMALIZE_MEAN, dtype=np.float32)) / np.array(
        NORMALIZE_STD, dtype=np.float32
    )
    # HWC -> NCHW
    return torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0)


def _capture_conv_outputs(
    features: torch.nn.Module, batch: torch.Tensor
) -> list[np.ndarray]:
    captured: list[np.ndarray] = []
    torch.set_num_threads(1)
    with torch.no_grad():
        x = batch
        for layer in features:
            x = layer(x)
            if isinstance(layer, torch.nn.Conv2d):
                captured.append(x[0].detach().cpu().numpy().astype(np.float32))
    return captured


def export(
    image_path: str,
    out_path: str,
    max_side: int | None = None,
    weights: str = "pretrained",
    seed: int = 0,
) -> ExportManifest:
    """Run the image through VGG16 and write the activation container."""
    fed, (orig_w, orig_h), policy = _read_image(image_path, max_side)
    features = _load_model(weights, seed)
    maps = _capture_conv_outputs(features, _prepare_tensor(fed))
    if len(maps) != len(CONV_BLOCKS):
        raise WeightLoadError(
            f"expected {len(CONV_BLOCKS)} convolution layers, found {len(maps)}"
        )
    tensors = [
        TensorRecord(
            name=f"vgg16_conv{i}",
            block_index=CONV_BLOCKS[i - 1],
            layer_index=i,
            array=arr,
        )
        for i, arr in enumerate(maps, start=1)
    ]
    source_id = Path(image_path).stem
    write_container(
        out_path,
        source_id=source_id,
        image_width=orig_w,
        image_height=orig_h,
        tensors=tensors,
    )
    return ExportManifest(
        image_path=str(image_path),
        output_path=str(out_path),
        source_id=source_id,
        image_width=orig_w,
        image_height=orig_h,
        fed_width=fed.size[0],
        fed_height=fed.size[1],
        max_side=max_side,
        resize_policy=policy,
        model="vgg16",
        weights=weights,
        weights_hash=_weights_digest(features),
        tensor_count=len(tensors),
    )
