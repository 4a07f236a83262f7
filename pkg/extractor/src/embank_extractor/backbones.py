"""Backbone registry: image batch in, pooled post-ReLU feature batch out.

Every backbone exposes ``feature_dim`` and ``embed(batch) -> (B, feature_dim)``
where ``batch`` is float32 NCHW.  Features are tapped after the network's
final ReLU followed by global average pooling, so a correctly loaded
checkpoint always yields nonnegative vectors; the extraction pipeline
enforces that downstream.

``resnet12`` and ``wrn-28-10`` are the standard few-shot definitions
(widths 64/160/320/640 and depth-28 width-10 respectively, both ending in a
640-wide feature map).  torch is imported lazily so the stub backbone works
without it.
"""

from __future__ import annotations

import numpy as np

FEATURE_DIMS = {"stub": 8, "resnet12": 640, "wrn-28-10": 640}


class StubBackbone:
    """Deterministic torch-free backbone for fixtures and contract tests.

    Averages pixel intensities over 8 horizontal bands of the grayscale
    image; output is in [0, 1]^8 and trivially nonnegative.
    """

    name = "stub"
    feature_dim = FEATURE_DIMS["stub"]

    def embed(self, batch: np.ndarray) -> np.ndarray:
        gray = np.asarray(batch, dtype=np.float64).mean(axis=1)  # (B, H, W)
        bands = np.array_split(gray, self.feature_dim, axis=1)
        feats = np.stack([band.mean(axis=(1, 2)) for band in bands], axis=1)
        return np.maximum(feats, 0.0)


def _torch():
    try:
        import torch
        import torch.nn as nn
    except ImportError as exc:  # pragma: no cover - torch is an extra
        raise RuntimeError(
            "this backbone needs the 'backbones' extra (pip install "
            "embank-extractor[backbones])"
        ) from exc
    return torch, nn


def _resnet12_module():
    torch, nn = _torch()

    class ResBlock(nn.Module):
        def __init__(self, cin, cout):
            super().__init__()
            self.conv1 = nn.Conv2d(cin, cout, 3, padding=1, bias=False)
            self.bn1 = nn.BatchNorm2d(cout)
            self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
            self.bn2 = nn.BatchNorm2d(cout)
            self.conv3 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
            self.bn3 = nn.BatchNorm2d(cout)
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, bias=False), nn.BatchNorm2d(cout)
            )
            self.relu = nn.ReLU(inplace=True)
            self.pool = nn.MaxPool2d(2)

        def forward(self, x):
            out = self.relu(self.bn1(self.conv1(x)))
            out = self.relu(self.bn2(self.conv2(out)))
            out = self.bn3(self.conv3(out))
            out = self.relu(out + self.shortcut(x))
            return self.pool(out)

    class ResNet12(nn.Module):
        feature_dim = FEATURE_DIMS["resnet12"]

        def __init__(self):
            super().__init__()
            widths = (64, 160, 320, 640)
            cin = 3
            blocks = []
            for cout in widths:
                blocks.append(ResBlock(cin, cout))
                cin = cout
            self.blocks = nn.Sequential(*blocks)
            self.avgpool = nn.AdaptiveAvgPool2d(1)

        def forward(self, x):
            # final block ends in ReLU, so pooled features are nonnegative
            return self.avgpool(self.blocks(x)).flatten(1)

    return ResNet12()


def _wrn_28_10_module():
    torch, nn = _torch()

    class PreactBlock(nn.Module):
        def __init__(self, cin, cout, stride):
            super().__init__()
            self.bn1 = nn.BatchNorm2d(cin)
            self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
            self.bn2 = nn.BatchNorm2d(cout)
            self.conv2 = nn.Conv2d(cout, cout, 3, stride=1, padding=1, bias=False)
            self.relu = nn.ReLU(inplace=True)
            self.shortcut = None
            if stride != 1 or cin != cout:
                self.shortcut = nn.Conv2d(cin, cout, 1, stride=stride, bias=False)

        def forward(self, x):
            out = self.relu(self.bn1(x))
            skip = self.shortcut(out) if self.shortcut is not None else x
            out = self.conv2(self.relu(self.bn2(self.conv1(out))))
            return out + skip

    class WideResNet28x10(nn.Module):
        feature_dim = FEATURE_DIMS["wrn-28-10"]

        def __init__(self):
            super().__init__()
            n = (28 - 4) // 6  # blocks per group
            widths = (16, 160, 320, 640)
            self.conv1 = nn.Conv2d(3, widths[0], 3, padding=1, bias=False)
            groups = []
            cin = widths[0]
            for gi, cout in enumerate(widths[1:]):
                for bi in range(n):
                    stride = (1 if gi == 0 else 2) if bi == 0 else 1
                    groups.append(PreactBlock(cin, cout, stride))
                    cin = cout
            self.groups = nn.Sequential(*groups)
            self.bn = nn.BatchNorm2d(widths[-1])
            self.relu = nn.ReLU(inplace=True)
            self.avgpool = nn.AdaptiveAvgPool2d(1)

        def forward(self, x):
            out = self.groups(self.conv1(x))
            # trailing BN + ReLU is the nonnegative feature tap
            return self.avgpool(self.relu(self.bn(out))).flatten(1)

    return WideResNet28x10()


class TorchBackbone:
    """Wraps a torch module so the pipeline sees plain numpy in and out."""

    def __init__(self, name: str, module, device: str = "cpu"):
        torch, _ = _torch()
        self.name = name
        self.feature_dim = module.feature_dim
        self._torch = torch
        self._device = device
        self._module = module.to(device).eval()

    def load_checkpoint(self, path: str) -> None:
        state = self._torch.load(path, map_location=self._device, weights_only=False)
        for key in ("state_dict", "model", "params"):
            if isinstance(state, dict) and key in state and isinstance(state[key], dict):
                state = state[key]
        state = { (k[7:] if k.startswith("module.") else k): v for k, v in state.items() }
        try:
            self._module.load_state_dict(state, strict=True)
        except RuntimeError as exc:
            raise RuntimeError(
                f"checkpoint '{path}' does not match the {self.name} "
                f"architecture: {exc}"
            ) from None
        self._module.eval()

    def embed(self, batch: np.ndarray) -> np.ndarray:
        tensor = self._torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32))
        with self._torch.no_grad():
            feats = self._module(tensor.to(self._device))
        return feats.cpu().numpy().astype(np.float64)


def build_backbone(name: str, device: str = "cpu"):
    """Instantiate a registered backbone by identifier."""
    if name == "stub":
        return StubBackbone()
    if name == "resnet12":
        return TorchBackbone(name, _resnet12_module(), device)
    if name == "wrn-28-10":
        return TorchBackbone(name, _wrn_28_10_module(), device)
    raise ValueError(
        f"unknown backbone '{name}' (expected one of {sorted(FEATURE_DIMS)})"
    )
