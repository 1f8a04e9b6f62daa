"""Configurable-scale CNN backbone zoo.

Six 2D convolutional families, each preserving its defining block type:
residual bottlenecks (ResNet), fire modules (SqueezeNet), dense blocks
(DenseNet), plain conv stacks (VGG), inverted residuals (MobileNet) and
channel-shuffle units (ShuffleNet). A 3D volume of shape (D, H, W) enters
as a D-channel 2D image, so the first convolution takes ``in_channels``
input planes, and every family ends in a 2-logit classifier.

``width_scale`` and ``stage_depths`` shrink a family for desk-scale work;
FULL_PRESETS hold the full-size configurations (ResNet-101, SqueezeNet 1.1,
DenseNet-201, VGG-19, MobileNet V2, ShuffleNet V2). Initialization is a
pure function of the spec: parameters are filled from a numpy generator
seeded with ``init_seed``, fan-in-scaled uniform for conv/linear layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch
from torch import nn

__all__ = ["BackboneFamily", "BackboneSpec", "Backbone", "build_backbone", "full_preset", "FULL_STAGE_DEPTHS"]


class BackboneFamily(str, Enum):
    RESNET = "RESNET"
    SQUEEZENET = "SQUEEZENET"
    DENSENET = "DENSENET"
    VGG = "VGG"
    MOBILENET = "MOBILENET"
    SHUFFLENET = "SHUFFLENET"


# Full-size stage configurations for the named variants.
FULL_STAGE_DEPTHS: dict[BackboneFamily, tuple[int, ...]] = {
    BackboneFamily.RESNET: (3, 4, 23, 3),        # ResNet-101
    BackboneFamily.SQUEEZENET: (2, 2, 2, 2),     # SqueezeNet 1.1
    BackboneFamily.DENSENET: (6, 12, 48, 32),    # DenseNet-201
    BackboneFamily.VGG: (2, 2, 4, 4, 4),         # VGG-19
    BackboneFamily.MOBILENET: (1, 2, 3, 4, 3, 3, 1),  # MobileNet V2
    BackboneFamily.SHUFFLENET: (4, 8, 4),        # ShuffleNet V2 1.0x
}


@dataclass(frozen=True)
class BackboneSpec:
    """Scale and seed description of one backbone."""

    family: BackboneFamily
    in_channels: int
    width_scale: float = 1.0
    stage_depths: tuple[int, ...] | None = None
    num_classes: int = 2
    init_seed: int = 0
    pretrained_source: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", BackboneFamily(self.family))
        if self.stage_depths is not None:
            object.__setattr__(self, "stage_depths", tuple(int(d) for d in self.stage_depths))
        if self.num_classes != 2:
            raise ValueError(f"num_classes is fixed at 2, got {self.num_classes}")
        if self.in_channels < 1:
            raise ValueError(f"in_channels must be >= 1, got {self.in_channels}")
        if not 0.0 < self.width_scale <= 1.0:
            raise ValueError(f"width_scale must be in (0, 1], got {self.width_scale}")
        if self.stage_depths is not None and (
            len(self.stage_depths) == 0 or any(d < 1 for d in self.stage_depths)
        ):
            raise ValueError(f"stage_depths must be nonempty positive ints, got {self.stage_depths}")

    @property
    def depths(self) -> tuple[int, ...]:
        return self.stage_depths if self.stage_depths is not None else FULL_STAGE_DEPTHS[self.family]


def full_preset(family: BackboneFamily, in_channels: int, init_seed: int = 0) -> BackboneSpec:
    """Full-scale named configuration of a family."""
    return BackboneSpec(family=BackboneFamily(family), in_channels=in_channels,
                        width_scale=1.0, stage_depths=FULL_STAGE_DEPTHS[BackboneFamily(family)],
                        init_seed=init_seed)


def _ch(value: float) -> int:
    """Scaled channel count; never collapses to zero."""
    return max(1, int(round(value)))


def _ch_even(value: float) -> int:
    """Scaled even channel count (channel-split units need pairs)."""
    return max(2, 2 * int(round(value / 2.0)))


class Backbone(nn.Module):
    """Base for all families: spec bookkeeping plus input validation.

    Subclasses set ``first_conv_name`` (the input layer whose channel count
    was adapted to the volume depth) and ``final_layer_name`` (the 2-class
    output layer). Stored as dotted paths so the modules are not registered
    twice in the tree.
    """

    first_conv_name: str
    final_layer_name: str

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec

    @property
    def first_conv(self) -> nn.Conv2d:
        return self.get_submodule(self.first_conv_name)

    @property
    def final_layer(self) -> nn.Module:
        return self.get_submodule(self.final_layer_name)

    def check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 4:
            raise ValueError(f"expected a (batch, channels, H, W) tensor, got shape {tuple(x.shape)}")
        if x.shape[1] != self.spec.in_channels:
            raise ValueError(
                f"{self.spec.family.value} expects {self.spec.in_channels} input channels, "
                f"got {x.shape[1]}"
            )


# ---------------------------------------------------------------------------
# ResNet: bottleneck residual blocks
# ---------------------------------------------------------------------------

class _Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, in_ch: int, planes: int, stride: int):
        super().__init__()
        out_ch = planes * self.expansion
        self.conv1 = nn.Conv2d(in_ch, planes, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.conv3 = nn.Conv2d(planes, out_ch, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.downsample = None

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + identity)


class ResNetBackbone(Backbone):
    def __init__(self, spec: BackboneSpec):
        super().__init__(spec)
        base = _ch(64 * spec.width_scale)
        self.stem = nn.Sequential(
            nn.Conv2d(spec.in_channels, base, 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(base),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        stages = []
        in_ch = base
        for i, depth in enumerate(spec.depths):
            planes = _ch(64 * (2 ** i) * spec.width_scale)
            blocks = []
            for b in range(depth):
                stride = 2 if (b == 0 and i > 0) else 1
                blocks.append(_Bottleneck(in_ch, planes, stride))
                in_ch = planes * _Bottleneck.expansion
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.Sequential(*stages)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(in_ch, spec.num_classes)
        self.first_conv_name = "stem.0"
        self.final_layer_name = "fc"

    def forward(self, x):
        self.check_input(x)
        x = self.stages(self.stem(x))
        return self.fc(torch.flatten(self.pool(x), 1))


# ---------------------------------------------------------------------------
# SqueezeNet: fire modules
# ---------------------------------------------------------------------------

class _Fire(nn.Module):
    def __init__(self, in_ch: int, squeeze: int, expand: int):
        super().__init__()
        self.squeeze = nn.Conv2d(in_ch, squeeze, 1)
        self.expand1 = nn.Conv2d(squeeze, expand, 1)
        self.expand3 = nn.Conv2d(squeeze, expand, 3, padding=1)
        self.relu = nn.ReLU(inplace=True)
        self.out_channels = 2 * expand

    def forward(self, x):
        s = self.relu(self.squeeze(x))
        return torch.cat([self.relu(self.expand1(s)), self.relu(self.expand3(s))], dim=1)


class SqueezeNetBackbone(Backbone):
    def __init__(self, spec: BackboneSpec):
        super().__init__(spec)
        stem_ch = _ch(64 * spec.width_scale)
        layers: list[nn.Module] = [
            nn.Conv2d(spec.in_channels, stem_ch, 3, stride=2),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, ceil_mode=True),
        ]
        in_ch = stem_ch
        for i, depth in enumerate(spec.depths):
            squeeze = _ch(16 * (i + 1) * spec.width_scale)
            expand = _ch(64 * (i + 1) * spec.width_scale)
            for _ in range(depth):
                fire = _Fire(in_ch, squeeze, expand)
                layers.append(fire)
                in_ch = fire.out_channels
            if i in (0, 1) and i + 1 < len(spec.depths):
                layers.append(nn.MaxPool2d(3, stride=2, ceil_mode=True))
        self.features = nn.Sequential(*layers)
        self.classifier_conv = nn.Conv2d(in_ch, spec.num_classes, 1)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.first_conv_name = "features.0"
        self.final_layer_name = "classifier_conv"

    def forward(self, x):
        self.check_input(x)
        x = self.classifier_conv(self.features(x))
        return torch.flatten(self.pool(x), 1)


# ---------------------------------------------------------------------------
# DenseNet: dense blocks with concatenated features
# ---------------------------------------------------------------------------

class _DenseLayer(nn.Module):
    def __init__(self, in_ch: int, growth: int):
        super().__init__()
        inter = 4 * growth
        self.norm1 = nn.BatchNorm2d(in_ch)
        self.conv1 = nn.Conv2d(in_ch, inter, 1, bias=False)
        self.norm2 = nn.BatchNorm2d(inter)
        self.conv2 = nn.Conv2d(inter, growth, 3, padding=1, bias=False)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        out = self.conv1(self.relu(self.norm1(x)))
        out = self.conv2(self.relu(self.norm2(out)))
        return torch.cat([x, out], dim=1)


class _Transition(nn.Sequential):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__(
            nn.BatchNorm2d(in_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(in_ch, out_ch, 1, bias=False),
            nn.AvgPool2d(2, stride=2),
        )


class DenseNetBackbone(Backbone):
    def __init__(self, spec: BackboneSpec):
        super().__init__(spec)
        growth = _ch(32 * spec.width_scale)
        feats = 2 * growth
        self.stem = nn.Sequential(
            nn.Conv2d(spec.in_channels, feats, 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(feats),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        blocks: list[nn.Module] = []
        for i, depth in enumerate(spec.depths):
            for _ in range(depth):
                blocks.append(_DenseLayer(feats, growth))
                feats += growth
            if i + 1 < len(spec.depths):
                out = max(1, feats // 2)
                blocks.append(_Transition(feats, out))
                feats = out
        self.blocks = nn.Sequential(*blocks)
        self.final_norm = nn.BatchNorm2d(feats)
        self.relu = nn.ReLU(inplace=True)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(feats, spec.num_classes)
        self.first_conv_name = "stem.0"
        self.final_layer_name = "fc"

    def forward(self, x):
        self.check_input(x)
        x = self.relu(self.final_norm(self.blocks(self.stem(x))))
        return self.fc(torch.flatten(self.pool(x), 1))


# ---------------------------------------------------------------------------
# VGG: plain 3x3 conv stacks
# ---------------------------------------------------------------------------

class VGGBackbone(Backbone):
    def __init__(self, spec: BackboneSpec):
        super().__init__(spec)
        layers: list[nn.Module] = []
        in_ch = spec.in_channels
        width = in_ch
        for i, depth in enumerate(spec.depths):
            width = _ch(64 * (2 ** min(i, 3)) * spec.width_scale)
            for _ in range(depth):
                layers += [nn.Conv2d(in_ch, width, 3, padding=1), nn.ReLU(inplace=True)]
                in_ch = width
            layers.append(nn.MaxPool2d(2, stride=2, ceil_mode=True))
        self.features = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(7)
        hidden = _ch(4096 * spec.width_scale)
        self.classifier = nn.Sequential(
            nn.Linear(width * 7 * 7, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, spec.num_classes),
        )
        self.first_conv_name = "features.0"
        self.final_layer_name = "classifier.4"

    def forward(self, x):
        self.check_input(x)
        x = self.pool(self.features(x))
        return self.classifier(torch.flatten(x, 1))


# ---------------------------------------------------------------------------
# MobileNet V2: inverted residuals with linear bottlenecks
# ---------------------------------------------------------------------------

# (expansion factor, base channels, first-block stride) per stage
_MOBILENET_TABLE = ((1, 16, 1), (6, 24, 2), (6, 32, 2), (6, 64, 2),
                    (6, 96, 1), (6, 160, 2), (6, 320, 1))


class _ConvBNReLU6(nn.Sequential):
    def __init__(self, in_ch, out_ch, kernel, stride=1, groups=1):
        super().__init__(
            nn.Conv2d(in_ch, out_ch, kernel, stride=stride,
                      padding=kernel // 2, groups=groups, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU6(inplace=True),
        )


class _InvertedResidual(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int, expand: int):
        super().__init__()
        hidden = in_ch * expand
        self.use_residual = stride == 1 and in_ch == out_ch
        layers: list[nn.Module] = []
        if expand != 1:
            layers.append(_ConvBNReLU6(in_ch, hidden, 1))
        layers += [
            _ConvBNReLU6(hidden, hidden, 3, stride=stride, groups=hidden),
            nn.Conv2d(hidden, out_ch, 1, bias=False),
            nn.BatchNorm2d(out_ch),
        ]
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        out = self.block(x)
        return x + out if self.use_residual else out


class MobileNetBackbone(Backbone):
    def __init__(self, spec: BackboneSpec):
        super().__init__(spec)
        if len(spec.depths) > len(_MOBILENET_TABLE):
            raise ValueError(
                f"MOBILENET supports at most {len(_MOBILENET_TABLE)} stages, got {len(spec.depths)}"
            )
        stem_ch = _ch(32 * spec.width_scale)
        layers: list[nn.Module] = [_ConvBNReLU6(spec.in_channels, stem_ch, 3, stride=2)]
        in_ch = stem_ch
        for (expand, base, stride), depth in zip(_MOBILENET_TABLE, spec.depths):
            out_ch = _ch(base * spec.width_scale)
            for b in range(depth):
                layers.append(_InvertedResidual(in_ch, out_ch, stride if b == 0 else 1, expand))
                in_ch = out_ch
        head_ch = _ch(1280 * spec.width_scale)
        layers.append(_ConvBNReLU6(in_ch, head_ch, 1))
        self.features = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(head_ch, spec.num_classes)
        self.first_conv_name = "features.0.0"
        self.final_layer_name = "fc"

    def forward(self, x):
        self.check_input(x)
        x = self.features(x)
        return self.fc(torch.flatten(self.pool(x), 1))


# ---------------------------------------------------------------------------
# ShuffleNet V2: channel split + shuffle units
# ---------------------------------------------------------------------------

def _channel_shuffle(x: torch.Tensor, groups: int) -> torch.Tensor:
    b, c, h, w = x.shape
    x = x.view(b, groups, c // groups, h, w).transpose(1, 2).contiguous()
    return x.view(b, c, h, w)


class _ShuffleUnit(nn.Module):
    """Stride-1 unit: split channels, transform one half, shuffle."""

    def __init__(self, channels: int):
        super().__init__()
        half = channels // 2
        self.branch = nn.Sequential(
            nn.Conv2d(half, half, 1, bias=False),
            nn.BatchNorm2d(half),
            nn.ReLU(inplace=True),
            nn.Conv2d(half, half, 3, padding=1, groups=half, bias=False),
            nn.BatchNorm2d(half),
            nn.Conv2d(half, half, 1, bias=False),
            nn.BatchNorm2d(half),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        x1, x2 = x.chunk(2, dim=1)
        return _channel_shuffle(torch.cat([x1, self.branch(x2)], dim=1), 2)


class _ShuffleDownUnit(nn.Module):
    """Stride-2 unit: both branches downsample, channels change."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        half = out_ch // 2
        self.branch1 = nn.Sequential(
            nn.Conv2d(in_ch, in_ch, 3, stride=2, padding=1, groups=in_ch, bias=False),
            nn.BatchNorm2d(in_ch),
            nn.Conv2d(in_ch, half, 1, bias=False),
            nn.BatchNorm2d(half),
            nn.ReLU(inplace=True),
        )
        self.branch2 = nn.Sequential(
            nn.Conv2d(in_ch, half, 1, bias=False),
            nn.BatchNorm2d(half),
            nn.ReLU(inplace=True),
            nn.Conv2d(half, half, 3, stride=2, padding=1, groups=half, bias=False),
            nn.BatchNorm2d(half),
            nn.Conv2d(half, half, 1, bias=False),
            nn.BatchNorm2d(half),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return _channel_shuffle(torch.cat([self.branch1(x), self.branch2(x)], dim=1), 2)


class ShuffleNetBackbone(Backbone):
    def __init__(self, spec: BackboneSpec):
        super().__init__(spec)
        stem_ch = _ch(24 * spec.width_scale)
        self.stem = nn.Sequential(
            nn.Conv2d(spec.in_channels, stem_ch, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(stem_ch),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        stages = []
        in_ch = stem_ch
        for i, depth in enumerate(spec.depths):
            out_ch = _ch_even(116 * (2 ** i) * spec.width_scale)
            units: list[nn.Module] = [_ShuffleDownUnit(in_ch, out_ch)]
            units += [_ShuffleUnit(out_ch) for _ in range(depth - 1)]
            stages.append(nn.Sequential(*units))
            in_ch = out_ch
        self.stages = nn.Sequential(*stages)
        head_ch = _ch(1024 * spec.width_scale)
        self.head = nn.Sequential(
            nn.Conv2d(in_ch, head_ch, 1, bias=False),
            nn.BatchNorm2d(head_ch),
            nn.ReLU(inplace=True),
        )
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(head_ch, spec.num_classes)
        self.first_conv_name = "stem.0"
        self.final_layer_name = "fc"

    def forward(self, x):
        self.check_input(x)
        x = self.head(self.stages(self.stem(x)))
        return self.fc(torch.flatten(self.pool(x), 1))


# ---------------------------------------------------------------------------
# Construction and seeded initialization
# ---------------------------------------------------------------------------

_BUILDERS = {
    BackboneFamily.RESNET: ResNetBackbone,
    BackboneFamily.SQUEEZENET: SqueezeNetBackbone,
    BackboneFamily.DENSENET: DenseNetBackbone,
    BackboneFamily.VGG: VGGBackbone,
    BackboneFamily.MOBILENET: MobileNetBackbone,
    BackboneFamily.SHUFFLENET: ShuffleNetBackbone,
}


def _fan_in(module: nn.Module) -> int:
    if isinstance(module, nn.Conv2d):
        return module.in_channels // module.groups * module.kernel_size[0] * module.kernel_size[1]
    if isinstance(module, nn.Linear):
        return module.in_features
    raise TypeError(f"no fan-in rule for {type(module).__name__}")


def seeded_init_(module: nn.Module, seed: int) -> None:
    """Overwrite all parameters deterministically from one seed.

    Conv/linear weights and biases draw uniform from +/- 1/sqrt(fan_in);
    batch-norm resets to weight 1, bias 0, running stats (0, 1). Traversal
    follows module definition order, so equal graphs get equal values.
    """
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                bound = 1.0 / math.sqrt(_fan_in(m))
                for tensor in (m.weight, m.bias):
                    if tensor is None:
                        continue
                    values = rng.uniform(-bound, bound, size=tuple(tensor.shape))
                    tensor.copy_(torch.from_numpy(values).to(tensor.dtype))
            elif isinstance(m, nn.BatchNorm2d):
                m.weight.fill_(1.0)
                m.bias.fill_(0.0)
                m.running_mean.fill_(0.0)
                m.running_var.fill_(1.0)
                m.num_batches_tracked.fill_(0)


def build_backbone(spec: BackboneSpec) -> Backbone:
    """Construct a family topology and give it seeded parameters."""
    try:
        builder = _BUILDERS[BackboneFamily(spec.family)]
    except (ValueError, KeyError):
        raise ValueError(f"unknown backbone family: {spec.family!r}") from None
    model = builder(spec)
    seeded_init_(model, spec.init_seed)
    if not all(torch.isfinite(p).all() for p in model.parameters()):
        raise RuntimeError("non-finite parameter after initialization")
    return model
