"""Two-level ensembles over the backbone zoo.

Model 1 consumes the whole-brain volume with one backbone from each of the
six families; their 2-logit outputs are concatenated (12 values, canonical
family order) and fused by a ReLU + linear layer into the final 2 logits.

Model 2 consumes the grey- and white-matter volumes separately: ShuffleNet
and SqueezeNet read GM, DenseNet and MobileNet read WM, and the fusion
layer maps the 8 concatenated logits to 2.

Volumes enter depth-as-channels: a (D, H, W) array becomes a D-channel
H x W image, so each ensemble is built for fixed input dims and refuses
anything else.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .backbones import Backbone, BackboneFamily, BackboneSpec, build_backbone, seeded_init_
from .seeding import derive_seed
from .weights import load_tensors, save_tensors

__all__ = [
    "MODEL1_FAMILIES", "MODEL2_GM_FAMILIES", "MODEL2_WM_FAMILIES",
    "FusionHead", "EnsembleModel1", "EnsembleModel2",
    "default_model1_specs", "default_model2_specs",
    "build_model1", "build_model2",
    "softmax_probabilities", "volumes_to_tensor", "predict_proba",
    "save_checkpoint", "load_checkpoint",
]

# Canonical concatenation order of the whole-brain ensemble.
MODEL1_FAMILIES = (BackboneFamily.RESNET, BackboneFamily.SQUEEZENET, BackboneFamily.DENSENET,
                   BackboneFamily.VGG, BackboneFamily.MOBILENET, BackboneFamily.SHUFFLENET)
MODEL2_GM_FAMILIES = (BackboneFamily.SHUFFLENET, BackboneFamily.SQUEEZENET)
MODEL2_WM_FAMILIES = (BackboneFamily.DENSENET, BackboneFamily.MOBILENET)


class FusionHead(nn.Module):
    """ReLU over concatenated member logits, then one linear layer to 2."""

    def __init__(self, in_features: int, seed: int):
        super().__init__()
        self.relu = nn.ReLU(inplace=False)
        self.linear = nn.Linear(in_features, 2)
        seeded_init_(self, seed)

    def forward(self, z):
        return self.linear(self.relu(z))


def _check_volume_batch(x: torch.Tensor, dims: tuple[int, int, int], what: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{what}: expected (batch, D, H, W), got shape {tuple(x.shape)}")
    if tuple(x.shape[1:]) != tuple(dims):
        raise ValueError(f"{what}: expected volume dims {tuple(dims)}, got {tuple(x.shape[1:])}")


class EnsembleModel1(nn.Module):
    """Six-family ensemble over the whole-brain volume."""

    kind = "model1"

    def __init__(self, backbones: list[Backbone], input_dims: tuple[int, int, int], fusion_seed: int):
        super().__init__()
        self.input_dims = tuple(int(d) for d in input_dims)
        self.fusion_seed = int(fusion_seed)
        self.backbones = nn.ModuleList(backbones)
        self.fusion = FusionHead(2 * len(backbones), self.fusion_seed)

    @property
    def member_specs(self) -> tuple[BackboneSpec, ...]:
        return tuple(b.spec for b in self.backbones)

    def forward(self, whole: torch.Tensor) -> torch.Tensor:
        _check_volume_batch(whole, self.input_dims, "model 1 input")
        member_logits = [b(whole) for b in self.backbones]
        return self.fusion(torch.cat(member_logits, dim=1))


class EnsembleModel2(nn.Module):
    """Tissue ensemble: two backbones on GM, two on WM."""

    kind = "model2"

    def __init__(self, gm_backbones: list[Backbone], wm_backbones: list[Backbone],
                 input_dims: tuple[int, int, int], fusion_seed: int):
        super().__init__()
        self.input_dims = tuple(int(d) for d in input_dims)
        self.fusion_seed = int(fusion_seed)
        self.gm_backbones = nn.ModuleList(gm_backbones)
        self.wm_backbones = nn.ModuleList(wm_backbones)
        self.fusion = FusionHead(2 * (len(gm_backbones) + len(wm_backbones)), self.fusion_seed)

    @property
    def member_specs(self) -> tuple[BackboneSpec, ...]:
        return tuple(b.spec for b in [*self.gm_backbones, *self.wm_backbones])

    def forward(self, gm: torch.Tensor, wm: torch.Tensor) -> torch.Tensor:
        _check_volume_batch(gm, self.input_dims, "model 2 GM input")
        _check_volume_batch(wm, self.input_dims, "model 2 WM input")
        if gm.shape[0] != wm.shape[0]:
            raise ValueError(f"GM and WM batches differ: {gm.shape[0]} vs {wm.shape[0]}")
        member_logits = [b(gm) for b in self.gm_backbones] + [b(wm) for b in self.wm_backbones]
        return self.fusion(torch.cat(member_logits, dim=1))


def default_model1_specs(input_dims: tuple[int, int, int], width_scale: float = 1.0,
                         stage_depths: tuple[int, ...] | None = None,
                         init_seed: int = 0) -> tuple[BackboneSpec, ...]:
    """One spec per family, with per-member seeds derived from one seed."""
    return tuple(
        BackboneSpec(family=fam, in_channels=input_dims[0], width_scale=width_scale,
                     stage_depths=stage_depths, init_seed=derive_seed(init_seed, "member", fam.value))
        for fam in MODEL1_FAMILIES
    )


def default_model2_specs(input_dims: tuple[int, int, int], width_scale: float = 1.0,
                         stage_depths: tuple[int, ...] | None = None,
                         init_seed: int = 0) -> tuple[tuple[BackboneSpec, ...], tuple[BackboneSpec, ...]]:
    """(GM specs, WM specs) with per-member derived seeds."""
    def spec(fam, modality):
        return BackboneSpec(family=fam, in_channels=input_dims[0], width_scale=width_scale,
                            stage_depths=stage_depths,
                            init_seed=derive_seed(init_seed, "member", modality, fam.value))
    gm = tuple(spec(fam, "GM") for fam in MODEL2_GM_FAMILIES)
    wm = tuple(spec(fam, "WM") for fam in MODEL2_WM_FAMILIES)
    return gm, wm


def _validate_specs(specs, input_dims, expected_families, what: str) -> list[BackboneSpec]:
    families = tuple(s.family for s in specs)
    if sorted(f.value for f in families) != sorted(f.value for f in expected_families):
        raise ValueError(
            f"{what} requires exactly the families {[f.value for f in expected_families]}, "
            f"got {[f.value for f in families]}"
        )
    for s in specs:
        if s.in_channels != input_dims[0]:
            raise ValueError(
                f"{what}: spec for {s.family.value} has in_channels={s.in_channels}, "
                f"but volume depth is {input_dims[0]}"
            )
    # store members in canonical order regardless of the order given
    by_family = {s.family: s for s in specs}
    return [by_family[f] for f in expected_families]


def build_model1(specs, input_dims: tuple[int, int, int], fusion_seed: int) -> EnsembleModel1:
    """Assemble the six-family whole-brain ensemble.

    ``specs`` must contain one spec per family (any order); members are
    stored and fused in canonical order.
    """
    ordered = _validate_specs(specs, input_dims, MODEL1_FAMILIES, "model 1")
    return EnsembleModel1([build_backbone(s) for s in ordered], input_dims, fusion_seed)


def build_model2(gm_specs, wm_specs, input_dims: tuple[int, int, int], fusion_seed: int) -> EnsembleModel2:
    """Assemble the tissue ensemble from its fixed GM and WM families."""
    gm = _validate_specs(gm_specs, input_dims, MODEL2_GM_FAMILIES, "model 2 GM branch")
    wm = _validate_specs(wm_specs, input_dims, MODEL2_WM_FAMILIES, "model 2 WM branch")
    return EnsembleModel2([build_backbone(s) for s in gm], [build_backbone(s) for s in wm],
                          input_dims, fusion_seed)


def softmax_probabilities(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis, in float64."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def volumes_to_tensor(arrays: np.ndarray) -> torch.Tensor:
    """(B, D, H, W) or single (D, H, W) float array -> float32 batch tensor."""
    arr = np.asarray(arrays, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ValueError(f"expected a 3D volume or a batch of them, got shape {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr))


def predict_proba(model: nn.Module, *arrays: np.ndarray) -> np.ndarray:
    """Class probabilities for numpy volume batches, rows summing to one."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            logits = model(*[volumes_to_tensor(a) for a in arrays])
    finally:
        model.train(was_training)
    return softmax_probabilities(logits.cpu().numpy())


def _spec_to_meta(spec: BackboneSpec) -> dict:
    return {"family": spec.family.value, "in_channels": spec.in_channels,
            "width_scale": spec.width_scale, "stage_depths": list(spec.depths),
            "num_classes": spec.num_classes, "init_seed": spec.init_seed,
            "pretrained_source": spec.pretrained_source}


def _spec_from_meta(entry: dict) -> BackboneSpec:
    return BackboneSpec(family=BackboneFamily(entry["family"]), in_channels=int(entry["in_channels"]),
                        width_scale=float(entry["width_scale"]),
                        stage_depths=tuple(int(d) for d in entry["stage_depths"]),
                        num_classes=int(entry["num_classes"]), init_seed=int(entry["init_seed"]),
                        pretrained_source=entry.get("pretrained_source"))


def save_checkpoint(model: EnsembleModel1 | EnsembleModel2, path) -> None:
    """Write an ensemble (all weights, stats, construction recipe) to disk."""
    meta = {"kind": model.kind, "input_dims": list(model.input_dims),
            "fusion_seed": model.fusion_seed}
    if isinstance(model, EnsembleModel1):
        meta["specs"] = [_spec_to_meta(s) for s in model.member_specs]
    else:
        meta["gm_specs"] = [_spec_to_meta(b.spec) for b in model.gm_backbones]
        meta["wm_specs"] = [_spec_to_meta(b.spec) for b in model.wm_backbones]
    tensors = {name: t.detach().cpu().numpy() for name, t in model.state_dict().items()
               if not name.endswith("num_batches_tracked")}
    save_tensors(path, tensors, meta)


def load_checkpoint(path) -> EnsembleModel1 | EnsembleModel2:
    """Rebuild an ensemble from a checkpoint; forwards match the saved model."""
    tensors, meta = load_tensors(path)
    dims = tuple(int(d) for d in meta["input_dims"])
    if meta["kind"] == "model1":
        model = build_model1([_spec_from_meta(e) for e in meta["specs"]], dims, meta["fusion_seed"])
    elif meta["kind"] == "model2":
        model = build_model2([_spec_from_meta(e) for e in meta["gm_specs"]],
                             [_spec_from_meta(e) for e in meta["wm_specs"]],
                             dims, meta["fusion_seed"])
    else:
        raise ValueError(f"unknown checkpoint kind: {meta.get('kind')!r}")
    with torch.no_grad():
        for name, tensor in model.state_dict().items():
            if name.endswith("num_batches_tracked"):
                continue
            if name not in tensors:
                raise ValueError(f"checkpoint is missing tensor {name!r}")
            tensor.copy_(torch.from_numpy(np.ascontiguousarray(tensors[name])).to(tensor.dtype))
    return model
