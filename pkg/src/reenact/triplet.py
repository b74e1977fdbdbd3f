"""Triplet perceptual loss: feature extractor, distance, hinge, sampling.

The triplet pulls together two generations that share the reference
identity (different expressions) and pushes away a generation of another
identity under the anchor's expression, measured in a perceptual feature
space. This forces the generator to read appearance from the reference
image instead of memorizing it from the landmark channel.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from reenact.converter import LandmarkConverter, convert
from reenact.data import FaceDataset, SampleKey
from reenact.errors import ConfigurationError, StructuralError
from reenact.images import FaceImage
from reenact.landmarks import Landmark, LandmarkImage, rasterize

EXTRACTOR_FORMAT_VERSION = 1
DEFAULT_MARGIN = 0.3


class PixelFeatureExtractor(nn.Module):
    """Identity-on-pixels stub: features are the flattened image.

    With it, the perceptual distance equals the plain pixel-space L2 norm,
    which makes the triplet math checkable against brute force. Set
    ``normalize=True`` to divide by sqrt(dim) as the conv extractor does.
    """

    def __init__(self, normalize: bool = False):
        super().__init__()
        self.normalize = normalize

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        feats = images.flatten(start_dim=1)
        if self.normalize:
            feats = feats / feats.shape[1] ** 0.5
        return feats


class ConvFeatureExtractor(nn.Module):
    """Fixed convolutional feature network (VGG-style truncated stack).

    Features are scaled by 1/sqrt(dim) so the triplet margin keeps one
    meaning whatever the stage. Parameters are frozen; weights come from a
    versioned file (or a seeded random init for self-contained runs).
    """

    def __init__(self, channels: tuple[int, ...] = (32, 64, 128), stage: int = 3):
        super().__init__()
        if not 1 <= stage <= len(channels):
            raise ConfigurationError(f"extractor stage must be in [1, {len(channels)}]")
        self.channels = tuple(channels)
        self.stage = stage
        layers: list[nn.Module] = []
        cin = 3
        for c in channels[:stage]:
            layers += [nn.Conv2d(cin, c, 3, 1, 1), nn.ReLU(inplace=True), nn.AvgPool2d(2)]
            cin = c
        self.net = nn.Sequential(*layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        feats = self.net(images).flatten(start_dim=1)
        return feats / feats.shape[1] ** 0.5

    def save(self, path: str | Path) -> None:
        torch.save(
            {
                "format_version": EXTRACTOR_FORMAT_VERSION,
                "channels": self.channels,
                "stage": self.stage,
                "state": self.state_dict(),
            },
            path,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ConvFeatureExtractor":
        doc = torch.load(path, weights_only=True)
        if doc.get("format_version") != EXTRACTOR_FORMAT_VERSION:
            raise StructuralError(f"unsupported extractor format: {doc.get('format_version')!r}")
        ext = cls(tuple(doc["channels"]), doc["stage"])
        ext.load_state_dict(doc["state"])
        return ext

    @classmethod
    def random_init(cls, seed: int, channels: tuple[int, ...] = (32, 64, 128), stage: int = 3):
        gen = torch.Generator().manual_seed(seed)
        ext = cls(channels, stage)
        for p in ext.parameters():
            with torch.no_grad():
                p.copy_(torch.randn(p.shape, generator=gen) * 0.1)
        return ext


def build_extractor(spec: str, seed: int = 0) -> nn.Module:
    """'pixel', 'pixel-scaled', 'random', or a path to a saved extractor."""
    if spec == "pixel":
        return PixelFeatureExtractor()
    if spec == "pixel-scaled":
        return PixelFeatureExtractor(normalize=True)
    if spec == "random":
        return ConvFeatureExtractor.random_init(seed)
    return ConvFeatureExtractor.load(spec)


def perceptual_distance(a: torch.Tensor, b: torch.Tensor, extractor: nn.Module) -> torch.Tensor:
    """Euclidean distance between feature vectors; batched inputs give a vector."""
    single = a.dim() == 3
    if single:
        a, b = a.unsqueeze(0), b.unsqueeze(0)
    d = torch.linalg.vector_norm(extractor(a) - extractor(b), dim=1)
    return d[0] if single else d


def tp_loss(
    anchor: torch.Tensor,
    positive: torch.Tensor,
    negative: torch.Tensor,
    extractor: nn.Module,
    margin: float = DEFAULT_MARGIN,
) -> torch.Tensor:
    """Hinge [margin + d(a, p) - d(a, n)]_+ , averaged over any batch dim."""
    if margin < 0:
        raise ConfigurationError(f"margin must be non-negative, got {margin}")
    d_ap = perceptual_distance(anchor, positive, extractor)
    d_an = perceptual_distance(anchor, negative, extractor)
    return torch.relu(margin + d_ap - d_an).mean()


@dataclass(frozen=True)
class TripletSpec:
    """Generator inputs for the three triplet roles.

    anchor:   target identity T, expression n2, reference image (T, n1);
    positive: T, expression n3 != n2, reference image (T, n2);
    negative: other identity R, anchor's expression n2, reference (R, n3).
    All landmark images come out of the (frozen) converter.
    """

    anchor_inputs: tuple[LandmarkImage, FaceImage]
    positive_inputs: tuple[LandmarkImage, FaceImage]
    negative_inputs: tuple[LandmarkImage, FaceImage]
    target: str
    other: str
    n1: str
    n2: str
    n3: str
    pose: str

    def check_roles(self) -> None:
        assert self.target != self.other
        assert self.n2 != self.n3


def sample_triplet(
    dataset: FaceDataset,
    converter: LandmarkConverter,
    rng: random.Random,
) -> TripletSpec:
    """Draw a triplet per the role scheme; the converter supplies landmarks.

    The anchor's and negative's landmarks both carry expression n2,
    converted onto the two identities from each other's records, so only
    the reference image separates them.
    """
    if len(dataset.identities) < 2:
        raise ConfigurationError(
            f"triplet sampling needs >= 2 identities, dataset has {len(dataset.identities)}"
        )
    if len(dataset.expressions) < 2:
        raise ConfigurationError(
            f"triplet sampling needs >= 2 expressions, dataset has {len(dataset.expressions)}"
        )
    target, other = rng.sample(dataset.identities, 2)
    n1 = rng.choice(dataset.expressions)
    n2, n3 = rng.sample(dataset.expressions, 2)
    pose = rng.choice(dataset.poses)

    t_ref = dataset.landmark(dataset.reference_key(target, pose))
    r_ref = dataset.landmark(dataset.reference_key(other, pose))
    grouping = dataset.grouping

    def lm_image(target_ref: Landmark, source_key: SampleKey) -> LandmarkImage:
        converted = convert(target_ref, dataset.landmark(source_key), converter)
        return rasterize(converted, grouping=grouping)

    anchor = (
        lm_image(t_ref, SampleKey(other, n2, pose)),
        dataset.image(SampleKey(target, n1, pose)),
    )
    positive = (
        lm_image(t_ref, SampleKey(other, n3, pose)),
        dataset.image(SampleKey(target, n2, pose)),
    )
    negative = (
        lm_image(r_ref, SampleKey(target, n2, pose)),
        dataset.image(SampleKey(other, n3, pose)),
    )
    return TripletSpec(
        anchor_inputs=anchor,
        positive_inputs=positive,
        negative_inputs=negative,
        target=target,
        other=other,
        n1=n1,
        n2=n2,
        n3=n3,
        pose=pose,
    )
