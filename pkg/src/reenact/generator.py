"""Geometry-aware face generator and its training losses.

The generator fuses an appearance path (reference face image) with a
geometry path (rasterized landmark image). Three residual-block groups
transform the fused features, each group re-reading the landmark encoding
so geometry survives to the output. A PatchGAN discriminator scores
realism per image patch.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from reenact.config import GagLossWeights, GagModelConfig
from reenact.errors import DivergenceError

PROB_EPS = 1e-7


def _conv_norm_relu(cin: int, cout: int, kernel: int, stride: int, padding: int) -> list[nn.Module]:
    return [
        nn.Conv2d(cin, cout, kernel, stride, padding, padding_mode="reflect"),
        nn.InstanceNorm2d(cout),
        nn.ReLU(inplace=True),
    ]


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(channels, channels, 3, 1, 1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, 1, 1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


class ImageEncoder(nn.Module):
    """256x256 RGB -> (4C)x64x64 appearance features."""

    def __init__(self, c: int):
        super().__init__()
        self.net = nn.Sequential(
            *_conv_norm_relu(3, c, 7, 1, 3),
            *_conv_norm_relu(c, 2 * c, 3, 2, 1),
            *_conv_norm_relu(2 * c, 4 * c, 3, 2, 1),
        )

    def forward(self, x):
        return self.net(x)


class LandmarkImageEncoder(nn.Module):
    """64x64 landmark raster -> (4C)x64x64 geometry features (no downsampling)."""

    def __init__(self, c: int):
        super().__init__()
        self.net = nn.Sequential(
            *_conv_norm_relu(1, c, 3, 1, 1),
            *_conv_norm_relu(c, 4 * c, 3, 1, 1),
        )

    def forward(self, x):
        return self.net(x)


class FusionStage(nn.Module):
    """Concatenate the geometry features back in, fuse 1x1, run ResBlocks."""

    def __init__(self, c: int, blocks: int):
        super().__init__()
        self.fuse = nn.Conv2d(8 * c, 4 * c, 1)
        self.blocks = nn.Sequential(*[ResBlock(4 * c) for _ in range(blocks)])

    def forward(self, h, g):
        return self.blocks(self.fuse(torch.cat([h, g], dim=1)))


class ImageDecoder(nn.Module):
    """(4C)x64x64 -> 256x256 RGB in [-1, 1]."""

    def __init__(self, c: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.ConvTranspose2d(4 * c, 2 * c, 3, 2, 1, output_padding=1),
            nn.InstanceNorm2d(2 * c),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(2 * c, c, 3, 2, 1, output_padding=1),
            nn.InstanceNorm2d(c),
            nn.ReLU(inplace=True),
            nn.Conv2d(c, 3, 7, 1, 3, padding_mode="reflect"),
            nn.Tanh(),
        )

    def forward(self, x):
        return self.net(x)


def init_conv_weights(module: nn.Module, std: float = 0.02) -> None:
    """Normal(0, 0.02) conv initialization, the common image-to-image setup."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class GeometryAwareGenerator(nn.Module):
    def __init__(self, config: GagModelConfig | None = None, dtype: torch.dtype = torch.float32):
        super().__init__()
        config = config or GagModelConfig()
        self.config = config
        c = config.base_channels
        self.enc_image = ImageEncoder(c)
        self.enc_landmark = LandmarkImageEncoder(c)
        self.stages = nn.ModuleList(
            [FusionStage(c, config.resblocks_per_stage) for _ in range(config.stages)]
        )
        self.dec_image = ImageDecoder(c)
        init_conv_weights(self)
        self.to(dtype)

    def forward(self, reference: torch.Tensor, landmark_img: torch.Tensor) -> torch.Tensor:
        """reference (B,3,256,256), landmark_img (B,1,64,64) -> (B,3,256,256) in [-1,1]."""
        h = self.enc_image(reference)
        g = self.enc_landmark(landmark_img)
        for stage in self.stages:
            h = stage(h, g)
        return self.dec_image(h)

    def check_finite(self) -> None:
        for name, p in self.named_parameters():
            if not torch.isfinite(p).all():
                raise DivergenceError(f"generator parameter {name} is non-finite")


class PatchDiscriminator(nn.Module):
    """70x70 PatchGAN emitting a grid of per-patch real probabilities."""

    def __init__(self, config: GagModelConfig | None = None, dtype: torch.dtype = torch.float32):
        super().__init__()
        config = config or GagModelConfig()
        c = config.disc_base_channels
        in_ch = 4 if config.conditional_disc else 3
        self.net = nn.Sequential(
            nn.Conv2d(in_ch, c, 4, 2, 1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c, 2 * c, 4, 2, 1),
            nn.InstanceNorm2d(2 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * c, 4 * c, 4, 2, 1),
            nn.InstanceNorm2d(4 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(4 * c, 8 * c, 4, 1, 1),
            nn.InstanceNorm2d(8 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(8 * c, 1, 4, 1, 1),
        )
        init_conv_weights(self)
        self.to(dtype)

    def forward(self, img: torch.Tensor, landmark_full: torch.Tensor | None = None) -> torch.Tensor:
        """Returns per-patch probabilities, shape (B, 1, H', W')."""
        x = img
        if self.net[0].in_channels == 4:
            if landmark_full is None:
                raise ValueError("conditional discriminator needs the landmark channel")
            x = torch.cat([img, landmark_full], dim=1)
        return torch.sigmoid(self.net(x))


def pixel_loss(generated: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over all pixels and channels."""
    return (generated - truth).abs().mean()


def _clamp_prob(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(PROB_EPS, 1.0 - PROB_EPS)


def gag_adv_loss(
    real_img: torch.Tensor,
    fake_img: torch.Tensor,
    disc: PatchDiscriminator,
    landmark_full: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Patch discriminator objective (negated, fake detached) and generator term.

    Both losses average over the patch grid; the generator term is the
    non-saturating -E[log D(fake)].
    """
    p_real = _clamp_prob(disc(real_img, landmark_full))
    p_fake_d = _clamp_prob(disc(fake_img.detach(), landmark_full))
    disc_loss = -(torch.log(p_real).mean() + torch.log1p(-p_fake_d).mean())
    p_fake_g = _clamp_prob(disc(fake_img, landmark_full))
    gen_term = -torch.log(p_fake_g).mean()
    return disc_loss, gen_term


def gag_total_loss(
    pix: torch.Tensor | float,
    adv: torch.Tensor | float,
    tp: torch.Tensor | float,
    weights: GagLossWeights | None = None,
) -> torch.Tensor:
    w = weights or GagLossWeights()
    total = w.lambda_pix * pix + w.lambda_adv * adv + w.lambda_tp * tp
    return total if isinstance(total, torch.Tensor) else torch.tensor(total)
