"""Landmark expression converter and its training losses.

The converter maps (target reference landmark, source landmark) to the
target identity performing the source expression. Two encoders embed the
inputs, a decoder regresses a landmark shift, and the shift is added to
the target reference point-wise, so a zero decoder output makes the
converter an exact identity on its first argument.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from reenact.config import UlcLossWeights, UlcModelConfig
from reenact.errors import DivergenceError
from reenact.landmarks import LANDMARK_COUNT, Landmark

FLAT_DIM = LANDMARK_COUNT * 2
PROB_EPS = 1e-7


def _mlp(dims: list[int], slope: float, final_activation: bool) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        layers.append(nn.Linear(a, b))
        if final_activation or i < len(dims) - 2:
            layers.append(nn.LeakyReLU(slope, inplace=True))
    return nn.Sequential(*layers)


class LandmarkEncoder(nn.Module):
    def __init__(self, config: UlcModelConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        widths = config.scaled_encoder_widths()
        self.net = _mlp([FLAT_DIM, *widths], config.leaky_slope, final_activation=True)
        self.out_dim = widths[-1]
        self.input_scale = config.input_scale
        self.to(dtype)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = (x.flatten(start_dim=1) - 0.5) * self.input_scale
        return self.net(x)


class ShiftDecoder(nn.Module):
    """Fuses the two encoder embeddings into a landmark shift.

    The final affine layer is zero-initialized so a fresh converter starts
    as the identity on its target-reference input.
    """

    def __init__(self, in_dim: int, config: UlcModelConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        widths = config.scaled_decoder_widths()
        self.net = _mlp([in_dim, *widths], config.leaky_slope, final_activation=True)
        self.head = nn.Linear(widths[-1], FLAT_DIM)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)
        self.shift_scale = config.shift_scale
        self.to(dtype)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.net(x)) * self.shift_scale


class LandmarkConverter(nn.Module):
    """Residual landmark converter: target_ref + shift(target_ref, source)."""

    def __init__(self, config: UlcModelConfig | None = None, dtype: torch.dtype = torch.float32):
        super().__init__()
        config = config or UlcModelConfig()
        self.config = config
        self.enc_target = LandmarkEncoder(config, dtype)
        self.enc_source = LandmarkEncoder(config, dtype)
        self.dec_shift = ShiftDecoder(self.enc_target.out_dim * 2, config, dtype)

    def predict_shift(self, l_target_ref: torch.Tensor, l_source: torch.Tensor) -> torch.Tensor:
        t = l_target_ref.flatten(start_dim=1)
        s = l_source.flatten(start_dim=1)
        return self.dec_shift(torch.cat([self.enc_target(t), self.enc_source(s)], dim=1))

    def forward(self, l_target_ref: torch.Tensor, l_source: torch.Tensor) -> torch.Tensor:
        """Both inputs (B, 106, 2) or (B, 212); returns (B, 106, 2)."""
        t = l_target_ref.flatten(start_dim=1)
        shift = self.predict_shift(l_target_ref, l_source)
        return (t + shift).view(-1, LANDMARK_COUNT, 2)

    def check_finite(self) -> None:
        for name, p in self.named_parameters():
            if not torch.isfinite(p).all():
                raise DivergenceError(f"converter parameter {name} is non-finite")


def _disc_widths(config: UlcModelConfig) -> tuple[int, ...]:
    return tuple(max(8, round(w * config.disc_width_factor)) for w in config.scaled_encoder_widths())


class RealFakeDiscriminator(nn.Module):
    """Scores a single landmark as real (1) or converter-made (0)."""

    def __init__(self, config: UlcModelConfig | None = None, dtype: torch.dtype = torch.float32):
        super().__init__()
        config = config or UlcModelConfig()
        widths = _disc_widths(config)
        self.net = _mlp([FLAT_DIM, *widths], config.leaky_slope, final_activation=True)
        self.head = nn.Linear(widths[-1], 1)
        self.input_scale = config.input_scale
        self.to(dtype)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = (x.flatten(start_dim=1) - 0.5) * self.input_scale
        return torch.sigmoid(self.head(self.net(x))).squeeze(-1)


class PairSimilarityDiscriminator(nn.Module):
    """Scores whether a landmark pair belongs to the same identity."""

    def __init__(self, config: UlcModelConfig | None = None, dtype: torch.dtype = torch.float32):
        super().__init__()
        config = config or UlcModelConfig()
        widths = _disc_widths(config)
        self.net = _mlp([FLAT_DIM * 2, *widths], config.leaky_slope, final_activation=True)
        self.head = nn.Linear(widths[-1], 1)
        self.input_scale = config.input_scale
        self.to(dtype)

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        x = torch.cat([a.flatten(start_dim=1), b.flatten(start_dim=1)], dim=1)
        x = (x - 0.5) * self.input_scale
        return torch.sigmoid(self.head(self.net(x))).squeeze(-1)


def convert(l_target_ref: Landmark, l_source: Landmark, converter: LandmarkConverter) -> Landmark:
    """Landmark-level convenience wrapper around the converter network.

    The residual add runs at float64 on the original coordinates, so a
    zero shift returns the target reference exactly whatever the network
    dtype.
    """
    converter.check_finite()
    dtype = next(converter.parameters()).dtype
    with torch.no_grad():
        t = torch.from_numpy(l_target_ref.points).to(dtype).unsqueeze(0)
        s = torch.from_numpy(l_source.points).to(dtype).unsqueeze(0)
        shift = converter.predict_shift(t, s)[0].double().numpy()
    return Landmark(l_target_ref.points + shift.reshape(LANDMARK_COUNT, 2))


def ulc_l1_loss(predicted: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """Sum of absolute coordinate differences (L1 norm over all 212 scalars).

    Batched inputs return the batch mean of per-sample sums.
    """
    diff = (predicted - truth).abs()
    if diff.dim() <= 2:
        return diff.sum()
    return diff.flatten(start_dim=1).sum(dim=1).mean()


def ulc_cycle_loss(
    l_source_ref: torch.Tensor,
    l_target_ref: torch.Tensor,
    l_source: torch.Tensor,
    converter: LandmarkConverter,
) -> torch.Tensor:
    """Convert source -> target -> back to source; L1 distance to the original."""
    forward = converter(l_target_ref, l_source)
    back = converter(l_source_ref, forward)
    return ulc_l1_loss(back, l_source)


def _clamp_prob(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(PROB_EPS, 1.0 - PROB_EPS)


def d_tf_loss(
    real_landmark: torch.Tensor,
    fake_landmark: torch.Tensor,
    disc: RealFakeDiscriminator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Real/fake discriminator objective and the generator's adversarial term.

    The discriminator maximizes E[log D(real)] + E[log(1 - D(fake))]; the
    returned disc_loss is its negation (fake detached). The generator term
    is the non-saturating -E[log D(fake)].
    """
    p_real = _clamp_prob(disc(real_landmark))
    p_fake_d = _clamp_prob(disc(fake_landmark.detach()))
    disc_loss = -(torch.log(p_real).mean() + torch.log1p(-p_fake_d).mean())
    p_fake_g = _clamp_prob(disc(fake_landmark))
    gen_term = -torch.log(p_fake_g).mean()
    return disc_loss, gen_term


def d_s_loss(
    pair_real: tuple[torch.Tensor, torch.Tensor],
    pair_fake: tuple[torch.Tensor, torch.Tensor],
    disc: PairSimilarityDiscriminator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Identity-similarity discriminator objective and generator term.

    pair_real is two genuine landmarks of one identity; pair_fake pairs a
    genuine target-identity landmark with the converted one.
    """
    p_real = _clamp_prob(disc(*pair_real))
    p_fake_d = _clamp_prob(disc(pair_fake[0], pair_fake[1].detach()))
    disc_loss = -(torch.log(p_real).mean() + torch.log1p(-p_fake_d).mean())
    p_fake_g = _clamp_prob(disc(*pair_fake))
    gen_term = -torch.log(p_fake_g).mean()
    return disc_loss, gen_term


def ulc_total_loss(
    l1: torch.Tensor | float,
    cycle: torch.Tensor | float,
    adversarial: torch.Tensor | float,
    weights: UlcLossWeights | None = None,
) -> torch.Tensor:
    """Weighted converter objective; ``adversarial`` is the sum of both generator terms."""
    w = weights or UlcLossWeights()
    total = w.lambda1 * l1 + w.lambda2 * cycle + w.lambda3 * adversarial
    return total if isinstance(total, torch.Tensor) else torch.tensor(total)
