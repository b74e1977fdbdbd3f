"""Two-phase training: converter first, then the generator with it frozen."""

from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch.optim import Adam

from reenact.checkpoints import load_checkpoint, save_checkpoint, state_dict_hash
from reenact.config import ToolkitConfig, config_hash
from reenact.converter import (
    LandmarkConverter,
    PairSimilarityDiscriminator,
    RealFakeDiscriminator,
    d_s_loss,
    d_tf_loss,
    ulc_cycle_loss,
    ulc_l1_loss,
    ulc_total_loss,
)
from reenact.data import FaceDataset, PairCombo, SampleKey, enumerate_pair_combos
from reenact.errors import ConfigurationError, DivergenceError
from reenact.generator import (
    GeometryAwareGenerator,
    PatchDiscriminator,
    gag_adv_loss,
    gag_total_loss,
    pixel_loss,
)
from reenact.landmarks import rasterize
from reenact.triplet import build_extractor, sample_triplet, tp_loss


def lr_schedule(lr0: float, decay_every: int, epoch: int) -> float:
    """Learning rate divided by ten every ``decay_every`` epochs."""
    if epoch < 0:
        raise ConfigurationError(f"epoch must be >= 0, got {epoch}")
    return lr0 * 10.0 ** (-(epoch // decay_every))


class _Walker:
    """Epoch-shuffled pass over a pool: equal coverage, no multinomial noise."""

    def __init__(self, pool: list, rng: random.Random):
        if not pool:
            raise ConfigurationError("empty sampling pool")
        self.pool = list(pool)
        self.rng = rng
        self.buf: list = []

    def take(self, n: int) -> list:
        out = []
        while len(out) < n:
            if not self.buf:
                self.buf = self.pool[:]
                self.rng.shuffle(self.buf)
            out.append(self.buf.pop())
        return out


@dataclass
class TierSplit:
    """Record tiers for converter training; see UlcTrainConfig."""

    supervised: list[PairCombo]
    cycle_pool: list[PairCombo]
    fake_pool: list[PairCombo]
    eval_combos: list[PairCombo]
    train_records: list[SampleKey]


def stratified_tiers(dataset: FaceDataset, ulc_train) -> TierSplit:
    """Deal records per expression into eval / cycle-only / disc-only tiers.

    Evaluation records are untouched by every loss; cycle-tier records only
    ever appear as cycle back-conversion targets; disc-tier records only as
    discriminator real exemplars. The rest is fully supervised.
    """
    n_special = (
        ulc_train.eval_per_expression
        + ulc_train.cycle_tier_per_expression
        + ulc_train.disc_tier_per_expression
    )
    if n_special > len(dataset.identities):
        raise ConfigurationError(
            f"tier sizes need {n_special} identities per expression, "
            f"dataset has {len(dataset.identities)}"
        )
    rng = random.Random(88_000 + ulc_train.split_seed)
    eval_tier: set = set()
    cyc_tier: set = set()
    d_tier: set = set()
    for e in dataset.expressions:
        if e == dataset.reference_expression:
            continue
        ids = list(dataset.identities)
        rng.shuffle(ids)
        k = 0
        for _ in range(ulc_train.eval_per_expression):
            eval_tier.add((ids[k], e))
            k += 1
        for _ in range(ulc_train.cycle_tier_per_expression):
            cyc_tier.add((ids[k], e))
            k += 1
        for _ in range(ulc_train.disc_tier_per_expression):
            d_tier.add((ids[k], e))
            k += 1

    combos = enumerate_pair_combos(dataset)
    hidden = eval_tier | cyc_tier | d_tier

    def recs(c: PairCombo):
        return (c.target, c.expression), (c.source, c.expression)

    supervised = [c for c in combos if recs(c)[0] not in hidden and recs(c)[1] not in hidden]
    cycle_pool = [c for c in combos if recs(c)[1] not in eval_tier | d_tier]
    fake_pool = [c for c in combos if recs(c)[1] not in eval_tier]
    eval_combos = [c for c in combos if recs(c)[0] in eval_tier and recs(c)[1] not in hidden]
    train_records = [
        k for k in dataset.records if (k.identity, k.expression) not in eval_tier
    ]
    if not supervised:
        raise ConfigurationError("tier sizes leave no supervised conversion pairs")
    return TierSplit(supervised, cycle_pool, fake_pool, eval_combos, train_records)


def _combo_tensors(dataset: FaceDataset, combos, with_truth=True):
    ref = dataset.reference_expression

    def stack(keys):
        return torch.from_numpy(
            np.stack([dataset.landmark(k).points for k in keys])
        ).float()

    t_ref = stack([SampleKey(c.target, ref, c.pose) for c in combos])
    src = stack([SampleKey(c.source, c.expression, c.pose) for c in combos])
    src_ref = stack([SampleKey(c.source, ref, c.pose) for c in combos])
    truth = stack([SampleKey(c.target, c.expression, c.pose) for c in combos]) if with_truth else None
    return t_ref, src, truth, src_ref


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    metrics: list[dict]
    holdout_ace_tail: float | None


def _append_jsonl(path: Path, record: dict) -> None:
    with path.open("a") as f:
        f.write(json.dumps(record) + "\n")


def train_ulc(dataset: FaceDataset, config: ToolkitConfig, out_dir: str | Path) -> TrainResult:
    """Phase 1: train the landmark converter (with discriminators).

    Writes metrics.jsonl, the final checkpoint ulc.ckpt, and a loss-curve
    figure. Aborts on non-finite losses, keeping the last epoch's
    checkpoint on disk.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tc = config.ulc_train
    torch.manual_seed(tc.seed)
    converter = LandmarkConverter(config.ulc)
    disc_tf = RealFakeDiscriminator(config.ulc)
    disc_s = PairSimilarityDiscriminator(config.ulc)
    opt_g = Adam(converter.parameters(), lr=tc.lr, betas=tc.betas)
    opt_d = Adam(
        list(disc_tf.parameters()) + list(disc_s.parameters()), lr=tc.lr, betas=tc.betas
    )

    tiers = stratified_tiers(dataset, tc)
    if len(dataset.identities) < 2:
        raise ConfigurationError("converter training needs at least 2 identities")

    sup_w = _Walker(tiers.supervised, random.Random(tc.seed))
    cyc_w = _Walker(tiers.cycle_pool, random.Random(tc.seed + 101_000))
    fake_w = _Walker(tiers.fake_pool, random.Random(tc.seed + 202_000))
    real_w = _Walker(tiers.train_records, random.Random(tc.seed + 303_000))
    pair_rng = random.Random(tc.seed + 404_000)

    expressive_by_identity: dict[str, list[SampleKey]] = {}
    for k in tiers.train_records:
        if k.expression != dataset.reference_expression:
            expressive_by_identity.setdefault(k.identity, []).append(k)

    if tiers.eval_combos:
        ht, hs, htr, _ = _combo_tensors(dataset, tiers.eval_combos)

    def holdout_ace() -> float | None:
        if not tiers.eval_combos:
            return None
        with torch.no_grad():
            return float((converter(ht, hs) - htr).abs().mean())

    combos_total = len(enumerate_pair_combos(dataset))
    batches = tc.batches_per_epoch or max(1, round(combos_total / tc.batch_size))
    metrics_path = out / "metrics.jsonl"
    metrics_path.write_text("")
    ckpt_path = out / "ulc.ckpt"
    cfg_hash = config_hash(config)

    def save(epoch: int, path: Path) -> None:
        save_checkpoint(
            path,
            kind="ulc",
            model_states={
                "converter": converter.state_dict(),
                "disc_tf": disc_tf.state_dict(),
                "disc_s": disc_s.state_dict(),
            },
            optimizer_states={"gen": opt_g.state_dict(), "disc": opt_d.state_dict()},
            epoch=epoch,
            config_hash=cfg_hash,
        )

    metrics: list[dict] = []
    tail: list[float] = []
    save(0, ckpt_path)
    for epoch in range(tc.epochs):
        lr_e = lr_schedule(tc.lr, tc.decay_every, epoch)
        for g in opt_g.param_groups:
            g["lr"] = lr_e
        for g in opt_d.param_groups:
            g["lr"] = lr_e
        sums = {"l1": 0.0, "cycle": 0.0, "adv_gen": 0.0, "d_tf": 0.0, "d_s": 0.0}
        for _ in range(batches):
            t_ref, src, truth, _ = _combo_tensors(dataset, sup_w.take(tc.batch_size))
            pred = converter(t_ref, src)
            l1 = ulc_l1_loss(pred, truth)
            if tc.use_cycle:
                ct_ref, c_src, _, c_src_ref = _combo_tensors(
                    dataset, cyc_w.take(tc.batch_size), with_truth=False
                )
                cyc = ulc_cycle_loss(c_src_ref, ct_ref, c_src, converter)
            else:
                cyc = torch.tensor(0.0)
            if tc.use_adversarial:
                fake_combos = fake_w.take(tc.batch_size)
                ft_ref, f_src, _, _ = _combo_tensors(dataset, fake_combos, with_truth=False)
                f_pred = converter(ft_ref, f_src)
                reals = torch.from_numpy(
                    np.stack([dataset.landmark(k).points for k in real_w.take(tc.batch_size)])
                ).float()
                d1, g1 = d_tf_loss(reals, f_pred, disc_tf)
                pair_real_a = torch.from_numpy(
                    np.stack(
                        [
                            dataset.landmark(dataset.reference_key(c.target, c.pose)).points
                            for c in fake_combos
                        ]
                    )
                ).float()
                pair_real_b = torch.from_numpy(
                    np.stack(
                        [
                            dataset.landmark(
                                pair_rng.choice(expressive_by_identity[c.target])
                            ).points
                            for c in fake_combos
                        ]
                    )
                ).float()
                d2, g2 = d_s_loss((pair_real_a, pair_real_b), (ft_ref, f_pred), disc_s)
                adv = g1 + tc.weights.weight_d_s * g2
            else:
                adv = torch.tensor(0.0)
            total = ulc_total_loss(l1, cyc, adv, tc.weights)
            if not torch.isfinite(total):
                raise DivergenceError(
                    f"non-finite converter loss at epoch {epoch}; "
                    f"last checkpoint retained at {ckpt_path}"
                )
            opt_g.zero_grad()
            total.backward()
            if tc.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(converter.parameters(), tc.grad_clip)
            opt_g.step()
            if tc.use_adversarial:
                opt_d.zero_grad()
                (d1 + d2).backward()
                opt_d.step()
                sums["adv_gen"] += float(adv.detach())
                sums["d_tf"] += float(d1.detach())
                sums["d_s"] += float(d2.detach())
            sums["l1"] += float(l1.detach())
            sums["cycle"] += float(cyc.detach())
        converter.check_finite()
        hace = holdout_ace()
        if hace is not None and epoch >= tc.epochs - tc.tail_window:
            tail.append(hace)
        record = {
            "epoch": epoch,
            "lr": lr_e,
            **{k: v / batches for k, v in sums.items()},
            "holdout_ace": hace,
        }
        metrics.append(record)
        _append_jsonl(metrics_path, record)
        if tc.checkpoint_every and (epoch + 1) % tc.checkpoint_every == 0:
            save(epoch + 1, out / f"ulc_epoch{epoch + 1:05d}.ckpt")
        save(epoch + 1, ckpt_path)

    from reenact.report import loss_curve_figure

    loss_curve_figure(metrics, out / "loss_curves.png", title="converter training")
    return TrainResult(
        checkpoint_path=ckpt_path,
        metrics_path=metrics_path,
        metrics=metrics,
        holdout_ace_tail=float(np.mean(tail)) if tail else None,
    )


def load_converter(checkpoint_path: str | Path, config: ToolkitConfig) -> LandmarkConverter:
    doc = load_checkpoint(checkpoint_path, kind="ulc", expected_config_hash=config_hash(config))
    converter = LandmarkConverter(config.ulc)
    converter.load_state_dict(doc["model_states"]["converter"])
    return converter


def load_generator(checkpoint_path: str | Path, config: ToolkitConfig) -> GeometryAwareGenerator:
    doc = load_checkpoint(checkpoint_path, kind="gag", expected_config_hash=config_hash(config))
    generator = GeometryAwareGenerator(config.gag)
    generator.load_state_dict(doc["model_states"]["generator"])
    return generator


def _raster_batch(dataset: FaceDataset, converter, combos, resolution: int) -> torch.Tensor:
    from reenact.converter import convert

    ref = dataset.reference_expression
    imgs = []
    for c in combos:
        converted = convert(
            dataset.landmark(SampleKey(c.target, ref, c.pose)),
            dataset.landmark(SampleKey(c.source, c.expression, c.pose)),
            converter,
        )
        imgs.append(rasterize(converted, resolution, dataset.grouping).pixels)
    return torch.from_numpy(np.stack(imgs)[:, None, :, :]).float()


def train_gag(
    dataset: FaceDataset,
    ulc_checkpoint: str | Path,
    config: ToolkitConfig,
    out_dir: str | Path,
) -> TrainResult:
    """Phase 2: freeze the converter, train the generator.

    The converter parameters are asserted bit-identical before and after.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tc = config.gag_train
    torch.manual_seed(tc.seed)
    converter = load_converter(ulc_checkpoint, config)
    converter.eval()
    for p in converter.parameters():
        p.requires_grad_(False)
    frozen_hash = state_dict_hash(converter)

    generator = GeometryAwareGenerator(config.gag)
    disc = PatchDiscriminator(config.gag)
    opt_g = Adam(generator.parameters(), lr=tc.lr, betas=tc.betas)
    opt_d = Adam(disc.parameters(), lr=tc.lr, betas=tc.betas)
    extractor = build_extractor(tc.extractor, seed=tc.seed)

    combos = enumerate_pair_combos(dataset)
    walker = _Walker(combos, random.Random(tc.seed))
    triplet_rng = random.Random(tc.seed + 515_000)

    batches = max(1, round(len(dataset) / tc.batch_size))
    metrics_path = out / "metrics.jsonl"
    metrics_path.write_text("")
    ckpt_path = out / "gag.ckpt"
    cfg_hash = config_hash(config)

    def save(epoch: int) -> None:
        save_checkpoint(
            ckpt_path,
            kind="gag",
            model_states={"generator": generator.state_dict(), "disc": disc.state_dict()},
            optimizer_states={"gen": opt_g.state_dict(), "disc": opt_d.state_dict()},
            epoch=epoch,
            config_hash=cfg_hash,
            extra={"ulc_hash": frozen_hash},
        )

    def image_batch(keys: list[SampleKey]) -> torch.Tensor:
        return torch.stack([dataset.image(k).to_tensor() for k in keys])

    metrics: list[dict] = []
    save(0)
    for epoch in range(tc.epochs):
        lr_e = lr_schedule(tc.lr, tc.decay_every, epoch)
        for g in opt_g.param_groups:
            g["lr"] = lr_e
        for g in opt_d.param_groups:
            g["lr"] = lr_e
        sums = {"pixel": 0.0, "adv_gen": 0.0, "adv_disc": 0.0, "tp": 0.0}
        for _ in range(batches):
            batch_combos = walker.take(tc.batch_size)
            ref_imgs = image_batch(
                [dataset.reference_key(c.target, c.pose) for c in batch_combos]
            )
            truth_imgs = image_batch(
                [SampleKey(c.target, c.expression, c.pose) for c in batch_combos]
            )
            rasters = _raster_batch(
                dataset, converter, batch_combos, config.gag.landmark_resolution
            )
            fake = generator(ref_imgs, rasters)
            pix = pixel_loss(fake, truth_imgs)
            d_loss, g_adv = gag_adv_loss(truth_imgs, fake, disc)
            if tc.weights.lambda_tp > 0:
                tp_terms = []
                for _ in range(tc.triplets_per_step):
                    spec = sample_triplet(dataset, converter, triplet_rng)
                    trio = [spec.anchor_inputs, spec.positive_inputs, spec.negative_inputs]
                    lm = torch.from_numpy(
                        np.stack([t[0].pixels for t in trio])[:, None, :, :]
                    ).float()
                    refs = torch.stack([t[1].to_tensor() for t in trio])
                    gen3 = generator(refs, lm)
                    tp_terms.append(
                        tp_loss(gen3[0], gen3[1], gen3[2], extractor, tc.margin)
                    )
                tp = torch.stack(tp_terms).mean()
            else:
                tp = torch.tensor(0.0)
            total = gag_total_loss(pix, g_adv, tp, tc.weights)
            if not torch.isfinite(total):
                raise DivergenceError(
                    f"non-finite generator loss at epoch {epoch}; "
                    f"last checkpoint retained at {ckpt_path}"
                )
            opt_g.zero_grad()
            total.backward()
            if tc.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(generator.parameters(), tc.grad_clip)
            opt_g.step()
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()
            sums["pixel"] += float(pix.detach())
            sums["adv_gen"] += float(g_adv.detach())
            sums["adv_disc"] += float(d_loss.detach())
            sums["tp"] += float(tp.detach())
        generator.check_finite()
        record = {"epoch": epoch, "lr": lr_e, **{k: v / batches for k, v in sums.items()}}
        metrics.append(record)
        _append_jsonl(metrics_path, record)
        if tc.checkpoint_every and (epoch + 1) % tc.checkpoint_every == 0:
            save_checkpoint(
                out / f"gag_epoch{epoch + 1:05d}.ckpt",
                kind="gag",
                model_states={"generator": generator.state_dict(), "disc": disc.state_dict()},
                optimizer_states={"gen": opt_g.state_dict(), "disc": opt_d.state_dict()},
                epoch=epoch + 1,
                config_hash=cfg_hash,
                extra={"ulc_hash": frozen_hash},
            )
        save(epoch + 1)

    if state_dict_hash(converter) != frozen_hash:
        raise DivergenceError("frozen converter parameters changed during generator training")

    from reenact.report import loss_curve_figure

    loss_curve_figure(metrics, out / "loss_curves.png", title="generator training")
    return TrainResult(
        checkpoint_path=ckpt_path,
        metrics_path=metrics_path,
        metrics=metrics,
        holdout_ace_tail=None,
    )
