"""Focal classification loss, anchored 1-D gIoU regression loss and their sum."""

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from ..numerics import ops

P_CLAMP = 1e-6


def focal_loss(p, y, alpha=0.25, gamma=2.0):
    """Elementwise binary focal loss -a_t (1 - p_t)^gamma ln p_t.

    ``p`` is a Tensor (or array) of probabilities, ``y`` a same-shape 0/1 array.
    Returns a Tensor of the same shape; reduce it yourself.
    """
    p = ops.clip(ops.as_tensor(p), P_CLAMP, 1.0 - P_CLAMP)
    y = np.asarray(y, dtype=p.dtype)
    p_t = ops.add(ops.mul(p, 2.0 * y - 1.0), 1.0 - y)
    a_t = alpha * y + (1.0 - alpha) * (1.0 - y)
    loss = ops.mul(ops.neg(ops.log(p_t)), a_t)
    if gamma:
        loss = ops.mul(loss, ops.power(ops.sub(1.0, p_t), gamma))
    return loss


def giou_loss_1d(pred, target):
    """1 - gIoU between anchored intervals [-d_s, d_e] and [-d_s*, d_e*].

    pred: Tensor (N, 2) of non-negative distances; target: array (N, 2) with
    d_s* + d_e* > 0. Both intervals contain the anchor, so they always
    intersect and the loss lies in [0, 1].
    """
    pred = ops.as_tensor(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if target.size and np.any(target.sum(axis=-1) <= 0):
        raise ContractError("giou_loss_1d: degenerate regression target (assignment bug)")
    if target.size and np.any(target < 0):
        raise ContractError("giou_loss_1d: negative regression target")
    ps, pe = ops.getitem(pred, (Ellipsis, 0)), ops.getitem(pred, (Ellipsis, 1))
    ts, te = target[..., 0], target[..., 1]
    inter = ops.add(ops.minimum(ps, ts), ops.minimum(pe, te))
    union = ops.sub(ops.add(ops.add(ps, pe), ts + te), inter)
    hull = ops.add(ops.maximum(ps, ts), ops.maximum(pe, te))
    iou = ops.div(inter, union)
    giou = ops.sub(iou, ops.div(ops.sub(hull, union), hull))
    return ops.sub(1.0, giou)


@dataclass
class LossBreakdown:
    """cls and reg are raw sums; total = cls / num_steps + lam * reg / num_pos."""

    total: float
    cls: float
    reg: float
    num_steps: int
    num_pos: int
    lam: float
    cls_denom: int = 0  # num_steps, or num_pos under positive normalization

    @property
    def cls_term(self):
        return self.cls / max(self.cls_denom or self.num_steps, 1)

    @property
    def reg_term(self):
        return self.lam * self.reg / self.num_pos if self.num_pos else 0.0


def stack_targets(assignments):
    """Batch per-video TargetAssignments into per-level (B, ...) arrays."""
    n_levels = len(assignments[0].labels)
    labels = [np.stack([a.labels[l] for a in assignments]) for l in range(n_levels)]
    offsets = [np.stack([a.offsets[l] for a in assignments]) for l in range(n_levels)]
    return labels, offsets


def total_loss(raw, assignments, lam=1.0, alpha=0.25, gamma=2.0, cls_norm="steps"):
    """Return (total Tensor, LossBreakdown).

    The classification sum runs over every valid (level, step, class); it is
    divided by the number of valid steps over all levels, or by the positive
    count when ``cls_norm == "positives"``. The regression sum runs over
    positive (level, step, class) triples and is divided by their count.
    """
    if lam < 0:
        raise ContractError("total_loss: lambda must be >= 0")
    if cls_norm not in ("steps", "positives"):
        raise ContractError(f"total_loss: unknown cls_norm {cls_norm!r}")
    labels, offsets = stack_targets(assignments)
    if len(labels) != raw.num_levels:
        raise ContractError(f"total_loss: {len(labels)} target levels vs {raw.num_levels} predicted")

    cls_parts, reg_pred, reg_tgt = [], [], []
    num_steps = 0
    for l in range(raw.num_levels):
        mask = raw.masks[l]
        lab = labels[l]
        if lab.shape != raw.probs[l].shape:
            raise ContractError(f"total_loss: level {l} labels {lab.shape} vs probs {raw.probs[l].shape}")
        num_steps += int(mask.sum())
        fl = focal_loss(raw.probs[l], lab, alpha, gamma)
        cls_parts.append(ops.sum(ops.mul(fl, mask[..., None])))
        pos = (lab > 0) & (mask[..., None] > 0)
        if pos.any():
            b, t, c = np.nonzero(pos)
            # distances are (B, 2, C, T_l); move the pair axis last
            d = ops.transpose(raw.distances[l], (0, 3, 2, 1))
            reg_pred.append(ops.getitem(d, (b, t, c)))
            reg_tgt.append(offsets[l][b, t, :, c])

    cls_sum = cls_parts[0]
    for part in cls_parts[1:]:
        cls_sum = ops.add(cls_sum, part)
    num_pos = int(sum(len(t) for t in reg_tgt))
    denom = num_steps if cls_norm == "steps" else max(num_pos, 1)
    total = ops.mul(cls_sum, 1.0 / max(denom, 1))
    reg_sum_value = 0.0
    if num_pos and lam > 0:
        pred = ops.concat(reg_pred, axis=0) if len(reg_pred) > 1 else reg_pred[0]
        reg_sum = ops.sum(giou_loss_1d(pred, np.concatenate(reg_tgt, axis=0)))
        reg_sum_value = float(reg_sum.data)
        total = ops.add(total, ops.mul(reg_sum, lam / num_pos))
    elif num_pos:
        detached = giou_loss_1d(ops.as_tensor(np.concatenate([r.data for r in reg_pred])), np.concatenate(reg_tgt))
        reg_sum_value = float(detached.data.sum())
    breakdown = LossBreakdown(
        total=float(total.data),
        cls=float(cls_sum.data),
        reg=reg_sum_value,
        num_steps=num_steps,
        num_pos=num_pos,
        lam=float(lam),
        cls_denom=max(denom, 1),
    )
    return total, breakdown
