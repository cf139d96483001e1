"""Global compressibility regression from a displacement field.

A stack of 7x7 convolutions with doubling filter counts (full width runs 16
upward; divided by the desk-scale width factor here) and 2x max pooling, a
global convolution collapsing the remaining spatial extent, dense layers to a
single scalar, and a halved sigmoid keeping the output strictly inside
(0, 0.5). Trained with mean squared error against the known ratio of each
generated field.

Fields are normalized per sample to unit peak magnitude before entering the
network: the ratio depends on the field's shape, not its amplitude. Training
augments with symmetry flips plus two ratio-preserving perturbations
(magnitude-dependent vector rotations and spatially smooth additive noise) so
the model stays usable on imperfect fields such as registration outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class RegressionConfig:
    base_filters: int = 4  # 16 / width_factor at desk scale
    levels: int = 4
    lr: float = 1e-4
    epochs: int = 150
    batch_size: int = 32
    # augmentation strengths; zero disables the corresponding perturbation
    rot_alpha_max: float = 0.10
    smooth_noise_max: float = 0.05
    seed: int = 0


def sigma_nu(x: torch.Tensor) -> torch.Tensor:
    """0.5 * sigmoid(x): maps any real input into the open interval (0, 0.5)."""
    return 0.5 * torch.sigmoid(x)


def normalize_fields(fields: np.ndarray) -> np.ndarray:
    """Scale each (2, h, w) field to unit peak magnitude."""
    fields = np.asarray(fields, dtype=np.float32)
    mag = np.sqrt(fields[:, 0] ** 2 + fields[:, 1] ** 2)
    peak = mag.max(axis=(1, 2), keepdims=True)[:, None]
    return fields / np.maximum(peak, 1e-12)


def augment_fields(x: torch.Tensor, gen: torch.Generator, cfg: RegressionConfig) -> torch.Tensor:
    """Label-preserving perturbations of a normalized field batch."""
    n, _, h, w = x.shape
    x = x.clone()
    # axis flips negate the flipped component
    hf = torch.rand(n, generator=gen) < 0.5
    vf = torch.rand(n, generator=gen) < 0.5
    x[hf] = torch.flip(x[hf], dims=[3])
    x[hf, 0] = -x[hf, 0]
    x[vf] = torch.flip(x[vf], dims=[2])
    x[vf, 1] = -x[vf, 1]
    if cfg.rot_alpha_max > 0:
        # per-pixel random-signed rotation, larger for small magnitudes
        alpha = torch.rand(n, 1, 1, generator=gen) * cfg.rot_alpha_max
        mag = torch.sqrt(x[:, 0] ** 2 + x[:, 1] ** 2)
        theta = alpha * 0.5 / (1.0 + mag)
        sign = torch.where(torch.rand(mag.shape, generator=gen) < 0.5, -1.0, 1.0)
        a = sign * theta
        c, s = torch.cos(a), torch.sin(a)
        ux, uy = x[:, 0].clone(), x[:, 1].clone()
        x[:, 0] = c * ux - s * uy
        x[:, 1] = s * ux + c * uy
    if cfg.smooth_noise_max > 0:
        # low-frequency additive error, the texture of registration artifacts
        amp = torch.rand(n, 1, 1, 1, generator=gen) * cfg.smooth_noise_max
        low = torch.randn(n, 2, max(h // 8, 1), max(w // 8, 1), generator=gen)
        x = x + amp * F.interpolate(low, size=(h, w), mode="bilinear", align_corners=False)
    return x


class RegressionCNN(nn.Module):
    """2-channel displacement field in, scalar ratio in (0, 0.5) out."""

    def __init__(self, base_filters: int = 4, levels: int = 4):
        super().__init__()
        widths = [base_filters * 2**i for i in range(levels)]
        blocks = []
        cin = 2
        for wdt in widths:
            blocks += [
                nn.Conv2d(cin, wdt, kernel_size=7, padding=3),
                nn.BatchNorm2d(wdt),
                nn.LeakyReLU(0.2, inplace=True),
                nn.MaxPool2d(2),
            ]
            cin = wdt
        self.features = nn.Sequential(*blocks)
        # global convolution: collapse whatever spatial extent remains
        self.global_conv = nn.Sequential(
            nn.Conv2d(cin, 2 * cin, kernel_size=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.AdaptiveAvgPool2d(1),
        )
        self.dense = nn.Sequential(
            nn.Flatten(),
            nn.Linear(2 * cin, 32),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Linear(32, 1),
        )

    def forward(self, fields: torch.Tensor) -> torch.Tensor:
        x = self.features(fields)
        x = self.global_conv(x)
        return sigma_nu(self.dense(x)).squeeze(1)


def train_regression(
    fields: np.ndarray,
    labels: np.ndarray,
    cfg: RegressionConfig,
    log_every: int = 0,
) -> tuple[RegressionCNN, list[float]]:
    """Fit the ratio regressor with MSE loss; labels must lie in [0, 0.5)."""
    labels = np.asarray(labels, dtype=np.float32)
    if labels.min() < 0.0 or labels.max() >= 0.5:
        raise ValueError("labels must lie in [0, 0.5)")
    torch.manual_seed(cfg.seed)
    model = RegressionCNN(cfg.base_filters, cfg.levels)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=max(3 * cfg.epochs // 4, 1), gamma=0.1)
    x = torch.from_numpy(normalize_fields(fields))
    y = torch.from_numpy(labels)
    n = x.shape[0]
    gen = torch.Generator().manual_seed(cfg.seed)
    history = []
    model.train()
    for epoch in range(cfg.epochs):
        perm = torch.randperm(n, generator=gen)
        tot = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            pred = model(augment_fields(x[idx], gen, cfg))
            loss = F.mse_loss(pred, y[idx])
            if not torch.isfinite(loss):
                raise RuntimeError(f"training diverged (non-finite loss at epoch {epoch})")
            opt.zero_grad()
            loss.backward()
            opt.step()
            tot += loss.item() * len(idx)
        sched.step()
        history.append(tot / n)
        if log_every and epoch % log_every == 0:
            print(f"epoch {epoch:4d}  mse {history[-1]:.5f}")
    model.eval()
    return model, history


@torch.no_grad()
def predict_nu(model: RegressionCNN, fields: np.ndarray, batch_size: int = 64) -> np.ndarray:
    model.eval()
    x = torch.from_numpy(normalize_fields(fields))
    out = []
    for start in range(0, x.shape[0], batch_size):
        out.append(model(x[start : start + batch_size]))
    return torch.cat(out).numpy()
