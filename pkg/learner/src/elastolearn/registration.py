"""Unsupervised deformable registration: U-Net displacement predictor + STN.

The encoder uses 7x7 kernels with a doubling filter progression starting from
a width-reduced base (full width starts at 24); the decoder uses 3x3 kernels
with skip connections and batch normalization throughout. The spatial
transformer warps the source with the predicted displacement by differentiable
bilinear sampling, trained with normalized cross-correlation plus a smoothness
penalty on the displacement gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class RegistrationConfig:
    base_filters: int = 6  # 24 / width_factor at desk scale
    levels: int = 4
    lr: float = 1e-4
    lambda_cc: float = 1.0
    lambda_smooth: float = 0.001
    epochs: int = 200
    batch_size: int = 16
    seed: int = 0


def warp_images(images: torch.Tensor, displacement: torch.Tensor) -> torch.Tensor:
    """Sample images (n, 1, h, w) at x + u with border padding.

    Displacement is in pixels, channel 0 = x, channel 1 = y; matches the
    dataset convention target(x) = source(x + u(x)).
    """
    n, _, h, w = images.shape
    device = images.device
    ys, xs = torch.meshgrid(
        torch.arange(h, dtype=images.dtype, device=device),
        torch.arange(w, dtype=images.dtype, device=device),
        indexing="ij",
    )
    x = xs.unsqueeze(0) + displacement[:, 0]
    y = ys.unsqueeze(0) + displacement[:, 1]
    grid = torch.stack(
        [2.0 * x / (w - 1) - 1.0, 2.0 * y / (h - 1) - 1.0], dim=-1
    )
    return F.grid_sample(images, grid, mode="bilinear", padding_mode="border", align_corners=True)


def ncc_loss(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """1 - global normalized cross-correlation, averaged over the batch."""
    a = a.flatten(1)
    b = b.flatten(1)
    ac = a - a.mean(dim=1, keepdim=True)
    bc = b - b.mean(dim=1, keepdim=True)
    denom = ac.norm(dim=1) * bc.norm(dim=1) + 1e-12
    return (1.0 - (ac * bc).sum(dim=1) / denom).mean()


def smoothness_loss(displacement: torch.Tensor) -> torch.Tensor:
    """Sum over pixels of the displacement-gradient norm, averaged per image."""
    dx = displacement[:, :, :, 1:] - displacement[:, :, :, :-1]
    dy = displacement[:, :, 1:, :] - displacement[:, :, :-1, :]
    gx = F.pad(dx, (0, 1, 0, 0))
    gy = F.pad(dy, (0, 0, 0, 1))
    grad_norm = torch.sqrt(gx.pow(2).sum(dim=1) + gy.pow(2).sum(dim=1) + 1e-12)
    return grad_norm.sum(dim=(1, 2)).mean()


def _block(cin, cout, kernel):
    return nn.Sequential(
        nn.Conv2d(cin, cout, kernel, padding=kernel // 2),
        nn.BatchNorm2d(cout),
        nn.LeakyReLU(0.2, inplace=True),
    )


class RegistrationUNet(nn.Module):
    """Source+target in (2 channels), dense pixel displacement out."""

    def __init__(self, base_filters: int = 6, levels: int = 4):
        super().__init__()
        widths = [base_filters * 2**i for i in range(levels)]
        self.encoders = nn.ModuleList()
        cin = 2
        for wdt in widths:
            self.encoders.append(_block(cin, wdt, kernel=7))
            cin = wdt
        self.bottleneck = _block(widths[-1], widths[-1] * 2, kernel=7)
        self.decoders = nn.ModuleList()
        cin = widths[-1] * 2
        for wdt in reversed(widths):
            self.decoders.append(_block(cin + wdt, wdt, kernel=3))
            cin = wdt
        self.head = nn.Conv2d(widths[0], 2, kernel_size=3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, source: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        x = torch.cat([source, target], dim=1)
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottleneck(x)
        for dec, skip in zip(self.decoders, reversed(skips)):
            x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
            x = dec(torch.cat([x, skip], dim=1))
        return self.head(x)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    cc: float
    smooth: float


def train_registration(
    sources: np.ndarray,
    targets: np.ndarray,
    cfg: RegistrationConfig,
    log_every: int = 0,
) -> tuple[RegistrationUNet, list[EpochStats]]:
    """Minimize lambda_cc * (1 - NCC) + lambda_smooth * smoothness."""
    torch.manual_seed(cfg.seed)
    model = RegistrationUNet(cfg.base_filters, cfg.levels)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    src = torch.from_numpy(sources).float().unsqueeze(1)
    tgt = torch.from_numpy(targets).float().unsqueeze(1)
    n = src.shape[0]
    history = []
    gen = torch.Generator().manual_seed(cfg.seed)
    model.train()
    for epoch in range(cfg.epochs):
        perm = torch.randperm(n, generator=gen)
        tot = cc_tot = sm_tot = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            s, t = src[idx], tgt[idx]
            u = model(s, t)
            warped = warp_images(s, u)
            cc = ncc_loss(warped, t)
            sm = smoothness_loss(u)
            loss = cfg.lambda_cc * cc + cfg.lambda_smooth * sm
            if not torch.isfinite(loss):
                raise RuntimeError(f"training diverged (non-finite loss at epoch {epoch})")
            opt.zero_grad()
            loss.backward()
            opt.step()
            tot += loss.item() * len(idx)
            cc_tot += cc.item() * len(idx)
            sm_tot += sm.item() * len(idx)
        stats = EpochStats(epoch, tot / n, cc_tot / n, sm_tot / n)
        history.append(stats)
        if log_every and epoch % log_every == 0:
            print(f"epoch {epoch:4d}  loss {stats.loss:.4f}  cc {stats.cc:.4f}  smooth {stats.smooth:.1f}")
    model.eval()
    return model, history


@torch.no_grad()
def predict_displacements(
    model: RegistrationUNet, sources: np.ndarray, targets: np.ndarray, batch_size: int = 32
) -> np.ndarray:
    model.eval()
    src = torch.from_numpy(sources).float().unsqueeze(1)
    tgt = torch.from_numpy(targets).float().unsqueeze(1)
    out = []
    for start in range(0, src.shape[0], batch_size):
        out.append(model(src[start : start + batch_size], tgt[start : start + batch_size]))
    return torch.cat(out).numpy()


def field_rmse(predicted: np.ndarray, reference: np.ndarray) -> float:
    """RMSE over all pixels and both components, matching the pipeline metric."""
    d = (predicted - reference).ravel()
    return float(np.sqrt(np.mean(d * d)))
