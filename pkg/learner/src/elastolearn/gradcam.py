"""Gradient-weighted activation maps for the ratio regressor.

Channel weights are the spatial average of the output's gradient at the chosen
convolutional layer; the weighted activation sum is rectified, upsampled to
the input size, and normalized to [0, 1].
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .regression import RegressionCNN


def grad_cam(model: RegressionCNN, field: np.ndarray, layer: torch.nn.Module | None = None) -> np.ndarray:
    """Heatmap (h, w) in [0, 1] for a single (2, h, w) displacement field."""
    field = np.asarray(field, dtype=np.float32)
    if field.ndim != 3 or field.shape[0] != 2:
        raise ValueError("expected a (2, height, width) field")
    if layer is None:
        convs = [m for m in model.features if isinstance(m, torch.nn.Conv2d)]
        layer = convs[-1]
    if not isinstance(layer, torch.nn.Conv2d):
        raise ValueError("layer must be a convolution with spatial extent")

    captured = {}

    def hook(_module, _inputs, output):
        captured["act"] = output
        output.retain_grad()

    handle = layer.register_forward_hook(hook)
    try:
        model.eval()
        x = torch.from_numpy(field).unsqueeze(0)
        out = model(x)
        model.zero_grad()
        out.sum().backward()
    finally:
        handle.remove()

    act = captured["act"]
    weights = act.grad.mean(dim=(2, 3), keepdim=True)
    cam = F.relu((weights * act).sum(dim=1, keepdim=True))
    cam = F.interpolate(cam, size=field.shape[1:], mode="bilinear", align_corners=False)
    cam = cam[0, 0].detach().numpy()
    peak = cam.max()
    if peak > 0:
        cam = cam / peak
    return cam.astype(np.float32)
