"""Frozen convolutional feature extractor for perceptual and style losses.

A small VGG-style stack with taps after each stage. Weights are either
seed-reproducible random (the default; deterministic and dependency-free)
or loaded from a saved state dict, so a pretrained extractor can be swapped
in without touching the losses. The extractor is always frozen.
"""

import torch
import torch.nn as nn


class FeatureExtractor(nn.Module):
    """Returns a list of feature maps, one per tapped stage.

    Inputs are expected in [0, 1] and are shifted to [-1, 1] internally.
    ``lpips_weight_{k}`` buffers hold the per-channel weights used by the
    perceptual distance (uniform 1/C unless loaded from file).
    """

    def __init__(self, channels=(16, 32, 64, 64), seed: int = 0):
        super().__init__()
        self.channels = tuple(channels)
        stages = []
        in_ch = 3
        for i, ch in enumerate(self.channels):
            convs = [nn.Conv2d(in_ch, ch, 3, padding=1), nn.ReLU(inplace=True)]
            if i < len(self.channels) - 1:
                convs += [nn.Conv2d(ch, ch, 3, padding=1), nn.ReLU(inplace=True)]
            stages.append(nn.Sequential(*convs))
            in_ch = ch
        self.stages = nn.ModuleList(stages)
        self.pool = nn.AvgPool2d(2)
        for k, ch in enumerate(self.channels):
            self.register_buffer(f"lpips_weight_{k}", torch.full((ch,), 1.0 / ch))
        self._init_weights(seed)
        self.requires_grad_(False)
        self.eval()

    def _init_weights(self, seed: int):
        g = torch.Generator().manual_seed(seed)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                m.weight.data.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=g)
                m.bias.data.zero_()

    def lpips_weights(self):
        return [getattr(self, f"lpips_weight_{k}") for k in range(len(self.channels))]

    def forward(self, x):
        if x.dim() == 3:
            x = x.unsqueeze(0)
        h = 2.0 * x - 1.0
        feats = []
        for i, stage in enumerate(self.stages):
            if i > 0:
                h = self.pool(h)
            h = stage(h)
            feats.append(h)
        return feats

    def save_weights(self, path):
        torch.save({"channels": self.channels, "state": self.state_dict()}, path)

    @classmethod
    def from_file(cls, path) -> "FeatureExtractor":
        blob = torch.load(path, weights_only=True)
        fx = cls(channels=blob["channels"])
        fx.load_state_dict(blob["state"])
        fx.requires_grad_(False)
        fx.eval()
        return fx
