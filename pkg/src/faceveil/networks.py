"""Network definitions: translation generators, patch discriminators, the
mask-conditioned synthesizer with its multi-scale discriminators, and the
frozen perceptual feature extractor.

All forwards are deterministic given fixed weights. Image tensors are NCHW
float in [0,1]; semantic maps travel as 11-channel score/one-hot tensors.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.parametrizations import spectral_norm

from .dataset import NUM_CLASSES


@dataclass
class ModelConfig:
    image_size: int = 256
    seg_width: int = 64        # generator base channels (translator pair)
    disc_width: int = 64       # patch discriminator base channels
    synth_width: int = 64      # synthesizer base channels
    synth_disc_width: int = 64
    res_blocks: int = 9
    num_scales: int = 3        # multi-scale discriminator count
    disc_layers: int = 3       # stride-2 blocks in each multi-scale discriminator
    percep_scale: float = 1.0  # channel fraction of the perceptual net
    percep_weights: str = ""   # optional checkpoint; seeded frozen init otherwise
    percep_seed: int = 0


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


class ResnetGenerator(nn.Module):
    """Encoder, residual trunk, decoder translator.

    output="softmax" emits per-class probability maps (argmax gives a label
    map); output="unit" emits an image in [0,1].
    """

    def __init__(self, in_channels: int, out_channels: int, width: int = 64,
                 n_blocks: int = 9, output: str = "unit"):
        super().__init__()
        if output not in ("softmax", "unit"):
            raise ValueError(f"unknown output mode {output!r}")
        self.output = output
        layers = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(in_channels, width, 7),
            nn.InstanceNorm2d(width),
            nn.ReLU(inplace=True),
        ]
        ch = width
        for _ in range(2):  # downsample
            layers += [
                nn.Conv2d(ch, ch * 2, 3, stride=2, padding=1),
                nn.InstanceNorm2d(ch * 2),
                nn.ReLU(inplace=True),
            ]
            ch *= 2
        layers += [ResidualBlock(ch) for _ in range(n_blocks)]
        for _ in range(2):  # upsample
            layers += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(ch, ch // 2, 3, stride=1, padding=1),
                nn.InstanceNorm2d(ch // 2),
                nn.ReLU(inplace=True),
            ]
            ch //= 2
        layers += [nn.ReflectionPad2d(3), nn.Conv2d(ch, out_channels, 7)]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        out = self.model(x)
        if self.output == "softmax":
            return torch.softmax(out, dim=1)
        return (torch.tanh(out) + 1.0) / 2.0


class PatchDiscriminator(nn.Module):
    """70x70 receptive-field patch classifier emitting per-patch probabilities."""

    def __init__(self, in_channels: int, width: int = 64, n_strided: int = 3,
                 use_spectral_norm: bool = False):
        super().__init__()
        wrap = spectral_norm if use_spectral_norm else (lambda m: m)
        blocks = []
        ch = width
        blocks.append(nn.Sequential(
            wrap(nn.Conv2d(in_channels, ch, 4, stride=2, padding=1)),
            nn.LeakyReLU(0.2, inplace=True),
        ))
        for _ in range(n_strided - 1):
            blocks.append(nn.Sequential(
                wrap(nn.Conv2d(ch, ch * 2, 4, stride=2, padding=1)),
                nn.InstanceNorm2d(ch * 2),
                nn.LeakyReLU(0.2, inplace=True),
            ))
            ch *= 2
        blocks.append(nn.Sequential(
            wrap(nn.Conv2d(ch, ch * 2, 4, stride=1, padding=1)),
            nn.InstanceNorm2d(ch * 2),
            nn.LeakyReLU(0.2, inplace=True),
        ))
        ch *= 2
        self.blocks = nn.ModuleList(blocks)
        self.score = wrap(nn.Conv2d(ch, 1, 4, stride=1, padding=1))

    def features(self, x) -> list[torch.Tensor]:
        """Per-block activations; the last entry is the probability grid."""
        feats = []
        for block in self.blocks:
            x = block(x)
            feats.append(x)
        feats.append(torch.sigmoid(self.score(x)))
        return feats

    def forward(self, x):
        return self.features(x)[-1]


class MultiScaleDiscriminator(nn.Module):
    """M same-architecture patch discriminators over a resolution pyramid.

    Scale k sees the input average-pooled by 2**(k-1). Architectures match,
    weights do not.
    """

    def __init__(self, in_channels: int, width: int = 64, num_scales: int = 3,
                 n_strided: int = 3):
        super().__init__()
        self.num_scales = num_scales
        self.scales = nn.ModuleList([
            PatchDiscriminator(in_channels, width, n_strided, use_spectral_norm=True)
            for _ in range(num_scales)
        ])

    def pyramid(self, x) -> list[torch.Tensor]:
        levels = [x]
        for _ in range(self.num_scales - 1):
            levels.append(F.avg_pool2d(levels[-1], 2))
        return levels

    def features(self, x) -> list[list[torch.Tensor]]:
        return [d.features(lvl) for d, lvl in zip(self.scales, self.pyramid(x))]

    def forward(self, x) -> list[torch.Tensor]:
        return [d(lvl) for d, lvl in zip(self.scales, self.pyramid(x))]


class SpadeNorm(nn.Module):
    """Spatially-adaptive normalization conditioned on the semantic map."""

    def __init__(self, channels: int, label_channels: int, hidden: int):
        super().__init__()
        self.param_free = nn.InstanceNorm2d(channels, affine=False)
        self.shared = nn.Sequential(
            spectral_norm(nn.Conv2d(label_channels, hidden, 3, padding=1)),
            nn.ReLU(inplace=True),
        )
        self.gamma = spectral_norm(nn.Conv2d(hidden, channels, 3, padding=1))
        self.beta = spectral_norm(nn.Conv2d(hidden, channels, 3, padding=1))

    def forward(self, x, seg):
        normalized = self.param_free(x)
        seg = F.interpolate(seg, size=x.shape[2:], mode="nearest")
        actv = self.shared(seg)
        return normalized * (1 + self.gamma(actv)) + self.beta(actv)


class SpadeResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, label_channels: int, hidden: int):
        super().__init__()
        mid = min(in_ch, out_ch)
        self.norm1 = SpadeNorm(in_ch, label_channels, hidden)
        self.conv1 = spectral_norm(nn.Conv2d(in_ch, mid, 3, padding=1))
        self.norm2 = SpadeNorm(mid, label_channels, hidden)
        self.conv2 = spectral_norm(nn.Conv2d(mid, out_ch, 3, padding=1))
        self.learned_skip = in_ch != out_ch
        if self.learned_skip:
            self.norm_skip = SpadeNorm(in_ch, label_channels, hidden)
            self.conv_skip = spectral_norm(nn.Conv2d(in_ch, out_ch, 1, bias=False))

    def forward(self, x, seg):
        skip = x
        if self.learned_skip:
            skip = self.conv_skip(self.norm_skip(x, seg))
        h = self.conv1(F.leaky_relu(self.norm1(x, seg), 0.2))
        h = self.conv2(F.leaky_relu(self.norm2(h, seg), 0.2))
        return skip + h


class SpadeGenerator(nn.Module):
    """Semantic-map-conditioned synthesizer; every layer spectrally normalized.

    Output is tanh-scaled to [-1,1]; callers rescale to [0,1] at the boundary.
    """

    def __init__(self, label_channels: int = NUM_CLASSES, image_size: int = 256,
                 width: int = 64):
        super().__init__()
        if image_size < 32 or image_size & (image_size - 1):
            raise ValueError("image_size must be a power of two >= 32")
        self.image_size = image_size
        self.start_size = 8
        self.num_up = int(math.log2(image_size // self.start_size))
        hidden = min(128, 4 * width)
        chs = [width * 2 ** min(i, 3) for i in range(self.num_up, -1, -1)]
        self.entry = spectral_norm(nn.Conv2d(label_channels, chs[0], 3, padding=1))
        self.blocks = nn.ModuleList([
            SpadeResBlock(chs[i], chs[i + 1], label_channels, hidden)
            for i in range(self.num_up)
        ])
        self.out_conv = spectral_norm(nn.Conv2d(chs[-1], 3, 3, padding=1))

    def forward(self, seg):
        x = self.entry(F.interpolate(seg, size=(self.start_size,) * 2, mode="nearest"))
        for block in self.blocks:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = block(x, seg)
        return torch.tanh(self.out_conv(F.leaky_relu(x, 0.2)))


# VGG-19 convolution plan up to the fifth block's first ReLU, with taps at
# the first convolution of each block.
_VGG19_PLAN = (64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M",
               512, 512, 512, 512, "M", 512)
_VGG_TAPS = ("relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1")
_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


class Vgg19Features(nn.Module):
    """Frozen 19-layer-VGG-architecture feature extractor.

    Taps the first ReLU of each of the five convolution blocks. Weights come
    from a checkpoint when provided, otherwise from a seeded deterministic
    initialization that stays fixed for the life of the run; either way the
    state is hashed so runs can be tied to the exact extractor used.
    """

    def __init__(self, width_scale: float = 1.0, weights_path: str = "",
                 init_seed: int = 0):
        super().__init__()
        layers: list[nn.Module] = []
        taps = []
        in_ch = 3
        block, conv_in_block = 1, 0
        for item in _VGG19_PLAN:
            if item == "M":
                layers.append(nn.MaxPool2d(2))
                block += 1
                conv_in_block = 0
                continue
            out_ch = max(8, int(round(item * width_scale)))
            layers.append(nn.Conv2d(in_ch, out_ch, 3, padding=1))
            layers.append(nn.ReLU(inplace=True))
            conv_in_block += 1
            if conv_in_block == 1:
                taps.append(len(layers) - 1)
            in_ch = out_ch
        self.layers = nn.ModuleList(layers)
        self.tap_indexes = tuple(taps)
        self.layer_names = _VGG_TAPS

        if weights_path:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            self.load_state_dict(state)
        else:
            self._seeded_init(init_seed)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        self.state_hash = self._hash_state()
        mean = torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1)
        self.register_buffer("mean", mean)
        self.register_buffer("std", std)

    def _seeded_init(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        for name, p in sorted(self.named_parameters(), key=lambda kv: kv[0]):
            if p.dim() > 1:
                fan_in = p.shape[1] * p.shape[2] * p.shape[3]
                std = math.sqrt(2.0 / fan_in)
                p.data.copy_(torch.randn(p.shape, generator=gen) * std)
            else:
                p.data.zero_()

    def _hash_state(self) -> str:
        h = hashlib.sha256()
        for name, p in sorted(self.state_dict().items(), key=lambda kv: kv[0]):
            h.update(name.encode())
            h.update(p.numpy().tobytes())
        return h.hexdigest()

    def train(self, mode: bool = True):
        return super().train(False)  # permanently frozen

    def features(self, x) -> list[torch.Tensor]:
        x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        feats = []
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i in self.tap_indexes:
                feats.append(x)
        return feats

    def forward(self, x):
        return self.features(x)


@dataclass
class ModelBundle:
    """All trainable networks plus the frozen feature extractor."""

    segmenter: ResnetGenerator       # photo -> 11-channel class scores
    inverse: ResnetGenerator         # semantic scores -> photo
    d_photo: PatchDiscriminator      # judges photos produced by `inverse`
    d_mask: PatchDiscriminator       # judges semantic maps from `segmenter`
    synthesizer: SpadeGenerator      # semantic map -> photo
    d_synth: MultiScaleDiscriminator
    percep: Vgg19Features
    image_size: int
    config: ModelConfig = field(repr=False, default=None)

    def generators(self):
        return self.segmenter, self.inverse, self.synthesizer

    def discriminators(self):
        return self.d_photo, self.d_mask, self.d_synth

    def trainable(self) -> dict[str, nn.Module]:
        return {
            "segmenter": self.segmenter,
            "inverse": self.inverse,
            "d_photo": self.d_photo,
            "d_mask": self.d_mask,
            "synthesizer": self.synthesizer,
            "d_synth": self.d_synth,
        }

    def all_modules(self) -> dict[str, nn.Module]:
        return {**self.trainable(), "percep": self.percep}

    def eval_mode(self):
        for m in self.trainable().values():
            m.eval()
        return self


def build_models(cfg: ModelConfig, seed: int = 0) -> ModelBundle:
    """Construct all networks with seeded initialization."""
    torch.manual_seed(seed)
    segmenter = ResnetGenerator(3, NUM_CLASSES, cfg.seg_width, cfg.res_blocks,
                                output="softmax")
    inverse = ResnetGenerator(NUM_CLASSES, 3, cfg.seg_width, cfg.res_blocks,
                              output="unit")
    d_photo = PatchDiscriminator(3, cfg.disc_width)
    d_mask = PatchDiscriminator(NUM_CLASSES, cfg.disc_width)
    synthesizer = SpadeGenerator(NUM_CLASSES, cfg.image_size, cfg.synth_width)
    d_synth = MultiScaleDiscriminator(3, cfg.synth_disc_width, cfg.num_scales,
                                      cfg.disc_layers)
    percep = Vgg19Features(cfg.percep_scale, cfg.percep_weights, cfg.percep_seed)
    return ModelBundle(segmenter, inverse, d_photo, d_mask, synthesizer, d_synth,
                       percep, cfg.image_size, cfg)


def to_tensor(photo: np.ndarray) -> torch.Tensor:
    """HWC [0,1] numpy image -> 1CHW float tensor."""
    arr = np.asarray(photo, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got {arr.shape}")
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


def to_image(tensor: torch.Tensor) -> np.ndarray:
    """1CHW tensor -> HWC float numpy image clipped to [0,1]."""
    arr = tensor.detach().squeeze(0).permute(1, 2, 0).cpu().numpy()
    return np.clip(arr, 0.0, 1.0)


def one_hot_mask(labels, num_classes: int = NUM_CLASSES) -> torch.Tensor:
    """Integer label map (H,W) or (N,H,W) -> float one-hot (N,C,H,W)."""
    t = torch.as_tensor(np.asarray(labels), dtype=torch.long)
    if t.dim() == 2:
        t = t.unsqueeze(0)
    if t.numel() and (t.min() < 0 or t.max() >= num_classes):
        raise ValueError(f"labels outside 0..{num_classes - 1}")
    return F.one_hot(t, num_classes).permute(0, 3, 1, 2).float()


def segment(bundle: ModelBundle, photo: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Photo batch -> (class score maps, argmax label maps)."""
    if photo.dim() != 4 or photo.shape[1] != 3:
        raise ValueError(f"expected N,3,H,W photo tensor, got {tuple(photo.shape)}")
    if photo.shape[2] != bundle.image_size or photo.shape[3] != bundle.image_size:
        raise ValueError(
            f"expected {bundle.image_size}px input, got {tuple(photo.shape[2:])}")
    with torch.no_grad():
        scores = bundle.segmenter(photo)
    return scores, scores.argmax(dim=1)


def synthesize(bundle: ModelBundle, labels) -> torch.Tensor:
    """Label map -> photo batch in [0,1]."""
    onehot = one_hot_mask(labels)
    if onehot.shape[2] != bundle.image_size or onehot.shape[3] != bundle.image_size:
        raise ValueError(
            f"expected {bundle.image_size}px mask, got {tuple(onehot.shape[2:])}")
    with torch.no_grad():
        out = bundle.synthesizer(onehot)
    return (out + 1.0) / 2.0


def discriminator_features(disc: PatchDiscriminator, image: torch.Tensor) -> list[torch.Tensor]:
    """Layer activations of a patch discriminator; last entry is the score grid."""
    return disc.features(image)
