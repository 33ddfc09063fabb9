"""Five vision backbone families with binary heads, at two scales.

Tiny scale: purpose-built minimal instances (< 1M parameters each) that keep
the signature mechanism of their family so ensemble diversity is preserved
on a CPU budget:

  dense_connected_cnn            dense blocks with feature concatenation
  residual_cnn                   residual basic blocks
  compound_scaled_cnn            MBConv + squeeze-excitation, width/depth multipliers
  windowed_attention_transformer shifted-window self-attention + patch merging
  modernized_depthwise_cnn       depthwise 7x7 blocks, LayerNorm, inverted MLP

Paper scale: torchvision DenseNet121 / ResNet18 / EfficientNetV2-S / Swin-T /
ConvNeXt-Tiny. Pretrained weights are only ever read from a local cache named
by the MODEL_CACHE_DIR environment variable, never downloaded implicitly.

All heads are a single linear layer to 2 logits on pooled features. Logit
columns are ordered [notinfected, infected] everywhere.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeError, WeightsUnavailable
from .preprocess import PreprocessedImage

DENSE_CONNECTED = "dense_connected_cnn"
RESIDUAL = "residual_cnn"
COMPOUND_SCALED = "compound_scaled_cnn"
WINDOWED_ATTENTION = "windowed_attention_transformer"
MODERNIZED_DEPTHWISE = "modernized_depthwise_cnn"

BACKBONE_KINDS = (
    DENSE_CONNECTED,
    RESIDUAL,
    COMPOUND_SCALED,
    WINDOWED_ATTENTION,
    MODERNIZED_DEPTHWISE,
)

SCALES = ("paper", "tiny")
NUM_CLASSES = 2
INPUT_SIZE = 224


@dataclass(frozen=True)
class BackboneSpec:
    kind: str
    scale: str = "tiny"
    pretrained: bool = False
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        if self.kind not in BACKBONE_KINDS:
            raise ValueError(f"unknown backbone kind: {self.kind!r}")
        if self.scale not in SCALES:
            raise ValueError(f"unknown scale: {self.scale!r}")
        if self.scale == "tiny" and self.pretrained:
            raise ValueError("tiny models are trained from scratch")
        if self.num_classes != NUM_CLASSES:
            raise ValueError("heads are fixed at 2 logits")


@dataclass
class ModelHandle:
    spec: BackboneSpec
    module: nn.Module
    mode: str = "eval"

    @property
    def model_id(self) -> str:
        return self.spec.kind

    def eval(self) -> "ModelHandle":
        self.module.eval()
        self.mode = "eval"
        return self

    def train(self) -> "ModelHandle":
        self.module.train()
        self.mode = "train"
        return self


@dataclass
class LogitMatrix:
    values: np.ndarray  # (batch, 2), columns [notinfected, infected]
    model_id: str


# ---------------------------------------------------------------------------
# tiny family: dense connectivity
# ---------------------------------------------------------------------------

class _DenseLayer(nn.Module):
    def __init__(self, in_ch: int, growth: int):
        super().__init__()
        self.norm = nn.BatchNorm2d(in_ch)
        self.conv = nn.Conv2d(in_ch, growth, 3, padding=1, bias=False)

    def forward(self, x):
        out = self.conv(F.relu(self.norm(x)))
        return torch.cat([x, out], dim=1)


class _Transition(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.norm = nn.BatchNorm2d(in_ch)
        self.conv = nn.Conv2d(in_ch, out_ch, 1, bias=False)
        self.pool = nn.AvgPool2d(2)

    def forward(self, x):
        return self.pool(self.conv(F.relu(self.norm(x))))


class TinyDenseNet(nn.Module):
    def __init__(self, growth=12, block_layers=(3, 4, 4), num_classes=NUM_CLASSES):
        super().__init__()
        ch = 2 * growth
        # stride-4 stem keeps dense blocks at 28x28 and below (CPU budget)
        self.stem = nn.Sequential(
            nn.Conv2d(3, ch, 7, stride=4, padding=3, bias=False),
            nn.BatchNorm2d(ch),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        layers: list[nn.Module] = []
        for bi, n_layers in enumerate(block_layers):
            for _ in range(n_layers):
                layers.append(_DenseLayer(ch, growth))
                ch += growth
            if bi < len(block_layers) - 1:
                out_ch = ch // 2
                layers.append(_Transition(ch, out_ch))
                ch = out_ch
        self.features = nn.Sequential(*layers)
        self.final_norm = nn.BatchNorm2d(ch)
        self.head = nn.Linear(ch, num_classes)

    def forward(self, x):
        x = self.features(self.stem(x))
        x = F.relu(self.final_norm(x))
        x = F.adaptive_avg_pool2d(x, 1).flatten(1)
        return self.head(x)


# ---------------------------------------------------------------------------
# tiny family: residual blocks
# ---------------------------------------------------------------------------

class _BasicBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.down = None
        if stride != 1 or in_ch != out_ch:
            self.down = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )

    def forward(self, x):
        identity = self.down(x) if self.down is not None else x
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + identity)


class TinyResNet(nn.Module):
    def __init__(self, widths=(24, 48, 96, 128), num_classes=NUM_CLASSES):
        super().__init__()
        # stride-4 stem keeps residual stages at 28x28 and below (CPU budget)
        self.stem = nn.Sequential(
            nn.Conv2d(3, widths[0], 7, stride=4, padding=3, bias=False),
            nn.BatchNorm2d(widths[0]),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        blocks: list[nn.Module] = []
        in_ch = widths[0]
        for i, w in enumerate(widths):
            blocks.append(_BasicBlock(in_ch, w, stride=1 if i == 0 else 2))
            in_ch = w
        self.stages = nn.Sequential(*blocks)
        self.head = nn.Linear(in_ch, num_classes)

    def forward(self, x):
        x = self.stages(self.stem(x))
        x = F.adaptive_avg_pool2d(x, 1).flatten(1)
        return self.head(x)


# ---------------------------------------------------------------------------
# tiny family: compound-scaled MBConv with squeeze-excitation
# ---------------------------------------------------------------------------

def _round_channels(ch: float, divisor: int = 8) -> int:
    out = max(divisor, int(ch + divisor / 2) // divisor * divisor)
    if out < 0.9 * ch:  # never round down by more than 10%
        out += divisor
    return out


class _SqueezeExcite(nn.Module):
    def __init__(self, ch: int, se_ch: int):
        super().__init__()
        self.reduce = nn.Conv2d(ch, se_ch, 1)
        self.expand = nn.Conv2d(se_ch, ch, 1)

    def forward(self, x):
        s = F.adaptive_avg_pool2d(x, 1)
        s = torch.sigmoid(self.expand(F.silu(self.reduce(s))))
        return x * s


class _MBConv(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int, expand: int = 4):
        super().__init__()
        mid = in_ch * expand
        self.expand_conv = nn.Sequential(
            nn.Conv2d(in_ch, mid, 1, bias=False),
            nn.BatchNorm2d(mid),
            nn.SiLU(inplace=True),
        )
        self.dw = nn.Sequential(
            nn.Conv2d(mid, mid, 3, stride, 1, groups=mid, bias=False),
            nn.BatchNorm2d(mid),
            nn.SiLU(inplace=True),
        )
        self.se = _SqueezeExcite(mid, max(1, in_ch // 4))
        self.project = nn.Sequential(
            nn.Conv2d(mid, out_ch, 1, bias=False),
            nn.BatchNorm2d(out_ch),
        )
        self.use_skip = stride == 1 and in_ch == out_ch

    def forward(self, x):
        out = self.project(self.se(self.dw(self.expand_conv(x))))
        return x + out if self.use_skip else out


class TinyEfficientNet(nn.Module):
    """MBConv stack whose widths/depths come from compound multipliers."""

    # (out_channels, stride, repeats) at multiplier 1.0
    BASE_STAGES = ((24, 2, 1), (48, 2, 2), (96, 2, 2), (128, 2, 1))

    def __init__(self, width_mult=1.0, depth_mult=1.0, num_classes=NUM_CLASSES):
        super().__init__()
        stem_ch = _round_channels(16 * width_mult)
        # stride-4 stem keeps MBConv stages at 28x28 and below (CPU budget)
        self.stem = nn.Sequential(
            nn.Conv2d(3, stem_ch, 5, stride=4, padding=2, bias=False),
            nn.BatchNorm2d(stem_ch),
            nn.SiLU(inplace=True),
        )
        blocks: list[nn.Module] = []
        in_ch = stem_ch
        for base_ch, stride, repeats in self.BASE_STAGES:
            out_ch = _round_channels(base_ch * width_mult)
            for r in range(int(np.ceil(repeats * depth_mult))):
                blocks.append(_MBConv(in_ch, out_ch, stride if r == 0 else 1))
                in_ch = out_ch
        self.blocks = nn.Sequential(*blocks)
        head_ch = _round_channels(256 * width_mult)
        self.head_conv = nn.Sequential(
            nn.Conv2d(in_ch, head_ch, 1, bias=False),
            nn.BatchNorm2d(head_ch),
            nn.SiLU(inplace=True),
        )
        self.head = nn.Linear(head_ch, num_classes)

    def forward(self, x):
        x = self.head_conv(self.blocks(self.stem(x)))
        x = F.adaptive_avg_pool2d(x, 1).flatten(1)
        return self.head(x)


# ---------------------------------------------------------------------------
# tiny family: shifted-window self-attention
# ---------------------------------------------------------------------------

def _window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    b, h, w, c = x.shape
    x = x.view(b, h // window, window, w // window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, c)


def _window_reverse(win: torch.Tensor, window: int, h: int, w: int) -> torch.Tensor:
    b = win.shape[0] // (h * w // window // window)
    x = win.view(b, h // window, w // window, window, window, -1)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, h, w, -1)


class _WindowAttention(nn.Module):
    def __init__(self, dim: int, window: int, heads: int):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.window = window
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

        self.rel_bias = nn.Parameter(torch.zeros((2 * window - 1) ** 2, heads))
        nn.init.trunc_normal_(self.rel_bias, std=0.02)
        coords = torch.stack(
            torch.meshgrid(
                torch.arange(window), torch.arange(window), indexing="ij"
            )
        ).flatten(1)
        rel = coords[:, :, None] - coords[:, None, :]
        rel = rel.permute(1, 2, 0) + (window - 1)
        index = rel[:, :, 0] * (2 * window - 1) + rel[:, :, 1]
        self.register_buffer("rel_index", index, persistent=False)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
        bw, n, c = x.shape
        qkv = (
            self.qkv(x)
            .reshape(bw, n, 3, self.heads, c // self.heads)
            .permute(2, 0, 3, 1, 4)
        )
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q * self.scale) @ k.transpose(-2, -1)
        bias = self.rel_bias[self.rel_index.view(-1)].view(n, n, -1)
        attn = attn + bias.permute(2, 0, 1).unsqueeze(0)
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.view(bw // nw, nw, self.heads, n, n) + mask[None, :, None]
            attn = attn.view(bw, self.heads, n, n)
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(bw, n, c)
        return self.proj(out)


class _SwinBlock(nn.Module):
    def __init__(self, dim: int, resolution: int, heads: int, window: int,
                 shift: int, mlp_ratio: float = 2.0):
        super().__init__()
        self.resolution = resolution
        if resolution <= window:
            window = resolution
            shift = 0
        self.window = window
        self.shift = shift
        self.norm1 = nn.LayerNorm(dim)
        self.attn = _WindowAttention(dim, window, heads)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(
            nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim)
        )
        self.register_buffer(
            "attn_mask", self._build_mask(resolution, window, shift),
            persistent=False,
        )

    @staticmethod
    def _build_mask(res: int, window: int, shift: int) -> torch.Tensor | None:
        if shift == 0:
            return None
        # standard region labeling: windows straddling the rolled boundary
        # must not mix tokens from opposite edges
        img = torch.zeros(1, res, res, 1)
        slices = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
        cnt = 0
        for hs in slices:
            for ws in slices:
                img[:, hs, ws, :] = cnt
                cnt += 1
        win = _window_partition(img, window).squeeze(-1)
        diff = win[:, None, :] - win[:, :, None]
        return diff.masked_fill(diff != 0, -100.0).masked_fill(diff == 0, 0.0)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, c = x.shape
        res = self.resolution
        shortcut = x
        x = self.norm1(x).view(b, res, res, c)
        if self.shift:
            x = torch.roll(x, (-self.shift, -self.shift), dims=(1, 2))
        win = _window_partition(x, self.window)
        win = self.attn(win, self.attn_mask)
        x = _window_reverse(win, self.window, res, res)
        if self.shift:
            x = torch.roll(x, (self.shift, self.shift), dims=(1, 2))
        x = shortcut + x.view(b, n, c)
        return x + self.mlp(self.norm2(x))


class _PatchMerging(nn.Module):
    def __init__(self, dim: int, resolution: int):
        super().__init__()
        self.resolution = resolution
        self.norm = nn.LayerNorm(4 * dim)
        self.reduce = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, c = x.shape
        res = self.resolution
        x = x.view(b, res, res, c)
        x = torch.cat(
            [x[:, 0::2, 0::2], x[:, 1::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 1::2]],
            dim=-1,
        ).view(b, -1, 4 * c)
        return self.reduce(self.norm(x))


class TinySwin(nn.Module):
    def __init__(self, img_size=INPUT_SIZE, patch_size=8, dims=(24, 48, 96),
                 depths=(2, 2, 2), heads=(2, 4, 4), window=7,
                 num_classes=NUM_CLASSES):
        super().__init__()
        self.patch_embed = nn.Conv2d(3, dims[0], patch_size, patch_size)
        self.embed_norm = nn.LayerNorm(dims[0])
        res = img_size // patch_size
        stages: list[nn.Module] = []
        for si, (dim, depth, h) in enumerate(zip(dims, depths, heads)):
            for bi in range(depth):
                shift = 0 if bi % 2 == 0 else window // 2
                stages.append(_SwinBlock(dim, res, h, window, shift))
            if si < len(dims) - 1:
                stages.append(_PatchMerging(dim, res))
                res //= 2
        self.stages = nn.Sequential(*stages)
        self.final_norm = nn.LayerNorm(dims[-1])
        self.head = nn.Linear(dims[-1], num_classes)
        self.apply(self._init)

    @staticmethod
    def _init(m):
        if isinstance(m, nn.Linear):
            nn.init.trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)

    def forward(self, x):
        x = self.patch_embed(x)  # (b, c, h, w)
        x = x.flatten(2).transpose(1, 2)
        x = self.embed_norm(x)
        x = self.stages(x)
        x = self.final_norm(x).mean(dim=1)
        return self.head(x)


# ---------------------------------------------------------------------------
# tiny family: modernized depthwise blocks
# ---------------------------------------------------------------------------

class _ChannelsFirstLayerNorm(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))

    def forward(self, x):
        u = x.mean(1, keepdim=True)
        s = (x - u).pow(2).mean(1, keepdim=True)
        x = (x - u) / torch.sqrt(s + 1e-6)
        return x * self.weight[:, None, None] + self.bias[:, None, None]


class _ConvNeXtBlock(nn.Module):
    def __init__(self, dim: int, layer_scale: float = 1.0):
        super().__init__()
        self.dwconv = nn.Conv2d(dim, dim, 7, padding=3, groups=dim)
        self.norm = nn.LayerNorm(dim)
        self.pwconv1 = nn.Linear(dim, 4 * dim)
        self.pwconv2 = nn.Linear(4 * dim, dim)
        self.gamma = nn.Parameter(layer_scale * torch.ones(dim))

    def forward(self, x):
        inp = x
        x = self.dwconv(x).permute(0, 2, 3, 1)  # to channels-last
        x = self.pwconv2(F.gelu(self.pwconv1(self.norm(x))))
        return inp + (self.gamma * x).permute(0, 3, 1, 2)


class TinyConvNeXt(nn.Module):
    """Depthwise 7x7 blocks with LayerNorm and inverted MLPs.

    The stem normalization is batch-based rather than per-position LayerNorm:
    LayerNorm is scale-invariant, which starves the head of the global
    intensity component at this tiny training budget. Layer scale starts
    neutral (1.0) for the same reason.
    """

    def __init__(self, dims=(32, 64, 128), depths=(1, 1, 2),
                 num_classes=NUM_CLASSES):
        super().__init__()
        # 8x8 patchify stem keeps blocks at 28x28 and below (CPU budget)
        layers: list[nn.Module] = [
            nn.Conv2d(3, dims[0], 8, stride=8),
            nn.BatchNorm2d(dims[0]),
        ]
        for si, (dim, depth) in enumerate(zip(dims, depths)):
            layers.extend(_ConvNeXtBlock(dim) for _ in range(depth))
            if si < len(dims) - 1:
                layers.append(_ChannelsFirstLayerNorm(dim))
                layers.append(nn.Conv2d(dim, dims[si + 1], 2, stride=2))
        self.features = nn.Sequential(*layers)
        self.final_norm = nn.LayerNorm(dims[-1])
        self.head = nn.Linear(dims[-1], num_classes)

    def forward(self, x):
        x = self.features(x)
        x = x.mean(dim=(2, 3))
        return self.head(self.final_norm(x))


# ---------------------------------------------------------------------------
# construction and inference API
# ---------------------------------------------------------------------------

_TINY_BUILDERS = {
    DENSE_CONNECTED: TinyDenseNet,
    RESIDUAL: TinyResNet,
    COMPOUND_SCALED: TinyEfficientNet,
    WINDOWED_ATTENTION: TinySwin,
    MODERNIZED_DEPTHWISE: TinyConvNeXt,
}

MODEL_CACHE_ENV = "MODEL_CACHE_DIR"


def _paper_builders():
    from torchvision import models as tvm

    return {
        DENSE_CONNECTED: (tvm.densenet121, tvm.DenseNet121_Weights.IMAGENET1K_V1),
        RESIDUAL: (tvm.resnet18, tvm.ResNet18_Weights.IMAGENET1K_V1),
        COMPOUND_SCALED: (
            tvm.efficientnet_v2_s,
            tvm.EfficientNet_V2_S_Weights.IMAGENET1K_V1,
        ),
        WINDOWED_ATTENTION: (tvm.swin_t, tvm.Swin_T_Weights.IMAGENET1K_V1),
        MODERNIZED_DEPTHWISE: (
            tvm.convnext_tiny,
            tvm.ConvNeXt_Tiny_Weights.IMAGENET1K_V1,
        ),
    }


def _ensure_local_weights(weights_enum) -> None:
    """Point torch.hub at MODEL_CACHE_DIR and require the file to exist."""
    url = weights_enum.url
    filename = url.rsplit("/", 1)[-1]
    cache = os.environ.get(MODEL_CACHE_ENV)
    if not cache:
        raise WeightsUnavailable(
            f"pretrained weights requested but {MODEL_CACHE_ENV} is not set; "
            f"download {url} to <cache>/checkpoints/{filename} and export "
            f"{MODEL_CACHE_ENV}=<cache>"
        )
    expected = Path(cache) / "checkpoints" / filename
    if not expected.is_file():
        raise WeightsUnavailable(
            f"weights file not found: {expected}; download it from {url}"
        )
    torch.hub.set_dir(cache)


def _replace_head(module: nn.Module, kind: str) -> None:
    if kind == DENSE_CONNECTED:
        module.classifier = nn.Linear(module.classifier.in_features, NUM_CLASSES)
    elif kind == RESIDUAL:
        module.fc = nn.Linear(module.fc.in_features, NUM_CLASSES)
    elif kind == COMPOUND_SCALED:
        module.classifier[-1] = nn.Linear(
            module.classifier[-1].in_features, NUM_CLASSES
        )
    elif kind == WINDOWED_ATTENTION:
        module.head = nn.Linear(module.head.in_features, NUM_CLASSES)
    elif kind == MODERNIZED_DEPTHWISE:
        module.classifier[-1] = nn.Linear(
            module.classifier[-1].in_features, NUM_CLASSES
        )


def _construct(spec: BackboneSpec) -> nn.Module:
    if spec.scale == "tiny":
        return _TINY_BUILDERS[spec.kind]()
    builder, weights_enum = _paper_builders()[spec.kind]
    weights = None
    if spec.pretrained:
        _ensure_local_weights(weights_enum)
        weights = weights_enum
    module = builder(weights=weights)
    _replace_head(module, spec.kind)
    return module


def build_model(spec: BackboneSpec, seed: int | None = None) -> ModelHandle:
    """Build a model in eval mode; with ``seed`` the init is reproducible.

    Seeding happens inside a forked RNG scope so the global torch stream is
    untouched.
    """
    if seed is not None:
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            module = _construct(spec)
    else:
        module = _construct(spec)
    module.eval()
    return ModelHandle(spec=spec, module=module, mode="eval")


def count_parameters(handle: ModelHandle) -> int:
    return sum(p.numel() for p in handle.module.parameters())


def _as_batch_array(batch) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        arr = batch
    else:
        items = list(batch)
        if not items:
            return np.zeros((0, 3, INPUT_SIZE, INPUT_SIZE), dtype=np.float32)
        arr = np.stack([
            item.data if isinstance(item, PreprocessedImage) else np.asarray(item)
            for item in items
        ])
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 4 or arr.shape[1] != 3:
        raise ShapeError(f"expected a (batch, 3, H, W) input, got {arr.shape}")
    return arr


def forward_logits(
    handle: ModelHandle,
    batch: Sequence[PreprocessedImage] | np.ndarray,
    batch_size: int = 32,
) -> LogitMatrix:
    """Run inference on a batch, one logit row per input, order preserved.

    Requires eval mode; computation runs under inference_mode so repeated
    calls on the same inputs are deterministic.
    """
    if handle.mode != "eval":
        raise RuntimeError("forward_logits requires the model in eval mode")
    arr = _as_batch_array(batch)
    if arr.shape[0] == 0:
        return LogitMatrix(
            values=np.zeros((0, NUM_CLASSES), dtype=np.float32),
            model_id=handle.model_id,
        )
    outputs = []
    with torch.inference_mode():
        for start in range(0, arr.shape[0], batch_size):
            chunk = torch.from_numpy(arr[start:start + batch_size])
            outputs.append(handle.module(chunk).numpy())
    values = np.concatenate(outputs, axis=0).astype(np.float32)
    return LogitMatrix(values=values, model_id=handle.model_id)
