"""CSP darknet backbones and the classifier head used for ablations.

A backbone is a stride-1 stem plus five stages; each stage downsamples by
two, splits into a bypass and a block path through two 1x1 convs, runs its
residual blocks, then concatenates and fuses with a 1x1 transition conv.
Block kinds: 'plain' residual, 'mrham' (hybrid attention carries the skip
path), or 'cbam'. The full preset stacks 1,2,8,8,4 blocks; the slim preset
cuts stages 3-5 to 4,4,2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .attention import CBAM, ResidualHybridAttention
from .nn import ConvBNAct, DropBlock, Linear, Module, ModuleList

BLOCK_KINDS = ("plain", "mrham", "cbam")

FULL_BLOCKS = (1, 2, 8, 8, 4)
SLIM_BLOCKS = (1, 2, 4, 4, 2)
BASE_STEM = 32
BASE_WIDTHS = (64, 128, 256, 512, 1024)


@dataclass
class CSPStageSpec:
    out_channels: int
    num_blocks: int
    block_kind: str = "plain"

    def validate(self, index):
        if self.num_blocks < 1:
            raise ValueError(f"stage {index}: num_blocks must be >= 1")
        if self.out_channels % 2 != 0:
            raise ValueError(f"stage {index}: out_channels must be even")
        if self.block_kind not in BLOCK_KINDS:
            raise ValueError(f"stage {index}: unknown block kind {self.block_kind!r}")


@dataclass
class BackboneSpec:
    stem_channels: int = BASE_STEM
    stages: list = field(default_factory=list)
    attention_mode: str = "rca_then_rsa"  # applies to mrham blocks only

    def validate(self):
        if len(self.stages) != 5:
            raise ValueError(f"backbone needs exactly 5 stages, got {len(self.stages)}")
        for i, s in enumerate(self.stages):
            s.validate(i)


def _scaled(value, width):
    return max(2, int(round(value * width / 2)) * 2)


def backbone_spec(name="cspdarknet53", block_kind="plain", width=1.0, attention_mode="rca_then_rsa"):
    """Named presets; `width` scales channels, block counts are fixed per preset."""
    presets = {"cspdarknet53": FULL_BLOCKS, "cspdarknet53-slim": SLIM_BLOCKS}
    if name not in presets:
        raise ValueError(f"unknown backbone preset {name!r} (choices: {sorted(presets)})")
    stages = [
        CSPStageSpec(_scaled(c, width), b, block_kind)
        for c, b in zip(BASE_WIDTHS, presets[name])
    ]
    return BackboneSpec(
        stem_channels=_scaled(BASE_STEM, width), stages=stages, attention_mode=attention_mode
    )


def count_conv_layers(spec: BackboneSpec):
    """Stem + per-stage downsample, two split convs and a transition, plus two
    convs per block. Attention-internal convs are not counted as layers."""
    spec.validate()
    return 1 + 5 + 3 * 5 + 2 * sum(s.num_blocks for s in spec.stages)


def _attention_reduction(channels):
    for r in (16, 8, 4, 2):
        if channels % r == 0 and channels >= r:
            return r
    return 1


def make_block(kind, channels, rng, attention_mode="rca_then_rsa"):
    if kind == "plain":
        return ResidualBlock(rng, channels)
    if kind == "mrham":
        return HybridAttentionBlock(rng, channels, attention_mode)
    if kind == "cbam":
        return CBAMBlock(rng, channels)
    raise ValueError(f"unknown block kind {kind!r} (choices: {BLOCK_KINDS})")


class ResidualBlock(Module):
    """x + conv3x3(conv1x1(x)) with a half-width bottleneck."""

    def __init__(self, rng, channels):
        super().__init__()
        if channels % 2 != 0:
            raise ValueError(f"block channels must be even, got {channels}")
        self.conv1 = ConvBNAct(rng, channels, channels // 2, 1)
        self.conv2 = ConvBNAct(rng, channels // 2, channels, 3)

    def stack(self, x):
        return self.conv2(self.conv1(x))

    def forward(self, x):
        return ops.add(x, self.stack(x))


class HybridAttentionBlock(ResidualBlock):
    """Attention replaces the identity skip: the residual sums inside the
    channel/spatial gates carry the shortcut."""

    def __init__(self, rng, channels, mode="rca_then_rsa"):
        super().__init__(rng, channels)
        self.attn = ResidualHybridAttention(
            rng, channels, reduction=_attention_reduction(channels), mode=mode
        )

    def forward(self, x):
        return self.attn(self.stack(x))


class CBAMBlock(ResidualBlock):
    def __init__(self, rng, channels):
        super().__init__(rng, channels)
        self.attn = CBAM(rng, channels, reduction=_attention_reduction(channels))

    def forward(self, x):
        return ops.add(x, self.attn(self.stack(x)))


class CSPStage(Module):
    def __init__(self, rng, in_ch, spec: CSPStageSpec, attention_mode):
        super().__init__()
        out = spec.out_channels
        half = out // 2
        self.down = ConvBNAct(rng, in_ch, out, 3, stride=2)
        self.split_bypass = ConvBNAct(rng, out, half, 1)
        self.split_blocks = ConvBNAct(rng, out, half, 1)
        self.blocks = ModuleList(
            make_block(spec.block_kind, half, rng, attention_mode)
            for _ in range(spec.num_blocks)
        )
        self.transition = ConvBNAct(rng, out, out, 1)

    def forward(self, x):
        x = self.down(x)
        bypass = self.split_bypass(x)
        y = self.split_blocks(x)
        for block in self.blocks:
            y = block(y)
        return self.transition(ops.concat([y, bypass], axis=1))


class Backbone(Module):
    """Returns (c3, c4, c5) feature maps at strides 8, 16, 32."""

    def __init__(self, spec: BackboneSpec, rng):
        super().__init__()
        spec.validate()
        self.spec = spec
        self.stem = ConvBNAct(rng, 3, spec.stem_channels, 3, stride=1)
        stages = []
        in_ch = spec.stem_channels
        for stage_spec in spec.stages:
            stages.append(CSPStage(rng, in_ch, stage_spec, spec.attention_mode))
            in_ch = stage_spec.out_channels
        self.stages = ModuleList(stages)
        # structured regularization only where maps are still rich (stages 4, 5)
        self.drop4 = DropBlock()
        self.drop5 = DropBlock()

    @property
    def out_channels(self):
        return tuple(s.out_channels for s in self.spec.stages[2:])

    def forward(self, x):
        x = self.stem(x)
        x = self.stages[0](x)
        x = self.stages[1](x)
        c3 = self.stages[2](x)
        c4 = self.drop4(self.stages[3](c3))
        c5 = self.drop5(self.stages[4](c4))
        return c3, c4, c5

    def reseed_dropblock(self, seed_seq):
        for i, m in enumerate(mod for mod in self.modules() if isinstance(mod, DropBlock)):
            m.reseed(np.random.SeedSequence([int(seed_seq), i]))


class Classifier(Module):
    """Backbone features -> global average pool -> class scores."""

    def __init__(self, spec: BackboneSpec, num_classes, rng):
        super().__init__()
        if num_classes < 2:
            raise ValueError("classifier needs at least 2 classes")
        self.backbone = Backbone(spec, rng)
        self.head = Linear(rng, spec.stages[-1].out_channels, num_classes)

    def forward(self, images):
        _, _, c5 = self.backbone(images)
        pooled = ops.global_avg_pool(c5)
        return self.head(ops.reshape(pooled, (pooled.shape[0], pooled.shape[1])))
