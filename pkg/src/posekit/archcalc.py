"""Analytic FLOP and parameter accounting for convolutional pose networks.

Conventions: one multiply-accumulate counts as one FLOP; bias terms are
excluded from FLOPs but included in parameter counts; pooling, concatenation
and residual additions count zero FLOPs. Spatial dims propagate through
strides with ceil division (same padding); dilation changes receptive field
only, never cost.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import InvalidArchitectureError

LAYER_KINDS = ("conv", "depthwise_conv", "pointwise_conv", "pool", "concat", "residual_add")

_ZERO_COST_KINDS = ("pool", "concat", "residual_add")


@dataclass(frozen=True)
class LayerSpec:
    """One layer. Spatial input dims are resolved during evaluation."""

    name: str
    kind: str
    in_channels: int
    out_channels: int
    kernel: int = 1
    stride: int = 1
    dilation: int = 1
    input_h: int | None = None
    input_w: int | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise InvalidArchitectureError(self.name, f"unknown kind '{self.kind}'")
        if min(self.in_channels, self.out_channels) < 1:
            raise InvalidArchitectureError(self.name, "channel counts must be >= 1")
        if min(self.kernel, self.stride, self.dilation) < 1:
            raise InvalidArchitectureError(self.name, "kernel/stride/dilation must be >= 1")
        if self.kind == "depthwise_conv" and self.in_channels != self.out_channels:
            raise InvalidArchitectureError(
                self.name, "depthwise convolution requires in_channels == out_channels"
            )
        if self.kind == "pointwise_conv" and self.kernel != 1:
            raise InvalidArchitectureError(self.name, "pointwise convolution requires kernel 1")
        if self.kind in _ZERO_COST_KINDS and self.kind != "concat" \
                and self.in_channels != self.out_channels:
            raise InvalidArchitectureError(self.name, f"{self.kind} cannot change channels")

    @property
    def out_h(self) -> int:
        self._require_resolved()
        return -(-self.input_h // self.stride)

    @property
    def out_w(self) -> int:
        self._require_resolved()
        return -(-self.input_w // self.stride)

    def _require_resolved(self):
        if self.input_h is None or self.input_w is None:
            raise InvalidArchitectureError(self.name, "spatial dims not resolved yet")


def layer_flops(layer: LayerSpec) -> int:
    """Multiply-accumulate count for one resolved layer."""
    px = layer.out_h * layer.out_w
    if layer.kind == "conv":
        return px * layer.out_channels * layer.in_channels * layer.kernel ** 2
    if layer.kind == "depthwise_conv":
        return px * layer.out_channels * layer.kernel ** 2
    if layer.kind == "pointwise_conv":
        return px * layer.out_channels * layer.in_channels
    layer._require_resolved()
    return 0


def layer_params(layer: LayerSpec) -> int:
    """Weight plus bias count for one layer (zero for cost-free kinds)."""
    if layer.kind == "conv":
        return layer.out_channels * layer.in_channels * layer.kernel ** 2 + layer.out_channels
    if layer.kind == "depthwise_conv":
        return layer.out_channels * layer.kernel ** 2 + layer.out_channels
    if layer.kind == "pointwise_conv":
        return layer.out_channels * layer.in_channels + layer.out_channels
    return 0


@dataclass(frozen=True)
class LayerGroup:
    """A named run of layers, optionally duplicated across parallel branches.

    ``branches`` multiplies the trunk cost (2 models two identical prediction
    branches). ``heads`` are evaluated once each at the trunk's output
    resolution and are not multiplied; they express per-branch output layers
    whose widths differ.
    """

    name: str
    layers: tuple
    branches: int = 1
    heads: tuple = ()

    def __post_init__(self):
        if self.branches not in (1, 2):
            raise InvalidArchitectureError(self.name, "branches must be 1 or 2")
        if not self.layers:
            raise InvalidArchitectureError(self.name, "group has no layers")


@dataclass(frozen=True)
class ArchSpec:
    name: str
    input_height: int
    input_width: int
    groups: tuple

    def __post_init__(self):
        if min(self.input_height, self.input_width) < 1:
            raise InvalidArchitectureError(self.name, "input dims must be >= 1")
        names = [g.name for g in self.groups]
        if len(set(names)) != len(names):
            raise InvalidArchitectureError(self.name, "group names must be unique")


@dataclass(frozen=True)
class LayerCost:
    group: str
    layer: str
    kind: str
    out_h: int
    out_w: int
    out_channels: int
    multiplier: int
    flops: int
    params: int


@dataclass(frozen=True)
class GroupCost:
    name: str
    gflops: float
    cumulative_gflops: float
    params: int


@dataclass(frozen=True)
class ComplexityReport:
    arch_name: str
    input_height: int
    input_width: int
    layers: tuple
    groups: tuple
    total_gflops: float
    total_params: int
    footnotes: tuple = ()

    def group(self, name: str) -> GroupCost:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        return {
            "arch": self.arch_name,
            "input": [self.input_height, self.input_width],
            "groups": [
                {
                    "name": g.name,
                    "gflops": g.gflops,
                    "cumulative_gflops": g.cumulative_gflops,
                    "params": g.params,
                }
                for g in self.groups
            ],
            "total_gflops": self.total_gflops,
            "total_params": self.total_params,
            "footnotes": list(self.footnotes),
        }

    def format_text(self) -> str:
        lines = [
            f"Architecture: {self.arch_name} at {self.input_height}x{self.input_width}",
            f"{'Group':<24}{'GFLOPs':>10}{'GFLOPs total':>14}{'Params':>12}",
        ]
        for g in self.groups:
            lines.append(
                f"{g.name:<24}{g.gflops:>10.1f}{g.cumulative_gflops:>14.1f}{g.params:>12,}"
            )
        lines.append(
            f"{'Total':<24}{self.total_gflops:>10.1f}{self.total_gflops:>14.1f}"
            f"{self.total_params:>12,}"
        )
        lines.append(f"Parameters: {self.total_params / 1e6:.2f}M")
        for note in self.footnotes:
            lines.append(f"Note: {note}")
        return "\n".join(lines)


def evaluate(arch: ArchSpec) -> ComplexityReport:
    """Resolve spatial dims through the network and total up cost per group.

    Channel chaining is validated inside each group (a leading concat resets
    the channel count, matching stage inputs assembled from several sources);
    branch multiplicity doubles trunk cost; heads are added once each.
    """
    h, w = arch.input_height, arch.input_width
    channels: int | None = None
    layer_rows: list[LayerCost] = []
    group_rows: list[GroupCost] = []
    cumulative = 0
    total_params = 0
    for grp in arch.groups:
        g_flops = 0
        g_params = 0
        for i, layer in enumerate(grp.layers):
            if layer.kind == "concat":
                channels = layer.out_channels
            elif channels is not None and layer.in_channels != channels:
                raise InvalidArchitectureError(
                    layer.name,
                    f"expects {layer.in_channels} input channels but receives {channels}",
                )
            resolved = replace(layer, input_h=h, input_w=w)
            if resolved.out_h < 1 or resolved.out_w < 1:
                raise InvalidArchitectureError(layer.name, "spatial dims collapsed below 1")
            f = layer_flops(resolved) * grp.branches
            p = layer_params(resolved) * grp.branches
            layer_rows.append(LayerCost(grp.name, layer.name, layer.kind,
                                        resolved.out_h, resolved.out_w,
                                        layer.out_channels, grp.branches, f, p))
            g_flops += f
            g_params += p
            h, w = resolved.out_h, resolved.out_w
            channels = layer.out_channels
        for head in grp.heads:
            if head.in_channels != channels:
                raise InvalidArchitectureError(
                    head.name,
                    f"expects {head.in_channels} input channels but receives {channels}",
                )
            resolved = replace(head, input_h=h, input_w=w)
            f = layer_flops(resolved)
            p = layer_params(resolved)
            layer_rows.append(LayerCost(grp.name, head.name, head.kind,
                                        resolved.out_h, resolved.out_w,
                                        head.out_channels, 1, f, p))
            g_flops += f
            g_params += p
        cumulative += g_flops
        total_params += g_params
        group_rows.append(GroupCost(grp.name, g_flops / 1e9, cumulative / 1e9, g_params))
    return ComplexityReport(
        arch_name=arch.name,
        input_height=arch.input_height,
        input_width=arch.input_width,
        layers=tuple(layer_rows),
        groups=tuple(group_rows),
        total_gflops=cumulative / 1e9,
        total_params=total_params,
        footnotes=_FOOTNOTES.get(arch.name, ()),
    )


_FOOTNOTES = {
    "lightweight": (
        "conv4_3 as three separable convolutions computes to ~0.22 GFLOPs; "
        "the reference table rounds this row to 0.3.",
    ),
}


# ---------------------------------------------------------------------------
# Built-in architectures
# ---------------------------------------------------------------------------

def _conv(name, cin, cout, kernel, stride=1, dilation=1):
    return LayerSpec(name, "conv", cin, cout, kernel, stride, dilation)


def _pool(name, ch):
    return LayerSpec(name, "pool", ch, ch, kernel=2, stride=2)


def _dw_sep(prefix, cin, cout, stride=1, dilation=1):
    """Depthwise 3x3 followed by a pointwise projection."""
    return [
        LayerSpec(f"{prefix}/dw", "depthwise_conv", cin, cin, 3, stride, dilation),
        LayerSpec(f"{prefix}/sep", "pointwise_conv", cin, cout),
    ]


def _heads(prefix, cin):
    return (
        LayerSpec(f"{prefix}/heatmaps", "pointwise_conv", cin, 19),
        LayerSpec(f"{prefix}/pafs", "pointwise_conv", cin, 38),
    )


# Stage inputs concatenate trunk features (128) with 19 + 38 prediction maps.
_STAGE_INPUT_CHANNELS = 128 + 19 + 38


def _vgg19_backbone():
    layers = [
        _conv("conv1_1", 3, 64, 3), _conv("conv1_2", 64, 64, 3), _pool("pool1", 64),
        _conv("conv2_1", 64, 128, 3), _conv("conv2_2", 128, 128, 3), _pool("pool2", 128),
        _conv("conv3_1", 128, 256, 3), _conv("conv3_2", 256, 256, 3),
        _conv("conv3_3", 256, 256, 3), _conv("conv3_4", 256, 256, 3), _pool("pool3", 256),
        _conv("conv4_1", 256, 512, 3), _conv("conv4_2", 512, 512, 3),
    ]
    return LayerGroup("backbone", tuple(layers))


def _initial_stage(branches: int):
    trunk = (
        _conv("initial/conv1", 128, 128, 3),
        _conv("initial/conv2", 128, 128, 3),
        _conv("initial/conv3", 128, 128, 3),
        LayerSpec("initial/conv4", "pointwise_conv", 128, 512),
    )
    return LayerGroup("initial_stage", trunk, branches=branches,
                      heads=_heads("initial", 512))


def _refinement_stage_7x7(index: int, branches: int):
    name = f"refinement_stage_{index}"
    trunk = [LayerSpec(f"{name}/concat", "concat",
                       _STAGE_INPUT_CHANNELS, _STAGE_INPUT_CHANNELS)]
    cin = _STAGE_INPUT_CHANNELS
    for i in range(1, 6):
        trunk.append(_conv(f"{name}/conv{i}", cin, 128, 7))
        cin = 128
    trunk.append(LayerSpec(f"{name}/conv6", "pointwise_conv", 128, 128))
    return LayerGroup(name, tuple(trunk), branches=branches, heads=_heads(name, 128))


def builtin_baseline_openpose(input_height: int = 368, input_width: int = 368) -> ArchSpec:
    """Stock two-branch network: VGG-19 backbone, one initial and five 7x7
    refinement stages."""
    groups = [
        _vgg19_backbone(),
        LayerGroup("conv4_3", (_conv("conv4_3", 512, 256, 3),)),
        LayerGroup("conv4_4", (_conv("conv4_4", 256, 128, 3),)),
        _initial_stage(branches=2),
    ]
    for i in range(1, 6):
        groups.append(_refinement_stage_7x7(i, branches=2))
    return ArchSpec("baseline", input_height, input_width, tuple(groups))


def conv7x7_replacement_block(prefix: str, cin: int, channels: int = 128):
    """The cheap stand-in for a 7x7 convolution: 1x1, 3x3, dilated 3x3,
    plus a cost-free residual add."""
    return [
        LayerSpec(f"{prefix}/squeeze", "pointwise_conv", cin, channels),
        _conv(f"{prefix}/conv", channels, channels, 3),
        _conv(f"{prefix}/conv_dil", channels, channels, 3, dilation=2),
        LayerSpec(f"{prefix}/residual", "residual_add", channels, channels),
    ]


def _mobilenet_v1_backbone(cut: str, dilated: bool):
    """MobileNet v1 trunk cut after the named block.

    ``dilated`` removes the conv4_2 stride and dilates conv5_1 so the output
    stays at stride 8.
    """
    layers = [_conv("conv1", 3, 32, 3, stride=2)]
    layers += _dw_sep("conv2_1", 32, 64)
    layers += _dw_sep("conv2_2", 64, 128, stride=2)
    layers += _dw_sep("conv3_1", 128, 128)
    layers += _dw_sep("conv3_2", 128, 256, stride=2)
    layers += _dw_sep("conv4_1", 256, 256)
    if cut != "conv4_1":
        layers += _dw_sep("conv4_2", 256, 512, stride=1 if dilated else 2)
        layers += _dw_sep("conv5_1", 512, 512, dilation=2 if dilated else 1)
        for i in range(2, 6):
            layers += _dw_sep(f"conv5_{i}", 512, 512)
        if cut == "conv5_6":
            layers += _dw_sep("conv5_6", 512, 1024, stride=1 if dilated else 2,
                              dilation=2 if dilated else 1)
        elif cut != "conv5_5":
            raise ValueError(f"unknown cut point '{cut}'")
    return LayerGroup("backbone", tuple(layers))


def _inverted_residual(prefix, cin, cout, expand, stride=1, dilation=1):
    layers = []
    mid = cin * expand
    if expand != 1:
        layers.append(LayerSpec(f"{prefix}/expand", "pointwise_conv", cin, mid))
    layers.append(LayerSpec(f"{prefix}/dw", "depthwise_conv", mid, mid, 3, stride, dilation))
    layers.append(LayerSpec(f"{prefix}/project", "pointwise_conv", mid, cout))
    if stride == 1 and cin == cout:
        layers.append(LayerSpec(f"{prefix}/residual", "residual_add", cout, cout))
    return layers


def _mobilenet_v2_backbone_conv6_3():
    """MobileNet v2 trunk cut after the conv6_3 block.

    Block names follow the Caffe port. The strides that would push past 8
    (conv4_3 and conv5_3) are removed, with dilations 2 and 4 on their
    depthwise convolutions to keep the receptive field; dilation is
    cost-neutral here.
    """
    layers = [_conv("conv1", 3, 32, 3, stride=2)]
    layers += _inverted_residual("conv2_1", 32, 16, expand=1)
    layers += _inverted_residual("conv2_2", 16, 24, expand=6, stride=2)
    layers += _inverted_residual("conv3_1", 24, 24, expand=6)
    layers += _inverted_residual("conv3_2", 24, 32, expand=6, stride=2)
    layers += _inverted_residual("conv4_1", 32, 32, expand=6)
    layers += _inverted_residual("conv4_2", 32, 32, expand=6)
    layers += _inverted_residual("conv4_3", 32, 64, expand=6, dilation=2)
    for i in range(4, 7):
        layers += _inverted_residual(f"conv4_{i}", 64, 64, expand=6)
    layers += _inverted_residual("conv4_7", 64, 96, expand=6)
    layers += _inverted_residual("conv5_1", 96, 96, expand=6)
    layers += _inverted_residual("conv5_2", 96, 96, expand=6)
    layers += _inverted_residual("conv5_3", 96, 160, expand=6, dilation=4)
    layers += _inverted_residual("conv6_1", 160, 160, expand=6)
    layers += _inverted_residual("conv6_2", 160, 160, expand=6)
    layers += _inverted_residual("conv6_3", 160, 320, expand=6)
    return LayerGroup("backbone", tuple(layers))


def builtin_lightweight(input_height: int = 368, input_width: int = 368) -> ArchSpec:
    """Single-branch network: dilated MobileNet v1 backbone, separable
    adapters, one initial stage and one refinement stage built from
    7x7-replacement blocks."""
    conv4_3 = (
        _dw_sep("conv4_3a", 512, 128)
        + _dw_sep("conv4_3b", 128, 128)
        + _dw_sep("conv4_3c", 128, 128)
    )
    refine_name = "refinement_stage_1"
    refine = [LayerSpec(f"{refine_name}/concat", "concat",
                        _STAGE_INPUT_CHANNELS, _STAGE_INPUT_CHANNELS)]
    cin = _STAGE_INPUT_CHANNELS
    for i in range(1, 6):
        refine += conv7x7_replacement_block(f"{refine_name}/block{i}", cin)
        cin = 128
    refine.append(LayerSpec(f"{refine_name}/conv6", "pointwise_conv", 128, 128))
    groups = (
        _mobilenet_v1_backbone(cut="conv5_5", dilated=True),
        LayerGroup("conv4_3", tuple(conv4_3)),
        LayerGroup("conv4_4", (_conv("conv4_4", 128, 128, 3),)),
        _initial_stage(branches=1),
        LayerGroup(refine_name, tuple(refine), heads=_heads(refine_name, 128)),
    )
    return ArchSpec("lightweight", input_height, input_width, groups)


def _variant(name: str, backbone: LayerGroup, backbone_out: int,
             input_height: int, input_width: int) -> ArchSpec:
    """A backbone candidate completed with the stock two-branch stages."""
    groups = (
        backbone,
        LayerGroup("conv4_3", (_conv("conv4_3", backbone_out, 256, 3),)),
        LayerGroup("conv4_4", (_conv("conv4_4", 256, 128, 3),)),
        _initial_stage(branches=2),
        _refinement_stage_7x7(1, branches=2),
    )
    return ArchSpec(name, input_height, input_width, groups)


def builtin_backbone_variants(input_height: int = 368, input_width: int = 368):
    """The four backbone candidates, each completed with identical stages so
    their totals are comparable."""
    return [
        _variant("mobilenet_v1_conv4_1",
                 _mobilenet_v1_backbone("conv4_1", dilated=False), 256,
                 input_height, input_width),
        _variant("dilated_mobilenet_v2_conv6_3",
                 _mobilenet_v2_backbone_conv6_3(), 320,
                 input_height, input_width),
        _variant("dilated_mobilenet_v1_conv5_5",
                 _mobilenet_v1_backbone("conv5_5", dilated=True), 512,
                 input_height, input_width),
        _variant("dilated_mobilenet_v1_conv5_6",
                 _mobilenet_v1_backbone("conv5_6", dilated=True), 1024,
                 input_height, input_width),
    ]
