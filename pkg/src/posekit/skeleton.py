"""Body model shared by the decoder, the synthesizer, and the file formats.

18 keypoint kinds, 19 limb types. Part-affinity fields carry one (x, y)
vector field per limb type, so 38 channels total; heatmaps carry one channel
per kind plus a background channel at index 18.
"""

from __future__ import annotations

from dataclasses import dataclass, field

KEYPOINT_NAMES = (
    "nose", "neck",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle",
    "r_eye", "l_eye", "r_ear", "l_ear",
)

NUM_KEYPOINTS = len(KEYPOINT_NAMES)
BACKGROUND_CHANNEL = 18
NUM_HEATMAP_CHANNELS = NUM_KEYPOINTS + 1
NUM_PAF_CHANNELS = 38


@dataclass(frozen=True)
class LimbType:
    """A directed connection between two keypoint kinds and its PAF channels."""

    id: int
    from_kind: int
    to_kind: int
    paf_x_channel: int
    paf_y_channel: int


def _build_limbs() -> tuple[LimbType, ...]:
    pairs = (
        (1, 2), (1, 5),            # neck to shoulders
        (2, 3), (3, 4),            # right arm
        (5, 6), (6, 7),            # left arm
        (1, 8), (8, 9), (9, 10),   # right leg
        (1, 11), (11, 12), (12, 13),  # left leg
        (1, 0),                    # neck to nose
        (0, 14), (14, 16),         # right eye, ear
        (0, 15), (15, 17),         # left eye, ear
        (2, 16), (5, 17),          # shoulder-to-ear cross links
    )
    return tuple(
        LimbType(i, a, b, 2 * i, 2 * i + 1) for i, (a, b) in enumerate(pairs)
    )


LIMBS = _build_limbs()
NUM_LIMBS = len(LIMBS)


@dataclass(frozen=True)
class Keypoint:
    """A detected body part. Coordinates are continuous pixel positions."""

    id: int
    kind: int
    x: float
    y: float
    score: float


@dataclass(frozen=True)
class LimbConnection:
    """A scored candidate connection between two keypoints of one limb type."""

    limb: LimbType
    from_kp: int
    to_kp: int
    affinity: float
    valid_ratio: float


@dataclass(frozen=True)
class PoseSkeleton:
    """An assembled person: one optional keypoint per kind, plus a score.

    ``score`` is the sum of keypoint scores and accepted connection
    affinities, normalized by the number of keypoints present.
    """

    keypoints: tuple  # 18 entries of Keypoint | None
    score: float
    num_keypoints: int

    def keypoint(self, kind: int) -> Keypoint | None:
        return self.keypoints[kind]

    def slot_pattern(self) -> tuple[bool, ...]:
        return tuple(kp is not None for kp in self.keypoints)


@dataclass(frozen=True)
class DecoderConfig:
    """Tuning knobs for the decoding pipeline."""

    upsample_factor: int = 4
    peak_threshold: float = 0.1
    paf_sample_count: int = 10
    paf_alignment_threshold: float = 0.05
    min_valid_ratio: float = 0.8
    min_keypoints: int = 3
    min_skeleton_score: float = 0.2

    def __post_init__(self):
        if isinstance(self.upsample_factor, bool) or self.upsample_factor < 1:
            raise ValueError(f"upsample_factor must be >= 1, got {self.upsample_factor}")
        if self.paf_sample_count < 2:
            raise ValueError(f"paf_sample_count must be >= 2, got {self.paf_sample_count}")
        if not 0.0 <= self.min_valid_ratio <= 1.0:
            raise ValueError(f"min_valid_ratio must be in [0, 1], got {self.min_valid_ratio}")
        if self.min_keypoints < 1:
            raise ValueError(f"min_keypoints must be >= 1, got {self.min_keypoints}")
