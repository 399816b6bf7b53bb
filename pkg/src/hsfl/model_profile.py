"""Layer-wise cost profile of the trained network.

Cut layers are 1-based: a cut at ``l`` keeps layers ``1..l`` on the device and
sends layers ``l+1..L`` to the edge server.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BITS_PER_FLOAT = 32
LABEL_BITS = 32


@dataclass(frozen=True)
class LayerProfile:
    param_bits: float
    flops_per_sample: float
    fwd_payload_bits: float
    bwd_payload_bits: float
    name: str = ""

    def __post_init__(self):
        for attr in ("param_bits", "flops_per_sample", "fwd_payload_bits", "bwd_payload_bits"):
            if getattr(self, attr) < 0:
                raise ValueError(f"{attr} must be >= 0 (layer {self.name!r})")


@dataclass(frozen=True)
class ModelProfile:
    layers: tuple[LayerProfile, ...]
    _cum_bits: np.ndarray = field(init=False, repr=False, compare=False)
    _cum_flops: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if len(layers) < 2:
            raise ValueError("a model profile needs at least two layers")
        object.__setattr__(self, "layers", layers)
        bits = np.concatenate([[0.0], np.cumsum([ly.param_bits for ly in layers])])
        flops = np.concatenate([[0.0], np.cumsum([ly.flops_per_sample for ly in layers])])
        for arr in (bits, flops):
            arr.setflags(write=False)
        object.__setattr__(self, "_cum_bits", bits)
        object.__setattr__(self, "_cum_flops", flops)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def total_bits(self) -> float:
        return float(self._cum_bits[-1])

    @property
    def total_flops_per_sample(self) -> float:
        return float(self._cum_flops[-1])

    # Vectorised per-cut tables, index ``l - 1`` for cut ``l``.
    @property
    def local_bits_table(self) -> np.ndarray:
        return self._cum_bits[1:]

    @property
    def local_flops_table(self) -> np.ndarray:
        return self._cum_flops[1:]

    @property
    def edge_flops_table(self) -> np.ndarray:
        return self._cum_flops[-1] - self._cum_flops[1:]

    @property
    def fwd_payload_table(self) -> np.ndarray:
        return np.array([ly.fwd_payload_bits for ly in self.layers])

    @property
    def bwd_payload_table(self) -> np.ndarray:
        return np.array([ly.bwd_payload_bits for ly in self.layers])

    def _check_cut(self, cut: int) -> None:
        if not 1 <= cut <= self.num_layers:
            raise ValueError(f"cut layer {cut} outside 1..{self.num_layers}")

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "name": ly.name,
                    "param_bits": ly.param_bits,
                    "flops_per_sample": ly.flops_per_sample,
                    "fwd_payload_bits": ly.fwd_payload_bits,
                    "bwd_payload_bits": ly.bwd_payload_bits,
                }
                for ly in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelProfile":
        return cls(tuple(LayerProfile(**ly) for ly in data["layers"]))


def local_model_bits(profile: ModelProfile, cut: int) -> float:
    """Bits of the device-side segment (layers ``1..cut``)."""
    profile._check_cut(cut)
    return float(profile._cum_bits[cut])


def local_flops(profile: ModelProfile, cut: int) -> float:
    profile._check_cut(cut)
    return float(profile._cum_flops[cut])


def edge_flops(profile: ModelProfile, cut: int) -> float:
    profile._check_cut(cut)
    return float(profile._cum_flops[-1] - profile._cum_flops[cut])


def _conv_layer(name, c_in, c_out, k, h_in, pool=2):
    h_conv = h_in - k + 1  # stride 1, no padding
    h_out = h_conv // pool
    params = k * k * c_in * c_out + c_out
    fwd = 2 * k * k * c_in * c_out * h_conv * h_conv
    n_out = c_out * h_out * h_out
    layer = LayerProfile(
        param_bits=BITS_PER_FLOAT * params,
        flops_per_sample=3 * fwd,  # backward costs twice the forward pass
        fwd_payload_bits=BITS_PER_FLOAT * n_out + LABEL_BITS,
        bwd_payload_bits=BITS_PER_FLOAT * n_out,
        name=name,
    )
    return layer, h_out


def _dense_layer(name, n_in, n_out):
    return LayerProfile(
        param_bits=BITS_PER_FLOAT * (n_in * n_out + n_out),
        flops_per_sample=3 * 2 * n_in * n_out,
        fwd_payload_bits=BITS_PER_FLOAT * n_out + LABEL_BITS,
        bwd_payload_bits=BITS_PER_FLOAT * n_out,
        name=name,
    )


def build_paper_cnn_profile() -> ModelProfile:
    """LeNet-style CNN for 32x32x3 inputs: input, two conv+pool, three dense layers."""
    n_in = 3 * 32 * 32
    input_layer = LayerProfile(
        param_bits=0.0,
        flops_per_sample=0.0,
        fwd_payload_bits=BITS_PER_FLOAT * n_in + LABEL_BITS,
        bwd_payload_bits=BITS_PER_FLOAT * n_in,
        name="input",
    )
    conv1, h = _conv_layer("conv1", 3, 6, 5, 32)
    conv2, h = _conv_layer("conv2", 6, 16, 5, h)
    flat = 16 * h * h
    return ModelProfile(
        (
            input_layer,
            conv1,
            conv2,
            _dense_layer("fc1", flat, 120),
            _dense_layer("fc2", 120, 84),
            _dense_layer("fc3", 84, 10),
        )
    )


BUILTIN_PROFILES = {"paper_cnn": build_paper_cnn_profile}


def resolve_profile(source) -> ModelProfile:
    """Accept a built-in name or a ``{"layers": [...]}`` mapping."""
    if isinstance(source, ModelProfile):
        return source
    if isinstance(source, str):
        try:
            return BUILTIN_PROFILES[source]()
        except KeyError:
            raise ValueError(f"unknown built-in profile {source!r}") from None
    return ModelProfile.from_dict(source)
