import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vecspike.netconfig import LayerSpec, NetworkDescription, validate

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
    deadline=None,
)
settings.load_profile("ci")


def brute_conv2d(x, weight_values, pad=0):
    """Exhaustive convolution by nested loops; the tests' own oracle."""
    x = np.asarray(x, dtype=np.int64)
    w = np.asarray(weight_values, dtype=np.int64)
    o_ch, in_ch, kh, kw = w.shape
    c, h, wd = x.shape
    assert c == in_ch
    xp = np.zeros((c, h + 2 * pad, wd + 2 * pad), dtype=np.int64)
    xp[:, pad : pad + h, pad : pad + wd] = x
    ho = xp.shape[1] - kh + 1
    wo = xp.shape[2] - kw + 1
    out = np.zeros((o_ch, ho, wo), dtype=np.int64)
    for o in range(o_ch):
        for i in range(ho):
            for j in range(wo):
                acc = 0
                for ci in range(in_ch):
                    for u in range(kh):
                        for v in range(kw):
                            acc += int(w[o, ci, u, v]) * int(xp[ci, i + u, j + v])
                out[o, i, j] = acc
    return out


def random_network(rng, *, max_layers=4, max_dim=16, max_channels=64):
    """A random validated network within the acceptance envelope."""
    c = int(rng.choice([1, 3]))
    h = int(rng.integers(4, max_dim + 1))
    w = int(rng.integers(4, max_dim + 1))
    input_shape = (c, h, w)

    def rand_vth():
        return float(np.round(rng.uniform(0.5, 2.0), 3))

    layers = [
        LayerSpec(
            "encoding-conv",
            out_channels=int(rng.integers(2, max_channels + 1)),
            padding=int(rng.integers(0, 2)) if min(h, w) >= 3 else 1,
            v_th=rand_vth(),
        )
    ]
    shape = (layers[0].out_channels,) + _conv_out(h, w, layers[0].padding)
    n_extra = int(rng.integers(0, max_layers))
    for _ in range(n_extra):
        choices = ["conv", "fc"]
        if shape[1] % 2 == 0 and shape[2] % 2 == 0 and min(shape[1], shape[2]) >= 2:
            choices.append("maxpool2")
        kind = str(rng.choice(choices))
        if kind == "conv":
            pad = int(rng.integers(0, 2))
            if min(shape[1], shape[2]) < 3 and pad == 0:
                pad = 1
            layer = LayerSpec(
                "conv",
                out_channels=int(rng.integers(2, max_channels + 1)),
                padding=pad,
                v_th=rand_vth(),
            )
            shape = (layer.out_channels,) + _conv_out(shape[1], shape[2], pad)
        elif kind == "fc":
            layer = LayerSpec(
                "fc",
                out_channels=int(rng.integers(2, max_channels + 1)),
                kernel=(1, 1),
                padding=0,
                v_th=rand_vth(),
            )
            shape = (layer.out_channels, 1, 1)
        else:
            layer = LayerSpec("maxpool2", kernel=(2, 2), padding=0)
            shape = (shape[0], shape[1] // 2, shape[2] // 2)
        layers.append(layer)
    net = validate(NetworkDescription(layers), input_shape)
    return net, input_shape


def _conv_out(h, w, pad, k=3):
    return (h + 2 * pad - k + 1, w + 2 * pad - k + 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
