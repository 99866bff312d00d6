import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import brute_conv2d
from vecspike.core import (
    BinaryWeightTensor,
    BNParams,
    FoldedNeuronParams,
    SpikeTrain,
    conv2d_oracle,
    fold_bn,
    if_step,
    maxpool2_oracle,
    run_network_oracle,
    spikes_eq3_oracle,
)
from vecspike.errors import (
    FixedPointOverflowError,
    InvalidParameterError,
    ShapeError,
)
from vecspike.fixedpoint import DEFAULT_FORMAT
from vecspike.netconfig import (
    NetworkDescription,
    generate_random_bundle,
    parse_network,
    validate,
)

FMT = DEFAULT_FORMAT
Q = FMT.quantize


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

def test_spike_train_validates_and_freezes():
    train = SpikeTrain(np.zeros((2, 1, 2, 2), dtype=np.uint8))
    assert train.shape == (2, 1, 2, 2)
    with pytest.raises(ValueError):
        train.data[0, 0, 0, 0] = 1
    with pytest.raises(InvalidParameterError):
        SpikeTrain(np.full((1, 1, 1, 1), 2))
    with pytest.raises(ShapeError):
        SpikeTrain(np.zeros((1, 1, 1)))


def test_binary_weights_sign_convention():
    # sign bit 1 encodes -1, sign bit 0 encodes +1
    w = BinaryWeightTensor(np.array([[[[0, 1]]]]))
    assert w.values().tolist() == [[[[1, -1]]]]
    again = BinaryWeightTensor.from_values(w.values())
    assert again == w


def test_bn_params_validation():
    with pytest.raises(InvalidParameterError):
        BNParams(gamma=0.0, beta=0.0, mean=0.0, var=1.0)
    with pytest.raises(InvalidParameterError):
        BNParams(gamma=1.0, beta=0.0, mean=0.0, var=-1.0)


# ---------------------------------------------------------------------------
# if_step
# ---------------------------------------------------------------------------

def test_if_step_zero_case():
    assert if_step(0, 0, 0, Q(1.0)) == (0, 0)


def test_if_step_accumulates_and_fires():
    # V=0.5, in=0.6 -> V=1.1 >= 1.0, fires
    v, o = if_step(Q(0.5), 0, Q(0.6), Q(1.0))
    assert v == Q(0.5) + Q(0.6)
    assert o == 1


def test_if_step_hard_reset_discards_previous_potential():
    # after a spike the old potential is zeroed before accumulating
    v, o = if_step(Q(1.1), 1, Q(0.3), Q(1.0))
    assert v == Q(0.3)
    assert o == 0


def test_if_step_tie_fires():
    _, o = if_step(0, 0, Q(1.0), Q(1.0))
    assert o == 1


def test_if_step_flipped_comparison():
    _, o = if_step(0, 0, Q(-2.0), Q(-1.0), flipped=True)
    assert o == 1
    _, o = if_step(0, 0, Q(-0.5), Q(-1.0), flipped=True)
    assert o == 0


@given(
    st.integers(min_value=-(2**20), max_value=2**20),
    st.integers(min_value=-(2**20), max_value=2**20),
    st.integers(min_value=-(2**20), max_value=2**20),
)
def test_if_step_after_spike_is_independent_of_potential(v_prev, x, threshold):
    assert if_step(v_prev, 1, x, threshold) == if_step(0, 0, x, threshold)


@given(
    st.integers(min_value=-(2**15), max_value=2**15),
    st.integers(min_value=-(2**15), max_value=2**15),
    st.integers(min_value=1, max_value=100),
)
def test_firing_decision_is_scale_invariant(x, threshold, c):
    # multiplying accumulated input and threshold by c > 0 keeps the bit
    _, o_base = if_step(0, 0, x, threshold)
    _, o_scaled = if_step(0, 0, x * c, threshold * c)
    assert o_base == o_scaled


def test_if_step_overflow_is_reported():
    with pytest.raises(FixedPointOverflowError):
        if_step(FMT.raw_max, 0, 1, 0)


# ---------------------------------------------------------------------------
# fold_bn
# ---------------------------------------------------------------------------

def test_fold_bn_identity():
    folded = fold_bn(BNParams(1.0, 0.0, 0.0, 1.0, eps=0.0), v_th=1.0)
    assert folded.bias_raw.tolist() == [0]
    assert folded.threshold_raw.tolist() == [Q(1.0)]
    assert not folded.flipped[0]


def test_fold_bn_direct_evaluation():
    folded = fold_bn(BNParams(2.0, 1.0, 0.5, 4.0, eps=0.0), v_th=1.0)
    assert folded.bias_raw.tolist() == [Q(-0.5)]
    assert folded.threshold_raw.tolist() == [Q(1.0)]
    assert not folded.flipped[0]


def test_fold_bn_negative_gamma_flips_comparison():
    folded = fold_bn(BNParams(-1.0, 0.0, 0.0, 1.0, eps=0.0), v_th=1.0)
    assert folded.bias_raw.tolist() == [0]
    assert folded.threshold_raw.tolist() == [Q(-1.0)]
    assert folded.flipped[0]


def test_fold_bn_rejects_zero_gamma():
    with pytest.raises(InvalidParameterError):
        fold_bn(BNParams(np.array([1.0, 0.0]), 0.0, 0.0, 1.0), v_th=1.0)


def test_fold_bn_per_channel_arrays():
    folded = fold_bn(
        BNParams(
            gamma=np.array([1.0, -2.0]),
            beta=np.array([0.0, 1.0]),
            mean=np.array([0.0, 0.5]),
            var=np.array([1.0, 4.0]),
            eps=0.0,
        ),
        v_th=1.0,
    )
    assert folded.channels == 2
    assert folded.flipped.tolist() == [False, True]
    assert folded.bias_raw.tolist() == [0, Q(0.5 + 1.0)]  # 0.5 - (2/-2)*1
    assert folded.threshold_raw.tolist() == [Q(1.0), Q(-1.0)]


# ---------------------------------------------------------------------------
# eq-3 oracle and fold equivalence
# ---------------------------------------------------------------------------

def test_eq3_oracle_trivial_and_accumulation():
    identity = BNParams(1.0, 0.0, 0.0, 1.0, eps=0.0)
    assert spikes_eq3_oracle([0, 0, 0], identity, 1.0) == [0, 0, 0]
    assert spikes_eq3_oracle([0.6, 0.6], identity, 1.0) == [0, 1]


def _folded_reference_margin(x, params, v_th):
    """Exact real-arithmetic folded accumulation; smallest threshold gap."""
    gamma = float(params.gamma[0])
    sigma = float(np.sqrt(params.var[0] + params.eps))
    ratio = sigma / gamma
    bias = float(params.mean[0]) - ratio * float(params.beta[0])
    threshold = ratio * v_th
    v, o = 0.0, 0
    margin = np.inf
    for xi in x:
        v = (0.0 if o else v) + (float(xi) - bias)
        margin = min(margin, abs(v - threshold))
        o = (v <= threshold) if gamma < 0 else (v >= threshold)
    return margin


def _run_folded_fixed_point(x, folded):
    v, o = 0, 0
    spikes = []
    for xi in x:
        weighted = (int(xi) << FMT.frac_bits) - int(folded.bias_raw[0])
        v, o = if_step(
            v, o, weighted, int(folded.threshold_raw[0]),
            flipped=bool(folded.flipped[0]),
        )
        spikes.append(o)
    return spikes


def test_folded_path_matches_eq3_oracle_outside_margin():
    rng = np.random.default_rng(99)
    margin = 2.0 ** (-FMT.frac_bits + 2)
    checked = 0
    while checked < 200:
        steps = int(rng.integers(1, 9))
        x = rng.integers(-20, 21, steps)
        gamma = float(rng.choice([-1, 1])) * rng.uniform(0.5, 2.0)
        params = BNParams(
            gamma, rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.25, 4)
        )
        v_th = rng.uniform(0.5, 2.0)
        if _folded_reference_margin(x, params, v_th) <= margin:
            continue
        folded = fold_bn(params, v_th)
        assert _run_folded_fixed_point(x, folded) == spikes_eq3_oracle(x, params, v_th)
        checked += 1


# ---------------------------------------------------------------------------
# conv and pooling oracles
# ---------------------------------------------------------------------------

def test_conv_oracle_zero_input():
    w = BinaryWeightTensor(np.zeros((2, 1, 3, 3), dtype=np.uint8))
    out = conv2d_oracle(np.zeros((1, 5, 5), dtype=np.uint8), w)
    assert out.shape == (2, 3, 3)
    assert not out.any()


def test_conv_oracle_identity():
    w = BinaryWeightTensor.from_values(np.ones((1, 1, 1, 1), dtype=np.int64))
    out = conv2d_oracle(np.ones((1, 1, 1), dtype=np.uint8), w)
    assert out.tolist() == [[[1]]]


def test_conv_oracle_five_by_five_matches_exhaustive_sum(rng):
    x = rng.integers(0, 2, (1, 5, 5), dtype=np.uint8)
    w = BinaryWeightTensor(rng.integers(0, 2, (1, 1, 3, 3), dtype=np.uint8))
    out = conv2d_oracle(x, w)
    assert out.shape == (1, 3, 3)
    assert np.array_equal(out, brute_conv2d(x, w.values()))


@pytest.mark.parametrize("pad", [0, 1])
def test_conv_oracle_matches_brute_force(rng, pad):
    for _ in range(10):
        cin, cout = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        h, w = int(rng.integers(3, 8)), int(rng.integers(3, 8))
        x = rng.integers(0, 2, (cin, h, w), dtype=np.uint8)
        wgt = BinaryWeightTensor(rng.integers(0, 2, (cout, cin, 3, 3), dtype=np.uint8))
        assert np.array_equal(
            conv2d_oracle(x, wgt, padding=pad), brute_conv2d(x, wgt.values(), pad)
        )


def test_conv_oracle_is_linear_in_input(rng):
    w = BinaryWeightTensor(rng.integers(0, 2, (3, 2, 3, 3), dtype=np.uint8))
    a = rng.integers(-5, 6, (2, 6, 6))
    b = rng.integers(-5, 6, (2, 6, 6))
    assert np.array_equal(
        conv2d_oracle(a, w) + conv2d_oracle(b, w), conv2d_oracle(a + b, w)
    )


def test_conv_oracle_dimension_mismatch():
    w = BinaryWeightTensor(np.zeros((1, 2, 3, 3), dtype=np.uint8))
    with pytest.raises(ShapeError):
        conv2d_oracle(np.zeros((1, 5, 5)), w)
    with pytest.raises(ShapeError):
        conv2d_oracle(np.zeros((2, 2, 2)), w)  # kernel does not fit


def test_maxpool_oracle():
    assert not maxpool2_oracle(np.zeros((1, 4, 4), dtype=np.uint8)).any()
    x = np.zeros((1, 2, 2), dtype=np.uint8)
    x[0, 1, 0] = 1
    assert maxpool2_oracle(x).tolist() == [[[1]]]
    with pytest.raises(ShapeError):
        maxpool2_oracle(np.zeros((1, 3, 4), dtype=np.uint8))


def test_maxpool_oracle_matches_window_max(rng):
    x = rng.integers(0, 2, (3, 4, 4), dtype=np.uint8)
    pooled = maxpool2_oracle(x)
    for c in range(3):
        for i in range(2):
            for j in range(2):
                window = x[c, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
                assert pooled[c, i, j] == window.max()


# ---------------------------------------------------------------------------
# network oracle
# ---------------------------------------------------------------------------

def _identity_bundle(net):
    """Random signs but identity normalization (bias 0, threshold v_th)."""
    bundle = generate_random_bundle(net, seed=5)
    params = []
    for layer, p in zip(net.layers, bundle.params):
        if p is None:
            params.append(None)
        else:
            identity = BNParams(
                np.ones(layer.out_channels),
                np.zeros(layer.out_channels),
                np.zeros(layer.out_channels),
                np.ones(layer.out_channels),
                eps=0.0,
            )
            params.append(fold_bn(identity, layer.v_th))
    bundle.params = params
    return bundle


def test_network_oracle_zero_image_zero_spikes():
    net = validate(parse_network("4Conv(encoding)-MP2-4Conv-3fc"), (1, 8, 8))
    bundle = _identity_bundle(net)
    run = run_network_oracle(
        net, bundle.weights, bundle.params, np.zeros((1, 8, 8), dtype=np.uint8), 4
    )
    for train in run.layer_trains:
        assert train.spike_count() == 0
    assert run.class_counts.tolist() == [0, 0, 0]


def test_network_oracle_constant_input_reaccumulates():
    # one-pixel encoding layer, +1 weight, threshold 0.5: input 255 counts as
    # 255/256 per step, crossing 0.5 every step after every reset
    net = validate(parse_network("1Conv(encoding)", time_steps=6), (1, 3, 3))
    weights = [BinaryWeightTensor.from_values(np.ones((1, 1, 3, 3), dtype=np.int64))]
    params = [
        FoldedNeuronParams(
            np.array([0]), np.array([Q(0.5)]), np.array([False])
        )
    ]
    image = np.full((1, 3, 3), 255, dtype=np.uint8)
    run = run_network_oracle(net, weights, params, image, 6)
    center = run.layer_trains[0].data[:, 0, 1, 1]
    assert center.tolist() == [1, 1, 1, 1, 1, 1]


def test_network_oracle_is_deterministic(rng):
    net = validate(
        parse_network("8Conv(encoding)-MP2-8Conv-MP2-16fc-10fc"), (1, 8, 8)
    )
    bundle = generate_random_bundle(net, seed=3)
    image = rng.integers(0, 256, (1, 8, 8), dtype=np.uint8)
    first = run_network_oracle(net, bundle.weights, bundle.params, image, 8)
    second = run_network_oracle(net, bundle.weights, bundle.params, image, 8)
    assert all(a == b for a, b in zip(first.layer_trains, second.layer_trains))
    assert np.array_equal(first.class_counts, second.class_counts)


def test_network_oracle_rejects_bad_input():
    net = validate(parse_network("2Conv(encoding)"), (1, 4, 4))
    bundle = generate_random_bundle(net, seed=0)
    with pytest.raises(InvalidParameterError):
        run_network_oracle(
            net, bundle.weights, bundle.params, np.full((1, 4, 4), 300), 2
        )
    with pytest.raises(InvalidParameterError):
        run_network_oracle(
            net, bundle.weights, bundle.params, np.zeros((1, 4, 4)), 0
        )
