import math

import numpy as np
import pytest

from conftest import random_hmm
from fixshare.constructions import build_bayes, build_dm
from fixshare.core import FiniteDist, InvalidInputError, ZeroDensityError
from fixshare.ehmm import (SPARSE, Ehmm, FunctionAdvice, Share, forward_distribution,
                           forward_init, iter_forward, observe, predict, predictive_log_density,
                           run_forward)
from fixshare.reference.oracles import naive_cumulative_log_probs


def test_dm_two_rounds(backend, advice):
    # round 2 mixes N(0,1) and N(1,1) at x=1 with weights 0.9 / 0.1
    run = run_forward(build_dm(0.1), SPARSE, advice, [0.0, 1.0])
    assert run.per_round_losses[0] == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-12)
    dens = 0.9 * math.exp(-0.5) / math.sqrt(2 * math.pi) + 0.1 / math.sqrt(2 * math.pi)
    assert run.per_round_losses[1] == pytest.approx(-math.log(dens), abs=1e-12)
    assert run.per_round_losses[1] == pytest.approx(1.3562, abs=1e-3)
    assert run.total_log_loss == pytest.approx(run.per_round_losses.sum(), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_matches_naive_forward(backend, advice, seed):
    rng = np.random.default_rng(seed)
    model = random_hmm(rng, 4)
    data = rng.normal(0.5, 1.0, size=12)
    run = run_forward(model, SPARSE, advice, data)
    cum = naive_cumulative_log_probs(model, advice, data)
    np.testing.assert_allclose(np.cumsum(run.per_round_losses), -np.array(cum), rtol=1e-12)


def test_dm_active_set_is_exact(backend, advice):
    data = np.arange(30) * 0.1
    counts = run_forward(build_dm(0.1), SPARSE, advice, data).active_counts
    # after t-1 rounds the mean can be anywhere in 0..t-1
    assert counts.tolist() == list(range(1, 31))


def test_alpha_zero_is_sparse(backend, advice):
    rng = np.random.default_rng(0)
    model = random_hmm(rng, 3)
    data = rng.normal(size=20)
    a = run_forward(model, SPARSE, advice, data)
    b = run_forward(model, Share(0.0), advice, data)
    assert np.array_equal(a.per_round_losses, b.per_round_losses)


def test_alpha_one_always_restarts(backend, advice):
    model = build_dm(0.3)
    data = [0.0, 2.0, 1.0, 3.0]
    run = run_forward(model, Share(1.0, "initial"), advice, data)
    fresh = [-advice.log_density(t, 0, x) for t, x in enumerate(data, 1)]
    np.testing.assert_allclose(run.per_round_losses, fresh, rtol=1e-13)


def test_explicit_reset_distribution(backend, advice):
    reset = FiniteDist({0: 0.5, 3: 0.5})
    model = build_bayes(FiniteDist.uniform(range(4)))
    run = run_forward(model, Share(1.0, reset), advice, [0.0, 3.0])
    expect = -math.log(0.5 * advice.density(2, 0, 3.0) + 0.5 * advice.density(2, 3, 3.0))
    assert run.per_round_losses[1] == pytest.approx(expect, rel=1e-13)


def test_sleeping_tracks_forwarded_prior(backend, advice):
    model = build_dm(0.5)
    op = Share(0.2, "forwarded")
    state = forward_init(model, op)
    for x in [0.0, 0.5, 1.0]:
        state, _ = observe(state, model, op, advice, x)
    assert state.forwarded_prior == pytest.approx(forward_distribution(model, 3))
    fp = state.forwarded_prior
    np.testing.assert_allclose([fp[k] for k in range(4)], [1 / 8, 3 / 8, 3 / 8, 1 / 8])


def test_forward_distribution_binomial():
    d = forward_distribution(build_dm(0.1), 4)
    expect = [math.comb(4, k) * 0.1 ** k * 0.9 ** (4 - k) for k in range(5)]
    np.testing.assert_allclose([d[k] for k in range(5)], expect, rtol=1e-12)
    assert forward_distribution(build_dm(0.1), 0) == FiniteDist.point(0)
    with pytest.raises(InvalidInputError):
        forward_distribution(build_dm(0.1), -1)


def test_predict_and_predictive_density(backend, advice):
    model = build_bayes(FiniteDist({0.0: 0.25, 1.0: 0.75}))
    state = forward_init(model)
    assert predict(state) == FiniteDist({0.0: 0.25, 1.0: 0.75})
    x = 0.3
    expect = math.log(0.25 * advice.density(1, 0.0, x) + 0.75 * advice.density(1, 1.0, x))
    assert predictive_log_density(state, advice, x) == pytest.approx(expect, rel=1e-13)
    state, loss = observe(state, model, SPARSE, advice, x)
    assert loss == pytest.approx(-expect, rel=1e-13)
    post = predict(state)
    w0 = 0.25 * advice.density(1, 0.0, x)
    assert post[0.0] == pytest.approx(w0 / math.exp(expect), rel=1e-12)


def test_states_and_weights_views(advice):
    model = build_dm(0.2)
    state = forward_init(model)
    state, _ = observe(state, model, SPARSE, advice, 0.0)
    assert state.active_states() == [0, 1]
    assert state.weights[1] == pytest.approx(0.2)
    assert state.n_active == 2 and state.t == 2


def test_zero_density_carries_partial(backend):
    adv = FunctionAdvice(lambda t, e, x: 0.0 if t == 3 else 0.5)
    model = build_bayes(FiniteDist.uniform(["a", "b"]))
    with pytest.raises(ZeroDensityError) as info:
        run_forward(model, SPARSE, adv, [1, 1, 1, 1])
    assert info.value.t == 3
    assert info.value.partial.per_round_losses.tolist() == pytest.approx([math.log(2)] * 2)


def test_non_finite_density_rejected():
    adv = FunctionAdvice(lambda t, e, x: math.inf)
    model = build_bayes(FiniteDist.point("a"))
    with pytest.raises(InvalidInputError):
        run_forward(model, SPARSE, adv, [0.0])


def test_object_expert_ids():
    # expert ids need not be numbers
    adv = FunctionAdvice(lambda t, e, x: {"lo": 0.8, "hi": 0.2}[e] if x == 0 else
                         {"lo": 0.2, "hi": 0.8}[e])
    model = Ehmm(FiniteDist.point("s"), None, lambda q: FiniteDist({"lo": 0.5, "hi": 0.5}))
    run = run_forward(model, SPARSE, adv, [0, 1])
    np.testing.assert_allclose(run.per_round_losses, [math.log(2), math.log(2)])


def test_misuse_errors(advice):
    m1, m2 = build_dm(0.1), build_dm(0.1)
    state = forward_init(m1)
    with pytest.raises(InvalidInputError):
        observe(state, m2, SPARSE, advice, 0.0)
    with pytest.raises(InvalidInputError):
        run_forward(m1, SPARSE, advice, [])
    with pytest.raises(InvalidInputError):
        Share(1.5)
    with pytest.raises(InvalidInputError):
        Share(0.5, "sometimes")


def test_prune_below_drops_states(advice):
    data = np.zeros(40)
    full = run_forward(build_dm(0.3), SPARSE, advice, data)
    pruned = run_forward(build_dm(0.3), SPARSE, advice, data, prune_below=-30.0)
    assert pruned.active_counts[-1] < full.active_counts[-1]
    assert pruned.total_log_loss == pytest.approx(full.total_log_loss, rel=1e-6)


def test_iter_forward_and_start_offset(advice):
    model = build_dm(0.1)
    steps = list(iter_forward(model, SPARSE, advice, [0.0, 0.0], start=5))
    assert [b.t for b, _, _ in steps] == [5, 6]
    assert steps[-1][2].t == 7


def test_model_clone_shares_dynamics(advice):
    model = build_dm(0.1)
    clone = model.with_initial(FiniteDist.point(3), name="dm@3")
    assert clone.transition(3) == model.transition(3)
    run = run_forward(clone, SPARSE, advice, [3.0])
    assert run.total_log_loss == pytest.approx(0.5 * math.log(2 * math.pi))
