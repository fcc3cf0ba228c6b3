import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmdvi.kernel import GaussianKernel
from mmdvi.models import ModelSpec, sample
from mmdvi.vi import (
    CLOSED_FORM,
    PER_PARTICLE,
    SCORE,
    SHARED,
    FitConfig,
    MeanFieldGaussian,
    fit,
    fit_batched,
    grad_estimate,
    kl_to_standard_prior,
    objective_exact,
    objective_mc,
    project_box,
)

# KL(N(1, 2^2) || N(0, 1)) = 0.5 * (1 + 4 - log 4 - 1) = 2 - log 2
KL_M1_S2 = 1.3068528194400546
# for s = (2, 0.5) the log terms cancel: 0.5 * (1 + 4 + 1 + 0.25 - 2)
KL_2D = 2.125


def test_kl_frozen_values():
    assert kl_to_standard_prior(MeanFieldGaussian(m=[1.0], s=[2.0])) == pytest.approx(
        KL_M1_S2, abs=1e-15
    )
    q = MeanFieldGaussian(m=[1.0, -1.0], s=[2.0, 0.5])
    assert kl_to_standard_prior(q) == pytest.approx(KL_2D, abs=1e-15)
    # exactly zero at the prior
    assert kl_to_standard_prior(MeanFieldGaussian(m=np.zeros(3), s=np.ones(3))) == 0.0


def test_mean_field_gaussian_validation():
    with pytest.raises(ValueError):
        MeanFieldGaussian(m=[0.0, 0.0], s=[1.0])
    with pytest.raises(ValueError):
        MeanFieldGaussian(m=[0.0], s=[0.0])
    with pytest.raises(ValueError):
        MeanFieldGaussian(m=[0.0], s=[-1.0])


def test_project_box_clamps():
    v = np.array([-5.0, 0.3, 7.0])
    out = project_box(v, -1.0, 1.0)
    np.testing.assert_array_equal(out, [-1.0, 0.3, 1.0])
    # componentwise bounds
    out = project_box(v, np.array([-10.0, 0.5, 0.0]), np.array([0.0, 2.0, 3.0]))
    np.testing.assert_array_equal(out, [-5.0, 0.5, 3.0])
    with pytest.raises(ValueError):
        project_box(v, 1.0, -1.0)


@settings(deadline=None, max_examples=60)
@given(
    v=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=5),
    lo=st.floats(-100.0, 0.0),
    width=st.floats(0.0, 50.0),
)
def test_project_box_is_projection(v, lo, width):
    hi = lo + width
    out = project_box(np.array(v), lo, hi)
    assert np.all(out >= lo) and np.all(out <= hi)
    # idempotent, and the identity on points already inside
    np.testing.assert_array_equal(project_box(out, lo, hi), out)


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(beta_log=math.nan)
    with pytest.raises(ValueError):
        FitConfig(n_particles=1)
    with pytest.raises(ValueError):
        FitConfig(n_steps=0)
    with pytest.raises(ValueError):
        FitConfig(step_scale=-0.1)
    with pytest.raises(ValueError):
        FitConfig(s_bounds=(0.0, 1.0))
    with pytest.raises(ValueError):
        FitConfig(m_bounds=(1.0, -1.0))
    with pytest.raises(ValueError):
        FitConfig(estimator="nope")
    with pytest.raises(ValueError):
        FitConfig(sample_mode="nope")


def test_fit_config_benchmark_defaults():
    cfg = FitConfig.benchmark(200, 1)
    assert cfg.beta_log == 200.0
    assert cfg.n_particles == 200
    assert cfg.n_steps == 1000
    assert cfg.step_scale == 1.0
    assert cfg.estimator == CLOSED_FORM
    cfg15 = FitConfig.benchmark(200, 15, n_steps=50)
    assert cfg15.beta_log == 3000.0
    assert cfg15.n_steps == 50


def test_inv_beta_sentinel():
    assert FitConfig(beta_log=math.inf).inv_beta == 0.0
    assert FitConfig(beta_log=0.0).inv_beta == 1.0
    assert FitConfig(beta_log=math.log(4.0)).inv_beta == pytest.approx(0.25, rel=1e-15)


def _fd_gradient(f, m, s, h=1e-5):
    """Central finite differences of f(m, s) in every coordinate of m and s."""
    d = m.size
    g_m = np.empty(d)
    g_s = np.empty(d)
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        g_m[j] = (f(m + e, s) - f(m - e, s)) / (2 * h)
        g_s[j] = (f(m, s + e) - f(m, s - e)) / (2 * h)
    return g_m, g_s


def _averaged_grad(q, data, model, kernel, config, seed, reps):
    rng = np.random.default_rng(seed)
    gm = np.empty((reps, q.dim))
    gs = np.empty((reps, q.dim))
    for r in range(reps):
        g = grad_estimate(q, data, model, kernel, config, rng)
        gm[r], gs[r] = g.g_m, g.g_s
    return gm, gs


def _assert_mean_matches(samples, target, slack=0.0):
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])
    assert np.all(np.abs(mean - target) <= 4 * se + slack), (mean, target, se)


def test_closed_form_gradient_unbiased_gaussian():
    # the averaged stochastic gradient has to match finite differences of the
    # deterministic objective, which integrates the particles exactly
    rng = np.random.default_rng(42)
    model = ModelSpec.gaussian(2, sigma2=1.0)
    kernel = GaussianKernel.default_for_dim(2)
    data = sample(model, np.array([0.5, -1.0]), 30, rng)
    q = MeanFieldGaussian(m=[0.3, -0.6], s=[0.8, 1.2])
    config = FitConfig(beta_log=5.0, n_particles=64)

    def f(m, s):
        return objective_exact(MeanFieldGaussian(m=m, s=s), data, model, kernel, beta_log=5.0)

    fd_m, fd_s = _fd_gradient(f, q.m, q.s)
    gm, gs = _averaged_grad(q, data, model, kernel, config, seed=7, reps=400)
    _assert_mean_matches(gm, fd_m)
    _assert_mean_matches(gs, fd_s)


def test_closed_form_gradient_unbiased_uniform():
    rng = np.random.default_rng(43)
    model = ModelSpec.uniform(1, half_width=0.5)
    kernel = GaussianKernel.default_for_dim(1)
    data = sample(model, np.array([1.0]), 25, rng)
    q = MeanFieldGaussian(m=[0.9], s=[0.5])
    config = FitConfig(n_particles=64)

    def f(m, s):
        return objective_exact(MeanFieldGaussian(m=m, s=s), data, model, kernel)

    fd_m, fd_s = _fd_gradient(f, q.m, q.s)
    gm, gs = _averaged_grad(q, data, model, kernel, config, seed=8, reps=400)
    # quadrature reference is exact to ~1e-10, leave a hair of slack
    _assert_mean_matches(gm, fd_m, slack=1e-8)
    _assert_mean_matches(gs, fd_s, slack=1e-8)


def test_score_per_particle_gradient_unbiased():
    # the score-function estimator targets the same gradient as closed_form
    rng = np.random.default_rng(44)
    model = ModelSpec.gaussian(1, sigma2=1.0)
    kernel = GaussianKernel(2.0)
    data = sample(model, np.array([2.0]), 20, rng)
    q = MeanFieldGaussian(m=[1.5], s=[0.9])
    config = FitConfig(n_particles=16, estimator=SCORE, sample_mode=PER_PARTICLE)

    def f(m, s):
        return objective_exact(MeanFieldGaussian(m=m, s=s), data, model, kernel)

    fd_m, fd_s = _fd_gradient(f, q.m, q.s)
    gm, gs = _averaged_grad(q, data, model, kernel, config, seed=9, reps=1500)
    _assert_mean_matches(gm, fd_m)
    _assert_mean_matches(gs, fd_s)


def test_score_shared_gradient_is_finite():
    # shared synthetic samples are biased but must still produce usable numbers
    rng = np.random.default_rng(45)
    model = ModelSpec.gaussian(1)
    kernel = GaussianKernel(2.0)
    data = sample(model, np.array([2.0]), 20, rng)
    q = MeanFieldGaussian(m=[1.5], s=[0.9])
    config = FitConfig(n_particles=16, estimator=SCORE, sample_mode=SHARED)
    g = grad_estimate(q, data, model, kernel, config, np.random.default_rng(0))
    assert np.all(np.isfinite(g.g_m)) and np.all(np.isfinite(g.g_s))


def test_score_estimator_rejects_uniform_model():
    model = ModelSpec.uniform(1)
    kernel = GaussianKernel(1.0)
    config = FitConfig(n_particles=8, estimator=SCORE)
    q = MeanFieldGaussian(m=[0.0], s=[1.0])
    with pytest.raises(ValueError):
        grad_estimate(q, np.zeros((10, 1)), model, kernel, config, np.random.default_rng(0))


def test_grad_estimate_dimension_checks():
    model = ModelSpec.gaussian(2)
    kernel = GaussianKernel.default_for_dim(2)
    q1 = MeanFieldGaussian(m=[0.0], s=[1.0])
    with pytest.raises(ValueError):
        grad_estimate(q1, np.zeros((10, 2)), model, kernel, FitConfig(), np.random.default_rng(0))
    q2 = MeanFieldGaussian(m=[0.0, 0.0], s=[1.0, 1.0])
    with pytest.raises(ValueError):
        # a single data point with n_particles unset means one particle
        grad_estimate(q2, np.zeros((1, 2)), model, kernel, FitConfig(), np.random.default_rng(0))


@pytest.mark.parametrize("make_model", [lambda: ModelSpec.gaussian(1), lambda: ModelSpec.uniform(1)])
def test_objective_mc_converges_to_exact(make_model):
    model = make_model()
    kernel = GaussianKernel.default_for_dim(1)
    rng = np.random.default_rng(46)
    data = sample(model, np.array([1.2]), 30, rng)
    q = MeanFieldGaussian(m=[1.0], s=[0.7])
    config = FitConfig(beta_log=3.0, n_particles=32)
    exact = objective_exact(q, data, model, kernel, beta_log=3.0)
    reps = 300
    vals = np.array(
        [objective_mc(q, data, model, kernel, config, np.random.default_rng(1000 + r)) for r in range(reps)]
    )
    se = vals.std(ddof=1) / math.sqrt(reps)
    assert abs(vals.mean() - exact) < 4 * se + 1e-9


def test_objective_mc_deterministic_under_config_seed():
    model = ModelSpec.gaussian(1)
    kernel = GaussianKernel(1.0)
    data = np.linspace(-1, 1, 11)[:, None]
    q = MeanFieldGaussian(m=[0.2], s=[1.1])
    config = FitConfig(n_particles=8, seed=77)
    assert objective_mc(q, data, model, kernel, config) == objective_mc(
        q, data, model, kernel, config
    )


def test_fit_trace_layout_and_init():
    rng = np.random.default_rng(5)
    model = ModelSpec.gaussian(1)
    data = sample(model, np.array([2.0]), 40, rng)
    config = FitConfig.benchmark(40, 1, n_steps=50)
    res = fit(data, model, config=config)
    tr = res.trace
    assert len(tr) == 51
    np.testing.assert_array_equal(tr.t, np.arange(51))
    assert tr.m.shape == (51, 1) and tr.s.shape == (51, 1)
    # row 0 is the projected start: data median, unit scale
    assert tr.m[0, 0] == np.median(data)
    assert tr.s[0, 0] == 1.0
    assert math.isnan(tr.grad_norm_m[0]) and math.isnan(tr.grad_norm_s[0])
    assert np.all(np.isfinite(tr.grad_norm_m[1:]))
    assert np.all(np.isfinite(tr.objective))
    np.testing.assert_array_equal(tr.m[-1], res.q.m)
    np.testing.assert_array_equal(tr.s[-1], res.q.s)


def test_fit_is_bitwise_deterministic():
    rng = np.random.default_rng(6)
    model = ModelSpec.gaussian(1)
    data = sample(model, np.array([2.0]), 30, rng)
    config = FitConfig.benchmark(30, 1, n_steps=40)
    a = fit(data, model, config=config)
    b = fit(data, model, config=config)
    np.testing.assert_array_equal(a.trace.m, b.trace.m)
    np.testing.assert_array_equal(a.trace.s, b.trace.s)
    np.testing.assert_array_equal(a.trace.objective, b.trace.objective)


def test_fit_respects_boxes():
    rng = np.random.default_rng(7)
    model = ModelSpec.gaussian(1)
    data = 2.0 + rng.standard_normal((30, 1))
    config = FitConfig.benchmark(
        30, 1, n_steps=60, m_bounds=(-0.5, 0.5), s_bounds=(0.2, 0.8)
    )
    res = fit(data, model, config=config)
    tr = res.trace
    assert np.all(tr.m >= -0.5) and np.all(tr.m <= 0.5)
    assert np.all(tr.s >= 0.2) and np.all(tr.s <= 0.8)
    # the optimum sits beyond the box, so the iterate pins to the edge
    assert res.q.m[0] == 0.5


def test_fit_validation():
    model = ModelSpec.gaussian(1)
    with pytest.raises(ValueError):
        fit(np.empty((0, 1)), model)
    with pytest.raises(ValueError):
        fit(np.zeros((5, 2)), model)
    with pytest.raises(ValueError):
        fit(np.zeros((5, 1)), model, init=MeanFieldGaussian(m=[0.0, 0.0], s=[1.0, 1.0]))


@pytest.mark.parametrize(
    "model", [ModelSpec.gaussian(1), ModelSpec.uniform(1)], ids=["gaussian", "uniform"]
)
def test_fit_batched_single_matches_fit(model):
    rng = np.random.default_rng(8)
    theta = np.array([1.5])
    data = sample(model, theta, 25, rng)
    config = FitConfig.benchmark(25, 1, n_steps=30)
    init_m = np.median(data, axis=0)
    init_s = np.ones(1)
    kernel = GaussianKernel.default_for_dim(1)

    seed = np.random.SeedSequence(99)
    solo = fit(
        data,
        model,
        kernel=kernel,
        config=config,
        init=MeanFieldGaussian(m=init_m, s=init_s),
        rng=np.random.default_rng(seed),
    )
    m, s = fit_batched(
        data[None],
        model,
        kernel,
        config,
        [np.random.default_rng(seed)],
        init_m[None],
        init_s[None],
        dtype=np.float64,
    )
    # same generator stream and same float64 arithmetic: identical, not close
    np.testing.assert_array_equal(m[0], solo.q.m)
    np.testing.assert_array_equal(s[0], solo.q.s)


def test_fit_batched_stack_matches_individual_runs():
    model = ModelSpec.gaussian(1)
    kernel = GaussianKernel.default_for_dim(1)
    config = FitConfig.benchmark(20, 1, n_steps=25)
    rng = np.random.default_rng(10)
    data = np.stack([sample(model, np.array([2.0]), 20, rng) for _ in range(3)])
    init_m = np.median(data, axis=1)
    init_s = np.ones((3, 1))

    m, s = fit_batched(
        data,
        model,
        kernel,
        config,
        [np.random.default_rng(np.random.SeedSequence(200 + r)) for r in range(3)],
        init_m,
        init_s,
        dtype=np.float64,
    )
    for r in range(3):
        solo = fit(
            data[r],
            model,
            kernel=kernel,
            config=config,
            init=MeanFieldGaussian(m=init_m[r], s=init_s[r]),
            rng=np.random.default_rng(np.random.SeedSequence(200 + r)),
        )
        np.testing.assert_array_equal(m[r], solo.q.m)
        np.testing.assert_array_equal(s[r], solo.q.s)


def test_fit_batched_rejects_score_estimator():
    config = FitConfig(estimator=SCORE, n_particles=8)
    with pytest.raises(ValueError):
        fit_batched(
            np.zeros((1, 10, 1)),
            ModelSpec.gaussian(1),
            GaussianKernel(1.0),
            config,
            [np.random.default_rng(0)],
            np.zeros((1, 1)),
            np.ones((1, 1)),
        )


def test_fit_recovers_clean_gaussian_mean():
    model = ModelSpec.gaussian(1)
    config = FitConfig.benchmark(100, 1, n_steps=300)
    for seed in range(10):
        rng = np.random.default_rng(np.random.SeedSequence((13, seed)))
        data = sample(model, np.array([2.0]), 100, rng)
        res = fit(data, model, config=config, rng=rng)
        assert abs(res.q.m[0] - 2.0) < 0.25, (seed, res.q.m)
