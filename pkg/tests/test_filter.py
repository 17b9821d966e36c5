import numpy as np
import pytest

from mcvl.encoder import GlobalDescriptor
from mcvl.geometry import Pose6D
from mcvl.particle_filter import (
    FilterConfig,
    MonteCarloLocalizer,
    MotionNoiseModel,
    ObservationNoiseModel,
    ParticleSet,
    estimate,
    init_particles,
    log_likelihood,
    predict,
    resample_sus,
    sus_select,
    step,
    update_weights,
)
from mcvl.retrieval import MapDatabase, Measurement

ZERO3 = np.zeros((3, 3))


def particles(positions, orientations=None, weights=None):
    P = np.asarray(positions, float).reshape(-1, 3)
    n = len(P)
    R = np.zeros((n, 3)) if orientations is None else np.asarray(orientations, float).reshape(n, 3)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, float)
    return ParticleSet(P, R, w)


def meas(pos, rot=(0, 0, 0), support=10):
    return Measurement(Pose6D(pos, rot), support, np.zeros(support), np.arange(support))


def counts(idx, n):
    return np.bincount(idx, minlength=n)


def test_default_filter_parameters():
    cfg = FilterConfig()
    assert cfg.n_particles == 1000
    np.testing.assert_array_equal(np.diag(cfg.observation.sigma_o), [5, 5, 5, 1e-4, 1e-4, 1e-3])
    np.testing.assert_array_equal(np.diag(cfg.motion.sigma_v), [1, 1, 0.01])
    np.testing.assert_array_equal(np.diag(cfg.motion.sigma_psi), [1e-4, 1e-5, 0.01])
    np.testing.assert_array_equal(cfg.motion.mu_v, [0.1, 0.1, 0.01])
    np.testing.assert_array_equal(cfg.motion.mu_psi, [0.001, 1e-5, 0.01])
    assert cfg.resample == "always"


def test_init_uniform_weights(rng):
    ps = init_particles(meas([1, 2, 3]), 1000, rng=rng)
    assert len(ps) == 1000
    np.testing.assert_array_equal(ps.weights, np.full(1000, 0.001))


def test_init_zero_covariance_exact(rng):
    z = meas([1.5, -2.0, 0.25], [0.1, 0.0, -3.0])
    ps = init_particles(z, 50, np.zeros(3), np.zeros(3), rng)
    assert np.all(ps.positions == z.pose.position)
    assert np.all(ps.orientations == z.pose.orientation)


def test_init_sample_mean(rng):
    z = meas([10.0, 20.0, 0.0])
    ps = init_particles(z, 1000, rng=rng)
    bound = 3 * np.sqrt(10.0) / np.sqrt(1000)
    assert np.all(np.abs(ps.positions.mean(axis=0) - z.pose.position) < bound)


def test_predict_zero_noise_identity(rng):
    ps = particles(rng.normal(size=(5, 3)), rng.normal(0, 0.3, (5, 3)))
    out = predict(ps, MotionNoiseModel(np.zeros(3), ZERO3, np.zeros(3), ZERO3), rng)
    np.testing.assert_array_equal(out.positions, ps.positions)
    np.testing.assert_allclose(out.orientations, ps.orientations, atol=1e-15)


def test_predict_deterministic_translation(rng):
    noise = MotionNoiseModel([1.0, 0, 0], ZERO3, np.zeros(3), ZERO3)
    ps = predict(predict(particles([[0.0, 0, 0]]), noise, rng), noise, rng)
    np.testing.assert_array_equal(ps.positions[0], [2.0, 0, 0])


def test_predict_yaw_integration(rng):
    noise = MotionNoiseModel(np.zeros(3), ZERO3, [0, 0, 0.1], ZERO3)
    ps = particles([[0.0, 0, 0]])
    for _ in range(10):
        ps = predict(ps, noise, rng)
    np.testing.assert_allclose(ps.orientations[0], [0, 0, 1.0], atol=1e-9)


def test_predict_body_frame(rng):
    noise = MotionNoiseModel([1.0, 0, 0], ZERO3, np.zeros(3), ZERO3, frame="body")
    ps = predict(particles([[0.0, 0, 0]], [[0, 0, np.pi / 2]]), noise, rng)
    np.testing.assert_allclose(ps.positions[0], [0, 1, 0], atol=1e-15)
    with pytest.raises(ValueError):
        MotionNoiseModel(frame="sideways")


def test_likelihood_peak_is_one():
    obs = ObservationNoiseModel()
    ll = log_likelihood(particles([[1.0, 2, 3], [4, 5, 6]]), meas([1.0, 2, 3]), obs)
    assert ll[0] == 0.0 and ll[1] < 0


def test_symmetric_particles_equal_weights():
    ps = update_weights(particles([[-1.0, 0, 0], [1.0, 0, 0]]), meas([0, 0, 0]), ObservationNoiseModel())
    np.testing.assert_allclose(ps.weights, [0.5, 0.5], atol=1e-15)


def test_yaw_residual_wraps():
    obs = ObservationNoiseModel()
    near = log_likelihood(particles([[0.0, 0, 0]], [[0, 0, 2 * np.pi - 0.01]]), meas([0, 0, 0]), obs)
    ref = log_likelihood(particles([[0.0, 0, 0]], [[0, 0, 0.01]]), meas([0, 0, 0]), obs)
    np.testing.assert_allclose(near, ref, rtol=1e-9)


def test_far_particles_do_not_underflow():
    ps = update_weights(particles([[1e4, 0, 0], [1e4 + 1, 0, 0]]), meas([0, 0, 0]), ObservationNoiseModel())
    assert np.all(np.isfinite(ps.weights)) and ps.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_nan_residual_rejected():
    ps = particles([[np.nan, 0, 0]])
    with pytest.raises(ValueError):
        log_likelihood(ps, meas([0, 0, 0]), ObservationNoiseModel())


def test_sus_uniform_reproduces_each_once(rng):
    for n in (1, 7, 1000):
        assert np.array_equal(counts(sus_select(np.full(n, 1.0 / n), rng), n), np.ones(n))


def test_sus_integer_expectations(rng):
    for _ in range(50):
        assert list(counts(sus_select([0.5, 0.5, 0, 0], rng), 4)) == [2, 2, 0, 0]


def test_sus_count_bounds(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        w = rng.dirichlet(np.full(n, rng.uniform(0.05, 2.0)))
        c = counts(sus_select(w, rng), n)
        assert c.sum() == n
        assert np.all(c >= np.floor(n * w - 1e-9)) and np.all(c <= np.ceil(n * w + 1e-9))


def test_sus_unbiased(rng):
    w = np.array([0.05, 0.3, 0.125, 0.2, 0.075, 0.25])
    n, trials = len(w), 100_000
    total = np.zeros(n)
    for _ in range(trials):
        total += counts(sus_select(w, rng), n)
    np.testing.assert_allclose(total / trials, n * w, rtol=0.01)


def test_resample_resets_weights(rng):
    ps = particles(rng.normal(size=(10, 3)), weights=rng.dirichlet(np.ones(10)))
    out = resample_sus(ps, rng)
    np.testing.assert_array_equal(out.weights, np.full(10, 0.1))


def test_estimate_cases():
    same = estimate(particles(np.tile([1.0, 2, 3], (4, 1)), np.tile([0.1, 0.2, 0.3], (4, 1))))
    np.testing.assert_allclose(same.as_vector(), [1, 2, 3, 0.1, 0.2, 0.3], atol=1e-12)
    np.testing.assert_allclose(estimate(particles([[0.0, 0, 0], [2, 0, 0]])).position, [1, 0, 0])
    np.testing.assert_allclose(
        estimate(particles([[0.0, 0, 0], [10, 0, 0]], weights=[0.9, 0.1])).position, [1, 0, 0], atol=1e-12
    )


def test_static_convergence():
    # orientation starts exact: with a 1 rad^2 initial yaw spread against a 1e-3 yaw
    # measurement variance, one particle takes all weight and zero motion noise never
    # re-diversifies the cloud
    cfg = FilterConfig(init_cov_rot=np.zeros(3), motion=MotionNoiseModel(np.zeros(3), ZERO3, np.zeros(3), ZERO3))
    z = meas([50.0, -20.0, 0.0], [0, 0, 0.7])
    loc = MonteCarloLocalizer(cfg, seed=1)
    loc.initialize(z)
    for _ in range(10):
        est = loc.step(z)
    assert np.linalg.norm(est.position - z.pose.position) < 0.5


def test_skipped_measurement_grows_spread():
    loc = MonteCarloLocalizer(FilterConfig(), seed=2)
    loc.initialize(meas([0.0, 0, 0]))
    loc.step(meas([0.5, 0, 0]))
    before = loc.records[-1].spread
    loc.step(None)
    assert loc.records[-1].spread > before
    assert not loc.records[-1].updated


@pytest.mark.parametrize("resample", ["always", "neff"])
def test_weights_normalized_every_step(rng, resample):
    loc = MonteCarloLocalizer(FilterConfig(n_particles=300, resample=resample), seed=3)
    loc.initialize(meas([0.0, 0, 0]))
    for t in range(30):
        z = None if t % 7 == 3 else meas(rng.normal(0, 3, 3) + [0.1 * t, 0, 0])
        loc.step(z)
        assert abs(loc.particles.weights.sum() - 1.0) <= 1e-12
        assert 1.0 - 1e-9 <= loc.records[-1].n_eff <= 300 + 1e-9


def test_seed_determinism(rng):
    zs = [None] + [meas(rng.normal(0, 2, 3) + [t, 0, 0], [0, 0, 0.01 * t]) for t in range(25)]
    zs[10] = None
    runs = []
    for _ in range(2):
        loc = MonteCarloLocalizer(FilterConfig(), seed=11)
        out = loc.run(zs)
        assert out[0] is None
        runs.append(np.array([e.as_vector() for e in out[1:]]))
    assert np.array_equal(runs[0], runs[1])


def test_step_without_measurement_is_predict_only(rng):
    class ZeroCodebook:
        def encode(self, img):
            return GlobalDescriptor(np.zeros(4), True)

    db = MapDatabase(np.eye(4), np.zeros((4, 6)), np.zeros(4), np.arange(4))
    ps = particles(rng.normal(size=(20, 3)))
    noise = MotionNoiseModel([1.0, 0, 0], ZERO3, np.zeros(3), ZERO3)
    out, est = step(ps, None, db, ZeroCodebook(), FilterConfig(motion=noise), rng)
    np.testing.assert_array_equal(out.positions, ps.positions + [1.0, 0, 0])
    np.testing.assert_array_equal(out.weights, ps.weights)


def test_uninitialized_step_raises():
    with pytest.raises(RuntimeError):
        MonteCarloLocalizer().step(None)
