import numpy as np
import pytest

from aeshape import gnorm as gn

from conftest import fd_gradient, fd_jacobian

SADDLE = gn.get_function("saddle")
CUBIC = gn.get_function("cubic")
SQUARE = gn.get_function("square")


@pytest.mark.parametrize("name", sorted(gn.GALLERY))
def test_gallery_derivatives_match_fd(name, rng):
    f = gn.GALLERY[name]
    for _ in range(5):
        x = rng.uniform(-1.5, 1.5, size=f.dim)
        g = f.gradient(x)
        assert np.allclose(g, fd_gradient(f.value, x), rtol=1e-7, atol=1e-7)
        assert np.allclose(f.hessian(x), fd_jacobian(f.gradient, x), rtol=1e-7, atol=1e-6)


def test_gnorm_finds_the_saddle():
    traj = gn.gnorm_descent(SADDLE, [0.5, 0.5])
    assert traj.converged
    assert np.linalg.norm(SADDLE.gradient(traj.terminal)) < 1e-6
    assert np.linalg.norm(traj.terminal) < 1e-6
    assert gn.classify_terminal(SADDLE, traj.terminal) is gn.Terminal.TRUE_CRITICAL


@pytest.mark.parametrize("x0", [-3.0, -0.1, 0.7, 10.0])
def test_gnorm_on_square_converges_to_zero(x0):
    traj = gn.gnorm_descent(SQUARE, [x0])
    assert abs(traj.terminal[0]) < 1e-8


def test_gnorm_on_cubic_finds_spurious_point():
    traj = gn.gnorm_descent(CUBIC, [0.5])
    assert abs(traj.terminal[0]) < 1e-8
    assert CUBIC.gradient(traj.terminal)[0] == pytest.approx(1.0)
    assert gn.classify_terminal(CUBIC, traj.terminal) is gn.Terminal.SPURIOUS


def test_classify_terminal_examples():
    assert gn.classify_terminal(SADDLE, [0.0, 0.0]) is gn.Terminal.TRUE_CRITICAL
    assert gn.classify_terminal(CUBIC, [0.0]) is gn.Terminal.SPURIOUS
    assert gn.classify_terminal(SQUARE, [1.0]) is gn.Terminal.NOT_CRITICAL


@pytest.mark.parametrize("name", ["square", "bowl", "saddle", "cubic", "illcond"])
def test_squared_gradient_norm_never_increases(name):
    f = gn.GALLERY[name]
    x0 = np.full(f.dim, 0.8)
    traj = gn.gnorm_descent(f, x0, step=0.5, max_iters=5000)
    norms = [f.gradient(x) @ f.gradient(x) for x in traj.points]
    assert all(b <= a for a, b in zip(norms, norms[1:]))


def test_newton_one_step_on_saddle():
    traj = gn.newton_saddle(SADDLE, [1.0, 1.0], step=1.0)
    assert np.array_equal(traj.points[1], [0.0, 0.0])
    assert traj.iterations == 1


def test_newton_singular_hessian():
    with pytest.raises(gn.SingularHessianError):
        gn.newton_saddle(CUBIC, [0.0])


def test_newton_rosenbrock():
    f = gn.get_function("rosenbrock")
    traj = gn.newton_saddle(f, [-1.2, 1.0])
    assert np.linalg.norm(f.gradient(traj.terminal)) < 1e-8
    assert np.allclose(traj.terminal, [1.0, 1.0])


def test_convex_quadratic_gd_and_gnorm_agree():
    f = gn.get_function("bowl")
    a = gn.gnorm_descent(f, [0.3, -0.9]).terminal
    b = gn.gradient_descent(f, [0.3, -0.9]).terminal
    assert np.allclose(a, b, atol=1e-8)


def test_gd_leaves_saddle_gnorm_does_not():
    eps = 1e-3
    with pytest.raises(gn.DivergenceError) as info:
        gn.gradient_descent(SADDLE, [eps, eps])
    assert abs(info.value.trajectory.terminal[1]) > 10
    assert np.linalg.norm(gn.gnorm_descent(SADDLE, [eps, eps]).terminal) < 1e-6


def test_gnorm_slower_than_newton_on_ill_conditioned_quadratic():
    f = gn.get_function("illcond")
    g = gn.gnorm_descent(f, [1.0, 1.0], tol=1e-8)
    n = gn.newton_saddle(f, [1.0, 1.0], tol=1e-8)
    assert g.converged and n.converged
    assert g.iterations > n.iterations


def test_divergence_error():
    with pytest.raises(gn.DivergenceError):
        gn.gradient_descent(SADDLE, [0.0, 1.0], step=0.5)


def test_bad_inputs():
    with pytest.raises(KeyError):
        gn.get_function("nope")
    with pytest.raises(ValueError):
        gn.gnorm_descent(SADDLE, [1.0])
    with pytest.raises(ValueError):
        gn.gnorm_descent(SADDLE, [1.0, 1.0], step=0.0)
