import numpy as np
import pytest

from apsg.imex import DoubleTableau, tableau, validate


def test_ssp2_332_coefficients():
    t = tableau("SSP2-332")
    assert t.stages == 3
    assert t.A_im[0, 0] == 0.25
    np.testing.assert_allclose(t.b_im, [1 / 3, 1 / 3, 1 / 3])
    np.testing.assert_allclose(t.b_ex, [1 / 3, 1 / 3, 1 / 3])
    np.testing.assert_allclose(t.A_ex, [[0, 0, 0], [0.5, 0, 0], [0.5, 0.5, 0]])
    np.testing.assert_allclose(t.A_im, [[0.25, 0, 0], [0, 0.25, 0], [1 / 3, 1 / 3, 1 / 3]])


def test_ssp2_332_abscissae():
    t = tableau("SSP2-332")
    np.testing.assert_allclose(t.c_ex, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(t.c_im, [0.25, 0.25, 1.0])


def test_ssp2_332_validates_clean():
    assert validate(tableau("SSP2-332")) == []


def test_ssp2_332_consistency_weights():
    t = tableau("SSP2-332")
    assert t.b_im.sum() == pytest.approx(1.0)
    assert t.b_ex.sum() == pytest.approx(1.0)
    # equal weight vectors are what makes the penalty terms cancel exactly
    np.testing.assert_array_equal(t.b_im, t.b_ex)


def test_backward_euler_pair():
    t = tableau("backward-euler-pair")
    assert t.stages == 1
    assert validate(t) == []
    assert t.A_im[0, 0] == 1.0 and t.A_ex[0, 0] == 0.0
    np.testing.assert_array_equal(t.b_im, [1.0])


def test_implicit_inverse_lower_triangular():
    for name in ("SSP2-332", "backward-euler-pair"):
        t = tableau(name)
        w = np.linalg.inv(t.A_im)
        assert np.max(np.abs(np.triu(w, 1))) == 0.0


def test_validate_flags_zero_diagonal():
    t = tableau("SSP2-332")
    a_im = t.A_im.copy()
    a_im[1, 1] = 0.0
    broken = DoubleTableau("broken", t.A_ex, a_im, t.b_ex, t.b_im, t.c_ex, t.c_im)
    issues = validate(broken)
    assert any("type-A diagonal zero at stage 2" in v for v in issues)


def test_validate_flags_abscissa_mismatch():
    t = tableau("SSP2-332")
    c_ex = t.c_ex.copy()
    c_ex[1] = 0.9
    broken = DoubleTableau("broken", t.A_ex, t.A_im, t.b_ex, t.b_im, c_ex, t.c_im)
    issues = validate(broken)
    assert any("explicit abscissa mismatch" in v for v in issues)


def test_validate_rejects_non_type_a():
    # an ARS-style implicit matrix with a zero first diagonal entry
    a_im = np.array([[0.0, 0.0], [0.5, 0.5]])
    a_ex = np.array([[0.0, 0.0], [1.0, 0.0]])
    t = DoubleTableau("ars", a_ex, a_im, np.array([0.5, 0.5]), np.array([0.5, 0.5]),
                      np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    issues = validate(t)
    assert any("type-A diagonal zero at stage 1" in v for v in issues)


def test_unknown_name():
    with pytest.raises(KeyError):
        tableau("no-such-scheme")


def test_stiffly_accurate_flag():
    assert tableau("SSP2-332").stiffly_accurate
    assert tableau("backward-euler-pair").stiffly_accurate
