"""Smoke test for the wellposed_py extension module.

Build and install first, e.g. `pip install --no-build-isolation ./crates/py`.
"""

import math

import wellposed_py as wp

GOLDEN = """
p = 2
q = 2
mu = [0.0, 0.0]
[gamma]
tau2 = {tau2}
[sigma]
sigma2 = 1.0
[forward]
H = [1.0, 0.0, 0.0, 1.0]
"""

SIN = """
p = 1
q = 1
mu = [0.3]
[gamma]
tau2 = 1.0
[sigma]
sigma2 = 0.1
[forward]
builtin = "sin1d"
"""


def main():
    assert wp.default_c() == 4.0

    well = wp.check_spec(GOLDEN.format(tau2=4.0))
    ill = wp.check_spec(GOLDEN.format(tau2=0.1))
    assert well.overall == "well_posed", well
    assert ill.overall == "ill_posed", ill
    exact = well.verdict("fisher_exact")
    assert exact.holds and exact.kind == "exact"
    assert math.isclose(exact.lhs, 1.28)
    assert well.psi_spectrum == [1.0, 1.0]

    assert wp.check_spec(SIN).overall == "inconclusive"
    assert wp.check_spec(SIN, linearize="mean").overall == "well_posed"
    assert wp.check_spec(SIN, linearize=[math.pi / 2]).overall == "inconclusive"

    eye = [[1.0, 0.0], [0.0, 1.0]]
    assert wp.fisher_signal_tau2(2, 1.0) == 1.0
    closed = wp.fisher_observed_tau2(eye, eye, 1.0)
    assert closed == 0.25
    assert abs(wp.fd_fisher_tau2(eye, eye, 1.0) - closed) <= 1e-4 * closed
    est, se = wp.score_variance_fi(eye, eye, 1.0, n=20000, seed=7)
    assert abs(est - closed) <= 3 * se

    a, gamma = [1.0, -0.5], [[2.0, 0.5], [0.5, 1.0]]
    assert wp.sobol_wellposed_scalar(a, gamma, 0.5).holds
    assert wp.entropy_wellposed_scalar(a, gamma, 0.5).holds
    assert not wp.sobol_wellposed_scalar(a, gamma, 5.0).holds

    samples, rate = wp.sample_constrained_prior([[1.0]], 3.0, [1.0], 0.5, 200, seed=1)
    assert len(samples) == 200 and 0.0 < rate <= 1.0
    assert all(s[0][0] > 0.5 for s in samples)

    try:
        wp.fisher_observed_tau2([[1.0, 0.0], [0.0]], eye, 1.0)
    except wp.WellposedError:
        pass
    else:
        raise AssertionError("ragged matrix accepted")
    try:
        wp.check_spec(GOLDEN.format(tau2=4.0).replace("0.0, 1.0]", "0.0]"))
    except ValueError:
        pass
    else:
        raise AssertionError("malformed spec accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
