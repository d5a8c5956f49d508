"""Smoke test for the kcone Python bindings.

Build and install first:
    pip install --no-build-isolation ./crates/kcone-py
"""

import kcone_py


def main() -> None:
    assert set(kcone_py.bundled_names()) == {"sextic", "sextic-secondary", "pitchfork", "regular"}

    pitchfork = kcone_py.analyze(kcone_py.Problem.bundled("pitchfork"))
    assert pitchfork.transversal
    assert (pitchfork.k, pitchfork.chi, pitchfork.l) == (1, 1, 1)
    assert pitchfork.verdict == "bifurcation"
    assert pitchfork.approximation_order == "exact-zero"
    assert pitchfork.max_newton_residual < 1e-12
    positive, negative = pitchfork.degree_signs
    assert positive == -negative

    secondary = kcone_py.analyze(kcone_py.Problem.bundled("sextic-secondary"))
    assert (secondary.k, secondary.chi) == (3, 3)
    assert abs(secondary.slope("abs_det") - 3.0) < 0.05
    assert abs(secondary.slope("inv_norm") + 3.0) < 0.05

    text = '{"n": 1, "m": 1, "map": [[{"coef": "1", "exp": [1]}]], "curve": [["1"]], "k_max": 2}'
    regular = kcone_py.analyze(kcone_py.Problem.from_json(text))
    assert regular.chi == 0 and regular.verdict == "not-applicable"

    try:
        kcone_py.Problem.from_json('{"n": 1,')
    except ValueError as err:
        assert "line" in str(err)
    else:
        raise AssertionError("malformed problem accepted")

    csv = kcone_py.trace(kcone_py.Problem.bundled("pitchfork"), "0.1:0.01:5")
    lines = csv.strip().splitlines()
    assert lines[0].startswith("# ")
    assert lines[1].startswith("eps,residual,abs_det")
    assert len(lines) == 12

    suites = kcone_py.verify(k=2, count=6, seed=0)
    assert suites.all_hold, suites.to_json()

    assert kcone_py.milnor_from_branches([11, 3], 4) == 11
    print("kcone_py smoke test passed:", pitchfork, secondary)


if __name__ == "__main__":
    main()
