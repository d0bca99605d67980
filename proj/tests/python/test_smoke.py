from fractions import Fraction

import pytest

import optkit

PAIR = """theory BCT
system Q = BCT [2]
prep ij : Q = { a: 1 1 }
prep jj : Q = { b: 1 2 }
obs d : Q = discriminating
input
slice: prep(ij) on x, prep(jj) on y
slice: swap on x y
slice: obs(d) on y
"""


def test_dimension_rule():
    assert optkit.dimension("BCT", [2, 3]) == 12
    assert optkit.dimension("CT", [2, 3]) == 6
    assert optkit.labels("BCT", [2, 2])[:2] == ["(1,1;+)", "(1,1;-)"]


def test_evaluate_and_normalize():
    din, dout, events = optkit.evaluate(PAIR)
    assert din == [] and dout == [2]
    assert events["a.b.2"][0][0] == Fraction(1, 2)
    assert all(x == 0 for row in events["a.b.1"] for x in row)
    text, equal = optkit.normalize(PAIR)
    assert equal
    assert text.startswith("theory BCT")


def test_parse_error_position():
    with pytest.raises(optkit.CircuitError, match="line 4, column 8"):
        optkit.evaluate("theory BCT\nsystem Q = BCT [2]\ninput x: Q\nslice: swap on x\n")


def test_certificates_replay():
    cert = optkit.check("purification", system=[2])
    assert cert["verdict"] == "counterexample"
    assert cert["reverified"]
    assert optkit.reverify(cert)
    cert["verdict"] = "rejected"
    assert not optkit.reverify(cert)


def test_exclusion_farkas():
    cert = optkit.check("excludes", system=[2], theory="BCT")
    assert cert["verdict"] == "excludes"
    assert "farkas_eq" in cert["witness"]
    assert optkit.check("excludes", system=[2], theory="CT")["verdict"] == "does-not-exclude"


def test_bad_setting():
    with pytest.raises(optkit.ConfigError):
        optkit.check("purification", depth="many")
    assert "norm-laws" in optkit.claims()
