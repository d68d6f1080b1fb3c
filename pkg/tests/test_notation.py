import pytest

from cohist.scenarios.notation import NotationScheme, canonical_label, normalize_label, notation_alias, translate


@pytest.mark.parametrize(
    "native,hardy,stapp",
    [
        ("Z_a^+", "U_1=0", "L1+"),
        ("X_a^+", "D_1=0", "L2-"),
        ("Z_b^-", "U_2=1", "R1+"),
        ("X_b^+", "D_2=0", "R2+"),
        ("X_b", "D_2", "R2"),
    ],
)
def test_table_rows(native, hardy, stapp):
    assert notation_alias(native, "this-paper", "hardy") == hardy
    assert notation_alias(native, "this-paper", "stapp") == stapp
    assert notation_alias(stapp, NotationScheme.STAPP, NotationScheme.NATIVE) == native
    assert notation_alias(hardy, "hardy", "stapp") == stapp


def test_every_scheme_is_a_bijection():
    for scheme in NotationScheme:
        labels = scheme.labels()
        assert len(set(labels)) == len(labels) == 12, f"Scheme {scheme.value} should have 12 distinct labels."
        back = {v: k for k, v in scheme.mapping_to(NotationScheme.NATIVE).items()}
        assert NotationScheme.NATIVE.mapping_to(scheme) == back


def test_unknown_labels():
    with pytest.raises(KeyError):
        notation_alias("Y_b^+", "this-paper", "hardy")
    with pytest.raises(ValueError):
        notation_alias("Z_b", "this-paper", "dirac")
    assert translate("[0]_a", "stapp") == "[0]_a", "Labels outside the table are left unchanged."
    assert canonical_label("[0]_a") is None


def test_typographic_minus():
    assert normalize_label("Z_b^−") == "Z_b^-"
    assert translate("Z_b^−", "hardy") == "U_2=1"
    assert canonical_label("R1+") == "Z_b^-"
