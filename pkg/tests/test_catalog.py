from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ehrpersist
from ehrpersist.catalog import (
    DEFAULT_COUNT_BANDS,
    DOMAIN_ORDER,
    CatalogError,
    CodePattern,
    DomainGroup,
    FeatureCatalog,
    FeatureDef,
    PersistenceMode,
    PersistencePolicy,
    ValueKind,
    band_of,
    categorize_codes,
    default_catalog,
    match_code,
    parse_catalog,
    serialize_catalog,
    toy_catalog,
)


def _binary(name, codes, mode=PersistenceMode.EPISODIC, timeout=None, group=DomainGroup.PHYSICAL_HEALTH):
    return FeatureDef(name, group, ValueKind.BINARY, tuple(CodePattern(c) for c in codes),
                      policy=PersistencePolicy(mode, timeout), temporal=True)


class TestCodeMatching:
    def test_prefix_wildcard(self):
        assert match_code("C%", "C50.911")
        assert not match_code("C%", "D50")

    def test_bare_stem_matches_dotted_children(self):
        assert match_code("F41", "F41.1")
        assert match_code("F41", "F41")
        assert not match_code("F41", "F411")

    def test_exact_dotted_code(self):
        assert match_code("Z65.3", "z65.3")
        assert not match_code("Z65.3", "Z65.30")

    def test_wildcard_must_be_terminal(self):
        with pytest.raises(CatalogError):
            CodePattern("F%1")

    def test_toy_categorization(self):
        cat = toy_catalog()
        assert cat.categorize(["F41.1", "J10.1", "Z65.3"]) == {"Anxiety", "Influenza", "Legal Problems"}
        assert cat.categorize(["C50.911"]) == {"Cancer"}
        assert cat.categorize(["E11.9"]) == frozenset()

    def test_overlapping_families_hit_both(self):
        feats = [_binary("Broad", ["F1%"]), _binary("Narrow", ["F14"])]
        cat = FeatureCatalog(tuple(feats))
        assert categorize_codes(["F14.20"], (), cat) == {"Broad", "Narrow"}

    @given(st.from_regex(r"[A-Z][0-9]{2}(\.[0-9A-Z]{1,4})?", fullmatch=True))
    def test_stem_pattern_matches_all_children(self, code):
        stem = code.split(".")[0]
        assert match_code(stem, code)
        assert match_code(stem[:2] + "%", code)


class TestFeatureDef:
    def test_timeout_only_for_time_limited(self):
        with pytest.raises(CatalogError):
            PersistencePolicy(PersistenceMode.CHRONIC_PERSISTENT, 2)
        with pytest.raises(CatalogError):
            PersistencePolicy(PersistenceMode.RECURRENT_TIME_LIMITED, None)

    def test_static_needs_unknown_level(self):
        with pytest.raises(CatalogError):
            FeatureDef("Sex", DomainGroup.DEMOGRAPHICS, ValueKind.CATEGORICAL, levels=("male", "female"))

    def test_count_gets_default_bands(self):
        f = FeatureDef("Visits", DomainGroup.SERVICE_UTILIZATION, ValueKind.COUNT,
                       stop_code_patterns=(CodePattern("323"),), count="visits")
        assert f.bands == DEFAULT_COUNT_BANDS
        assert f.is_count and not f.is_static

    def test_duplicate_names_rejected(self):
        f = _binary("A", ["A00"])
        with pytest.raises(CatalogError):
            FeatureCatalog((f, f))

    @pytest.mark.parametrize("value,band", [(0, "0"), (1, "1-2"), (2, "1-2"), (5, "3-5"), (11, "6-11"), (40, "12+")])
    def test_count_bands(self, value, band):
        assert band_of(value, DEFAULT_COUNT_BANDS) == band

    def test_age_level_of(self):
        age = toy_catalog()["Age"]
        assert age.level_of("32") == "30-39"
        assert age.level_of(80) == "80-100"
        assert age.level_of("n/a") == "unknown"


class TestShippedCatalogs:
    def test_default_catalog_shape(self):
        cat = default_catalog()
        assert len(cat) >= 70
        groups = {f.domain_group for f in cat.features}
        assert groups == set(DOMAIN_ORDER)
        for f in cat.temporal:
            assert f.policy is not None
            assert f.code_patterns or f.stop_code_patterns

    def test_reference_persistence_assignments(self):
        cat = default_catalog()
        assert cat["Anxiety Disorder"].policy.mode is PersistenceMode.RECURRENT_TIME_LIMITED
        assert cat["Opioid Use Disorder"].policy.mode is PersistenceMode.CHRONIC_PERSISTENT
        assert cat["Influenza"].policy.mode is PersistenceMode.EPISODIC
        assert cat["Solid Tumor Without Metastasis"].policy.mode is PersistenceMode.EVER_HISTORY

    def test_toy_catalog_modes(self):
        cat = toy_catalog()
        assert cat["Anxiety"].policy == PersistencePolicy(PersistenceMode.RECURRENT_TIME_LIMITED, 2)
        assert cat["Cancer"].policy.mode is PersistenceMode.EVER_HISTORY
        assert cat["Influenza"].policy.mode is PersistenceMode.EPISODIC

    @pytest.mark.parametrize("factory", [default_catalog, toy_catalog])
    def test_serialize_round_trip(self, factory):
        cat = factory()
        again = parse_catalog(serialize_catalog(cat))
        assert again == cat
        assert serialize_catalog(again) == serialize_catalog(cat)


class TestParser:
    def test_unknown_key_rejected(self):
        text = "[catalog]\nversion = 1\n\n[A]\ngroup = MentalHealth\nvalue_kind = Binary\nmode = Episodic\ncodes = F41\ncolour = red\n"
        with pytest.raises(CatalogError):
            parse_catalog(text)

    def test_bad_mode_rejected(self):
        text = "[catalog]\nversion = 1\n\n[A]\ngroup = MentalHealth\nvalue_kind = Binary\nmode = Forever\ncodes = F41\n"
        with pytest.raises(CatalogError):
            parse_catalog(text)

    def test_minimal(self):
        text = ("[catalog]\nversion = 7\n\n[A]\ngroup = MentalHealth\nvalue_kind = Binary\n"
                "mode = RecurrentTimeLimited\ntimeout_quarters = 3\ncodes = F41, F42%\n")
        cat = parse_catalog(text)
        assert cat.version == "7"
        assert cat["A"].policy.timeout_quarters == 3
        assert cat["A"].key == "a"

    @settings(max_examples=50)
    @given(st.lists(st.sampled_from(list(PersistenceMode)), min_size=1, max_size=6),
           st.integers(1, 8))
    def test_round_trip_generated(self, modes, timeout):
        feats = []
        for i, m in enumerate(modes):
            t = timeout if m is PersistenceMode.RECURRENT_TIME_LIMITED else None
            feats.append(_binary(f"Feature {i}", [f"F{10 + i}"], m, t))
        cat = FeatureCatalog(tuple(feats), version="x")
        assert parse_catalog(serialize_catalog(cat)) == cat


class TestRepositoryCopy:
    def test_matches_packaged(self):
        root = Path(__file__).resolve().parents[1]
        packaged = Path(ehrpersist.__file__).parent / "data" / "default.catalog"
        assert (root / "catalog" / "default.catalog").read_bytes() == packaged.read_bytes()
