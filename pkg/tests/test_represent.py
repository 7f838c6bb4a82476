from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import GOLDEN, STAGE4

from ehrpersist.catalog import default_catalog, toy_catalog
from ehrpersist.represent import (
    CohortProfiles,
    Representation,
    RepresentError,
    build_static,
    build_time_varying,
    design_matrix,
    profile_from_mapping,
    profiles_from_table,
    read_demographics,
    render_prompt,
    strata_keys,
    task_sentence,
    toy_profile,
    vector_layout,
    write_demographics,
)
from ehrpersist.timeline import IntervalGrid, VisitRecord, VisitTable, aggregate

class TestToyExample:
    def test_stage4_vector(self):
        vec = build_time_varying(toy_profile("HalfYear"))
        names = list(vec.names)
        positions = [names.index(n) for n, _ in STAGE4]
        assert positions == sorted(positions)
        assert [(n, vec[n]) for n, _ in STAGE4] == STAGE4
        listed = {n for n, _ in STAGE4}
        assert all(v == 0 for n, v in vec.entries if n not in listed)

    def test_stage5_prompt_is_golden(self):
        doc = render_prompt(toy_profile("HalfYear"), 3)
        assert doc.text == GOLDEN.read_text(encoding="utf-8")
        assert doc.window_months == 3 and doc.granularity == "HalfYear"

    def test_no_fill_vector_is_raw(self):
        vec = build_time_varying(toy_profile("HalfYear"), with_fill=False)
        assert vec["anxiety_H2"] == 0 and vec["cancer_H1"] == 0 and vec["legal_problems_H2"] == 0

    def test_static_vector(self):
        vec = build_static(toy_profile("HalfYear"))
        assert vec["anxiety"] == 1 and vec["cancer"] == 1 and vec["influenza"] == 1
        assert "anxiety_H1" not in vec.names

    def test_quarter_prompt_periods(self):
        text = render_prompt(toy_profile("Quarter"), 6).text
        assert "mental_health_disorders: {Q1: Anxiety disorder; Q2: Anxiety disorder; Q3: Anxiety disorder; " \
               "Q4: Anxiety disorder}" in text
        # cancer is backfilled by the fill but only narrated from its first record
        assert "physical_health: {Q1: Influenza; Q3: Cancer; Q4: Cancer}" in text
        assert "Q1-Q3: Legal problems" in text
        assert "next 6 months" in text


class TestTaskSentence:
    @pytest.mark.parametrize("w", [3, 6, 9, 12])
    def test_windows(self, w):
        assert task_sentence(w).endswith(f"homeless in the next {w} months, no otherwise.")

    def test_bad_window(self):
        with pytest.raises(RepresentError):
            task_sentence(4)


def _cohort(n, seed, catalog=None, gran="Quarter"):
    cat = catalog or toy_catalog()
    rng = np.random.default_rng(seed)
    codes = ["F41.1", "C50.9", "J10.1", "Z65.0", "E11.9"]
    ids = [f"p{i:03d}" for i in range(n)]
    visits = []
    for pid in ids:
        for _ in range(rng.integers(0, 5)):
            day = int(rng.integers(1, 360))
            picked = tuple(c for c in codes if rng.random() < 0.3)
            visits.append(VisitRecord(pid, np.datetime64("2016-01-01") + day, picked))
    demo = {"sex": rng.choice(["male", "female", "unknown"], n).tolist(),
            "age": rng.integers(15, 95, n).astype(str).tolist()}
    return ids, visits, demo, cat, IntervalGrid.year(gran)


class TestDesignMatrix:
    @pytest.mark.parametrize("rep", list(Representation))
    def test_batch_matches_per_patient(self, rep):
        ids, visits, demo, cat, grid = _cohort(40, 1)
        cohort = profiles_from_table(VisitTable.from_records(
            [VisitRecord(v.patient_id, str(v.visit_date), v.diagnosis_codes) for v in visits], ids), demo, cat, grid)
        names, X = design_matrix(cohort, rep)
        for i, pid in enumerate(ids):
            mine = [v for v in visits if v.patient_id == pid]
            raw = aggregate([VisitRecord(pid, str(v.visit_date), v.diagnosis_codes) for v in mine], grid, cat, pid)
            prof = profile_from_mapping(cat, raw, {k: v[i] for k, v in demo.items()})
            vec = build_static(prof) if rep is Representation.STATIC else build_time_varying(
                prof, rep is Representation.TIME_VARYING)
            assert vec.names == names
            assert np.array_equal(vec.values, X[i].astype(float))

    def test_layout_is_one_hot_per_static(self):
        ids, visits, demo, cat, grid = _cohort(30, 2)
        cohort = profiles_from_table(VisitTable.from_records(
            [VisitRecord(v.patient_id, str(v.visit_date), v.diagnosis_codes) for v in visits], ids), demo, cat, grid)
        layout = vector_layout(cat, grid, "static")
        names, X = design_matrix(cohort, "static")
        for f in cat.static:
            cols = [j for j, c in enumerate(layout) if c.feature == f.name]
            assert np.all(X[:, cols].sum(axis=1) == 1)

    def test_default_catalog_layout_unique(self):
        cat = default_catalog()
        for rep in Representation:
            names = [c.name for c in vector_layout(cat, IntervalGrid.year("Quarter"), rep)]
            assert len(names) == len(set(names))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_fill_dominates_no_fill(self, seed):
        ids, visits, demo, cat, grid = _cohort(15, seed)
        cohort = profiles_from_table(VisitTable.from_records(
            [VisitRecord(v.patient_id, str(v.visit_date), v.diagnosis_codes) for v in visits], ids), demo, cat, grid)
        _, A = design_matrix(cohort, "time_varying")
        _, B = design_matrix(cohort, "time_varying_no_fill")
        assert np.all(A >= B)

    def test_strata_keys(self):
        ids, visits, demo, _, grid = _cohort(5, 3)
        cat = default_catalog()
        table = VisitTable.from_records([], ids)
        demo = {"gender": ["male"] * 5, "age": ["25", "35", "45", "55", "99"], "race": ["White"] * 5}
        cohort = profiles_from_table(table, demo, cat, grid)
        keys = strata_keys(cohort)
        assert keys[0] == "male|18-29|White" and keys[4] == "male|80-100|White"


class TestDemographicsFile:
    def test_round_trip(self, tmp_path):
        ids = ["a", "b"]
        demo = {"sex": ["male", "female"], "age": ["32", "unknown"]}
        write_demographics(tmp_path / "d.csv", ids, demo)
        got_ids, got = read_demographics(tmp_path / "d.csv")
        assert got_ids == ids and got == demo

    def test_unknown_attribute_rejected(self):
        with pytest.raises(RepresentError):
            profiles_from_table(VisitTable.from_records([], ["a"]), {"shoe_size": ["9"]},
                                toy_catalog(), IntervalGrid.year("Quarter"))

    def test_from_profiles_matches_table(self):
        ids, visits, demo, cat, grid = _cohort(10, 4)
        recs = [VisitRecord(v.patient_id, str(v.visit_date), v.diagnosis_codes) for v in visits]
        a = profiles_from_table(VisitTable.from_records(recs, ids), demo, cat, grid)
        profiles = []
        for i, pid in enumerate(ids):
            raw = aggregate([v for v in recs if v.patient_id == pid], grid, cat, pid)
            profiles.append(profile_from_mapping(cat, raw, {k: v[i] for k, v in demo.items()}))
        b = CohortProfiles.from_profiles(profiles)
        assert np.array_equal(a.static_levels, b.static_levels)
        assert np.array_equal(a.raw.values, b.raw.values)
