"""
One patient, five stages
========================

Walks the shipped toy patient from visit records to a prompt: raw interval
activity, persistence fill, the flat feature vector, and the rendered text.
"""

from ehrpersist.catalog import toy_catalog
from ehrpersist.represent import build_static, build_time_varying, render_prompt, toy_profile
from ehrpersist.timeline import IntervalGrid, VisitRecord, aggregate, apply_persistence

# %%
# Three visits in 2016. Each record carries ICD-10 codes only.
visits = [
    VisitRecord("001", "2016-02-10", ("F41.1", "J10.1", "Z65.3")),
    VisitRecord("001", "2016-04-22", ("F41.9",)),
    VisitRecord("001", "2016-09-15", ("C50.911",)),
]
catalog = toy_catalog()
for f in catalog.temporal:
    print(f"{f.name:15s} {f.policy.mode.value:22s} timeout={f.policy.timeout_quarters}")

# %%
# Raw half-year table: a cell is 1 when any visit in the interval hits the category.
raw = aggregate(visits, IntervalGrid.year("HalfYear"), catalog)
print(raw.as_dict())

# %%
# Fill: anxiety's two-quarter timeout becomes one half-year, cancer is ever-history,
# influenza stays episodic.
filled = apply_persistence(raw)
print(filled.as_dict())

# %%
# Flat vectors. The static one collapses time; the time-varying one keeps it.
profile = toy_profile("HalfYear")
for vec in (build_static(profile), build_time_varying(profile), build_time_varying(profile, with_fill=False)):
    print(vec.representation.value, [n for n, v in vec.entries if v])

# %%
# The prompt for a 3-month window.
print(render_prompt(profile, 3).text)

# %%
# Quarterly granularity narrates the same history at finer resolution.
print(render_prompt(toy_profile("Quarter"), 12).text)
