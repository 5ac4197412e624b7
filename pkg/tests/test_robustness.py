import numpy as np
import pytest

from forage.models.home import HomeLocation, HomeMethod
from forage.models.metrics import METRIC_FIELDS
from forage.models.outlet import ALL_CATEGORY, OutletCategory
from forage.services.metrics import MetricsContext
from forage.services.outlet_catalog import OutletCatalog
from forage.services.robustness import (
    SWEEP_COLUMNS, inclusion_comparison, radius_label, radius_sweep, sweep_frame
)
from forage.services.routing import RoadGraph

from conftest import at, make_outlet, make_stay

T0 = 1662030000


def context(frame, outlets, stays):
    home = at(frame)
    homes = {
        d: HomeLocation(device_id=d, ix=0, iy=0, lat=home[0], lon=home[1],
                        method=HomeMethod.NIGHTTIME, support=12)
        for d in sorted({s.device_id for s in stays} | {"d0"})
    }
    lat, lon = zip(*[at(frame, 250 * k) for k in range(5)])
    edges = [(k, k + 1, 250.0) for k in range(4)] + [(k + 1, k, 250.0) for k in range(4)]
    graph = RoadGraph(list(range(5)), lat, lon, edges)
    return MetricsContext(homes=homes, catalog=OutletCatalog(outlets), graph=graph,
                          stays_by_id={s.stay_id: s for s in stays})


def totals(results):
    return [r.summary.total_visits.get(ALL_CATEGORY, 0) for r in results]


class TestRadiusSweep:
    def test_label(self):
        assert radius_label(50.0) == "r=50m"
        assert radius_label(12.5) == "r=12.5m"

    def test_stay_80m_from_its_outlet(self, frame):
        stays = [make_stay("d1", at(frame, 500, 80), T0)]
        ctx = context(frame, [make_outlet("O1", at(frame, 500))], stays)
        results = radius_sweep(stays, ctx, radii=[50, 100, 150, 200])
        assert [r.setting for r in results] == ["r=50m", "r=100m", "r=150m", "r=200m"]
        assert [r.axis for r in results] == ["Radius"] * 4
        assert totals(results) == [0, 1, 1, 1]

    def test_no_stays(self, frame):
        ctx = context(frame, [make_outlet("O1", at(frame, 500))], [])
        results = radius_sweep([], ctx, radii=[50, 200])
        assert totals(results) == [0, 0]
        assert results[0].summary.n_devices[ALL_CATEGORY] == 1

    def test_visits_grow_with_radius(self, frame):
        rng = np.random.default_rng(12)
        outlets = [make_outlet(f"O{i:02d}", at(frame, *rng.uniform(0, 1000, 2))) for i in range(15)]
        stays = [make_stay(f"d{i % 6}", at(frame, *rng.uniform(0, 1000, 2)), T0 + i) for i in range(80)]
        results = radius_sweep(stays, context(frame, outlets, stays))
        counts = totals(results)
        assert counts == sorted(counts)

    def test_workers_do_not_change_result(self, frame):
        stays = [make_stay("d1", at(frame, 500, 80), T0), make_stay("d2", at(frame, 250, 30), T0)]
        outlets = [make_outlet("O1", at(frame, 500)), make_outlet("O2", at(frame, 250), OutletCategory.LARGE_GROCERY)]
        ctx = context(frame, outlets, stays)
        assert radius_sweep(stays, ctx, workers=1) == radius_sweep(stays, ctx, workers=2)


class TestInclusionComparison:
    def test_non_primary_only_catalog(self, frame):
        stays = [make_stay("d1", at(frame, 500), T0)]
        outlets = [make_outlet("O1", at(frame, 500), OutletCategory.BIG_BOX, primary_food=False)]
        everything, primary = inclusion_comparison(stays, context(frame, outlets, stays))
        assert (everything.setting, primary.setting) == ("all", "primary_only")
        assert everything.summary.total_visits[ALL_CATEGORY] == 1
        assert primary.summary.total_visits[ALL_CATEGORY] == 0
        assert primary.summary.categories == [ALL_CATEGORY]
        assert primary.summary.metrics["nearest_store_euclid_m"][ALL_CATEGORY].n == 0

    def test_all_primary_catalog(self, frame):
        stays = [make_stay("d1", at(frame, 500), T0), make_stay("d1", at(frame, 1000), T0 + 3600)]
        outlets = [
            make_outlet("O1", at(frame, 500), OutletCategory.LARGE_GROCERY),
            make_outlet("O2", at(frame, 1000), OutletCategory.SMALL_HEALTHY),
        ]
        everything, primary = inclusion_comparison(stays, context(frame, outlets, stays))
        assert everything.summary == primary.summary

    def test_primary_is_subset(self, frame):
        rng = np.random.default_rng(3)
        outlets = [
            make_outlet(f"O{i:02d}", at(frame, *rng.uniform(0, 1000, 2)), primary_food=bool(i % 2))
            for i in range(12)
        ]
        stays = [make_stay(f"d{i % 4}", at(frame, *rng.uniform(0, 1000, 2)), T0 + i) for i in range(60)]
        everything, primary = inclusion_comparison(stays, context(frame, outlets, stays), radius_override=150.0)
        for cat in primary.summary.categories:
            assert primary.summary.total_visits[cat] <= everything.summary.total_visits[cat]


class TestSweepFrame:
    def test_rows(self, frame):
        stays = [make_stay("d1", at(frame, 500, 80), T0)]
        ctx = context(frame, [make_outlet("O1", at(frame, 500))], stays)
        results = radius_sweep(stays, ctx, radii=[50, 100])
        table = sweep_frame(results)
        assert list(table.columns) == SWEEP_COLUMNS
        n_categories = len(results[0].summary.categories)
        assert len(table) == 2 * n_categories * (len(METRIC_FIELDS) + 2)
        row = table[(table["setting"] == "r=100m") & (table["category"] == ALL_CATEGORY)
                    & (table["metric"] == "total_visits")]
        assert row["value"].tolist() == [1.0]
        assert row["n"].tolist() == [2]
