import numpy as np
import pytest

from forage.models.outlet import OutletCategory
from forage.services.outlet_catalog import (
    OutletCatalog, attribute_visits, category_defaults, filter_primary
)
from forage.utils.geo import haversine

from conftest import at, make_outlet, make_stay

T0 = 1662030000
SH = OutletCategory.SMALL_HEALTHY
LG = OutletCategory.LARGE_GROCERY
BB = OutletCategory.BIG_BOX
PF = OutletCategory.PROCESSED_FOOD


@pytest.fixture
def stay(frame):
    return make_stay("d1", at(frame), T0)


class TestCategoryDefaults:
    def test_defaults(self):
        assert category_defaults(LG) == 150.0
        assert category_defaults(BB) == 200.0
        assert category_defaults(SH) == 50.0
        assert category_defaults(PF) == 50.0


class TestOutletCatalog:
    def test_sorted_and_lookup(self, frame):
        catalog = OutletCatalog([make_outlet("O2", at(frame, 10)), make_outlet("O1", at(frame, 20), category=BB)])
        assert [o.outlet_id for o in catalog] == ["O1", "O2"]
        assert "O2" in catalog and "O9" not in catalog
        assert catalog.position("O2") == 1
        assert catalog.categories() == [BB, SH]
        assert len(catalog.of_category(SH)) == 1

    def test_with_radii(self, frame):
        catalog = OutletCatalog([make_outlet("O1", at(frame), category=LG)])
        assert catalog.with_radii({c: 10.0 for c in OutletCategory}).get("O1").radius_m == 10.0
        assert catalog.get("O1").radius_m == 150.0


class TestAttributeVisits:
    def test_category_radius(self, frame, stay):
        cases = [
            (SH, 30.0, True),
            (SH, 60.0, False),
            (LG, 140.0, True),
            (LG, 180.0, False),
        ]
        for category, east_m, expected in cases:
            catalog = OutletCatalog([make_outlet("O1", at(frame, east_m), category=category)])
            visits = attribute_visits([stay], catalog)
            assert bool(visits) is expected, (category, east_m)

    def test_nearest_wins_across_categories(self, frame, stay):
        catalog = OutletCatalog([
            make_outlet("O1", at(frame, 45.0), category=LG),
            make_outlet("O2", at(frame, 0.0, 40.0), category=SH),
        ])
        [visit] = attribute_visits([stay], catalog)
        assert visit.outlet_id == "O2"
        assert visit.category == SH
        assert visit.distance_m == pytest.approx(40.0, abs=0.1)
        assert visit.stay_id == stay.stay_id
        assert (visit.start_ts, visit.end_ts) == (stay.start_ts, stay.end_ts)

    def test_tie_goes_to_smallest_id(self, frame, stay):
        p = at(frame, 20.0)
        catalog = OutletCatalog([make_outlet("O7", p), make_outlet("O3", p)])
        [visit] = attribute_visits([stay], catalog)
        assert visit.outlet_id == "O3"

    def test_radius_override(self, frame, stay):
        catalog = OutletCatalog([make_outlet("O1", at(frame, 60.0))])
        assert attribute_visits([stay], catalog) == []
        assert len(attribute_visits([stay], catalog, radius_override=100.0)) == 1
        # el override también reduce el radio de categorías amplias
        catalog = OutletCatalog([make_outlet("O1", at(frame, 120.0), category=BB)])
        assert attribute_visits([stay], catalog, radius_override=100.0) == []

    def test_empty_inputs(self, frame, stay):
        assert attribute_visits([], OutletCatalog([make_outlet("O1", at(frame))])) == []
        assert attribute_visits([stay], OutletCatalog([])) == []

    def test_matches_brute_force(self, frame):
        rng = np.random.default_rng(21)
        categories = list(OutletCategory)
        outlets = [
            make_outlet(f"O{i:03d}", at(frame, *rng.uniform(-1500, 1500, 2)), category=categories[i % 4])
            for i in range(120)
        ]
        stays = [make_stay(f"d{i}", at(frame, *rng.uniform(-1500, 1500, 2)), T0 + i) for i in range(300)]
        catalog = OutletCatalog(outlets)
        visits = {v.stay_id: v for v in attribute_visits(stays, catalog)}

        for s in stays:
            eligible = []
            for o in catalog:
                d = haversine((s.lat, s.lon), (o.lat, o.lon))
                if d <= o.radius_m:
                    eligible.append((d, o.outlet_id))
            if not eligible:
                assert s.stay_id not in visits
            else:
                assert visits[s.stay_id].outlet_id == min(eligible)[1]

    def test_more_radius_never_fewer_visits(self, frame):
        rng = np.random.default_rng(5)
        catalog = OutletCatalog(
            make_outlet(f"O{i}", at(frame, *rng.uniform(-800, 800, 2))) for i in range(30)
        )
        stays = [make_stay(f"d{i}", at(frame, *rng.uniform(-800, 800, 2)), T0) for i in range(200)]
        counts = [len(attribute_visits(stays, catalog, radius_override=r)) for r in (50, 100, 150, 200)]
        assert counts == sorted(counts)

    def test_workers_do_not_change_result(self, frame):
        rng = np.random.default_rng(8)
        catalog = OutletCatalog(make_outlet(f"O{i}", at(frame, *rng.uniform(-500, 500, 2))) for i in range(20))
        stays = [make_stay(f"d{i % 7}", at(frame, *rng.uniform(-500, 500, 2)), T0 + i) for i in range(60)]
        assert attribute_visits(stays, catalog, workers=1) == attribute_visits(stays, catalog, workers=2)


class TestFilterPrimary:
    def test_catalog_and_visits(self, frame, stay):
        catalog = OutletCatalog([
            make_outlet("O1", at(frame, 10.0), primary_food=False),
            make_outlet("O2", at(frame, 0.0, 200.0), primary_food=True),
        ])
        assert [o.outlet_id for o in filter_primary(catalog, True)] == ["O2"]
        assert filter_primary(catalog, False) is catalog

        visits = attribute_visits([stay], catalog)
        assert [v.primary_food for v in visits] == [False]
        assert filter_primary(visits, True) == []
        assert filter_primary(visits, False) == visits
