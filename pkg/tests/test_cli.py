import json
import math
import shutil
from pathlib import Path

import pytest

from forage.main import EXIT_FORAGE_ERROR, EXIT_OK, build_parser, main, overrides_from_args
from forage.models.outlet import ALL_CATEGORY, HomeBased
from forage.pipeline import files
from forage.services.ingest import load_outlets
from forage.services.metrics import summarize_population

SMALL_WORLD = {
    "synth": {
        "n_devices": 4,
        "n_outlets_per_category": 3,
        "grid_extent_m": 3000.0,
        "n_days": 7,
        "noise_sigma_m": 5.0,
        "seed": 5,
    },
    "sweep": {"radii": [50.0, 150.0]},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "study.json"
    path.write_text(json.dumps(SMALL_WORLD), encoding="utf-8")
    return path


@pytest.fixture
def synth_out(tmp_path, config_file):
    """Directorio con un mundo sintético recién generado"""
    out = tmp_path / "run"
    assert main(["synth", "--config", str(config_file), "--out", str(out)]) == EXIT_OK
    return out


def tree(root: Path):
    """Contenido de todos los archivos bajo root, salvo los manifiestos"""
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and files.MANIFESTS not in p.relative_to(root).parts
    }


def great_circle(p, q):
    """Haversine escalar con R = 6 371 km"""
    lat1, lon1, lat2, lon2 = map(math.radians, (p[0], p[1], q[0], q[1]))
    a = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * 6_371_000.0 * math.asin(math.sqrt(min(a, 1.0)))


class TestArguments:
    def test_overrides(self):
        args = build_parser().parse_args([
            "sweep", "--workers", "3", "--out", "x", "--radii", "50,75", "--primary-only",
            "--timezone", "America/Chicago", "--seed", "9",
        ])
        assert overrides_from_args(args) == {
            "workers": 3,
            "out_dir": "x",
            "synth.seed": 9,
            "sweep.radii": [50.0, 75.0],
            "visits.primary_only": True,
            "study.timezone": "America/Chicago",
        }

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["plot"])


class TestExitCodes:
    def test_missing_stage_input(self, tmp_path, capsys):
        code = main(["metrics", "--out", str(tmp_path / "empty")])
        assert code == EXIT_FORAGE_ERROR
        assert "visits.csv" in capsys.readouterr().err

    @pytest.mark.parametrize("payload", [
        {"study": {"bbox": [30.0, -82.0]}},
        {"stays": {"min_dur": 5}},
        {"study": {"window_start": 10, "window_end": 5}},
    ])
    def test_invalid_config(self, tmp_path, payload):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        assert main(["ingest", "--config", str(path), "--out", str(tmp_path)]) == EXIT_FORAGE_ERROR

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        assert main(["ingest", "--config", str(path), "--out", str(tmp_path)]) == EXIT_FORAGE_ERROR

    def test_unknown_timezone(self, tmp_path):
        assert main(["ingest", "--timezone", "Mars/Olympus", "--out", str(tmp_path)]) == EXIT_FORAGE_ERROR

    def test_invalid_radii(self, tmp_path):
        assert main(["sweep", "--radii", "50,abc", "--out", str(tmp_path)]) == EXIT_FORAGE_ERROR
        assert main(["sweep", "--radii", "50,-1", "--out", str(tmp_path)]) == EXIT_FORAGE_ERROR

    def test_missing_pings(self, tmp_path, capsys):
        assert main(["ingest", "--out", str(tmp_path)]) == EXIT_FORAGE_ERROR
        assert "pings.csv" in capsys.readouterr().err


class TestPipeline:
    def test_synth_writes_inputs(self, synth_out):
        for name in ("pings.csv", "outlets.csv", "nodes.csv", "edges.csv", "tracts.geojson"):
            assert (synth_out / "inputs" / name).exists()
        assert (synth_out / files.TRUTH).exists()
        assert (synth_out / files.MANIFESTS / "synth.json").exists()

    def test_all(self, synth_out, config_file):
        assert main(["all", "--config", str(config_file), "--out", str(synth_out)]) == EXIT_OK
        for name in (files.PINGS_CLEAN, files.HOMES, files.STAYS, files.VISITS, files.METRICS,
                     files.SUMMARY, files.TEMPORAL_PROFILE, files.TRACT_AGGREGATES, files.DENSITY_GRID,
                     files.SWEEP_RADIUS, files.SWEEP_INCLUSION, files.EVAL_REPORT, files.CONFIG_ECHO):
            assert (synth_out / name).exists(), name

        manifest = files.read_json(synth_out / files.MANIFESTS / "metrics.json")
        assert manifest["stage"] == "metrics"
        assert set(manifest["inputs"]) >= {"visits", "homes", "outlets", "nodes", "edges"}
        assert len(manifest["config_hash"]) == 64

        coverage = files.read_json(synth_out / files.HOME_COVERAGE)
        assert coverage["n_devices"] == SMALL_WORLD["synth"]["n_devices"]

    def test_summary_recomputes_from_metrics_file(self, synth_out, config_file):
        assert main(["all", "--config", str(config_file), "--out", str(synth_out)]) == EXIT_OK
        records = files.read_metrics(synth_out / files.METRICS)
        summary = summarize_population(records, window_days=45.0)
        assert summary.model_dump(mode="json") == files.read_json(synth_out / files.SUMMARY)

    def test_metrics_recompute_from_flat_files(self, synth_out, config_file):
        assert main(["all", "--config", str(config_file), "--out", str(synth_out)]) == EXIT_OK
        visits = files.read_visits(synth_out / files.VISITS)
        homes = files.read_homes(synth_out / files.HOMES)
        outlets = list(load_outlets(synth_out / "inputs" / "outlets.csv"))
        by_id = {o.outlet_id: o for o in outlets}
        records = files.read_metrics(synth_out / files.METRICS)
        assert records
        assert {r.device_id for r in records} == set(homes)

        categories = sorted({o.category.value for o in outlets}) + [ALL_CATEGORY]
        for device_id in homes:
            rows = [r.category for r in records if r.device_id == device_id]
            assert sorted(rows[:-1]) + rows[-1:] == categories

        for r in records:
            home = (homes[r.device_id].lat, homes[r.device_id].lon)

            def in_category(item):
                return r.category == ALL_CATEGORY or item.category.value == r.category

            mine = [v for v in visits if v.device_id == r.device_id and in_category(v)]
            stores = sorted({v.outlet_id for v in mine})
            visited = [great_circle(home, (by_id[s].lat, by_id[s].lon)) for s in stores]
            nearest = min(great_circle(home, (o.lat, o.lon)) for o in outlets if in_category(o))

            assert r.n_visits == len(mine)
            assert r.n_unique_stores == len(stores)
            assert r.nearest_store_euclid_m == pytest.approx(nearest)
            if stores:
                assert r.mean_visited_euclid_m == pytest.approx(sum(visited) / len(visited))
                assert r.min_visited_euclid_m == pytest.approx(min(visited))
                assert r.nearest_store_euclid_m <= r.min_visited_euclid_m + 1e-6
            else:
                assert r.mean_visited_euclid_m is None and r.min_visited_euclid_m is None

            known = [v for v in mine if v.home_based in (HomeBased.YES, HomeBased.NO)]
            if known:
                share = sum(1 for v in known if v.home_based == HomeBased.YES) / len(known)
                assert r.home_based_share == pytest.approx(share)
            else:
                assert r.home_based_share is None


    def test_stage_by_stage_equals_all(self, synth_out, config_file, tmp_path):
        other = tmp_path / "staged"
        shutil.copytree(synth_out, other)
        assert main(["all", "--config", str(config_file), "--out", str(synth_out)]) == EXIT_OK
        for stage in ("ingest", "homes", "stays", "visits", "metrics", "aggregate", "sweep", "evaluate"):
            assert main([stage, "--config", str(config_file), "--out", str(other)]) == EXIT_OK, stage
        assert tree(synth_out) == tree(other)

    def test_workers_do_not_change_outputs(self, synth_out, config_file, tmp_path):
        other = tmp_path / "parallel"
        shutil.copytree(synth_out, other)
        assert main(["all", "--config", str(config_file), "--out", str(synth_out), "--workers", "1"]) == EXIT_OK
        assert main(["all", "--config", str(config_file), "--out", str(other), "--workers", "2"]) == EXIT_OK
        assert tree(synth_out) == tree(other)
