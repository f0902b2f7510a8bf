"""End-to-end CLI runs: file outputs, manifests, precedence, determinism.

All commands run in-process through main() against a reduced ladder so the
whole module stays in tens of seconds.
"""

import json
import math
import os

import numpy as np
import pytest

import qfall.kernels as kernels
from qfall.cli import _read_events_csv, main
from qfall.physcore import derive_scales

DESK_CFG = """
physics.n_max = 50
inference.n_source = 20000
inference.n_replicates = 4
inference.seed = 42
inference.n_scan = 11
inference.rel_window = 1e-4
"""


@pytest.fixture()
def engine_guard():
    saved = kernels._engine
    yield
    kernels._engine = saved


@pytest.fixture()
def desk_cfg(tmp_path):
    path = tmp_path / "desk.cfg"
    path.write_text(DESK_CFG)
    return str(path)


def _manifest(out_dir, command):
    path = os.path.join(out_dir, "%s_manifest.json" % command)
    with open(path) as fh:
        return json.load(fh)


class TestLightCommands:
    def test_scales(self, tmp_path):
        out = str(tmp_path)
        assert main(["scales", "--out", out]) == 0
        with open(tmp_path / "scales.json") as fh:
            data = json.load(fh)
        sc = derive_scales(9.81)
        assert data["length_m"] == sc.length
        assert data["time_s"] == sc.time
        man = _manifest(out, "scales")
        assert man["status"] == "ok"
        assert man["outputs"] == ["scales.json"]
        assert man["engine"] in ("numba", "numpy")
        assert len(man["config_hash"]) == 64
        assert man["versions"]["numpy"] == np.__version__

    def test_basis_table(self, tmp_path, desk_cfg):
        out = str(tmp_path)
        assert main(["basis", "--config", desk_cfg, "--out", out]) == 0
        rows = np.loadtxt(tmp_path / "basis.csv", delimiter=",",
                          skiprows=4)
        assert rows.shape == (50, 4)
        assert rows[0, 1] == pytest.approx(2.3381074104597674, abs=1e-10)

    def test_end_of_mirror(self, tmp_path, desk_cfg):
        out = str(tmp_path)
        assert main(["end-of-mirror", "--config", desk_cfg,
                     "--out", out]) == 0
        with open(tmp_path / "end_of_mirror.json") as fh:
            data = json.load(fh)
        assert data["fraction"] == pytest.approx(0.0923, abs=5e-3)
        assert data["expected_count"] == round(20000 * data["fraction"])

    def test_source_dist(self, tmp_path, desk_cfg):
        out = str(tmp_path)
        assert main(["source-dist", "--config", desk_cfg,
                     "--out", out]) == 0
        rows = np.loadtxt(tmp_path / "source_dist.csv", delimiter=",",
                          skiprows=3)
        assert rows[:, 1].sum() == pytest.approx(1.0, abs=1e-12)


class TestCurrentMap:
    def test_small_grid(self, tmp_path, desk_cfg):
        out = str(tmp_path)
        assert main(["current-map", "--config", desk_cfg, "--out", out,
                     "--ny", "9", "--nT", "11"]) == 0
        rows = np.loadtxt(tmp_path / "current_map.csv", delimiter=",",
                          skiprows=4)
        assert rows.shape == (9 * 11, 3)
        assert rows[:, 2].min() >= 0.0
        with open(tmp_path / "current_map.json") as fh:
            data = json.load(fh)
        assert data["peak_density_per_m2s"] > 0
        man = _manifest(out, "current_map")
        assert man["resolved"]["ny"] == 9

    def test_folded_export(self, tmp_path, desk_cfg):
        out = str(tmp_path)
        assert main(["current-map", "--config", desk_cfg, "--out", out,
                     "--ny", "5", "--nT", "5", "--folded"]) == 0
        man = _manifest(out, "current_map")
        assert "folded_map.csv" in man["outputs"]
        nt, nT = man["resolved"]["folded_grid"]
        with open(tmp_path / "folded_map.csv") as fh:
            n_rows = sum(1 for line in fh
                         if line.strip() and not line.startswith("#"))
        assert n_rows == nt * nT + 1  # header plus one row per cell


class TestSimulateEstimate:
    def test_roundtrip_and_determinism(self, tmp_path, desk_cfg):
        out_a = str(tmp_path / "a")
        out_b = str(tmp_path / "b")
        assert main(["simulate", "--config", desk_cfg, "--out", out_a]) == 0
        assert main(["simulate", "--config", desk_cfg, "--out", out_b]) == 0
        bytes_a = open(os.path.join(out_a, "events.csv"), "rb").read()
        bytes_b = open(os.path.join(out_b, "events.csv"), "rb").read()
        assert bytes_a == bytes_b
        out_c = str(tmp_path / "c")
        assert main(["simulate", "--config", desk_cfg, "--out", out_c,
                     "--seed", "43"]) == 0
        assert open(os.path.join(out_c, "events.csv"), "rb").read() != bytes_a

        events = _read_events_csv(os.path.join(out_a, "events.csv"))
        assert events.n_source == 20000
        assert events.g_true == pytest.approx(9.81, rel=1e-15)
        man = _manifest(out_a, "simulate")
        assert man["resolved"]["n_detected"] == events.n_detected

        assert main(["estimate", "--config", desk_cfg, "--out", out_a,
                     "--events", os.path.join(out_a, "events.csv")]) == 0
        with open(os.path.join(out_a, "estimate.json")) as fh:
            est = json.load(fh)
        assert abs(est["g_hat_mps2"] - 9.81) < 4 * est["sigma_mps2"]
        scan = np.loadtxt(os.path.join(out_a, "estimate_scan.csv"),
                          delimiter=",", skiprows=3)
        assert scan.shape[0] == 11

    def test_event_csv_float_roundtrip(self, tmp_path, desk_cfg):
        out = str(tmp_path)
        assert main(["simulate", "--config", desk_cfg, "--out", out]) == 0
        events = _read_events_csv(os.path.join(out, "events.csv"))
        # %.17g preserves doubles exactly, so T - t stays positive
        assert (events.arrival_time - events.edge_time).min() > 0


class TestFisherCampaign:
    def test_fisher_file(self, tmp_path, desk_cfg):
        out = str(tmp_path)
        assert main(["fisher", "--config", desk_cfg, "--out", out]) == 0
        with open(tmp_path / "fisher.json") as fh:
            data = json.load(fh)
        assert data["fisher_per_event"] > 0
        assert data["sigma_cr_mps2"] == pytest.approx(
            1.0 / math.sqrt(20000 * 0.0923 * data["fisher_per_event"]),
            rel=0.01)

    def test_campaign_files(self, tmp_path, desk_cfg):
        out = str(tmp_path)
        assert main(["campaign", "--config", desk_cfg, "--out", out]) == 0
        with open(tmp_path / "campaign.json") as fh:
            data = json.load(fh)
        assert data["n_replicates"] == 4
        assert data["sigma_mc"] > 0
        rows = np.loadtxt(tmp_path / "campaign_replicates.csv",
                          delimiter=",", skiprows=4)
        assert rows.shape == (4, 4)
        man = _manifest(out, "campaign")
        assert man["resolved"]["edge_hits"] == 0


class TestFailureAndPrecedence:
    def test_failed_run_leaves_manifest(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("physics.n_max = -3\n")
        out = str(tmp_path)
        assert main(["scales", "--config", str(bad), "--out", out]) == 1
        man = _manifest(out, "scales")
        assert man["status"] == "error"
        assert "n_max" in man["error"]
        assert man["outputs"] == []

    def test_seed_precedence(self, tmp_path, desk_cfg, monkeypatch):
        out = str(tmp_path)
        monkeypatch.setenv("QFALL_SEED", "7")
        assert main(["scales", "--config", desk_cfg, "--out", out]) == 0
        assert _manifest(out, "scales")["seed"] == 7
        assert main(["scales", "--config", desk_cfg, "--out", out,
                     "--seed", "9"]) == 0
        assert _manifest(out, "scales")["seed"] == 9
        monkeypatch.delenv("QFALL_SEED")
        assert main(["scales", "--config", desk_cfg, "--out", out]) == 0
        assert _manifest(out, "scales")["seed"] == 42

    def test_config_via_env(self, tmp_path, desk_cfg, monkeypatch):
        out = str(tmp_path)
        monkeypatch.setenv("QFALL_CONFIG", desk_cfg)
        assert main(["scales", "--out", out]) == 0
        assert _manifest(out, "scales")["config"]["n_max"] == 50

    def test_engine_flag_recorded(self, tmp_path, engine_guard):
        out = str(tmp_path)
        assert main(["scales", "--out", out, "--engine", "numpy"]) == 0
        assert _manifest(out, "scales")["engine"] == "numpy"

    def test_gravity_flag_overrides(self, tmp_path):
        out = str(tmp_path)
        assert main(["scales", "--out", out, "--g", "3.71"]) == 0
        with open(tmp_path / "scales.json") as fh:
            data = json.load(fh)
        assert data["gravity_mps2"] == 3.71
        assert data["length_m"] == derive_scales(3.71).length
