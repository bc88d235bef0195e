import hashlib
import json

import pytest

from obpm_lab.cli import SCHEMAS, ConfigError, main, parse_config_text, parse_input_state


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


class TestConfigParsing:
    def test_defaults_and_comments(self):
        cfg = parse_config_text("# header\ns = 0.5  # trailing\n\n", SCHEMAS["homodyne"])
        assert cfg["s"] == 0.5
        assert cfg["k"] == 64

    def test_lists(self):
        cfg = parse_config_text("etas = 0, 0.3,0.6\n", SCHEMAS["teleport"])
        assert cfg["etas"] == [0.0, 0.3, 0.6]

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError, match=r"x.cfg:3: unknown key 'foo'"):
            parse_config_text("s = 1\n\nfoo = 2\n", SCHEMAS["fig2"], "x.cfg")

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match=r":2: expected"):
            parse_config_text("s = 1\nr_t_squared 4\n", SCHEMAS["fig2"])

    def test_bad_value(self):
        with pytest.raises(ConfigError, match=r":1: bad value"):
            parse_config_text("trajectories = many\n", SCHEMAS["jumps"])

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("s = 1\ns = 2\n", SCHEMAS["fig2"])

    @pytest.mark.parametrize("spec,dim", [("vacuum", 1), ("fock:3", 4)])
    def test_input_states(self, spec, dim):
        assert parse_input_state(spec).dims == (dim,)

    def test_coherent_input(self):
        psi = parse_input_state("coherent:1.0,0.5")
        assert psi.photon_number() == pytest.approx(1.0, rel=1e-9)

    def test_bad_input(self):
        with pytest.raises(ConfigError):
            parse_input_state("thermal:2")


class TestExitCodes:
    def test_unknown_key_exits_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "r0 = 7\nbogus = 1\n")
        assert main(["jumps", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "run.cfg:2" in capsys.readouterr().err

    def test_ideal_resource_exits_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "etas = 0.5, 1.0\n")
        assert main(["teleport", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "1 - eps" in capsys.readouterr().err

    def test_zero_trajectories_exits_2(self, tmp_path):
        cfg = write_cfg(tmp_path, "trajectories = 0\n")
        assert main(["jumps", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_missing_config_exits_2(self, tmp_path):
        assert main(["fig2", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == 2

    def test_failed_check_exits_3(self, tmp_path):
        # a window that misses most of the mass fails the embedded normalization check
        cfg = write_cfg(tmp_path, "x_min = -1\nx_max = 1\nk = 16\n")
        out = tmp_path / "o"
        assert main(["homodyne", "--config", cfg, "--out", str(out)]) == 3
        checks = manifest(out)["checks"]
        assert not checks[0]["passed"]


class TestSubcommands:
    def test_fig2(self, tmp_path):
        out = tmp_path / "fig2"
        assert main(["fig2", "--out", str(out)]) == 0
        man = manifest(out)
        assert man["subcommand"] == "fig2"
        assert man["results"]["extreme_split_probability"] == pytest.approx(0.1127, abs=5e-4)
        assert all(c["passed"] for c in man["checks"])
        entry = man["outputs"][0]
        digest = hashlib.sha256((out / entry["path"]).read_bytes()).hexdigest()
        assert digest == entry["sha256"]
        assert (out / "fig2.csv").read_text().splitlines()[0] == "m,P_c,P_d"

    def test_homodyne_sweep(self, tmp_path):
        cfg = write_cfg(tmp_path, "s = 0.8\nvarphi_sweep = 4\nk = 16\n")
        out = tmp_path / "h"
        assert main(["homodyne", "--config", cfg, "--out", str(out)]) == 0
        man = manifest(out)
        assert len(man["outputs"]) == 4
        prod = [c for c in man["checks"] if c["name"] == "variance_min_times_max"][0]
        assert prod["value"] == pytest.approx(1.0, abs=1e-4)

    def test_teleport_vacuum(self, tmp_path):
        cfg = write_cfg(tmp_path, "input = vacuum\netas = 0\nsamples = 4\nk = 16\nk_b = 16\n")
        out = tmp_path / "t"
        assert main(["teleport", "--config", cfg, "--out", str(out)]) == 0
        rows = (out / "fidelity.csv").read_text().splitlines()
        assert rows[1].split(",")[1] == "1"

    def test_jumps_outputs(self, tmp_path):
        cfg = write_cfg(tmp_path, "trajectories = 500\n")
        out = tmp_path / "j"
        assert main(["jumps", "--config", cfg, "--out", str(out), "--seed", "5"]) == 0
        man = manifest(out)
        assert man["seed"] == 5
        names = {o["path"] for o in man["outputs"]}
        assert names == {"trajectories.csv", "p_given_s.csv", "posterior.csv", "delta_histogram.csv"}
        assert man["warnings"] == []

    def test_jumps_validity_warning_recorded(self, tmp_path):
        cfg = write_cfg(tmp_path, "tau = 0.1\nt = 1\ntrajectories = 20\n")
        out = tmp_path / "j"
        assert main(["jumps", "--config", cfg, "--out", str(out)]) == 0
        assert "not below" in manifest(out)["warnings"][0]

    def test_out_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OBPM_LAB_OUT", str(tmp_path / "env"))
        assert main(["fig2"]) == 0
        assert (tmp_path / "env" / "fig2.csv").exists()
