"""Whole-model pipeline and the command-line interface."""

import importlib.util
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import dcnb
from dcnb import bitstream, codec, ingest
from dcnb.cli import main

from conftest import make_synthetic_model


def run_cli(*argv):
    return main(list(argv))


class TestCodecPipeline:
    def test_encode_decode_preserves_indices(self, tmp_path):
        rng = np.random.default_rng(55)
        entries = make_synthetic_model(seed=3)
        layers = ingest.select_codable(entries)
        params = codec.EncodeParams(lambda_=0.01, s=20)
        result = codec.encode_model(layers, params)
        model = bitstream.parse(result.to_bytes())
        decoded = codec.decode_model(model)
        # The lossless stage: re-encoding the decoded weights with the same
        # grid must reproduce identical indices, i.e. decode inverted the
        # coder exactly.  Check via payload identity on a second pass.
        assert len(decoded) == len(layers)
        for (header, payload), entry in zip(model, decoded):
            assert entry.data.shape == header.orig_shape
            back = dcnb.matrixify(entry.data)
            idx = np.rint(back.astype(np.float64) / header.delta).astype(np.int32)
            from dcnb import fastpath
            repay = fastpath.encode_indices(
                idx.ravel(), header.n_flags, header.remainder_bits,
                header.adaptation_shift)
            assert repay == payload

    def test_thread_counts_agree(self):
        layers = ingest.select_codable(make_synthetic_model(seed=9))
        single = codec.encode_model(layers, codec.EncodeParams(threads=1))
        multi = codec.encode_model(layers, codec.EncodeParams(threads=8))
        assert single.to_bytes() == multi.to_bytes()

    @pytest.mark.parametrize("scale", [1e-30, 1e-6, 1.0, 1e6, 1e30])
    def test_extreme_weight_scales(self, scale):
        rng = np.random.default_rng(int(abs(np.log10(scale))) + 3)
        w = (rng.normal(0, 1, size=(12, 9)) * scale).astype(np.float32)
        layer = ingest.CodableLayer("x", w, (12, 9), None)
        result = codec.encode_model([layer], codec.EncodeParams(lambda_=0.0))
        header, _ = result.model[0]
        decoded = codec.decode_model(result.model)[0].data
        bound = header.delta / 2 + np.finfo(np.float32).eps * scale * 8
        assert np.all(np.abs(decoded.astype(np.float64) - w) <= bound)

    def test_all_zero_layer_roundtrip(self):
        layer = ingest.CodableLayer("z", np.zeros((6, 7), np.float32),
                                    (6, 7), None)
        result = codec.encode_model([layer], codec.EncodeParams())
        (header, payload) = result.model[0]
        assert header.delta > 0
        decoded = codec.decode_model(result.model)
        assert not decoded[0].data.any()
        assert result.reports[0].sparsity == 0.0

    def test_sweep_selects_minimum(self):
        layers = ingest.select_codable(make_synthetic_model(seed=1))
        params = codec.EncodeParams(lambda_=0.0, threads=4)
        res = codec.sweep(layers, params, list(range(0, 20)))
        assert len(res.rows) == 20
        best_by_table = min(res.rows, key=lambda r: (r.compressed_bytes, r.s))
        assert res.best_s == best_by_table.s
        assert len(res.best_bytes) == best_by_table.compressed_bytes
        sizes = {r.compressed_bytes for r in res.rows}
        assert len(sizes) > 1  # size actually varies with S

    def test_sweep_rejects_empty_range(self):
        with pytest.raises(ValueError):
            codec.sweep([], codec.EncodeParams(), [])


class TestCliEncodeDecode:
    def test_roundtrip_via_cli(self, tmp_path, synthetic_model_path, capsys):
        out_bits = tmp_path / "m.dcnb"
        out_back = tmp_path / "m.dcnw"
        assert run_cli("encode", synthetic_model_path, "--output",
                       str(out_bits), "--s", "0", "--lambda", "0") == 0
        report = capsys.readouterr().out
        assert "layer name=fc1.w" in report
        assert "total layers=3" in report
        # S=0 with a sigma map: delta equals the layer's sigma_min.
        model = bitstream.parse(out_bits.read_bytes())
        for header, _ in model:
            assert header.delta == pytest.approx(0.05, rel=1e-6)
        assert run_cli("decode", str(out_bits), "--output", str(out_back)) == 0
        entries = ingest.load(out_back)
        assert [e.name for e in entries] == ["fc1.w", "fc2.w", "fc3.w"]

    def test_missing_input_exits_2(self, tmp_path):
        assert run_cli("encode", str(tmp_path / "nope.dcnw"), "--output",
                       str(tmp_path / "x.dcnb")) == 2

    def test_corrupt_bitstream_exits_2(self, tmp_path):
        bad = tmp_path / "bad.dcnb"
        bad.write_bytes(b"garbage!")
        assert run_cli("decode", str(bad), "--output",
                       str(tmp_path / "o.dcnw")) == 2
        assert run_cli("inspect", str(bad)) == 2

    def test_decode_to_unwritable_path_exits_2(self, tmp_path,
                                               synthetic_model_path):
        out_bits = tmp_path / "m.dcnb"
        assert run_cli("encode", synthetic_model_path, "--output",
                       str(out_bits)) == 0
        # A directory is unwritable as a file target regardless of uid
        # (chmod-based read-only dirs do not stop root, and tests run as
        # root in some environments).
        blocked = tmp_path / "blocked"
        blocked.mkdir()
        assert run_cli("decode", str(out_bits), "--output", str(blocked)) == 2
        missing_parent = tmp_path / "no" / "such" / "dir" / "out.dcnw"
        assert run_cli("decode", str(out_bits), "--output",
                       str(missing_parent)) == 2

    def test_sigma_dims_mismatch_exits_2_and_names_layer(self, tmp_path,
                                                         capsys):
        entries = [
            dcnb.TensorEntry("blk3.w", dcnb.Role.WEIGHT,
                             np.ones((4, 4), np.float32)),
            dcnb.TensorEntry("blk3.w", dcnb.Role.SIGMA,
                             np.full((4, 5), 0.1, np.float32)),
        ]
        path = tmp_path / "bad.dcnw"
        dcnb.save(path, entries)
        assert run_cli("encode", str(path), "--output",
                       str(tmp_path / "x.dcnb")) == 2
        assert "blk3.w" in capsys.readouterr().err

    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("encode")  # missing input and --output
        assert exc.value.code == 2


class TestCliSweepInspect:
    def test_small_sweep(self, tmp_path, synthetic_model_path, capsys):
        outdir = tmp_path / "sweepout"
        assert run_cli("sweep", synthetic_model_path, "--output", str(outdir),
                       "--s-range", "0:6", "--threads", "4") == 0
        out = capsys.readouterr().out
        assert out.count("sweep s=") == 7
        assert "best s=" in out
        table = (outdir / "sweep.txt").read_text().strip().splitlines()
        assert len(table) == 8
        best = bitstream.parse((outdir / "best.dcnb").read_bytes())
        assert len(best) == 3

    def test_empty_s_range_is_usage_error(self, tmp_path, synthetic_model_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("sweep", synthetic_model_path, "--output",
                    str(tmp_path / "o"), "--s-range", "9:3")
        assert exc.value.code == 2

    def test_malformed_s_range(self, tmp_path, synthetic_model_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("sweep", synthetic_model_path, "--output",
                    str(tmp_path / "o"), "--s-range", "abc")
        assert exc.value.code == 2

    def test_inspect_dumps_headers(self, tmp_path, synthetic_model_path,
                                   capsys):
        out_bits = tmp_path / "m.dcnb"
        run_cli("encode", synthetic_model_path, "--output", str(out_bits),
                "--s", "33", "--n-flags", "5")
        capsys.readouterr()
        assert run_cli("inspect", str(out_bits)) == 0
        out = capsys.readouterr().out
        assert "model layers=3" in out
        assert "s=33" in out and "n_flags=5" in out
        assert "payload_len=" in out

    def test_inspect_empty_model(self, tmp_path, capsys):
        empty = tmp_path / "empty.dcnb"
        empty.write_bytes(bitstream.serialize([]))
        assert run_cli("inspect", str(empty)) == 0
        assert "layers=0" in capsys.readouterr().out


class TestBundledToyModel:
    TOY = Path(__file__).resolve().parent.parent / "data" / "toy.dcnw"

    def test_regenerator_is_deterministic(self, tmp_path):
        script = self.TOY.parent.parent / "tools" / "make_toy_model.py"
        spec = importlib.util.spec_from_file_location("make_toy_model", script)
        gen = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(gen)
        fresh = tmp_path / "toy.dcnw"
        dcnb.save(fresh, gen.build_entries())
        assert fresh.read_bytes() == self.TOY.read_bytes()

    def test_encode_at_s_zero_shows_sigma_min_delta(self, tmp_path, capsys):
        out = tmp_path / "toy.dcnb"
        assert run_cli("encode", str(self.TOY), "--output", str(out),
                       "--lambda", "0", "--s", "0") == 0
        model = bitstream.parse(out.read_bytes())
        deltas = {h.name: h.delta for h, _ in model}
        assert deltas["conv1.weight"] == pytest.approx(0.02, rel=1e-6)
        assert deltas["fc1.weight"] == pytest.approx(0.03, rel=1e-6)
        back = tmp_path / "toy_back.dcnw"
        assert run_cli("decode", str(out), "--output", str(back)) == 0
        entries = ingest.load(back)
        orig = {e.name: e for e in ingest.load(self.TOY)
                if e.role == dcnb.Role.WEIGHT}
        for e in entries:
            # lambda=0 nearest-neighbor reconstruction error bound
            delta = deltas[e.name]
            assert np.max(np.abs(e.data - orig[e.name].data)) <= delta / 2 + 1e-7


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dcnb.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "encode" in proc.stdout and "sweep" in proc.stdout


def test_fresh_process_runs_are_byte_identical(tmp_path):
    # Stronger than same-process determinism: no interpreter-level state
    # (hash seeds, allocation order) may leak into the bitstream.
    toy = TestBundledToyModel.TOY
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}.dcnb"
        proc = subprocess.run(
            [sys.executable, "-m", "dcnb.cli", "encode", str(toy),
             "--output", str(out), "--threads", str(1 + 7 * i)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
