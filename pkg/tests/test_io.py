from __future__ import annotations

import json
import struct

import numpy as np
import pytest

from slgraph import model as nn
from slgraph.io import (MAGIC, FormatError, TrajectoryFile, dataset_hash, file_sha256,
                        load_checkpoint, save_checkpoint)


def _traj(rng):
    return TrajectoryFile({"grid": {"n": 8}, "cfl": 1.5, "state_field": "U"},
                          {"U": rng.random((3, 8)), "xi": rng.random((2, 8))})


def test_round_trip_bit_exact(rng, tmp_path):
    t = _traj(rng)
    path = t.write(tmp_path / "a.traj")
    back = TrajectoryFile.read(path)
    for k in t.arrays:
        assert back.arrays[k].tobytes() == t.arrays[k].tobytes()
    assert back.header["cfl"] == 1.5 and back.n_states == 3
    assert back.to_bytes() == t.to_bytes()


def test_layout(rng):
    raw = _traj(rng).to_bytes()
    assert raw[:8] == MAGIC
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen])
    assert header["version"] == 1
    fields = {f["name"]: f for f in header["fields"]}
    assert fields["U"]["offset"] == 0 and fields["U"]["nbytes"] == 3 * 8 * 8
    assert fields["xi"]["offset"] == 3 * 8 * 8
    blob = raw[16 + hlen:]
    first = np.frombuffer(blob[:8], dtype="<f8")[0]
    assert first == TrajectoryFile.from_bytes(raw).arrays["U"][0, 0]


def test_corruption_detected(rng):
    raw = bytearray(_traj(rng).to_bytes())
    with pytest.raises(FormatError):
        TrajectoryFile.from_bytes(b"NOTATRAJ" + bytes(raw[8:]))
    bad = raw.copy()
    bad[-1] ^= 0xFF
    with pytest.raises(FormatError):
        TrajectoryFile.from_bytes(bytes(bad))
    with pytest.raises(FormatError):
        TrajectoryFile.from_bytes(bytes(raw[:20]))


def test_non_finite_rejected(rng):
    t = _traj(rng)
    t.arrays["U"][0, 0] = np.inf
    with pytest.raises(ValueError):
        t.to_bytes()


def test_checkpoint_round_trip(tmp_path):
    p = nn.init_params(nn.ModelConfig.linear_1d(upstream_coords=True, edge_offsets=True), 3)
    path = save_checkpoint(tmp_path / "model", p, {"trained_cfl_range": [6.0, 10.2]})
    q, meta = load_checkpoint(path)
    assert q.config == p.config and meta["trained_cfl_range"] == [6.0, 10.2]
    assert all(q[k].data.tobytes() == p[k].data.tobytes() for k in p.names())
    assert q.names() == p.names()
    # same parameters give byte-identical files
    again = save_checkpoint(tmp_path / "model2", q, meta)
    assert path.read_bytes().replace(b"model2", b"model") == again.read_bytes().replace(
        b"model2", b"model")
    assert (tmp_path / "model.bin").read_bytes() == (tmp_path / "model2.bin").read_bytes()


def test_checkpoint_tamper(tmp_path):
    p = nn.init_params(nn.ModelConfig.linear_1d(), 0)
    save_checkpoint(tmp_path / "m", p)
    blob = bytearray((tmp_path / "m.bin").read_bytes())
    blob[0] ^= 1
    (tmp_path / "m.bin").write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "m")
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "missing")


def test_hashes(rng, tmp_path):
    a = _traj(rng).write(tmp_path / "a.traj")
    b = _traj(rng).write(tmp_path / "b.traj")
    assert dataset_hash([a, b]) == dataset_hash([b, a])
    assert len(file_sha256(a)) == 64
