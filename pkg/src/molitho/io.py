"""Readers and writers for curves, tables, images and JSON reports.

CSV files start with a ``# config_hash=<hex>`` comment line when a hash is
given; PGM images carry it as a header comment; JSON documents as a key.
"""

import csv
import json
import re

import numpy as np

from .analysis import BinaryMap, Profile
from .beamline import VelocityDistribution
from .deposition import HeightMap, MoleculeList
from .errors import DomainError
from .quantum import FringeSpectrum, PatternCurve


def _fmt(v):
    return repr(float(v))


def write_csv(path, header, columns, config_hash=None):
    rows = zip(*[np.asarray(c).ravel() for c in columns])
    with open(path, "w", newline="") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path, header):
    """Columns of a CSV written by :func:`write_csv`, as float arrays."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows or rows[0] != list(header):
        raise DomainError(f"{path}: expected header {','.join(header)}")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(header))
    return [data[:, i] for i in range(len(header))]


def write_pattern(path, p, config_hash=None):
    write_csv(path, ["x_nm", "s"], [p.x, p.s], config_hash)


def read_pattern(path):
    return PatternCurve(*read_csv(path, ["x_nm", "s"]))


def write_spectrum(path, fs, config_hash=None):
    m = np.arange(-fs.m_max, fs.m_max + 1)
    write_csv(path, ["m", "re", "im"], [m, fs.coeffs.real, fs.coeffs.imag], config_hash)


def read_spectrum(path, period):
    m, re, im = read_csv(path, ["m", "re", "im"])
    order = np.argsort(m)
    return FringeSpectrum(period, (re + 1j * im)[order])


def write_velocity(path, dist, config_hash=None):
    write_csv(path, ["v_mps", "weight"], [dist.v, dist.w], config_hash)


def read_velocity(path):
    return VelocityDistribution(*read_csv(path, ["v_mps", "weight"]))


def write_molecules(path, ml, config_hash=None, field=True):
    with open(path, "w", newline="") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        if field:
            fh.write(f"# field_nm={_fmt(ml.field_w)},{_fmt(ml.field_h)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_nm", "y_nm"])
        for x, y in ml.positions:
            w.writerow([_fmt(x), _fmt(y)])


def read_molecules(path):
    field = None
    with open(path) as fh:
        for ln in fh:
            m = re.match(r"#\s*field_nm=([^,]+),(\S+)", ln)
            if m:
                field = (float(m.group(1)), float(m.group(2)))
    x, y = read_csv(path, ["x_nm", "y_nm"])
    if field is None:
        raise DomainError(f"{path}: missing '# field_nm=w,h' line")
    return MoleculeList(np.column_stack((x, y)), *field)


def write_profile(path, p, config_hash=None):
    write_csv(path, ["x_nm", "counts"], [p.x, p.counts], config_hash)


def read_profile(path):
    x, c = read_csv(path, ["x_nm", "counts"])
    return Profile(x, c, np.maximum(c, 1.0))


# --- PGM -----------------------------------------------------------------

def quantize_heightmap(hm):
    """16-bit samples and the ``(z_per_count, z_offset)`` that map them back to nm."""
    lo, hi = float(hm.z.min()), float(hm.z.max())
    scale = (hi - lo) / 65535.0 if hi > lo else 1.0
    counts = np.rint((hm.z - lo) / scale).astype(np.uint16)
    return counts, scale, lo


def dequantize(counts, scale, offset, px_size):
    return HeightMap(counts.astype(float) * scale + offset, px_size)


def write_pgm(path, data, maxval, comments=()):
    data = np.asarray(data)
    ny, nx = data.shape
    head = "P5\n" + "".join(f"# {c}\n" for c in comments) + f"{nx} {ny}\n{maxval}\n"
    body = data.astype(">u2" if maxval > 255 else "u1").tobytes()
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii") + body)


def read_pgm(path):
    """``(array, maxval, comments)`` of a binary PGM."""
    with open(path, "rb") as fh:
        raw = fh.read()
    pos = 0
    tokens, comments = [], []
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            end = raw.index(b"\n", pos)
            comments.append(raw[pos + 1:end].decode("ascii").strip())
            pos = end + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    pos += 1                      # single whitespace after maxval
    if tokens[0] != "P5":
        raise DomainError(f"{path}: not a binary PGM")
    nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(raw, dtype=dtype, count=nx * ny, offset=pos).reshape(ny, nx)
    return data.astype(np.uint16 if maxval > 255 else np.uint8), maxval, comments


def _comment_value(comments, key):
    for c in comments:
        if c.startswith(key + "="):
            return c.split("=", 1)[1]
    return None


def write_heightmap(path, hm, config_hash=None):
    counts, scale, offset = quantize_heightmap(hm)
    comments = [f"px_nm={_fmt(hm.px_size)}", f"z_per_count_nm={_fmt(scale)}",
                f"z_offset_nm={_fmt(offset)}"]
    if config_hash:
        comments.append(f"config_hash={config_hash}")
    write_pgm(path, counts, 65535, comments)


def read_heightmap(path):
    data, maxval, comments = read_pgm(path)
    px = _comment_value(comments, "px_nm")
    scale = _comment_value(comments, "z_per_count_nm")
    if px is None or scale is None or maxval != 65535:
        raise DomainError(f"{path}: not a height map (need 16-bit P5 with px_nm and "
                          "z_per_count_nm comments)")
    offset = float(_comment_value(comments, "z_offset_nm") or 0.0)
    return dequantize(data, float(scale), offset, float(px))


def write_binarymap(path, bm, config_hash=None):
    comments = [f"px_nm={_fmt(bm.px_size)}"]
    if config_hash:
        comments.append(f"config_hash={config_hash}")
    write_pgm(path, bm.bits * 255, 255, comments)


def read_binarymap(path):
    data, _, comments = read_pgm(path)
    return BinaryMap((data > 0).astype(np.uint8), float(_comment_value(comments, "px_nm")))


# --- JSON ----------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def fit_to_dict(fit, n_molecules=None, period_est=None, theta=None, n_sigma=None):
    """FringeFit as the JSON block used in reports."""
    return {
        "A": fit.A, "B": fit.B, "phi0_rad": fit.phi0, "d_nm": fit.d_fit,
        "V": fit.V, "sigma_V": fit.sigma_V, "chi2": fit.chi2, "n_iter": fit.n_iter,
        "n_molecules": n_molecules,
        "period_est_nm": period_est,
        "theta_deg": None if theta is None else float(np.degrees(theta)),
        "n_sigma_vs_classical": n_sigma,
    }
