"""PPDB binary format: JSON header + fixed-stride float64 records, CRC-64 per section."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from numba import njit

from .domain import ParameterSpace, StatSchema
from .grid import FORMAT_VERSION, PrepaidDatabase

MAGIC = b"PPDB"

_CRC64_POLY = 0x42F0E1EBA9EA3693  # ECMA-182


def _crc64_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint64)
    for byte in range(256):
        crc = byte << 56
        for _ in range(8):
            crc = ((crc << 1) ^ _CRC64_POLY if crc & (1 << 63) else crc << 1) & 0xFFFFFFFFFFFFFFFF
        table[byte] = crc
    return table


_TABLE = _crc64_table()


@njit(cache=True)
def _crc64_run(data: np.ndarray, table: np.ndarray) -> np.uint64:
    crc = np.uint64(0)
    shift8, shift56 = np.uint64(8), np.uint64(56)
    mask = np.uint64(0xFF)
    for i in range(data.shape[0]):
        idx = ((crc >> shift56) ^ np.uint64(data[i])) & mask
        crc = table[idx] ^ (crc << shift8)
    return crc


def crc64(data: bytes) -> int:
    return int(_crc64_run(np.frombuffer(data, dtype=np.uint8), _TABLE))


class DatabaseFormatError(IOError):
    pass


class BadMagicError(DatabaseFormatError):
    pass


class UnsupportedVersionError(DatabaseFormatError):
    pass


class TruncatedFileError(DatabaseFormatError):
    pass


class ChecksumError(DatabaseFormatError):
    pass


def _record_matrix(db: PrepaidDatabase) -> np.ndarray:
    """(omega, stride) float64 payload: theta | mu | cov triangles | samples."""
    parts = [db.theta, db.mu]
    for t in db.t_prepaid:
        parts.append(db.cov_tril[t])
    if db.m_samples:
        for t in db.t_prepaid:
            parts.append(db.samples[t].reshape(db.omega, -1))
    return np.ascontiguousarray(np.concatenate(parts, axis=1))


def save_database(db: PrepaidDatabase, path: str | Path) -> None:
    path = Path(path)
    header = json.dumps(db.header_dict(), sort_keys=True).encode()
    records = _record_matrix(db).astype("<f8").tobytes()
    flags = db.flags.astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", db.format_version))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<Q", crc64(header)))
        fh.write(struct.pack("<Q", len(records)))
        fh.write(records)
        fh.write(struct.pack("<Q", crc64(records)))
        fh.write(struct.pack("<Q", len(flags)))
        fh.write(flags)
        fh.write(struct.pack("<Q", crc64(flags)))
    # human-readable sidecar with the same header fields
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(db.header_dict(), indent=2, sort_keys=True) + "\n")


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFileError(f"file ends inside {what}")
    return data


def load_database(path: str | Path) -> PrepaidDatabase:
    with open(Path(path), "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise BadMagicError("not a PPDB file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"format version {version} not supported")
        (hlen,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        header_bytes = _read_exact(fh, hlen, "header")
        (hcrc,) = struct.unpack("<Q", _read_exact(fh, 8, "header checksum"))
        if crc64(header_bytes) != hcrc:
            raise ChecksumError("header checksum mismatch")
        header = json.loads(header_bytes)

        (rlen,) = struct.unpack("<Q", _read_exact(fh, 8, "record length"))
        record_bytes = _read_exact(fh, rlen, "records")
        (rcrc,) = struct.unpack("<Q", _read_exact(fh, 8, "record checksum"))
        if crc64(record_bytes) != rcrc:
            raise ChecksumError("record checksum mismatch")

        (flen,) = struct.unpack("<Q", _read_exact(fh, 8, "flag length"))
        flag_bytes = _read_exact(fh, flen, "flags")
        (fcrc,) = struct.unpack("<Q", _read_exact(fh, 8, "flag checksum"))
        if crc64(flag_bytes) != fcrc:
            raise ChecksumError("flag checksum mismatch")

    k = int(header["ndim"])
    r = int(header["nstats"])
    omega = int(header["omega"])
    t_prepaid = tuple(int(t) for t in header["t_prepaid"])
    m = int(header["m_samples"])
    ntril = r * (r + 1) // 2
    stride = k + r + len(t_prepaid) * ntril + len(t_prepaid) * m * r
    expected = omega * stride * 8
    if rlen != expected:
        raise TruncatedFileError(f"record section is {rlen} bytes, header implies {expected}")
    if flen != omega:
        raise TruncatedFileError("flag section does not match record count")

    records = np.frombuffer(record_bytes, dtype="<f8").reshape(omega, stride)
    pos = 0
    theta = records[:, pos:pos + k].copy(); pos += k
    mu = records[:, pos:pos + r].copy(); pos += r
    cov_tril = {}
    for t in t_prepaid:
        cov_tril[t] = records[:, pos:pos + ntril].copy(); pos += ntril
    samples = {}
    if m:
        for t in t_prepaid:
            samples[t] = records[:, pos:pos + m * r].reshape(omega, m, r).copy(); pos += m * r
    flags = np.frombuffer(flag_bytes, dtype=np.uint8).copy()

    space = ParameterSpace(names=tuple(header["space"]["names"]),
                           lower=np.array(header["space"]["lower"]),
                           upper=np.array(header["space"]["upper"]),
                           transforms=tuple(header["space"]["transforms"]))
    schema = StatSchema(names=tuple(header["schema"]["names"]),
                        feasible_low=np.array(header["schema"]["feasible_low"]),
                        feasible_high=np.array(header["schema"]["feasible_high"]))
    return PrepaidDatabase(model_id=header["model_id"],
                           model_config=header.get("model_config", {}),
                           space=space, schema=schema,
                           t_sim=int(header["t_sim"]), t_prepaid=t_prepaid,
                           m_samples=m, build_seed=int(header["build_seed"]),
                           halton_burn=int(header["halton_burn"]),
                           theta=theta, mu=mu, cov_tril=cov_tril,
                           samples=samples, flags=flags,
                           format_version=version)
