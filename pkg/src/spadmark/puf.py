"""Binary PUF artifacts derived from dark count maps.

The relative maps mark, per pixel, whether its dark count beats its right
(horizontal) or lower (vertical) neighbor, with circular wrap at the array
edge. Because the comparison only uses ordering, any monotone rescaling of
the counts -- in particular the common exponential growth with temperature --
leaves the maps unchanged; that is the whole trick behind using them as a
stable device secret.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .imager import AcquisitionConfig, ChipModel, DarkCountMap, acquire_dcm

HORIZONTAL = "horizontal"
VERTICAL = "vertical"


@dataclass
class RelativeDCM:
    """Binary neighbor-comparison map for one direction."""

    bits: np.ndarray            # uint8 {0,1}, array_dim x array_dim
    direction: str              # HORIZONTAL or VERTICAL
    chip_id: str


@dataclass
class Fingerprint:
    """XOR of the horizontal and vertical relative maps.

    The XOR masks the raw comparison bits, so the fingerprint can identify a
    device without exposing the maps that answer challenges.
    """

    bits: np.ndarray            # uint8 {0,1}
    chip_id: str


@dataclass
class EnrollmentRecord:
    """Golden PUF data stored with the verifier for one chip."""

    chip_id: str
    rdcm_h: RelativeDCM
    rdcm_v: RelativeDCM
    fingerprint: Fingerprint
    enrollment_cfg: AcquisitionConfig


@dataclass
class ResponsePair:
    """Per-challenge-cell lookups into both relative maps."""

    r_h: np.ndarray             # uint8 {0,1}, grid_dim x grid_dim
    r_v: np.ndarray


def rdcm(dcm: DarkCountMap, direction: str) -> RelativeDCM:
    """Compare each pixel against its next neighbor in the given direction.

    Horizontal: bit(r,c) = counts(r,c) > counts(r, (c+1) mod P).
    Vertical:   bit(r,c) = counts(r,c) > counts((r+1) mod P, c).
    Ties score 0. Circular wrap keeps the map the full P x P.
    """
    counts = np.asarray(dcm.counts)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise ValueError(f"dark count map must be square, got shape {counts.shape}")
    if counts.shape[0] < 2:
        raise ValueError("dark count map side must be >= 2")
    if direction == HORIZONTAL:
        neighbor = np.roll(counts, -1, axis=1)
    elif direction == VERTICAL:
        neighbor = np.roll(counts, -1, axis=0)
    else:
        raise ValueError(f"direction must be {HORIZONTAL!r} or {VERTICAL!r}, got {direction!r}")
    return RelativeDCM(bits=(counts > neighbor).astype(np.uint8),
                       direction=direction, chip_id=dcm.chip_id)


def fingerprint(h: RelativeDCM, v: RelativeDCM) -> Fingerprint:
    """Elementwise XOR of the two relative maps."""
    if h.chip_id != v.chip_id:
        raise ValueError(f"chip_id mismatch: {h.chip_id!r} vs {v.chip_id!r}")
    if h.bits.shape != v.bits.shape:
        raise ValueError(f"shape mismatch: {h.bits.shape} vs {v.bits.shape}")
    return Fingerprint(bits=np.bitwise_xor(h.bits, v.bits), chip_id=h.chip_id)


def golden_acquisition(chip: ChipModel, rng_seed: int = 0) -> AcquisitionConfig:
    """Default enrollment acquisition: 100 frames of 0.1 s at the reference
    temperature, enough integration to suppress shot noise on most pixels."""
    return AcquisitionConfig(temperature=chip.params.ref_temp, exposure=0.1,
                             n_frames=100, rng_seed=rng_seed)


def enroll(chip: ChipModel, cfg: AcquisitionConfig | None = None) -> EnrollmentRecord:
    """Acquire a multi-frame dark map and derive the golden PUF record."""
    cfg = cfg or golden_acquisition(chip)
    dcm = acquire_dcm(chip, cfg)
    h = rdcm(dcm, HORIZONTAL)
    v = rdcm(dcm, VERTICAL)
    return EnrollmentRecord(chip_id=chip.chip_id, rdcm_h=h, rdcm_v=v,
                            fingerprint=fingerprint(h, v), enrollment_cfg=cfg)


def puf_query(record: EnrollmentRecord, challenge, response_map: str = "both") -> ResponsePair:
    """Read both relative maps at the challenge's (row, col) addresses.

    Addresses index the top-left window of the maps; any address at or past
    the array edge is rejected. ``response_map`` selects which map feeds the
    two response planes: "both" (default) uses horizontal and vertical,
    "h"/"v" duplicate a single map into both planes so the serialized
    layout stays fixed.
    """
    addrs = np.asarray(challenge.addrs)
    dim = record.rdcm_h.bits.shape[0]
    if addrs.min() < 0 or addrs.max() >= dim:
        raise ValueError(
            f"challenge address outside the {dim}x{dim} map window "
            f"(range {int(addrs.min())}..{int(addrs.max())})")
    rows, cols = addrs[..., 0], addrs[..., 1]
    lookup = {
        "both": (record.rdcm_h, record.rdcm_v),
        "h": (record.rdcm_h, record.rdcm_h),
        "v": (record.rdcm_v, record.rdcm_v),
    }
    if response_map not in lookup:
        raise ValueError(f"response_map must be 'h', 'v' or 'both', got {response_map!r}")
    first, second = lookup[response_map]
    return ResponsePair(r_h=first.bits[rows, cols].astype(np.uint8),
                        r_v=second.bits[rows, cols].astype(np.uint8))


# --- bit packing ------------------------------------------------------------
# Row-major bits, MSB-first within each hex digit. Lengths that are not a
# multiple of 4 are zero-padded on the right and trimmed on parse.

def bits_to_hex(bits: np.ndarray) -> str:
    flat = np.asarray(bits, dtype=np.uint8).ravel()
    return np.packbits(flat).tobytes().hex()


def hex_to_bits(hexstr: str, n_bits: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(hexstr), dtype=np.uint8)
    bits = np.unpackbits(raw)
    if bits.size < n_bits:
        raise ValueError(f"hex string holds {bits.size} bits, expected {n_bits}")
    return bits[:n_bits]


# --- enrollment database ----------------------------------------------------

def enrollment_path(db_dir: str | Path, chip_id: str) -> Path:
    return Path(db_dir) / f"{chip_id}.enroll.json"


def save_enrollment(record: EnrollmentRecord, db_dir: str | Path) -> Path:
    path = enrollment_path(db_dir, record.chip_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = record.rdcm_h.bits.shape[0]
    payload = {
        "chip_id": record.chip_id,
        "array_dim": dim,
        "acquisition": asdict(record.enrollment_cfg),
        "rdcm_h": bits_to_hex(record.rdcm_h.bits),
        "rdcm_v": bits_to_hex(record.rdcm_v.bits),
        "fingerprint": bits_to_hex(record.fingerprint.bits),
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def load_enrollment(path: str | Path) -> EnrollmentRecord:
    payload = json.loads(Path(path).read_text())
    dim = int(payload["array_dim"])
    chip_id = payload["chip_id"]
    shape = (dim, dim)
    h = RelativeDCM(bits=hex_to_bits(payload["rdcm_h"], dim * dim).reshape(shape),
                    direction=HORIZONTAL, chip_id=chip_id)
    v = RelativeDCM(bits=hex_to_bits(payload["rdcm_v"], dim * dim).reshape(shape),
                    direction=VERTICAL, chip_id=chip_id)
    f = Fingerprint(bits=hex_to_bits(payload["fingerprint"], dim * dim).reshape(shape),
                    chip_id=chip_id)
    cfg = AcquisitionConfig(**payload["acquisition"])
    return EnrollmentRecord(chip_id=chip_id, rdcm_h=h, rdcm_v=v,
                            fingerprint=f, enrollment_cfg=cfg)


def load_enrollment_db(db_dir: str | Path) -> list[EnrollmentRecord]:
    """All enrollment records in a directory, sorted by chip id."""
    records = [load_enrollment(p) for p in sorted(Path(db_dir).glob("*.enroll.json"))]
    return sorted(records, key=lambda r: r.chip_id)
