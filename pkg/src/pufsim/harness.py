"""End-to-end experiment orchestration: generate, readout, enroll, mask,
metrics, sweep, randomness battery, and the run manifest.

Every stage writes its artifacts before the next stage starts, so a late
failure never corrupts earlier outputs; the manifest then carries an
"incomplete" status plus the failing stage. All stage seeds derive from
the config's master seed, which makes outputs independent of the thread
count; machine-readable files keep full precision while the human report
rounds to 6 significant digits.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig, SessionConfig, config_digest, to_dict
from .entropy import EnvironmentCondition
from .errors import InvalidArgumentError, StageError
from .metrics import (
    compute_report,
    inter_hd,
    mean_intra_hd,
    robustness_sweep,
)
from .population import (
    DevicePopulation,
    PlacementConfig,
    PopulationSpec,
    generate_population,
    iter_device_mismatch,
)
from .randomness import (
    TEST_NAMES,
    aggregate_suite,
    rank_test,
    results_csv_rows,
    run_suite,
)
from .signature import (
    GoldenSignature,
    ReadoutSession,
    SignatureSet,
    apply_mask,
    eliminate_biased_positions,
    enroll_golden,
    read_signatures,
)

OUTPUT_DIR_ENV = "PUFSIM_OUT_DIR"

_POP_MAGIC = b"PUFP"
_GOLD_MAGIC = b"PUFG"


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "pufsim-out")


def _sig6(value):
    """Round to 6 significant digits for the human-readable report."""
    if value is None or not isinstance(value, (int, float)):
        return value
    if value == 0 or not math.isfinite(value):
        return value
    return float(f"{value:.6g}")


# ---------------------------------------------------------------------------
# artifact persistence

def save_population(path, population: DevicePopulation) -> None:
    spec = population.spec
    placement = spec.placement
    meta = {
        "num_devices": spec.num_devices,
        "cells_per_device": spec.cells_per_device,
        "sigma_mismatch": spec.sigma_mismatch,
        "weights": list(spec.weights),
        "master_seed": spec.master_seed,
        "bias_map": (
            [[r, c, v] for (r, c), v in spec.bias_map.items()]
            if spec.bias_map
            else None
        ),
        "placement": {
            "kind": placement.kind,
            "grid_width": placement.grid_width,
            "grid_height": placement.grid_height,
            "region_of": list(placement.region_of),
            "adjacency": [list(e) for e in placement.adjacency],
        },
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_POP_MAGIC)
        fh.write(struct.pack("<HI", 1, len(blob)))
        fh.write(blob)
        np.save(fh, population.global_draw)
        np.save(fh, population.regional)
        np.save(fh, population.local)
        np.save(fh, population.bias_offsets)


def load_population(path) -> DevicePopulation:
    with open(path, "rb") as fh:
        if fh.read(4) != _POP_MAGIC:
            raise InvalidArgumentError(f"not a population snapshot: {path}")
        version, size = struct.unpack("<HI", fh.read(6))
        if version != 1:
            raise InvalidArgumentError(f"unsupported population version {version}")
        meta = json.loads(fh.read(size))
        global_draw = np.load(fh)
        regional = np.load(fh)
        local = np.load(fh)
        bias_offsets = np.load(fh)
    placement = PlacementConfig(
        kind=meta["placement"]["kind"],
        grid_width=meta["placement"]["grid_width"],
        grid_height=meta["placement"]["grid_height"],
        region_of=tuple(meta["placement"]["region_of"]),
        adjacency=tuple(tuple(e) for e in meta["placement"]["adjacency"]),
    )
    bias_map = meta.get("bias_map")
    spec = PopulationSpec(
        num_devices=meta["num_devices"],
        cells_per_device=meta["cells_per_device"],
        sigma_mismatch=meta["sigma_mismatch"],
        weights=tuple(meta["weights"]),
        placement=placement,
        master_seed=meta["master_seed"],
        bias_map={(r, c): v for r, c, v in bias_map} if bias_map else None,
    )
    return DevicePopulation(spec, global_draw, regional, local, bias_offsets)


def save_golden(path, golden: GoldenSignature) -> None:
    with open(path, "wb") as fh:
        fh.write(_GOLD_MAGIC)
        fh.write(struct.pack("<H", 1))
        np.save(fh, golden.bits)
        np.save(fh, golden.stability)


def load_golden(path) -> GoldenSignature:
    with open(path, "rb") as fh:
        if fh.read(4) != _GOLD_MAGIC:
            raise InvalidArgumentError(f"not a golden snapshot: {path}")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != 1:
            raise InvalidArgumentError(f"unsupported golden version {version}")
        bits = np.load(fh)
        stability = np.load(fh)
    return GoldenSignature(bits=bits, stability=stability)


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# manifest

@dataclass
class RunManifest:
    config_digest: str
    tool_version: str
    master_seed: int
    status: str = "incomplete"
    error: Optional[dict] = None
    artifacts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def add(self, name: str, path: str, root: str) -> None:
        self.artifacts.append(
            {
                "name": name,
                "path": os.path.relpath(path, root),
                "sha256": _sha256(path),
                "bytes": os.path.getsize(path),
            }
        )

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "tool_version": self.tool_version,
            "master_seed": self.master_seed,
            "status": self.status,
            "error": self.error,
            "artifacts": self.artifacts,
            "timings": self.timings,
        }


def load_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# pipeline stages

def _session_readout(
    config: ExperimentConfig,
    population: DevicePopulation,
    session_cfg: SessionConfig,
    index: int,
    threads: int,
) -> SignatureSet:
    session = ReadoutSession(
        env=session_cfg.env(),
        trials=session_cfg.trials,
        session_seed=config.session_seed(index),
        calibration=config.build_calibration(),
        target_ber=session_cfg.target_ber,
    )
    return read_signatures(population, session, threads=threads)


def _metrics_payload(config, sessions_sigs, golden, mask):
    enroll_name = config.enroll_session
    payload: dict = {"sessions": {}}
    for name, sigs in sessions_sigs.items():
        entry: dict = {}
        rows = golden.bits if name == enroll_name else sigs.bits[:, 0, :]
        report = compute_report(
            sigs, golden, bucket_width=config.histogram_bucket_percent
        )
        entry["inter_hd_percent"] = inter_hd(rows)
        entry["intra_hd_percent"] = report.intra_hd_percent
        entry["ones_fraction"] = report.ones_fraction
        entry["hd_histogram"] = {f"{k:g}": v for k, v in report.hd_histogram.items()}
        if mask is not None:
            masked_sigs = apply_mask(sigs, mask)
            entry["masked"] = {
                "inter_hd_percent": inter_hd(rows, mask),
                "intra_hd_percent": mean_intra_hd(masked_sigs, golden),
                "effective_length": int(mask.sum()),
            }
        payload["sessions"][name] = entry
    return payload


def _human_report(payload: dict) -> str:
    lines = ["signature quality report", "========================"]
    for name, entry in sorted(payload["sessions"].items()):
        lines.append(f"session {name}:")
        lines.append(f"  inter-HD %       : {_sig6(entry['inter_hd_percent'])}")
        lines.append(f"  intra-HD %       : {_sig6(entry['intra_hd_percent'])}")
        lines.append(f"  ones fraction    : {_sig6(entry['ones_fraction'])}")
        if "masked" in entry:
            m = entry["masked"]
            lines.append(
                f"  masked inter-HD %: {_sig6(m['inter_hd_percent'])}"
                f"  intra-HD %: {_sig6(m['intra_hd_percent'])}"
                f"  kept {m['effective_length']} positions"
            )
    return "\n".join(lines) + "\n"


def _randomness_payload(config: ExperimentConfig, golden: GoldenSignature, mask):
    bits = golden.bits
    if mask is not None:
        bits = bits[:, mask.astype(bool)]
    if config.randomness_mode == "concatenated":
        sequences = [bits.reshape(-1)]
    else:
        sequences = [bits[d] for d in range(bits.shape[0])]
    per_seq = [
        run_suite(s, alpha=config.alpha, tests=config.nist_tests) for s in sequences
    ]
    payload: dict = {
        "alpha": config.alpha,
        "mode": config.randomness_mode,
        "num_sequences": len(sequences),
        "per_sequence": [
            {name: {"p_values": list(r.p_values), "passed": r.passed}
             for name, r in results.items()}
            for results in per_seq
        ],
    }
    if len(per_seq) >= 2:
        agg = aggregate_suite(per_seq, alpha=config.alpha)
        payload["aggregate"] = {
            name: {
                "passing": f"{row['passing']}/{agg.num_sequences}",
                "uniformity_p": row["uniformity_p"],
            }
            for name, row in agg.rows.items()
        }
    seq_len = sequences[0].size if sequences else 0
    if (
        config.randomness_mode == "per-signature"
        and config.rank_concatenation
        and seq_len < 38912
        and bits.size >= 38912
    ):
        # single rank verdict over the concatenated stream; flagged as an
        # interpretation since no per-signature rank is possible at this n
        r = rank_test(bits.reshape(-1), alpha=config.alpha)
        payload["rank_concatenated"] = {
            "p_value": r.p_value,
            "passed": r.passed,
        }
    return payload, per_seq


def sweep_payload(config: ExperimentConfig, population, threads: int):
    """Robustness sweep over the configured temperature and voltage axes;
    None when the config names no sweep points."""
    calibration = config.build_calibration()
    envs = [
        EnvironmentCondition(t, config.reference_voltage)
        for t in config.sweep_temperatures
    ] + [
        EnvironmentCondition(config.reference_temperature, v)
        for v in config.sweep_voltages
    ]
    if not envs:
        return None
    results = robustness_sweep(
        population,
        calibration,
        envs,
        trials=config.sweep_trials,
        base_seed=config.session_seed(10_000),
        threads=threads,
    )
    return [
        {
            "temperature_celsius": env.temperature_celsius,
            "supply_voltage_volts": env.supply_voltage_volts,
            "mean_intra_hd_percent": value,
        }
        for env, value in results
    ]


def run_experiment(
    config: ExperimentConfig,
    out_dir: Optional[str] = None,
    threads: Optional[int] = None,
    seed: Optional[int] = None,
) -> tuple:
    """Execute the full pipeline; returns (manifest, manifest_path).

    Raises StageError after persisting an incomplete manifest when any
    stage fails; earlier artifacts are left intact.
    """
    if seed is not None:
        config = replace(config, master_seed=int(seed)).validate()
    threads = threads if threads is not None else config.threads
    root = out_dir or config.output_dir or default_output_dir()
    os.makedirs(root, exist_ok=True)
    manifest = RunManifest(
        config_digest=config_digest(config),
        tool_version=__version__,
        master_seed=config.master_seed,
    )
    manifest_path = os.path.join(root, "manifest.json")

    def finish(status, error=None):
        manifest.status = status
        manifest.error = error
        _write_json(manifest_path, manifest.to_dict())
        return manifest, manifest_path

    stage = "configure"
    try:
        path = os.path.join(root, "config.json")
        with open(path, "w") as fh:
            fh.write(json.dumps(to_dict(config), indent=2, sort_keys=True) + "\n")
        manifest.add("config", path, root)

        stage = "generate"
        t0 = time.perf_counter()
        population = generate_population(config.build_population_spec())
        path = os.path.join(root, "population.bin")
        save_population(path, population)
        manifest.add("population", path, root)
        manifest.timings[stage] = time.perf_counter() - t0

        stage = "readout"
        t0 = time.perf_counter()
        sessions_sigs = {}
        for idx, session_cfg in enumerate(config.sessions):
            sigs = _session_readout(config, population, session_cfg, idx, threads)
            sessions_sigs[session_cfg.name] = sigs
            path = os.path.join(root, f"signatures_{session_cfg.name}.bin")
            sigs.to_binary(path)
            manifest.add(f"signatures_{session_cfg.name}", path, root)
            path = os.path.join(root, f"signatures_{session_cfg.name}.csv")
            sigs.to_csv(path)
            manifest.add(f"signatures_{session_cfg.name}_csv", path, root)
        manifest.timings[stage] = time.perf_counter() - t0

        stage = "enroll"
        t0 = time.perf_counter()
        enroll_sigs = sessions_sigs[config.enroll_session]
        golden = enroll_golden(enroll_sigs)
        path = os.path.join(root, "golden.bin")
        save_golden(path, golden)
        manifest.add("golden", path, root)
        manifest.timings[stage] = time.perf_counter() - t0

        mask = None
        if config.masking_enabled and config.num_devices >= 2:
            stage = "mask"
            t0 = time.perf_counter()
            mask = eliminate_biased_positions(
                enroll_sigs,
                bias_threshold=config.bias_threshold,
                stability_threshold=config.stability_threshold,
                golden=golden,
            )
            path = os.path.join(root, "mask.json")
            _write_json(
                path,
                {
                    "kept": int(mask.sum()),
                    "eliminated": int((1 - mask).sum()),
                    "mask": "".join("1" if b else "0" for b in mask),
                },
            )
            manifest.add("mask", path, root)
            manifest.timings[stage] = time.perf_counter() - t0

        stage = "metrics"
        t0 = time.perf_counter()
        payload = _metrics_payload(config, sessions_sigs, golden, mask)
        path = os.path.join(root, "metrics.json")
        _write_json(path, payload)
        manifest.add("metrics", path, root)
        path = os.path.join(root, "report.txt")
        with open(path, "w") as fh:
            fh.write(_human_report(payload))
        manifest.add("report", path, root)
        manifest.timings[stage] = time.perf_counter() - t0

        stage = "sweep"
        t0 = time.perf_counter()
        sweep = sweep_payload(config, population, threads)
        if sweep is not None:
            path = os.path.join(root, "sweep.json")
            _write_json(path, sweep)
            manifest.add("sweep", path, root)
        manifest.timings[stage] = time.perf_counter() - t0

        stage = "randomness"
        t0 = time.perf_counter()
        payload, per_seq = _randomness_payload(config, golden, mask)
        path = os.path.join(root, "nist.json")
        _write_json(path, payload)
        manifest.add("nist", path, root)
        path = os.path.join(root, "nist.csv")
        with open(path, "w") as fh:
            fh.write("sequence,test,p_value,passed\n")
            for idx, name, p, passed in results_csv_rows(per_seq):
                fh.write(f"{idx},{name},{p!r},{int(passed)}\n")
        manifest.add("nist_csv", path, root)
        manifest.timings[stage] = time.perf_counter() - t0
    except Exception as exc:  # noqa: BLE001 - every stage error becomes diagnostic
        finish("incomplete", {"stage": stage, "message": str(exc)})
        raise StageError(stage, str(exc)) from exc

    return finish("complete")


# ---------------------------------------------------------------------------
# run comparison

def _load_artifact(manifest_path: str, manifest: dict, name: str):
    root = os.path.dirname(os.path.abspath(manifest_path))
    for item in manifest["artifacts"]:
        if item["name"] == name:
            full = os.path.join(root, item["path"])
            if not os.path.exists(full):
                return None, full
            with open(full) as fh:
                return json.load(fh), full
    return None, os.path.join(root, f"<missing artifact {name}>")


def compare_runs(manifest_path_a: str, manifest_path_b: str) -> dict:
    """Per-metric deltas (b minus a) and per-test passing-count deltas."""
    man_a = load_manifest(manifest_path_a)
    man_b = load_manifest(manifest_path_b)
    missing = []
    metrics = []
    for path, man in ((manifest_path_a, man_a), (manifest_path_b, man_b)):
        payload, full = _load_artifact(path, man, "metrics")
        if payload is None:
            missing.append(full)
        metrics.append(payload)
    if missing:
        raise InvalidArgumentError(
            "cannot compare runs; missing artifacts: " + ", ".join(missing)
        )
    deltas: dict = {"sessions": {}}
    sessions_a, sessions_b = metrics[0]["sessions"], metrics[1]["sessions"]
    for name in sorted(set(sessions_a) & set(sessions_b)):
        a, b = sessions_a[name], sessions_b[name]

        def delta(key, a=a, b=b):
            if a.get(key) is None or b.get(key) is None:
                return None
            return b[key] - a[key]

        entry = {
            "inter_hd_percent_delta": delta("inter_hd_percent"),
            "intra_hd_percent_delta": delta("intra_hd_percent"),
            "ones_fraction_delta": delta("ones_fraction"),
        }
        if "masked" in a and "masked" in b:
            entry["masked_inter_hd_percent_delta"] = (
                b["masked"]["inter_hd_percent"] - a["masked"]["inter_hd_percent"]
            )
            entry["masked_intra_hd_percent_delta"] = (
                b["masked"]["intra_hd_percent"] - a["masked"]["intra_hd_percent"]
            )
        deltas["sessions"][name] = entry

    nist_a, _ = _load_artifact(manifest_path_a, man_a, "nist")
    nist_b, _ = _load_artifact(manifest_path_b, man_b, "nist")
    if nist_a and nist_b and "aggregate" in nist_a and "aggregate" in nist_b:
        rows = {}
        for test in sorted(set(nist_a["aggregate"]) & set(nist_b["aggregate"])):
            ka = int(nist_a["aggregate"][test]["passing"].split("/")[0])
            kb = int(nist_b["aggregate"][test]["passing"].split("/")[0])
            rows[test] = kb - ka
        deltas["nist_passing_delta"] = rows
    return deltas


# ---------------------------------------------------------------------------
# simulator-backed bit sequences for the battery

def unbiased_sequences(num_sequences: int, nbits: int, master_seed: int):
    """Yield noiseless power-up bit sequences of unbiased simulated
    devices (pure local mismatch), one device per sequence, without
    materializing the whole population."""
    w = int(math.isqrt(nbits))
    while nbits % w:
        w -= 1
    placement = PlacementConfig("stream", w, nbits // w, (0,) * nbits, ())
    spec = PopulationSpec(
        num_devices=num_sequences,
        cells_per_device=nbits,
        sigma_mismatch=0.25,
        weights=(0.0, 0.0, 1.0),
        placement=placement,
        master_seed=master_seed,
    )
    for mismatch in iter_device_mismatch(spec):
        yield (mismatch > 0).astype(np.uint8)
