"""Command-line interface.

Subcommands: compress, decompress, phantom, eval, report.  Exit codes:
0 success, 2 usage/schema error, 3 I/O or malformed file, 4 codec error,
5 no tissue found in ROI mode.  A TOML config file can supply defaults for
any long option (one table per subcommand); explicit flags win.
"""
from __future__ import annotations

import argparse
import csv
import os
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from . import metrics
from .codec import DimMode, codec_spec
from .container import Mode, deserialize, serialize
from .errors import (
    AllZeroVolume,
    CodecError,
    ContainerError,
    MedroiError,
    MetadataError,
    NiftiError,
    SmallRegion,
)
from .metadata import write_metadata_file
from .metrics import CSV_HEADER, EvalRecord
from .nifti_io import read_nifti, write_nifti
from .phantom import PhantomSpec, generate_phantom
from .pipeline import compress_full, compress_roi, decompress
from .stats import bonferroni_correction, holm_correction, paired_t_test

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CODEC = 4
EXIT_NO_TISSUE = 5


class _UsageError(Exception):
    pass


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = text.replace("x", ",").split(",")
    if len(parts) != 3:
        raise _UsageError(f"dims must be WxHxD, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise _UsageError(f"dims must be integers: {text!r}") from exc


def _parse_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _modes_of(value: str) -> list[Mode]:
    table = {"full": [Mode.FULL], "roi": [Mode.ROI],
             "both": [Mode.FULL, Mode.ROI]}
    if value not in table:
        raise _UsageError(f"--modes must be full|roi|both, got {value!r}")
    return table[value]


def _dims_of(value: str) -> list[DimMode]:
    table = {"2d": [DimMode.SLICE2D], "3d": [DimMode.VOLUME3D],
             "both": [DimMode.SLICE2D, DimMode.VOLUME3D]}
    if value not in table:
        raise _UsageError(f"--dims must be 2d|3d|both, got {value!r}")
    return table[value]


def _load_config(path: str | None, section: str) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise _UsageError(f"config file {path} does not exist")
    with open(p, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise _UsageError(f"config file {path}: {exc}") from exc
    table = doc.get(section, {})
    if not isinstance(table, dict):
        raise _UsageError(f"config section [{section}] must be a table")
    return {k.replace("-", "_"): v for k, v in table.items()}


def _settings(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults <- config file <- explicit flags (flags win)."""
    supplied = {
        k: v for k, v in vars(args).items()
        if k not in ("func", "command", "defaults")
    }
    config = _load_config(supplied.pop("config", None), args.command)
    merged = dict(defaults)
    for key, value in config.items():
        if key not in defaults:
            raise _UsageError(f"config key {key!r} unknown for [{args.command}]")
        merged[key] = value
    merged.update(supplied)
    return merged


# ----------------------------------------------------------------- compress

_COMPRESS_DEFAULTS = {
    "codec": "deflate", "quality": None, "mode": "roi", "dim": "2d",
    "exact_affine": False, "meta_out": None,
}


def cmd_compress(s: dict) -> int:
    volume = read_nifti(s["input"])
    spec = codec_spec(s["codec"], s["quality"])
    dim_mode = _dims_of(s["dim"])[0] if s["dim"] != "both" else None
    if dim_mode is None:
        raise _UsageError("--dim must be 2d or 3d for compress")
    mode = _modes_of(s["mode"])
    if len(mode) != 1:
        raise _UsageError("--mode must be full or roi for compress")
    mode = mode[0]
    if s["meta_out"] and mode is not Mode.ROI:
        raise _UsageError("--meta-out requires --mode roi")

    def run():
        if mode is Mode.ROI:
            return compress_roi(volume, spec, dim_mode,
                                exact_affine=s["exact_affine"])
        return compress_full(volume, spec, dim_mode)

    def run_and_serialize():
        return serialize(run())

    blob, seconds = metrics.timed(run_and_serialize)
    out = Path(s["output"])
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(blob)
    if s["meta_out"]:
        write_metadata_file(deserialize(blob).metadata, s["meta_out"])
    cr = metrics.compression_ratio(volume.source_byte_len, len(blob))
    print(
        f"mode={mode.value} dim={dim_mode.value} codec={spec.id} "
        f"q={spec.quality} bytes={len(blob)} cr={cr:.4g} time={seconds:.3f}s"
    )
    return EXIT_OK


# --------------------------------------------------------------- decompress

def cmd_decompress(s: dict) -> int:
    blob = Path(s["input"]).read_bytes()
    archive = deserialize(blob)
    volume, seconds = metrics.timed(decompress, archive)
    out = Path(s["output"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_nifti(volume, out)
    print(
        f"mode={archive.mode.value} dims={'x'.join(map(str, volume.dims))} "
        f"codec={archive.codec_id} time={seconds:.3f}s"
    )
    return EXIT_OK


# ------------------------------------------------------------------ phantom

_PHANTOM_DEFAULTS = {
    "seed": 1, "dims": "64x64x64", "tissue_fraction": 0.5,
    "noise": 0.0, "intensity_peak": 1000.0, "count": 1,
}


def _write_phantoms(out_dir: Path, seed: int, count: int, dims, fraction,
                    noise, peak) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in range(seed, seed + count):
        spec = PhantomSpec(
            seed=s, dims=dims, tissue_fraction=fraction,
            noise_amplitude=noise, intensity_peak=peak,
        )
        path = out_dir / f"phantom_{s:05d}.nii.gz"
        write_nifti(generate_phantom(spec), path)
        paths.append(path)
    return paths


def cmd_phantom(s: dict) -> int:
    try:
        paths = _write_phantoms(
            Path(s["out_dir"]), int(s["seed"]), int(s["count"]),
            _parse_dims(s["dims"]), float(s["tissue_fraction"]),
            float(s["noise"]), float(s["intensity_peak"]),
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    for p in paths:
        print(p)
    return EXIT_OK


# --------------------------------------------------------------------- eval

_EVAL_DEFAULTS = {
    "codecs": "deflate", "qualities": "", "modes": "both", "dims": "both",
    "out": "eval.csv", "seed": 1, "repeats": 1, "jobs": 0, "generate": 0,
}


def _corpus_files(corpus: Path) -> list[Path]:
    files = sorted(
        p for p in corpus.iterdir()
        if p.name.endswith(".nii") or p.name.endswith(".nii.gz")
    )
    return files


def _volume_id(path: Path) -> str:
    name = path.name
    for suffix in (".nii.gz", ".nii"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


def _median_timed(action, repeats: int):
    results, times = None, []
    for _ in range(repeats):
        results, seconds = metrics.timed(action)
        times.append(seconds)
    return results, statistics.median(times)


def _eval_volume(path: Path, configs, modes, dim_modes, repeats: int):
    volume = read_nifti(path)
    vid = _volume_id(path)
    records = []
    for spec in configs:
        for dim_mode in dim_modes:
            if not spec.supports(dim_mode):
                print(
                    f"note: codec {spec.id} has no {dim_mode.value} support; "
                    f"skipped",
                    file=sys.stderr,
                )
                continue
            for mode in modes:
                if mode is Mode.ROI:
                    def build():
                        return serialize(compress_roi(volume, spec, dim_mode))
                else:
                    def build():
                        return serialize(compress_full(volume, spec, dim_mode))
                try:
                    blob, comp_s = _median_timed(build, repeats)
                except AllZeroVolume:
                    print(
                        f"warning: {vid}: no tissue, skipping roi mode",
                        file=sys.stderr,
                    )
                    continue

                def restore():
                    return decompress(deserialize(blob))

                restored, decomp_s = _median_timed(restore, repeats)
                region = (
                    deserialize(blob).metadata.box if mode is Mode.ROI else None
                )
                try:
                    ssim_val = metrics.ssim(volume, restored, region, dim_mode)
                except SmallRegion:
                    ssim_val = float("nan")
                records.append(EvalRecord(
                    volume_id=vid,
                    codec=spec.id,
                    quality=spec.quality,
                    mode=mode.value,
                    dim_mode=dim_mode.value,
                    cr=metrics.compression_ratio(volume.source_byte_len, len(blob)),
                    bpp=metrics.bits_per_pixel(len(blob), volume),
                    psnr_db=metrics.psnr(volume, restored, region, dim_mode),
                    ssim=ssim_val,
                    compress_s=comp_s,
                    decompress_s=decomp_s,
                ))
    return records


def cmd_eval(s: dict) -> int:
    corpus = Path(s["corpus"])
    generate = int(s["generate"])
    if generate > 0:
        _write_phantoms(corpus, int(s["seed"]), generate,
                        (64, 64, 64), 0.5, 32.0, 1000.0)
    if not corpus.is_dir():
        raise NiftiError(f"corpus directory {corpus} does not exist")
    files = _corpus_files(corpus)
    if not files:
        raise NiftiError(f"no .nii/.nii.gz volumes in {corpus}")

    qualities = [int(q) for q in _parse_list(str(s["qualities"]))] or [None]
    try:
        configs = [
            codec_spec(cid, q)
            for cid in _parse_list(s["codecs"])
            for q in qualities
        ]
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    modes = _modes_of(s["modes"])
    dim_modes = _dims_of(s["dims"])
    repeats = max(int(s["repeats"]), 1)
    jobs = int(s["jobs"]) or (os.cpu_count() or 1)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_volume = list(pool.map(
                lambda p: _eval_volume(p, configs, modes, dim_modes, repeats),
                files,
            ))
    else:
        per_volume = [
            _eval_volume(p, configs, modes, dim_modes, repeats) for p in files
        ]

    out = Path(s["out"])
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for records in per_volume:  # deterministic corpus order
            for rec in records:
                writer.writerow(rec.to_row())
    total = sum(len(r) for r in per_volume)
    print(f"wrote {total} records for {len(files)} volumes to {out}")
    return EXIT_OK


# ------------------------------------------------------------------- report

_REPORT_DEFAULTS = {"out": "report", "correction": "holm"}

_SIG_METRICS = ("cr", "compress_s", "decompress_s")


def _read_records(path: Path) -> list[EvalRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise _UsageError(f"{path} is empty") from None
        if header != CSV_HEADER:
            raise _UsageError(
                f"{path}: unexpected columns {header}; expected {CSV_HEADER}"
            )
        try:
            return [EvalRecord.from_row(row) for row in reader if row]
        except ValueError as exc:
            raise _UsageError(f"{path}: bad row: {exc}") from exc


def _config_key(rec: EvalRecord) -> tuple:
    return (rec.codec, rec.quality, rec.dim_mode)


def _config_label(key: tuple) -> str:
    codec, quality, dim_mode = key
    return f"{codec}-q{quality}-{dim_mode}"


def _mean(values) -> float:
    arr = np.asarray(list(values), dtype=np.float64)
    if np.all(np.isnan(arr)):
        return float("nan")
    return float(np.nanmean(arr))


def cmd_report(s: dict) -> int:
    records = _read_records(Path(s["csv"]))
    if not records:
        raise _UsageError("no records in CSV")
    out_dir = Path(s["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    groups: dict[tuple, list[EvalRecord]] = {}
    for rec in records:
        groups.setdefault((*_config_key(rec), rec.mode), []).append(rec)

    # (a) per-configuration mean table
    summary_rows = []
    for key in sorted(groups):
        rows = groups[key]
        summary_rows.append([
            key[0], key[1], key[2], key[3], len(rows),
            _mean(r.cr for r in rows), _mean(r.bpp for r in rows),
            _mean(r.psnr_db for r in rows), _mean(r.ssim for r in rows),
            _mean(r.compress_s for r in rows),
            _mean(r.decompress_s for r in rows),
        ])
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "codec", "quality", "dim_mode", "mode", "n", "mean_cr",
            "mean_bpp", "mean_psnr_db", "mean_ssim", "mean_compress_s",
            "mean_decompress_s",
        ])
        for row in summary_rows:
            writer.writerow(row[:5] + [f"{v:.6g}" for v in row[5:]])

    print(f"{'model':<22}{'mode':<6}{'CR':>9}{'BPP':>9}{'PSNR':>9}"
          f"{'SSIM':>8}{'Comp(s)':>10}{'Decomp(s)':>11}")
    for row in summary_rows:
        label = _config_label((row[0], row[1], row[2]))
        print(f"{label:<22}{row[3]:<6}{row[5]:>9.4g}{row[6]:>9.4g}"
              f"{row[7]:>9.4g}{row[8]:>8.4g}{row[9]:>10.4g}{row[10]:>11.4g}")

    # (b) rate-distortion scatter points
    with open(out_dir / "rd_points.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "codec", "quality", "dim_mode", "mode", "mean_psnr_db", "mean_cr",
            "marker",
        ])
        for row in summary_rows:
            marker = "filled" if row[3] == "full" else "hollow"
            writer.writerow([
                row[0], row[1], row[2], row[3],
                f"{row[7]:.6g}", f"{row[5]:.6g}", marker,
            ])
    (out_dir / "rd_scatter.gp").write_text(
        "set datafile separator comma\n"
        "set xlabel 'Mean compression ratio'\n"
        "set ylabel 'Mean PSNR (dB)'\n"
        "set key outside\n"
        "plot 'rd_points.csv' skip 1 "
        "using (strcol(4) eq 'full' ? column(6) : NaN):5 "
        "with points pt 7 title 'full', \\\n"
        "     'rd_points.csv' skip 1 "
        "using (strcol(4) eq 'roi' ? column(6) : NaN):5 "
        "with points pt 6 title 'roi'\n"
    )

    # (c) ROI vs Full paired significance per metric per configuration
    correct = {"holm": holm_correction, "bonferroni": bonferroni_correction}
    if s["correction"] not in correct:
        raise _UsageError(f"--correction must be holm|bonferroni, got {s['correction']!r}")
    configs = sorted({_config_key(r) for r in records})
    sig_rows = []
    for metric in _SIG_METRICS:
        tests = []
        for key in configs:
            by_mode = {"full": {}, "roi": {}}
            for rec in records:
                if _config_key(rec) == key:
                    by_mode[rec.mode][rec.volume_id] = getattr(rec, metric)
            shared = sorted(set(by_mode["full"]) & set(by_mode["roi"]))
            if len(shared) < 2:
                continue
            roi_vals = [by_mode["roi"][v] for v in shared]
            full_vals = [by_mode["full"][v] for v in shared]
            tests.append((key, paired_t_test(roi_vals, full_vals)))
        adjusted = correct[s["correction"]]([t.p for _, t in tests]) if tests else []
        for (key, test), p_adj in zip(tests, adjusted):
            sig_rows.append([
                metric, _config_label(key), f"{test.t:.6g}",
                f"{test.p:.6g}", f"{p_adj:.6g}",
                "yes" if p_adj < 0.05 else "no",
            ])
    with open(out_dir / "significance.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "codec", "t", "p_raw", "p_adjusted",
                         "significant@0.05"])
        writer.writerows(sig_rows)
    print(f"\nreport written to {out_dir}/ "
          f"(summary.csv, rd_points.csv, rd_scatter.gp, significance.csv)")
    return EXIT_OK


# --------------------------------------------------------------------- main

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medroi",
        description="ROI-centric compression toolkit for 3D medical volumes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sup = argparse.SUPPRESS

    p = sub.add_parser("compress", help="compress a NIfTI volume to .mroi")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--codec", default=sup)
    p.add_argument("--quality", type=int, default=sup)
    p.add_argument("--mode", choices=["full", "roi"], default=sup)
    p.add_argument("--dim", choices=["2d", "3d"], default=sup)
    p.add_argument("--exact-affine", action="store_true", default=sup)
    p.add_argument("--meta-out", default=sup,
                   help="also write the restoration record sidecar")
    p.add_argument("--config", default=sup, help="TOML defaults file")
    p.set_defaults(func=cmd_compress, defaults=_COMPRESS_DEFAULTS)

    p = sub.add_parser("decompress", help="restore a NIfTI volume from .mroi")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_decompress, defaults={})

    p = sub.add_parser("phantom", help="generate synthetic test volumes")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=sup)
    p.add_argument("--dims", default=sup)
    p.add_argument("--tissue-fraction", type=float, default=sup)
    p.add_argument("--noise", type=float, default=sup)
    p.add_argument("--intensity-peak", type=float, default=sup)
    p.add_argument("--count", type=int, default=sup)
    p.add_argument("--config", default=sup)
    p.set_defaults(func=cmd_phantom, defaults=_PHANTOM_DEFAULTS)

    p = sub.add_parser("eval", help="benchmark codecs over a corpus")
    p.add_argument("corpus")
    p.add_argument("--codecs", default=sup, help="comma-separated codec ids")
    p.add_argument("--qualities", default=sup, help="comma-separated levels")
    p.add_argument("--modes", default=sup, help="full|roi|both")
    p.add_argument("--dims", default=sup, help="2d|3d|both")
    p.add_argument("--out", default=sup, help="output CSV path")
    p.add_argument("--seed", type=int, default=sup,
                   help="first seed when generating phantoms")
    p.add_argument("--generate", type=int, default=sup,
                   help="generate N phantoms into the corpus dir first")
    p.add_argument("--repeats", type=int, default=sup,
                   help="timing repetitions (median is recorded)")
    p.add_argument("--jobs", type=int, default=sup,
                   help="parallel volumes (default: logical cores)")
    p.add_argument("--config", default=sup)
    p.set_defaults(func=cmd_eval, defaults=_EVAL_DEFAULTS)

    p = sub.add_parser("report", help="aggregate an eval CSV")
    p.add_argument("csv")
    p.add_argument("--out", default=sup, help="output directory")
    p.add_argument("--correction", default=sup, help="holm|bonferroni")
    p.add_argument("--config", default=sup)
    p.set_defaults(func=cmd_report, defaults=_REPORT_DEFAULTS)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _settings(args, args.defaults)
        return args.func(settings)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AllZeroVolume as exc:
        print(f"error: {exc}\nhint: the volume has no nonzero voxels; "
              f"use --mode full", file=sys.stderr)
        return EXIT_NO_TISSUE
    except CodecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODEC
    except (NiftiError, ContainerError, MetadataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MedroiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
