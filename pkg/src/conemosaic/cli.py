"""Command-line front end: batch conversion, evaluation, density, fitting, synthesis.

A dataset is described by a JSON manifest:

    {"records": [{"label_map": "img1.png", "centers": "img1.csv",
                  "gt_map": "img1_gt.png", "participant_id": "P1",
                  "modality": "confocal", "eccentricity_deg": -4.0,
                  "microns_per_pixel": 1.2, "width": 256, "height": 256,
                  "scaling_factor": 1000.0}, ...]}

Paths are resolved relative to the manifest file. participant_id,
modality, eccentricity_deg, and microns_per_pixel are required; the rest
depends on the command. Report numbers are written with 6 significant
digits; center CSVs keep full precision so they round-trip exactly.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .density import (
    DEFAULT_SCALING_FACTOR,
    MODALITIES,
    DensitySample,
    EccentricityGroup,
    ImageMeta,
    analyze_image,
    cone_density,
    eccentricity_group,
)
from .errors import ManifestError, MosaicError
from .fit import (
    PowerFitParams,
    eval_log_density,
    fit_fixed,
    fit_two_stage,
    predict_curve,
    rescale_log_base,
)
from .geometry import (
    BoundingBox,
    Point,
    build_voronoi,
    closest_ridge_midpoint_circle,
    closest_vertex_circle,
)
from .maskops import (
    centroids,
    load_centers_csv,
    load_label_map,
    rasterize_circles,
    rasterize_voronoi,
    save_centers_csv,
    save_label_map,
)
from .metrics import detection_metrics, match_instances, pearson, spearman
from .synth import MosaicSpec, generate_mosaic, interior_mean_cell_area_um2

log = logging.getLogger("conemosaic")

DENSITY_HEADER = "participant,modality,eccentricity_deg,n_cones,density_per_mm2,mean_area_um2"

CONVERT_METHODS = ("voronoi", "closest-vertex", "closest-ridge-midpoint")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _round6(obj):
    if isinstance(obj, float):
        return float(f"{obj:.6g}")
    if isinstance(obj, dict):
        return {k: _round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round6(v) for v in obj]
    return obj


def _write_json(obj, path: Path) -> None:
    text = json.dumps(_round6(obj), sort_keys=True, indent=2)
    path.write_text(text + "\n", encoding="utf-8", newline="\n")


def _write_lines(lines: Sequence[str], path: Path) -> None:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


# ------------------------------------------------------------- manifest

@dataclass
class Record:
    index: int
    participant_id: str
    modality: str
    eccentricity_deg: float
    microns_per_pixel: float
    scaling_factor: float
    width: Optional[int]
    height: Optional[int]
    label_map: Optional[Path]
    centers: Optional[Path]
    gt_map: Optional[Path]

    @property
    def name(self) -> str:
        return f"record {self.index}"


def load_manifest(path) -> List[Record]:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("records"), list):
        raise ManifestError(f"{path}: expected an object with a 'records' list")
    base = p.parent
    records = []
    for i, raw in enumerate(doc["records"]):
        if not isinstance(raw, dict):
            raise ManifestError(f"{path}: record {i} is not an object")
        missing = [k for k in ("participant_id", "modality", "eccentricity_deg",
                               "microns_per_pixel") if k not in raw]
        if missing:
            raise ManifestError(f"{path}: record {i} lacks {', '.join(missing)}")
        if raw["modality"] not in MODALITIES:
            raise ManifestError(
                f"{path}: record {i} modality {raw['modality']!r} not in {MODALITIES}")
        paths = {}
        for key in ("label_map", "centers", "gt_map"):
            if raw.get(key) is not None:
                fp = base / raw[key]
                if not fp.is_file():
                    raise ManifestError(f"{path}: record {i} {key} {str(fp)!r} does not exist")
                paths[key] = fp
            else:
                paths[key] = None
        records.append(Record(
            index=i,
            participant_id=str(raw["participant_id"]),
            modality=raw["modality"],
            eccentricity_deg=float(raw["eccentricity_deg"]),
            microns_per_pixel=float(raw["microns_per_pixel"]),
            scaling_factor=float(raw.get("scaling_factor", DEFAULT_SCALING_FACTOR)),
            width=int(raw["width"]) if raw.get("width") is not None else None,
            height=int(raw["height"]) if raw.get("height") is not None else None,
            label_map=paths["label_map"],
            centers=paths["centers"],
            gt_map=paths["gt_map"],
        ))
    return records


def _run_records(records: List[Record], jobs: int, work):
    """Run work(record) for each record; returns ([(record, result)], [(record, error)])."""
    def safe(rec):
        try:
            return rec, work(rec), None
        except (MosaicError, OSError, ValueError) as exc:
            return rec, None, f"{type(exc).__name__}: {exc}"

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            outcomes = list(ex.map(safe, records))
    else:
        outcomes = [safe(r) for r in records]
    done = [(rec, res) for rec, res, err in outcomes if err is None]
    failed = [(rec, err) for rec, res, err in outcomes if err is not None]
    return done, failed


def _report_failures(failed, command: str) -> int:
    for rec, err in failed:
        log.error("%s: %s failed: %s", command, rec.name, err)
    return 1 if failed else 0


def _require_manifest(ns) -> List[Record]:
    if not ns.manifest:
        raise ManifestError("--manifest is required for this command")
    return load_manifest(ns.manifest)


# -------------------------------------------------------------- convert

def cmd_convert(ns) -> int:
    records = _require_manifest(ns)
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(rec: Record):
        if rec.centers is None:
            raise ManifestError(f"{rec.name} has no centers file")
        if rec.width is None or rec.height is None:
            raise ManifestError(f"{rec.name} needs width and height for conversion")
        cs = load_centers_csv(rec.centers)
        out = out_dir / f"r{rec.index:03d}_{ns.method}.png"
        try:
            tess = build_voronoi(cs.points, BoundingBox(float(rec.width), float(rec.height)))
            if ns.method == "voronoi":
                label_map = rasterize_voronoi(tess, rec.width, rec.height)
            else:
                conv = (closest_vertex_circle if ns.method == "closest-vertex"
                        else closest_ridge_midpoint_circle)
                circles = [conv(tess, i) for i in range(len(cs.points))]
                label_map = rasterize_circles(circles, rec.width, rec.height)
            save_label_map(label_map, out)
        except Exception:
            out.unlink(missing_ok=True)  # no partial outputs
            raise
        return out

    _, failed = _run_records(records, ns.jobs, work)
    return _report_failures(failed, "convert")


# ------------------------------------------------------------- evaluate

def cmd_evaluate(ns) -> int:
    records = _require_manifest(ns)
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(rec: Record):
        if rec.label_map is None or rec.gt_map is None:
            raise ManifestError(f"{rec.name} needs label_map and gt_map")
        pred = load_label_map(rec.label_map)
        gt = load_label_map(rec.gt_map)
        rep = match_instances(pred, gt, ns.iou_threshold)
        pred_centers = load_centers_csv(rec.centers) if rec.centers else centroids(pred)
        det_p, det_r, det_f1 = detection_metrics(pred_centers, centroids(gt), ns.tolerance)
        n_pred = len(set(pred.labels.ravel().tolist()) - {0})
        n_gt = len(set(gt.labels.ravel().tolist()) - {0})
        payload = {
            "record": {
                "index": rec.index,
                "participant_id": rec.participant_id,
                "modality": rec.modality,
                "eccentricity_deg": rec.eccentricity_deg,
                "pred_map": rec.label_map.name,
                "gt_map": rec.gt_map.name,
            },
            "aggregate_iou": rep.aggregate_iou,
            "aggregate_dice": rep.aggregate_dice,
            "mean_matched_iou": rep.mean_matched_iou,
            "mean_matched_dice": rep.mean_matched_dice,
            "matched_pairs": [[p, g, i] for p, g, i in rep.matched_pairs],
            "tp": rep.tp,
            "fp": rep.fp,
            "fn": rep.fn,
            "instance_precision": rep.detection_precision,
            "instance_recall": rep.detection_recall,
            "instance_f1": rep.detection_f1,
            "center_detection": {
                "tolerance_px": ns.tolerance,
                "precision": det_p,
                "recall": det_r,
                "f1": det_f1,
            },
        }
        _write_json(payload, out_dir / f"r{rec.index:03d}.eval.json")
        group = eccentricity_group(rec.eccentricity_deg).value
        area_mm2 = (pred.width * pred.height
                    * (rec.microns_per_pixel / rec.scaling_factor) ** 2)
        return {
            "modality": rec.modality,
            "group": group,
            "metrics": (rep.aggregate_iou, rep.aggregate_dice, rep.mean_matched_iou,
                        rep.mean_matched_dice, det_p, det_r, det_f1),
            "pred_count": n_pred,
            "gt_count": n_gt,
            "pred_density": n_pred / area_mm2,
            "gt_density": n_gt / area_mm2,
        }

    done, failed = _run_records(records, ns.jobs, work)
    done.sort(key=lambda t: t[0].index)
    rows = [r for _, r in done]

    header = ("modality,group,n_pairs,mean_aggregate_iou,mean_aggregate_dice,"
              "mean_matched_iou,mean_matched_dice,mean_detection_precision,"
              "mean_detection_recall,mean_detection_f1")
    lines = [header]
    modalities = sorted({r["modality"] for r in rows})
    group_names = [EccentricityGroup.CENTRAL_FOVEA.value, EccentricityGroup.PARAFOVEA.value, "All"]
    for modality in modalities:
        for group in group_names:
            sel = [r for r in rows
                   if r["modality"] == modality and (group == "All" or r["group"] == group)]
            if sel:
                means = [sum(r["metrics"][k] for r in sel) / len(sel) for k in range(7)]
                lines.append(",".join([modality, group, str(len(sel))]
                                      + [_fmt(v) for v in means]))
            else:
                lines.append(",".join([modality, group, "0"] + [""] * 7))
    _write_lines(lines, out_dir / "evaluate_summary.csv")

    corr = {}
    for key, attr in (("cone_count", "count"), ("density", "density")):
        xs = [r[f"pred_{attr}"] for r in rows]
        ys = [r[f"gt_{attr}"] for r in rows]
        try:
            corr[key] = {"pearson_r": pearson(xs, ys),
                         "spearman_rho": spearman(xs, ys), "n": len(xs)}
        except MosaicError as exc:
            corr[key] = {"error": str(exc), "n": len(xs)}
    _write_json(corr, out_dir / "evaluate_correlations.json")
    return _report_failures(failed, "evaluate")


# -------------------------------------------------------------- density

def cmd_density(ns) -> int:
    records = _require_manifest(ns)
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(rec: Record):
        if rec.label_map is None:
            raise ManifestError(f"{rec.name} needs a label_map")
        label_map = load_label_map(rec.label_map)
        meta = ImageMeta(
            participant_id=rec.participant_id,
            modality=rec.modality,
            eccentricity_deg=rec.eccentricity_deg,
            microns_per_pixel=rec.microns_per_pixel,
            width=rec.width if rec.width is not None else label_map.width,
            height=rec.height if rec.height is not None else label_map.height,
            scaling_factor=rec.scaling_factor,
        )
        sample = analyze_image(label_map, meta)
        if rec.centers is not None:
            n_centers = len(load_centers_csv(rec.centers))
            if abs(n_centers - sample.n_cones) > 0.02 * max(sample.n_cones, 1):
                log.warning("%s: %d centers vs %d mask instances disagree by >2%%; "
                            "using the mask count", rec.name, n_centers, sample.n_cones)
        return rec.modality, sample

    done, failed = _run_records(records, ns.jobs, work)
    done.sort(key=lambda t: (t[1][1].participant_id, t[1][1].eccentricity_deg,
                             t[1][0], t[0].index))
    lines = [DENSITY_HEADER]
    for _, (modality, s) in done:
        area = _fmt(s.mean_area_um2) if s.mean_area_um2 is not None else ""
        lines.append(",".join([s.participant_id, modality, _fmt(s.eccentricity_deg),
                               str(s.n_cones), _fmt(s.density), area]))
    _write_lines(lines, out_dir / "density.csv")
    return _report_failures(failed, "density")


# ------------------------------------------------------------------ fit

def _load_density_csv(path) -> List[Tuple[str, DensitySample]]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != DENSITY_HEADER:
        raise ManifestError(f"{path}: expected header {DENSITY_HEADER!r}")
    out = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ManifestError(f"{path} line {n}: expected 6 fields, got {len(parts)}")
        try:
            sample = DensitySample(
                participant_id=parts[0],
                eccentricity_deg=float(parts[2]),
                density=float(parts[4]),
                mean_area_um2=float(parts[5]) if parts[5] != "" else None,
                n_cones=int(parts[3]),
            )
        except ValueError as exc:
            raise ManifestError(f"{path} line {n}: {exc}") from exc
        out.append((parts[1], sample))
    return out


def cmd_fit(ns) -> int:
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = _load_density_csv(ns.density_csv)
    samples = []
    for _, s in rows:
        if s.n_cones == 0 or s.density <= 0:
            log.warning("fit: dropping %s at %g deg with no cones",
                        s.participant_id, s.eccentricity_deg)
            continue
        if ns.flip_ecc_sign:
            s = DensitySample(s.participant_id, -s.eccentricity_deg, s.density,
                              s.mean_area_um2, s.n_cones)
        samples.append(s)
    report = fit_two_stage(samples) if ns.two_stage else fit_fixed(samples)
    out = rescale_log_base(report, ns.log_base) if ns.log_base is not None else report
    payload = {
        "model": {
            "kappa": out.params.kappa,
            "pi_n": out.params.pi_n,
            "pi_t": out.params.pi_t,
            "rho": out.params.rho,
        },
        "effects": {pid: {"k_s": e.k_s, "p_ns": e.p_ns, "p_ts": e.p_ts, "r_s": e.r_s}
                    for pid, e in out.effects.items()},
        "variances": {
            "sigma2": out.variances.sigma2,
            "sigma2_s": out.variances.sigma2_s,
            "sigma2_ns": out.variances.sigma2_ns,
            "sigma2_ts": out.variances.sigma2_ts,
            "sigma2_rs": out.variances.sigma2_rs,
        },
        "rms_log_residual": out.rms_log_residual,
        "iterations": out.iterations,
        "converged": out.converged,
        "frozen_exponent": out.frozen_exponent,
        "n_samples": len(samples),
        "log_base": ns.log_base if ns.log_base is not None else "e",
        "two_stage": bool(ns.two_stage),
        "flip_ecc_sign": bool(ns.flip_ecc_sign),
    }
    _write_json(payload, out_dir / "fit.json")
    grid = [i / 10.0 for i in range(-100, 101)]
    curve = predict_curve(report, grid)
    lines = ["r_deg,density_per_mm2"]
    lines.extend(f"{_fmt(r)},{_fmt(d)}" for r, d in curve)
    _write_lines(lines, out_dir / "fit_curve.csv")
    return 0


# ---------------------------------------------------------------- synth

def _write_mosaic(out_dir: Path, stem: str, spec: MosaicSpec,
                  eccentricity_deg: float, participant_id: str) -> dict:
    centers, label_map, achieved = generate_mosaic(spec)
    tess = build_voronoi(centers.points, BoundingBox(float(spec.width), float(spec.height)))
    save_label_map(label_map, out_dir / f"{stem}.png")
    save_centers_csv(centers, out_dir / f"{stem}_centers.csv")
    truth = {
        "layout": spec.layout,
        "jitter_fraction": spec.jitter_fraction,
        "rng_seed": spec.rng_seed,
        "width": spec.width,
        "height": spec.height,
        "microns_per_pixel": spec.microns_per_pixel,
        "eccentricity_deg": eccentricity_deg,
        "target_density_per_mm2": spec.target_density,
        "achieved_density_per_mm2": achieved,
        "n_centers": len(centers),
        "interior_mean_cell_area_um2":
            interior_mean_cell_area_um2(tess, spec.microns_per_pixel),
    }
    _write_json(truth, out_dir / f"{stem}_truth.json")
    return {
        "label_map": f"{stem}.png",
        "centers": f"{stem}_centers.csv",
        "participant_id": participant_id,
        "modality": "confocal",
        "eccentricity_deg": eccentricity_deg,
        "microns_per_pixel": spec.microns_per_pixel,
        "width": spec.width,
        "height": spec.height,
    }


def cmd_synth(ns) -> int:
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if ns.profile:
            params = PowerFitParams(ns.kappa, ns.pi_n, ns.pi_t, ns.rho)
            if ns.ecc_step <= 0:
                raise ValueError(f"--ecc-step must be positive, got {ns.ecc_step}")
            grid = []
            r = ns.ecc_min
            while r <= ns.ecc_max + 1e-9:
                grid.append(round(r, 6))
                r += ns.ecc_step
            records = []
            for idx, ecc in enumerate(grid):
                target = math.exp(eval_log_density(params, None, ecc))
                spec = MosaicSpec(
                    target_density=target,
                    width=ns.width, height=ns.height,
                    microns_per_pixel=ns.mpp,
                    layout=ns.layout,
                    jitter_fraction=ns.jitter_fraction,
                    rng_seed=ns.seed + idx,
                )
                records.append(_write_mosaic(out_dir, f"mosaic_{idx:03d}", spec,
                                             ecc, ns.participant))
            _write_json({"records": records}, out_dir / "manifest.json")
        else:
            spec = MosaicSpec(
                target_density=ns.target_density,
                width=ns.width, height=ns.height,
                microns_per_pixel=ns.mpp,
                layout=ns.layout,
                jitter_fraction=ns.jitter_fraction,
                rng_seed=ns.seed,
            )
            record = _write_mosaic(out_dir, "mosaic_000", spec, 0.0, ns.participant)
            _write_json({"records": [record]}, out_dir / "manifest.json")
    except (MosaicError, ValueError) as exc:
        log.error("synth failed: %s", exc)
        return 1
    return 0


# ----------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for per-record processing")
    common.add_argument("--manifest", help="dataset manifest JSON")
    common.add_argument("--out-dir", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="RNG seed for synthesis")

    parser = argparse.ArgumentParser(
        prog="conemosaic",
        description="Cone mosaic analysis: annotation conversion, evaluation, "
                    "density profiles, and power-law fitting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[common],
                       help="centers CSV to label maps (Voronoi regions or circles)")
    p.add_argument("--method", choices=CONVERT_METHODS, required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("evaluate", parents=[common],
                       help="segmentation/detection metrics for pred+gt map pairs")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--tolerance", type=float, default=2.0,
                   help="center-match tolerance in pixels")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("density", parents=[common],
                       help="density and mean-area table from label maps")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("fit", parents=[common],
                       help="fit the asymmetric power law to a density table")
    p.add_argument("density_csv", help="CSV produced by the density command")
    p.add_argument("--two-stage", action="store_true",
                   help="per-participant fits pooled into mixed effects")
    p.add_argument("--log-base", type=float, default=None,
                   help="report log-density quantities in this base instead of e")
    p.add_argument("--flip-ecc-sign", action="store_true",
                   help="negate eccentricities before fitting (swaps branch roles)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("synth", parents=[common],
                       help="generate synthetic mosaics with ground truth")
    p.add_argument("--layout", choices=("hexagonal", "jittered-hex", "poisson-disc"),
                   default="hexagonal")
    p.add_argument("--target-density", type=float, default=10000.0,
                   help="cones per mm^2 (single-mosaic mode)")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--mpp", type=float, default=1.0, help="microns per pixel")
    p.add_argument("--jitter-fraction", type=float, default=0.0)
    p.add_argument("--participant", default="S1")
    p.add_argument("--profile", action="store_true",
                   help="one mosaic per eccentricity with power-law target densities")
    p.add_argument("--kappa", type=float, default=9.2)
    p.add_argument("--pi-n", type=float, default=-0.4)
    p.add_argument("--pi-t", type=float, default=-0.5)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--ecc-min", type=float, default=-10.0)
    p.add_argument("--ecc-max", type=float, default=10.0)
    p.add_argument("--ecc-step", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s: %(message)s")
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except MosaicError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
