"""``llsiscope`` command-line tool.

Commands: ``fabricgen``, ``inject``, ``render``, ``compare`` and ``rerun``.
Every command writes a ``.manifest`` file of ``key=value`` lines next to its
outputs; ``rerun`` replays one bit-exactly.  ``compare`` exits 0 for CLEAN,
2 for TAMPERED and 1 on any error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .configfile import load_fabric_config, save_fabric_config
from .designs import DEMOS, build_demo, demo_partner
from .detect import AnalysisParams, analyze, image_id, render_overlay
from .fabric import FAMILIES, SERIES_K, FabricError, canonical_family
from .floorplan import build_floorplan
from .logic import snapshot_emitters
from .optics import Modulation, NoiseParams, ScanParams, render_llsi, render_reflectance
from .pnm import read_pgm, write_pgm, write_ppm
from .trojan import TrojanSpec, apply_patch, builtin_trojan

EXIT_CLEAN, EXIT_ERROR, EXIT_TAMPERED = 0, 1, 2
DEFAULT_TILE_PITCH_UM = 25.0


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags, which would read as TAMPERED
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _grid(text: str) -> tuple[int, int]:
    try:
        cols, rows = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected CxR, got {text!r}") from None
    if cols < 1 or rows < 1:
        raise argparse.ArgumentTypeError(f"grid must be at least 1x1, got {text!r}")
    return cols, rows


def _region(text: str) -> tuple[float, float, float, float]:
    try:
        parts = tuple(float(v) for v in text.split(","))
    except ValueError:
        parts = ()
    if len(parts) != 4 or parts[2] <= 0 or parts[3] <= 0:
        raise argparse.ArgumentTypeError(f"expected x0,y0,width,height in um, got {text!r}")
    return parts


def _family(text: str) -> str:
    try:
        return canonical_family(text)
    except FabricError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, command: str, argv: list[str], inputs: dict, outputs: dict,
                   params: dict, seed) -> None:
    """``key=value`` lines; inputs and outputs carry content hashes."""
    lines = [f"command={command}", f"version={__version__}", f"argv={json.dumps(argv)}",
             f"cwd={os.getcwd()}", f"seed={seed}"]
    for key, p in sorted(inputs.items()):
        lines += [f"input.{key}={p}", f"input.{key}.sha256={_sha256(p)}"]
    for key, p in sorted(outputs.items()):
        lines += [f"output.{key}={p}", f"output.{key}.sha256={_sha256(p)}"]
    lines += [f"param.{k}={v}" for k, v in sorted(params.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            key, sep, value = line.partition("=")
            if not sep:
                raise CliError(f"{path}: malformed manifest line {line!r}")
            out[key] = value
    return out


# -- commands -------------------------------------------------------------


def cmd_fabricgen(args, argv) -> int:
    cols, rows = args.grid
    cfg = build_demo(args.demo, cols, rows, args.family, args.seed)
    save_fabric_config(cfg, args.out)
    outputs = {"config": args.out}
    if args.suspect_out:
        partner = demo_partner(args.demo, cfg)
        if partner is None:
            raise CliError(f"demo {args.demo!r} has no paired suspect")
        save_fabric_config(partner, args.suspect_out)
        outputs["suspect"] = args.suspect_out
    params = {"family": args.family, "grid": f"{cols}x{rows}", "demo": args.demo}
    write_manifest(args.out + ".manifest", "fabricgen", argv, {}, outputs, params, args.seed)
    return EXIT_CLEAN


def _load_trojan(cfg, text: str, seed: int) -> TrojanSpec:
    if Path(text).is_file():
        return TrojanSpec.from_text(Path(text).read_text(encoding="utf-8"))
    return builtin_trojan(cfg, text, seed)


def cmd_inject(args, argv) -> int:
    cfg = load_fabric_config(args.inp)
    spec = _load_trojan(cfg, args.trojan, args.seed)
    save_fabric_config(apply_patch(cfg, spec), args.out)
    spec_path = args.out + ".trojan"
    Path(spec_path).write_text(spec.to_text(), encoding="utf-8")
    inputs = {"config": args.inp}
    if Path(args.trojan).is_file():
        inputs["trojan"] = args.trojan
    write_manifest(args.out + ".manifest", "inject", argv, inputs,
                   {"config": args.out, "trojan": spec_path},
                   {"trojan": spec.label, "patches": len(spec.patches)}, args.seed)
    return EXIT_CLEAN


def cmd_render(args, argv) -> int:
    cfg = load_fabric_config(args.inp)
    fp = build_floorplan(cfg, tile_pitch_um=args.tile_pitch_um)
    if args.region is None:
        x0, y0, x1, y1 = fp.extent()
        region = (x0, y0, x1 - x0, y1 - y0)
    else:
        region = args.region
    scan = ScanParams(region, pixel_pitch_um=args.pitch_um, dwell_ms_per_px=args.dwell_ms,
                      bandpass_hz=args.bandpass_hz,
                      modulation=Modulation(peak_to_peak_v=args.mod_vpp))
    noise = NoiseParams(noise_floor=args.noise_floor, seed=args.seed)
    llsi = render_llsi(snapshot_emitters(cfg, fp), scan, noise, workers=args.workers)
    refl = render_reflectance(fp, scan)
    for img in (llsi, refl):
        img.meta["tile-pitch-um"] = float(args.tile_pitch_um)
    out = {"llsi": args.out_prefix + ".llsi.pgm", "refl": args.out_prefix + ".refl.pgm"}
    write_pgm(llsi, out["llsi"])
    write_pgm(refl, out["refl"])
    params = {"pitch-um": args.pitch_um, "dwell-ms": args.dwell_ms, "bandpass-hz": args.bandpass_hz,
              "mod-vpp": args.mod_vpp, "noise-floor": args.noise_floor,
              "region": ",".join(repr(float(v)) for v in region), "tile-pitch-um": args.tile_pitch_um}
    write_manifest(args.out_prefix + ".manifest", "render", argv, {"config": args.inp}, out, params, args.seed)
    return EXIT_CLEAN


def cmd_compare(args, argv) -> int:
    golden = read_pgm(args.golden)
    suspect = read_pgm(args.suspect)
    cfg = load_fabric_config(args.floorplan)
    pitch = float(golden.meta.get("tile-pitch-um", DEFAULT_TILE_PITCH_UM))
    fp = build_floorplan(cfg, tile_pitch_um=pitch)
    try:
        scan = ScanParams.from_meta(golden.meta)
    except KeyError as exc:
        raise CliError(f"{args.golden}: missing metadata {exc}") from None
    params = AnalysisParams(max_shift_px=args.max_shift, k=args.k, min_area_px=args.min_area,
                            despeckle=not args.no_despeckle)
    result = analyze(golden, suspect, fp, scan, params, image_id(golden), image_id(suspect))
    overlay = render_overlay(render_reflectance(fp, scan), result.diff, result.sigma, result.report.params)
    out = {"report": args.out_prefix + ".report.txt", "overlay": args.out_prefix + ".overlay.ppm"}
    Path(out["report"]).write_text(result.report.to_text(), encoding="utf-8")
    write_ppm(overlay, out["overlay"])
    resolved = result.report.params
    write_manifest(args.out_prefix + ".manifest", "compare", argv,
                   {"golden": args.golden, "suspect": args.suspect, "floorplan": args.floorplan}, out,
                   {"k": resolved.k, "min-area-px": resolved.min_area_px, "max-shift-px": resolved.max_shift_px,
                    "despeckle": int(resolved.despeckle), "verdict": result.report.verdict}, "none")
    print(f"{result.report.verdict} components={len(result.report.components)} report={out['report']}")
    return EXIT_TAMPERED if result.report.verdict == "TAMPERED" else EXIT_CLEAN


def cmd_rerun(args, argv) -> int:
    manifest = read_manifest(args.manifest)
    try:
        replay = json.loads(manifest["argv"])
    except (KeyError, json.JSONDecodeError):
        raise CliError(f"{args.manifest}: no usable argv entry") from None
    if not replay or replay[0] == "rerun":
        raise CliError(f"{args.manifest}: refusing to replay {replay!r}")
    cwd = manifest.get("cwd")
    old = os.getcwd()
    if cwd:
        os.chdir(cwd)
    try:
        return main(replay)
    finally:
        os.chdir(old)


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="llsiscope", formatter_class=fmt,
                     description="Simulated laser logic state imaging of FPGA fabrics and "
                                 "golden-model Trojan detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fabricgen", formatter_class=fmt, help="write a demo fabric configuration")
    p.add_argument("--family", type=_family, default=SERIES_K, help=f"fabric family ({', '.join(FAMILIES)})")
    p.add_argument("--grid", type=_grid, default="6x4", help="tile grid as CxR")
    p.add_argument("--demo", choices=DEMOS, default="route-thru", help="design to generate")
    p.add_argument("--seed", type=int, default=0, help="seed for benchmark-host")
    p.add_argument("--out", required=True, help="output config path")
    p.add_argument("--suspect-out", default=None, help="also write the demo's paired suspect config here")
    p.set_defaults(func=cmd_fabricgen)

    p = sub.add_parser("inject", formatter_class=fmt, help="apply a Trojan patch spec to a config")
    p.add_argument("--in", dest="inp", required=True, help="input config path")
    p.add_argument("--trojan", required=True,
                   help="patch spec file, or builtin: trit-tc:N, trit-ts:N, init-flip:CELL:OLD:NEW, "
                        "ff-toggle:CELL, move-route-thru:CELL:CELL, add-route-thru:CELL:SRC->SINK")
    p.add_argument("--seed", type=int, default=0, help="seed for generated Trojans")
    p.add_argument("--out", required=True, help="output config path")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("render", formatter_class=fmt, help="render LLSI and reflectance snapshots")
    p.add_argument("--in", dest="inp", required=True, help="input config path")
    p.add_argument("--pitch-um", type=float, default=0.25, help="pixel pitch in um")
    p.add_argument("--dwell-ms", type=float, default=3.3, help="dwell time per pixel in ms")
    p.add_argument("--bandpass-hz", type=float, default=100.0, help="lock-in bandpass width in Hz")
    p.add_argument("--mod-vpp", type=float, default=0.2, help="supply modulation peak-to-peak in V")
    p.add_argument("--noise-floor", type=float, default=0.0015, help="noise sigma at 3.3 ms and 100 Hz")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--region", type=_region, default=None,
                   help="scan window x0,y0,width,height in um (default: whole fabric)")
    p.add_argument("--tile-pitch-um", type=float, default=DEFAULT_TILE_PITCH_UM, help="fabric tile pitch in um")
    p.add_argument("--workers", type=int, default=1, help="render threads (output is identical for any count)")
    p.add_argument("--out-prefix", required=True, help="writes PREFIX.llsi.pgm, PREFIX.refl.pgm, PREFIX.manifest")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("compare", formatter_class=fmt,
                       help="compare golden and suspect snapshots (exit 0 CLEAN, 2 TAMPERED, 1 error)")
    p.add_argument("--golden", required=True, help="golden LLSI snapshot (.pgm)")
    p.add_argument("--suspect", required=True, help="suspect LLSI snapshot (.pgm)")
    p.add_argument("--floorplan", required=True, help="golden fabric config used to map differences to cells")
    p.add_argument("--k", type=float, default=5.0, help="threshold in noise sigmas")
    p.add_argument("--min-area", type=int, default=None, help="minimum component area in px (default: beam footprint)")
    p.add_argument("--max-shift", type=int, default=10, help="registration search radius in px")
    p.add_argument("--no-despeckle", action="store_true", help="skip the 3x3 median filter")
    p.add_argument("--out-prefix", required=True, help="writes PREFIX.report.txt, PREFIX.overlay.ppm, PREFIX.manifest")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("rerun", formatter_class=fmt, help="replay a command from its manifest")
    p.add_argument("manifest", help="manifest written by a previous command")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, argv)
    except (CliError, FabricError, ValueError, OSError) as exc:
        print(f"llsiscope {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
