"""Command-line entry point: ``timelinekit <verb> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .core import EventDatum, GlobalInfo, Layout, Orientation, Representation, Scale
from .detsim import STANDARD, NoiseProfile, load_detections, perturb, save_detections
from .errors import SchemaError, TimelineKitError
from .eval import STAGES, ap_range, corpus_average_precision, gain_report, precision_recall, task_seed
from .reconstruct import RepairConfig, repair
from .render import RenderJob, RenderOptions, render
from .segment.grabcut import GrabCutParams
from .synth import generate_corpus, load_timeline, sample_timeline, save_timeline
from .template import Hooks, command_hook, extract_template, load_template, save_template

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger("timelinekit")


@dataclass
class Config:
    noise: NoiseProfile = STANDARD
    repair: RepairConfig = field(default_factory=RepairConfig)
    grabcut: GrabCutParams = field(default_factory=GrabCutParams)
    constraints: dict = field(default_factory=dict)


def load_config(path: Optional[str]) -> Config:
    """Read a TOML or JSON config with optional sections noise, repair, grabcut and synth."""
    if path is None:
        return Config()
    p = Path(path)
    text = p.read_text()
    try:
        obj = tomllib.loads(text) if p.suffix.lower() == ".toml" else json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot parse config {p.name}: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError("config must be a table/object")
    try:
        return Config(
            NoiseProfile.from_dict(obj["noise"]) if "noise" in obj else STANDARD,
            RepairConfig.from_dict(obj.get("repair", {})),
            GrabCutParams.from_dict(obj.get("grabcut", {})),
            dict(obj.get("synth", {})),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad config value: {exc}") from None


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=False) + "\n")


def _read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB")).copy()


def load_event_data(path) -> list[EventDatum]:
    try:
        obj = json.loads(Path(path).read_text())
        events = obj["events"] if isinstance(obj, dict) else obj
        data = [EventDatum.from_json(e) for e in events]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SchemaError(f"event data must be {{\"events\": [{{time, label, icon?}}]}}: {exc}") from None
    if not data:
        raise SchemaError("event data is empty", field="events")
    return data


def _canvas(text: Optional[str]):
    if not text:
        return None
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise SchemaError(f"canvas must look like 800x400, got {text!r}") from None
    return w, h


def _constraints(cfg: Config, pairs) -> dict:
    out = dict(cfg.constraints)
    for p in pairs or []:
        key, _, value = p.partition("=")
        out[key] = int(value) if value.isdigit() else value
    return out


# -- verbs ------------------------------------------------------------------------------


def _synth_one(args):
    seed, constraints, path = args
    _, _, tl = sample_timeline(seed, constraints)
    save_timeline(tl, path)
    return str(path.with_suffix(".json"))


def cmd_synth_gen(a, cfg: Config) -> int:
    out = Path(a.out)
    constraints = _constraints(cfg, a.constraint)
    seeds = [int(np.random.SeedSequence([a.seed, 1_000_003, i]).generate_state(1)[0]) for i in range(a.n)]
    jobs = [(s, constraints or None, out / f"timeline_{i:04d}.png") for i, s in enumerate(seeds)]
    if a.jobs > 1:
        with ProcessPoolExecutor(a.jobs) as ex:
            paths = list(ex.map(_synth_one, jobs))
    else:
        paths = [_synth_one(j) for j in jobs]
    for p in paths:
        print(p)
    return 0


def cmd_detect_sim(a, cfg: Config) -> int:
    out = Path(a.out)
    for i, src in enumerate(a.timelines):
        tl = load_timeline(src)
        dets = perturb(tl, cfg.noise, task_seed(a.seed, 0, i))
        dest = out / (Path(src).stem + ".dets.json") if len(a.timelines) > 1 or out.suffix != ".json" else out
        dest.parent.mkdir(parents=True, exist_ok=True)
        # relative to the detections file so output trees can be moved
        image_ref = os.path.relpath(Path(src).with_suffix(".png").resolve(), dest.parent.resolve())
        save_detections(dest, image_ref, dets)
        log.debug("%s: %d ground-truth elements -> %d detections", src, len(tl.elements), len(dets))
        print(dest)
    return 0


def _image_for(dets_path, image_ref, override):
    path = override or image_ref
    if path is None:
        return None
    p = Path(path)
    if not p.is_absolute() and override is None:
        p = Path(dets_path).parent / p
    return _read_image(p)


def cmd_reconstruct(a, cfg: Config) -> int:
    image_ref, dets = load_detections(a.detections)
    img = _image_for(a.detections, image_ref, a.image)
    size = img.shape[1::-1] if img is not None else None
    r = repair(dets, cfg.repair, image_size=size)
    log.debug("dedup by %s: %d -> %d; orientation %s; %d event clusters; repaired %d",
              r.used, len(r.raw), len(r.dedup), r.orientation.value, len(r.clusters), len(r.repaired))
    save_detections(Path(a.out), image_ref, r.repaired)
    if a.trace:
        trace = {"dedup": r.used, "raw": len(r.raw), "after_dedup": len(r.dedup), "repaired": len(r.repaired),
                 "orientation": r.orientation.value,
                 "clusters": [{"anchor": c.anchor, "members": list(c.members)} for c in r.clusters]}
        _write_json(Path(a.out).with_suffix(".trace.json"), trace)
    print(a.out)
    return 0


def _global_info(a, timeline_path) -> GlobalInfo:
    base = load_timeline(timeline_path).global_info.to_json() if timeline_path else GlobalInfo().to_json()
    for key in ("representation", "scale", "layout", "orientation"):
        if getattr(a, key, None):
            base[key] = getattr(a, key)
    try:
        return GlobalInfo.from_json(base)
    except ValueError as exc:
        raise SchemaError(str(exc), field="global") from None


def cmd_extract(a, cfg: Config) -> int:
    image_ref, dets = load_detections(a.detections)
    img = _image_for(a.detections, image_ref, a.image)
    if img is None:
        raise SchemaError("no image: pass --image or reference one in the detections file", field="image")
    gi = _global_info(a, a.timeline)
    hooks = Hooks(command_hook(shlex.split(a.font_cmd)) if a.font_cmd else None,
                  command_hook(shlex.split(a.ocr_cmd)) if a.ocr_cmd else None)
    doc = extract_template(img, gi, dets, refine=not a.no_refine, params=cfg.grabcut, hooks=hooks)
    save_template(doc, a.out)
    log.debug("template: %d reusable, %d updatable, %d slots", len(doc.reusable), len(doc.updatable),
              len(doc.event_slots))
    print(a.out)
    return 0


def _save_render(res, out: Path) -> list[Path]:
    out.parent.mkdir(parents=True, exist_ok=True)
    svg, png = out.with_suffix(".svg"), out.with_suffix(".png")
    svg.write_text(res.svg)
    Image.fromarray(res.image).save(png)
    return [svg, png]


def cmd_render(a, cfg: Config) -> int:
    doc = load_template(a.template)
    data = load_event_data(a.data)
    source = load_template(a.source) if a.source else None
    opts = RenderOptions(canvas=_canvas(a.canvas), scale=Scale(a.scale) if a.scale else None,
                         representation_source=source, allow_loop=not a.no_loop)
    res = render(RenderJob(doc, data, opts))
    for p in _save_render(res, Path(a.out)):
        print(p)
    return 0


def cmd_evaluate(a, cfg: Config) -> int:
    if a.pred:
        if not a.gt:
            raise SchemaError("--pred needs --gt (an annotated timeline JSON)")
        _, preds = load_detections(a.pred)
        gts = load_timeline(a.gt).as_detections()
        pair = [(preds, gts)]
        report = {}
        for kind, masks in (("bbox", False), ("mask", True)):
            report[kind] = {
                "AP50": corpus_average_precision(pair, 0.5, masks),
                "AP75": corpus_average_precision(pair, 0.75, masks),
                "AP50:95": ap_range(pair, masks),
            }
            for t, tag in ((0.5, "50"), (0.75, "75")):
                p, r = precision_recall(pair, t, masks)
                report[kind][f"Pre{tag}"], report[kind][f"Rec{tag}"] = p, r
        text = json.dumps(report, indent=1) + "\n"
        if a.out:
            Path(a.out).write_text(text)
        print(text, end="")
        return 0
    if a.corpus:
        corpus = [load_timeline(p) for p in sorted(Path(a.corpus).glob("*.json"))
                  if not p.name.endswith(".dets.json")]
    else:
        corpus = [tl for _, _, tl in generate_corpus(a.n, a.seed, _constraints(cfg, None) or None)]
    stages = tuple(a.stages.split(",")) if a.stages else STAGES
    rep = gain_report(corpus, cfg.noise, cfg.repair, runs=a.runs, seed=a.seed, stages=stages, jobs=a.jobs,
                      grabcut=cfg.grabcut)
    if a.out:
        Path(a.out).parent.mkdir(parents=True, exist_ok=True)
        Path(a.out).write_text(rep.to_csv())
    print(rep.to_table(), end="")
    return 0


def cmd_pipeline(a, cfg: Config) -> int:
    """Synthesize (or load) a timeline, detect, reconstruct, extract and re-render it."""
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    if a.timeline:
        tl = load_timeline(a.timeline)
    else:
        _, _, tl = sample_timeline(a.seed, _constraints(cfg, a.constraint) or None)
    save_timeline(tl, out / "source.png")
    dets = perturb(tl, cfg.noise, task_seed(a.seed, 0, 0))
    save_detections(out / "detections.json", "source.png", dets)
    r = repair(dets, cfg.repair, image_size=tl.image.shape[1::-1])
    save_detections(out / "repaired.json", "source.png", r.repaired)
    doc = extract_template(tl.image, tl.global_info, r.repaired, refine=not a.no_refine, params=cfg.grabcut)
    save_template(doc, out / "template.json")
    data = load_event_data(a.data) if a.data else tl.data
    res = render(RenderJob(doc, data, RenderOptions(canvas=_canvas(a.canvas))))
    _save_render(res, out / "rendered")
    summary = {
        "detections": len(dets), "dedup": r.used, "after_dedup": len(r.dedup), "repaired": len(r.repaired),
        "orientation": r.orientation.value, "event_slots": len(doc.event_slots), "rendered_events": len(data),
    }
    _write_json(out / "summary.json", summary)
    if a.trace:
        log.info("pipeline summary: %s", summary)
    print(out)
    return 0


# -- parser -----------------------------------------------------------------------------


def _globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
    p.add_argument("--config", default=d(None), help="TOML or JSON config (noise, repair, grabcut, synth)")
    p.add_argument("--trace", action="store_true", default=d(False), help="log each stage to stderr")
    p.add_argument("--jobs", type=int, default=d(1), help="worker processes")
    p.add_argument("--runs", type=int, default=d(5), help="seeded runs averaged by evaluate")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="timelinekit", description="Timeline infographic deconstruction and re-rendering.")
    _globals(ap, suppress=False)
    sub = ap.add_subparsers(dest="verb", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)

    def verb(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    p = verb("synth-gen", "generate annotated synthetic timelines")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--constraint", action="append", metavar="KEY=VALUE", help="pin a sampled attribute")
    p.set_defaults(func=cmd_synth_gen)

    p = verb("detect-sim", "simulate detector output for annotated timelines")
    p.add_argument("timelines", nargs="+", help="timeline JSON sidecars")
    p.add_argument("--out", required=True, help="output directory, or a .json file for a single input")
    p.set_defaults(func=cmd_detect_sim)

    p = verb("reconstruct", "deduplicate and repair detections")
    p.add_argument("detections")
    p.add_argument("--image", help="override the image referenced by the detections file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = verb("extract", "build a template document from an image and its detections")
    p.add_argument("detections")
    p.add_argument("--image")
    p.add_argument("--timeline", help="annotated timeline JSON to take global info from")
    p.add_argument("--representation", choices=[v.value for v in Representation])
    p.add_argument("--scale", choices=[v.value for v in Scale])
    p.add_argument("--layout", choices=[v.value for v in Layout])
    p.add_argument("--orientation", choices=[v.value for v in Orientation])
    p.add_argument("--no-refine", action="store_true", help="skip GrabCut mask refinement")
    p.add_argument("--ocr-cmd", help="command run on each text patch PNG; its stdout becomes the text")
    p.add_argument("--font-cmd", help="command run on each text patch PNG; its stdout names the font family")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = verb("render", "render event data with a template")
    p.add_argument("template")
    p.add_argument("data", help='JSON {"events": [{"time", "label", "icon"?}]}')
    p.add_argument("--out", required=True, help="output path stem; writes .svg and .png")
    p.add_argument("--canvas", help="WIDTHxHEIGHT")
    p.add_argument("--scale", choices=[v.value for v in Scale])
    p.add_argument("--source", help="template whose event positions to borrow")
    p.add_argument("--no-loop", action="store_true", help="fail instead of looping when slots run out")
    p.set_defaults(func=cmd_render)

    p = verb("evaluate", "score detections, or report per-stage gains on a corpus")
    p.add_argument("--pred", help="detections JSON to score")
    p.add_argument("--gt", help="annotated timeline JSON (ground truth)")
    p.add_argument("--corpus", help="directory of annotated timelines (default: synthesize --n)")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--stages", help=f"comma list from {','.join(STAGES)}")
    p.add_argument("--out", help="CSV (gain report) or JSON (scores) output")
    p.set_defaults(func=cmd_evaluate)

    p = verb("pipeline", "synthesize, detect, reconstruct, extract and re-render end to end")
    p.add_argument("--out", required=True)
    p.add_argument("--timeline", help="start from this annotated timeline instead of a synthetic one")
    p.add_argument("--data", help="event data to render (default: the source timeline's data)")
    p.add_argument("--canvas")
    p.add_argument("--constraint", action="append", metavar="KEY=VALUE")
    p.add_argument("--no-refine", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s", stream=sys.stderr, force=True)
    log.setLevel(logging.DEBUG if a.trace else logging.WARNING)
    try:
        cfg = load_config(a.config)
        return a.func(a, cfg)
    except (TimelineKitError, OSError) as exc:
        print(f"timelinekit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
