"""``facekit`` command line: detection, benchmarking, recognizer and cascade training.

Exit codes: 0 success, 2 usage, 3 file errors, 4 parse errors, 5 domain errors.
"""
import argparse
import math
import os
import sys
import time
import warnings

from . import recognizers as rec
from . import trainer
from .bench import dumps_reports, make_report, summary_table, time_detection
from .cascade import load_cascade, serialize_cascade_xml
from .dataset import crop, largest_face, list_images, load_annotations, prepare_training_data
from .detector import DetectParams, detect_multi_scale
from .errors import CascadeError, FaceKitError, MalformedPgm
from .imgcore import as_gray, draw_rectangle, load_image, resize_bilinear, save_pgm

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_PARSE, EXIT_DOMAIN = 0, 2, 3, 4, 5

DEFAULT_LABELS = {"HAAR": "HAAR cascade", "LBP": "LBP cascade classifier"}


class UsageError(Exception):
    pass


def _size(text):
    if text.lower() == "none":
        return None
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH or 'none', got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return (w, h)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _detect_args(p):
    p.add_argument("--scale-factor", type=float, default=1.3)
    p.add_argument("--min-neighbors", type=int, default=5)
    p.add_argument("--min-size", type=int, default=None)
    p.add_argument("--max-size", type=int, default=None)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker threads for the detector (default: all cores)")


def _params(a):
    try:
        return DetectParams(a.scale_factor, a.min_neighbors, a.min_size, a.max_size)
    except ValueError as e:
        raise UsageError(str(e)) from None


def build_parser():
    ap = argparse.ArgumentParser(prog="facekit", description="Classical face detection and recognition.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect faces in one image")
    p.add_argument("--cascade", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--label", default=None, help="classifier name printed with the time")
    p.add_argument("--out", default=None, help="write the image with detections drawn (PGM)")
    p.add_argument("--rects", default=None, help="write detections as 'x y w h' lines")
    p.add_argument("--annotations", default=None, help="score against ground truth (summary on stderr)")
    _detect_args(p)

    p = sub.add_parser("bench", help="time cascades over images")
    p.add_argument("--cascade", action="append", required=True)
    p.add_argument("--label", action="append", default=[])
    p.add_argument("--image", action="append", required=True)
    p.add_argument("--runs", type=_positive_int, default=10)
    p.add_argument("--report", default=None)
    p.add_argument("--annotations", default=None)
    p.add_argument("--iou", type=float, default=0.5)
    _detect_args(p)

    p = sub.add_parser("train-recognizer", help="train a face recognizer from s<id> folders")
    p.add_argument("--algo", choices=rec.ALGORITHMS, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--cascade", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--components", type=_positive_int, default=rec.DEFAULT_COMPONENTS)
    p.add_argument("--threshold", type=float, default=math.inf)
    p.add_argument("--size", type=_size, default=(),
                   help="face crop size WxH or 'none' (default 100x100 for eigen/fisher, none for lbph)")
    p.add_argument("--radius", type=_positive_int, default=1)
    p.add_argument("--neighbors", type=_positive_int, default=8)
    p.add_argument("--grid-x", type=_positive_int, default=8)
    p.add_argument("--grid-y", type=_positive_int, default=8)
    p.add_argument("--rejected", default=None, help="write skipped images with reasons")
    _detect_args(p)

    p = sub.add_parser("predict", help="recognize faces with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--image", nargs="+", required=True)
    p.add_argument("--cascade", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--names", default=None, help="'<id> <name>' per line")
    p.add_argument("--threshold", type=float, default=None, help="override the model threshold")
    _detect_args(p)

    p = sub.add_parser("train-cascade", help="train a HAAR cascade on window folders")
    p.add_argument("--pos", required=True)
    p.add_argument("--neg", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="JSON training log (default: <out>.log.json)")
    p.add_argument("--stages", type=_positive_int, default=2)
    p.add_argument("--width", type=int, default=19)
    p.add_argument("--height", type=int, default=19)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-min", type=float, default=0.995)
    p.add_argument("--f-max", type=float, default=0.5)
    p.add_argument("--max-weak", type=_positive_int, default=50)
    p.add_argument("--n-neg", type=int, default=None)

    p = sub.add_parser("cascade-info", help="summarize a cascade file")
    p.add_argument("cascade")
    return ap


# -- commands -------------------------------------------------------------------

def _gray(path):
    return as_gray(load_image(path))


def _write_rects(path, rects):
    with open(path, "w") as fh:
        for r in rects:
            fh.write(f"{r.x} {r.y} {r.w} {r.h}\n")


def _truths_for(annotations, image):
    key = os.path.abspath(image)
    for a in annotations:
        if os.path.abspath(a.path) == key:
            return list(a.rects)
    return []


def cmd_detect(a, out, clock):
    model = load_cascade(a.cascade)
    img = _gray(a.image)
    params = _params(a)
    anns = load_annotations(a.annotations) if a.annotations else None
    samples, dets = time_detection(model, img, params, 1, clock, a.jobs)
    label = a.label or DEFAULT_LABELS[model.feature_type]
    rects = [d.rect for d in dets]
    print(f"Faces found: {len(rects)}", file=out)
    print(f"{label} detection time {samples[0].dt1}", file=out)
    if a.out:
        drawn = img
        for r in rects:
            drawn = draw_rectangle(drawn, r, 255)
        save_pgm(drawn, a.out)
    if a.rects:
        _write_rects(a.rects, rects)
    if anns is not None:
        rep = make_report(label, a.image, samples, dets, _truths_for(anns, a.image))
        print("accuracy: tp={tp} fp={fp} fn={fn}".format(**rep.accuracy), file=sys.stderr)
    return EXIT_OK


def cmd_bench(a, out, clock):
    labels = list(a.label)
    if len(labels) > len(a.cascade):
        raise UsageError("more --label than --cascade arguments")
    models = [load_cascade(c) for c in a.cascade]
    labels += [DEFAULT_LABELS[m.feature_type] for m in models[len(labels):]]
    images = [(p, _gray(p)) for p in a.image]
    anns = load_annotations(a.annotations) if a.annotations else None
    params = _params(a)
    reports = []
    for model, label in zip(models, labels):
        for path, img in images:
            samples, dets = time_detection(model, img, params, a.runs, clock, a.jobs)
            truths = _truths_for(anns, path) if anns is not None else None
            reports.append(make_report(label, path, samples, dets, truths, a.iou))
    if a.report:
        with open(a.report, "w") as fh:
            fh.write(dumps_reports(reports))
    out.write(summary_table(reports))
    return EXIT_OK


def cmd_train_recognizer(a, out, clock):
    size = a.size
    if size == ():
        size = None if a.algo == "lbph" else (100, 100)
    model = load_cascade(a.cascade)
    print("Preparing data...", file=out)
    rejected = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        faces, labels = prepare_training_data(a.data, model, size, _params(a), rejected, a.jobs)
    if a.rejected:
        with open(a.rejected, "w") as fh:
            fh.writelines(f"{p} {why}\n" for p, why in rejected)
    print("Data prepared", file=out)
    print(f"Total faces: {len(faces)}", file=out)
    print(f"Total labels: {len(labels)}", file=out)
    samples = list(zip(faces, labels))
    m = rec.train(a.algo, samples, threshold=a.threshold, components=a.components,
                  **({"radius": a.radius, "neighbors": a.neighbors, "grid_x": a.grid_x,
                      "grid_y": a.grid_y} if a.algo == "lbph" else {}))
    rec.save_model(m, a.model)
    return EXIT_OK


def load_names(path):
    names = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            key, _, name = s.partition(" ")
            try:
                names[int(key)] = name.strip() or key
            except ValueError:
                raise FaceKitError(f"{path}:{n}: expected '<id> <name>'") from None
    return names


def cmd_predict(a, out, clock):
    model = rec.load_model(a.model)
    if a.threshold is not None:
        model = rec.with_threshold(model, a.threshold)
    detector = load_cascade(a.cascade)
    names = load_names(a.names) if a.names else {}
    params = _params(a)
    print("Predicting images...", file=out)
    for path in a.image:
        img = _gray(path)
        r = None
        if img.shape[0] >= detector.window_h and img.shape[1] >= detector.window_w:
            r = largest_face(detect_multi_scale(detector, img, params, jobs=a.jobs))
        if r is None:
            print(f"{path}: no face detected", file=out)
            continue
        face = crop(img, r)
        if model.kind != "lbph":
            face = resize_bilinear(face, model.face_w, model.face_h)
        p = rec.predict(model, face)
        text = "unknown" if p.label == rec.UNKNOWN else names.get(p.label, str(p.label))
        if p.label == rec.UNKNOWN:
            print(f"{path}: unknown", file=out)
        else:
            print(f"{path}: {text} (distance {p.distance:.6g})", file=out)
        if a.out:
            os.makedirs(a.out, exist_ok=True)
            base = os.path.basename(path)
            save_pgm(draw_rectangle(img, r, 255), os.path.join(a.out, os.path.splitext(base)[0] + ".pgm"))
            with open(os.path.join(a.out, base + ".label.txt"), "w") as fh:
                fh.write(f"{text}\n")
    print("Prediction complete", file=out)
    return EXIT_OK


def cmd_train_cascade(a, out, clock):
    try:
        cfg = trainer.TrainConfig(a.width, a.height, a.d_min, a.f_max, a.stages, a.max_weak, a.seed, a.n_neg)
    except ValueError as e:
        raise UsageError(str(e)) from None
    for d in (a.pos, a.neg):
        if not os.path.isdir(d):
            raise FileNotFoundError(f"no such directory: {d}")
    pos = [_gray(p) for p in list_images(a.pos)]
    bad = [p.shape for p in pos if p.shape != (a.height, a.width)]
    if bad:
        raise FaceKitError(f"positive windows must be {a.width}x{a.height}; found {bad[0][1]}x{bad[0][0]}")
    negs = [_gray(p) for p in list_images(a.neg)]
    neg = [n for n in negs if n.shape == (a.height, a.width)]
    pool = [n for n in negs if n.shape != (a.height, a.width)]
    if not neg and pool:
        neg = list(trainer.sample_windows(pool, a.n_neg or 2 * max(1, len(pos)), a.width, a.height, a.seed))
    log = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = trainer.train_cascade(pos, neg, cfg, neg_pool=pool, log=log)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    with open(a.out, "w") as fh:
        fh.write(serialize_cascade_xml(model))
    trainer.write_training_log(a.log or os.path.splitext(a.out)[0] + ".log.json", cfg, log)
    print(f"cascade written to {a.out}: {len(model.stages)} stage(s), {model.n_weak} weak classifier(s)",
          file=out)
    return EXIT_OK


def cmd_cascade_info(a, out, clock):
    m = load_cascade(a.cascade)
    print(f"featureType: {m.feature_type}", file=out)
    print(f"window: {m.window_w}x{m.window_h}", file=out)
    print(f"stages: {len(m.stages)}", file=out)
    print(f"weakClassifiers: {m.n_weak}", file=out)
    print(f"features: {len(m.features)}", file=out)
    return EXIT_OK


COMMANDS = {
    "detect": cmd_detect,
    "bench": cmd_bench,
    "train-recognizer": cmd_train_recognizer,
    "predict": cmd_predict,
    "train-cascade": cmd_train_cascade,
    "cascade-info": cmd_cascade_info,
}


def exit_code_for(exc):
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, (CascadeError, MalformedPgm)):
        return EXIT_PARSE
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_DOMAIN


def main(argv=None, out=None, clock=time.perf_counter):
    """Run one command; returns the exit code."""
    out = out or sys.stdout
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return COMMANDS[a.command](a, out, clock)
    except (FaceKitError, OSError, ValueError, UsageError) as e:
        print(f"facekit {a.command}: {e}", file=sys.stderr)
        return exit_code_for(e)


def run():
    sys.exit(main())
