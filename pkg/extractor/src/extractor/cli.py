"""Extraction tool: image folder + class names -> DEMB files + manifest.

Labels come from the directory structure: each class-name line must match a
subdirectory of the image folder holding that class's images. Unreadable
images are skipped with a warning and counted in the summary.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from PIL import Image

from .demb import write_embeddings
from .encoders import PROMPT_TEMPLATE, ModelLoadError, load_encoder

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}


def _read_class_names(path: Path) -> list[str]:
    names = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    if not names:
        raise ValueError(f"{path}: class-name list is empty")
    return names


def extract(image_dir, class_names_file, model_id: str, out_dir, batch_size: int = 16) -> dict:
    """Encode the folder and write images.demb, texts.demb and manifest.json.

    Returns a summary dict (rows written, skip count, paths).
    """
    image_dir = Path(image_dir)
    out_dir = Path(out_dir)
    class_names = _read_class_names(Path(class_names_file))
    encoder = load_encoder(model_id, batch_size=batch_size)

    images, labels, skipped = [], [], 0
    for label, name in enumerate(class_names):
        class_dir = image_dir / name
        if not class_dir.is_dir():
            raise FileNotFoundError(f"no directory for class {name!r} under {image_dir}")
        for path in sorted(class_dir.iterdir()):
            if path.suffix.lower() not in _IMAGE_SUFFIXES:
                continue
            try:
                with Image.open(path) as img:
                    images.append(img.convert("RGB").copy())
                labels.append(label)
            except OSError as exc:
                skipped += 1
                print(f"warning: skipping unreadable image {path}: {exc}", file=sys.stderr)
    if not images:
        raise ValueError(f"no readable images found under {image_dir}")

    image_features = encoder.encode_images(images)
    text_features = encoder.encode_texts([PROMPT_TEMPLATE.format(n) for n in class_names])

    out_dir.mkdir(parents=True, exist_ok=True)
    write_embeddings(out_dir / "images.demb", image_features, labels=labels)
    write_embeddings(out_dir / "texts.demb", text_features)
    manifest = {
        "id_embeddings": "images.demb",
        "text_embeddings": "texts.demb",
        "class_names": class_names,
        "score": {},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return {
        "rows": len(images),
        "classes": len(class_names),
        "skipped": skipped,
        "out_dir": str(out_dir),
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demb-extract",
        description="Encode an image folder and class names into DEMB embedding files.",
    )
    parser.add_argument("--image-dir", required=True, help="folder with one subdirectory per class")
    parser.add_argument("--class-names", required=True, help="text file, one class name per line")
    parser.add_argument("--model", default="toy", help="'toy' or a sentence-transformers CLIP id")
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--batch-size", type=int, default=16)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = extract(
            args.image_dir, args.class_names, args.model, args.out_dir, args.batch_size
        )
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
