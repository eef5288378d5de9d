"""whisper-export command line tool."""

from __future__ import annotations

import argparse
import logging
import sys


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="whisper-export",
        description="Embed audio+transcript pairs with a frozen speech encoder "
                    "and write an ALKD store.",
    )
    parser.add_argument("--manifest", required=True,
                        help="newline-delimited JSON: {id, audio_path, text}")
    parser.add_argument("--checkpoint", required=True,
                        help="local encoder checkpoint directory (e.g. a whisper-small.en snapshot)")
    parser.add_argument("--out", required=True, help="output .alkd store path")
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    from .encoder import EncoderError, FrozenEncoder
    from .export import ExportError, ManifestError, export, read_manifest

    try:
        entries = read_manifest(args.manifest)
        encoder = FrozenEncoder(args.checkpoint, device=args.device)
        skipped = export(entries, encoder, args.out)
    except (ManifestError, EncoderError, ExportError, OSError) as exc:
        sys.stderr.write(f"whisper-export: error: {exc}\n")
        return 2
    print(f"wrote {len(entries) - len(skipped)} records to {args.out}"
          + (f" ({len(skipped)} skipped)" if skipped else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
