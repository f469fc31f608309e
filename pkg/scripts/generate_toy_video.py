#!/usr/bin/env python3
"""Write the shipped synthetic toy clip (8 frames, 64x128) as PPM files plus
a manifest, ready for the lrnerv CLI.

Usage: python scripts/generate_toy_video.py [output_dir]
"""

import sys
from pathlib import Path

from lrnerv.video import synthetic_video, write_video


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data/toy")
    manifest = out_dir / "video.txt"
    write_video(manifest, synthetic_video(8, 64, 128))
    print(f"wrote 8 frames and manifest to {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
