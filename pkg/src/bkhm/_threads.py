"""Worker-count plumbing for the FFT backend.

BKHM_THREADS caps the number of scipy.fft workers. The default is 1 so that
repeated runs stay bit-identical without any environment setup; pocketfft
computes each 1-d transform identically for any worker count, so raising it
only parallelizes over batch dimensions.
"""

import os


def fft_workers() -> int:
    raw = os.environ.get("BKHM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"BKHM_THREADS must be an integer, got {raw!r}")
    return max(1, n)
