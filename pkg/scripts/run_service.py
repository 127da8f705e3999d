#!/usr/bin/env python3
"""Launch the service with default ports; equivalent to `ride-kernel`."""

import sys

from ride_kernel.cli import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
