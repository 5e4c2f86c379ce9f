#!/usr/bin/env python3
"""Throughput of the filtration + diagram + curve path across image sizes."""

import sys

from tdanet.cli import main

if __name__ == "__main__":
    sys.exit(main(["bench"] + sys.argv[1:]))
