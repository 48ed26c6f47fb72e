#!/usr/bin/env python3
"""External codec stand-in that always fails."""
import sys

sys.stdin.buffer.read()
print("deliberate failure for testing", file=sys.stderr)
sys.exit(3)
