#!/usr/bin/env python3
"""
Simple run script for Schwarz Lab.
"""

if __name__ == '__main__':
    import sys
    from schwarz_lab.__main__ import main
    sys.exit(main())
