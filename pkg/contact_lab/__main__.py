#!/usr/bin/env python3

from . import run_lab

if __name__ == '__main__':
    run_lab()
