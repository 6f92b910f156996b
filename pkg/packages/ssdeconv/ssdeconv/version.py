# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

__version__ = "0.1.0"
