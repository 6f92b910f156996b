# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

from .version import __version__ as __version__
