#!/usr/bin/env python3
"""
Setup script for Stable Conley Index
"""

from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [line.strip() for line in fh if line.strip() and not line.startswith("#")]

setup(
    name="stable-conley-index",
    version="1.0.0",
    author="Stable Conley Index Contributors",
    description=(
        "Compute stable Conley indices of strongly indefinite flows through "
        "finite-dimensional approximation. Features commutator-based "
        "admissibility checks, compressed flows, cubical index pairs, "
        "integer homology, continuation sweeps and JSON/CSV/SVG reports."
    ),
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="MIT",
    packages=find_packages(),
    py_modules=["main"],
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Environment :: Console",
    ],
    python_requires=">=3.9",
    install_requires=requirements,
    entry_points={
        "console_scripts": [
            "stable-conley=main:cli",
        ],
    },
    keywords=(
        "conley index homology cubical dynamical systems galerkin "
        "strongly indefinite flows floer spectral"
    ),
)
