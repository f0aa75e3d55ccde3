#!/usr/bin/env python3
from pathlib import Path

import setuptools
from setuptools import setup

this_dir = Path(__file__).parent
module_dir = this_dir / "dsoled"

requirements = []
requirements_path = this_dir / "requirements.txt"
if requirements_path.is_file():
    with open(requirements_path, "r", encoding="utf-8") as requirements_file:
        requirements = requirements_file.read().splitlines()

data_files = sorted((module_dir / "cases").glob("*.json"))

# -----------------------------------------------------------------------------

setup(
    name="dsoled",
    version="0.1.0",
    description="DSO-led bilevel coordination of transmission and active distribution networks with P2P trading.",
    license="MIT",
    packages=setuptools.find_packages(exclude=["tests", "tests.*"]),
    package_data={"dsoled": [str(p.relative_to(module_dir)) for p in data_files]},
    entry_points={
        "console_scripts": [
            "dsoled = dsoled.__main__:main",
        ]
    },
    install_requires=requirements,
    extras_require={"test": ["pytest>=7,<9"], "mip": ["pyscipopt>=4,<6"]},
    python_requires=">=3.8",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    keywords="power systems bilevel optimization tso dso p2p",
)
