#!/usr/bin/env python3

from setuptools import setup, find_packages
import os


# Read version from __init__.py (single source of truth)
def get_version():
    here = os.path.abspath(os.path.dirname(__file__))
    version_file = os.path.join(here, "afm2lifshitz", "__init__.py")

    with open(version_file, encoding="utf-8") as f:
        for line in f:
            if line.startswith("__version__"):
                return line.split('"')[1]

    raise RuntimeError("Unable to find version string in __init__.py")


# Read long description from README
def read_long_description():
    here = os.path.abspath(os.path.dirname(__file__))
    try:
        with open(os.path.join(here, "README.md"), encoding="utf-8") as f:
            return f.read()
    except FileNotFoundError:
        return "Casimir force theory and AFM data comparison - afm2lifshitz"


setup(
    name="afm2lifshitz",
    version=get_version(),
    description="Casimir force between a gold sphere and a silicon plate: Lifshitz theory and AFM data comparison",
    long_description=read_long_description(),
    long_description_content_type="text/markdown",
    license="GPL-3.0",
    # Package discovery
    packages=find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.8",
    # Core dependencies (always installed)
    install_requires=[
        "numpy>=1.20",
        "scipy>=1.7",
    ],
    extras_require={
        # Development
        "dev": [
            "pytest>=6.0",
            "flake8>=3.8",
            "black>=21.0",
            "mypy>=0.910",
            "build>=0.7.0",
            "twine>=3.4.0",
        ],
        # Tests only
        "test": [
            "pytest>=6.0",
            "pytest-cov>=2.10",
        ],
    },
    entry_points={
        "console_scripts": [
            "afm2lifshitz=afm2lifshitz.__main__:main",
        ],
    },
    # Built-in topography histograms
    package_data={
        "afm2lifshitz": [
            "data/*.csv",
        ],
    },
    include_package_data=True,
    data_files=[
        (
            "share/doc/afm2lifshitz",
            [
                "docs/configuration.md",
                "docs/data-formats.md",
                "docs/troubleshooting.md",
            ],
        ),
    ],
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Physics",
        "License :: OSI Approved :: GNU General Public License v3 (GPLv3)",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Operating System :: OS Independent",
        "Environment :: Console",
    ],
    keywords="casimir lifshitz afm kramers-kronig drude roughness confidence-interval",
    zip_safe=False,
)
