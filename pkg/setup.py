"""Setup script for the supercooled Stefan problem laboratory."""

from setuptools import setup, find_packages

setup(
    name="stefan-lab",
    version="0.1.0",
    description="Numerical laboratory for the supercooled Stefan problem: "
                "primal-dual targets, obstacle evolutions and stopped Brownian motion",
    author="Stefan Lab Developers",
    python_requires=">=3.10",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    install_requires=[
        "numpy>=1.24.0",
        "scipy>=1.12.0",
        "click>=8.1.0",
        "rich>=13.0.0",
        "tqdm>=4.65.0",
        "pyyaml>=6.0.0",
        "python-dotenv>=1.0.0",
        "colorlog>=6.7.0",
        "psutil>=5.9.0",
    ],
    extras_require={
        "dev": [
            "pytest>=7.4.0",
            "pytest-cov>=4.1.0",
        ]
    },
    entry_points={
        "console_scripts": [
            "stefan-lab=stefan_lab.cli.main:main",
        ],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
)
