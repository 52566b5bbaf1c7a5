from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="dilemma-bench",
    version="0.1.0",
    author="Dilemma Bench Team",
    author_email="example@example.com",
    description="Iterated Prisoner's Dilemma experiments for evaluating cooperation in model agents",
    long_description=long_description,
    long_description_content_type="text/markdown",
    url="https://github.com/yourusername/dilemma-bench",
    packages=find_packages(exclude=["tests", "tests.*"]),
    package_data={
        "dilemma_bench": ["templates/*.j2"],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    python_requires=">=3.8",
    install_requires=[
        "requests>=2.28.0",
        "PyYAML>=6.0",
        "tqdm>=4.65.0",
        "colorama>=0.4.6",
        "numpy>=1.22.0",
        "Jinja2>=3.1.0",
    ],
    extras_require={
        "dev": [
            "pytest>=7.0.0",
            "flake8>=5.0.0",
            "black>=22.0.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "dilemma-bench=dilemma_bench.__main__:main",
        ],
    },
)
