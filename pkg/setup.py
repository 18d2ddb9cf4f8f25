from setuptools import setup, find_packages

setup(
    name="tngeo-lab",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    py_modules=["app"],
    include_package_data=True,
    install_requires=[
        "networkx>=3.2",
        "numpy>=1.26.0",
        "pandas>=2.0.0",
        "scipy>=1.11",
        "tqdm>=4.66",
    ],
    extras_require={
        "test": ["pytest>=8.0"],
    },
    entry_points={
        "console_scripts": [
            "tngeo=app:main",
        ],
    },
    description="Training lab for tensor network geometries (MPS, trees, star, PEPS, dense)",
    keywords="tensor networks, MPS, PEPS, L-BFGS, quantum states",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.10",
)
