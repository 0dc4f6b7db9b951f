from setuptools import setup

# read the contents of your README file
from os import path

this_directory = path.abspath(path.dirname(__file__))
with open(path.join(this_directory, "README.rst"), encoding="utf-8") as f:
    long_description = f.read()

setup(
    name="marineflow",
    version="0.1.0",
    description="Navigation lab for vessels in flow-disturbed waters with a transformer policy",
    long_description=long_description,
    long_description_content_type="text/x-rst",
    license="MIT",
    packages=["marine.flow"],
    package_dir={"": "src"},
    package_data={
        "marine.flow": ["py.typed"],
    },
    python_requires=">=3.8",
    install_requires=["attrs>18.1", "numpy>=1.20"],
    extras_require={
        "tests": [
            "pytest>3.6.4",
            "pytest-asyncio==0.21.2",
            "pytest-cov>=3.0.0",
            "coveralls",
            "pytest-mock",
        ]
    },
    entry_points={"console_scripts": ["marineflow=marine.flow.console:main"]},
    classifiers=[
        "License :: OSI Approved :: MIT License",
        "Development Status :: 3 - Alpha",
        "Environment :: Console",
        "Framework :: AsyncIO",
        "Topic :: Scientific/Engineering",
    ],
)
