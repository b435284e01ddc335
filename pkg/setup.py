from os import path
from setuptools import setup

DISTNAME = "stepfold"
DESCRIPTION = (
    "Train a diffusion teacher and distill it into a student with any "
    "sub-sequence of its steps"
)
MAINTAINER = "stepfold developers"


# read the contents of your README file
this_directory = path.abspath(path.dirname(__file__))
with open(path.join(this_directory, "README.md"), encoding="utf-8") as f:
    LONG_DESCRIPTION = f.read()


if __name__ == "__main__":
    setup(
        name=DISTNAME,
        maintainer=MAINTAINER,
        description=DESCRIPTION,
        long_description=LONG_DESCRIPTION,
        long_description_content_type="text/markdown",
        version="0.1.0",
        packages=["stepfold"],
        python_requires=">=3.8",
        install_requires=[
            "numpy>=1.17.0",
            "matplotlib>=3.1.0",
            "pandas>=1.5.0",
            "scipy",
            "tqdm",
        ],
        entry_points={"console_scripts": ["stepfold = stepfold.cli:run"]},
        zip_safe=False,  # the package can run out of an .egg file
        classifiers=[
            "Intended Audience :: Science/Research",
            "License :: OSI Approved :: BSD License",
            "Programming Language :: Python",
            "Topic :: Scientific/Engineering :: Artificial Intelligence",
            "Operating System :: Microsoft :: Windows",
            "Operating System :: POSIX",
            "Operating System :: Unix",
            "Operating System :: MacOS",
        ],
    )
