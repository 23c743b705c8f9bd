from setuptools import setup

VERSION = "0.0.1"

long_description = ""
with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

license = ""
with open("LICENSE.md", "r", encoding="utf-8") as fh:
    license = fh.read()

requirements = []
with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = fh.readlines()

extras = {
    "dev": ["pytest", "black", "isort", "hypothesis"],
}


setup(
    name="fair-pipelines",
    version=VERSION,
    description="Robustness audits for individually fair cohort selection pipelines",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license=license,
    packages=[
        "fair_pipelines",
        "fair_pipelines.config",
        "fair_pipelines.mechanisms",
        "fair_pipelines.scoring",
    ],
    py_modules=["utility_funcs"],
    install_requires=requirements,
    extras_require=extras,
    entry_points={"console_scripts": ["fair-pipelines=fair_pipelines.cli:main"]},
    python_requires=">=3.9",
    classifiers=[
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
)
