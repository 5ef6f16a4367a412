from setuptools import setup
import os

setup(
    name="oracle_fdr_sim",
    version="1.0.0",
    py_modules=[
        "cli",
        "config_manager",
        "covariance",
        "errors",
        "harness",
        "metrics",
        "model",
        "oracle",
        "procedures",
        "reporting",
    ],
    data_files=[("templates", ["templates/table_report.md.j2"])],
    install_requires=[
        "numpy>=1.22.0",
        "scipy>=1.8.0",
        "pandas>=1.5.0",
        "statsmodels>=0.13.0",
        "jinja2>=3.1.0",
        "python-dotenv>=1.0.0",
        "pyyaml>=6.0.0",
        "click>=8.1.0",
        "colorama>=0.4.6",
        "loguru>=0.7.0",
    ],
    extras_require={"test": ["pytest>=7.0.0"]},
    entry_points={
        "console_scripts": [
            "oracle-fdr=cli:cli",
        ],
    },
    python_requires=">=3.8",
    description="Closed-form oracle multiple-testing statistic for the multivariate normal two-group model, with FDR/FNR simulation harness",
    long_description=open("README.md").read() if os.path.exists("README.md") else "",
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
)
