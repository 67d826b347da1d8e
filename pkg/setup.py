#!/usr/bin/env python

import pathlib
import pkg_resources
import setuptools

with pathlib.Path('requirements.txt').open() as requirements_txt:
    install_requires = [
        str(requirement)
        for requirement
        in pkg_resources.parse_requirements(requirements_txt)
    ]

setuptools.setup(
    name='SIRDSwarm',
    version='0.1',
    description='Window-wise SIRD calibration with a parallel particle swarm',
    packages=setuptools.find_packages(exclude=['tests', 'tests.*']),
    python_requires='>=3.9',
    install_requires=install_requires,
    entry_points={
        'console_scripts': ['sird-swarm = sird_swarm.cli:main'],
    },
)
