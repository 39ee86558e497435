# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 09:08'

Usage:
pip install .
"""

import os
from codecs import open

from setuptools import setup

here = os.path.abspath(os.path.dirname(__file__))

packages = ['hykey', 'hykey.utils']
file_data = [
]

package_data = {
    'hykey': ['templates/*.j2'],
}

requires = [
    'numpy>=1.24,<3',
    'scipy>=1.10',
    'click>=8.1,<9',
    'Flask>=2.3,<4',
    'Jinja2>=3.1,<4',
    'toml==0.10.2',
    'Pillow>=10.0',
]

about = {}
with open(os.path.join(here, 'hykey', '__version__.py'), 'r', 'utf-8') as f:
    exec(f.read(), about)

with open('README.md', 'r', 'utf-8') as f:
    readme = f.read()

setup(
    name=about['__title__'],
    version=about['__version__'],
    description=about['__description__'],
    long_description=readme,
    long_description_content_type='text/markdown',
    author=about['__author__'],
    author_email=about['__author_email__'],
    url=about['__url__'],
    packages=packages,
    data_files=file_data,
    include_package_data=True,
    package_data=package_data,
    python_requires=">=3.9",
    install_requires=requires,
    entry_points={
        'console_scripts': ['hykey = hykey.cli:main'],
    },
    zip_safe=False,
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Natural Language :: English',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Programming Language :: Python :: Implementation :: CPython',
        'Topic :: Scientific/Engineering :: Image Recognition',
    ],
)
