#!/usr/bin/env python
"""Setup file for the ghkchain package."""

import os

# BEFORE importing distutils, remove MANIFEST. distutils doesn't properly
# update it when the contents of directories change.
if os.path.exists('MANIFEST'):
    os.remove('MANIFEST')

from setuptools import setup

# Get version and release info, which is all stored in ghkchain/version.py
ver_file = os.path.join('ghkchain', 'version.py')
with open(ver_file) as f:
    exec(f.read())

opts = dict(name=NAME,
            description=DESCRIPTION,
            long_description=LONG_DESCRIPTION,
            license=LICENSE,
            classifiers=CLASSIFIERS,
            platforms=PLATFORMS,
            version=VERSION,
            packages=PACKAGES,
            package_data=PACKAGE_DATA,
            install_requires=REQUIRES,
            entry_points=ENTRY_POINTS,
            zip_safe=False)

# Now call the actual setup function
if __name__ == '__main__':
    setup(**opts)
