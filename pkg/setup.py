from setuptools import find_packages, setup

setup(
    name='graft',
    version='0.1.0',
    description='Transfer learning for molecular property GCNNs',
    packages=find_packages(exclude=['tests', 'tests.*']),
    install_requires=[
        'numpy',
        'scipy',
        'pandas',
        'networkx',
        'jsonschema',
        'python-dotenv',
    ],
    entry_points={
        'console_scripts': ['graft=cli.main:main'],
    },
)
