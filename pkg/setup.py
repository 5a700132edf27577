'''
@description: Setup script for the deep_eprop package.
'''

from setuptools import setup, find_packages

setup(
    name='deep_eprop',
    version='0.1.0',
    description='Exact and approximate forward-mode gradients (RTRL, E-prop) for deep recurrent networks',
    long_description=open("README.md", "r", encoding="utf-8").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    package_data={
        'deep_eprop': ['templates/*.j2'],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
    entry_points={
        'console_scripts': [
            'deep-eprop = deep_eprop.main:main',
        ],
    },
    python_requires='>=3.9',
    install_requires=[
        'numpy>=1.22',
        'networkx>=2.8',
        'Jinja2>=3.1',
        'python-dotenv>=1.0',
    ],
)
