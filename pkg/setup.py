"""Defines the setup for the fatformer package"""
from io import open
import os.path
from setuptools import find_packages, setup


dir_path = os.path.abspath(os.path.dirname(__file__))
readme_path = os.path.join(dir_path, 'README.md')
with open(readme_path, encoding='utf-8') as readme:
    long_description = readme.read()


setup(
    name='fatformer',
    description='Video transformers with segmentation-forced attention',
    long_description=long_description,
    long_description_content_type='text/markdown',
    version='0.1.0',
    license='MIT',
    packages=find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*']),
    python_requires='>=3.8',
    install_requires=[
        'einops>=0.6',
        'matplotlib>=3.3',
        'numpy>=1.20',
        'pandas>=1.5',
        'pillow>=9.2',
    ],
    extras_require={
        'dev': ['pytest', 'coverage', 'flake8', 'pylint', 'pydocstyle', 'doc8', 'mypy',
                'sphinx'],
    },
    entry_points={
        'console_scripts': ['fatformer=fatformer.cli:main'],
    },
    zip_safe=False,
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: MIT License',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    keywords='video, transformer, attention, segmentation, personality'
)
