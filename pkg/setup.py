from setuptools import find_packages, setup

with open('requirements.txt') as handle:
    requirements = [line.strip() for line in handle if line.strip() and not line.startswith('#')]

setup(
    name='rd-binn',
    version='1.0.0',
    description='Equation learning for 2D reaction-diffusion density data with biologically-informed networks',
    packages=find_packages(exclude=['examples', 'examples.*']),
    py_modules=['manage'],
    install_requires=requirements,
    python_requires='>=3.9',
    entry_points={
        'console_scripts': [
            'rd-binn=rdeql_core.cli:main',
        ],
    },
)
