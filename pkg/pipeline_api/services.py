"""
Service layer for the pipeline stages.

This module contains the logic behind each pipeline command. It acts as an
interface between the management commands and the py_rdeql library: it reads
the artefacts of earlier stages, schedules the independent jobs of a stage on
the worker pool and writes the stage outputs and its manifest.

Output layout under the run's output directory:

    synth/        clean.csv, noisy.csv (+ JSON sidecars), points.csv, truth.json
    data/         density.csv (+ sidecar), the binned input of training
    train/        es_<P>/split_<seed>/ checkpoints, es_summary.csv, preferred_es.json
    ensemble_sr/  ensemble and per-split curves, SR candidates, templates, selected models
    evaluate/     counts.csv, metrics.json, solver diagnostics
    manifests/    <stage>.json

Classes:
    ArtefactService: Output directories, overwrite guard, hashes and manifests
    SynthService: Synthetic ground-truth datasets
    PreprocessService: Binning of the run's input into a density tensor
    TrainService: Split x patience training sweep and the preferred ES rule
    EnsembleSrService: Ensemble curves and repeated symbolic regression
    EvaluateService: Total-count curves and their metrics
    PipelineService: All stages in order
"""

import hashlib
import logging
import shutil
import time
from pathlib import Path
from statistics import median
from typing import Dict, List, Optional

import numpy as np
from django.utils import timezone

import py_rdeql
from py_rdeql import config
from py_rdeql.binn import BinnModel, derived_seeds
from py_rdeql.ensemble import EnsembleCurve, ensemble_curves, split_curves
from py_rdeql.evaluate import CountCurves, count_from_net, count_from_solve
from py_rdeql.exceptions import ArtefactExistsError
from py_rdeql.grid import bin_points
from py_rdeql.io import (load_density_field, load_point_cloud, read_json, save_density_field,
                         save_point_cloud, write_csv, write_json)
from py_rdeql.solver import RateFn, SolveSpec, ic_from_density_net
from py_rdeql.sr import parse_expression, select_best, template_table
from py_rdeql.sr.expressions import canonical_template
from py_rdeql.synth import (NoiseSpec, TrueModel, apply_noise, default_times, generate_clean,
                            reference_ic, sample_points)

from .jobs import solve_job, sr_job, train_job
from .runconfig import RunConfig
from .runner import run_jobs

logger = logging.getLogger(__name__)

ES_SUMMARY_HEADER = ('patience', 'median_stopped_epoch', 'median_best_val_loss')
CANDIDATE_HEADER = ('kind', 'seed', 'expr', 'template', 'sq_error', 'complexity')
TEMPLATE_HEADER = ('kind', 'template', 'count', 'complexity', 'best_sq_error')
SPLIT_CURVE_HEADER = ('U', 'split', 'D', 'G')


class ArtefactService:
    """
    Service for stage output directories and run manifests.
    """

    @staticmethod
    def stage_dir(run: RunConfig, stage: str, force: bool = False) -> Path:
        """
        Fresh output directory of a stage.

        Raises:
            ArtefactExistsError: if the directory holds files and ``force`` is off
        """
        path = run.output_dir / stage
        if path.exists() and any(path.iterdir()):
            if not force:
                raise ArtefactExistsError(f"{path} already holds outputs; rerun with --force to overwrite")
            logger.warning(f"--force: removing previous {stage} outputs in {path}")
            shutil.rmtree(path)
        path.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def require(path: Path, stage: str) -> Path:
        if not path.exists():
            raise FileNotFoundError(f"{path} not found; run the {stage} stage first")
        return path

    @staticmethod
    def sha256(path: Path) -> str:
        digest = hashlib.sha256()
        with open(path, 'rb') as handle:
            for block in iter(lambda: handle.read(1 << 16), b''):
                digest.update(block)
        return digest.hexdigest()

    @staticmethod
    def inventory(run: RunConfig, directory: Path) -> Dict[str, str]:
        """sha256 of every file below ``directory``, keyed by path relative to the run."""
        return {str(p.relative_to(run.output_dir)): ArtefactService.sha256(p)
                for p in sorted(directory.rglob('*')) if p.is_file()}

    @staticmethod
    def write_manifest(run: RunConfig, stage: str, outputs: Dict[str, str],
                       wall_clock: Dict[str, float], seeds: Dict, extra: Optional[Dict] = None) -> Path:
        """
        Write ``manifests/<stage>.json``: config snapshot, tool version,
        wall-clock, derived seeds, scheme identifiers and the output inventory.
        """
        manifest = {
            'stage': stage,
            'version': py_rdeql.__version__,
            'created_at': timezone.now().isoformat(),
            'config': run.to_dict(),
            'wall_clock': wall_clock,
            'seeds': seeds,
            'schemes': {
                'residual_form': config.residual_form,
                'solver_scheme': config.solver_scheme,
                'es_validation': config.es_validation_components,
            },
            'outputs': outputs,
        }
        manifest.update(extra or {})
        path = write_json(run.output_dir / 'manifests' / f'{stage}.json', manifest)
        logger.info(f"{stage}: manifest written to {path} ({len(outputs)} outputs)")
        return path


class SynthService:
    """
    Service for synthetic ground-truth datasets.
    """

    @staticmethod
    def build_model(run: RunConfig) -> TrueModel:
        section = run['synth']
        domain = run.synth_domain()
        ic = reference_ic(domain, run['preprocess']['bin_size'], section['ic_peak'], section['ic_bumps'])
        return TrueModel.from_expressions(section['diffusion'], section['growth'], ic,
                                          section['density_reference'])

    @staticmethod
    def run(run: RunConfig, force: bool = False) -> Path:
        """
        Generate clean and noisy density fields (and optionally point records).

        Raises:
            ValueError: on invalid expressions or settings
            RuntimeError: if the ground-truth solve fails
        """
        started = time.perf_counter()
        try:
            section = run['synth']
            out = ArtefactService.stage_dir(run, 'synth', force)
            domain = run.synth_domain()
            bin_size = run['preprocess']['bin_size']
            model = SynthService.build_model(run)
            clean = generate_clean(model, domain, default_times(domain, section['frames']), bin_size)
            noise = NoiseSpec(section['gamma'], section['omega'], section['noise_seed'])
            noisy = apply_noise(clean, noise)

            save_density_field(clean, out / 'clean.csv')
            save_density_field(noisy, out / 'noisy.csv')
            if section['points']:
                save_point_cloud(sample_points(noisy, section['point_seed']), out / 'points.csv')
            write_json(out / 'truth.json', {**model.descriptor, 'ic': model.ic.tolist(),
                                            'gamma': noise.gamma, 'omega': noise.omega})
            logger.info(f"synth: {clean.shape} field, peak {noisy.values.max():.3f} cells/bin, "
                        f"N(0)={clean.counts()[0]:.2f}")
            ArtefactService.write_manifest(
                run, 'synth', ArtefactService.inventory(run, out),
                {'synth': time.perf_counter() - started},
                {'noise': section['noise_seed'], 'points': section['point_seed'] if section['points'] else None},
            )
            return out
        except (ValueError, OSError, RuntimeError) as e:
            logger.error(f"Error generating synthetic data: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error generating synthetic data: {str(e)}")
            raise RuntimeError(f"Synthetic data generation failed: {str(e)}") from e


class PreprocessService:
    """
    Service for turning the run's input into the density tensor used for training.
    """

    @staticmethod
    def load_input(run: RunConfig):
        section = run['input']
        bin_size = run['preprocess']['bin_size']
        mode = run.input_mode
        if mode == 'points':
            cloud = load_point_cloud(section['points'], section.get('frame_times'))
            return bin_points(cloud, run.input_domain(), bin_size)
        if mode == 'density':
            return load_density_field(section['density'])

        synth_dir = ArtefactService.require(run.output_dir / 'synth', 'synth')
        noisy = load_density_field(ArtefactService.require(synth_dir / 'noisy.csv', 'synth'))
        points = synth_dir / 'points.csv'
        if points.exists():
            return bin_points(load_point_cloud(points, noisy.times), noisy.domain, bin_size)
        return noisy

    @staticmethod
    def run(run: RunConfig, force: bool = False) -> Path:
        """
        Raises:
            OutOfDomainError: if point records leave the domain
            FileNotFoundError: if the input or the synth outputs are missing
        """
        started = time.perf_counter()
        try:
            out = ArtefactService.stage_dir(run, 'data', force)
            field = PreprocessService.load_input(run)
            if field.bin_size_x1 != run['preprocess']['bin_size']:
                logger.warning(f"density input keeps its own bin size {field.bin_size_x1} "
                               f"(preprocess.bin_size is {run['preprocess']['bin_size']})")
            if not np.any(field.values > 0):
                logger.warning("preprocessed density tensor is identically zero")
            save_density_field(field, out / 'density.csv')
            logger.info(f"preprocess: {run.input_mode} input -> {field.shape[0]}x{field.shape[1]}x{field.shape[2]} tensor")
            ArtefactService.write_manifest(run, 'preprocess', ArtefactService.inventory(run, out),
                                           {'preprocess': time.perf_counter() - started}, {})
            return out
        except (ValueError, OSError, RuntimeError) as e:
            logger.error(f"Error preprocessing input: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error preprocessing input: {str(e)}")
            raise RuntimeError(f"Preprocessing failed: {str(e)}") from e


class TrainService:
    """
    Service for the training sweep: every TV split at every ES patience.
    """

    @staticmethod
    def model_dir(run: RunConfig, patience: int, seed: int) -> Path:
        return run.output_dir / 'train' / f'es_{patience}' / f'split_{seed}'

    @staticmethod
    def select_preferred_es(medians: Dict[int, float],
                            tolerance: float = config.preferred_es_tolerance) -> int:
        """
        Smallest patience whose median best validation loss is within
        ``tolerance`` (relative) of the lowest median.
        """
        if not medians:
            raise ValueError("no patience results to choose from")
        best = min(medians.values())
        return min(p for p, loss in medians.items() if loss <= (1.0 + tolerance) * best)

    @staticmethod
    def run(run: RunConfig, force: bool = False) -> Path:
        """
        Train ``n_splits`` splits for every patience of ``es_sweep``.

        Raises:
            FileNotFoundError: if the preprocess output is missing
            NonFiniteLossError: if any job diverges
        """
        started = time.perf_counter()
        try:
            field = load_density_field(ArtefactService.require(run.output_dir / 'data' / 'density.csv',
                                                               'preprocess'))
            out = ArtefactService.stage_dir(run, 'train', force)
            tasks = [(field, run.train_config(patience), seed, str(TrainService.model_dir(run, patience, seed)))
                     for patience in run.es_sweep for seed in run.split_seeds]
            logger.info(f"train: {len(tasks)} jobs (patiences {run.es_sweep} x splits {run.split_seeds}) "
                        f"on {run.jobs} worker(s)")
            results = run_jobs(train_job, tasks, run.jobs)

            by_patience: Dict[int, List[dict]] = {}
            for row in results:
                by_patience.setdefault(row['patience'], []).append(row)
            summary, medians, wall = [], {}, {}
            for patience in sorted(by_patience):
                rows = by_patience[patience]
                medians[patience] = median(r['best_val_loss'] for r in rows)
                wall[f'es_{patience}_median'] = median(r['wall_clock'] for r in rows)
                summary.append((patience, median(r['stopped_epoch'] for r in rows), medians[patience]))
            write_csv(out / 'es_summary.csv', ES_SUMMARY_HEADER, summary)

            if run.preferred_es is not None:
                preferred, rule = run.preferred_es, 'configured'
            else:
                preferred = TrainService.select_preferred_es(medians)
                rule = f'smallest patience within {config.preferred_es_tolerance:.0%} of the best median validation loss'
            write_json(out / 'preferred_es.json', {
                'preferred_es': preferred,
                'rule': rule,
                'median_best_val_loss': {str(p): v for p, v in medians.items()},
            })
            logger.info(f"train: preferred ES patience {preferred} ({rule})")

            models = sorted(({k: r[k] for k in ('patience', 'seed', 'stopped_epoch', 'best_epoch',
                                                'best_val_loss', 'full_data_loss')} for r in results),
                            key=lambda r: (r['patience'], r['seed']))
            wall['train'] = time.perf_counter() - started
            ArtefactService.write_manifest(
                run, 'train', ArtefactService.inventory(run, out), wall,
                {str(seed): derived_seeds(seed) for seed in run.split_seeds},
                {'preferred_es': preferred, 'models': models,
                 'wall_clock_per_job': [{'patience': r['patience'], 'seed': r['seed'],
                                         'seconds': r['wall_clock']} for r in results]},
            )
            return out
        except (ValueError, OSError, RuntimeError) as e:
            logger.error(f"Error training networks: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error training networks: {str(e)}")
            raise RuntimeError(f"Training failed: {str(e)}") from e

    @staticmethod
    def preferred_es(run: RunConfig) -> int:
        if run.preferred_es is not None:
            return run.preferred_es
        path = ArtefactService.require(run.output_dir / 'train' / 'preferred_es.json', 'train')
        return int(read_json(path)['preferred_es'])

    @staticmethod
    def load_models(run: RunConfig) -> List[BinnModel]:
        """Checkpoints of the preferred patience, ordered by split seed."""
        patience = TrainService.preferred_es(run)
        directory = ArtefactService.require(run.output_dir / 'train' / f'es_{patience}', 'train')
        models = [BinnModel.load(d) for d in sorted(directory.glob('split_*')) if d.is_dir()]
        if not models:
            raise FileNotFoundError(f"no trained splits in {directory}")
        return sorted(models, key=lambda m: m.seed)


class EnsembleSrService:
    """
    Service for ensemble curves and their symbolic regression.
    """

    @staticmethod
    def run(run: RunConfig, force: bool = False) -> Path:
        """
        Raises:
            EmptySupportError: if the split density supports do not overlap
            PopulationCollapseError: if an SR run cannot produce any valid program
        """
        started = time.perf_counter()
        try:
            models = TrainService.load_models(run)
            out = ArtefactService.stage_dir(run, 'ensemble_sr', force)
            diffusion, growth = ensemble_curves(models)
            diffusion.save(out / 'ensemble_diffusion.csv')
            growth.save(out / 'ensemble_growth.csv')
            write_csv(out / 'split_curves.csv', SPLIT_CURVE_HEADER, split_curves(models, diffusion.U))

            cfg = run.sr_config()
            seeds = [run.base_seed + r for r in range(cfg.repeats)]
            candidates, selected = [], {}
            for curve in (diffusion, growth):
                found = run_jobs(sr_job, [(curve, cfg, seed) for seed in seeds], run.jobs)
                model = select_best(found)
                selected[curve.kind] = model
                candidates.extend(found)
                write_json(out / f'sr_{curve.kind}.json', {
                    **model.to_dict(),
                    'units': curve.units,
                    'density_scale': curve.density_scale,
                    'candidates': [c.to_dict() for c in found],
                })

            write_csv(out / 'sr_candidates.csv', CANDIDATE_HEADER,
                      ((c.kind, c.seed, str(c.expr), canonical_template(c.expr).display,
                        c.sq_error, c.complexity) for c in candidates))
            write_csv(out / 'sr_templates.csv', TEMPLATE_HEADER,
                      template_table([c for c in candidates if c.kind == 'diffusion'])
                      + template_table([c for c in candidates if c.kind == 'growth']))
            logger.info(f"ensemble_sr: D_SR = {selected['diffusion'].expr}, G_SR = {selected['growth'].expr}")
            ArtefactService.write_manifest(
                run, 'ensemble_sr', ArtefactService.inventory(run, out),
                {'ensemble_sr': time.perf_counter() - started},
                {'sr_repeats': seeds, 'splits': [m.seed for m in models]},
                {'preferred_es': TrainService.preferred_es(run)},
            )
            return out
        except (ValueError, OSError, RuntimeError) as e:
            logger.error(f"Error in ensemble/SR stage: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error in ensemble/SR stage: {str(e)}")
            raise RuntimeError(f"Ensemble/SR stage failed: {str(e)}") from e

    @staticmethod
    def load_pair(run: RunConfig) -> Optional[Dict[str, RateFn]]:
        """The selected symbolic pair as solver rates, or None when either model is missing."""
        rates = {}
        for kind in ('diffusion', 'growth'):
            path = run.output_dir / 'ensemble_sr' / f'sr_{kind}.json'
            if not path.exists():
                logger.warning(f"{path} not found; N_SR is omitted")
                return None
            data = read_json(path)
            rates[kind] = RateFn.symbolic(parse_expression(data['expr']), float(data['density_scale']),
                                          data['units'])
        return rates


class EvaluateService:
    """
    Service for the total-count curves N_data, N_u, N_fwd and N_SR.
    """

    @staticmethod
    def curves(run: RunConfig, out: Optional[Path] = None) -> CountCurves:
        """
        Build every count curve the available artefacts allow.

        N_u and N_fwd average the per-split curves of the preferred patience;
        both forward solves start from the split-averaged NN_u at t = 0.
        """
        field = load_density_field(ArtefactService.require(run.output_dir / 'data' / 'density.csv',
                                                           'preprocess'))
        curves = CountCurves(field.times, {'N_data': count_from_solve(field)})
        try:
            models = TrainService.load_models(run)
        except FileNotFoundError as e:
            logger.warning(f"no trained models ({str(e)}); only N_data is evaluated")
            return curves

        curves = curves.with_curve('N_u', np.mean(
            [count_from_net(m.theta_u, m.scaling, field, field.times) for m in models], axis=0))
        ic = np.mean([ic_from_density_net(m.theta_u, m.scaling, field) for m in models], axis=0)
        spec = SolveSpec.like(field, ic, safety=run['solve']['safety'], max_dt=run['solve']['max_dt'])
        diagnostics = run['evaluate']['diagnostics'] and out is not None

        tasks = [(RateFn.network(m.theta_D, m.scaling), RateFn.network(m.theta_G, m.scaling), spec,
                  str(out / f'solver_fwd_split_{m.seed}.csv') if diagnostics else None) for m in models]
        curves = curves.with_curve('N_fwd', np.mean(run_jobs(solve_job, tasks, run.jobs), axis=0))

        pair = EnsembleSrService.load_pair(run)
        if pair is not None:
            counts = solve_job(pair['diffusion'], pair['growth'], spec,
                               str(out / 'solver_sr.csv') if diagnostics else None)
            curves = curves.with_curve('N_SR', counts)
        return curves

    @staticmethod
    def run(run: RunConfig, force: bool = False) -> Path:
        """
        Raises:
            FileNotFoundError: if the preprocess output is missing
            SolverInstabilityError: if a forward solve blows up
        """
        started = time.perf_counter()
        try:
            out = ArtefactService.stage_dir(run, 'evaluate', force)
            curves = EvaluateService.curves(run, out)
            curves.save(out / 'counts.csv')
            metrics = curves.metrics
            write_json(out / 'metrics.json', metrics)
            logger.info(f"evaluate: curves {sorted(curves.curves)} written to {out}")
            ArtefactService.write_manifest(run, 'evaluate', ArtefactService.inventory(run, out),
                                           {'evaluate': time.perf_counter() - started}, {})
            return out
        except (ValueError, OSError, RuntimeError) as e:
            logger.error(f"Error evaluating count curves: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error evaluating count curves: {str(e)}")
            raise RuntimeError(f"Evaluation failed: {str(e)}") from e


class PipelineService:
    """
    Service running every stage of a run in order.
    """

    @staticmethod
    def run_all(run: RunConfig, force: bool = False) -> Path:
        started = time.perf_counter()
        stages = []
        if run.input_mode == 'synth':
            SynthService.run(run, force)
            stages.append('synth')
        PreprocessService.run(run, force)
        TrainService.run(run, force)
        EnsembleSrService.run(run, force)
        EvaluateService.run(run, force)
        stages += ['preprocess', 'train', 'ensemble_sr', 'evaluate']

        outputs = {}
        for name in ('synth', 'data', 'train', 'ensemble_sr', 'evaluate'):
            if (run.output_dir / name).exists():
                outputs.update(ArtefactService.inventory(run, run.output_dir / name))
        ArtefactService.write_manifest(run, 'run_all', outputs, {'run_all': time.perf_counter() - started},
                                       {'base_seed': run.base_seed, 'splits': run.split_seeds},
                                       {'stages': stages})
        return run.output_dir
