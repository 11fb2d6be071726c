from pipeline_api.services import EnsembleSrService

from ._pipeline import PipelineCommand


class Command(PipelineCommand):
    help = "Build the ensemble D and G curves and fit symbolic models to them."
    stage = 'ensemble-sr'

    def run_stage(self, run, force):
        return EnsembleSrService.run(run, force)
