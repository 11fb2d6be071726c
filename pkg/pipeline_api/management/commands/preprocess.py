from pipeline_api.services import PreprocessService

from ._pipeline import PipelineCommand


class Command(PipelineCommand):
    help = "Bin the run's input into the density tensor used for training."
    stage = 'preprocess'

    def run_stage(self, run, force):
        return PreprocessService.run(run, force)
