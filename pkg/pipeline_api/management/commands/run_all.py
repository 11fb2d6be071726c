from pipeline_api.services import PipelineService

from ._pipeline import PipelineCommand


class Command(PipelineCommand):
    help = "Run every pipeline stage in order."
    stage = 'run-all'

    def run_stage(self, run, force):
        return PipelineService.run_all(run, force)
