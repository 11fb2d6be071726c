from pipeline_api.services import TrainService

from ._pipeline import PipelineCommand


class Command(PipelineCommand):
    help = "Train every TV split at every ES patience of the sweep and choose the preferred patience."
    stage = 'train'

    def run_stage(self, run, force):
        return TrainService.run(run, force)
